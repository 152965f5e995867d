mod common;

use dermrl_cli::service::{Health, ScoreRequest, ScoreResponse, TagSpec, WireOption};
use dermrl_core::fixtures;
use dermrl_core::reward::{score_completion, ParseMode, RewardConfig, TagSet};
use dermrl_core::taxonomy::{sha256_hex, Malignancy, TaxonomyAnnotation};
use reqwest::blocking::Client;
use serde_json::{json, Value};

fn request(completion: &str) -> ScoreRequest {
    ScoreRequest {
        format_version: Some(1),
        completion: completion.into(),
        ground_truth_path: vec!["melanocytic lesion".into(), "melanoma".into(), "nodular melanoma".into()],
        malignancy: Malignancy::Malignant,
        options: None,
        tag_set: TagSpec::Preset("rl".into()),
        mode: ParseMode::Strict,
    }
}

#[test]
fn health_reports_file_checksum() {
    let text = std::fs::read_to_string(common::fixture("taxonomy.json")).unwrap();
    let addr = common::spawn_service(fixtures::taxonomy());
    let h: Health = Client::new().get(format!("http://{addr}/v1/health")).send().unwrap().json().unwrap();
    assert_eq!(h.format_version, 1);
    assert_eq!(h.taxonomy_checksum, sha256_hex(text.as_bytes()));
    assert_eq!(h.status, "ok");

    let again = common::spawn_service(fixtures::taxonomy());
    let h2: Health = Client::new().get(format!("http://{again}/v1/health")).send().unwrap().json().unwrap();
    assert_eq!(h.taxonomy_checksum, h2.taxonomy_checksum);
}

#[test]
fn score_matches_library() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let req = request("<thinking>raised</thinking><final diagnosis>nodular melanoma, malignant</final diagnosis>");
    let resp = Client::new().post(format!("http://{addr}/v1/score")).json(&req).send().unwrap();
    assert_eq!(resp.status(), 200);
    let got: ScoreResponse = resp.json().unwrap();
    let truth = TaxonomyAnnotation { path: req.ground_truth_path.clone(), malignancy: Malignancy::Malignant };
    let want = score_completion(&req.completion, &truth, None, &TagSet::rl(), ParseMode::Strict, &RewardConfig::default());
    assert_eq!(got.breakdown, want);
    assert_eq!(got.breakdown.total, 2.0);
}

#[test]
fn option_letters_resolve() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let mut req = request("<thinking>x</thinking><final diagnosis>B: malignant</final diagnosis>");
    req.options = Some(vec![
        WireOption { letter: 'A', label: "blue nevus".into() },
        WireOption { letter: 'B', label: "melanoma".into() },
    ]);
    let got: ScoreResponse = Client::new()
        .post(format!("http://{addr}/v1/score"))
        .json(&req)
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(got.breakdown.gran, 0.5);
    assert_eq!(got.breakdown.total, 1.75);
}

#[test]
fn explicit_tags_accepted() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let mut body = serde_json::to_value(request("<r>x</r><a>nodular melanoma</a>")).unwrap();
    body["tag_set"] = json!({"open_think": "<r>", "close_think": "</r>", "open_answer": "<a>", "close_answer": "</a>"});
    let got: Value = Client::new().post(format!("http://{addr}/v1/score")).json(&body).send().unwrap().json().unwrap();
    assert_eq!(got["format"], 1.0);
    assert_eq!(got["gran"], 0.75);
    assert_eq!(got["format_version"], 1);
}

#[test]
fn malformed_bodies_are_400_with_field_path() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let client = Client::new();
    let mut body = serde_json::to_value(request("x")).unwrap();
    body["malignancy"] = json!("deadly");
    let resp = client.post(format!("http://{addr}/v1/score")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 400);
    let err: Value = resp.json().unwrap();
    assert_eq!(err["path"], "malignancy");

    let resp = client.post(format!("http://{addr}/v1/score")).body("{not json").send().unwrap();
    assert_eq!(resp.status(), 400);

    let mut body = serde_json::to_value(request("x")).unwrap();
    body["tag_set"] = json!("xml");
    let resp = client.post(format!("http://{addr}/v1/score")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 400);

    let batch = json!([serde_json::to_value(request("x")).unwrap(), {"completion": 3}]);
    let resp = client.post(format!("http://{addr}/v1/score_batch")).json(&batch).send().unwrap();
    assert_eq!(resp.status(), 400);
    let err: Value = resp.json().unwrap();
    assert!(err["path"].as_str().unwrap().starts_with("[1]"), "{err}");
}

#[test]
fn unresolvable_paths_are_422() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let client = Client::new();
    let mut req = request("x");
    req.ground_truth_path.clear();
    let resp = client.post(format!("http://{addr}/v1/score")).json(&req).send().unwrap();
    assert_eq!(resp.status(), 422);

    let mut req = request("x");
    req.ground_truth_path = vec!["melanoma".into(), "unicorn".into()];
    assert_eq!(client.post(format!("http://{addr}/v1/score")).json(&req).send().unwrap().status(), 422);

    // Real labels, but not a root-to-node walk.
    let mut req = request("x");
    req.ground_truth_path = vec!["melanoma".into(), "nodular melanoma".into()];
    assert_eq!(client.post(format!("http://{addr}/v1/score")).json(&req).send().unwrap().status(), 422);

    let mut bad = request("x");
    bad.ground_truth_path.clear();
    let resp = client
        .post(format!("http://{addr}/v1/score_batch"))
        .json(&vec![request("x"), request("y"), bad])
        .send()
        .unwrap();
    assert_eq!(resp.status(), 422);
    assert_eq!(resp.json::<Value>().unwrap()["index"], 2);
}

#[test]
fn batch_preserves_order() {
    let addr = common::spawn_service(fixtures::taxonomy());
    let reqs: Vec<ScoreRequest> = (0..200)
        .map(|i| {
            let label = if i % 3 == 0 { "nodular melanoma" } else if i % 3 == 1 { "melanoma" } else { "blue nevus" };
            request(&format!("<thinking>{i}</thinking><final diagnosis>{label}, malignant</final diagnosis>"))
        })
        .collect();
    let got: Vec<ScoreResponse> = Client::new()
        .post(format!("http://{addr}/v1/score_batch"))
        .json(&reqs)
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(got.len(), reqs.len());
    for (i, r) in got.iter().enumerate() {
        let want = [2.0, 1.75, 1.25][i % 3];
        assert_eq!(r.breakdown.total, want, "index {i}");
        assert_eq!(r.breakdown.parsed.thinking.as_deref(), Some(i.to_string().as_str()));
    }
}
