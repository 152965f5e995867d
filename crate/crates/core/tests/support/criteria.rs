//! Desk-scale acceptance checks. Each returns whether it held plus a short
//! measurement line; callers assert or print.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use dermrl_core::corpus::{render_sft, synthesize, DifferentialOptions, KindMix, MockGenerator};
use dermrl_core::eval::macro_f1;
use dermrl_core::fixtures;
use dermrl_core::grpo::{simulate, SimConfig, TrainingReport};
use dermrl_core::mcq::{build_ddx_variant, build_hierarchical_variant, build_mcq, ItemSource, McqConfig, McqItem, McqOption, Variant};
use dermrl_core::reward::{
    format_reward, gran_reward, gran_reward_scaled, malignancy_reward, parse_completion, score_completion, total_reward,
    FormatCheck, ParseMode, RewardConfig, TagSet,
};
use dermrl_core::taxonomy::{resolve_ddx_neighbor, CaseIndex, Malignancy, TaxonomyAnnotation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::{self, RawTree};

pub const GRAN_TOL: f64 = 1e-12;
pub const GRPO_TOL: f64 = 1e-9;
pub const FD_REL_TOL: f64 = 1e-5;
pub const F1_TOL: f64 = 1e-12;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn ssm() -> TaxonomyAnnotation {
    TaxonomyAnnotation {
        path: vec!["lesion".into(), "melanoma".into(), "superficial spreading melanoma".into()],
        malignancy: Malignancy::Malignant,
    }
}

fn ssm_item() -> McqItem {
    let truth = ssm();
    McqItem {
        format_version: 1,
        id: "ssm".into(),
        image_ref: "img/ssm.jpg".into(),
        question: String::new(),
        prompt: String::new(),
        options: vec![
            McqOption { letter: 'A', label: "superficial spreading melanoma".into(), gran_value: 0.75 },
            McqOption { letter: 'B', label: "melanoma".into(), gran_value: 0.5 },
            McqOption { letter: 'C', label: "dermatofibroma".into(), gran_value: 0.0 },
            McqOption { letter: 'D', label: "solar lentigo".into(), gran_value: 0.0 },
        ],
        correct_letter: 'A',
        ground_truth: truth,
        variant: Variant::Standard,
        padded_labels: Vec::new(),
    }
}

/// Criterion 1: every worked reward example, plus the reward maxima.
pub fn reward_examples() -> Outcome {
    let start = Instant::now();
    let rl = TagSet::rl();
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let p = parse_completion(
        "<thinking>network</thinking><final diagnosis>B, malignant</final diagnosis>",
        &rl,
        ParseMode::Strict,
    );
    check("template letter", p.option_letter == Some('B'));
    check("template malignancy", p.predicted_malignancy == Some(Malignancy::Malignant));
    check(
        "strict outside tags",
        parse_completion("I choose B.", &rl, ParseMode::Strict).option_letter.is_none(),
    );
    check(
        "lenient precedence",
        parse_completion(
            "Only output one option: A, B, or C. <final diagnosis>C</final diagnosis>",
            &rl,
            ParseMode::Lenient,
        )
        .option_letter
            == Some('C'),
    );

    let fmt = |t: &str| format_reward(&parse_completion(t, &rl, ParseMode::Strict), FormatCheck::Presence);
    check("format ordered", fmt("<thinking>x</thinking><final diagnosis>A</final diagnosis>") == 1.0);
    check("format missing close", fmt("<thinking>x<final diagnosis>A</final diagnosis>") == 0.0);
    check("format reversed", fmt("<final diagnosis>A</final diagnosis><thinking>x</thinking>") == 1.0);

    let truth = ssm();
    check("gran leaf", gran_reward(Some("superficial spreading melanoma"), &truth) == 0.75);
    check("gran depth 2", gran_reward(Some("melanoma"), &truth) == 0.5);
    check("gran off path", gran_reward(Some("dermatofibroma"), &truth) == 0.0);

    check("malig match", malignancy_reward(Some(Malignancy::Malignant), Malignancy::Malignant) == 0.25);
    check("malig mismatch", malignancy_reward(Some(Malignancy::Benign), Malignancy::Malignant) == 0.0);
    check("malig absent", malignancy_reward(None, Malignancy::Benign) == 0.0);

    let item = ssm_item();
    let perfect = total_reward(
        "<thinking>x</thinking><final diagnosis>A, malignant</final diagnosis>",
        &item,
        &rl,
        ParseMode::Strict,
    );
    check("total perfect", perfect.total == 2.0);
    let missing = total_reward(
        "<thinking>x<final diagnosis>A, malignant</final diagnosis>",
        &item,
        &rl,
        ParseMode::Strict,
    );
    check("total missing close tag", missing.total == 1.0);
    let untagged = score_completion(
        "superficial spreading melanoma, malignant",
        &truth,
        None,
        &rl,
        ParseMode::Lenient,
        &RewardConfig::default(),
    );
    check("total untagged", untagged.total == 1.0);
    check("total empty", total_reward("", &item, &rl, ParseMode::Strict).total == 0.0);

    let gran_max = truth
        .path
        .iter()
        .map(|l| gran_reward_scaled(Some(l), &truth, 0.75))
        .fold(0.0, f64::max);
    check("gran max", gran_max == 0.75);
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && perfect.total == 2.0 && elapsed < Duration::from_secs(1);
    Outcome::new(
        pass,
        format!("max total {} max gran {gran_max} failures {failures:?} in {elapsed:?} (limit 1s)", perfect.total),
    )
}

/// Criterion 2: gran against the weighted-sum oracle on random taxonomies.
pub fn gran_oracle(trees: usize) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mismatches, mut comparisons) = (0usize, 0usize);
    for _ in 0..trees {
        let tree = fixtures::random_taxonomy(&mut rng, 50, 6);
        let raw = RawTree::new(&tree.to_document());
        let labels: Vec<String> = raw.labels().cloned().collect();
        let gt = &labels[rng.random_range(0..labels.len())];
        let path = raw.path(gt);
        let truth = tree.path_of(gt).expect("label exists");
        let mut preds: Vec<&str> = labels.iter().map(String::as_str).collect();
        preds.push("not a label");
        for pred in preds {
            let got = gran_reward(Some(pred), &truth);
            let want = oracles::gran(pred, &path, 0.75);
            comparisons += 1;
            if (got - want).abs() > GRAN_TOL {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{trees} taxonomies, {comparisons} predictions, {mismatches} mismatches (tol {GRAN_TOL}) in {elapsed:?} (limit 10s)"),
    )
}

/// Criterion 3: DDx fallback against the exhaustive scan.
pub fn ddx_oracle(fixtures_n: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mismatches, mut queries, mut some) = (0usize, 0usize, 0usize);
    let mut violations = 0usize;
    for _ in 0..fixtures_n {
        let tree = fixtures::random_taxonomy(&mut rng, 30, 5);
        let edge_p = rng.random_range(0.0..0.2);
        let ddx = fixtures::random_ddx(&mut rng, &tree, edge_p);
        let case_p = rng.random_range(0.1..0.7);
        let cases: CaseIndex = fixtures::random_case_index(&mut rng, &tree, case_p);
        let pairs: Vec<(String, String)> = cases
            .diagnoses()
            .flat_map(|d| (0..cases.count(d)).map(move |i| (d.to_string(), i.to_string())))
            .collect();
        let raw = RawTree::new(&tree.to_document());
        let adj = oracles::adjacency(&ddx.to_document());
        for d in raw.labels() {
            let got = resolve_ddx_neighbor(d, &ddx, &tree, &cases);
            let want = oracles::ddx_fallback(d, &raw, &adj, &pairs);
            queries += 1;
            if got.is_some() {
                some += 1;
            }
            if got != want {
                mismatches += 1;
            }
            if let Some(c) = &got {
                if c == d || !cases.has_cases(c) {
                    violations += 1;
                }
            }
        }
    }
    Outcome::new(
        mismatches == 0 && violations == 0,
        format!("{fixtures_n} fixtures, {queries} queries ({some} resolved), {mismatches} mismatches, {violations} contract violations"),
    )
}

/// Criterion 4: advantage statistics and invariance; gradient check.
pub fn grpo_math(groups: usize, gradient_fixtures: usize) -> Outcome {
    use dermrl_core::grpo::{group_advantages, grpo_objective, Candidate, CategoricalPolicy, GrpoConfig, GrpoGroup};
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_stat: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for _ in 0..groups {
        let k = rng.random_range(2..10);
        let r: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = group_advantages(&r).unwrap();
        let n = k as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        worst_stat = worst_stat.max(mean.abs()).max((var - 1.0).abs());
        let (s, c) = (rng.random_range(0.1..10.0), rng.random_range(-10.0..10.0));
        let moved: Vec<f64> = r.iter().map(|x| s * x + c).collect();
        let b = group_advantages(&moved).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst_inv = worst_inv.max((x - y).abs());
        }
    }

    let mut worst_rel: f64 = 0.0;
    let mut coords = 0usize;
    for seed in 0..gradient_fixtures as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let sizes = [rng.random_range(2..6), 3usize];
        let logits = |rng: &mut ChaCha8Rng| CategoricalPolicy {
            heads: sizes.iter().map(|&n| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        };
        let old = logits(&mut rng);
        let reference = logits(&mut rng);
        let mut policy = old.clone();
        policy.heads.iter_mut().flatten().for_each(|z| *z += rng.random_range(-0.4..0.4));
        let cfg = GrpoConfig { kl_coeff: rng.random_range(0.0..0.5), temperature: rng.random_range(0.5..2.0), ..Default::default() };
        let cands: Vec<Candidate> = (0..4)
            .map(|_| {
                let action: Vec<usize> = sizes.iter().map(|&n| rng.random_range(0..n)).collect();
                Candidate {
                    logprob_old: old.logprob(&action, cfg.temperature),
                    logprob_ref: reference.logprob(&action, cfg.temperature),
                    reward: rng.random_range(0.0..2.0),
                    action,
                }
            })
            .collect();
        let near_kink = cands.iter().any(|c| {
            let r = (policy.logprob(&c.action, cfg.temperature) - c.logprob_old).exp();
            (r - 1.0 - cfg.clip_eps).abs() < 1e-4 || (r - 1.0 + cfg.clip_eps).abs() < 1e-4
        });
        if near_kink {
            continue;
        }
        let group = GrpoGroup::new(cands).unwrap();
        let obj = grpo_objective(&group, &policy, &reference, &cfg).unwrap();
        for h in 0..policy.heads.len() {
            for i in 0..policy.heads[h].len() {
                let at = |d: f64| {
                    let mut p = policy.clone();
                    p.heads[h][i] += d;
                    grpo_objective(&group, &p, &reference, &cfg).unwrap().value
                };
                let fd = (at(1e-6) - at(-1e-6)) / 2e-6;
                let an = obj.grad[h][i];
                worst_rel = worst_rel.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-3));
                coords += 1;
            }
        }
    }
    Outcome::new(
        worst_stat <= GRPO_TOL && worst_inv <= GRPO_TOL && worst_rel <= FD_REL_TOL,
        format!(
            "{groups} groups: max stat dev {worst_stat:.2e}, max invariance dev {worst_inv:.2e} (tol {GRPO_TOL:e}); \
{gradient_fixtures} fixtures / {coords} coords: max rel grad err {worst_rel:.2e} (tol {FD_REL_TOL:e})"
        ),
    )
}

pub fn simulator_items() -> Vec<McqItem> {
    fixtures::mcq_items(&fixtures::taxonomy(), 50, &McqConfig::default(), 17).expect("fixture items")
}

/// Criterion 5: convergence of the bandit simulator.
pub fn simulator_convergence() -> (Outcome, TrainingReport) {
    let items = simulator_items();
    let cfg = SimConfig::default();
    let start = Instant::now();
    let report = simulate(&items, cfg).expect("simulation runs");
    let elapsed = start.elapsed();
    let r = report.rewards();
    let tenth = (r.len() / 10).max(1);
    let head = r[..tenth].iter().sum::<f64>() / tenth as f64;
    let tail = r[r.len() - tenth..].iter().sum::<f64>() / tenth as f64;
    let pass = cfg.grpo.group_size == 4
        && cfg.grpo.temperature == 1.0
        && report.steps.len() == 5000
        && report.final_greedy_accuracy >= 0.95
        && tail > head
        && elapsed < Duration::from_secs(60);
    let outcome = Outcome::new(
        pass,
        format!(
            "50 items K={} T={} {} steps: greedy {:.3} (min 0.95), reward first10% {head:.4} last10% {tail:.4}, {elapsed:?} (limit 60s)",
            cfg.grpo.group_size,
            cfg.grpo.temperature,
            report.steps.len(),
            report.final_greedy_accuracy
        ),
    );
    (outcome, report)
}

/// Criterion 6: synthesized trajectories score full format and gran
/// against their own final annotation.
pub fn round_trip(n_cases: usize) -> Outcome {
    let tree = fixtures::taxonomy();
    let ddx = fixtures::ddx();
    let cases = fixtures::cases(&tree, n_cases, 6);
    let out = synthesize(&cases, &tree, &ddx, &MockGenerator, KindMix::default(), DifferentialOptions::seeded(6))
        .expect("synthesis runs");
    let sft = TagSet::sft();
    let mut bad = 0usize;
    let mut kinds = [0usize; 3];
    for t in &out.trajectories {
        kinds[t.kind as usize] += 1;
        let rec = render_sft(t);
        let s = score_completion(&rec.response, &t.annotation, None, &sft, ParseMode::Strict, &RewardConfig::default());
        if s.format != 1.0 || s.gran != 0.75 {
            bad += 1;
        }
    }
    Outcome::new(
        bad == 0 && out.skipped.is_empty() && out.trajectories.len() == n_cases,
        format!(
            "{n_cases} cases -> {} trajectories (type1 {}, type2 {}, type3 {}), {} skipped, {bad} failing",
            out.trajectories.len(),
            kinds[0],
            kinds[1],
            kinds[2],
            out.skipped.len()
        ),
    )
}

/// Criterion 7: option-set invariants on standard, hierarchical and DDx items.
pub fn mcq_invariants(total: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut problems: Vec<String> = Vec::new();
    let mut counts = [0usize; 3];
    let mut produced = 0usize;
    while produced < total {
        let tree = fixtures::random_taxonomy(&mut rng, 40, 6);
        if tree.len() < 5 {
            continue;
        }
        let ddx = fixtures::random_ddx(&mut rng, &tree, 0.1);
        let raw = RawTree::new(&tree.to_document());
        let adj = oracles::adjacency(&ddx.to_document());
        let labels: Vec<String> = raw.labels().cloned().collect();
        for _ in 0..10 {
            let gt = labels[rng.random_range(0..labels.len())].clone();
            let config = McqConfig {
                n_opts: rng.random_range(2..=5),
                p_local: rng.random_range(0.0..=1.0),
                inject_ancestor: rng.random_bool(0.5),
                ..Default::default()
            };
            let local: BTreeSet<String> = labels.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
            let item = build_mcq(
                ItemSource { id: "x", image_ref: "x", ground_truth: &gt },
                Some(&local),
                &tree,
                &config,
                rng.random(),
            )
            .expect("tree has enough labels");
            let path = raw.path(&gt);
            if let Err(e) = deepest_on_path(&item, &path) {
                problems.push(format!("standard: {e}"));
            }
            counts[0] += 1;
            produced += 1;

            if path.len() >= 2 {
                let h = build_hierarchical_variant(&item, &tree, rng.random()).expect("hierarchical");
                let ancestors: BTreeSet<&str> = path[..path.len() - 1].iter().map(String::as_str).collect();
                if let Err(e) = deepest_on_path(&h, &path).and_then(|_| only_from(&h, &gt, &ancestors, &path, &labels)) {
                    problems.push(format!("hierarchical: {e}"));
                }
                counts[1] += 1;
                produced += 1;
            }

            let d = build_ddx_variant(&item, &ddx, &tree, rng.random()).expect("ddx");
            let own = adj.get(&gt).cloned().unwrap_or_default();
            let neighbors: BTreeSet<String> = if own.is_empty() {
                raw.parent(&gt).and_then(|p| adj.get(p).cloned()).unwrap_or_default()
            } else {
                own
            };
            let neighbors: BTreeSet<&str> = neighbors.iter().map(String::as_str).filter(|n| *n != gt).collect();
            if let Err(e) = deepest_on_path(&d, &path).and_then(|_| only_from(&d, &gt, &neighbors, &path, &labels)) {
                problems.push(format!("ddx: {e}"));
            }
            counts[2] += 1;
            produced += 1;
        }
    }
    problems.truncate(3);
    Outcome::new(
        problems.is_empty(),
        format!(
            "{produced} items (standard {}, hierarchical {}, ddx {}), first problems {problems:?}",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn deepest_on_path(item: &McqItem, path: &[String]) -> Result<(), String> {
    let depth = |l: &str| path.iter().position(|p| p == l).map(|i| i + 1);
    let on_path: Vec<(usize, char)> = item.options.iter().filter_map(|o| Some((depth(&o.label)?, o.letter))).collect();
    let max = on_path.iter().map(|(d, _)| *d).max().ok_or("no on-path option")?;
    let deepest: Vec<char> = on_path.iter().filter(|(d, _)| *d == max).map(|(_, l)| *l).collect();
    if deepest.len() != 1 {
        return Err(format!("{} options at depth {max}", deepest.len()));
    }
    if deepest[0] != item.correct_letter {
        return Err(format!("correct {} but deepest {}", item.correct_letter, deepest[0]));
    }
    let letters: Vec<char> = item.options.iter().map(|o| o.letter).collect();
    let expected: Vec<char> = ('A'..='Z').take(letters.len()).collect();
    if letters != expected {
        return Err(format!("letters {letters:?}"));
    }
    Ok(())
}

/// Options are the ground truth, members of `allowed`, or declared pads;
/// pads lie outside `allowed` and off the path (DDx items may fall back to
/// ancestors once off-path labels are used up); pads exist only when
/// `allowed` could not fill the slots.
fn only_from(
    item: &McqItem,
    gt: &str,
    allowed: &BTreeSet<&str>,
    path: &[String],
    all_labels: &[String],
) -> Result<(), String> {
    let pads: BTreeSet<&str> = item.padded_labels.iter().map(String::as_str).collect();
    for o in &item.options {
        let l = o.label.as_str();
        if l != gt && !allowed.contains(l) && !pads.contains(l) {
            return Err(format!("undeclared option {l}"));
        }
    }
    let labels: Vec<&str> = item.options.iter().map(|o| o.label.as_str()).collect();
    for p in &pads {
        if allowed.contains(p) || *p == gt {
            return Err(format!("pad {p} overlaps the source set"));
        }
        // An on-path pad is only acceptable once off-path labels ran out.
        if path.iter().any(|x| x == p) && item.variant != Variant::Ddx {
            return Err(format!("pad {p} is on the path"));
        }
        if path.iter().any(|x| x == p) && all_labels.iter().any(|l| !path.contains(l) && !allowed.contains(l.as_str()) && !labels.contains(&l.as_str())) {
            return Err(format!("ancestor pad {p} while off-path labels remain"));
        }
        if !item.options.iter().any(|o| o.label == *p) {
            return Err(format!("declared pad {p} missing from options"));
        }
    }
    let slots = item.options.len() - 1;
    if !pads.is_empty() && allowed.len() >= slots {
        return Err(format!("{} pads with {} available sources for {slots} slots", pads.len(), allowed.len()));
    }
    Ok(())
}

/// Criterion 8: macro-F1 against the confusion-matrix oracle.
pub fn macro_f1_oracle(sets: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let classes = ['A', 'B', 'C'];
    let mut worst: f64 = 0.0;
    for _ in 0..sets {
        let n = rng.random_range(1..12);
        let pairs: Vec<(char, Option<char>)> = (0..n)
            .map(|_| {
                let t = classes[rng.random_range(0..3)];
                let p = if rng.random_bool(0.15) { None } else { Some(classes[rng.random_range(0..3)]) };
                (t, p)
            })
            .collect();
        worst = worst.max((macro_f1(&pairs) - oracles::macro_f1(&pairs)).abs());
    }
    // Per-class counts (tp, fp, fn): A (2, 1, 0), B (1, 0, 2), C none.
    let example = [('A', Some('A')), ('A', Some('A')), ('B', Some('A')), ('B', Some('B')), ('B', None)];
    let got = macro_f1(&example);
    let exact = (got - (0.8 + 0.5) / 3.0).abs() < F1_TOL && format!("{got:.4}") == "0.4333";
    Outcome::new(
        worst <= F1_TOL && exact,
        format!("{sets} random sets: max |impl - oracle| {worst:.2e} (tol {F1_TOL:e}); example {got:.4} (expect 0.4333)"),
    )
}
