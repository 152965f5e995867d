use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dermrl_core::mcq::McqOption;
use dermrl_core::reward::{gran_reward_scaled, score_completion, ParseMode, RewardBreakdown, RewardConfig, TagSet};
use dermrl_core::taxonomy::{canonicalize, Malignancy, TaxonomyAnnotation, TaxonomyTree, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub completion: String,
    pub ground_truth_path: Vec<String>,
    pub malignancy: Malignancy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<WireOption>>,
    #[serde(default)]
    pub tag_set: TagSpec,
    #[serde(default)]
    pub mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireOption {
    pub letter: char,
    pub label: String,
}

/// A preset name (`"rl"`, `"sft"`) or four explicit tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TagSpec {
    Preset(String),
    Explicit(TagSet),
}

impl Default for TagSpec {
    fn default() -> Self {
        TagSpec::Preset("rl".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub format_version: u32,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub format_version: u32,
    pub taxonomy_checksum: String,
    pub taxonomy_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl ApiError {
    fn malformed(path: Option<String>, message: String) -> Self {
        Self { status: 400, error: "malformed_body".into(), message, path, index: None }
    }

    fn unprocessable(path: &str, message: String) -> Self {
        Self {
            status: 422,
            error: "unresolvable_input".into(),
            message,
            path: Some(path.into()),
            index: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::BAD_REQUEST);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug)]
pub struct AppState {
    pub tree: TaxonomyTree,
    pub reward: RewardConfig,
}

/// Resolves tags and the ground-truth path against `tree`.
pub fn prepare(req: &ScoreRequest, tree: &TaxonomyTree) -> Result<(TagSet, TaxonomyAnnotation), ApiError> {
    if let Some(v) = req.format_version {
        if v != FORMAT_VERSION {
            return Err(ApiError::malformed(
                Some("format_version".into()),
                format!("unsupported format_version {v}, expected {FORMAT_VERSION}"),
            ));
        }
    }
    let tags = match &req.tag_set {
        TagSpec::Preset(name) => TagSet::preset(name).ok_or_else(|| {
            ApiError::malformed(Some("tag_set".into()), format!("unknown tag preset `{name}` (expected sft|rl)"))
        })?,
        TagSpec::Explicit(t) => {
            t.validate().map_err(|e| ApiError::malformed(Some("tag_set".into()), e.to_string()))?;
            t.clone()
        }
    };
    if req.ground_truth_path.is_empty() {
        return Err(ApiError::unprocessable("ground_truth_path", "ground_truth_path is empty".into()));
    }
    let path: Vec<String> = req.ground_truth_path.iter().map(|l| canonicalize(l)).collect();
    if let Some(unknown) = path.iter().find(|l| !tree.contains(l)) {
        return Err(ApiError::unprocessable("ground_truth_path", format!("label `{unknown}` is not in the taxonomy")));
    }
    if !tree.is_valid_path(&path) {
        return Err(ApiError::unprocessable(
            "ground_truth_path",
            "ground_truth_path is not a root-to-node walk of the taxonomy".into(),
        ));
    }
    Ok((tags, TaxonomyAnnotation { path, malignancy: req.malignancy }))
}

/// Scores one request exactly as the library would.
pub fn score_request(req: &ScoreRequest, state: &AppState) -> Result<ScoreResponse, ApiError> {
    let (tags, truth) = prepare(req, &state.tree)?;
    let options: Option<Vec<McqOption>> = req.options.as_ref().map(|opts| {
        opts.iter()
            .map(|o| McqOption {
                letter: o.letter,
                label: canonicalize(&o.label),
                gran_value: gran_reward_scaled(Some(&canonicalize(&o.label)), &truth, state.reward.gran_scale),
            })
            .collect()
    });
    let breakdown = score_completion(&req.completion, &truth, options.as_deref(), &tags, req.mode, &state.reward);
    Ok(ScoreResponse { format_version: FORMAT_VERSION, breakdown })
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = (path != ".").then_some(path);
        ApiError::malformed(path, e.into_inner().to_string())
    })
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse_body(&body)?;
    score_request(&req, &state).map(Json)
}

async fn score_batch(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Vec<ScoreResponse>>, ApiError> {
    let reqs: Vec<ScoreRequest> = parse_body(&body)?;
    let out = tokio::task::spawn_blocking(move || {
        reqs.par_iter()
            .enumerate()
            .map(|(i, r)| {
                score_request(r, &state).map_err(|mut e| {
                    e.index = Some(i);
                    e.path = e.path.map(|p| format!("[{i}].{p}"));
                    e
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .await
    .map_err(|e| ApiError { status: 500, error: "internal".into(), message: e.to_string(), path: None, index: None })??;
    Ok(Json(out))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        format_version: FORMAT_VERSION,
        taxonomy_checksum: state.tree.checksum().to_string(),
        taxonomy_nodes: state.tree.len(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/score_batch", post(score_batch))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), checksum = %state.tree.checksum(), "reward service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
