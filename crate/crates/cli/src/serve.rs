//! JSON-over-HTTP access to one fitted model: point predictions, posterior
//! simulation under caller-supplied priors and precomputed ALE curves.
//!
//! ```text
//! POST /predict        {"apsiii": 70, "gcs_eye_opening": 2, ...}
//! POST /posterior      {"priors": {"apsiii": {"type": "point_mass", "value": 70}}, "n": 20000, "seed": 7}
//! GET  /ale/{feature}
//! GET  /model/meta
//! GET  /healthz
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use icurisk::interpret::{ale_first_order, AleBinning, AleCurve, DEFAULT_ALE_BINS};
use icurisk::models::{FeatureInfo, ModelArtifact};
use icurisk::posterior::{nonsurvivor_priors, posterior_risk, Prior, PriorSpec, DEFAULT_SAMPLES};
use icurisk::{ColumnKind, Frame};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_POSTERIOR_CAP: usize = 100_000;
pub const DEFAULT_SERVER_SEED: u64 = 2024;

/// Everything the server needs, fixed at startup.
#[derive(Debug)]
pub struct ServeState {
    pub model: ModelArtifact,
    pub priors: PriorSpec,
    pub ale: BTreeMap<String, AleCurve>,
    pub posterior_cap: usize,
    pub default_seed: u64,
}

impl ServeState {
    /// `data` holds the encoded training rows used for ALE and, when `priors`
    /// is `None`, for non-survivor priors.
    pub fn new(
        model: ModelArtifact,
        priors: Option<PriorSpec>,
        data: &Frame,
        posterior_cap: usize,
        default_seed: u64,
    ) -> Result<Self, CliError> {
        model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        let features = model.feature_order.clone();
        let priors = match priors {
            Some(p) => p,
            None => {
                let subset = data.select_features(&features).map_err(CliError::Data)?;
                nonsurvivor_priors(&subset).map_err(CliError::Data)?
            }
        };
        priors
            .validate_for(&features)
            .map_err(|e| CliError::Config(format!("priors: {e}")))?;
        let extra: Vec<&String> = priors.priors.keys().filter(|k| !features.contains(k)).collect();
        if !extra.is_empty() {
            return Err(CliError::Config(format!("priors name non-model features {extra:?}")));
        }

        let x = data.matrix(&features).map_err(CliError::Data)?;
        let mut ale = BTreeMap::new();
        for info in &model.feature_info {
            let binning = match AleBinning::for_kind(info.kind) {
                AleBinning::Quantile { .. } => AleBinning::Quantile {
                    n_bins: DEFAULT_ALE_BINS,
                },
                b => b,
            };
            match ale_first_order(&model, &x, &info.name, binning) {
                Ok(c) => {
                    ale.insert(info.name.clone(), c);
                }
                Err(icurisk::Error::Degenerate(m)) => tracing::warn!("no ALE curve for {}: {m}", info.name),
                Err(e) => return Err(CliError::Data(e)),
            }
        }
        Ok(Self {
            model,
            priors,
            ale,
            posterior_cap,
            default_seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<String>,
}

fn fail(status: StatusCode, error: impl Into<String>, features: Vec<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: error.into(),
            features,
        }),
    )
        .into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub risk: f64,
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorRequest {
    /// Overrides for the server's default priors, by feature.
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub version: u32,
    pub family: String,
    pub feature_order: Vec<String>,
    pub features: Vec<FeatureInfo>,
    pub threshold: f64,
    pub train_fingerprint: String,
    pub n_train: usize,
    pub converged: bool,
    pub flags: Vec<String>,
    pub hyperparams: BTreeMap<String, icurisk::models::HyperValue>,
    pub default_priors: PriorSpec,
    pub ale_features: Vec<String>,
    pub posterior_cap: usize,
    pub default_seed: u64,
}

async fn predict(State(st): State<Arc<ServeState>>, body: Bytes) -> Response {
    let doc: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return fail(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}"), vec![]),
    };
    let Some(map) = doc.as_object() else {
        return fail(StatusCode::UNPROCESSABLE_ENTITY, "body must be an object of feature values", vec![]);
    };
    let model = &st.model;
    let wrong_type: Vec<String> = map
        .iter()
        .filter(|(_, v)| !(v.is_number() || v.is_null()))
        .map(|(k, _)| k.clone())
        .collect();
    if !wrong_type.is_empty() {
        return fail(StatusCode::UNPROCESSABLE_ENTITY, "feature values must be numbers", wrong_type);
    }
    let unknown: Vec<String> = map.keys().filter(|k| !model.feature_order.contains(k)).cloned().collect();
    if !unknown.is_empty() {
        return fail(StatusCode::BAD_REQUEST, "unknown features", unknown);
    }
    let missing: Vec<String> = model
        .feature_order
        .iter()
        .filter(|f| map.get(*f).and_then(Value::as_f64).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return fail(StatusCode::BAD_REQUEST, "missing features", missing);
    }
    let row: Vec<f64> = model.feature_order.iter().map(|f| map[f].as_f64().expect("checked")).collect();
    let out_of_range: Vec<String> = model
        .feature_info
        .iter()
        .zip(&row)
        .filter(|(info, &v)| {
            !v.is_finite()
                || (info.declared && (v < info.range[0] || v > info.range[1]))
                || (info.kind == ColumnKind::Binary && v != 0.0 && v != 1.0)
        })
        .map(|(info, _)| info.name.clone())
        .collect();
    if !out_of_range.is_empty() {
        return fail(StatusCode::BAD_REQUEST, "feature values outside the valid range", out_of_range);
    }
    match model.predict_one(&row) {
        Ok(risk) => Json(PredictResponse {
            risk,
            threshold: model.threshold,
            flagged: risk >= model.threshold,
        })
        .into_response(),
        Err(e) => fail(StatusCode::BAD_REQUEST, e.to_string(), vec![]),
    }
}

async fn posterior(State(st): State<Arc<ServeState>>, body: Bytes) -> Response {
    let req: PosteriorRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return fail(StatusCode::BAD_REQUEST, format!("malformed posterior request: {e}"), vec![]),
    };
    let n = req.n.unwrap_or(DEFAULT_SAMPLES.min(st.posterior_cap));
    if n > st.posterior_cap {
        return fail(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("n = {n} exceeds the server cap of {}", st.posterior_cap),
            vec![],
        );
    }
    if n == 0 {
        return fail(StatusCode::BAD_REQUEST, "n must be at least 1", vec![]);
    }
    let unknown: Vec<String> = req
        .priors
        .keys()
        .filter(|k| !st.model.feature_order.contains(k))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return fail(StatusCode::BAD_REQUEST, "priors for unknown features", unknown);
    }
    let mut priors = st.priors.clone();
    let mut invalid = Vec::new();
    for (name, p) in req.priors {
        if let Err(e) = p.validate() {
            invalid.push((name.clone(), e.to_string()));
        }
        priors.insert(name, p);
    }
    if !invalid.is_empty() {
        let msg = invalid.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>().join("; ");
        return fail(StatusCode::BAD_REQUEST, msg, invalid.into_iter().map(|(n, _)| n).collect());
    }
    let seed = req.seed.unwrap_or(st.default_seed);
    let state = Arc::clone(&st);
    let res = tokio::task::spawn_blocking(move || posterior_risk(&state.model, &priors, n, seed)).await;
    match res {
        Ok(Ok(summary)) => Json(summary).into_response(),
        Ok(Err(e)) => fail(StatusCode::BAD_REQUEST, e.to_string(), vec![]),
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), vec![]),
    }
}

async fn ale(State(st): State<Arc<ServeState>>, Path(feature): Path<String>) -> Response {
    match st.ale.get(&feature) {
        Some(c) => Json(c).into_response(),
        None => fail(StatusCode::NOT_FOUND, format!("no ALE curve for {feature:?}"), vec![feature]),
    }
}

async fn meta(State(st): State<Arc<ServeState>>) -> Json<ModelMeta> {
    let m = &st.model;
    Json(ModelMeta {
        version: m.version,
        family: m.family.to_string(),
        feature_order: m.feature_order.clone(),
        features: m.feature_info.clone(),
        threshold: m.threshold,
        train_fingerprint: m.meta.train_fingerprint.clone(),
        n_train: m.meta.n_train,
        converged: m.meta.converged,
        flags: m.meta.flags.clone(),
        hyperparams: m.meta.hyperparams.clone(),
        default_priors: st.priors.clone(),
        ale_features: st.ale.keys().cloned().collect(),
        posterior_cap: st.posterior_cap,
        default_seed: st.default_seed,
    })
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/posterior", post(posterior))
        .route("/ale/{feature}", get(ale))
        .route("/model/meta", get(meta))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: ServeState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
