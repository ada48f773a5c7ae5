//! Local inference service over a frozen model.
//!
//! * `GET /model` returns `{K, T, H, variant}`.
//! * `POST /decode` with `{"z": [K numbers]}` returns `{"s1": [[x, y]; T], "s2": ...}`.
//! * `POST /rationality` with `{"z": [...]}` returns the decoded encounter's profiles.
//! * `GET /sweep?code=k[&lo=..&hi=..&step=..]` returns the decoded sweep frames.
//!
//! Bad input gets `400` with `{"error": ..., "field": ...}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use encforge::data::{Encounter, Point};
use encforge::metrics;
use encforge::model::{latent_sweep, Model, SweepRange};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn bad(field: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field: Some(field.to_owned()),
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "field": self.field });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn points(p: &[Point]) -> Value {
    Value::Array(p.iter().map(|q| json!([q[0], q[1]])).collect())
}

fn encounter_json(e: &Encounter) -> Value {
    json!({ "s1": points(&e.s1), "s2": points(&e.s2) })
}

/// Reads `{"z": [...]}` with exactly `k` finite numbers and nothing else.
fn parse_z(body: &[u8], k: usize) -> Result<Vec<f64>, ApiError> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::bad("body", format!("malformed JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| ApiError::bad("body", "expected a JSON object"))?;
    if let Some(extra) = obj.keys().find(|key| key.as_str() != "z") {
        return Err(ApiError::bad(extra, format!("unknown field `{extra}`")));
    }
    let z = obj
        .get("z")
        .ok_or_else(|| ApiError::bad("z", "missing field `z`"))?
        .as_array()
        .ok_or_else(|| ApiError::bad("z", "`z` must be an array of numbers"))?;
    if z.len() != k {
        return Err(ApiError::bad(
            "z",
            format!("`z` must have {k} entries, got {}", z.len()),
        ));
    }
    z.iter()
        .map(|x| x.as_f64().filter(|v| v.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| ApiError::bad("z", "`z` entries must be finite numbers"))
}

async fn model_info(State(m): State<Arc<Model>>) -> Json<Value> {
    let c = m.config();
    Json(json!({
        "K": c.latent,
        "T": c.length,
        "H": c.hidden,
        "variant": c.variant.as_str(),
    }))
}

async fn decode(State(m): State<Arc<Model>>, body: Bytes) -> ApiResult {
    let z = parse_z(&body, m.latent())?;
    let enc = m.decode(&z, m.length()).map_err(ApiError::internal)?;
    Ok(Json(encounter_json(&enc)))
}

async fn rationality(State(m): State<Arc<Model>>, body: Bytes) -> ApiResult {
    let z = parse_z(&body, m.latent())?;
    let enc = m.decode(&z, m.length()).map_err(ApiError::internal)?;
    let report = metrics::rationality_report(&enc, None).map_err(ApiError::internal)?;
    serde_json::to_value(report)
        .map(Json)
        .map_err(ApiError::internal)
}

fn query_f64(q: &HashMap<String, String>, key: &str, default: f64) -> Result<f64, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| ApiError::bad(key, format!("`{key}` must be a number"))),
    }
}

async fn sweep(State(m): State<Arc<Model>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    if let Some(extra) = q
        .keys()
        .find(|k| !["code", "lo", "hi", "step"].contains(&k.as_str()))
    {
        return Err(ApiError::bad(extra, format!("unknown parameter `{extra}`")));
    }
    let code = q
        .get("code")
        .ok_or_else(|| ApiError::bad("code", "missing parameter `code`"))?
        .parse::<usize>()
        .map_err(|_| ApiError::bad("code", "`code` must be a non-negative integer"))?;
    if code >= m.latent() {
        return Err(ApiError::bad(
            "code",
            format!("code {code} is out of range for K = {}", m.latent()),
        ));
    }
    let d = SweepRange::default();
    let range = SweepRange {
        lo: query_f64(&q, "lo", d.lo)?,
        hi: query_f64(&q, "hi", d.hi)?,
        step: query_f64(&q, "step", d.step)?,
    };
    let model = Arc::clone(&m);
    let frames = tokio::task::spawn_blocking(move || latent_sweep(&model, code, range, None))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::bad("step", e.to_string()))?;
    let frames: Vec<Value> = frames
        .iter()
        .map(|(v, e)| json!({ "value": v, "s1": points(&e.s1), "s2": points(&e.s2) }))
        .collect();
    Ok(Json(json!({ "code": code, "frames": frames })))
}

pub fn router(model: Arc<Model>) -> Router {
    Router::new()
        .route("/model", get(model_info))
        .route("/decode", post(decode))
        .route("/rationality", post(rationality))
        .route("/sweep", get(sweep))
        .with_state(model)
}

pub async fn serve(model: Arc<Model>, host: &str, port: u16) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("`{host}:{port}` is not a socket address"))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(model)).await?;
    Ok(())
}
