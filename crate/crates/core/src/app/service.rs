//! HTTP inference service over immutable loaded bundles.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ModelBundle;
use crate::domain::{
    canonicalize_partial, validate_record, Analyte, BloodPanel, CanonicalizeError, CaseRecord, Label, Provenance,
    RawMeasurement, Sex, UnitTable,
};
use crate::explain::shapley_sampled;

pub const BAND: (f64, f64) = (10.0, 40.0);

/// Loaded bundles keyed by model id. Replacing an entry swaps the whole bundle at once.
pub struct ServiceState {
    models: RwLock<BTreeMap<String, Arc<ModelBundle>>>,
    default_id: RwLock<String>,
    units: UnitTable,
}

impl ServiceState {
    pub fn new(bundle: ModelBundle) -> Self {
        let id = bundle.model_id.clone();
        ServiceState {
            models: RwLock::new(BTreeMap::from([(id.clone(), Arc::new(bundle))])),
            default_id: RwLock::new(id),
            units: UnitTable::builtin(),
        }
    }

    /// Adds or replaces a bundle; `make_default` also routes id-less requests to it.
    pub fn insert(&self, bundle: ModelBundle, make_default: bool) {
        let id = bundle.model_id.clone();
        self.models.write().expect("lock").insert(id.clone(), Arc::new(bundle));
        if make_default {
            *self.default_id.write().expect("lock") = id;
        }
    }

    pub fn default_id(&self) -> String {
        self.default_id.read().expect("lock").clone()
    }

    fn model(&self, id: Option<&str>) -> Option<Arc<ModelBundle>> {
        let id = id.map(str::to_string).unwrap_or_else(|| self.default_id());
        self.models.read().expect("lock").get(&id).cloned()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementIn {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelRequest {
    #[serde(default)]
    pub model_id: Option<String>,
    pub measurements: Vec<MeasurementIn>,
    pub age: f64,
    /// `"F"`/`"M"` (or spelled out), or the code 0/1.
    pub sex: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Unprocessable(Vec<FieldError>),
    UnknownModel(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Unprocessable(v) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "validation failed", "violations": v }),
            ),
            ApiError::UnknownModel(id) => (StatusCode::NOT_FOUND, json!({ "error": format!("unknown model_id `{id}`") })),
        };
        (status, Json(body)).into_response()
    }
}

fn field_error(field: &str, message: impl Into<String>) -> ApiError {
    ApiError::Unprocessable(vec![FieldError {
        field: field.to_string(),
        message: message.into(),
    }])
}

fn parse_sex(v: &Value) -> Option<Sex> {
    match v {
        Value::String(s) => Sex::parse(s),
        Value::Number(n) => n.as_f64().and_then(Sex::from_code),
        _ => None,
    }
}

/// Canonicalizes and validates a request into a complete panel.
pub fn panel_from_request(req: &PanelRequest, units: &UnitTable) -> Result<BloodPanel, ApiError> {
    let sex = parse_sex(&req.sex).ok_or_else(|| field_error("sex", "sex must be F/M or 0/1"))?;
    let mut raw: Vec<RawMeasurement> = req
        .measurements
        .iter()
        .map(|m| RawMeasurement::new(m.name.clone(), m.value, m.unit.clone()))
        .collect();
    raw.push(RawMeasurement::new("age", req.age, "years"));
    raw.push(RawMeasurement::new("sex", sex.code(), "code"));
    let partial = canonicalize_partial(&raw, units).map_err(|e| match &e {
        CanonicalizeError::UnknownParameter(p)
        | CanonicalizeError::DuplicateParameter(p)
        | CanonicalizeError::NonFiniteValue(p) => field_error(p, e.to_string()),
        CanonicalizeError::UnknownUnit { parameter, .. } => field_error(parameter, e.to_string()),
        _ => field_error("measurements", e.to_string()),
    })?;
    let record = CaseRecord {
        patient_id: String::new(),
        case_id: String::new(),
        panel: partial.clone(),
        label: Label::Unlabeled,
        provenance: Provenance::Clinical,
    };
    let report = validate_record(&record);
    if !report.is_empty() {
        return Err(ApiError::Unprocessable(
            report
                .violations
                .into_iter()
                .map(|v| FieldError {
                    field: v.field,
                    message: v.message,
                })
                .collect(),
        ));
    }
    BloodPanel::from_partial(&partial).map_err(|e| field_error("lymphocyte_count", e.to_string()))
}

fn parse_body(body: &Bytes) -> Result<PanelRequest, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn round6(p: f64) -> f64 {
    (p * 1e6).round() / 1e6
}

fn in_band(crp: f64) -> bool {
    crp >= BAND.0 && crp <= BAND.1
}

struct Scored {
    bundle: Arc<ModelBundle>,
    features: Vec<f64>,
    p: f64,
    panel: BloodPanel,
}

fn score(state: &ServiceState, body: &Bytes) -> Result<Scored, ApiError> {
    let req = parse_body(body)?;
    let bundle = state
        .model(req.model_id.as_deref())
        .ok_or_else(|| ApiError::UnknownModel(req.model_id.clone().unwrap_or_default()))?;
    let panel = panel_from_request(&req, &state.units)?;
    let features = panel.features();
    let p = bundle.predict(&features).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(Scored {
        bundle,
        features,
        p,
        panel,
    })
}

fn base_response(s: &Scored) -> serde_json::Map<String, Value> {
    let crp = s.panel.get(Analyte::Crp);
    let mut m = serde_json::Map::new();
    m.insert("model_id".into(), json!(s.bundle.model_id));
    m.insert("p_bacteria".into(), json!(round6(s.p)));
    m.insert("label".into(), json!(Label::from_positive(s.p >= 0.5).as_str()));
    m.insert("band_flag".into(), json!(in_band(crp)));
    m.insert("crp".into(), json!(crp));
    m.insert("nlr".into(), json!(s.panel.get(Analyte::Nlr)));
    m
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_id": state.default_id() }))
}

async fn predict(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let s = score(&state, &body)?;
    Ok(Json(Value::Object(base_response(&s))))
}

async fn explain(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let s = score(&state, &body)?;
    let settings = &s.bundle.explain;
    let background = settings.background_matrix();
    let r = shapley_sampled(&s.bundle.model, &s.features, &background, settings.n_permutations, settings.seed)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mut m = base_response(&s);
    let names: Vec<&str> = s.bundle.feature_order.iter().map(|f| f.name.as_str()).collect();
    m.insert("features".into(), json!(names));
    m.insert("feature_values".into(), json!(s.features));
    m.insert("phi".into(), json!(r.phi));
    m.insert("base_value".into(), json!(r.base_value));
    m.insert("prediction".into(), json!(r.prediction));
    m.insert("residual".into(), json!(r.efficiency_residual()));
    Ok(Json(Value::Object(m)))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/predict", post(predict))
        .route("/explain", post(explain))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<ServiceState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
