use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::TimeZone;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use virobac::app::{router, ModelBundle, ServiceState};
use virobac::cohort::{generate_cohort, GeneratorConfig};
use virobac::learners::{ClassifierSpec, Family, Fitted, Hyperparams, Model};
use virobac::trees::{ClassLeaf, DecisionTree, Tree};

fn trained_bundle() -> ModelBundle {
    let ds = generate_cohort(&GeneratorConfig::builtin(), 600, 5).unwrap();
    let spec = ClassifierSpec::new(Hyperparams::default_for(Family::Gbt).with_override_str("n_rounds=40").unwrap());
    let at = chrono::Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    ModelBundle::train(&spec, &ds, &Default::default(), 1, at).unwrap()
}

fn constant_bundle() -> ModelBundle {
    let mut b = trained_bundle();
    b.family = Family::Dt;
    b.model = Model {
        n_features: 19,
        scaler: None,
        fitted: Fitted::Dt(DecisionTree {
            tree: Tree::constant(ClassLeaf { bacteria: 3.0, virus: 1.0 }),
            n_features: 19,
        }),
    };
    b.model_id = "VB_CONST".into();
    b.seal();
    b
}

fn panel(crp: Value, crp_unit: &str) -> Value {
    json!({
        "measurements": [
            {"name": "wbc", "value": 9.4, "unit": "1E9/L"},
            {"name": "neutrophils_count", "value": 6.8, "unit": "1E9/L"},
            {"name": "lymphocyte_count", "value": 1.6, "unit": "1E9/L"},
            {"name": "monocyte_count", "value": 0.6, "unit": "1E9/L"},
            {"name": "neutrophils_pct", "value": 72.3, "unit": "%"},
            {"name": "lymphocyte_pct", "value": 17.0, "unit": "%"},
            {"name": "monocyte_pct", "value": 6.4, "unit": "%"},
            {"name": "rbc", "value": 4.4, "unit": "1E12/L"},
            {"name": "hb", "value": 135.0, "unit": "g/L"},
            {"name": "hct", "value": 0.40, "unit": "1"},
            {"name": "mcv", "value": 90.0, "unit": "fL"},
            {"name": "mch", "value": 30.7, "unit": "pg"},
            {"name": "mchc", "value": 337.0, "unit": "g/L"},
            {"name": "rdw", "value": 13.6, "unit": "%"},
            {"name": "platelet_count", "value": 215.0, "unit": "1E9/L"},
            {"name": "mpv", "value": 8.4, "unit": "fL"},
            {"name": "crp", "value": crp, "unit": crp_unit}
        ],
        "age": 61,
        "sex": "M"
    })
}

async fn call(state: &Arc<ServiceState>, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn health_reports_model() {
    let b = trained_bundle();
    let id = b.model_id.clone();
    let state = Arc::new(ServiceState::new(b));
    let (s, v) = call(&state, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok", "model_id": id}));
}

#[tokio::test]
async fn predict_canonicalizes_and_is_deterministic() {
    let state = Arc::new(ServiceState::new(trained_bundle()));
    let (s1, a) = call(&state, "POST", "/predict", Some(panel(json!(23.0), "mg/L").to_string())).await;
    let (s2, b) = call(&state, "POST", "/predict", Some(panel(json!(2.3), "mg/dL").to_string())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["band_flag"], json!(true));
    let p = a["p_bacteria"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(a["label"], json!(if p >= 0.5 { "BACTERIA" } else { "VIRUS" }));
    let (_, again) = call(&state, "POST", "/predict", Some(panel(json!(23.0), "mg/L").to_string())).await;
    assert_eq!(again, a);
    let (_, out) = call(&state, "POST", "/predict", Some(panel(json!(41.0), "mg/L").to_string())).await;
    assert_eq!(out["band_flag"], json!(false));
}

#[tokio::test]
async fn error_statuses() {
    let state = Arc::new(ServiceState::new(trained_bundle()));
    let (s, _) = call(&state, "POST", "/predict", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let mut body = panel(json!(5.0), "mg/L");
    body["measurements"].as_array_mut().unwrap().retain(|m| m["name"] != "lymphocyte_count");
    let (s, v) = call(&state, "POST", "/predict", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["violations"].as_array().unwrap().iter().any(|x| x["field"] == "lymphocyte_count"));

    let mut body = panel(json!(5.0), "mg/L");
    body["model_id"] = json!("VB_nope");
    let (s, _) = call(&state, "POST", "/predict", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn explain_payload() {
    let state = Arc::new(ServiceState::new(trained_bundle()));
    state.insert(constant_bundle(), false);
    let req = panel(json!(30.0), "mg/L").to_string();
    let (s, a) = call(&state, "POST", "/explain", Some(req.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let phi: Vec<f64> = serde_json::from_value(a["phi"].clone()).unwrap();
    assert_eq!(phi.len(), 19);
    let base = a["base_value"].as_f64().unwrap();
    let pred = a["prediction"].as_f64().unwrap();
    let residual = a["residual"].as_f64().unwrap();
    assert!((pred - base - phi.iter().sum::<f64>() - residual).abs() < 1e-12);
    assert!(residual.abs() <= 0.02);
    let (_, b) = call(&state, "POST", "/explain", Some(req)).await;
    assert_eq!(a, b);

    let mut c = panel(json!(30.0), "mg/L");
    c["model_id"] = json!("VB_CONST");
    let (s, v) = call(&state, "POST", "/explain", Some(c.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["phi"].as_array().unwrap().iter().all(|p| p.as_f64() == Some(0.0)));
    assert_eq!(v["p_bacteria"], json!(0.666667));
}
