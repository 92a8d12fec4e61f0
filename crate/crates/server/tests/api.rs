use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use cppnlab_server::store::Store;
use cppnlab_server::{router, AppState};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    _dir: TempDir,
    app: Router,
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    Harness { app: router(AppState::new(store)), _dir: dir }
}

impl Harness {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn session(&self, seed: u64, size: usize) -> Value {
        let (status, s) = self
            .json("POST", "/sessions", Some(json!({ "config": { "rng_seed": seed, "generation_size": size } })))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{s}");
        s
    }

    async fn evolved_genome(&self) -> String {
        let mut s = self.session(3, 6).await;
        let id = s["id"].as_str().unwrap().to_string();
        for _ in 0..6 {
            let pick = s["genomes"][0].clone();
            let (status, next) = self.json("POST", &format!("/sessions/{id}/select"), Some(json!({ "selected": [pick] }))).await;
            assert_eq!(status, StatusCode::OK, "{next}");
            s = next;
        }
        s["genomes"][0].as_str().unwrap().to_string()
    }
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn decode(png: &[u8]) -> image::RgbImage {
    image::load_from_memory(png).unwrap().to_rgb8()
}

#[tokio::test]
async fn breeding_round_trip_records_lineage() {
    let h = harness();
    let s = h.session(11, 8).await;
    let id = s["id"].as_str().unwrap();
    let first = ids(&s["genomes"]);
    assert_eq!(first.len(), 8);
    let (status, next) = h
        .json("POST", &format!("/sessions/{id}/select"), Some(json!({ "selected": [first[2], first[5]], "generation": 0 })))
        .await;
    assert_eq!(status, StatusCode::OK, "{next}");
    assert_eq!(next["generation"], 1);
    let child = &ids(&next["genomes"])[0];

    let (status, fetched) = h.json("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, next);

    let (status, lin) = h.json("GET", &format!("/genomes/{child}/lineage"), None).await;
    assert_eq!(status, StatusCode::OK);
    let nodes: Vec<&str> = lin["nodes"].as_array().unwrap().iter().map(|n| n["genome"].as_str().unwrap()).collect();
    assert!(nodes.contains(&child.as_str()));
    assert!(nodes.iter().any(|n| *n == first[2] || *n == first[5]));
    assert!(!lin["edges"].as_array().unwrap().is_empty());

    let (status, text) = h.call("GET", &format!("/genomes/{child}.json"), None).await;
    assert_eq!(status, StatusCode::OK);
    let genome = cppnlab::Genome::from_text(std::str::from_utf8(&text).unwrap()).unwrap();
    assert_eq!(&genome.content_id(), child);

    let (status, report) = h.json("GET", &format!("/sessions/{id}/replay"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["identical"], true);
}

#[tokio::test]
async fn stale_selection_conflicts() {
    let h = harness();
    let s = h.session(5, 4).await;
    let id = s["id"].as_str().unwrap();
    let gen0 = ids(&s["genomes"]);
    let uri = format!("/sessions/{id}/select");
    let (status, _) = h.json("POST", &uri, Some(json!({ "selected": [gen0[0]] }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = h.json("POST", &uri, Some(json!({ "selected": [gen0[1]] }))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body["error"].is_string());
    let (status, _) = h.json("POST", &uri, Some(json!({ "selected": [], "generation": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn rendering_is_byte_stable_and_sized() {
    let h = harness();
    let s = h.session(1, 3).await;
    let g = s["genomes"][1].as_str().unwrap();
    let (status, a) = h.call("GET", &format!("/genomes/{g}.png?r=32"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = h.call("GET", &format!("/genomes/{g}.png?r=32"), None).await;
    assert_eq!(a, b);
    let img = decode(&a);
    assert_eq!(img.dimensions(), (32, 32));
    let direct = cppnlab::render(&cppnlab::Genome::from_text(&String::from_utf8(h.call("GET", &format!("/genomes/{g}.json"), None).await.1).unwrap()).unwrap(), 32)
        .unwrap()
        .encode_png()
        .unwrap();
    assert_eq!(a, direct);
    let (status, _) = h.call("GET", &format!("/genomes/{g}.png?r=5000"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let h = harness();
    let missing = "ab".repeat(32);
    for uri in [
        format!("/genomes/{missing}.json"),
        format!("/genomes/{missing}.png"),
        format!("/genomes/{missing}/lineage"),
        format!("/mlps/{missing}.json"),
        format!("/sessions/{missing}"),
        "/jobs/999".to_string(),
    ] {
        let (status, _) = h.call("GET", &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = h.call("GET", "/genomes/NOT-HEX.json", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn layerize_then_verify_and_analyse() {
    let h = harness();
    let g = h.evolved_genome().await;
    let (status, lay) = h.json("POST", &format!("/genomes/{g}/layerize"), None).await;
    assert_eq!(status, StatusCode::CREATED, "{lay}");
    let mlp = lay["mlp"].as_str().unwrap();
    assert_eq!(lay["widths"][0], 3);

    let (status, report) = h.json("POST", &format!("/genomes/{g}/verify"), Some(json!({ "mlp": mlp, "resolution": 32 }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["pass"], true, "{report}");
    assert!(report["max_abs_diff"].as_f64().unwrap() <= 1e-9);

    let (status, text) = h.call("GET", &format!("/mlps/{mlp}.json"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cppnlab::LayerizedMlp::from_text(std::str::from_utf8(&text).unwrap()).unwrap().content_id(), mlp);

    let (status, nov) = h.json("GET", &format!("/mlps/{mlp}/novelty?r=32"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(nov["novel"].as_u64().unwrap() >= 3);

    for uri in [format!("/mlps/{mlp}/maps.png?r=16"), format!("/genomes/{g}/maps.png?r=16"), format!("/mlps/{mlp}/pca/1/panel.png?r=16")] {
        let (status, bytes) = h.call("GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        decode(&bytes);
    }
    let (status, pca) = h.json("GET", &format!("/mlps/{mlp}/pca/1?r=16"), None).await;
    assert_eq!(status, StatusCode::OK);
    let vars: Vec<f64> = pca["variances"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(vars.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test]
async fn sweep_at_zero_offset_matches_plain_render() {
    let h = harness();
    let g = h.evolved_genome().await;
    let (_, lay) = h.json("POST", &format!("/genomes/{g}/layerize"), None).await;
    let mlp = lay["mlp"].as_str().unwrap();
    let (_, base) = h.call("GET", &format!("/genomes/{g}.png?r=24"), None).await;
    let (status, frame) = h.call("GET", &format!("/mlps/{mlp}/sweep.png?layer=1&row=0&col=0&t=0&r=24"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decode(&frame), decode(&base));
    let (_, moved) = h.call("GET", &format!("/mlps/{mlp}/sweep.png?layer=1&row=0&col=0&t=4&r=24"), None).await;
    assert_ne!(decode(&moved), decode(&base));
    let (status, _) = h.call("GET", &format!("/mlps/{mlp}/sweep.png?layer=99&row=0&col=0&t=1"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn publish_is_idempotent_and_listed() {
    let h = harness();
    let s = h.session(2, 3).await;
    let g = s["genomes"][0].as_str().unwrap();
    let uri = format!("/genomes/{g}/publish");
    let (status, first) = h.json("POST", &uri, Some(json!({ "title": "spiral" }))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = h.json("POST", &uri, Some(json!({ "title": "other" }))).await;
    assert_eq!(first, second);
    let (_, gallery) = h.json("GET", "/gallery", None).await;
    let entries = gallery.as_array().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["lineage"], format!("/genomes/{g}/lineage"));
    let (_, lin) = h.json("GET", &format!("/genomes/{g}/lineage"), None).await;
    assert!(lin["nodes"].as_array().unwrap().iter().any(|n| n["genome"] == g && n["published"] == true));
}

#[tokio::test]
async fn training_job_runs_to_completion() {
    let h = harness();
    let g = h.evolved_genome().await;
    let (_, lay) = h.json("POST", &format!("/genomes/{g}/layerize"), None).await;
    let mlp = lay["mlp"].as_str().unwrap();
    let cfg = json!({ "iterations": 300, "lr": 0.01, "resolution": 16, "optimizer": "adam", "trace_stride": 50, "seed": 4 });
    let (status, started) = h.json("POST", &format!("/mlps/{mlp}/train"), Some(json!({ "config": cfg }))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{started}");
    let job = started["job"].as_str().unwrap();
    let deadline = Instant::now() + Duration::from_secs(120);
    let status = loop {
        let (_, st) = h.json("GET", &format!("/jobs/{job}"), None).await;
        if st["state"] != "running" {
            break st;
        }
        assert!(Instant::now() < deadline, "job did not finish");
        tokio::time::sleep(Duration::from_millis(50)).await;
    };
    assert_eq!(status["state"], "done", "{status}");
    let trace = status["trace"].as_array().unwrap();
    let first = trace.first().unwrap()["mse"].as_f64().unwrap();
    let last = trace.last().unwrap()["mse"].as_f64().unwrap();
    assert!(last < first, "{first} -> {last}");
    let result = status["result_mlp"].as_str().unwrap();
    let (status, _) = h.call("GET", &format!("/mlps/{result}.json"), None).await;
    assert_eq!(status, StatusCode::OK);
}
