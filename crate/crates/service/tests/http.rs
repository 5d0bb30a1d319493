use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use hmdap_core::Engine;
use hmdap_service::http::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/demo");

fn demo_state() -> (tempfile::TempDir, AppState) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["trips.csv", "zones.csv", "roads.csv"] {
        std::fs::copy(Path::new(DEMO).join(f), dir.path().join(f)).unwrap();
    }
    let engine = Engine::open(dir.path(), 2).unwrap();
    for t in ["trips", "zones", "roads"] {
        engine
            .load_table(t, Path::new(&format!("{t}.csv")), ',', true)
            .unwrap();
    }
    let state = AppState::new(Arc::new(engine));
    (dir, state)
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn send_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (s, b) = send(app, method, uri, body).await;
    let v = serde_json::from_slice(&b)
        .unwrap_or_else(|_| panic!("not json: {}", String::from_utf8_lossy(&b)));
    (s, v)
}

fn ml_config(primary: &str) -> String {
    format!(
        "<configuration><input><database><sql>SELECT trip_id, distance_km, fare FROM trips</sql></database></input>\
         <parameter><value>2</value><value>50</value><value>0.0001</value><value>3</value></parameter>\
         <algorithm>KMeans</algorithm><primary_sql>{primary}</primary_sql>\
         <features><col>distance_km</col><col>fare</col></features></configuration>"
    )
}

const DB: &str = "<database><url>local:.</url></database>";

async fn wait_terminal(app: &Router, id: &str) -> Value {
    for _ in 0..500 {
        let (s, v) = send_json(app, "GET", &format!("/pipelines/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if ["Succeeded", "Failed", "Cancelled"].contains(&v["status"].as_str().unwrap()) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} never finished");
}

#[tokio::test]
async fn tables_and_query() {
    let (_d, st) = demo_state();
    let app = router(st);
    let (s, v) = send_json(&app, "GET", "/tables", None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["tables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["table_name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["roads", "trips", "zones"]);

    let sql = "SELECT borough, COUNT(*) AS n FROM zones GROUP BY borough ORDER BY borough";
    let (s, v) = send_json(&app, "POST", "/query", Some(json!({ "sql": sql }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["row_count"], 4);
    assert_eq!(v["columns"][1], json!({"name": "n", "type": "Int64"}));
    assert_eq!(v["rows"][0], json!(["East", 5]));
}

#[tokio::test]
async fn error_bodies() {
    let (_d, st) = demo_state();
    let app = router(st);
    let (s, v) = send_json(
        &app,
        "POST",
        "/query",
        Some(json!({ "sql": "SELECT * FROM nope" })),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::NOT_FOUND, "unknown_table")
    );
    let (s, v) = send_json(
        &app,
        "POST",
        "/query",
        Some(json!({ "sql": "SELECT FROM" })),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "sql_error")
    );
    assert!(v["message"].as_str().unwrap().contains("1:"));
    let (s, v) = send_json(&app, "POST", "/query", Some(json!({ "query": "x" }))).await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "bad_request")
    );
    let (s, v) = send_json(&app, "GET", "/nowhere", None).await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::NOT_FOUND, "not_found")
    );
    let (s, v) = send_json(&app, "GET", "/query", None).await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed")
    );
    let (s, _) = send_json(&app, "GET", "/pipelines/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = send_json(&app, "POST", "/pipelines/missing/cancel", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn graph_endpoints() {
    let (_d, st) = demo_state();
    let app = router(st);
    let body = json!({"table": "roads", "src_col": "src_zone", "dst_col": "dst_zone", "weight_col": "length_km", "source": 1});
    let (s, v) = send_json(&app, "POST", "/graph/shortest-paths", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["row_count"], 20);
    assert_eq!(v["rows"][0], json!([1, 0.0, null]));
    // the outlying ring is unreachable from zone 1
    assert_eq!(v["rows"][19][1], Value::Null);

    let mut bad = body.clone();
    bad["source"] = json!("not-a-zone");
    let (s, v) = send_json(&app, "POST", "/graph/shortest-paths", Some(bad)).await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "graph_error")
    );

    let body = json!({"table": "roads", "src_col": "src_zone", "dst_col": "dst_zone"});
    let (s, v) = send_json(&app, "POST", "/graph/components", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let ids: std::collections::BTreeSet<i64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[1].as_i64().unwrap())
        .collect();
    assert_eq!(ids.len(), 2);
}

#[tokio::test]
async fn pipeline_lifecycle() {
    let (_d, st) = demo_state();
    let app = router(st);
    let body = json!({ "ml_config": ml_config("SELECT trip_id FROM trips WHERE fare &lt; 0"), "db_config": DB });
    let (s, v) = send_json(&app, "POST", "/pipelines", Some(body)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = v["id"].as_str().unwrap().to_string();

    let done = wait_terminal(&app, &id).await;
    assert_eq!(done["status"], "Succeeded");
    assert_eq!(done["result"]["branches_run"], json!(["Relational", "ML"]));
    assert_eq!(done["result"]["row_count"], 400);
    assert_eq!(done["result"]["rows"].as_array().unwrap().len(), 400);
    assert_eq!(done["result"]["model"]["algorithm"], "KMeans");
    assert!(done["started_at"].as_u64().unwrap() >= done["submitted_at"].as_u64().unwrap());

    let (s, v) = send_json(&app, "GET", &format!("/pipelines/{id}?page=1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 0);

    let (s, csv) = send(&app, "GET", &format!("/pipelines/{id}/result.csv"), None).await;
    assert_eq!(s, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("trip_id,distance_km,fare,cluster\r\n"));
    assert_eq!(csv.lines().count(), 401);

    // cancelling a finished job changes nothing
    let (s, v) = send_json(&app, "POST", &format!("/pipelines/{id}/cancel"), None).await;
    assert_eq!(
        (s, v["status"].as_str().unwrap()),
        (StatusCode::OK, "Succeeded")
    );
}

#[tokio::test]
async fn result_pages_hold_at_most_page_size_rows() {
    let (_d, mut st) = demo_state();
    st.page_size = 150;
    let app = router(st);
    let body = json!({ "ml_config": ml_config("SELECT trip_id FROM trips WHERE fare &lt; 0"), "db_config": DB });
    let (_, v) = send_json(&app, "POST", "/pipelines", Some(body)).await;
    let id = v["id"].as_str().unwrap().to_string();
    wait_terminal(&app, &id).await;
    let mut seen = 0;
    for page in 0..4 {
        let (_, v) = send_json(&app, "GET", &format!("/pipelines/{id}?page={page}"), None).await;
        assert_eq!(v["result"]["row_count"], 400);
        assert_eq!(v["result"]["page_size"], 150);
        let rows = v["result"]["rows"].as_array().unwrap();
        if let Some(first) = rows.first() {
            assert_eq!(first[0], json!(page * 150 + 1));
        }
        seen += rows.len();
    }
    assert_eq!(seen, 400);
}

#[tokio::test]
async fn config_errors_are_synchronous() {
    let (_d, st) = demo_state();
    let app = router(st);
    let broken = ml_config("x").replace(
        "<algorithm>KMeans</algorithm>",
        "<algorithm>Forest</algorithm>",
    );
    let (s, v) = send_json(
        &app,
        "POST",
        "/pipelines",
        Some(json!({"ml_config": broken, "db_config": DB})),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "config_error")
    );
    assert!(v["message"].as_str().unwrap().contains("Forest"), "{v}");

    let (s, v) = send_json(
        &app,
        "POST",
        "/pipelines",
        Some(json!({"ml_config": "<configuration>", "db_config": DB})),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "config_error")
    );
    assert!(v["message"].as_str().unwrap().contains("1:"), "{v}");

    let db = "<database><url>postgres://h/db</url></database>";
    let (s, v) = send_json(
        &app,
        "POST",
        "/pipelines",
        Some(json!({"ml_config": ml_config("x"), "db_config": db})),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::BAD_REQUEST, "config_error")
    );
}

#[tokio::test]
async fn failed_pipeline_reports_error_and_no_csv() {
    let (_d, st) = demo_state();
    let app = router(st);
    let body = json!({ "ml_config": ml_config("SELECT * FROM missing_table"), "db_config": DB });
    let (_, v) = send_json(&app, "POST", "/pipelines", Some(body)).await;
    let id = v["id"].as_str().unwrap().to_string();
    let done = wait_terminal(&app, &id).await;
    assert_eq!(done["status"], "Failed");
    assert_eq!(done["error"]["code"], "pipeline_error");
    assert_eq!(done["result"], Value::Null);
    let (s, v) = send_json(&app, "GET", &format!("/pipelines/{id}/result.csv"), None).await;
    assert_eq!(
        (s, v["code"].as_str().unwrap()),
        (StatusCode::CONFLICT, "not_ready")
    );
}
