//! The HTTP API end to end against mock backends.

mod common;

use std::sync::Arc;

use judgeflow_fixtures::Fixture;
use judgeflow_service::{router, JobService, JobStore};
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Api {
    base: String,
    client: reqwest::Client,
    fixture: Fixture,
}

impl Api {
    async fn start() -> Self {
        let fixture = Fixture::new(8, 21, true);
        let p = common::pipeline(&fixture).await;
        let svc = JobService::new(p, Arc::new(JobStore::in_memory()));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(listener, router(svc)).await.unwrap() });
        Self {
            base,
            client: reqwest::Client::new(),
            fixture,
        }
    }

    async fn send(
        &self,
        method: reqwest::Method,
        path: &str,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (
            status,
            serde_json::from_str(&text).unwrap_or(Value::String(text)),
        )
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::POST, path, Some(body)).await
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.send(reqwest::Method::GET, path, None).await
    }
}

#[tokio::test]
async fn job_lifecycle() {
    let api = Api::start().await;
    let q = &api.fixture.queries[0];
    let (s, job) = api
        .post(
            "/v1/jobs",
            json!({ "fact": q.fact, "query_case_id": q.case_id }),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(job["state"], "Created");
    let id = job["job_id"].as_str().unwrap().to_string();

    let (s, job) = api
        .post(
            &format!("/v1/jobs/{id}/advance"),
            json!({ "target_stage": "Searched" }),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(job["state"], "Searched");
    assert!(job["e_ref"].is_object() && job["j_pre"].is_null());

    let (s, job) = api
        .post(
            &format!("/v1/jobs/{id}/advance"),
            json!({ "target_stage": "Written" }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{job}");
    assert_eq!(job["state"], "Written");

    let (s, err) = api
        .post(
            &format!("/v1/jobs/{id}/advance"),
            json!({ "target_stage": "Searched" }),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "InvalidTransition");

    let (s, report) = api
        .post(
            &format!("/v1/jobs/{id}/evaluate"),
            json!({ "gold_case_id": q.case_id }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{report}");
    for field in ["prison_acc", "fine_acc"] {
        assert_eq!(report[field], 1.0);
    }
    assert_eq!(report["convicting"]["f1"], 1.0);
    let (_, again) = api
        .post(
            &format!("/v1/jobs/{id}/evaluate"),
            json!({ "gold_text": q.full_text() }),
        )
        .await;
    assert_eq!(again, report);

    let (s, listed) = api.get("/v1/jobs?state=Written").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(listed.as_array().unwrap().len(), 1);
    let (s, err) = api.get("/v1/jobs?state=Bogus").await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::BAD_REQUEST, Some("InvalidRequest"))
    );
}

#[tokio::test]
async fn review_checkpoint() {
    let api = Api::start().await;
    let q = &api.fixture.queries[1];
    let (_, job) = api
        .post("/v1/jobs", json!({ "fact": q.fact, "review_mode": true }))
        .await;
    let id = job["job_id"].as_str().unwrap().to_string();
    let (_, job) = api
        .post(
            &format!("/v1/jobs/{id}/advance"),
            json!({ "target_stage": "Written" }),
        )
        .await;
    assert_eq!(job["state"], "AwaitingReview");
    assert!(job["j_pre"].is_object());
    let version = job["version"].as_u64().unwrap();

    let path = format!("/v1/jobs/{id}/conclusion");
    let put = |body: Value| api.send(reqwest::Method::PUT, &path, Some(body));
    let (s, edited) =
        put(json!({ "patch": { "term": "有期徒刑十个月" }, "expected_version": version })).await;
    assert_eq!(s, StatusCode::OK, "{edited}");
    assert_eq!(
        edited["j_pre"]["term"],
        json!({ "kind": "FixedTerm", "months": 10 })
    );
    assert_eq!(edited["j_pre"]["provenance"], "HumanEdited");

    let (s, err) = put(json!({ "patch": { "term": 3 }, "expected_version": version })).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("Conflict"))
    );
    let (s, err) = put(json!({ "patch": { "charges": [] } })).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidEdit"))
    );
    let (s, err) = put(json!({ "patch": { "sentence": 1 } })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{err}");

    let (_, job) = api
        .post(
            &format!("/v1/jobs/{id}/advance"),
            json!({ "target_stage": "Written" }),
        )
        .await;
    assert_eq!(job["state"], "Written");
    assert!(job["document"]["judgment_result"]
        .as_str()
        .unwrap()
        .contains("有期徒刑十个月"));

    let (s, err) = put(json!({ "patch": { "term": 4 } })).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("InvalidState"))
    );
}

#[tokio::test]
async fn validation_and_lookups() {
    let api = Api::start().await;
    let (s, err) = api.post("/v1/jobs", json!({ "fact": "  " })).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::BAD_REQUEST, Some("InvalidRequest"))
    );
    let (s, _) = api.post("/v1/jobs", json!({ "no_fact": 1 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (a, _) = api.post("/v1/jobs", json!({ "fact": "甲" })).await;
    let (_, j1) = api.post("/v1/jobs", json!({ "fact": "某甲盗窃" })).await;
    let (_, j2) = api.post("/v1/jobs", json!({ "fact": "某甲盗窃" })).await;
    assert_eq!(a, StatusCode::CREATED);
    assert_ne!(j1["job_id"], j2["job_id"]);

    let (s, err) = api.get("/v1/jobs/nope").await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::NOT_FOUND, Some("NotFound"))
    );
    let id = j1["job_id"].as_str().unwrap();
    let (s, err) = api
        .post(
            &format!("/v1/jobs/{id}/evaluate"),
            json!({ "gold_case_id": "case-000" }),
        )
        .await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("InvalidState"))
    );

    let (s, art) = api.get("/v1/articles/%E5%88%91%E6%B3%95%23101").await;
    assert_eq!(s, StatusCode::OK, "{art}");
    assert_eq!(art["article_no"], 101);
    let (s, _) = api.get("/v1/articles/%E5%88%91%E6%B3%95%23999").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, case) = api.get("/v1/cases/case-003").await;
    assert_eq!(
        (s, case["case_id"].as_str()),
        (StatusCode::OK, Some("case-003"))
    );

    let q = &api.fixture.queries[2];
    let (s, e_ref) = api
        .post(
            "/v1/search",
            json!({ "fact": q.fact, "k2": 3, "exclude": q.case_id }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{e_ref}");
    assert_eq!(e_ref["c_doc"]["case_id"], format!("{}-dup", q.case_id));
    assert!(e_ref["retrieved"].as_array().unwrap().len() == 3);

    let (s, report) = api
        .post(
            "/v1/evaluate",
            json!({ "generated_text": q.full_text(), "gold_text": q.full_text() }),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report["referencing"]["f1"], 1.0);
    let (s, err) = api
        .post(
            "/v1/evaluate",
            json!({ "generated_text": "没有段落", "gold_text": q.full_text() }),
        )
        .await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("MalformedDocument"))
    );

    let (s, health) = api.get("/healthz").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["laws"], 120);
    assert_eq!(health["cases"], 16);
}
