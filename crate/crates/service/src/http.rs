//! HTTP routes over [`JobService`]. Errors are `{"error": kind, "message"}`.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use judgeflow_core::backend::BackendError;
use judgeflow_core::corpus::{ArticleId, CaseDocument, LawArticle};
use judgeflow_core::metrics::MetricReport;
use judgeflow_core::prejudge::ConclusionPatch;
use judgeflow_core::retrieval::ReferentialElements;
use judgeflow_core::writer::{DocumentSource, JudgmentDocument};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::job::{Job, JobState};
use crate::service::{CreateJob, JobService, ServiceError};

const PROBE_TIMEOUT: Duration = Duration::from_secs(2);

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<judgeflow_core::Error> for ApiError {
    fn from(e: judgeflow_core::Error) -> Self {
        ApiError(ServiceError::Pipeline(e))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::InvalidRequest(e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(ServiceError::InvalidRequest(e.body_text()))
    }
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::InvalidTransition { .. }
        | ServiceError::InvalidState { .. }
        | ServiceError::Conflict { .. } => StatusCode::CONFLICT,
        ServiceError::InvalidEdit { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        ServiceError::Pipeline(p) => match p.kind() {
            "BackendUnavailable" => StatusCode::SERVICE_UNAVAILABLE,
            "InvalidBackendResponse" => StatusCode::BAD_GATEWAY,
            "MalformedDocument" | "ExtractionIncomplete" | "InvalidK" | "InvalidArticleId" => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let body = json!({ "error": e.kind(), "message": e.to_string() });
        (status_of(&e), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    Ok(payload?.0)
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    state: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceBody {
    target_stage: String,
    #[serde(default)]
    patch: Option<ConclusionPatch>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditBody {
    patch: ConclusionPatch,
    #[serde(default)]
    expected_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateJobBody {
    #[serde(default)]
    gold_text: Option<String>,
    #[serde(default)]
    gold_case_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateBody {
    generated_text: String,
    gold_text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchBody {
    fact: String,
    #[serde(default)]
    k1: Option<usize>,
    #[serde(default)]
    k2: Option<usize>,
    #[serde(default)]
    exclude: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub laws: usize,
    pub cases: usize,
    pub jobs: usize,
    pub persistent_store: bool,
    /// Backend name to `"ok"` or the probe error.
    pub backends: std::collections::BTreeMap<String, String>,
}

fn parse_state(s: &str) -> Result<JobState, ApiError> {
    JobState::parse(s)
        .ok_or_else(|| ApiError(ServiceError::InvalidRequest(format!("unknown state {s:?}"))))
}

fn parse_document(text: &str, case_id: &str) -> Result<CaseDocument, ApiError> {
    let doc = JudgmentDocument::from_text(text, DocumentSource::Generated)
        .map_err(judgeflow_core::Error::from)?;
    Ok(doc
        .to_case_document(case_id)
        .map_err(judgeflow_core::Error::from)?)
}

async fn create_job(
    State(svc): State<Arc<JobService>>,
    payload: Result<Json<CreateJob>, JsonRejection>,
) -> Result<(StatusCode, Json<Job>), ApiError> {
    let job = svc.create_job(body(payload)?)?;
    Ok((StatusCode::CREATED, Json((*job).clone())))
}

async fn list_jobs(
    State(svc): State<Arc<JobService>>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> ApiResult<Vec<Job>> {
    let state = query?.0.state.as_deref().map(parse_state).transpose()?;
    Ok(Json(
        svc.list(state).iter().map(|j| (**j).clone()).collect(),
    ))
}

async fn get_job(State(svc): State<Arc<JobService>>, Path(id): Path<String>) -> ApiResult<Job> {
    Ok(Json((*svc.get(&id)?).clone()))
}

async fn advance_job(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
    payload: Result<Json<AdvanceBody>, JsonRejection>,
) -> ApiResult<Job> {
    let req = body(payload)?;
    let target = parse_state(&req.target_stage)?;
    Ok(Json(
        (*svc.advance_job(&id, target, req.patch.as_ref()).await?).clone(),
    ))
}

async fn edit_conclusion(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
    payload: Result<Json<EditBody>, JsonRejection>,
) -> ApiResult<Job> {
    let req = body(payload)?;
    Ok(Json(
        (*svc.edit_conclusion(&id, &req.patch, req.expected_version)?).clone(),
    ))
}

async fn evaluate_job(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
    payload: Result<Json<EvaluateJobBody>, JsonRejection>,
) -> ApiResult<MetricReport> {
    let gold = match body(payload)? {
        EvaluateJobBody {
            gold_text: Some(text),
            gold_case_id: None,
        } => parse_document(&text, "gold")?,
        EvaluateJobBody {
            gold_text: None,
            gold_case_id: Some(case_id),
        } => svc
            .pipeline()
            .cases()
            .corpus()
            .get(&case_id)
            .cloned()
            .ok_or(ServiceError::NotFound(case_id))?,
        _ => {
            return Err(ApiError(ServiceError::InvalidRequest(
                "give exactly one of gold_text and gold_case_id".into(),
            )))
        }
    };
    Ok(Json(svc.evaluate_job(&id, &gold).await?))
}

async fn evaluate(
    State(svc): State<Arc<JobService>>,
    payload: Result<Json<EvaluateBody>, JsonRejection>,
) -> ApiResult<MetricReport> {
    let req = body(payload)?;
    let generated = parse_document(&req.generated_text, "generated")?;
    let gold = parse_document(&req.gold_text, "gold")?;
    Ok(Json(svc.pipeline().evaluate(&generated, &gold).await?))
}

async fn search(
    State(svc): State<Arc<JobService>>,
    payload: Result<Json<SearchBody>, JsonRejection>,
) -> ApiResult<ReferentialElements> {
    let req = body(payload)?;
    if req.fact.trim().is_empty() {
        return Err(ApiError(ServiceError::InvalidRequest(
            "fact is empty".into(),
        )));
    }
    let p = svc.pipeline();
    let s = p.settings();
    let e_ref = p
        .search_with(
            &req.fact,
            req.exclude.as_deref(),
            req.k1.unwrap_or(s.k1),
            req.k2.unwrap_or(s.k2),
        )
        .await?;
    Ok(Json(e_ref))
}

async fn get_article(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
) -> ApiResult<LawArticle> {
    let article_id: ArticleId = id.parse().map_err(judgeflow_core::Error::from)?;
    svc.pipeline()
        .laws()
        .corpus()
        .get(&article_id)
        .cloned()
        .map(Json)
        .ok_or(ApiError(ServiceError::NotFound(id)))
}

async fn get_case(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
) -> ApiResult<CaseDocument> {
    svc.pipeline()
        .cases()
        .corpus()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or(ApiError(ServiceError::NotFound(id)))
}

/// Reachability only: a backend that answers, even with an unusable reply
/// to the probe, is up.
async fn probe<T>(fut: impl std::future::Future<Output = Result<T, BackendError>>) -> String {
    match tokio::time::timeout(PROBE_TIMEOUT, fut).await {
        Ok(Ok(_) | Err(BackendError::InvalidResponse { .. })) => "ok".into(),
        Ok(Err(e)) => e.to_string(),
        Err(_) => "timed out".into(),
    }
}

async fn healthz(State(svc): State<Arc<JobService>>) -> Json<Health> {
    let p = svc.pipeline();
    let b = p.backends();
    let texts = ["ping".to_string()];
    let candidates = texts.to_vec();
    let request = p.settings().params.request("ping");
    let request = judgeflow_core::backend::GenerateRequest {
        max_new_tokens: 1,
        ..request
    };
    let (law, case, rerank, conclusion, document, similarity) = futures::join!(
        probe(b.law_embedder.embed(&texts)),
        probe(b.case_embedder.embed(&texts)),
        probe(b.reranker.score("ping", &candidates)),
        probe(b.conclusion_generator.generate(&request)),
        probe(b.document_generator.generate(&request)),
        probe(b.similarity_embedder.embed(&texts)),
    );
    let backends: std::collections::BTreeMap<String, String> = [
        ("law_embedder", law),
        ("case_embedder", case),
        ("reranker", rerank),
        ("conclusion_generator", conclusion),
        ("document_generator", document),
        ("similarity_embedder", similarity),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let status = if backends.values().all(|v| v == "ok") {
        "ok"
    } else {
        "degraded"
    };
    Json(Health {
        status: status.into(),
        laws: p.laws().corpus().len(),
        cases: p.cases().corpus().len(),
        jobs: svc.store().len(),
        persistent_store: svc.store().is_persistent(),
        backends,
    })
}

pub fn router(service: JobService) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/jobs", post(create_job).get(list_jobs))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/jobs/{id}/advance", post(advance_job))
        .route("/v1/jobs/{id}/conclusion", put(edit_conclusion))
        .route("/v1/jobs/{id}/evaluate", post(evaluate_job))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/search", post(search))
        .route("/v1/articles/{id}", get(get_article))
        .route("/v1/cases/{id}", get(get_case))
        .with_state(Arc::new(service))
}
