#![allow(dead_code)]

use std::sync::Arc;

use judgeflow_core::backend::mock::{ScriptedGenerator, Unreachable};
use judgeflow_core::backend::Backends;
use judgeflow_core::corpus::{CaseCorpus, LawCorpus};
use judgeflow_core::writer::DocumentTemplate;
use judgeflow_core::{Pipeline, Settings};
use judgeflow_fixtures::Fixture;
use judgeflow_service::{JobService, JobStore};

pub const DIM: usize = 64;

pub async fn pipeline(fixture: &Fixture) -> Pipeline {
    Pipeline::build(
        LawCorpus::new(fixture.laws.clone()).unwrap(),
        CaseCorpus::new(fixture.cases.clone()).unwrap(),
        Backends::mock(DIM),
        DocumentTemplate::default(),
        Settings::default(),
    )
    .await
    .unwrap()
}

/// Pipelines sharing one index: all-mock, then one failing at each stage.
pub fn variants(p: &Pipeline) -> Vec<Pipeline> {
    let mock = Backends::mock(DIM);
    vec![
        p.clone(),
        p.with_backends(Backends {
            law_embedder: Arc::new(Unreachable),
            ..mock.clone()
        }),
        p.with_backends(Backends {
            conclusion_generator: Arc::new(ScriptedGenerator::new(["没有结论"])),
            ..mock.clone()
        }),
        p.with_backends(Backends {
            document_generator: Arc::new(Unreachable),
            ..mock
        }),
    ]
}

pub fn services(p: &Pipeline, store: Arc<JobStore>) -> Vec<JobService> {
    variants(p)
        .into_iter()
        .map(|v| JobService::new(v, store.clone()))
        .collect()
}
