//! The search, pre-judge and write stages wired together, plus batch runs
//! and the `k2` sweep.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::Backends;
use crate::config::Config;
use crate::corpus::{load_case_corpus, load_law_corpus, CaseCorpus, CaseDocument, LawCorpus};
use crate::error::Error;
use crate::metrics::{aggregate, evaluate_pair, MetricReport};
use crate::prejudge::{
    build_ice_prompt, emulate_conclusion, GenerationParams, IntermediateConclusion,
};
use crate::retrieval::{
    rjer_search, CaseIndex, DenseIndex, LawIndex, ReferentialElements, DEFAULT_K1, DEFAULT_K2,
};
use crate::writer::{
    build_jus_prompt, enforce_conclusion, synthesize_document, DocumentTemplate, JudgmentDocument,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub k1: usize,
    pub k2: usize,
    pub params: GenerationParams,
    /// Rewrite generated sections that depart from the conclusion.
    pub strict: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            params: GenerationParams::default(),
            strict: false,
        }
    }
}

/// The three products of one full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub e_ref: ReferentialElements,
    pub j_pre: IntermediateConclusion,
    pub document: JudgmentDocument,
}

/// Indices, backends and settings for running the pipeline. Cheap to clone;
/// indices are shared and read-only.
#[derive(Clone)]
pub struct Pipeline {
    laws: Arc<LawIndex>,
    cases: Arc<CaseIndex>,
    backends: Backends,
    template: DocumentTemplate,
    settings: Settings,
}

impl Pipeline {
    pub fn new(
        laws: LawIndex,
        cases: CaseIndex,
        backends: Backends,
        template: DocumentTemplate,
        settings: Settings,
    ) -> Self {
        Self {
            laws: Arc::new(laws),
            cases: Arc::new(cases),
            backends,
            template,
            settings,
        }
    }

    /// Embeds both corpora with the given backends.
    pub async fn build(
        laws: LawCorpus,
        cases: CaseCorpus,
        backends: Backends,
        template: DocumentTemplate,
        settings: Settings,
    ) -> Result<Self, Error> {
        let laws = LawIndex::build(laws, backends.law_embedder.as_ref()).await?;
        let cases = CaseIndex::build(cases, backends.case_embedder.as_ref()).await?;
        Ok(Self::new(laws, cases, backends, template, settings))
    }

    /// Same indices and templates with other backends or settings.
    pub fn with_settings(&self, settings: Settings) -> Self {
        Self {
            settings,
            ..self.clone()
        }
    }

    pub fn with_backends(&self, backends: Backends) -> Self {
        Self {
            backends,
            ..self.clone()
        }
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn laws(&self) -> &LawIndex {
        &self.laws
    }

    pub fn cases(&self) -> &CaseIndex {
        &self.cases
    }

    pub fn template(&self) -> &DocumentTemplate {
        &self.template
    }

    /// Referential elements for `fact`. `exclude` names the query's own case
    /// when it belongs to the case corpus.
    pub async fn search_with(
        &self,
        fact: &str,
        exclude: Option<&str>,
        k1: usize,
        k2: usize,
    ) -> Result<ReferentialElements, Error> {
        Ok(rjer_search(
            fact,
            &self.laws,
            &self.cases,
            &self.backends,
            k1,
            k2,
            exclude,
        )
        .await?)
    }

    pub async fn search(
        &self,
        fact: &str,
        exclude: Option<&str>,
    ) -> Result<ReferentialElements, Error> {
        self.search_with(fact, exclude, self.settings.k1, self.settings.k2)
            .await
    }

    pub async fn prejudge(
        &self,
        fact: &str,
        e_ref: &ReferentialElements,
    ) -> Result<IntermediateConclusion, Error> {
        let prompt = build_ice_prompt(fact, &e_ref.e_case, &e_ref.a_ext)?;
        Ok(emulate_conclusion(
            self.backends.conclusion_generator.as_ref(),
            &prompt,
            &self.settings.params,
        )
        .await?)
    }

    pub async fn write(
        &self,
        fact: &str,
        j_pre: &IntermediateConclusion,
        precedent: &CaseDocument,
    ) -> Result<JudgmentDocument, Error> {
        let prompt = build_jus_prompt(fact, j_pre, precedent, &self.template)?;
        let doc = synthesize_document(
            self.backends.document_generator.as_ref(),
            &prompt,
            &self.settings.params,
        )
        .await?;
        Ok(if self.settings.strict {
            enforce_conclusion(&doc, j_pre)
        } else {
            doc
        })
    }

    pub async fn run(&self, fact: &str, exclude: Option<&str>) -> Result<RunOutput, Error> {
        let e_ref = self.search(fact, exclude).await?;
        let j_pre = self.prejudge(fact, &e_ref).await?;
        let document = self.write(fact, &j_pre, &e_ref.c_doc).await?;
        Ok(RunOutput {
            e_ref,
            j_pre,
            document,
        })
    }

    pub async fn evaluate(
        &self,
        generated: &CaseDocument,
        gold: &CaseDocument,
    ) -> Result<MetricReport, Error> {
        Ok(evaluate_pair(generated, gold, self.backends.similarity_embedder.as_ref()).await?)
    }

    /// Runs every gold case's fact through the pipeline (excluding the case
    /// itself from precedent retrieval) and scores the result against it.
    /// Reports keep input order; at most `jobs` cases are in flight.
    pub async fn evaluate_cases(
        &self,
        gold: &[CaseDocument],
        jobs: usize,
    ) -> Vec<Result<MetricReport, Error>> {
        stream::iter(gold)
            .map(|case| async move {
                let out = self.run(&case.fact, Some(&case.case_id)).await?;
                let generated = out.document.to_case_document(&case.case_id)?;
                self.evaluate(&generated, case).await
            })
            .buffered(jobs.max(1))
            .collect()
            .await
    }
}

/// Aggregate reports of the full pipeline for each `k2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub k1: usize,
    pub k2_values: Vec<usize>,
    pub per_k2: BTreeMap<usize, MetricReport>,
    /// `k2` values whose run aborted, with the first error.
    pub failures: BTreeMap<usize, String>,
}

/// Evaluates the pipeline over `gold` once per value in `k2_values`.
pub async fn sweep_k2(
    pipeline: &Pipeline,
    gold: &[CaseDocument],
    k2_values: &[usize],
    seed: u64,
    jobs: usize,
) -> Result<SweepResult, Error> {
    if k2_values.is_empty() || gold.is_empty() {
        return Err(crate::metrics::MetricsError::EmptyInput.into());
    }
    let mut per_k2 = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for &k2 in k2_values {
        let p = pipeline.with_settings(Settings {
            k2,
            ..*pipeline.settings()
        });
        let outcome: Result<Vec<MetricReport>, Error> =
            p.evaluate_cases(gold, jobs).await.into_iter().collect();
        match outcome.and_then(|reports| Ok(aggregate(&reports)?)) {
            Ok(report) => {
                per_k2.insert(k2, report);
            }
            Err(e) => {
                log::warn!("k2={k2} aborted: {e}");
                failures.insert(k2, format!("{}: {e}", e.kind()));
            }
        }
    }
    Ok(SweepResult {
        seed,
        k1: pipeline.settings().k1,
        k2_values: k2_values.to_vec(),
        per_k2,
        failures,
    })
}

/// Persisted embeddings of both corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexFile {
    pub fingerprint: String,
    pub laws: DenseIndex,
    pub cases: DenseIndex,
}

pub fn settings_from_config(config: &Config) -> Settings {
    Settings {
        k1: config.retrieval.k1,
        k2: config.retrieval.k2,
        params: config.generation,
        strict: config.writer.strict,
    }
}

/// Loads the ingested corpora from the data directory.
pub fn load_corpora(config: &Config) -> Result<(LawCorpus, CaseCorpus), Error> {
    let (laws, cases) = (config.laws_path(), config.cases_path());
    for p in [&laws, &cases] {
        if !p.exists() {
            return Err(Error::MissingCorpus(p.clone()));
        }
    }
    Ok((load_law_corpus(&laws)?, load_case_corpus(&cases)?))
}

fn read_index(path: &Path, fingerprint: &str) -> Option<IndexFile> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str::<IndexFile>(&text) {
        Ok(f) if f.fingerprint == fingerprint => Some(f),
        Ok(_) => {
            log::warn!(
                "{} was built with other embedders; re-embedding",
                path.display()
            );
            None
        }
        Err(e) => {
            log::warn!("ignoring unreadable index {}: {e}", path.display());
            None
        }
    }
}

/// A pipeline over the ingested corpora, reusing the persisted index when it
/// matches the configured embedders.
pub async fn load_pipeline(config: &Config, settings: Settings) -> Result<Pipeline, Error> {
    let (laws, cases) = load_corpora(config)?;
    let backends = config.backends()?;
    let template = config.document_template()?;
    if let Some(file) = read_index(&config.index_path(), &config.embedder_fingerprint()) {
        if let (Ok(l), Ok(c)) = (
            LawIndex::from_parts(laws.clone(), file.laws),
            CaseIndex::from_parts(cases.clone(), file.cases),
        ) {
            return Ok(Pipeline::new(l, c, backends, template, settings));
        }
        log::warn!("persisted index does not match the corpora; re-embedding");
    }
    Pipeline::build(laws, cases, backends, template, settings).await
}
