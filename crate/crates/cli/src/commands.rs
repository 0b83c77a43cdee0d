//! Command implementations. Output files are written to a temporary name
//! and renamed, so a reader never sees a partial document.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use judgeflow_core::config::Config;
use judgeflow_core::corpus::{
    corpus_stats, load_case_corpus, load_law_corpus, save_case_corpus, save_law_corpus,
};
use judgeflow_core::corpus::{CaseDocument, CorpusStats};
use judgeflow_core::extractor::extract_elements;
use judgeflow_core::metrics::{aggregate, evaluate_pair, MetricReport};
use judgeflow_core::pipeline::{load_corpora, load_pipeline, sweep_k2, IndexFile};
use judgeflow_core::prejudge::{parse_conclusion, render_conclusion, IntermediateConclusion};
use judgeflow_core::retrieval::{CaseIndex, LawIndex, ReferentialElements};
use judgeflow_core::writer::{DocumentSource, JudgmentDocument};
use judgeflow_core::{Error, Pipeline};
use serde::{Deserialize, Serialize};

use crate::{CliError, Global, Stage};

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::io(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_data().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline; map keys are ordered, so equal
/// values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn print<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    out.write_all(to_json(value).as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "fact".into(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub laws: usize,
    pub cases: usize,
    /// Cases whose elements could not be extracted; kept in the corpus.
    pub extraction_failures: Vec<String>,
    /// Over the cases whose elements were extracted.
    pub stats: CorpusStats,
}

pub fn ingest(
    config: &Config,
    laws: Option<PathBuf>,
    cases: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let laws_src = laws
        .or(config.corpus.laws.clone())
        .ok_or_else(|| CliError::Usage("no law corpus: set corpus.laws or pass --laws".into()))?;
    let cases_src = cases.or(config.corpus.cases.clone()).ok_or_else(|| {
        CliError::Usage("no case corpus: set corpus.cases or pass --cases".into())
    })?;
    let laws = load_law_corpus(&laws_src).map_err(Error::from)?;
    let cases = load_case_corpus(&cases_src).map_err(Error::from)?;

    let mut extracted = Vec::new();
    let mut documents = Vec::new();
    let mut extraction_failures = Vec::new();
    for case in cases.cases() {
        match extract_elements(case) {
            Ok(e) => {
                extracted.push(e);
                documents.push(case.clone());
            }
            Err(e) => {
                log::warn!("case {}: {e}", case.case_id);
                extraction_failures.push(case.case_id.clone());
            }
        }
    }
    let stats = corpus_stats(&documents, &extracted).map_err(Error::from)?;

    create_dir(&config.corpus.data_dir)?;
    save_law_corpus(config.laws_path(), laws.articles()).map_err(Error::from)?;
    save_case_corpus(config.cases_path(), cases.cases()).map_err(Error::from)?;
    print(
        out,
        &IngestSummary {
            laws: laws.len(),
            cases: cases.len(),
            extraction_failures,
            stats,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub laws: usize,
    pub cases: usize,
    pub dim: usize,
    pub fingerprint: String,
    pub path: PathBuf,
}

pub async fn index(config: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let (laws, cases) = load_corpora(config)?;
    let backends = config.backends()?;
    let laws = LawIndex::build(laws, backends.law_embedder.as_ref())
        .await
        .map_err(Error::from)?;
    let cases = CaseIndex::build(cases, backends.case_embedder.as_ref())
        .await
        .map_err(Error::from)?;
    let file = IndexFile {
        fingerprint: config.embedder_fingerprint(),
        laws: laws.dense().clone(),
        cases: cases.dense().clone(),
    };
    let path = config.index_path();
    let bytes = serde_json::to_vec(&file).expect("index serializes");
    write_atomic(&path, &bytes)?;
    print(
        out,
        &IndexSummary {
            laws: laws.dense().len(),
            cases: cases.dense().len(),
            dim: laws.dense().dim(),
            fingerprint: file.fingerprint,
            path,
        },
    )
}

/// What one pipeline run produced, up to the stage it stopped after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub stage: String,
    pub query: String,
    pub e_ref: ReferentialElements,
    pub j_pre: Option<IntermediateConclusion>,
    /// Canonical rendering of `j_pre`.
    pub conclusion_block: Option<String>,
    pub document: Option<JudgmentDocument>,
}

async fn pipeline(g: &Global, config: &Config) -> Result<Pipeline, CliError> {
    Ok(load_pipeline(config, g.settings(config)).await?)
}

fn fact_of(text: &str, path: &Path) -> Result<String, CliError> {
    let fact = text.trim();
    if fact.is_empty() {
        return Err(CliError::Usage(format!("{} holds no fact", path.display())));
    }
    Ok(fact.to_string())
}

/// Runs `fact` through the stages up to `stage`.
pub async fn execute(
    p: &Pipeline,
    query: &str,
    fact: &str,
    exclude: Option<&str>,
    stage: Stage,
    seed: u64,
) -> Result<RunRecord, Error> {
    let e_ref = p.search(fact, exclude).await?;
    let mut record = RunRecord {
        seed,
        k1: p.settings().k1,
        k2: p.settings().k2,
        stage: "search".into(),
        query: query.to_string(),
        e_ref,
        j_pre: None,
        conclusion_block: None,
        document: None,
    };
    if stage == Stage::Search {
        return Ok(record);
    }
    let j_pre = p.prejudge(fact, &record.e_ref).await?;
    record.stage = "prejudge".into();
    record.conclusion_block = Some(render_conclusion(&j_pre));
    if stage == Stage::Prejudge {
        record.j_pre = Some(j_pre);
        return Ok(record);
    }
    record.document = Some(p.write(fact, &j_pre, &record.e_ref.c_doc).await?);
    record.j_pre = Some(j_pre);
    record.stage = "write".into();
    Ok(record)
}

pub async fn single(
    g: &Global,
    config: &Config,
    fact_file: &Path,
    exclude: Option<&str>,
    stage: Stage,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let fact = fact_of(&read_text(fact_file)?, fact_file)?;
    let p = pipeline(g, config).await?;
    let record = execute(&p, &file_stem(fact_file), &fact, exclude, stage, g.seed).await?;
    print(out, &record)
}

fn read_conclusion(path: &Path) -> Result<IntermediateConclusion, CliError> {
    let text = read_text(path)?;
    let j = if text.trim_start().starts_with('{') {
        serde_json::from_str::<IntermediateConclusion>(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    } else {
        parse_conclusion(&text).map_err(Error::from)?
    };
    j.validate().map_err(Error::from)?;
    Ok(j)
}

pub async fn write(
    g: &Global,
    config: &Config,
    fact: &crate::FactArgs,
    conclusion: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = fact_of(&read_text(&fact.fact_file)?, &fact.fact_file)?;
    let j_pre = read_conclusion(conclusion)?;
    let p = pipeline(g, config).await?;
    let e_ref = p.search(&text, fact.exclude.as_deref()).await?;
    let document = p.write(&text, &j_pre, &e_ref.c_doc).await?;
    print(
        out,
        &RunRecord {
            seed: g.seed,
            k1: p.settings().k1,
            k2: p.settings().k2,
            stage: "write".into(),
            query: file_stem(&fact.fact_file),
            conclusion_block: Some(render_conclusion(&j_pre)),
            e_ref,
            j_pre: Some(j_pre),
            document: Some(document),
        },
    )
}

/// `{query}.json` always; `{query}.txt` once a document exists.
fn write_record(dir: &Path, record: &RunRecord) -> Result<(), CliError> {
    write_atomic(
        &dir.join(format!("{}.json", record.query)),
        to_json(record).as_bytes(),
    )?;
    if let Some(doc) = &record.document {
        write_atomic(
            &dir.join(format!("{}.txt", record.query)),
            doc.full_text.as_bytes(),
        )?;
    }
    Ok(())
}

pub async fn run_single(
    g: &Global,
    config: &Config,
    fact_file: &Path,
    exclude: Option<&str>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let fact = fact_of(&read_text(fact_file)?, fact_file)?;
    let p = pipeline(g, config).await?;
    let record = execute(
        &p,
        &file_stem(fact_file),
        &fact,
        exclude,
        g.last_stage(),
        g.seed,
    )
    .await?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_record(dir, &record)?;
    }
    print(out, &record)
}

/// A batch query: output name, fact and the case id to leave out.
struct Query {
    name: String,
    fact: String,
    exclude: Option<String>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.starts_with('.') && !name.contains(['/', '\\'])
}

fn load_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    let queries: Vec<Query> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                Ok(Query {
                    name: file_stem(f),
                    fact: fact_of(&read_text(f)?, f)?,
                    exclude: None,
                })
            })
            .collect::<Result<_, CliError>>()?
    } else {
        // Corpus members leave themselves out of precedent retrieval.
        load_case_corpus(path)
            .map_err(Error::from)?
            .cases()
            .iter()
            .map(|c| Query {
                name: c.case_id.clone(),
                fact: c.fact.clone(),
                exclude: Some(c.case_id.clone()),
            })
            .collect()
    };
    if queries.is_empty() {
        return Err(CliError::Usage(format!(
            "{} holds no queries",
            path.display()
        )));
    }
    if let Some(q) = queries.iter().find(|q| !valid_name(&q.name)) {
        return Err(CliError::Usage(format!(
            "query name {:?} is not a valid file name",
            q.name
        )));
    }
    Ok(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub query: String,
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub stage: String,
    pub queries: usize,
    pub completed: usize,
    pub failures: Vec<BatchFailure>,
}

pub async fn run_batch(
    g: &Global,
    config: &Config,
    queries: &Path,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let queries = load_queries(queries)?;
    let p = pipeline(g, config).await?;
    create_dir(dir)?;
    let stage = g.last_stage();
    let outcomes: Vec<(String, Result<(), CliError>)> = stream::iter(&queries)
        .map(|q| {
            let p = &p;
            async move {
                let outcome =
                    match execute(p, &q.name, &q.fact, q.exclude.as_deref(), stage, g.seed).await {
                        Ok(record) => write_record(dir, &record),
                        Err(e) => Err(e.into()),
                    };
                (q.name.clone(), outcome)
            }
        })
        .buffer_unordered(g.jobs())
        .collect()
        .await;
    let mut failures: Vec<(String, CliError)> = outcomes
        .into_iter()
        .filter_map(|(name, r)| r.err().map(|e| (name, e)))
        .collect();
    failures.sort_by(|a, b| a.0.cmp(&b.0));
    let summary = BatchSummary {
        seed: g.seed,
        k1: p.settings().k1,
        k2: p.settings().k2,
        stage: format!("{stage:?}").to_lowercase(),
        queries: queries.len(),
        completed: queries.len() - failures.len(),
        failures: failures
            .iter()
            .map(|(query, e)| BatchFailure {
                query: query.clone(),
                error: e.kind().into(),
                message: e.to_string(),
            })
            .collect(),
    };
    print(out, &summary)?;
    match failures.first() {
        None => Ok(()),
        Some((query, e)) => Err(CliError::Batch {
            failed: failures.len(),
            total: queries.len(),
            kind: e.kind(),
            first: format!("{query}: {e}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub seed: u64,
    pub documents: usize,
    pub per_document: BTreeMap<String, MetricReport>,
    pub aggregate: MetricReport,
}

fn txt_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .map(|p| (file_stem(&p), p))
        .collect())
}

fn read_document(path: &Path, case_id: &str) -> Result<CaseDocument, CliError> {
    let doc = JudgmentDocument::from_text(&read_text(path)?, DocumentSource::Generated)
        .map_err(Error::from)?;
    Ok(doc.to_case_document(case_id).map_err(Error::from)?)
}

/// Pairs `generated/X.txt` with `gold/X.txt`; every file must have a partner.
pub fn pair_documents(
    generated: &Path,
    gold: &Path,
) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    let gen = txt_files(generated)?;
    let mut gold = txt_files(gold)?;
    let gen_only: Vec<&str> = gen
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .map(String::as_str)
        .collect();
    let gold_only: Vec<&str> = gold
        .keys()
        .filter(|k| !gen.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !gen_only.is_empty() || !gold_only.is_empty() {
        return Err(CliError::Pairing(format!(
            "unpaired documents: generated only {gen_only:?}, gold only {gold_only:?}"
        )));
    }
    if gen.is_empty() {
        return Err(CliError::Pairing("no .txt documents to pair".into()));
    }
    Ok(gen
        .into_iter()
        .map(|(stem, g)| {
            let gold_path = gold.remove(&stem).expect("paired");
            (stem, g, gold_path)
        })
        .collect())
}

pub async fn eval(
    g: &Global,
    config: &Config,
    generated: &Path,
    gold: &Path,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let pairs = pair_documents(generated, gold)?;
    let similarity = config.backends()?.similarity_embedder;
    let reports: Vec<(String, Result<MetricReport, CliError>)> = stream::iter(&pairs)
        .map(|(stem, gen_path, gold_path)| {
            let similarity = similarity.clone();
            async move {
                let report = async {
                    let generated = read_document(gen_path, stem)?;
                    let gold = read_document(gold_path, stem)?;
                    Ok(evaluate_pair(&generated, &gold, similarity.as_ref())
                        .await
                        .map_err(Error::from)?)
                }
                .await;
                (stem.clone(), report)
            }
        })
        .buffered(g.jobs())
        .collect()
        .await;
    let mut per_document = BTreeMap::new();
    for (stem, report) in reports {
        match report {
            Ok(r) => {
                per_document.insert(stem, r);
            }
            Err(e) => {
                log::error!("{stem}: {e}");
                return Err(e);
            }
        }
    }
    let rows: Vec<MetricReport> = per_document.values().copied().collect();
    let result = EvalOutput {
        seed: g.seed,
        documents: rows.len(),
        aggregate: aggregate(&rows).map_err(Error::from)?,
        per_document,
    };
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        for (stem, report) in &result.per_document {
            write_atomic(
                &dir.join(format!("{stem}.json")),
                to_json(report).as_bytes(),
            )?;
        }
        write_atomic(
            &dir.join("aggregate.json"),
            to_json(&result.aggregate).as_bytes(),
        )?;
    }
    print(out, &result)
}

pub async fn sweep(
    g: &Global,
    config: &Config,
    values: &[u64],
    queries: Option<&Path>,
    out_file: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("--values is empty".into()));
    }
    let p = pipeline(g, config).await?;
    let gold: Vec<CaseDocument> = match queries {
        Some(path) => load_case_corpus(path)
            .map_err(Error::from)?
            .cases()
            .to_vec(),
        None => p.cases().corpus().cases().to_vec(),
    };
    let k2_values: Vec<usize> = values.iter().map(|&v| v as usize).collect();
    let result = sweep_k2(&p, &gold, &k2_values, g.seed, g.jobs()).await?;
    let text = to_json(&result);
    match out_file {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            print(
                out,
                &serde_json::json!({
                    "seed": result.seed,
                    "out": path,
                    "k2_values": result.k2_values,
                    "failures": result.failures,
                }),
            )
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub async fn serve(
    config: &Config,
    bind: Option<String>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let service = judgeflow_service::build_service(config).await?;
    let addr = bind.unwrap_or(config.service.bind.clone());
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| CliError::io(&addr, e))?;
    let local = listener.local_addr().map_err(|e| CliError::io(&addr, e))?;
    print(out, &serde_json::json!({ "listening": local.to_string() }))?;
    judgeflow_service::serve(listener, service)
        .await
        .map_err(|e| CliError::io(local.to_string(), e))
}
