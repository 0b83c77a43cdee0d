//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//! Tolerances, instance counts and time budgets are pinned below.

#[path = "../../../service/tests/common/mod.rs"]
mod common;
#[path = "../../../service/tests/common/fuzz.rs"]
mod fuzz;
mod oracles;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Parser;
use indexmap::IndexSet;
use judgeflow_cli::{commands, Cli};
use judgeflow_core::backend::mock::{
    CopyPrecedentGenerator, HashingEmbedder, LexicalReranker, RecordedCall, Recording,
    TemplateFillGenerator,
};
use judgeflow_core::backend::Backends;
use judgeflow_core::corpus::{save_case_corpus, ArticleId, CaseCorpus, LawArticle, LawCorpus};
use judgeflow_core::extractor::extract_elements;
use judgeflow_core::metrics::{aggregate, penalty_score, MetricReport};
use judgeflow_core::numeral::parse_chinese_numeral;
use judgeflow_core::retrieval::loss::{info_nce_gradient, info_nce_loss, lce_loss, NegativeGroup};
use judgeflow_core::retrieval::{
    compose_external_articles, rerank, search_topk, DenseIndex, EmbeddingVector,
};
use judgeflow_core::writer::{render_template, DocumentTemplate};
use judgeflow_core::{Pipeline, Settings, SweepResult};
use judgeflow_fixtures::Fixture;
use judgeflow_service::JobStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::runtime::Runtime;

const PENALTY_TOL: f64 = 1e-12;
const LN3_TOL: f64 = 1e-12;
const SHIFT_TOL: f64 = 1e-12;
const LCE_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;
/// Relative to `max(|g|, 1)`: below unit magnitude the central-difference
/// rounding error (about 1e-10 / FD_STEP) dominates any relative measure.
const FD_REL_TOL: f64 = 1e-5;

const PENALTY_PAIRS: usize = 1_000;
const LOSS_INSTANCES: usize = 100;
const RETRIEVAL_CORPORA: usize = 50;
const DISJOINT_PAIRS: usize = 1_000;
const ROUNDTRIP_TUPLES: usize = 500;
const FIXTURE_CASES: usize = 20;
const SERVICE_OPS: usize = 10_000;
const SWEEP_VALUES: [usize; 4] = [1, 5, 10, 20];

const SEED: u64 = 20_240_601;
const MOCK_DIM: usize = 64;

type Check = fn(&Runtime) -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn penalty_criterion(_: &Runtime) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for i in 0..PENALTY_PAIRS {
        let draw = |rng: &mut ChaCha8Rng| match rng.random_range(0..10) {
            0 => 0.0,
            1 => rng.random_range(0..400) as f64,
            _ => rng.random_range(0.0..1e6),
        };
        let a = draw(&mut rng);
        let b = if i % 10 == 0 { a } else { draw(&mut rng) };
        let got = penalty_score(a, b).map_err(|e| format!("({a}, {b}): {e}"))?;
        let err = (got - oracles::penalty(a, b)).abs();
        ensure(err <= PENALTY_TOL, || format!("({a}, {b}) gave {got}"))?;
        worst = worst.max(err);
    }
    let ex = |a, b| penalty_score(a, b).map_err(|e| e.to_string());
    ensure(ex(24.0, 24.0)? == 1.0, || "(24, 24) is not 1".into())?;
    let r = ex(36.0, 24.0)?;
    ensure(
        (r - 2.0 / 3.0).abs() <= PENALTY_TOL && format!("{r:.4}") == "0.6667",
        || format!("(36, 24) gave {r}"),
    )?;
    ensure(ex(0.0, 12.0)? == 0.0, || "(0, 12) is not 0".into())?;
    Ok(format!(
        "{PENALTY_PAIRS} pairs, max error {worst:.1e}; worked examples 1 / 0.6667 / 0"
    ))
}

fn loss_criterion(_: &Runtime) -> Result<String, String> {
    let e = |e: judgeflow_core::retrieval::RetrievalError| e.to_string();
    let ln3 = info_nce_loss(0.0, &[0.0, 0.0]).map_err(e)?;
    ensure((ln3 - 3f64.ln()).abs() <= LN3_TOL, || {
        format!("uniform loss {ln3}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst_fd: f64 = 0.0;
    for _ in 0..LOSS_INSTANCES {
        let pos = rng.random_range(-20.0..20.0);
        let negs: Vec<f64> = (0..rng.random_range(1..16))
            .map(|_| rng.random_range(-20.0..20.0))
            .collect();
        let c = rng.random_range(-50.0..50.0);
        let base = info_nce_loss(pos, &negs).map_err(e)?;
        let shifted: Vec<f64> = negs.iter().map(|n| n + c).collect();
        let moved = info_nce_loss(pos + c, &shifted).map_err(e)?;
        ensure((moved - base).abs() <= SHIFT_TOL, || {
            format!("shift by {c} moved loss by {}", moved - base)
        })?;

        let ids: Vec<String> = (0..negs.len()).map(|i| format!("n{i}")).collect();
        let group = NegativeGroup::new("p", ids.clone()).map_err(e)?;
        let mut table: std::collections::HashMap<String, f64> =
            ids.into_iter().zip(negs.iter().copied()).collect();
        table.insert("p".into(), pos);
        let lce = lce_loss(&group, &table).map_err(e)?;
        ensure((lce - base).abs() <= LCE_TOL, || {
            format!("lce {lce} vs info_nce {base}")
        })?;

        let scores: Vec<f64> = (0..rng.random_range(2..12))
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let p = rng.random_range(0..scores.len());
        let loss = |s: &[f64]| {
            let negs: Vec<f64> = s
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != p)
                .map(|(_, v)| *v)
                .collect();
            info_nce_loss(s[p], &negs).expect("valid scores")
        };
        let grad = info_nce_gradient(&scores, p).map_err(e)?;
        for i in 0..scores.len() {
            let (mut up, mut down) = (scores.clone(), scores.clone());
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            let fd = (loss(&up) - loss(&down)) / (2.0 * FD_STEP);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
            ensure(rel <= FD_REL_TOL, || {
                format!("d/ds{i}: analytic {} vs numeric {fd}", grad[i])
            })?;
            worst_fd = worst_fd.max(rel);
        }
    }
    Ok(format!(
        "ln 3 exact to {:.1e}; {LOSS_INSTANCES} instances each of shift, gradient (max rel {worst_fd:.1e}) and lce",
        (ln3 - 3f64.ln()).abs()
    ))
}

fn retrieval_criterion(rt: &Runtime) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut ties = 0usize;
    for corpus in 0..RETRIEVAL_CORPORA {
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..=32);
        // Half the corpora use small integers, so scores tie and sum exactly.
        let integer = corpus % 2 == 0;
        let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|_| {
                    if integer {
                        rng.random_range(-2..=2) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let vectors: Vec<Vec<f64>> = (0..n).map(|_| vector(&mut rng)).collect();
        let query = vector(&mut rng);
        let entries = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                Ok((
                    format!("d{:03}", (i * 37) % 1000),
                    EmbeddingVector::new(v.clone())?,
                ))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e: judgeflow_core::retrieval::RetrievalError| e.to_string())?;
        let index = DenseIndex::from_vectors(entries).map_err(|e| e.to_string())?;
        let all: Vec<(String, f64)> = index
            .ids()
            .iter()
            .zip(&vectors)
            .map(|(id, v)| (id.clone(), v.iter().zip(&query).map(|(a, b)| a * b).sum()))
            .collect();
        let distinct: BTreeSet<u64> = all.iter().map(|(_, s)| s.to_bits()).collect();
        ties += usize::from(distinct.len() < all.len());
        let k = rng.random_range(1..=n + 5);
        let q = EmbeddingVector::new(query.clone()).map_err(|e| e.to_string())?;
        let got: Vec<(String, f64)> = search_topk(&index, &q, k)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|c| (c.id, c.score))
            .collect();
        ensure(got == oracles::rank(all, k), || {
            format!("corpus {corpus}: top-{k} differs from oracle")
        })?;

        // Short texts over three characters give many equal lexical scores.
        let articles: Vec<LawArticle> = (0..n)
            .map(|i| {
                LawArticle::new(
                    "刑法",
                    i as u32 + 1,
                    None,
                    oracles::text(&mut rng, "甲乙丙", 2..=5),
                )
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let fact = oracles::text(&mut rng, "甲乙丙", 4..=12);
        let k2 = rng.random_range(1..=n + 2);
        let got: Vec<(String, f64)> = rt
            .block_on(rerank(&LexicalReranker, &fact, &articles, k2))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|c| (c.id, c.score))
            .collect();
        let all: Vec<(String, f64)> = articles
            .iter()
            .map(|a| {
                (
                    a.id().to_string(),
                    LexicalReranker::score_one(&fact, &a.text),
                )
            })
            .collect();
        ensure(got == oracles::rank(all, k2), || {
            format!("corpus {corpus}: rerank top-{k2} differs from oracle")
        })?;
    }

    for pair in 0..DISJOINT_PAIRS {
        let retrieved: Vec<u32> = (0..rng.random_range(0..20))
            .map(|_| rng.random_range(1..40))
            .collect();
        let cited: IndexSet<ArticleId> = (0..rng.random_range(0..20))
            .map(|_| ArticleId::new("刑法", rng.random_range(1..40), None).expect("valid id"))
            .collect();
        let arts: Vec<LawArticle> = retrieved
            .iter()
            .map(|n| LawArticle::new("刑法", *n, None, format!("第{n}条")).expect("valid article"))
            .collect();
        let out: Vec<ArticleId> = compose_external_articles(&arts, &cited)
            .iter()
            .map(LawArticle::id)
            .collect();
        let expected: IndexSet<ArticleId> = arts
            .iter()
            .map(LawArticle::id)
            .filter(|id| !cited.contains(id))
            .collect();
        ensure(out.iter().all(|id| !cited.contains(id)), || {
            format!("pair {pair}: overlap with cited")
        })?;
        ensure(out == expected.into_iter().collect::<Vec<_>>(), || {
            format!("pair {pair}: wrong difference")
        })?;
    }
    Ok(format!(
        "{RETRIEVAL_CORPORA} corpora ({ties} with tied scores) for top-k and rerank; {DISJOINT_PAIRS} set pairs disjoint"
    ))
}

fn extraction_criterion(_: &Runtime) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let template = DocumentTemplate::default();
    for t in 0..ROUNDTRIP_TUPLES {
        let j = oracles::conclusion(&mut rng);
        let fact = oracles::text(&mut rng, oracles::FACT_CHARS, 4..=60);
        let doc = render_template(&fact, &j, &template)
            .map_err(|e| format!("tuple {t}: {e}"))?
            .to_case_document("case")
            .map_err(|e| format!("tuple {t}: {e}"))?;
        let e = extract_elements(&doc).map_err(|e| format!("tuple {t}: {e}"))?;
        let ordered = |a: &IndexSet<String>, b: &IndexSet<String>| a.iter().eq(b.iter());
        let same = e.fact == fact
            && ordered(&e.charges, &j.charges)
            && e.articles.iter().eq(j.articles.iter())
            && e.term == j.term
            && e.fine == j.fine;
        ensure(same, || {
            format!("tuple {t}: rendered {j:?}, extracted {e:?}")
        })?;
    }
    for n in 0..=10_000u32 {
        let text = oracles::reading(n);
        let got = parse_chinese_numeral(&text).map_err(|e| format!("{text}: {e}"))?;
        ensure(got == u64::from(n), || {
            format!("{text} parsed as {got}, expected {n}")
        })?;
    }
    Ok(format!(
        "{ROUNDTRIP_TUPLES} tuples field-exact; numerals 0..=10000 agree with the table"
    ))
}

async fn fixture_pipeline(
    fixture: &Fixture,
    backends: Backends,
    settings: Settings,
) -> Result<Pipeline, String> {
    Pipeline::build(
        LawCorpus::new(fixture.laws.clone()).map_err(|e| e.to_string())?,
        CaseCorpus::new(fixture.cases.clone()).map_err(|e| e.to_string())?,
        backends,
        DocumentTemplate::default(),
        settings,
    )
    .await
    .map_err(|e| e.to_string())
}

async fn fixture_aggregate(with_duplicates: bool) -> Result<MetricReport, String> {
    let fixture = Fixture::new(FIXTURE_CASES, SEED, with_duplicates);
    let p = fixture_pipeline(&fixture, Backends::mock(MOCK_DIM), Settings::default()).await?;
    let reports = p
        .evaluate_cases(&fixture.queries, 4)
        .await
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    aggregate(&reports).map_err(|e| e.to_string())
}

fn pipeline_criterion(rt: &Runtime) -> Result<String, String> {
    let with = rt.block_on(fixture_aggregate(true))?;
    let perfect = [
        ("convicting F1", with.convicting.f1),
        ("referencing F1", with.referencing.f1),
        ("prison_acc", with.prison_acc),
        ("fine_acc", with.fine_acc),
    ];
    for (name, v) in perfect {
        ensure(v == 1.0, || format!("{name} = {v} with duplicates"))?;
    }
    let without = rt.block_on(fixture_aggregate(false))?;
    ensure(without.prison_acc < with.prison_acc, || {
        format!(
            "prison_acc without duplicates {} is not below {}",
            without.prison_acc, with.prison_acc
        )
    })?;
    Ok(format!(
        "{FIXTURE_CASES} cases all 1.0 with duplicates; without: prison_acc {:.4}, fine_acc {:.4}, convicting F1 {:.4}",
        without.prison_acc, without.fine_acc, without.convicting.f1
    ))
}

fn defaults_criterion(rt: &Runtime) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config_path = dir.path().join("judgeflow.toml");
    std::fs::write(&config_path, "[corpus]\ndata_dir = \"data\"\n").map_err(|e| e.to_string())?;
    let config_arg = config_path.to_string_lossy().into_owned();
    let cli = Cli::try_parse_from([
        "judgeflow",
        "--config",
        &config_arg,
        "run",
        "--fact-file",
        "fact.txt",
    ])
    .map_err(|e| e.to_string())?;
    let config = cli.global.load_config().map_err(|e| e.to_string())?;
    let settings = cli.global.settings(&config);

    let fixture = Fixture::new(FIXTURE_CASES, SEED, true);
    let reranker = Recording::new(LexicalReranker);
    let conclusion = Recording::new(CopyPrecedentGenerator);
    let document = Recording::new(TemplateFillGenerator::default());
    let embedder = Arc::new(HashingEmbedder::new(MOCK_DIM));
    let backends = Backends {
        law_embedder: embedder.clone(),
        case_embedder: embedder.clone(),
        reranker: Arc::new(reranker.clone()),
        conclusion_generator: Arc::new(conclusion.clone()),
        document_generator: Arc::new(document.clone()),
        similarity_embedder: embedder,
    };
    let q = &fixture.queries[0];
    let record = rt.block_on(async {
        let p = fixture_pipeline(&fixture, backends, settings).await?;
        commands::execute(
            &p,
            &q.case_id,
            &q.fact,
            Some(&q.case_id),
            cli.global.last_stage(),
            cli.global.seed,
        )
        .await
        .map_err(|e| e.to_string())
    })?;

    let scored: Vec<usize> = reranker
        .calls()
        .into_iter()
        .filter_map(|c| match c {
            RecordedCall::Score { candidates, .. } => Some(candidates),
            _ => None,
        })
        .collect();
    ensure(fixture.laws.len() > 100, || {
        "law corpus too small to observe k1".into()
    })?;
    ensure(scored == [100], || {
        format!("reranker saw candidate counts {scored:?}, expected [100]")
    })?;
    let k2 = record.e_ref.retrieved.len();
    ensure(k2 == 10, || format!("{k2} articles kept after reranking"))?;
    let requests: Vec<_> = conclusion
        .generate_requests()
        .into_iter()
        .chain(document.generate_requests())
        .collect();
    ensure(requests.len() == 2, || {
        format!("{} generation requests", requests.len())
    })?;
    for r in &requests {
        ensure(
            r.temperature == 0.1 && r.top_k == 1 && r.max_new_tokens == 3000,
            || {
                format!(
                    "request params {} / {} / {}",
                    r.temperature, r.top_k, r.max_new_tokens
                )
            },
        )?;
    }
    ensure(cli.global.seed == 42, || {
        format!("default seed {}", cli.global.seed)
    })?;
    Ok("k1=100, k2=10, temperature 0.1, top_k 1, max_new_tokens 3000 in recorded requests".into())
}

fn run_cli(rt: &Runtime, args: &[&str]) -> Result<Vec<u8>, String> {
    let cli = Cli::try_parse_from(std::iter::once("judgeflow").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    rt.block_on(judgeflow_cli::run(cli, &mut out))
        .map_err(|e| format!("{args:?}: {e}"))?;
    Ok(out)
}

fn sweep_criterion(rt: &Runtime) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let fixture = Fixture::new(FIXTURE_CASES, SEED, true);
    std::fs::create_dir(root.join("src")).map_err(|e| e.to_string())?;
    fixture.write_sources(&root.join("src"));
    save_case_corpus(root.join("queries.jsonl"), &fixture.queries).map_err(|e| e.to_string())?;
    let toml = format!(
        "[corpus]\nlaws = \"src/laws.jsonl\"\ncases = \"src/cases.jsonl\"\ndata_dir = \"data\"\n\n[backends]\nmock_dim = {MOCK_DIM}\n"
    );
    std::fs::write(root.join("judgeflow.toml"), toml).map_err(|e| e.to_string())?;
    let path = |p: &str| root.join(p).to_string_lossy().into_owned();
    let config = path("judgeflow.toml");
    run_cli(rt, &["--config", &config, "ingest"])?;
    let values = SWEEP_VALUES.map(|v| v.to_string()).join(",");
    let mut outputs = Vec::new();
    for name in ["sweep-a.json", "sweep-b.json"] {
        let out = path(name);
        run_cli(
            rt,
            &[
                "--config",
                &config,
                "--seed",
                "42",
                "sweep-k2",
                "--values",
                &values,
                "--queries",
                &path("queries.jsonl"),
                "--out",
                &out,
            ],
        )?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || {
        "repeat sweep output differs".into()
    })?;
    let result: SweepResult = serde_json::from_slice(&outputs[0]).map_err(|e| e.to_string())?;
    let keys: Vec<usize> = result.per_k2.keys().copied().collect();
    ensure(
        keys == SWEEP_VALUES && result.k2_values == SWEEP_VALUES,
        || format!("reports for {keys:?}"),
    )?;
    ensure(result.failures.is_empty(), || {
        format!("failures {:?}", result.failures)
    })?;
    let curve: Vec<String> = result
        .per_k2
        .iter()
        .map(|(k, r)| format!("{k}:{:.3}", r.referencing.f1))
        .collect();
    Ok(format!(
        "4 aggregate reports, {} bytes identical on repeat; referencing F1 {}",
        outputs[0].len(),
        curve.join(" ")
    ))
}

fn service_criterion(rt: &Runtime) -> Result<String, String> {
    rt.block_on(async {
        let fixture = Fixture::new(10, SEED, true);
        let p = common::pipeline(&fixture).await;
        let services = common::services(&p, Arc::new(JobStore::in_memory()));
        let stats = fuzz::run_random_ops(&services, &fixture.queries, SERVICE_OPS, SEED).await?;
        ensure(stats.ops == SERVICE_OPS, || {
            format!("{} ops ran", stats.ops)
        })?;

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let before = {
            let store = Arc::new(JobStore::open(dir.path(), 3).map_err(|e| e.to_string())?);
            let services = common::services(&p, store.clone());
            fuzz::run_random_ops(&services, &fixture.queries, 500, SEED + 1).await?;
            store.list(None)
        };
        let replayed = JobStore::open(dir.path(), 3)
            .map_err(|e| e.to_string())?
            .list(None);
        ensure(!before.is_empty() && replayed == before, || {
            "replayed store differs".into()
        })?;
        Ok(format!(
            "{} ops: {} written, {} failed, {} reviewed, {} rejected; {} jobs replayed identically",
            stats.ops,
            stats.written,
            stats.failed,
            stats.reviewed,
            stats.rejected,
            before.len()
        ))
    })
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let criteria: [(&str, Option<Duration>, Check); 8] = [
        (
            "penalty_score",
            Some(Duration::from_secs(1)),
            penalty_criterion,
        ),
        ("loss_math", Some(Duration::from_secs(5)), loss_criterion),
        (
            "retrieval",
            Some(Duration::from_secs(10)),
            retrieval_criterion,
        ),
        (
            "extraction_round_trip",
            Some(Duration::from_secs(30)),
            extraction_criterion,
        ),
        (
            "end_to_end_mock_pipeline",
            Some(Duration::from_secs(60)),
            pipeline_criterion,
        ),
        ("hyperparameter_defaults", None, defaults_criterion),
        ("k2_sweep", None, sweep_criterion),
        (
            "service_state_machine",
            Some(Duration::from_secs(30)),
            service_criterion,
        ),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check(&rt);
        let elapsed = start.elapsed();
        let over = budget.filter(|b| elapsed > *b);
        let (verdict, detail) = match (&outcome, over) {
            (Ok(d), None) => ("PASS", d.clone()),
            (Ok(d), Some(b)) => ("FAIL", format!("over budget {b:?}: {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        let budget = budget.map_or("-".into(), |b| format!("{}s", b.as_secs()));
        println!(
            "{verdict} {name:<26} {:>8.3}s (budget {budget:>3})  {detail}",
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
