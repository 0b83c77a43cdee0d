//! Deterministic synthetic corpora: a statute with numbered articles and
//! template-rendered judgments with known elements.

use std::path::Path;

use indexmap::IndexSet;
use judgeflow_core::corpus::{
    save_case_corpus, save_law_corpus, ArticleId, CaseDocument, LawArticle,
};
use judgeflow_core::extractor::{FineAmount, PrisonTerm};
use judgeflow_core::prejudge::{IntermediateConclusion, Provenance};
use judgeflow_core::writer::{render_template, DocumentTemplate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAW: &str = "刑法";
pub const ARTICLE_COUNT: u32 = 120;

/// Charge, its statute article, and a phrase describing the conduct.
const OFFENCES: [(&str, u32, &str); 8] = [
    ("盗窃罪", 101, "窃取他人财物"),
    ("诈骗罪", 102, "虚构事实骗取他人财物"),
    ("故意伤害罪", 103, "持械殴打他人致轻伤"),
    ("危险驾驶罪", 104, "醉酒驾驶机动车"),
    ("抢劫罪", 105, "以暴力劫取他人财物"),
    ("寻衅滋事罪", 106, "在公共场所随意殴打他人"),
    ("非法拘禁罪", 107, "非法限制他人人身自由"),
    ("开设赌场罪", 108, "以营利为目的开设赌场"),
];

/// General-part articles cited alongside the offence article.
const GENERAL: [u32; 4] = [52, 53, 64, 67];

const SURNAMES: &str = "赵钱孙李周吴郑王冯陈褚卫蒋沈韩杨朱秦尤许何吕施张孔曹严华金魏陶姜";
const GIVEN: &str = "伟芳娜敏静丽强磊军洋勇艳杰娟涛明超秀霞平刚桂英华";
const PLACES: [&str; 6] = [
    "东城区某超市",
    "西湖路某小区",
    "南站广场",
    "北环路口",
    "新华街某酒店",
    "开发区某工地",
];

/// Articles 刑法第1条 to 第120条. Offence articles describe their conduct.
pub fn law_articles() -> Vec<LawArticle> {
    (1..=ARTICLE_COUNT)
        .map(|n| {
            let text = match OFFENCES.iter().find(|o| o.1 == n) {
                Some((charge, _, conduct)) => format!(
                    "{conduct}的，构成{charge}，处有期徒刑、拘役或者管制，并处或者单处罚金。"
                ),
                None => format!("本法第{n}条规定的一般原则适用于各类刑事案件的审理与裁判。"),
            };
            LawArticle::new(LAW, n, None, text).expect("fixture article")
        })
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, pool: &str) -> char {
    let chars: Vec<char> = pool.chars().collect();
    chars[rng.random_range(0..chars.len())]
}

/// A random conclusion together with a fact narrative consistent with it.
pub fn random_case(rng: &mut ChaCha8Rng, index: usize) -> (String, IntermediateConclusion) {
    let name = format!(
        "{}{}{}",
        pick(rng, SURNAMES),
        pick(rng, GIVEN),
        pick(rng, GIVEN)
    );
    let primary = rng.random_range(0..OFFENCES.len());
    let mut offences = vec![primary];
    if rng.random_bool(0.25) {
        offences.push((primary + 1 + rng.random_range(0..OFFENCES.len() - 1)) % OFFENCES.len());
    }
    let mut charges = IndexSet::new();
    let mut articles = IndexSet::new();
    let mut conduct = Vec::new();
    for &o in &offences {
        let (charge, article, what) = OFFENCES[o];
        charges.insert(charge.to_string());
        articles.insert(ArticleId::new(LAW, article, None).expect("fixture id"));
        conduct.push(what);
    }
    for _ in 0..rng.random_range(0..3) {
        let g = GENERAL[rng.random_range(0..GENERAL.len())];
        articles.insert(ArticleId::new(LAW, g, None).expect("fixture id"));
    }
    let term = match rng.random_range(0..10) {
        0 => PrisonTerm::Detention {
            months: rng.random_range(1..=6),
        },
        1 => PrisonTerm::Life,
        _ => PrisonTerm::FixedTerm {
            months: rng.random_range(6..=180),
        },
    };
    let fine = match rng.random_range(0..6) {
        0 => FineAmount::None,
        1 => FineAmount::Confiscation,
        _ => FineAmount::Amount {
            cny: 1000 * rng.random_range(1..=200),
        },
    };
    let amount = rng.random_range(500..50_000);
    let fact =
        format!(
        "被告人{name}于202{}年{}月{}日在{}{}，涉案金额人民币{amount}元，案发后{}。编号{index}。",
        rng.random_range(0..4),
        rng.random_range(1..=12),
        rng.random_range(1..=28),
        PLACES[rng.random_range(0..PLACES.len())],
        conduct.join("并"),
        if rng.random_bool(0.5) { "主动投案如实供述" } else { "被公安机关抓获" },
    );
    let conclusion = IntermediateConclusion {
        articles,
        charges,
        term,
        fine,
        provenance: Provenance::GroundTruth,
    };
    (fact, conclusion)
}

/// `n` gold judgments with ids `case-000`, `case-001`, ...
pub fn gold_cases(n: usize, seed: u64) -> Vec<CaseDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = DocumentTemplate::default();
    (0..n)
        .map(|i| {
            let (fact, j) = random_case(&mut rng, i);
            render_template(&fact, &j, &template)
                .expect("fixture case renders")
                .to_case_document(&format!("case-{i:03}"))
                .expect("fixture case is a valid document")
        })
        .collect()
}

/// An identical judgment under the id `{case_id}-dup`.
pub fn duplicate(case: &CaseDocument) -> CaseDocument {
    CaseDocument::new(
        format!("{}-dup", case.case_id),
        case.heading.clone(),
        case.fact.clone(),
        case.reasoning.clone(),
        case.judgment_result.clone(),
    )
    .expect("duplicate of a valid case")
}

/// The evaluation fixture: `n` gold queries and a case corpus holding the
/// queries plus, when `with_duplicates`, an exact duplicate of each.
pub struct Fixture {
    pub laws: Vec<LawArticle>,
    pub queries: Vec<CaseDocument>,
    pub cases: Vec<CaseDocument>,
}

impl Fixture {
    pub fn new(n: usize, seed: u64, with_duplicates: bool) -> Self {
        let queries = gold_cases(n, seed);
        let mut cases = queries.clone();
        if with_duplicates {
            cases.extend(queries.iter().map(duplicate));
        }
        Self {
            laws: law_articles(),
            queries,
            cases,
        }
    }

    /// Writes `laws.jsonl` and `cases.jsonl` into `dir`.
    pub fn write_sources(&self, dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let laws = dir.join("laws.jsonl");
        let cases = dir.join("cases.jsonl");
        save_law_corpus(&laws, &self.laws).expect("write laws");
        save_case_corpus(&cases, &self.cases).expect("write cases");
        (laws, cases)
    }
}
