//! Reference computations written independently of the library, plus the
//! random inputs they are checked on.

use indexmap::IndexSet;
use judgeflow_core::corpus::ArticleId;
use judgeflow_core::extractor::{FineAmount, PrisonTerm};
use judgeflow_core::prejudge::{IntermediateConclusion, Provenance};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Penalty accuracy as the smaller value over the larger; equal values,
/// including two zeros, score 1.
pub fn penalty(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a.min(b) / a.max(b)
    }
}

/// Selection sort by (score desc, id asc), keeping `k`.
pub fn rank(mut items: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    while !items.is_empty() && out.len() < k {
        let mut best = 0;
        for i in 1..items.len() {
            let better = items[i].1 > items[best].1
                || (items[i].1 == items[best].1 && items[i].0 < items[best].0);
            if better {
                best = i;
            }
        }
        out.push(items.remove(best));
    }
    out
}

const DIGITS: [char; 10] = ['零', '一', '二', '三', '四', '五', '六', '七', '八', '九'];

/// Conventional reading of `n` in `0..=10000`, place by place.
pub fn reading(n: u32) -> String {
    assert!(n <= 10_000);
    match n {
        0 => return "零".into(),
        10_000 => return "一万".into(),
        _ => {}
    }
    let places = [
        (1000, Some('千')),
        (100, Some('百')),
        (10, Some('十')),
        (1, None),
    ];
    let mut out = String::new();
    let (mut started, mut gap) = (false, false);
    for (value, unit) in places {
        let d = (n / value % 10) as usize;
        if d == 0 {
            gap = started;
            continue;
        }
        if gap {
            out.push('零');
            gap = false;
        }
        // 10..=19 read 十, 十一, ...
        if !(value == 10 && d == 1 && !started) {
            out.push(DIGITS[d]);
        }
        out.extend(unit);
        started = true;
    }
    out
}

const CHARGE_CHARS: &str = "盗窃抢劫诈骗故意伤害杀人危险驾驶寻衅滋事贪污受贿走私贩卖运输制造毒品非法拘禁聚众斗殴妨害公务信用卡敲诈勒索职务侵占挪用资金";
pub const FACT_CHARS: &str = "甲乙丙丁某日时许在市区超市内窃取手机一部价值人民币元经鉴定被害人报警后民警到场将其抓获归案，。";
const LAWS: [&str; 3] = ["刑法", "刑事诉讼法", "治安管理处罚法"];

pub fn text(rng: &mut ChaCha8Rng, pool: &str, len: std::ops::RangeInclusive<usize>) -> String {
    let chars: Vec<char> = pool.chars().collect();
    let n = rng.random_range(len);
    (0..n).map(|_| *chars.choose(rng).expect("pool")).collect()
}

fn charge(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.2) {
        format!(
            "{}、{}罪",
            text(rng, CHARGE_CHARS, 1..=3),
            text(rng, CHARGE_CHARS, 1..=4)
        )
    } else {
        format!("{}罪", text(rng, CHARGE_CHARS, 1..=6))
    }
}

fn term(rng: &mut ChaCha8Rng) -> PrisonTerm {
    match rng.random_range(0..5) {
        0 => PrisonTerm::FixedTerm {
            months: rng.random_range(1..=300),
        },
        1 => PrisonTerm::Detention {
            months: rng.random_range(1..=6),
        },
        2 => PrisonTerm::Life,
        3 => PrisonTerm::Death,
        _ => PrisonTerm::None,
    }
}

fn fine(rng: &mut ChaCha8Rng) -> FineAmount {
    match rng.random_range(0..3) {
        0 => FineAmount::Amount {
            cny: rng.random_range(1..=10_000_000),
        },
        1 => FineAmount::Confiscation,
        _ => FineAmount::None,
    }
}

/// A valid element tuple: distinct charges, none of which is the tail of
/// another enumerated label, and distinct articles.
pub fn conclusion(rng: &mut ChaCha8Rng) -> IntermediateConclusion {
    loop {
        let n = rng.random_range(1..=3);
        let charges: IndexSet<String> = (0..n).map(|_| charge(rng)).collect();
        let ambiguous = charges.iter().any(|a| {
            charges
                .iter()
                .any(|b| a != b && a.ends_with(&format!("、{b}")))
        });
        if ambiguous {
            continue;
        }
        let m = rng.random_range(1..=5);
        let articles: IndexSet<ArticleId> = (0..m)
            .map(|_| {
                let law = LAWS.choose(rng).expect("laws");
                let sub = rng.random_bool(0.3).then(|| rng.random_range(1..=5));
                ArticleId::new(law, rng.random_range(1..=500), sub).expect("valid id")
            })
            .collect();
        return IntermediateConclusion {
            charges,
            articles,
            term: term(rng),
            fine: fine(rng),
            provenance: Provenance::GroundTruth,
        };
    }
}
