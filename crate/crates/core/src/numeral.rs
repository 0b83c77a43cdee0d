//! Chinese numeral parsing and rendering.
//!
//! Judgment texts write article numbers, prison terms and fines as Chinese
//! numerals (`二百六十四`, `三年六个月`, `人民币二千元`). The parser accepts the
//! everyday digits, the financial forms (`贰`, `仟`, ...), Arabic and
//! full-width digits, and mixed forms such as `3万`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse numeral {input:?}: {reason}")]
pub struct NumeralParseError {
    pub input: String,
    pub reason: &'static str,
}

impl NumeralParseError {
    fn new(input: &str, reason: &'static str) -> Self {
        Self {
            input: input.to_string(),
            reason,
        }
    }
}

enum Token {
    Digit(u64),
    Arabic(u64),
    Zero,
    Small(u64),
    Big(u64),
}

fn classify(c: char) -> Option<Token> {
    let t = match c {
        '0'..='9' => Token::Arabic(c as u64 - '0' as u64),
        '０'..='９' => Token::Arabic(c as u64 - '０' as u64),
        '〇' | '零' => Token::Zero,
        '一' | '壹' => Token::Digit(1),
        '二' | '两' | '贰' | '貳' => Token::Digit(2),
        '三' | '叁' | '參' => Token::Digit(3),
        '四' | '肆' => Token::Digit(4),
        '五' | '伍' => Token::Digit(5),
        '六' | '陆' | '陸' => Token::Digit(6),
        '七' | '柒' => Token::Digit(7),
        '八' | '捌' => Token::Digit(8),
        '九' | '玖' => Token::Digit(9),
        '十' | '拾' => Token::Small(10),
        '百' | '佰' => Token::Small(100),
        '千' | '仟' => Token::Small(1000),
        '万' | '萬' => Token::Big(10_000),
        '亿' | '億' => Token::Big(100_000_000),
        _ => return None,
    };
    Some(t)
}

/// Characters that may appear inside a numeral. Used by the extractor's
/// patterns so the grammar and the parser cannot drift apart.
pub const NUMERAL_CHARS: &str =
    "0-9０-９〇零一二两三四五六七八九十百千万亿壹贰貳叁參肆伍陆陸柒捌玖拾佰仟萬億";

/// Parses a Chinese (or Arabic) numeral into its value.
pub fn parse_chinese_numeral(s: &str) -> Result<u64, NumeralParseError> {
    let input = s.trim();
    if input.is_empty() {
        return Err(NumeralParseError::new(s, "empty numeral"));
    }
    let tokens = input
        .chars()
        .map(|c| classify(c).ok_or_else(|| NumeralParseError::new(s, "unexpected character")))
        .collect::<Result<Vec<_>, _>>()?;

    // Pure digit strings are positional: "264", "二〇二〇".
    if tokens
        .iter()
        .all(|t| matches!(t, Token::Arabic(_) | Token::Digit(_) | Token::Zero))
    {
        if tokens.len() > 1
            && tokens
                .iter()
                .any(|t| matches!(t, Token::Digit(_) | Token::Zero))
            && tokens.iter().any(|t| matches!(t, Token::Arabic(_)))
        {
            return Err(NumeralParseError::new(s, "mixed digit systems"));
        }
        return tokens.iter().try_fold(0u64, |acc, t| {
            let d = match t {
                Token::Arabic(d) | Token::Digit(d) => *d,
                _ => 0,
            };
            acc.checked_mul(10)
                .and_then(|v| v.checked_add(d))
                .ok_or_else(|| NumeralParseError::new(s, "overflow"))
        });
    }

    let overflow = || NumeralParseError::new(s, "overflow");
    let mut total: u64 = 0;
    let mut section: u64 = 0;
    let mut pending: Option<u64> = None;
    let mut pending_arabic = false;
    let mut last_small = u64::MAX;
    let mut last_big = u64::MAX;
    let mut any_unit = false;

    for t in tokens {
        match t {
            Token::Arabic(d) => {
                pending = match (pending, pending_arabic) {
                    (None, _) => Some(d),
                    (Some(p), true) => Some(
                        p.checked_mul(10)
                            .and_then(|v| v.checked_add(d))
                            .ok_or_else(overflow)?,
                    ),
                    (Some(_), false) => {
                        return Err(NumeralParseError::new(s, "digit follows digit"))
                    }
                };
                pending_arabic = true;
            }
            Token::Digit(d) => {
                if pending.is_some() {
                    return Err(NumeralParseError::new(s, "digit follows digit"));
                }
                pending = Some(d);
                pending_arabic = false;
            }
            Token::Zero => {
                if pending.is_some() {
                    return Err(NumeralParseError::new(s, "zero follows digit"));
                }
            }
            Token::Small(unit) => {
                if unit >= last_small {
                    return Err(NumeralParseError::new(s, "units out of order"));
                }
                let mult = match pending.take() {
                    Some(d) if d < 10 => d,
                    Some(_) => return Err(NumeralParseError::new(s, "multi-digit multiplier")),
                    None if unit == 10 => 1,
                    None => return Err(NumeralParseError::new(s, "unit without multiplier")),
                };
                section += mult * unit;
                last_small = unit;
                pending_arabic = false;
                any_unit = true;
            }
            Token::Big(unit) => {
                if unit >= last_big {
                    return Err(NumeralParseError::new(s, "units out of order"));
                }
                let value = section
                    .checked_add(pending.take().unwrap_or(0))
                    .ok_or_else(overflow)?;
                if value == 0 {
                    return Err(NumeralParseError::new(s, "unit without multiplier"));
                }
                let scaled = value.checked_mul(unit).ok_or_else(overflow)?;
                total = total.checked_add(scaled).ok_or_else(overflow)?;
                section = 0;
                last_small = u64::MAX;
                last_big = unit;
                pending_arabic = false;
                any_unit = true;
            }
        }
    }
    debug_assert!(any_unit);
    total
        .checked_add(section)
        .and_then(|v| v.checked_add(pending.unwrap_or(0)))
        .ok_or_else(overflow)
}

const DIGITS: [char; 10] = ['零', '一', '二', '三', '四', '五', '六', '七', '八', '九'];

/// Renders `n` in the conventional written form: `10 → 十`, `101 → 一百零一`,
/// `2000 → 二千`, `120000 → 十二万`.
pub fn format_chinese_numeral(n: u64) -> String {
    if n == 0 {
        return DIGITS[0].to_string();
    }
    let sections = [(100_000_000u64, "亿"), (10_000, "万"), (1, "")];
    let mut out = String::new();
    let mut rest = n;
    let mut need_zero = false;
    for (scale, name) in sections {
        let part = rest / scale;
        rest %= scale;
        if part == 0 {
            if !out.is_empty() {
                need_zero = true;
            }
            continue;
        }
        // Sections above 亿 are rendered recursively.
        let body = if part >= 10_000 {
            format_chinese_numeral(part)
        } else {
            format_section(part, !out.is_empty())
        };
        if need_zero && !body.starts_with('零') {
            out.push('零');
        }
        out.push_str(&body);
        out.push_str(name);
        need_zero = false;
    }
    if let Some(stripped) = out.strip_prefix("一十") {
        out = format!("十{stripped}");
    }
    out
}

fn format_section(part: u64, has_higher: bool) -> String {
    let units = [(1000, "千"), (100, "百"), (10, "十"), (1, "")];
    let mut out = String::new();
    let mut zero = has_higher && part < 1000;
    for (scale, name) in units {
        let d = (part / scale) % 10;
        if d == 0 {
            if !out.is_empty() {
                zero = true;
            }
            continue;
        }
        if zero {
            out.push('零');
            zero = false;
        }
        out.push(DIGITS[d as usize]);
        out.push_str(name);
    }
    out
}
