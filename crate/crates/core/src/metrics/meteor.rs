//! Character-level METEOR with exact matching only.
//!
//! Characters are unigrams and whitespace is ignored. The alignment is built
//! by greedy string tiling: repeatedly take the longest common run of
//! unaligned characters. This aligns every character that can be aligned and
//! keeps runs together, which is what keeps the chunk count low.

pub const ALPHA: f64 = 0.9;
pub const BETA: f64 = 3.0;
pub const GAMMA: f64 = 0.5;

fn chars(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Aligned `(candidate, reference)` index pairs, sorted by candidate index.
pub fn align(candidate: &[char], reference: &[char]) -> Vec<(usize, usize)> {
    let (n, m) = (candidate.len(), reference.len());
    let mut used_c = vec![false; n];
    let mut used_r = vec![false; m];
    let mut pairs = Vec::new();
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    loop {
        // Longest runs of unaligned matching characters, by end position.
        let mut best = 0;
        let mut ends: Vec<(usize, usize)> = Vec::new();
        prev.iter_mut().for_each(|x| *x = 0);
        for i in 0..n {
            cur[0] = 0;
            for j in 0..m {
                cur[j + 1] = if !used_c[i] && !used_r[j] && candidate[i] == reference[j] {
                    prev[j] + 1
                } else {
                    0
                };
                let len = cur[j + 1];
                if len > best {
                    best = len;
                    ends.clear();
                }
                if len == best && len > 0 {
                    ends.push((i, j));
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        if best == 0 {
            break;
        }
        for (ei, ej) in ends {
            let (si, sj) = (ei + 1 - best, ej + 1 - best);
            if (si..=ei).any(|i| used_c[i]) || (sj..=ej).any(|j| used_r[j]) {
                continue;
            }
            for k in 0..best {
                used_c[si + k] = true;
                used_r[sj + k] = true;
                pairs.push((si + k, sj + k));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Maximal runs that are contiguous in both strings.
pub fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|(k, (i, j))| *k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}

/// Score from match statistics.
pub fn meteor_from_counts(matches: usize, chunks: usize, cand_len: usize, ref_len: usize) -> f64 {
    if matches == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_len as f64;
    let r = matches as f64 / ref_len as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (chunks as f64 / matches as f64).powf(BETA);
    (fmean * (1.0 - penalty)).clamp(0.0, 1.0)
}

pub fn meteor_char(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (chars(candidate), chars(reference));
    let pairs = align(&c, &r);
    meteor_from_counts(pairs.len(), chunk_count(&pairs), c.len(), r.len())
}
