//! Lexical baselines: tokenization, n-gram counting, ROUGE-N, ROUGE-L and
//! sentence-level BLEU.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("token `{0}` is empty or contains whitespace")]
    InvalidToken(String),
}

/// Lowercase tokens with no whitespace and no empty entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(MetricError::InvalidToken(bad.clone()));
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> TokenSequence {
    let lower = text.to_lowercase();
    TokenSequence(
        lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

/// Multiset of contiguous `n`-token windows.
pub fn ngram_counts(
    tokens: &TokenSequence,
    n: usize,
) -> Result<HashMap<Vec<String>, usize>, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidN(n));
    }
    let mut out = HashMap::new();
    for (gram, count) in counts(tokens.tokens(), n) {
        out.insert(gram.to_vec(), count);
    }
    Ok(out)
}

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

/// Returns (clipped overlap, candidate n-gram total, reference n-gram total).
fn clipped_overlap(candidate: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let cand = counts(candidate, n);
    let refr = counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refr.get(g).copied().unwrap_or(0)))
        .sum();
    (
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricScore {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn rouge_n(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    n: usize,
) -> Result<MetricScore, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidN(n));
    }
    let (overlap, cand_total, ref_total) =
        clipped_overlap(candidate.tokens(), reference.tokens(), n);
    Ok(MetricScore::from_precision_recall(
        ratio(overlap, cand_total),
        ratio(overlap, ref_total),
    ))
}

/// Length of the longest common subsequence, two-row dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> MetricScore {
    if candidate.is_empty() || reference.is_empty() {
        return MetricScore::default();
    }
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    MetricScore::from_precision_recall(ratio(lcs, candidate.len()), ratio(lcs, reference.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Smoothing {
    /// A zero n-gram precision makes the score zero.
    #[default]
    None,
    /// Zero precisions are replaced by `epsilon`.
    Epsilon { epsilon: f64 },
}

impl Smoothing {
    pub const DEFAULT_EPSILON: f64 = 1e-9;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

/// Sentence BLEU: uniform-weight geometric mean of clipped n-gram precisions
/// for n in 1..=max_n, times the brevity penalty `min(1, exp(1 - |ref|/|cand|))`.
pub fn bleu(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    config: BleuConfig,
) -> Result<f64, MetricError> {
    if config.max_n == 0 {
        return Err(MetricError::InvalidN(0));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=config.max_n {
        let (matched, total, _) = clipped_overlap(candidate.tokens(), reference.tokens(), n);
        let p = if total == 0 || matched == 0 {
            match config.smoothing {
                Smoothing::None => return Ok(0.0),
                Smoothing::Epsilon { epsilon } => epsilon,
            }
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / config.max_n as f64).exp();
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok((bp * geo).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words.iter().copied()).unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(
            tokenize("No acute cardiopulmonary process.").tokens(),
            ["no", "acute", "cardiopulmonary", "process"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("... -- !!").is_empty());
        assert_eq!(
            tokenize("T2-weighted, 5mm").tokens(),
            ["t2", "weighted", "5mm"]
        );
    }

    #[test]
    fn token_sequence_rejects_bad_tokens() {
        assert!(TokenSequence::from_tokens(["ok", ""]).is_err());
        assert!(TokenSequence::from_tokens(["a b"]).is_err());
    }

    #[test]
    fn ngram_examples() {
        let s = seq(&["a", "b", "a"]);
        let uni = ngram_counts(&s, 1).unwrap();
        assert_eq!(uni[&vec!["a".to_string()]], 2);
        assert_eq!(uni[&vec!["b".to_string()]], 1);
        let bi = ngram_counts(&s, 2).unwrap();
        assert_eq!(bi.len(), 2);
        assert_eq!(bi[&vec!["a".to_string(), "b".to_string()]], 1);
        assert_eq!(bi[&vec!["b".to_string(), "a".to_string()]], 1);
        assert!(ngram_counts(&seq(&["a"]), 2).unwrap().is_empty());
        assert_eq!(ngram_counts(&s, 0), Err(MetricError::InvalidN(0)));
    }

    #[test]
    fn rouge_n_examples() {
        let x = seq(&["a", "b", "c"]);
        for n in 1..=3 {
            let s = rouge_n(&x, &x, n).unwrap();
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        let s = rouge_n(&x, &seq(&["d", "e"]), 1).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        // clipped overlap {a, b} = 2 of 3 on both sides
        let s = rouge_n(&x, &seq(&["a", "b", "d"]), 1).unwrap();
        assert_abs_diff_eq!(s.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.recall, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.f1, 2.0 / 3.0, epsilon = 1e-15);
        assert!(rouge_n(&x, &x, 0).is_err());
    }

    #[test]
    fn rouge_n_clips_repeated_grams() {
        let s = rouge_n(&seq(&["the", "the", "the"]), &seq(&["the", "cat"]), 1).unwrap();
        assert_abs_diff_eq!(s.precision, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.recall, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rouge_l_examples() {
        let x = seq(&["a", "b", "c", "d"]);
        assert_eq!(rouge_l(&x, &x).f1, 1.0);
        // LCS(abcd, acbd) = 3
        let s = rouge_l(&x, &seq(&["a", "c", "b", "d"]));
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        assert_eq!(rouge_l(&seq(&[]), &seq(&["a"])), MetricScore::default());
    }

    #[test]
    fn bleu_examples() {
        let x = seq(&["w", "x", "y", "z", "v"]);
        assert_eq!(bleu(&x, &x, BleuConfig::default()).unwrap(), 1.0);
        // no shared 4-gram
        let y = seq(&["w", "x", "y", "q", "z", "v"]);
        assert_eq!(bleu(&x, &y, BleuConfig::default()).unwrap(), 0.0);
        assert_eq!(bleu(&seq(&[]), &x, BleuConfig::default()).unwrap(), 0.0);
        assert!(bleu(
            &x,
            &x,
            BleuConfig {
                max_n: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn bleu_cat_sat_on_the_mat() {
        // Hand count, cand "the cat sat on the mat" vs ref "the cat sat on a mat":
        // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3, BP = 1 (equal lengths).
        // (5/6 * 3/5 * 1/2 * 1/3)^(1/4) = (1/12)^(1/4)
        let c = tokenize("the cat sat on the mat");
        let r = tokenize("the cat sat on a mat");
        let expected = (1.0f64 / 12.0).powf(0.25);
        assert_abs_diff_eq!(
            bleu(&c, &r, BleuConfig::default()).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 0.537_284_965_911_771, epsilon = 1e-15);
    }

    #[test]
    fn bleu_brevity_penalty_and_smoothing() {
        // cand is a 4-token prefix of a 6-token ref: all p_n = 1, BP = exp(1 - 6/4)
        let r = seq(&["a", "b", "c", "d", "e", "f"]);
        let c = seq(&["a", "b", "c", "d"]);
        assert_abs_diff_eq!(
            bleu(&c, &r, BleuConfig::default()).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );

        // 3 tokens: no 4-grams at all -> zero without smoothing, eps^(1/4) with it
        let short = seq(&["a", "b", "c"]);
        let cfg = BleuConfig {
            max_n: 4,
            smoothing: Smoothing::Epsilon { epsilon: 1e-8 },
        };
        assert_eq!(bleu(&short, &short, BleuConfig::default()).unwrap(), 0.0);
        assert_abs_diff_eq!(bleu(&short, &short, cfg).unwrap(), 1e-2, epsilon = 1e-12);
    }

    fn token_seq() -> impl Strategy<Value = TokenSequence> {
        proptest::collection::vec(prop_oneof!["a", "b", "c", "d"], 0..12)
            .prop_map(|v| TokenSequence::from_tokens(v).unwrap())
    }

    proptest! {
        #[test]
        fn scores_are_bounded(c in token_seq(), r in token_seq()) {
            for n in 1..=3 {
                let s = rouge_n(&c, &r, n).unwrap();
                for v in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let l = rouge_l(&c, &r);
            prop_assert!((0.0..=1.0).contains(&l.f1));
            let b = bleu(&c, &r, BleuConfig::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
        }

        #[test]
        fn rouge_is_symmetric_in_f1(c in token_seq(), r in token_seq()) {
            for n in 1..=3 {
                let x = rouge_n(&c, &r, n).unwrap();
                let y = rouge_n(&r, &c, n).unwrap();
                prop_assert_eq!(x.precision, y.recall);
                prop_assert_eq!(x.recall, y.precision);
                prop_assert_eq!(x.f1, y.f1);
            }
            let x = rouge_l(&c, &r);
            let y = rouge_l(&r, &c);
            prop_assert_eq!(x.f1, y.f1);
        }

        #[test]
        fn self_overlap_is_perfect(x in token_seq(), n in 1usize..4) {
            prop_assume!(x.len() >= n);
            prop_assert_eq!(rouge_n(&x, &x, n).unwrap().f1, 1.0);
        }
    }
}
