//! Scoring functions that rank candidate merges from partition A into
//! partition B.

use serde::{Deserialize, Serialize};

use crate::error::{FoldError, Result};
use crate::linalg::{cosine_unchecked, dot, Matrix, DEGENERATE_NORM};

pub const DEFAULT_ALPHA: f64 = 5.0;

/// Which similarity drives the matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    /// Cosine similarity of the token vectors themselves.
    #[default]
    Token,
    /// Cosine similarity of head-averaged attention keys.
    Key,
    /// Token cosine minus `alpha` times the source token's importance.
    Turbo,
}

impl Matcher {
    pub fn name(self) -> &'static str {
        match self {
            Matcher::Token => "token",
            Matcher::Key => "key",
            Matcher::Turbo => "turbo",
        }
    }
}

impl std::str::FromStr for Matcher {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(Matcher::Token),
            "key" => Ok(Matcher::Key),
            "turbo" => Ok(Matcher::Turbo),
            other => Err(FoldError::argument(format!("unknown matcher {other:?}"))),
        }
    }
}

/// Side information some matchers need, aligned row-for-row with the
/// sequence being matched (pinned prefix included).
#[derive(Clone, Debug, PartialEq)]
pub struct MatchContext {
    keys: Option<Matrix>,
    importance: Option<Vec<f64>>,
    alpha: f64,
}

impl Default for MatchContext {
    fn default() -> Self {
        MatchContext {
            keys: None,
            importance: None,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl MatchContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(FoldError::argument(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_keys(mut self, keys: Matrix) -> Self {
        self.keys = Some(keys);
        self
    }

    /// Attaches per-token importance. Pinned entries are zeroed and the rest
    /// renormalised to sum to 1 (uniform if they are all zero).
    pub fn with_importance(mut self, importance: Vec<f64>, pinned_prefix: usize) -> Result<Self> {
        if importance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FoldError::argument(
                "importance must be finite and nonnegative",
            ));
        }
        if pinned_prefix > importance.len() {
            return Err(FoldError::argument(
                "pinned prefix longer than importance vector",
            ));
        }
        self.importance = Some(normalize_importance(importance, pinned_prefix));
        Ok(self)
    }

    pub fn keys(&self) -> Option<&Matrix> {
        self.keys.as_ref()
    }

    pub fn importance(&self) -> Option<&[f64]> {
        self.importance.as_deref()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Checks that the side data the matcher needs is present and sized for
    /// an `n`-token sequence.
    pub fn validate_for(&self, matcher: Matcher, n: usize) -> Result<()> {
        if let Some(k) = &self.keys {
            if k.rows() != n {
                return Err(FoldError::shape(format!(
                    "{} key rows for {n} tokens",
                    k.rows()
                )));
            }
        }
        if let Some(imp) = &self.importance {
            if imp.len() != n {
                return Err(FoldError::shape(format!(
                    "{} importance entries for {n} tokens",
                    imp.len()
                )));
            }
        }
        match matcher {
            Matcher::Key if self.keys.is_none() => Err(FoldError::configuration(
                "key matcher requires attention keys",
            )),
            Matcher::Turbo if self.importance.is_none() => Err(FoldError::configuration(
                "turbo matcher requires token importance",
            )),
            _ => Ok(()),
        }
    }

    /// Context for the sequence produced by a fold: output row `o` is the
    /// merge of input rows `groups[o]`. Keys are size-weighted averages of
    /// their group; importance is summed, so it stays a distribution.
    pub(crate) fn regroup(&self, groups: &[Vec<usize>], sizes: &[u64]) -> MatchContext {
        let keys = self.keys.as_ref().map(|k| {
            let d = k.cols();
            let mut data = Vec::with_capacity(groups.len() * d);
            for g in groups {
                if let [single] = g.as_slice() {
                    data.extend_from_slice(k.row(*single));
                    continue;
                }
                let total: u64 = g.iter().map(|&i| sizes[i]).sum();
                let mut acc = vec![0.0; d];
                for &i in g {
                    let w = sizes[i] as f64;
                    for (a, v) in acc.iter_mut().zip(k.row(i)) {
                        *a += w * v;
                    }
                }
                data.extend(acc.into_iter().map(|v| v / total as f64));
            }
            Matrix::from_raw(groups.len(), d, data)
        });
        let importance = self.importance.as_ref().map(|imp| {
            groups
                .iter()
                .map(|g| g.iter().map(|&i| imp[i]).sum())
                .collect()
        });
        MatchContext {
            keys,
            importance,
            alpha: self.alpha,
        }
    }
}

fn normalize_importance(mut imp: Vec<f64>, pinned_prefix: usize) -> Vec<f64> {
    for v in &mut imp[..pinned_prefix] {
        *v = 0.0;
    }
    let free = imp.len() - pinned_prefix;
    if free == 0 {
        return imp;
    }
    let total: f64 = imp[pinned_prefix..].iter().sum();
    if total > 0.0 {
        for v in &mut imp[pinned_prefix..] {
            *v /= total;
        }
    } else {
        for v in &mut imp[pinned_prefix..] {
            *v = 1.0 / free as f64;
        }
    }
    imp
}

/// Importance of every token as seen by the class token: the head-mean of
/// attention row 0 when a pinned prefix exists, otherwise the head-mean of
/// the column means (attention received, averaged over all queries).
/// Renormalised over the non-pinned tokens.
pub fn class_importance(attention: &[Matrix], pinned_prefix: usize) -> Result<Vec<f64>> {
    let first = attention
        .first()
        .ok_or_else(|| FoldError::argument("no attention heads given"))?;
    let n = first.cols();
    let mut imp = vec![0.0; n];
    for head in attention {
        if head.rows() != first.rows() || head.cols() != n {
            return Err(FoldError::shape("attention heads differ in shape"));
        }
        if pinned_prefix > 0 {
            for (a, v) in imp.iter_mut().zip(head.row(0)) {
                *a += v;
            }
        } else {
            for row in head.row_iter() {
                for (a, v) in imp.iter_mut().zip(row) {
                    *a += v / head.rows() as f64;
                }
            }
        }
    }
    for v in &mut imp {
        *v /= attention.len() as f64;
    }
    Ok(normalize_importance(imp, pinned_prefix))
}

pub fn score_token_cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_unchecked(a, b)
}

pub fn score_key_cosine(i: usize, j: usize, ctx: &MatchContext) -> Result<f64> {
    let keys = ctx
        .keys
        .as_ref()
        .ok_or_else(|| FoldError::configuration("key matcher requires attention keys"))?;
    if i >= keys.rows() || j >= keys.rows() {
        return Err(FoldError::argument(format!(
            "key index out of range ({i}, {j})"
        )));
    }
    Ok(cosine_unchecked(keys.row(i), keys.row(j)))
}

/// `raw_similarity − alpha · importance[a_index]`. The target index does
/// not enter the score.
pub fn score_turbo(
    a_index: usize,
    _b_index: usize,
    raw_similarity: f64,
    ctx: &MatchContext,
) -> Result<f64> {
    let imp = ctx
        .importance
        .as_ref()
        .ok_or_else(|| FoldError::configuration("turbo matcher requires token importance"))?;
    let ia = *imp
        .get(a_index)
        .ok_or_else(|| FoldError::argument(format!("importance index {a_index} out of range")))?;
    Ok(raw_similarity - ctx.alpha * ia)
}

/// One candidate merge: A-partition position, B-partition position, score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchEntry {
    pub source: usize,
    pub target: usize,
    pub score: f64,
}

/// Exactly one entry per A token, in A order.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    pub entries: Vec<MatchEntry>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// For every row index in `a`, the best-scoring row index in `b` (ties go
/// to the lowest B position). `tokens` and `ctx` are indexed by sequence
/// row; the returned entries hold positions within `a` and `b`.
pub fn best_matches(
    tokens: &Matrix,
    a: &[usize],
    b: &[usize],
    matcher: Matcher,
    ctx: &MatchContext,
) -> Result<MatchSet> {
    if b.is_empty() {
        return Err(FoldError::argument("partition B is empty"));
    }
    ctx.validate_for(matcher, tokens.rows())?;
    let metric = match matcher {
        Matcher::Key => ctx.keys.as_ref().expect("validated"),
        Matcher::Token | Matcher::Turbo => tokens,
    };
    let norms: Vec<f64> = metric.row_iter().map(|r| dot(r, r).sqrt()).collect();
    let similarity = |i: usize, j: usize| -> f64 {
        let (ni, nj) = (norms[i], norms[j]);
        if ni < DEGENERATE_NORM || nj < DEGENERATE_NORM {
            return 0.0;
        }
        (dot(metric.row(i), metric.row(j)) / (ni * nj)).clamp(-1.0, 1.0)
    };

    let mut entries = Vec::with_capacity(a.len());
    for (ai, &row_a) in a.iter().enumerate() {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (bj, &row_b) in b.iter().enumerate() {
            let s = similarity(row_a, row_b);
            if s > best.1 {
                best = (bj, s);
            }
        }
        let score = match matcher {
            // The penalty depends only on the source, so it does not change the argmax.
            Matcher::Turbo => score_turbo(row_a, b[best.0], best.1, ctx)?,
            _ => best.1,
        };
        entries.push(MatchEntry {
            source: ai,
            target: best.0,
            score,
        });
    }
    Ok(MatchSet { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn token_cosine_cases() {
        assert_abs_diff_eq!(
            score_token_cosine(&[0.3, 0.4], &[0.3, 0.4]),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(score_token_cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_abs_diff_eq!(
            score_token_cosine(&[1.0, 1.0], &[2.0, 2.0]),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn key_cosine_requires_keys() {
        let ctx = MatchContext::new();
        assert!(matches!(
            score_key_cosine(0, 1, &ctx),
            Err(FoldError::Configuration(_))
        ));
        let ctx = ctx.with_keys(m(&[[1.0, 2.0], [1.0, 2.0]]));
        assert_abs_diff_eq!(score_key_cosine(0, 1, &ctx).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn turbo_arithmetic() {
        let ctx = MatchContext::new()
            .with_importance(vec![0.1, 0.9], 0)
            .unwrap();
        assert_abs_diff_eq!(score_turbo(0, 1, 0.9, &ctx).unwrap(), 0.4, epsilon = 1e-12);
        let ctx0 = ctx.clone().with_alpha(0.0).unwrap();
        assert_eq!(score_turbo(1, 0, 0.37, &ctx0).unwrap(), 0.37);
        assert!(matches!(
            score_turbo(0, 0, 0.5, &MatchContext::new()),
            Err(FoldError::Configuration(_))
        ));
    }

    #[test]
    fn turbo_prefers_low_importance_source() {
        // Tokens 0 and 2 are equally similar to anchor 1; token 2 matters less.
        let tokens = m(&[[1.0, 0.2], [1.0, 0.0], [1.0, -0.2]]);
        let ctx = MatchContext::new()
            .with_importance(vec![0.5, 0.3, 0.2], 0)
            .unwrap();
        let set = best_matches(&tokens, &[0, 2], &[1], Matcher::Turbo, &ctx).unwrap();
        // Brute-force ordering of (raw - 5·imp).
        let raw = score_token_cosine(tokens.row(0), tokens.row(1));
        assert_abs_diff_eq!(
            raw,
            score_token_cosine(tokens.row(2), tokens.row(1)),
            epsilon = 1e-15
        );
        assert!(set.entries[1].score > set.entries[0].score);
    }

    #[test]
    fn best_matches_single_pair() {
        let tokens = m(&[[1.0, 0.0], [0.0, 1.0]]);
        let set = best_matches(&tokens, &[0], &[1], Matcher::Token, &MatchContext::new()).unwrap();
        assert_eq!(
            set.entries,
            vec![MatchEntry {
                source: 0,
                target: 0,
                score: 0.0
            }]
        );
    }

    #[test]
    fn best_matches_two_by_two() {
        let tokens = m(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.01], [0.01, 1.0]]);
        let set = best_matches(
            &tokens,
            &[0, 1],
            &[2, 3],
            Matcher::Token,
            &MatchContext::new(),
        )
        .unwrap();
        assert_eq!(set.entries[0].target, 0);
        assert_eq!(set.entries[1].target, 1);
    }

    #[test]
    fn best_matches_tie_goes_to_lowest_b() {
        let tokens = m(&[[1.0, 1.0]; 6]);
        let set = best_matches(
            &tokens,
            &[0, 2, 4],
            &[1, 3, 5],
            Matcher::Token,
            &MatchContext::new(),
        )
        .unwrap();
        assert!(set.entries.iter().all(|e| e.target == 0));
    }

    #[test]
    fn best_matches_empty_b() {
        let tokens = m(&[[1.0, 1.0]]);
        assert!(matches!(
            best_matches(&tokens, &[0], &[], Matcher::Token, &MatchContext::new()),
            Err(FoldError::Argument(_))
        ));
    }

    #[test]
    fn importance_is_renormalised_over_free_tokens() {
        let ctx = MatchContext::new()
            .with_importance(vec![5.0, 1.0, 3.0], 1)
            .unwrap();
        assert_eq!(ctx.importance().unwrap(), &[0.0, 0.25, 0.75]);
        let ctx = MatchContext::new()
            .with_importance(vec![0.0, 0.0], 0)
            .unwrap();
        assert_eq!(ctx.importance().unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn class_importance_uses_class_row() {
        let head = m(&[[0.5, 0.5], [0.9, 0.1]]);
        assert_eq!(
            class_importance(std::slice::from_ref(&head), 0).unwrap(),
            vec![0.7, 0.3]
        );
        let head3 =
            Matrix::from_rows(&[[0.2, 0.2, 0.6], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let imp = class_importance(&[head3], 1).unwrap();
        assert_abs_diff_eq!(imp[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(imp[2], 0.75, epsilon = 1e-15);
    }
}
