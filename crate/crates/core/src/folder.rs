//! Iterative bipartite folding: removes an arbitrary number of tokens from a
//! sequence by repeating partition / match / sort / merge passes.
//!
//! A single pass can remove at most half of the reducible tokens, because
//! every removed token is an A-partition token merged into a B anchor. When
//! the requested count overflows that bound, the pass removes as many as it
//! can and the next pass works on the result, until nothing remains.
//!
//! Partitioning alternates over the reducible suffix: local position 0, 2,
//! 4, … goes to A and 1, 3, 5, … to B, so A is the larger side for odd
//! lengths. The pass output is `pinned ++ A' ++ B'`, where A' holds the
//! unmerged A tokens in their original order and B' is B in its original
//! order with each anchor replaced by the aggregate of itself and every A
//! token merged into it.

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, AggregationScheme};
use crate::error::{FoldError, Result};
use crate::linalg::Matrix;
use crate::matching::{best_matches, MatchContext, Matcher};
use crate::tokenseq::TokenSequence;

/// Bookkeeping for one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    /// Total tokens entering the pass (pinned prefix included).
    pub n_before: usize,
    /// Reducible tokens entering the pass.
    pub reducible_before: usize,
    pub r_fold: usize,
    pub r_remain_after: usize,
    /// Matches kept after sorting (always `r_fold`).
    pub match_count_kept: usize,
    /// `groups[o]` lists the input positions merged into output position `o`;
    /// the anchor comes first, then its sources in A order.
    pub groups: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub folds: Vec<FoldRecord>,
    pub total_folds: usize,
}

impl FoldTrace {
    /// For each output token, the sorted positions of the original tokens it
    /// was built from (the leaves of the merge forest).
    pub fn constituents(&self, original_len: usize) -> Vec<Vec<usize>> {
        let mut current: Vec<Vec<usize>> = (0..original_len).map(|i| vec![i]).collect();
        for fold in &self.folds {
            current = fold
                .groups
                .iter()
                .map(|g| {
                    let mut leaves: Vec<usize> =
                        g.iter().flat_map(|&i| current[i].iter().copied()).collect();
                    leaves.sort_unstable();
                    leaves
                })
                .collect();
        }
        current
    }
}

/// Result of one pass.
#[derive(Clone, Debug)]
pub struct FoldStep {
    pub sequence: TokenSequence,
    pub context: MatchContext,
    pub r_remain: usize,
    pub record: FoldRecord,
}

/// Result of a full reduction.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub sequence: TokenSequence,
    pub trace: FoldTrace,
    /// Side information carried through the merges, aligned with `sequence`.
    pub context: MatchContext,
}

/// Runs one pass removing `min(⌊n'/2⌋, r_remain)` tokens, `n'` being the
/// reducible count.
pub fn fold_once(
    seq: &TokenSequence,
    ctx: &MatchContext,
    r_remain: usize,
    matcher: Matcher,
    scheme: AggregationScheme,
) -> Result<FoldStep> {
    let n = seq.len();
    let pinned = seq.pinned_prefix();
    let reducible = seq.reducible_len();
    if r_remain == 0 {
        return Ok(FoldStep {
            sequence: seq.clone(),
            context: ctx.clone(),
            r_remain: 0,
            record: FoldRecord {
                n_before: n,
                reducible_before: reducible,
                r_fold: 0,
                r_remain_after: 0,
                match_count_kept: 0,
                groups: (0..n).map(|i| vec![i]).collect(),
            },
        });
    }
    if reducible < 2 {
        return Err(FoldError::capacity(format!(
            "cannot fold {reducible} reducible token(s) with {r_remain} still to remove"
        )));
    }
    ctx.validate_for(matcher, n)?;

    let r_fold = (reducible / 2).min(r_remain);
    let a: Vec<usize> = (pinned..n).step_by(2).collect();
    let b: Vec<usize> = (pinned + 1..n).step_by(2).collect();

    let matches = best_matches(seq.tokens(), &a, &b, matcher, ctx)?;
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&x, &y| {
        let (ex, ey) = (&matches.entries[x], &matches.entries[y]);
        ey.score
            .total_cmp(&ex.score)
            .then(ex.source.cmp(&ey.source))
            .then(ex.target.cmp(&ey.target))
    });

    let mut merged = vec![false; a.len()];
    let mut sources_of: Vec<Vec<usize>> = vec![Vec::new(); b.len()];
    for &k in &order[..r_fold] {
        let e = matches.entries[k];
        merged[e.source] = true;
        sources_of[e.target].push(e.source);
    }

    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n - r_fold);
    groups.extend((0..pinned).map(|i| vec![i]));
    groups.extend(
        a.iter()
            .zip(&merged)
            .filter(|(_, &m)| !m)
            .map(|(&row, _)| vec![row]),
    );
    for (bj, &anchor) in b.iter().enumerate() {
        let srcs = &mut sources_of[bj];
        srcs.sort_unstable();
        let mut g = Vec::with_capacity(1 + srcs.len());
        g.push(anchor);
        g.extend(srcs.iter().map(|&ai| a[ai]));
        groups.push(g);
    }

    let tokens = seq.tokens();
    let sizes = seq.sizes();
    let d = seq.dim();
    let mut data = Vec::with_capacity(groups.len() * d);
    let mut new_sizes = Vec::with_capacity(groups.len());
    for g in &groups {
        if let [single] = g.as_slice() {
            data.extend_from_slice(tokens.row(*single));
            new_sizes.push(sizes[*single]);
        } else {
            let members: Vec<(&[f64], u64)> =
                g.iter().map(|&i| (tokens.row(i), sizes[i])).collect();
            let (y, s) = aggregate(&members, scheme)?;
            data.extend(y);
            new_sizes.push(s);
        }
    }
    let out = TokenSequence::from_parts_unchecked(
        Matrix::from_raw(groups.len(), d, data),
        new_sizes,
        pinned,
    );
    let context = ctx.regroup(&groups, sizes);
    let r_remain_after = r_remain - r_fold;
    Ok(FoldStep {
        sequence: out,
        context,
        r_remain: r_remain_after,
        record: FoldRecord {
            n_before: n,
            reducible_before: reducible,
            r_fold,
            r_remain_after,
            match_count_kept: r_fold,
            groups,
        },
    })
}

/// Removes exactly `r` tokens, folding as many times as needed. At least one
/// reducible token must survive (`r ≤ n' − 1`).
pub fn folder_reduce(
    seq: &TokenSequence,
    r: usize,
    matcher: Matcher,
    scheme: AggregationScheme,
    ctx: &MatchContext,
) -> Result<FoldOutcome> {
    let reducible = seq.reducible_len();
    if r > 0 && r >= reducible {
        return Err(FoldError::capacity(format!(
            "cannot remove {r} of {reducible} reducible tokens: at least one reducible token must remain"
        )));
    }
    ctx.validate_for(matcher, seq.len())?;

    let mut current = seq.clone();
    let mut context = ctx.clone();
    let mut trace = FoldTrace::default();
    let mut r_remain = r;
    while r_remain > 0 {
        let step = fold_once(&current, &context, r_remain, matcher, scheme)?;
        current = step.sequence;
        context = step.context;
        r_remain = step.r_remain;
        trace.folds.push(step.record);
    }
    trace.total_folds = trace.folds.len();
    Ok(FoldOutcome {
        sequence: current,
        trace,
        context,
    })
}

/// Output-only variant: folds a raw token matrix with token cosine matching
/// and average merging.
pub fn simplified_reduce(tokens: &Matrix, r: usize) -> Result<Matrix> {
    let seq = TokenSequence::new(tokens.clone(), 0)?;
    let out = folder_reduce(
        &seq,
        r,
        Matcher::Token,
        AggregationScheme::Average,
        &MatchContext::new(),
    )?;
    Ok(out.sequence.into_parts().0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f64; 2]], pinned: usize) -> TokenSequence {
        TokenSequence::new(Matrix::from_rows(rows).unwrap(), pinned).unwrap()
    }

    fn spread(n: usize) -> TokenSequence {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 * 0.7;
                vec![t.cos(), t.sin(), (i % 3) as f64 - 1.0]
            })
            .collect();
        TokenSequence::new(Matrix::from_rows(&rows).unwrap(), 0).unwrap()
    }

    #[test]
    fn zero_remain_is_identity() {
        let s = spread(5);
        let step = fold_once(
            &s,
            &MatchContext::new(),
            0,
            Matcher::Token,
            AggregationScheme::Average,
        )
        .unwrap();
        assert_eq!(step.sequence, s);
        assert_eq!(step.r_remain, 0);
    }

    #[test]
    fn hand_stepped_single_fold() {
        let s = seq(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], 0);
        let step = fold_once(
            &s,
            &MatchContext::new(),
            1,
            Matcher::Token,
            AggregationScheme::Average,
        )
        .unwrap();
        let out = &step.sequence;
        assert_eq!(out.len(), 3);
        assert_eq!(out.tokens().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(out.sizes(), &[1, 2, 1]);
        assert_eq!(step.record.groups, vec![vec![2], vec![1, 0], vec![3]]);
        assert_eq!(step.r_remain, 0);
    }

    #[test]
    fn full_halving_empties_a() {
        let s = spread(8);
        let step = fold_once(
            &s,
            &MatchContext::new(),
            10,
            Matcher::Token,
            AggregationScheme::Average,
        )
        .unwrap();
        assert_eq!(step.record.r_fold, 4);
        assert_eq!(step.sequence.len(), 4);
        // Every output position is a B anchor (odd input position).
        assert!(step.record.groups.iter().all(|g| g[0] % 2 == 1));
    }

    #[test]
    fn overflow_arithmetic_eight_six() {
        let out = folder_reduce(
            &spread(8),
            6,
            Matcher::Token,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap();
        let r: Vec<usize> = out.trace.folds.iter().map(|f| f.r_fold).collect();
        assert_eq!(r, vec![4, 2]);
        assert_eq!(out.sequence.len(), 2);
        assert_eq!(out.trace.total_folds, 2);
    }

    #[test]
    fn overflow_arithmetic_seven_five() {
        let out = folder_reduce(
            &spread(7),
            5,
            Matcher::Token,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap();
        let r: Vec<usize> = out.trace.folds.iter().map(|f| f.r_fold).collect();
        assert_eq!(r, vec![3, 2]);
        assert_eq!(out.sequence.len(), 2);
    }

    #[test]
    fn zero_r_is_identity() {
        let s = spread(6);
        let out = folder_reduce(
            &s,
            0,
            Matcher::Token,
            AggregationScheme::Drop,
            &MatchContext::new(),
        )
        .unwrap();
        assert_eq!(out.sequence, s);
        assert_eq!(out.trace.total_folds, 0);
    }

    #[test]
    fn capacity_errors() {
        let s = spread(4);
        let err = folder_reduce(
            &s,
            4,
            Matcher::Token,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap_err();
        assert!(matches!(err, FoldError::Capacity(_)));
        let pinned = TokenSequence::new(s.tokens().clone(), 3).unwrap();
        let err = fold_once(
            &pinned,
            &MatchContext::new(),
            1,
            Matcher::Token,
            AggregationScheme::Average,
        )
        .unwrap_err();
        assert!(matches!(err, FoldError::Capacity(_)));
    }

    #[test]
    fn pinned_prefix_survives() {
        let s = TokenSequence::new(spread(9).tokens().clone(), 1).unwrap();
        let out = folder_reduce(
            &s,
            7,
            Matcher::Token,
            AggregationScheme::WeightedNorm,
            &MatchContext::new(),
        )
        .unwrap();
        assert_eq!(out.sequence.len(), 2);
        assert_eq!(out.sequence.tokens().row(0), s.tokens().row(0));
        assert_eq!(out.sequence.sizes()[0], 1);
    }

    #[test]
    fn turbo_and_key_need_context() {
        let s = spread(6);
        let err = folder_reduce(
            &s,
            2,
            Matcher::Turbo,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap_err();
        assert!(matches!(err, FoldError::Configuration(_)));
        let err = folder_reduce(
            &s,
            2,
            Matcher::Key,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap_err();
        assert!(matches!(err, FoldError::Configuration(_)));
    }

    #[test]
    fn context_follows_merges() {
        let s = spread(8);
        let ctx = MatchContext::new()
            .with_keys(s.tokens().clone())
            .with_importance(vec![1.0; 8], 0)
            .unwrap();
        let out = folder_reduce(&s, 5, Matcher::Turbo, AggregationScheme::Average, &ctx).unwrap();
        let imp = out.context.importance().unwrap();
        assert_eq!(imp.len(), 3);
        let total: f64 = imp.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Importance of each survivor is its constituency share.
        for (v, &size) in imp.iter().zip(out.sequence.sizes()) {
            assert!((v - size as f64 / 8.0).abs() < 1e-12);
        }
        assert_eq!(out.context.keys().unwrap(), out.sequence.tokens());
    }

    #[test]
    fn simplified_matches_general_path() {
        let s = spread(10);
        let general = folder_reduce(
            &s,
            6,
            Matcher::Token,
            AggregationScheme::Average,
            &MatchContext::new(),
        )
        .unwrap();
        assert_eq!(
            &simplified_reduce(s.tokens(), 6).unwrap(),
            general.sequence.tokens()
        );
        assert_eq!(&simplified_reduce(s.tokens(), 0).unwrap(), s.tokens());
    }
}
