//! Convex aggregation of a matched token group into a single token.
//!
//! Every scheme produces `y = Σ α_i x_i` with `Σ α_i = 1` and gives the
//! output the summed size of its inputs, so sizes stay a census of the
//! original tokens no matter how many folds happen.

use serde::{Deserialize, Serialize};

use crate::error::{FoldError, Result};
use crate::linalg::{l2_norm, DEGENERATE_NORM};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationScheme {
    /// Size-weighted mean.
    #[default]
    Average,
    /// Weights proportional to `size_i · ‖x_i‖₂`.
    WeightedNorm,
    /// Keep the member with the largest `size_i · ‖x_i‖₂`.
    Drop,
}

impl AggregationScheme {
    pub const ALL: [AggregationScheme; 3] = [
        AggregationScheme::Average,
        AggregationScheme::WeightedNorm,
        AggregationScheme::Drop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationScheme::Average => "avg",
            AggregationScheme::WeightedNorm => "weighted",
            AggregationScheme::Drop => "drop",
        }
    }
}

impl std::str::FromStr for AggregationScheme {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(AggregationScheme::Average),
            "weighted" => Ok(AggregationScheme::WeightedNorm),
            "drop" => Ok(AggregationScheme::Drop),
            other => Err(FoldError::argument(format!(
                "unknown aggregation scheme {other:?}"
            ))),
        }
    }
}

/// Aggregates `(token, size)` pairs. Ties under `Drop` go to the earliest
/// member of the group.
pub fn aggregate(group: &[(&[f64], u64)], scheme: AggregationScheme) -> Result<(Vec<f64>, u64)> {
    let (first, _) = group
        .first()
        .ok_or_else(|| FoldError::argument("cannot aggregate an empty group"))?;
    let d = first.len();
    if let Some((x, _)) = group.iter().find(|(x, _)| x.len() != d) {
        return Err(FoldError::shape(format!(
            "group mixes dims {d} and {}",
            x.len()
        )));
    }
    if group.iter().any(|(_, s)| *s == 0) {
        return Err(FoldError::argument("group member has size 0"));
    }
    let total_size: u64 = group.iter().map(|(_, s)| s).sum();
    if group.len() == 1 {
        return Ok((first.to_vec(), total_size));
    }

    let token = match scheme {
        AggregationScheme::Average => weighted_mean(group, |(_, s)| *s as f64),
        AggregationScheme::WeightedNorm => {
            let norms: Vec<f64> = group.iter().map(|(x, _)| l2_norm(x)).collect();
            if norms.iter().all(|n| *n < DEGENERATE_NORM) {
                weighted_mean(group, |(_, s)| *s as f64)
            } else {
                let mut it = norms.iter();
                weighted_mean(group, |(_, s)| *s as f64 * it.next().unwrap())
            }
        }
        AggregationScheme::Drop => {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (i, (x, s)) in group.iter().enumerate() {
                let w = *s as f64 * l2_norm(x);
                if w > best.1 {
                    best = (i, w);
                }
            }
            group[best.0].0.to_vec()
        }
    };
    Ok((token, total_size))
}

/// `Σ w_i x_i / Σ w_i`; `weight` is called once per member, in order.
fn weighted_mean(
    group: &[(&[f64], u64)],
    mut weight: impl FnMut(&(&[f64], u64)) -> f64,
) -> Vec<f64> {
    let d = group[0].0.len();
    let mut acc = vec![0.0; d];
    let mut total = 0.0;
    for member in group {
        let w = weight(member);
        total += w;
        for (a, v) in acc.iter_mut().zip(member.0.iter()) {
            *a += w * v;
        }
    }
    acc.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn average_follows_size_list() {
        // x8 stands for three earlier tokens; it counts three times.
        let x8 = [3.0, -1.0];
        let x6 = [0.5, 2.0];
        let x7 = [-1.0, 4.0];
        let (y, s) =
            aggregate(&[(&x8, 3), (&x6, 1), (&x7, 1)], AggregationScheme::Average).unwrap();
        assert_eq!(s, 5);
        for k in 0..2 {
            assert_abs_diff_eq!(y[k], (3.0 * x8[k] + x6[k] + x7[k]) / 5.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weighted_norm_example() {
        let (y, s) = aggregate(
            &[(&[3.0, 0.0], 1), (&[1.0, 0.0], 1)],
            AggregationScheme::WeightedNorm,
        )
        .unwrap();
        assert_abs_diff_eq!(y[0], 2.5, epsilon = 1e-15);
        assert_eq!(y[1], 0.0);
        assert_eq!(s, 2);
    }

    #[test]
    fn weighted_norm_all_zero_falls_back_to_average() {
        let z = [0.0, 0.0];
        let (y, s) = aggregate(&[(&z, 2), (&z, 1)], AggregationScheme::WeightedNorm).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert_eq!(s, 3);
    }

    #[test]
    fn drop_keeps_heaviest() {
        let (y, s) = aggregate(
            &[(&[3.0, 0.0], 1), (&[1.0, 0.0], 1)],
            AggregationScheme::Drop,
        )
        .unwrap();
        assert_eq!(y, vec![3.0, 0.0]);
        assert_eq!(s, 2);
        // Size scales the importance.
        let (y, _) = aggregate(
            &[(&[3.0, 0.0], 1), (&[1.0, 0.0], 4)],
            AggregationScheme::Drop,
        )
        .unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
        // Tie: first member wins.
        let (y, _) = aggregate(
            &[(&[0.0, 2.0], 1), (&[2.0, 0.0], 1)],
            AggregationScheme::Drop,
        )
        .unwrap();
        assert_eq!(y, vec![0.0, 2.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            aggregate(&[], AggregationScheme::Average),
            Err(FoldError::Argument(_))
        ));
        assert!(matches!(
            aggregate(&[(&[1.0], 1), (&[1.0, 2.0], 1)], AggregationScheme::Average),
            Err(FoldError::Shape(_))
        ));
    }

    #[test]
    fn average_is_fold_order_independent() {
        let a = [1.0, 2.0, -3.0];
        let b = [0.5, -0.25, 8.0];
        let c = [-4.0, 1.5, 0.125];
        let (direct, _) =
            aggregate(&[(&a, 1), (&b, 1), (&c, 1)], AggregationScheme::Average).unwrap();
        let (ab, sab) = aggregate(&[(&a, 1), (&b, 1)], AggregationScheme::Average).unwrap();
        let (staged, s) = aggregate(&[(&c, 1), (&ab, sab)], AggregationScheme::Average).unwrap();
        assert_eq!(s, 3);
        for k in 0..3 {
            assert_abs_diff_eq!(direct[k], staged[k], epsilon = 1e-12);
        }
    }
}
