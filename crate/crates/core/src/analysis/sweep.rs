//! Sweep drivers. Every cell of a sweep is an independent forward pass;
//! cells run on a scoped thread pool and results come back in input order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::emd::{emd, uniform_weights};
use super::energy::{min_tokens_many, EnergyProfile};
use crate::aggregation::AggregationScheme;
use crate::encoder::{Encoder, FoldSettings, Record, ReductionSchedule, ScheduleSpec};
use crate::error::{FoldError, Result};
use crate::linalg::Matrix;
use crate::tokenseq::TokenSequence;

/// Worker count: `FOLDKIT_THREADS` when set to a positive integer,
/// otherwise the hardware count.
pub fn sweep_threads() -> usize {
    std::env::var("FOLDKIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` in parallel. Output order matches input order; on
/// failure the error of the lowest failing index is returned.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = sweep_threads().min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                slots.lock().expect("sweep worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep worker panicked")
        .into_iter()
        .map(|s| s.expect("every sweep cell runs"))
        .collect()
}

/// Point weights for the transport distance between output sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmdWeights {
    /// Every output token weighs `1/n`.
    #[default]
    Uniform,
    /// Each token weighs its size over the total size.
    Sizes,
}

impl std::str::FromStr for EmdWeights {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(EmdWeights::Uniform),
            "sizes" => Ok(EmdWeights::Sizes),
            _ => Err(FoldError::argument(format!(
                "unknown weighting {s:?} (uniform, sizes)"
            ))),
        }
    }
}

impl EmdWeights {
    pub fn name(self) -> &'static str {
        match self {
            EmdWeights::Uniform => "uniform",
            EmdWeights::Sizes => "sizes",
        }
    }

    fn of(self, sizes: &[u64]) -> Vec<f64> {
        match self {
            EmdWeights::Uniform => uniform_weights(sizes.len()),
            EmdWeights::Sizes => {
                let total: u64 = sizes.iter().sum();
                sizes.iter().map(|&s| s as f64 / total as f64).collect()
            }
        }
    }
}

/// How much to remove in the reducing block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// `r = round(ratio · n′)`, ratio in `(0, 1)`.
    Ratio(f64),
    Count(usize),
}

impl Removal {
    pub fn resolve(self, reducible: usize) -> Result<usize> {
        match self {
            Removal::Ratio(p) if p > 0.0 && p < 1.0 => Ok((p * reducible as f64).round() as usize),
            Removal::Ratio(p) => Err(FoldError::argument(format!(
                "reduction ratio {p} outside (0, 1)"
            ))),
            Removal::Count(r) => Ok(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationPoint {
    /// 0-based block that performed the reduction.
    pub block: usize,
    pub r: usize,
    pub emd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchedulePoint {
    pub label: String,
    pub per_block_r: Vec<usize>,
    pub emd: f64,
}

/// Holds the unreduced forward so each sweep cell only pays for its own
/// reduced pass.
pub struct PropagationProbe<'a> {
    enc: &'a Encoder,
    input: TokenSequence,
    baseline: TokenSequence,
    reducible: usize,
}

impl<'a> PropagationProbe<'a> {
    pub fn new(enc: &'a Encoder, input: &TokenSequence) -> Result<Self> {
        let (baseline, _) = enc.forward_plain(input)?;
        let reducible = baseline.reducible_len();
        Ok(PropagationProbe {
            enc,
            input: input.clone(),
            baseline,
            reducible,
        })
    }

    pub fn baseline(&self) -> &TokenSequence {
        &self.baseline
    }

    /// Reducible tokens entering the first block.
    pub fn reducible(&self) -> usize {
        self.reducible
    }

    /// Transport distance between the baseline output and `out`, both
    /// without their pinned prefix.
    pub fn distance_to(&self, out: &TokenSequence, weights: EmdWeights) -> Result<f64> {
        let base_sizes = &self.baseline.sizes()[self.baseline.pinned_prefix()..];
        let out_sizes = &out.sizes()[out.pinned_prefix()..];
        let plan = emd(
            &self.baseline.reducible_tokens(),
            &out.reducible_tokens(),
            Some(&weights.of(base_sizes)),
            Some(&weights.of(out_sizes)),
        )?;
        Ok(plan.cost)
    }

    /// Distance after reducing only in `block` (0-based).
    pub fn point(
        &self,
        block: usize,
        removal: Removal,
        fold: FoldSettings,
        weights: EmdWeights,
    ) -> Result<PropagationPoint> {
        let blocks = self.enc.config().blocks;
        if block >= blocks {
            return Err(FoldError::argument(format!(
                "block {} outside 1..={blocks}",
                block + 1
            )));
        }
        let r = removal.resolve(self.reducible)?;
        if r == 0 {
            // A zero schedule reproduces the baseline bit for bit.
            return Ok(PropagationPoint { block, r, emd: 0.0 });
        }
        let out = self.run(&ReductionSchedule::single(blocks, block, r), fold)?;
        Ok(PropagationPoint {
            block,
            r,
            emd: self.distance_to(&out, weights)?,
        })
    }

    pub fn run(&self, schedule: &ReductionSchedule, fold: FoldSettings) -> Result<TokenSequence> {
        Ok(self
            .enc
            .forward_with(&self.input, schedule, fold, Record::TokensOnly)?
            .0)
    }
}

/// Distance between the unreduced output and the output with a single
/// reduction at `block` (0-based), under uniform weights.
pub fn propagation_sweep(
    enc: &Encoder,
    input: &TokenSequence,
    block: usize,
    removal: Removal,
    fold: FoldSettings,
) -> Result<f64> {
    Ok(PropagationProbe::new(enc, input)?
        .point(block, removal, fold, EmdWeights::Uniform)?
        .emd)
}

/// [`propagation_sweep`] under each aggregation scheme, in
/// [`AggregationScheme::ALL`] order.
pub fn aggregation_sweep(
    enc: &Encoder,
    input: &TokenSequence,
    block: usize,
    removal: Removal,
    fold: FoldSettings,
    weights: EmdWeights,
) -> Result<Vec<(AggregationScheme, f64)>> {
    let probe = PropagationProbe::new(enc, input)?;
    let out = parallel_map(&AggregationScheme::ALL, |&scheme| {
        probe.point(block, removal, fold.with_scheme(scheme), weights)
    })?;
    Ok(AggregationScheme::ALL
        .iter()
        .copied()
        .zip(out.into_iter().map(|p| p.emd))
        .collect())
}

/// Minimum token counts of every block's output for each threshold.
pub fn energy_sweep(
    enc: &Encoder,
    input: &TokenSequence,
    thresholds: &[f64],
) -> Result<EnergyProfile> {
    if thresholds.is_empty() {
        return Err(FoldError::argument("no energy thresholds given"));
    }
    let (last, outs) = enc.forward_plain(input)?;
    let pinned = last.pinned_prefix();
    let per_block_k = parallel_map(&outs, |m: &Matrix| {
        let idx: Vec<usize> = (pinned..m.rows()).collect();
        min_tokens_many(&m.select_rows(&idx), thresholds)
    })?;
    Ok(EnergyProfile {
        thresholds: thresholds.to_vec(),
        per_block_k,
    })
}

/// Final-output distance for each labelled schedule.
pub fn schedule_sweep(
    enc: &Encoder,
    input: &TokenSequence,
    specs: &[(String, ScheduleSpec)],
    fold: FoldSettings,
    weights: EmdWeights,
) -> Result<Vec<SchedulePoint>> {
    let probe = PropagationProbe::new(enc, input)?;
    let blocks = enc.config().blocks;
    parallel_map(specs, |(label, spec)| {
        let schedule = spec.resolve(blocks, probe.reducible())?;
        let emd = if schedule.total() == 0 {
            0.0
        } else {
            probe.distance_to(&probe.run(&schedule, fold)?, weights)?
        };
        Ok(SchedulePoint {
            label: label.clone(),
            per_block_r: schedule.per_block_r,
            emd,
        })
    })
}
