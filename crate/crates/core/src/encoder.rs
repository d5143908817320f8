//! A small pre-norm transformer encoder with random, seeded weights.
//!
//! Each block computes
//!
//! ```text
//! x ← x + Attn(LN(x))
//! x ← fold(x, r_b)          (skipped when r_b = 0)
//! x ← x + W₂ · GELU(W₁ · LN(x))
//! ```
//!
//! so folding sits between the attention residual and the MLP. LayerNorm
//! has unit gain, zero shift and ε = 1e-5; linear layers carry no bias;
//! GELU is the tanh approximation.
//!
//! Weights are drawn from [`SeededRng`] in this order, every matrix
//! row-major and every entry uniform in `[−1/√dim, +1/√dim]`: for each
//! block `W_q, W_k, W_v, W_o` (`dim × dim`), `W₁` (`dim × hidden`), `W₂`
//! (`hidden × dim`); then, when enabled, the class token (`dim` values).
//! `hidden = round(dim · mlp_ratio)`.

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationScheme;
use crate::error::{FoldError, Result};
use crate::folder::{folder_reduce, FoldTrace};
use crate::linalg::{dot, matmul, softmax_in_place, Matrix};
use crate::matching::{class_importance, MatchContext, Matcher, DEFAULT_ALPHA};
use crate::rng::SeededRng;
use crate::tokenseq::TokenSequence;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub mlp_ratio: f64,
    pub seed: u64,
    pub use_class_token: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            heads: 4,
            blocks: 12,
            mlp_ratio: 4.0,
            seed: 7,
            use_class_token: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(FoldError::argument(format!(
                "dim {} is not divisible into {} heads",
                self.dim, self.heads
            )));
        }
        if self.blocks == 0 {
            return Err(FoldError::argument("encoder needs at least one block"));
        }
        if !(self.mlp_ratio.is_finite() && self.mlp_ratio > 0.0) {
            return Err(FoldError::argument(format!(
                "mlp_ratio must be positive, got {}",
                self.mlp_ratio
            )));
        }
        if self.hidden() == 0 {
            return Err(FoldError::argument("mlp hidden width rounds to zero"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn hidden(&self) -> usize {
        (self.dim as f64 * self.mlp_ratio).round() as usize
    }
}

#[derive(Clone, Debug)]
struct Block {
    w_q: Matrix,
    w_k: Matrix,
    w_v: Matrix,
    w_o: Matrix,
    w_1: Matrix,
    w_2: Matrix,
}

/// How a forward pass folds tokens when the schedule asks for it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSettings {
    pub matcher: Matcher,
    pub scheme: AggregationScheme,
    pub alpha: f64,
}

impl Default for FoldSettings {
    fn default() -> Self {
        FoldSettings {
            matcher: Matcher::Token,
            scheme: AggregationScheme::Average,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl FoldSettings {
    pub fn with_scheme(mut self, scheme: AggregationScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// What one block saw and produced.
#[derive(Clone, Debug)]
pub struct BlockActivations {
    /// Block output (after the MLP residual).
    pub tokens_out: Matrix,
    pub sizes_out: Vec<u64>,
    /// Per-head attention, `n_in × n_in`; empty when not recorded.
    pub attention: Vec<Matrix>,
    /// Head-averaged keys, `n_in × head_dim`; `None` when not recorded.
    pub keys_head_mean: Option<Matrix>,
    /// Trace of the fold applied in this block, if any.
    pub fold: Option<FoldTrace>,
}

/// How much of each block to keep in [`BlockActivations`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    Full,
    TokensOnly,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    blocks: Vec<Block>,
    class_token: Option<Vec<f64>>,
}

pub fn init_encoder(cfg: &EncoderConfig) -> Result<Encoder> {
    Encoder::new(cfg.clone())
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SeededRng::new(cfg.seed);
        let bound = 1.0 / (cfg.dim as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            Matrix::from_raw(rows, cols, data)
        };
        let (d, h) = (cfg.dim, cfg.hidden());
        let blocks = (0..cfg.blocks)
            .map(|_| Block {
                w_q: draw(d, d),
                w_k: draw(d, d),
                w_v: draw(d, d),
                w_o: draw(d, d),
                w_1: draw(d, h),
                w_2: draw(h, d),
            })
            .collect();
        let class_token = cfg.use_class_token.then(|| draw(1, d).into_data());
        Ok(Encoder {
            cfg,
            blocks,
            class_token,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Order-sensitive checksum over all weights, for determinism checks.
    pub fn weight_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |m: &[f64]| {
            for v in m {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for b in &self.blocks {
            for m in [&b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.w_1, &b.w_2] {
                eat(m.data());
            }
        }
        if let Some(c) = &self.class_token {
            eat(c);
        }
        h
    }

    /// Prepends the class token when enabled; the result is what block 1 sees.
    pub fn prepare_input(&self, input: &TokenSequence) -> Result<TokenSequence> {
        if input.dim() != self.cfg.dim {
            return Err(FoldError::shape(format!(
                "input dim {} does not match encoder dim {}",
                input.dim(),
                self.cfg.dim
            )));
        }
        let Some(cls) = &self.class_token else {
            return Ok(input.clone());
        };
        let mut data = cls.clone();
        data.extend_from_slice(input.tokens().data());
        let mut sizes = vec![1];
        sizes.extend_from_slice(input.sizes());
        Ok(TokenSequence::from_parts_unchecked(
            Matrix::from_raw(input.len() + 1, self.cfg.dim, data),
            sizes,
            input.pinned_prefix() + 1,
        ))
    }

    /// Forward pass with the folding hook, recording everything.
    pub fn forward(
        &self,
        input: &TokenSequence,
        schedule: &ReductionSchedule,
        fold: FoldSettings,
    ) -> Result<(TokenSequence, Vec<BlockActivations>)> {
        self.forward_with(input, schedule, fold, Record::Full)
    }

    pub fn forward_with(
        &self,
        input: &TokenSequence,
        schedule: &ReductionSchedule,
        fold: FoldSettings,
        record: Record,
    ) -> Result<(TokenSequence, Vec<BlockActivations>)> {
        let mut seq = self.prepare_input(input)?;
        schedule.check(self.cfg.blocks, seq.reducible_len())?;
        let mut acts = Vec::with_capacity(self.blocks.len());
        for (block, &r) in self.blocks.iter().zip(&schedule.per_block_r) {
            let (tokens, sizes, pinned) = seq.into_parts();
            let attn = self.attention_sublayer(block, &tokens)?;
            let mut mid = TokenSequence::from_parts_unchecked(attn.residual, sizes, pinned);
            let mut trace = None;
            if r > 0 {
                let ctx = MatchContext::new()
                    .with_alpha(fold.alpha)?
                    .with_keys(attn.keys_head_mean.clone())
                    .with_importance(class_importance(&attn.heads, pinned)?, pinned)?;
                let out = folder_reduce(&mid, r, fold.matcher, fold.scheme, &ctx)?;
                mid = out.sequence;
                trace = Some(out.trace);
            }
            let (tokens, sizes, pinned) = mid.into_parts();
            let tokens = self.mlp_sublayer(block, &tokens)?;
            let (attention, keys_head_mean) = match record {
                Record::Full => (attn.heads, Some(attn.keys_head_mean)),
                Record::TokensOnly => (Vec::new(), None),
            };
            acts.push(BlockActivations {
                tokens_out: tokens.clone(),
                sizes_out: sizes.clone(),
                attention,
                keys_head_mean,
                fold: trace,
            });
            seq = TokenSequence::from_parts_unchecked(tokens, sizes, pinned);
        }
        Ok((seq, acts))
    }

    /// Forward pass without any folding hook. Serves as the reference the
    /// hooked pass must reproduce bit for bit under an all-zero schedule.
    pub fn forward_plain(&self, input: &TokenSequence) -> Result<(TokenSequence, Vec<Matrix>)> {
        let seq = self.prepare_input(input)?;
        let (mut tokens, sizes, pinned) = seq.into_parts();
        let mut outs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let attn = self.attention_sublayer(block, &tokens)?;
            tokens = self.mlp_sublayer(block, &attn.residual)?;
            outs.push(tokens.clone());
        }
        Ok((
            TokenSequence::from_parts_unchecked(tokens, sizes, pinned),
            outs,
        ))
    }

    fn attention_sublayer(&self, block: &Block, x: &Matrix) -> Result<AttentionOut> {
        let (n, heads, dh) = (x.rows(), self.cfg.heads, self.cfg.head_dim());
        let h = layer_norm(x);
        let q = matmul(&h, &block.w_q)?;
        let k = matmul(&h, &block.w_k)?;
        let v = matmul(&h, &block.w_v)?;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut concat = Matrix::zeros(n, self.cfg.dim);
        let mut head_mats = Vec::with_capacity(heads);
        let mut key_mean = Matrix::zeros(n, dh);
        for head in 0..heads {
            let (lo, hi) = (head * dh, (head + 1) * dh);
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[lo..hi];
                let row = a.row_mut(i);
                for (j, out) in row.iter_mut().enumerate() {
                    *out = dot(qi, &k.row(j)[lo..hi]) * scale;
                }
                softmax_in_place(row);
            }
            for i in 0..n {
                let weights = a.row(i);
                let out = &mut concat.row_mut(i)[lo..hi];
                for (j, &w) in weights.iter().enumerate() {
                    for (o, vv) in out.iter_mut().zip(&v.row(j)[lo..hi]) {
                        *o += w * vv;
                    }
                }
                for (km, kv) in key_mean.row_mut(i).iter_mut().zip(&k.row(i)[lo..hi]) {
                    *km += kv / heads as f64;
                }
            }
            head_mats.push(a);
        }
        let residual = x.add(&matmul(&concat, &block.w_o)?)?;
        Ok(AttentionOut {
            residual,
            heads: head_mats,
            keys_head_mean: key_mean,
        })
    }

    fn mlp_sublayer(&self, block: &Block, x: &Matrix) -> Result<Matrix> {
        let mut hidden = matmul(&layer_norm(x), &block.w_1)?;
        for r in 0..hidden.rows() {
            for v in hidden.row_mut(r) {
                *v = gelu(*v);
            }
        }
        x.add(&matmul(&hidden, &block.w_2)?)
    }
}

struct AttentionOut {
    residual: Matrix,
    heads: Vec<Matrix>,
    keys_head_mean: Matrix,
}

fn layer_norm(x: &Matrix) -> Matrix {
    let d = x.cols() as f64;
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Per-block removal counts for one forward pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionSchedule {
    pub per_block_r: Vec<usize>,
}

impl ReductionSchedule {
    pub fn none(blocks: usize) -> Self {
        ReductionSchedule {
            per_block_r: vec![0; blocks],
        }
    }

    /// All removal in a single block (0-based).
    pub fn single(blocks: usize, block: usize, r: usize) -> Self {
        let mut s = ReductionSchedule::none(blocks);
        s.per_block_r[block] = r;
        s
    }

    pub fn total(&self) -> usize {
        self.per_block_r.iter().sum()
    }

    /// Checks the length and that at least one reducible token survives
    /// every block.
    pub fn check(&self, blocks: usize, reducible: usize) -> Result<()> {
        if self.per_block_r.len() != blocks {
            return Err(FoldError::argument(format!(
                "schedule has {} entries for {blocks} blocks",
                self.per_block_r.len()
            )));
        }
        let mut removed = 0;
        for (b, &r) in self.per_block_r.iter().enumerate() {
            removed += r;
            if r > 0 && removed >= reducible {
                return Err(FoldError::capacity(format!(
                    "block {} would leave {} reducible tokens (cumulative removal {removed} of {reducible})",
                    b + 1,
                    reducible as i64 - removed as i64
                )));
            }
        }
        Ok(())
    }
}

/// Where a schedule puts its removals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Everything in the final block.
    Last1,
    /// Split evenly over the final `n` blocks.
    LastN(usize),
    /// Split evenly over every block.
    Uniform,
}

/// Spreads `total_r` over the chosen blocks as evenly as possible, giving
/// the remainder to the later blocks, and checks feasibility against the
/// reducible token count.
pub fn make_schedule(
    kind: ScheduleKind,
    total_r: usize,
    blocks: usize,
    reducible: usize,
) -> Result<ReductionSchedule> {
    if blocks == 0 {
        return Err(FoldError::argument("schedule needs at least one block"));
    }
    let span = match kind {
        ScheduleKind::Last1 => 1,
        ScheduleKind::LastN(n) if n == 0 || n > blocks => {
            return Err(FoldError::argument(format!(
                "last-n span {n} outside 1..={blocks}"
            )))
        }
        ScheduleKind::LastN(n) => n,
        ScheduleKind::Uniform => blocks,
    };
    let mut per_block_r = vec![0; blocks];
    let (base, extra) = (total_r / span, total_r % span);
    for (i, slot) in per_block_r[blocks - span..].iter_mut().enumerate() {
        *slot = base + usize::from(i >= span - extra);
    }
    let s = ReductionSchedule { per_block_r };
    s.check(blocks, reducible)?;
    Ok(s)
}

/// Parsed form of the `last1:R`, `lastN:k:R`, `uniform:R` and
/// `explicit:r1,r2,…` schedule strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleSpec {
    Kind { kind: ScheduleKind, total: usize },
    Explicit(Vec<usize>),
}

impl ScheduleSpec {
    pub fn resolve(&self, blocks: usize, reducible: usize) -> Result<ReductionSchedule> {
        match self {
            ScheduleSpec::Kind { kind, total } => make_schedule(*kind, *total, blocks, reducible),
            ScheduleSpec::Explicit(r) => {
                let s = ReductionSchedule {
                    per_block_r: r.clone(),
                };
                s.check(blocks, reducible)?;
                Ok(s)
            }
        }
    }
}

impl std::str::FromStr for ScheduleSpec {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || FoldError::argument(format!("bad schedule spec {s:?}"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["last1", r] => Ok(ScheduleSpec::Kind {
                kind: ScheduleKind::Last1,
                total: num(r)?,
            }),
            ["lastN", k, r] => Ok(ScheduleSpec::Kind {
                kind: ScheduleKind::LastN(num(k)?),
                total: num(r)?,
            }),
            ["uniform", r] => Ok(ScheduleSpec::Kind {
                kind: ScheduleKind::Uniform,
                total: num(r)?,
            }),
            ["explicit", list] => Ok(ScheduleSpec::Explicit(
                list.split(',').map(num).collect::<Result<Vec<_>>>()?,
            )),
            _ => Err(bad()),
        }
    }
}
