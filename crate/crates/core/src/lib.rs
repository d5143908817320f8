//! Token folding for transformer sequence reduction, plus the measurement
//! instruments used to study what a reduction throws away: SVD energy
//! profiles, exact earth mover's distance, and propagation sweeps over a
//! small deterministic encoder.

pub mod aggregation;
pub mod analysis;
pub mod encoder;
pub mod error;
pub mod folder;
pub mod linalg;
pub mod matching;
pub mod rng;
pub mod synthetic;
pub mod tokenseq;

pub use aggregation::{aggregate, AggregationScheme};
pub use encoder::{Encoder, EncoderConfig, FoldSettings, ReductionSchedule, ScheduleSpec};
pub use error::{FoldError, Result};
pub use folder::{fold_once, folder_reduce, simplified_reduce, FoldOutcome, FoldRecord, FoldTrace};
pub use linalg::{svd, Matrix, SvdResult};
pub use matching::{MatchContext, Matcher};
pub use rng::SeededRng;
pub use tokenseq::TokenSequence;
