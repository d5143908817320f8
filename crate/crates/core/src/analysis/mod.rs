//! Measurement instruments: singular-value energy, exact transport
//! distance, and the sweep drivers that run them over encoder blocks.

mod emd;
mod energy;
mod stats;
mod sweep;

pub use emd::{cost_matrix, emd, emd_with_costs, uniform_weights, TransportPlan, WEIGHT_TOL};
pub use energy::{energy, min_tokens, min_tokens_many, EnergyCurve, EnergyProfile, RANK_CUTOFF};
pub use stats::{average_ranks, mean_abs_pairwise_cosine, mean_pairwise_cosine, spearman};
pub use sweep::{
    aggregation_sweep, energy_sweep, parallel_map, propagation_sweep, schedule_sweep,
    sweep_threads, EmdWeights, PropagationPoint, PropagationProbe, Removal, SchedulePoint,
};
