//! Gillespie simulation of the aggregated and per-node processes, sampling
//! of transition times, excursion counts and the limit law, and
//! goodness-of-fit statistics.

mod batch;
mod rng;
mod sim;
mod stats;

pub use batch::{batch, default_workers};
pub use rng::sample_rng;
pub use sim::{
    empirical_excursions, occupation, sample_crossings, sample_hitting_time, sample_hitting_time_with,
    sample_limit_law, simulate_full, simulate_trajectory, dominance_fraction, Crossing, ExcursionCounts,
    FullClock, SampleMeta, SampleSet, Trajectory,
};
pub use stats::{
    chi_square_gof, ks_critical_value, ks_p_value, ks_statistic, Cdf, ChiSquareResult, ExpCdf, KsLevel, KS_MIN_SAMPLES,
};
