//! Exact analysis and simulation of the hard-core CSMA activity process on
//! complete K-partite interference graphs.
//!
//! The network is a list of component sizes `L_1, …, L_K` and an activation
//! rate `ν`. Inside a component nodes do not interfere; any two nodes in
//! different components do. The aggregated chain tracks which component is
//! active and how many of its nodes transmit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hitting;
mod linalg;
pub mod mixing;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod par;
pub mod spectral;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
pub use hitting::{
    asymptotic_mean, bd_step_mean, escape_params, excursion_pmf, limit_law_cdf, mean_hitting_time,
    AsymptoticLaw, EscapeParams, HittingQuery, LimitLaw, Step,
};
pub use mixing::{
    conductance, conductance_star, mixing_bounds, mixing_time, tv_distance, worst_case_distance, MixingBounds,
    MixingReport,
};
pub use model::{
    aggregate, balance_residual, build_generator, detailed_balance_defect, full_states, stationary_agg, stationary_full, AggState, Distribution,
    FullState, Generator, PartiteNetwork,
};
pub use spectral::{
    absorption_spectrum, gershgorin_discs, phase_type_cdf, potential_coefficients, symmetrize,
    transient_distribution, PhaseType, SymmetrizedChain, TransientMethod,
};
pub use par::Exec;
pub use sweep::{fit_power_law, run_sweep, PowerLawFit, SweepKind, SweepResult, SweepSpec};
pub use validate::{run_validation, ValidationReport};

/// Version stamped into every machine-readable report.
pub const SCHEMA_VERSION: u32 = 1;
