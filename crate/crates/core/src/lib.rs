//! Least-squares estimation for the simple linear errors-in-variables model.
//!
//! The crate is organised bottom-up:
//!
//! * [`design`] generates deterministic regressor sequences and their
//!   dispersion summaries (`x̄_n`, `S_n`, max deviation).
//! * [`model`] holds the error laws and the keyed sampler for `(ξ_i, η_i)`.
//! * [`estimator`] fits `β̂_n`, `θ̂_n`, decomposes `β̂_n − β` into its exact
//!   latent-error terms and forms the standardized statistics.
//! * [`asymptotics`] evaluates the asymptotic conditions along an `n` grid,
//!   the Lindeberg sum of the standardized triangular array, and the
//!   truncated-moment conditions for the weak law of `Σ δ_k² / √S_n`.
//! * [`harness`] runs seeded Monte Carlo experiments whose reports are
//!   identical for any worker count.

pub mod asymptotics;
pub mod design;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod quadrature;
pub mod rng;

pub use asymptotics::{
    condition_path, diagnose, lindeberg_sum, petrov_check, dispersion_hierarchy, trend_verdict, ConditionId, ConditionPath,
    DiagnosticsReport, HierarchyReport, LindebergArray, LindebergMethod, LindebergReport, PetrovReport, Target, Verdict,
    VerdictRule,
};
pub use design::{generate_design, summarize, summary_path, DesignKind, DesignSequence, DesignSummary};
pub use error::{Error, Result};
pub use estimator::{decompose, fit, negligible_ratios, standardize, Decomposition, FitResult, NegligibleRatios, StandardizedStats, VarianceSource};
pub use harness::{
    counterexample_run, coverage, ks_statistic, run_experiment, run_experiment_with_workers, CounterexampleReport,
    CoverageResult, ExperimentConfig, ExperimentReport, NormalityResult, Statistic, TestKind, Thresholds,
};
pub use model::{draw_sample, CompositeError, EVModelSpec, EVSample, ErrorDistribution, Family};
