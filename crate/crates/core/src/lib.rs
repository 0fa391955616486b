//! Combinatorial logistic bandits with probabilistically triggered arms.

pub mod confidence;
pub mod config;
pub mod env;
pub mod harness;
pub mod logistic;
pub mod numeric;
pub mod oracle;
pub mod policy;

#[cfg(test)]
pub(crate) mod test_util;

pub use confidence::{
    adaptive_bonus, agnostic_bonus, assemble_ucbs, heuristic_projection, kappa_bound,
    post_burn_in_bonus, post_burn_in_ellipsoid, BonusKind, BonusVanishingRegion, RadiusParams,
    UcbEntry,
};
pub use config::{parse_experiment, parse_instance, ConfigError};
pub use env::{
    derive_seed, sample_outcomes, synth_instance, tpvm_coefficients, tpvm_diagnostic, Action,
    EnvError, Environment, Feedback, FeatureMap, FeatureSchedule, GroundTruth, InstanceSpec,
    MatchingGraph, PmcGraph, RoutingGraph, TpvmCoefficients, TpvmSample, VariantSpec,
};
pub use harness::{
    build_instance, emit_csv, resolve_kappa, run_experiment, run_single_trial, summarize,
    ExperimentConfig, ExperimentResult, HarnessError, InstanceSource, KappaMode, OptimumMode,
    TrialPlan, TrialResult,
};
pub use logistic::{
    covariance, fit_mle, fit_mle_constrained, g_map, grad_log_loss, hessian, log_loss,
    project_to_ellipsoid, Ellipsoid, EstimatorState, FitOptions, LogisticError, MleFit,
    ObservationLog, RegularizerSchedule,
};
pub use numeric::{mahalanobis_norm, psd_solve, sigmoid, sigmoid_deriv, sigmoid_second_deriv};
pub use numeric::{Cholesky, NumericError, PsdMatrix, Vector};
pub use oracle::{
    approximation_ratio, brute_force_oracle, dijkstra_route, env_oracle, greedy_pmc,
    hungarian_assignment, run_oracle_crosschecks, CrosscheckReport, OracleError, OracleResult,
};
pub use policy::{
    build_policy, burn_in_formula, burn_in_length, AlgoConfig, AlgorithmKind, CLogUcb, Cucb,
    EpsilonGreedy, EvaCLogUcb, LinearUcb, Policy, PolicyContext, PolicyError, PotentialReport,
    ProjectionMode, VaCLogUcb,
};
