//! Regularized logistic maximum-likelihood estimation over triggered
//! semi-bandit feedback.
//!
//! The learner accumulates `(feature, outcome)` pairs round by round; every
//! estimate is the minimizer of the ridge-penalized logistic log-loss over
//! the whole history, optionally constrained to an ellipsoid. Solvers are
//! plain (projected) gradient descent with Armijo backtracking — fully
//! deterministic so repeated fits are bitwise identical.

use crate::numeric::{clamp_nonnegative, sigmoid, sigmoid_deriv, NumericError, PsdMatrix, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogisticError {
    #[error("loss became non-finite during optimization")]
    NonFiniteLoss,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// History of triggered observations, stored per round, with the sufficient
/// statistics (`sum X*phi`, `sum phi*phi^T`) maintained incrementally so
/// covariance assembly is O(d^2) per round instead of a full replay.
#[derive(Clone, Debug)]
pub struct ObservationLog {
    dim: usize,
    entries: Vec<(Vector, bool)>,
    round_offsets: Vec<usize>,
    sum_outcome_features: Vector,
    sum_outer: PsdMatrix,
}

impl ObservationLog {
    pub fn new(dim: usize) -> Self {
        ObservationLog {
            dim,
            entries: Vec::new(),
            round_offsets: vec![0],
            sum_outcome_features: Vector::zeros(dim),
            sum_outer: PsdMatrix::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Appends one round of triggered observations (possibly empty).
    /// Features must live in the unit ball.
    pub fn push_round(&mut self, observations: impl IntoIterator<Item = (Vector, bool)>) {
        for (feature, outcome) in observations {
            assert_eq!(feature.dim(), self.dim, "push_round: dimension mismatch");
            assert!(
                feature.norm2() <= 1.0 + 1e-9,
                "feature outside the unit ball: ||phi|| = {}",
                feature.norm2()
            );
            if outcome {
                self.sum_outcome_features.add_scaled(&feature, 1.0);
            }
            self.sum_outer.add_outer(&feature, 1.0);
            self.entries.push((feature, outcome));
        }
        self.round_offsets.push(self.entries.len());
    }

    pub fn num_rounds(&self) -> usize {
        self.round_offsets.len() - 1
    }

    pub fn total_observations(&self) -> usize {
        self.entries.len()
    }

    pub fn round(&self, s: usize) -> &[(Vector, bool)] {
        &self.entries[self.round_offsets[s]..self.round_offsets[s + 1]]
    }

    /// All observations, flattened in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &(Vector, bool)> {
        self.entries.iter()
    }

    /// `sum_s sum_{i in tau_s} X_{s,i} phi_s(i)` (cached).
    pub fn sum_outcome_features(&self) -> &Vector {
        &self.sum_outcome_features
    }

    /// `sum_s sum_{i in tau_s} phi_s(i) phi_s(i)^T` (cached).
    pub fn sum_outer(&self) -> &PsdMatrix {
        &self.sum_outer
    }
}

/// Slowly growing ridge weight `lambda_t = d * ln(4 * (1 + t*K) / delta)`.
#[derive(Clone, Copy, Debug)]
pub struct RegularizerSchedule {
    pub d: usize,
    pub k: usize,
    pub delta: f64,
}

impl RegularizerSchedule {
    pub fn new(d: usize, k: usize, delta: f64) -> Self {
        assert!(d >= 1 && k >= 1);
        assert!(delta > 0.0 && delta <= 1.0, "delta must be in (0, 1]");
        RegularizerSchedule { d, k, delta }
    }

    pub fn lambda(&self, t: usize) -> f64 {
        self.d as f64 * (4.0 * (1.0 + (t * self.k) as f64) / self.delta).ln()
    }
}

/// Penalized logistic log-loss
/// `-(sum_obs X ln l(z) + (1-X) ln(1-l(z))) + lambda/2 ||theta||^2`
/// with `z = theta . phi`, evaluated through softplus so extreme margins
/// cannot overflow.
pub fn log_loss(theta: &Vector, log: &ObservationLog, lambda: f64) -> f64 {
    assert!(lambda >= 0.0);
    let mut total = 0.0;
    for (feature, outcome) in log.iter() {
        let z = theta.dot(feature);
        total += if *outcome { softplus(-z) } else { softplus(z) };
    }
    total + 0.5 * lambda * theta.dot(theta)
}

/// Outcome-free part of the gradient:
/// `g(theta) = sum_obs l(z) phi + lambda * theta`.
pub fn g_map(theta: &Vector, log: &ObservationLog, lambda: f64) -> Vector {
    let mut g = theta.scaled(lambda);
    for (feature, _) in log.iter() {
        g.add_scaled(feature, sigmoid(theta.dot(feature)));
    }
    g
}

/// Gradient of `log_loss`: `sum_obs (l(z) - X) phi + lambda * theta`.
pub fn grad_log_loss(theta: &Vector, log: &ObservationLog, lambda: f64) -> Vector {
    let mut g = theta.scaled(lambda);
    for (feature, outcome) in log.iter() {
        let residual = sigmoid(theta.dot(feature)) - f64::from(*outcome);
        g.add_scaled(feature, residual);
    }
    g
}

/// Hessian of `log_loss`: `sum_obs l'(z) phi phi^T + lambda * I`.
pub fn hessian(theta: &Vector, log: &ObservationLog, lambda: f64) -> PsdMatrix {
    let mut h = PsdMatrix::scaled_identity(log.dim(), lambda);
    for (feature, _) in log.iter() {
        h.add_outer(feature, sigmoid_deriv(theta.dot(feature)));
    }
    h
}

/// Design covariance `sum_obs phi phi^T + kappa * lambda * I`; assembled from
/// the log's cached Gram matrix.
pub fn covariance(log: &ObservationLog, kappa: f64, lambda: f64) -> PsdMatrix {
    assert!(kappa >= 4.0 - 1e-9, "kappa below its minimum possible value 4");
    assert!(lambda > 0.0);
    let mut v = log.sum_outer().clone();
    v.add_scaled_identity(kappa * lambda);
    v
}

/// Solver knobs shared by the unconstrained and constrained fits.
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Stop when the gradient (or projected-gradient map) norm drops here.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 10_000 }
    }
}

/// Fit result; `converged == false` flags a best-effort iterate that hit
/// `max_iter` (or a vanishing line-search step) before reaching `tol`.
#[derive(Clone, Debug)]
pub struct MleFit {
    pub theta: Vector,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-18;

/// Unconstrained penalized MLE by gradient descent with Armijo backtracking.
/// Deterministic: identical inputs (including the warm start) yield bitwise
/// identical iterates.
pub fn fit_mle(
    log: &ObservationLog,
    lambda: f64,
    opts: &FitOptions,
    warm_start: Option<&Vector>,
) -> Result<MleFit, LogisticError> {
    assert!(lambda > 0.0, "fit_mle needs a strictly positive regularizer");
    let mut theta = match warm_start {
        Some(w) => {
            assert_eq!(w.dim(), log.dim(), "warm start dimension mismatch");
            w.clone()
        }
        None => Vector::zeros(log.dim()),
    };
    let mut loss = log_loss(&theta, log, lambda);
    if !loss.is_finite() {
        return Err(LogisticError::NonFiniteLoss);
    }
    let mut step = 1.0_f64;
    for iter in 0..opts.max_iter {
        let grad = grad_log_loss(&theta, log, lambda);
        let grad_norm = grad.norm2();
        if !grad_norm.is_finite() {
            return Err(LogisticError::NonFiniteLoss);
        }
        if grad_norm <= opts.tol {
            return Ok(MleFit { theta, grad_norm, iterations: iter, converged: true });
        }
        // try a slightly longer step than last round, then back off
        step = (step * 2.0).min(1e6);
        loop {
            let mut candidate = theta.clone();
            candidate.add_scaled(&grad, -step);
            let candidate_loss = log_loss(&candidate, log, lambda);
            if !candidate_loss.is_finite() {
                return Err(LogisticError::NonFiniteLoss);
            }
            if candidate_loss <= loss - ARMIJO_SLOPE * step * grad_norm * grad_norm {
                theta = candidate;
                loss = candidate_loss;
                break;
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                // numerically stuck: return the best iterate, flagged
                return Ok(MleFit { theta, grad_norm, iterations: iter, converged: false });
            }
        }
    }
    let grad_norm = grad_log_loss(&theta, log, lambda).norm2();
    Ok(MleFit { theta, grad_norm, iterations: opts.max_iter, converged: false })
}

/// Ellipsoid `{ x : (x - center)^T shape (x - center) <= radius^2 }`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    pub center: Vector,
    pub shape: PsdMatrix,
    pub radius: f64,
}

impl Ellipsoid {
    pub fn new(center: Vector, shape: PsdMatrix, radius: f64) -> Self {
        assert_eq!(center.dim(), shape.dim(), "ellipsoid dimension mismatch");
        assert!(radius.is_finite() && radius >= 0.0);
        Ellipsoid { center, shape, radius }
    }

    /// Euclidean ball as the degenerate case (`shape = I`).
    pub fn ball(center: Vector, radius: f64) -> Self {
        let dim = center.dim();
        Ellipsoid::new(center, PsdMatrix::identity(dim), radius)
    }

    pub fn contains(&self, point: &Vector) -> bool {
        let w = point.minus(&self.center);
        self.shape.quad_form(&w) <= self.radius * self.radius + 1e-9
    }
}

/// Euclidean projection onto an ellipsoid, via bisection on the dual
/// multiplier of the single quadratic constraint (tolerance 1e-10).
/// A zero radius degenerates to the center.
pub fn project_to_ellipsoid(point: &Vector, ellipsoid: &Ellipsoid) -> Vector {
    assert_eq!(point.dim(), ellipsoid.center.dim(), "projection dimension mismatch");
    if ellipsoid.radius <= 0.0 {
        return ellipsoid.center.clone();
    }
    let r2 = ellipsoid.radius * ellipsoid.radius;
    let w = point.minus(&ellipsoid.center);
    if clamp_nonnegative(ellipsoid.shape.quad_form(&w)) <= r2 {
        return point.clone();
    }
    // w(nu) = (I + nu*M)^{-1} w shrinks monotonically toward the center;
    // find nu >= 0 with w(nu)^T M w(nu) = r^2.
    let dim = point.dim();
    let constraint = |nu: f64| -> (f64, Vector) {
        let mut sys = PsdMatrix::identity(dim);
        sys.add_scaled(&ellipsoid.shape, nu);
        let chol = sys.cholesky().expect("I + nu*M must be positive definite");
        let x = chol.solve(&w);
        (ellipsoid.shape.quad_form(&x), x)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while constraint(hi).0 > r2 {
        hi *= 2.0;
        assert!(hi < 1e18, "ellipsoid projection multiplier diverged");
    }
    while hi - lo > 1e-10 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if constraint(mid).0 > r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // take the feasible endpoint
    let (_, x) = constraint(hi);
    ellipsoid.center.plus(&x)
}

/// Penalized MLE constrained to an ellipsoid, by projected gradient descent.
/// Stops when the projected-gradient map norm reaches `opts.tol`.
pub fn fit_mle_constrained(
    log: &ObservationLog,
    lambda: f64,
    region: &Ellipsoid,
    opts: &FitOptions,
    warm_start: Option<&Vector>,
) -> Result<MleFit, LogisticError> {
    assert!(lambda > 0.0);
    if region.radius <= 0.0 {
        let theta = region.center.clone();
        let grad_norm = grad_log_loss(&theta, log, lambda).norm2();
        return Ok(MleFit { theta, grad_norm, iterations: 0, converged: true });
    }
    let start = warm_start.unwrap_or(&region.center).clone();
    let mut theta = project_to_ellipsoid(&start, region);
    let mut loss = log_loss(&theta, log, lambda);
    if !loss.is_finite() {
        return Err(LogisticError::NonFiniteLoss);
    }
    let mut step = 1.0_f64;
    for iter in 0..opts.max_iter {
        let grad = grad_log_loss(&theta, log, lambda);
        if !grad.norm2().is_finite() {
            return Err(LogisticError::NonFiniteLoss);
        }
        step = (step * 2.0).min(1e6);
        loop {
            let mut target = theta.clone();
            target.add_scaled(&grad, -step);
            let candidate = project_to_ellipsoid(&target, region);
            let displacement = candidate.minus(&theta);
            let move_norm = displacement.norm2();
            let map_norm = move_norm / step;
            if map_norm <= opts.tol {
                return Ok(MleFit { theta, grad_norm: map_norm, iterations: iter, converged: true });
            }
            let candidate_loss = log_loss(&candidate, log, lambda);
            if !candidate_loss.is_finite() {
                return Err(LogisticError::NonFiniteLoss);
            }
            // sufficient decrease for the projected step
            if candidate_loss <= loss - ARMIJO_SLOPE / step * move_norm * move_norm {
                theta = candidate;
                loss = candidate_loss;
                break;
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                return Ok(MleFit {
                    theta,
                    grad_norm: map_norm,
                    iterations: iter,
                    converged: false,
                });
            }
        }
    }
    let grad = grad_log_loss(&theta, log, lambda);
    let target = {
        let mut t = theta.clone();
        t.add_scaled(&grad, -1.0);
        t
    };
    let map_norm = project_to_ellipsoid(&target, region).minus(&theta).norm2();
    Ok(MleFit { theta, grad_norm: map_norm, iterations: opts.max_iter, converged: false })
}

/// Per-round estimator snapshot consumed by the confidence machinery.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub theta_hat: Vector,
    pub lambda: f64,
    pub kappa: f64,
    pub covariance_v: PsdMatrix,
    pub hessian_at_hat: PsdMatrix,
}

impl EstimatorState {
    pub fn compute(log: &ObservationLog, theta_hat: Vector, lambda: f64, kappa: f64) -> Self {
        assert_eq!(theta_hat.dim(), log.dim());
        let covariance_v = covariance(log, kappa, lambda);
        let hessian_at_hat = hessian(&theta_hat, log, lambda);
        EstimatorState { theta_hat, lambda, kappa, covariance_v, hessian_at_hat }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
