//! Bandit policies: the three parametric index algorithms built on the
//! logistic estimator, plus nonparametric and linear baselines.
//!
//! Every policy follows the same per-round contract: `select_action` may fit
//! estimators and must return a feasible action; `observe` feeds back exactly
//! the triggered outcomes. Policies own their randomness (seeded at
//! construction), so a (seed, instance) pair fully determines a run.

use crate::confidence::{
    assemble_ucbs, heuristic_projection, post_burn_in_ellipsoid, BonusKind, BonusVanishingRegion,
    RadiusParams,
};
use crate::env::{derive_seed, Action, Environment, Feedback, FeatureMap};
use crate::logistic::{
    covariance, fit_mle, fit_mle_constrained, hessian, Ellipsoid, FitOptions, LogisticError,
    ObservationLog,
};
use crate::numeric::{Cholesky, NumericError, Vector};
use crate::oracle::{env_oracle, OracleError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Logistic(#[from] LogisticError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("this algorithm requires a static feature schedule")]
    RequiresStaticFeatures,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Instance-level constants a policy needs: dimension, the per-round
/// triggered-arm bound, the parameter-norm bound, the curvature constant,
/// and the horizon.
#[derive(Clone, Copy, Debug)]
pub struct PolicyContext {
    pub d: usize,
    pub k: usize,
    pub l: f64,
    pub kappa: f64,
    pub horizon: usize,
}

/// Whether the parameter estimate gets pulled back into the bonus-vanishing
/// region before scoring arms. `Skip` keeps the raw estimate (the region is
/// still tracked for diagnostics); `Heuristic` applies the penalized
/// projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMode {
    Skip,
    Heuristic,
}

/// Tunables shared across algorithms; `for_horizon` fills the
/// horizon-dependent defaults (`delta = mle_tol = 1/T`).
#[derive(Clone, Debug)]
pub struct AlgoConfig {
    pub delta: f64,
    pub projection_mode: ProjectionMode,
    /// Scale on the variance-agnostic bonus, in [0, 1]. `1/4` exploits the
    /// global slope bound of the link; `1` is the conservative variant.
    pub agnostic_bonus_scale: f64,
    pub mle_tol: f64,
    pub mle_max_iter: usize,
    /// Exploration rate of the epsilon-greedy baseline.
    pub epsilon: f64,
    /// Multiplier on the theoretical burn-in length (which is far too long
    /// to run literally at practical horizons).
    pub t0_scale: f64,
    /// Practical multiplier on the confidence radius inside the exploration
    /// bonuses (beta, sigma, nu). At 1 the bonuses carry the full theoretical
    /// constants, which exceed the [0, 1] outcome range for desk-scale
    /// horizons and clamp every index to 1; experiments shrink this the same
    /// way `t0_scale` shrinks the burn-in. Regions, ellipsoids, and slab caps
    /// always use the unscaled radii.
    pub radius_scale: f64,
}

impl AlgoConfig {
    pub fn for_horizon(horizon: usize) -> Self {
        assert!(horizon >= 1);
        let t = horizon as f64;
        AlgoConfig {
            delta: 1.0 / t,
            projection_mode: ProjectionMode::Skip,
            agnostic_bonus_scale: 0.25,
            mle_tol: 1.0 / t,
            mle_max_iter: 10_000,
            epsilon: 0.2,
            t0_scale: 0.02,
            radius_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |msg: &str| Err(PolicyError::InvalidConfig(msg.into()));
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.agnostic_bonus_scale) {
            return bad("agnostic_bonus_scale must lie in [0, 1]");
        }
        if !(self.mle_tol > 0.0) {
            return bad("mle_tol must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.t0_scale > 0.0) {
            return bad("t0_scale must be positive");
        }
        if !(self.radius_scale.is_finite() && self.radius_scale > 0.0) {
            return bad("radius_scale must be positive and finite");
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { tol: self.mle_tol, max_iter: self.mle_max_iter }
    }
}

/// Running check of the elliptical-potential inequality
/// `sum_s sum_{i in tau_s} |phi|^2_{V_s^-1} <= 2 d log(lambda_{t+1} + t)`,
/// which is sound whenever `lambda_1 >= K`.
#[derive(Clone, Copy, Debug)]
pub struct PotentialReport {
    pub sum: f64,
    pub bound: f64,
    /// `lambda_1 >= K`; when false the bound is not claimed and `violated`
    /// is vacuously false.
    pub applicable: bool,
}

impl PotentialReport {
    pub fn violated(&self) -> bool {
        self.applicable && self.sum > self.bound + 1e-9
    }
}

#[derive(Clone, Debug)]
struct PotentialTracker {
    sum: f64,
    bound: f64,
    applicable: bool,
}

impl PotentialTracker {
    fn new(lambda1: f64, k: usize) -> Self {
        PotentialTracker { sum: 0.0, bound: 0.0, applicable: lambda1 >= k as f64 }
    }

    fn record(&mut self, contribution: f64, d: usize, lambda_next: f64, t: usize) {
        self.sum += contribution;
        self.bound = 2.0 * d as f64 * (lambda_next + t as f64).ln();
    }

    fn report(&self) -> PotentialReport {
        PotentialReport { sum: self.sum, bound: self.bound, applicable: self.applicable }
    }
}

pub trait Policy {
    fn name(&self) -> &'static str;
    fn select_action(
        &mut self,
        t: usize,
        features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError>;
    fn observe(
        &mut self,
        t: usize,
        features: &FeatureMap,
        action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError>;
    /// Elliptical-potential diagnostics, for policies that maintain a Gram
    /// matrix.
    fn potential_report(&self) -> Option<PotentialReport> {
        None
    }
}

/// State shared by the variance-agnostic and variance-adaptive index
/// policies: observation log, warm-started estimate, slab region, and the
/// cached per-round factorization.
struct LogisticCore {
    ctx: PolicyContext,
    cfg: AlgoConfig,
    radius: RadiusParams,
    log: ObservationLog,
    theta_hat: Vector,
    region: BonusVanishingRegion,
    potential: PotentialTracker,
    seed: u64,
    /// Set by `select_action`, consumed by `observe`.
    cached: Option<RoundCache>,
}

struct RoundCache {
    v_chol: Cholesky,
    theta_used: Vector,
    beta: f64,
}

impl LogisticCore {
    fn new(ctx: PolicyContext, cfg: AlgoConfig, seed: u64) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let radius = RadiusParams::new(ctx.l, ctx.d, ctx.k, cfg.delta, ctx.kappa);
        let potential = PotentialTracker::new(radius.lambda(1), ctx.k);
        Ok(LogisticCore {
            region: BonusVanishingRegion::unconstrained(ctx.l),
            log: ObservationLog::new(ctx.d),
            theta_hat: Vector::zeros(ctx.d),
            radius,
            ctx,
            cfg,
            potential,
            seed,
            cached: None,
        })
    }

    /// Fits the estimate, optionally projects it, factorizes the Gram matrix,
    /// and caches what `observe` needs.
    fn refresh(&mut self, t: usize) -> Result<(Vector, Cholesky, f64), PolicyError> {
        let lambda = self.radius.lambda(t);
        let fit = fit_mle(&self.log, lambda, &self.cfg.fit_options(), Some(&self.theta_hat))?;
        self.theta_hat = fit.theta.clone();
        let theta_used = if self.cfg.projection_mode == ProjectionMode::Heuristic
            && !self.region.contains(&fit.theta)
        {
            heuristic_projection(&self.region, &fit.theta, derive_seed(self.seed, t as u64))
        } else {
            fit.theta
        };
        let v = covariance(&self.log, self.ctx.kappa, lambda);
        let v_chol = v.cholesky()?;
        Ok((theta_used, v_chol, lambda))
    }

    /// Region slabs, potential bookkeeping, and the log push — identical for
    /// both index policies.
    fn absorb(&mut self, t: usize, features: &FeatureMap, feedback: &Feedback) {
        let cache = self.cached.take().expect("observe without a matching select");
        let mut contribution = 0.0;
        let mut slabs = Vec::with_capacity(feedback.triggered.len());
        for &arm in &feedback.triggered {
            let phi = features.get(arm);
            let quad = cache.v_chol.inv_quad_form(phi);
            contribution += quad;
            let cap = cache.theta_used.dot(phi).abs() + cache.beta * quad.sqrt();
            slabs.push((phi, cap));
        }
        self.region.add_round(slabs);
        self.potential.record(contribution, self.ctx.d, self.radius.lambda(t + 1), t);
        self.log.push_round(
            feedback
                .triggered
                .iter()
                .zip(&feedback.outcomes)
                .map(|(&arm, &x)| (features.get(arm).clone(), x)),
        );
    }
}

/// Variance-agnostic index policy: scores every arm with the Gram-norm bonus
/// and hands the indices to the offline oracle.
pub struct CLogUcb {
    core: LogisticCore,
}

impl CLogUcb {
    pub fn new(ctx: PolicyContext, cfg: AlgoConfig, seed: u64) -> Result<Self, PolicyError> {
        Ok(CLogUcb { core: LogisticCore::new(ctx, cfg, seed)? })
    }
}

impl Policy for CLogUcb {
    fn name(&self) -> &'static str {
        "clogucb"
    }

    fn select_action(
        &mut self,
        t: usize,
        features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        let (theta_used, v_chol, _) = self.core.refresh(t)?;
        let beta = self.core.radius.beta(t);
        let entries = assemble_ucbs(
            features,
            &theta_used,
            BonusKind::Agnostic {
                beta: beta * self.core.cfg.radius_scale,
                scale: self.core.cfg.agnostic_bonus_scale,
            },
            self.core.ctx.kappa,
            &v_chol,
            None,
        );
        let weights: Vec<f64> = entries.iter().map(|e| e.ucb).collect();
        let result = env_oracle(env, &weights)?;
        self.core.cached = Some(RoundCache { v_chol, theta_used, beta });
        Ok(result.action)
    }

    fn observe(
        &mut self,
        t: usize,
        features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        self.core.absorb(t, features, feedback);
        Ok(())
    }

    fn potential_report(&self) -> Option<PotentialReport> {
        Some(self.core.potential.report())
    }
}

/// Variance-adaptive index policy: first-order term follows the local slope
/// through the Hessian norm, quadratic tail through the Gram norm.
pub struct VaCLogUcb {
    core: LogisticCore,
}

impl VaCLogUcb {
    pub fn new(ctx: PolicyContext, cfg: AlgoConfig, seed: u64) -> Result<Self, PolicyError> {
        Ok(VaCLogUcb { core: LogisticCore::new(ctx, cfg, seed)? })
    }
}

impl Policy for VaCLogUcb {
    fn name(&self) -> &'static str {
        "va-clogucb"
    }

    fn select_action(
        &mut self,
        t: usize,
        features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        let (theta_used, v_chol, lambda) = self.core.refresh(t)?;
        let h = hessian(&theta_used, &self.core.log, lambda);
        let h_chol = h.cholesky()?;
        let sigma = self.core.radius.sigma(t) * self.core.cfg.radius_scale;
        let entries = assemble_ucbs(
            features,
            &theta_used,
            BonusKind::Adaptive { sigma },
            self.core.ctx.kappa,
            &v_chol,
            Some(&h_chol),
        );
        let weights: Vec<f64> = entries.iter().map(|e| e.ucb).collect();
        let result = env_oracle(env, &weights)?;
        // the slab caps use the Gram-norm surrogate in both index policies
        let beta = self.core.radius.beta(t);
        self.core.cached = Some(RoundCache { v_chol, theta_used, beta });
        Ok(result.action)
    }

    fn observe(
        &mut self,
        t: usize,
        features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        self.core.absorb(t, features, feedback);
        Ok(())
    }

    fn potential_report(&self) -> Option<PotentialReport> {
        Some(self.core.potential.report())
    }
}

/// Theoretical burn-in length for the explore-then-commit variant:
/// `(4L^2 + 16L + 19)^2 kappa d^2 log^2(4(2 + T)/delta)`.
pub fn burn_in_formula(l: f64, kappa: f64, d: usize, horizon: usize, delta: f64) -> f64 {
    let poly = 4.0 * l * l + 16.0 * l + 19.0;
    let log_term = (4.0 * (2.0 + horizon as f64) / delta).ln();
    poly * poly * kappa * (d * d) as f64 * log_term * log_term
}

/// Burn-in length actually run: the theoretical value scaled by `t0_scale`,
/// clamped into `[1, T/2]`.
pub fn burn_in_length(ctx: &PolicyContext, cfg: &AlgoConfig) -> usize {
    let raw = cfg.t0_scale * burn_in_formula(ctx.l, ctx.kappa, ctx.d, ctx.horizon, cfg.delta);
    (raw.ceil() as usize).clamp(1, (ctx.horizon / 2).max(1))
}

enum EvaStage {
    BurnIn { designated: Option<usize> },
    Learning { ellipsoid: Ellipsoid },
}

/// Explore-then-commit variant: a forced-exploration stage that tracks the
/// most uncertain arm direction, then index play inside the confidence
/// ellipsoid the burn-in pinned down. Requires a static feature schedule.
pub struct EvaCLogUcb {
    ctx: PolicyContext,
    cfg: AlgoConfig,
    radius: RadiusParams,
    log: ObservationLog,
    theta_hat: Vector,
    burn_in: usize,
    lambda0: f64,
    stage: EvaStage,
    potential: PotentialTracker,
    cached_v_chol: Option<Cholesky>,
}

impl EvaCLogUcb {
    pub fn new(ctx: PolicyContext, cfg: AlgoConfig, _seed: u64) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let radius = RadiusParams::new(ctx.l, ctx.d, ctx.k, cfg.delta, ctx.kappa);
        let burn_in = burn_in_length(&ctx, &cfg);
        let lambda0 = ctx.d as f64 * (4.0 * (2.0 + burn_in as f64) / cfg.delta).ln();
        let potential = PotentialTracker::new(lambda0, ctx.k);
        Ok(EvaCLogUcb {
            log: ObservationLog::new(ctx.d),
            theta_hat: Vector::zeros(ctx.d),
            stage: EvaStage::BurnIn { designated: None },
            radius,
            burn_in,
            lambda0,
            potential,
            cached_v_chol: None,
            ctx,
            cfg,
        })
    }

    pub fn burn_in_rounds(&self) -> usize {
        self.burn_in
    }

    fn gram_cholesky(&self) -> Result<Cholesky, PolicyError> {
        // the Gram matrix keeps the burn-in regularizer throughout
        Ok(covariance(&self.log, self.ctx.kappa, self.lambda0).cholesky()?)
    }
}

impl Policy for EvaCLogUcb {
    fn name(&self) -> &'static str {
        "eva-clogucb"
    }

    fn select_action(
        &mut self,
        t: usize,
        features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        let v_chol = self.gram_cholesky()?;
        match &mut self.stage {
            EvaStage::BurnIn { designated } => {
                // widest-uncertainty arm first; fall back through the ranking
                // when no feasible action can carry a given arm
                let mut order: Vec<(f64, usize)> = features
                    .iter()
                    .enumerate()
                    .map(|(arm, phi)| (v_chol.inv_quad_form(phi), arm))
                    .collect();
                order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let ranking: Vec<usize> = order.iter().map(|&(_, arm)| arm).collect();
                for &arm in &ranking {
                    if let Some(action) = burn_in_action(env, arm, &ranking) {
                        *designated = Some(arm);
                        self.cached_v_chol = Some(v_chol);
                        return Ok(action);
                    }
                }
                Err(PolicyError::InvalidConfig(
                    "no feasible action carries any base arm".into(),
                ))
            }
            EvaStage::Learning { ellipsoid } => {
                let lambda = self.radius.lambda(t);
                let fit = fit_mle_constrained(
                    &self.log,
                    lambda,
                    ellipsoid,
                    &self.cfg.fit_options(),
                    Some(&self.theta_hat),
                )?;
                self.theta_hat = fit.theta.clone();
                let h = hessian(&fit.theta, &self.log, lambda);
                let h_chol = h.cholesky()?;
                let nu = self.radius.nu(t) * self.cfg.radius_scale;
                let entries = assemble_ucbs(
                    features,
                    &fit.theta,
                    BonusKind::PostBurnIn { nu },
                    self.ctx.kappa,
                    &v_chol,
                    Some(&h_chol),
                );
                let weights: Vec<f64> = entries.iter().map(|e| e.ucb).collect();
                let result = env_oracle(env, &weights)?;
                self.cached_v_chol = Some(v_chol);
                Ok(result.action)
            }
        }
    }

    fn observe(
        &mut self,
        t: usize,
        features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        let v_chol = self.cached_v_chol.take().expect("observe without a matching select");
        match &self.stage {
            EvaStage::BurnIn { designated } => {
                let arm = designated.expect("burn-in select always designates an arm");
                // only the designated arm's outcome is logged; rounds where
                // it never triggered contribute an empty round
                let hit = feedback
                    .triggered
                    .iter()
                    .zip(&feedback.outcomes)
                    .find(|(&a, _)| a == arm)
                    .map(|(_, &x)| x);
                match hit {
                    Some(x) => {
                        let phi = features.get(arm);
                        self.potential.record(
                            v_chol.inv_quad_form(phi),
                            self.ctx.d,
                            self.lambda0,
                            t,
                        );
                        self.log.push_round([(phi.clone(), x)]);
                    }
                    None => self.log.push_round(Vec::new()),
                }
                if t >= self.burn_in {
                    // burn-in over: pin the ellipsoid around the current fit
                    let fit = fit_mle(
                        &self.log,
                        self.lambda0,
                        &self.cfg.fit_options(),
                        Some(&self.theta_hat),
                    )?;
                    self.theta_hat = fit.theta.clone();
                    let v = covariance(&self.log, self.ctx.kappa, self.lambda0);
                    let ellipsoid = post_burn_in_ellipsoid(
                        &fit.theta,
                        &v,
                        self.ctx.l,
                        self.ctx.kappa,
                        self.lambda0,
                    );
                    self.stage = EvaStage::Learning { ellipsoid };
                }
            }
            EvaStage::Learning { .. } => {
                let mut contribution = 0.0;
                for &arm in &feedback.triggered {
                    contribution += v_chol.inv_quad_form(features.get(arm));
                }
                self.potential.record(contribution, self.ctx.d, self.lambda0, t);
                self.log.push_round(
                    feedback
                        .triggered
                        .iter()
                        .zip(&feedback.outcomes)
                        .map(|(&arm, &x)| (features.get(arm).clone(), x)),
                );
            }
        }
        Ok(())
    }

    fn potential_report(&self) -> Option<PotentialReport> {
        Some(self.potential.report())
    }
}

/// Burn-in action carrying `arm`, with any free slots filled by the
/// next-highest-uncertainty arms (`ranking` lists arms most-uncertain first).
/// Matching and routing have no free slots — any feasible completion works —
/// so they defer to `action_containing`.
fn burn_in_action(env: &Environment, arm: usize, ranking: &[usize]) -> Option<Action> {
    match env {
        Environment::Cascading { k, .. } => {
            let mut items = vec![arm];
            items.extend(ranking.iter().copied().filter(|&i| i != arm).take(k - 1));
            Some(Action(items))
        }
        Environment::Pmc(g) => {
            let server = if arm < g.edges.len() {
                g.edges[arm].0
            } else {
                let v = arm - g.edges.len();
                g.edges.iter().find(|&&(_, user)| user == v).map(|&(s, _)| s)?
            };
            // remaining servers ranked by their most uncertain incident edge
            let mut rank_of = vec![usize::MAX; g.edges.len() + g.users];
            for (pos, &a) in ranking.iter().enumerate() {
                rank_of[a] = pos;
            }
            let mut best = vec![usize::MAX; g.servers];
            for (a, &(u, _)) in g.edges.iter().enumerate() {
                best[u] = best[u].min(rank_of[a]);
            }
            let mut others: Vec<usize> =
                (0..g.servers).filter(|&u| u != server && best[u] != usize::MAX).collect();
            others.sort_by_key(|&u| (best[u], u));
            let mut servers = vec![server];
            servers.extend(others.into_iter().take(g.budget - 1));
            servers.sort_unstable();
            Some(Action(servers))
        }
        Environment::Matching(_) | Environment::Routing(_) => action_containing(env, arm),
    }
}

/// Builds a feasible action guaranteed (or best-effort, for probabilistically
/// triggered arms) to carry `arm`; `None` when no such action exists.
fn action_containing(env: &Environment, arm: usize) -> Option<Action> {
    match env {
        Environment::Cascading { m, k } => {
            // leading position: the designated arm is always examined
            let mut items = vec![arm];
            items.extend((0..*m).filter(|&i| i != arm).take(k - 1));
            Some(Action(items))
        }
        Environment::Pmc(g) => {
            let server = if arm < g.edges.len() {
                g.edges[arm].0
            } else {
                let v = arm - g.edges.len();
                // any server adjacent to this user gives the arm a chance to
                // trigger
                g.edges.iter().find(|&&(_, user)| user == v).map(|&(s, _)| s)?
            };
            let mut servers = vec![server];
            servers.extend((0..g.servers).filter(|&u| u != server).take(g.budget - 1));
            servers.sort_unstable();
            Some(Action(servers))
        }
        Environment::Matching(g) => {
            let (fixed_u, fixed_v) = g.pairs[arm];
            let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); g.users];
            for (a, &(u, _)) in g.pairs.iter().enumerate() {
                by_user[u].push(a);
            }
            let mut channel_used = vec![false; g.channels];
            channel_used[fixed_v] = true;
            let mut current = vec![usize::MAX; g.users];
            current[fixed_u] = arm;
            fn fill(
                g: &crate::env::MatchingGraph,
                by_user: &[Vec<usize>],
                user: usize,
                channel_used: &mut Vec<bool>,
                current: &mut Vec<usize>,
            ) -> bool {
                if user == g.users {
                    return true;
                }
                if current[user] != usize::MAX {
                    return fill(g, by_user, user + 1, channel_used, current);
                }
                for &a in &by_user[user] {
                    let (_, v) = g.pairs[a];
                    if channel_used[v] {
                        continue;
                    }
                    channel_used[v] = true;
                    current[user] = a;
                    if fill(g, by_user, user + 1, channel_used, current) {
                        return true;
                    }
                    current[user] = usize::MAX;
                    channel_used[v] = false;
                }
                false
            }
            if fill(g, &by_user, 0, &mut channel_used, &mut current) {
                Some(Action(current))
            } else {
                None
            }
        }
        Environment::Routing(g) => {
            let (a, b) = g.edges[arm];
            // min-hop prefix to the edge tail, avoiding its head so the
            // suffix can start there
            let prefix = bfs_path(g, g.source, a, &[b])?;
            let mut forbidden: Vec<usize> = prefix.iter().map(|&e| g.edges[e].0).collect();
            forbidden.push(a);
            let suffix = if b == g.dest { Vec::new() } else { bfs_path(g, b, g.dest, &forbidden)? };
            let mut path = prefix;
            path.push(arm);
            path.extend(suffix);
            Some(Action(path))
        }
    }
}

/// Shortest edge path `from -> to` avoiding `forbidden` nodes (either end).
fn bfs_path(g: &crate::env::RoutingGraph, from: usize, to: usize, forbidden: &[usize]) -> Option<Vec<usize>> {
    if forbidden.contains(&from) || forbidden.contains(&to) {
        return None;
    }
    if from == to {
        return Some(Vec::new());
    }
    let mut prev: Vec<Option<usize>> = vec![None; g.nodes];
    let mut seen = vec![false; g.nodes];
    seen[from] = true;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(at) = queue.pop_front() {
        for (e, &(x, y)) in g.edges.iter().enumerate() {
            if x != at || seen[y] || forbidden.contains(&y) {
                continue;
            }
            seen[y] = true;
            prev[y] = Some(e);
            if y == to {
                let mut path = Vec::new();
                let mut node = to;
                while node != from {
                    let pe = prev[node].unwrap();
                    path.push(pe);
                    node = g.edges[pe].0;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(y);
        }
    }
    None
}

/// Nonparametric baseline: per-arm empirical means with a count-based bonus,
/// ignoring features entirely.
pub struct Cucb {
    counts: Vec<usize>,
    sums: Vec<f64>,
}

impl Cucb {
    pub fn new(num_arms: usize) -> Self {
        Cucb { counts: vec![0; num_arms], sums: vec![0.0; num_arms] }
    }
}

impl Policy for Cucb {
    fn name(&self) -> &'static str {
        "cucb"
    }

    fn select_action(
        &mut self,
        t: usize,
        _features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        let weights: Vec<f64> = (0..self.counts.len())
            .map(|i| {
                if self.counts[i] == 0 {
                    1.0
                } else {
                    let mean = self.sums[i] / self.counts[i] as f64;
                    let bonus = (1.5 * (t as f64).ln() / self.counts[i] as f64).sqrt();
                    (mean + bonus).clamp(1e-12, 1.0)
                }
            })
            .collect();
        Ok(env_oracle(env, &weights)?.action)
    }

    fn observe(
        &mut self,
        _t: usize,
        _features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        for (&arm, &x) in feedback.triggered.iter().zip(&feedback.outcomes) {
            self.counts[arm] += 1;
            self.sums[arm] += f64::from(x);
        }
        Ok(())
    }
}

/// Random exploration with probability `epsilon`, otherwise the oracle on
/// empirical means (unseen arms get a neutral 1/2).
pub struct EpsilonGreedy {
    epsilon: f64,
    counts: Vec<usize>,
    sums: Vec<f64>,
    rng: ChaCha12Rng,
}

impl EpsilonGreedy {
    pub fn new(num_arms: usize, epsilon: f64, seed: u64) -> Self {
        EpsilonGreedy {
            epsilon,
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for EpsilonGreedy {
    fn name(&self) -> &'static str {
        "epsilon-greedy"
    }

    fn select_action(
        &mut self,
        _t: usize,
        _features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        if self.rng.random::<f64>() < self.epsilon {
            return Ok(env.random_action(&mut self.rng));
        }
        let weights: Vec<f64> = (0..self.counts.len())
            .map(|i| {
                let mean = if self.counts[i] == 0 {
                    0.5
                } else {
                    self.sums[i] / self.counts[i] as f64
                };
                // floor keeps zero-mean arms usable as path edges
                mean.clamp(1e-12, 1.0)
            })
            .collect();
        Ok(env_oracle(env, &weights)?.action)
    }

    fn observe(
        &mut self,
        _t: usize,
        _features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        for (&arm, &x) in feedback.triggered.iter().zip(&feedback.outcomes) {
            self.counts[arm] += 1;
            self.sums[arm] += f64::from(x);
        }
        Ok(())
    }
}

/// Linear-model baseline: ridge regression on outcomes with an elliptical
/// bonus — deliberately misspecified for Bernoulli-through-sigmoid data.
pub struct LinearUcb {
    ctx: PolicyContext,
    delta: f64,
    /// Inverse-variance weighting of each observation (the only difference
    /// between the plain and weighted variants).
    weighted: bool,
    a: crate::numeric::PsdMatrix,
    b: Vector,
}

impl LinearUcb {
    pub fn new(ctx: PolicyContext, delta: f64, weighted: bool) -> Self {
        LinearUcb {
            a: crate::numeric::PsdMatrix::identity(ctx.d),
            b: Vector::zeros(ctx.d),
            ctx,
            delta,
            weighted,
        }
    }

    fn theta(&self) -> Result<Vector, PolicyError> {
        Ok(crate::numeric::psd_solve(&self.a, &self.b)?)
    }
}

impl Policy for LinearUcb {
    fn name(&self) -> &'static str {
        if self.weighted {
            "va-linucb"
        } else {
            "linucb"
        }
    }

    fn select_action(
        &mut self,
        t: usize,
        features: &FeatureMap,
        env: &Environment,
    ) -> Result<Action, PolicyError> {
        let theta = self.theta()?;
        let chol = self.a.cholesky()?;
        let c_t = (self.ctx.d as f64
            * ((1.0 + (t * self.ctx.k) as f64) / self.delta).ln())
        .sqrt();
        let weights: Vec<f64> = features
            .iter()
            .map(|phi| {
                let ucb = theta.dot(phi) + c_t * chol.inv_quad_form(phi).sqrt();
                ucb.clamp(1e-12, 1.0)
            })
            .collect();
        Ok(env_oracle(env, &weights)?.action)
    }

    fn observe(
        &mut self,
        _t: usize,
        features: &FeatureMap,
        _action: &Action,
        feedback: &Feedback,
    ) -> Result<(), PolicyError> {
        let theta = self.theta()?;
        for (&arm, &x) in feedback.triggered.iter().zip(&feedback.outcomes) {
            let phi = features.get(arm);
            let w = if self.weighted {
                // inverse predicted Bernoulli variance, kept away from zero
                let mu = theta.dot(phi).clamp(0.05, 0.95);
                1.0 / (mu * (1.0 - mu)).max(1e-2)
            } else {
                1.0
            };
            self.a.add_outer(phi, w);
            self.b.add_scaled(phi, w * f64::from(x));
        }
        Ok(())
    }
}

/// Every selectable algorithm, for configs and CSV labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    CLogUcb,
    VaCLogUcb,
    EvaCLogUcb,
    Cucb,
    EpsilonGreedy,
    LinUcb,
    VaLinUcb,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 7] = [
        AlgorithmKind::CLogUcb,
        AlgorithmKind::VaCLogUcb,
        AlgorithmKind::EvaCLogUcb,
        AlgorithmKind::Cucb,
        AlgorithmKind::EpsilonGreedy,
        AlgorithmKind::LinUcb,
        AlgorithmKind::VaLinUcb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::CLogUcb => "clogucb",
            AlgorithmKind::VaCLogUcb => "va-clogucb",
            AlgorithmKind::EvaCLogUcb => "eva-clogucb",
            AlgorithmKind::Cucb => "cucb",
            AlgorithmKind::EpsilonGreedy => "epsilon-greedy",
            AlgorithmKind::LinUcb => "linucb",
            AlgorithmKind::VaLinUcb => "va-linucb",
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PolicyError::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Instantiates a policy. `static_features` gates the burn-in variant, which
/// tracks uncertainty of a fixed arm set.
pub fn build_policy(
    kind: AlgorithmKind,
    ctx: PolicyContext,
    cfg: &AlgoConfig,
    num_arms: usize,
    seed: u64,
    static_features: bool,
) -> Result<Box<dyn Policy>, PolicyError> {
    cfg.validate()?;
    Ok(match kind {
        AlgorithmKind::CLogUcb => Box::new(CLogUcb::new(ctx, cfg.clone(), seed)?),
        AlgorithmKind::VaCLogUcb => Box::new(VaCLogUcb::new(ctx, cfg.clone(), seed)?),
        AlgorithmKind::EvaCLogUcb => {
            if !static_features {
                return Err(PolicyError::RequiresStaticFeatures);
            }
            Box::new(EvaCLogUcb::new(ctx, cfg.clone(), seed)?)
        }
        AlgorithmKind::Cucb => Box::new(Cucb::new(num_arms)),
        AlgorithmKind::EpsilonGreedy => Box::new(EpsilonGreedy::new(num_arms, cfg.epsilon, seed)),
        AlgorithmKind::LinUcb => Box::new(LinearUcb::new(ctx, cfg.delta, false)),
        AlgorithmKind::VaLinUcb => Box::new(LinearUcb::new(ctx, cfg.delta, true)),
    })
}
