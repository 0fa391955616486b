//! Confidence radii and per-arm optimism bonuses.
//!
//! Three bonus shapes share the same skeleton `ucb_i = clamp(l(theta_hat .
//! phi_i) + rho_i, 0, 1)` and differ in how `rho_i` weighs the Gram matrix
//! `V_t` against the local Hessian `H_t(theta_hat)`:
//!
//! * agnostic: `rho = scale * beta_t * |phi|_{V^-1}` — no curvature
//!   information, worst-case `kappa` baked into `beta_t`;
//! * adaptive: `rho = sigma_t * l'(theta_hat . phi) * |phi|_{H^-1} +
//!   kappa * sigma_t^2 / 8 * |phi|^2_{V^-1}` — first-order term follows the
//!   local slope, the quadratic tail still pays `kappa` but shrinks twice as
//!   fast;
//! * post-burn-in: same skeleton with `sqrt(e) * nu_t` in front, valid once a
//!   forced-exploration stage has pinned the estimate into a small ellipsoid.

use crate::env::FeatureMap;
use crate::logistic::{Ellipsoid, RegularizerSchedule};
use crate::numeric::{sigmoid, sigmoid_deriv, Cholesky, PsdMatrix, Vector};

/// Worst-case curvature constant over the parameter ball: with `|theta| <= l`
/// and features in the unit ball, `1 / l'(theta . phi) <= 4 e^l` by
/// self-concordance of the link.
pub fn kappa_bound(l: f64) -> f64 {
    4.0 * l.exp()
}

/// Inputs every radius formula needs: parameter-norm bound `l`, feature
/// dimension, per-round observation bound `k`, failure probability, and the
/// curvature constant `kappa >= 4`.
#[derive(Clone, Debug)]
pub struct RadiusParams {
    pub l: f64,
    pub kappa: f64,
    schedule: RegularizerSchedule,
}

impl RadiusParams {
    pub fn new(l: f64, d: usize, k: usize, delta: f64, kappa: f64) -> Self {
        assert!(l.is_finite() && l > 0.0, "parameter bound must be positive");
        assert!(kappa >= 4.0 - 1e-9, "kappa is at least 4 for the logistic link");
        RadiusParams { l, kappa, schedule: RegularizerSchedule::new(d, k, delta) }
    }

    /// Regularization weight `lambda_t = d log(4(1 + tK)/delta)`.
    pub fn lambda(&self, t: usize) -> f64 {
        self.schedule.lambda(t)
    }

    /// Parameter-space radius `gamma_t = (L + 3/2) sqrt(lambda_t)` for the
    /// data-driven confidence set.
    pub fn gamma(&self, t: usize) -> f64 {
        (self.l + 1.5) * self.lambda(t).sqrt()
    }

    /// Gram-norm radius `beta_t = (L^2 + 4L + 19/4) sqrt(kappa lambda_t)`;
    /// the only radius that pays `sqrt(kappa)` up front.
    pub fn beta(&self, t: usize) -> f64 {
        (self.l * self.l + 4.0 * self.l + 4.75) * (self.kappa * self.lambda(t)).sqrt()
    }

    /// Hessian-norm radius `sigma_t = (2L + 1)(2L + 3) sqrt(lambda_t)`.
    pub fn sigma(&self, t: usize) -> f64 {
        (2.0 * self.l + 1.0) * (2.0 * self.l + 3.0) * self.lambda(t).sqrt()
    }

    /// Post-burn-in radius `nu_t = 3 gamma_t`.
    pub fn nu(&self, t: usize) -> f64 {
        3.0 * self.gamma(t)
    }
}

/// Which optimism bonus to attach to the point estimate.
#[derive(Clone, Copy, Debug)]
pub enum BonusKind {
    /// `scale * beta * |phi|_{V^-1}`; `scale = 1/4` exploits the global slope
    /// bound, `scale = 1` is the conservative variant.
    Agnostic { beta: f64, scale: f64 },
    Adaptive { sigma: f64 },
    PostBurnIn { nu: f64 },
}

/// Variance-agnostic bonus `scale * beta * |phi|_{V_t^-1}`.
pub fn agnostic_bonus(beta: f64, scale: f64, phi: &Vector, v_chol: &Cholesky) -> f64 {
    scale * beta * v_chol.inv_quad_form(phi).sqrt()
}

/// Variance-adaptive bonus
/// `sigma l'(theta_hat.phi) |phi|_{H^-1} + kappa sigma^2 / 8 |phi|^2_{V^-1}`.
pub fn adaptive_bonus(
    sigma: f64,
    kappa: f64,
    phi: &Vector,
    theta_hat: &Vector,
    h_chol: &Cholesky,
    v_chol: &Cholesky,
) -> f64 {
    sigma * sigmoid_deriv(theta_hat.dot(phi)) * h_chol.inv_quad_form(phi).sqrt()
        + 0.125 * kappa * sigma * sigma * v_chol.inv_quad_form(phi)
}

/// Post-burn-in bonus
/// `sqrt(e) l'(theta_hat.phi) nu |phi|_{H^-1} + kappa nu^2 / 8 |phi|^2_{V^-1}`.
pub fn post_burn_in_bonus(
    nu: f64,
    kappa: f64,
    phi: &Vector,
    theta_hat: &Vector,
    h_chol: &Cholesky,
    v_chol: &Cholesky,
) -> f64 {
    std::f64::consts::E.sqrt() * sigmoid_deriv(theta_hat.dot(phi)) * nu
        * h_chol.inv_quad_form(phi).sqrt()
        + 0.125 * kappa * nu * nu * v_chol.inv_quad_form(phi)
}

/// Mean estimate, raw bonus, and the clamped index for one base arm.
#[derive(Clone, Copy, Debug)]
pub struct UcbEntry {
    pub mean: f64,
    pub bonus: f64,
    pub ucb: f64,
}

/// Evaluates the chosen bonus for every arm. The Cholesky factorizations are
/// computed once per round by the caller and shared across arms; `h_chol` is
/// only needed for the curvature-aware bonuses.
pub fn assemble_ucbs(
    features: &FeatureMap,
    theta_hat: &Vector,
    kind: BonusKind,
    kappa: f64,
    v_chol: &Cholesky,
    h_chol: Option<&Cholesky>,
) -> Vec<UcbEntry> {
    features
        .iter()
        .map(|phi| {
            let mean = sigmoid(theta_hat.dot(phi));
            let bonus = match kind {
                BonusKind::Agnostic { beta, scale } => agnostic_bonus(beta, scale, phi, v_chol),
                BonusKind::Adaptive { sigma } => adaptive_bonus(
                    sigma,
                    kappa,
                    phi,
                    theta_hat,
                    h_chol.expect("adaptive bonus needs the Hessian factorization"),
                    v_chol,
                ),
                BonusKind::PostBurnIn { nu } => post_burn_in_bonus(
                    nu,
                    kappa,
                    phi,
                    theta_hat,
                    h_chol.expect("post-burn-in bonus needs the Hessian factorization"),
                    v_chol,
                ),
            };
            UcbEntry { mean, bonus, ucb: (mean + bonus).clamp(0.0, 1.0) }
        })
        .collect()
}

/// Intersection of the ambient ball `|theta| <= l_bound` with accumulated
/// slab constraints `|theta . phi| <= cap`, one per historical observation.
/// Keeping the estimate inside this set caps how nonlinear the link can get
/// on past data, which is what lets the curvature-aware bonuses vanish.
#[derive(Clone, Debug)]
pub struct BonusVanishingRegion {
    pub l_bound: f64,
    constraints: Vec<(Vector, f64)>,
}

impl BonusVanishingRegion {
    /// The initial region: just the parameter ball.
    pub fn unconstrained(l_bound: f64) -> Self {
        assert!(l_bound.is_finite() && l_bound > 0.0);
        BonusVanishingRegion { l_bound, constraints: Vec::new() }
    }

    /// Adds one slab `|theta . phi| <= cap` per triggered observation.
    /// Repeated directions keep only the tightest cap, so with a static
    /// feature map the constraint count is bounded by the number of arms.
    pub fn add_round<'a>(&mut self, slabs: impl IntoIterator<Item = (&'a Vector, f64)>) {
        for (phi, cap) in slabs {
            assert!(cap >= 0.0, "slab cap must be nonnegative");
            match self.constraints.iter_mut().find(|(p, _)| p == phi) {
                Some((_, existing)) => *existing = existing.min(cap),
                None => self.constraints.push((phi.clone(), cap)),
            }
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn contains(&self, theta: &Vector) -> bool {
        if theta.norm2() > self.l_bound * (1.0 + 1e-9) + 1e-12 {
            return false;
        }
        self.constraints
            .iter()
            .all(|(phi, cap)| theta.dot(phi).abs() <= cap * (1.0 + 1e-9) + 1e-12)
    }

    /// Largest `c` in [0, 1] with `c * theta` inside the region. The origin is
    /// always a member (caps are nonnegative), so this is well defined.
    fn feasible_scale(&self, theta: &Vector) -> f64 {
        let mut c: f64 = 1.0;
        let norm = theta.norm2();
        if norm > self.l_bound {
            c = c.min(self.l_bound / norm);
        }
        for (phi, cap) in &self.constraints {
            let dot = theta.dot(phi).abs();
            if dot > *cap {
                c = c.min(cap / dot);
            }
        }
        c
    }
}

/// Approximate Euclidean projection onto a [`BonusVanishingRegion`].
///
/// Penalized gradient descent with a graduated penalty schedule (warm-started
/// across stages, so the iterate tracks the constrained optimum as the walls
/// harden), run from the rescaled target plus a few deterministic perturbed
/// restarts. Every candidate is rescaled onto the region at the end (exact,
/// since the region is star-shaped around the origin) and the closest
/// feasible point wins. Heuristic by design: the exact projection is a QP we
/// do not need to solve to optimality.
pub fn heuristic_projection(
    region: &BonusVanishingRegion,
    target: &Vector,
    seed: u64,
) -> Vector {
    if region.contains(target) {
        return target.clone();
    }
    use rand::Rng;
    use rand::SeedableRng;
    let dim = target.dim();
    let mut best = target.scaled(region.feasible_scale(target));
    let mut best_dist = best.minus(target).norm2();

    let objective = |theta: &Vector, w: f64| -> f64 {
        let diff = theta.minus(target);
        let mut f = diff.dot(&diff);
        let excess = (theta.norm2() - region.l_bound).max(0.0);
        f += w * excess * excess;
        for (phi, cap) in &region.constraints {
            let over = (theta.dot(phi).abs() - cap).max(0.0);
            f += w * over * over;
        }
        f
    };
    let gradient = |theta: &Vector, w: f64| -> Vector {
        let mut g = theta.minus(target).scaled(2.0);
        let norm = theta.norm2();
        let excess = norm - region.l_bound;
        if excess > 0.0 && norm > 0.0 {
            g.add_scaled(theta, 2.0 * w * excess / norm);
        }
        for (phi, cap) in &region.constraints {
            let dot = theta.dot(phi);
            let over = dot.abs() - cap;
            if over > 0.0 {
                g.add_scaled(phi, 2.0 * w * over * dot.signum());
            }
        }
        g
    };

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    for restart in 0..8 {
        let mut theta = if restart == 0 {
            target.scaled(region.feasible_scale(target))
        } else {
            let mut perturbed = target.clone();
            for i in 0..dim {
                perturbed[i] += rng.random_range(-0.5..0.5) * region.l_bound;
            }
            perturbed.scaled(region.feasible_scale(&perturbed))
        };
        for stage in 0..6 {
            let w = 10f64.powi(stage + 1);
            let mut f = objective(&theta, w);
            let mut step = 1.0_f64;
            for _ in 0..80 {
                let g = gradient(&theta, w);
                let gn2 = g.dot(&g);
                if gn2 < 1e-18 {
                    break;
                }
                step = (step * 2.0).min(1.0);
                let mut moved = false;
                while step > 1e-14 {
                    let mut cand = theta.clone();
                    cand.add_scaled(&g, -step);
                    let cf = objective(&cand, w);
                    if cf <= f - 1e-4 * step * gn2 {
                        theta = cand;
                        f = cf;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
        // exact repair: scaling toward the origin restores feasibility
        let feasible = theta.scaled(region.feasible_scale(&theta));
        let dist = feasible.minus(target).norm2();
        if dist < best_dist {
            best = feasible;
            best_dist = dist;
        }
    }
    debug_assert!(region.contains(&best));
    best
}

/// Confidence ellipsoid pinned down by the burn-in stage:
/// `{ theta : |theta - center|_V <= (L^2 + 4L + 19/4) sqrt(kappa lambda0) }`.
pub fn post_burn_in_ellipsoid(
    center: &Vector,
    v: &PsdMatrix,
    l: f64,
    kappa: f64,
    lambda0: f64,
) -> Ellipsoid {
    let radius = (l * l + 4.0 * l + 4.75) * (kappa * lambda0).sqrt();
    Ellipsoid::new(center.clone(), v.clone(), radius)
}
