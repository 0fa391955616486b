//! Go/no-go acceptance suite: ten checks covering oracle exactness, estimator
//! correctness, link identities, the elliptical-potential invariant,
//! confidence coverage, optimism of every bonus, regret separation,
//! sublinearity, reward-smoothness conditions, and byte-level
//! reproducibility. Each check prints one verdict line; run with
//! `cargo test --test acceptance -- --nocapture` to see them as they land.

use std::fmt::Write as _;
use std::time::Instant;

use clogb::{
    assemble_ucbs, covariance, emit_csv, env_oracle, fit_mle, grad_log_loss, hessian, kappa_bound,
    log_loss, parse_experiment, run_experiment, run_oracle_crosschecks, sample_outcomes, sigmoid,
    sigmoid_deriv, sigmoid_second_deriv, synth_instance, tpvm_coefficients, AlgorithmKind,
    BonusKind, Environment, ExperimentResult, FitOptions, InstanceSpec, ObservationLog,
    RadiusParams, TpvmCoefficients, VariantSpec, Vector,
};
use clogb::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Absolute slack for comparisons whose exactness is limited only by
/// floating-point roundoff.
const SLACK: f64 = 1e-9;

/// The shipped benchmark configuration doubles as the acceptance experiment,
/// so the reference numbers documented next to it cannot drift from the bar
/// enforced here.
const BENCHMARK_CONFIG: &str = include_str!("../../../configs/cascade-benchmark.conf");

struct Verdict {
    id: usize,
    label: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(out: &mut Vec<Verdict>, id: usize, label: &'static str, passed: bool, detail: String) {
    out.push(Verdict { id, label, passed, detail });
}

// ---------------------------------------------------------------------------
// Criterion 1: fast oracles agree with exhaustive enumeration.
// ---------------------------------------------------------------------------

fn criterion_1(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let reports = run_oracle_crosschecks(20_260_814);
    let secs = start.elapsed().as_secs_f64();
    let families = [
        "topk-vs-enumeration",
        "assignment-vs-enumeration",
        "path-vs-enumeration",
        "greedy-coverage-ratio",
    ];
    let mut passed = secs < 30.0 && reports.iter().all(|r| r.passed());
    let mut detail = String::new();
    for name in families {
        match reports.iter().find(|r| r.name == name) {
            Some(r) => {
                passed &= r.passed() && r.cases >= 100;
                let _ = write!(detail, "{} {}/{} ok; ", r.name, r.cases - r.failures, r.cases);
            }
            None => passed = false,
        }
    }
    let _ = write!(detail, "{secs:.1} s");
    verdict(out, 1, "oracle crosschecks", passed, detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient/Hessian match finite differences; the solver reaches
// its tolerance; the one-dimensional fit agrees with grid search.
// ---------------------------------------------------------------------------

fn random_log(rng: &mut ChaCha12Rng, dim: usize, rounds: usize, per_round: usize) -> ObservationLog {
    let mut log = ObservationLog::new(dim);
    for _ in 0..rounds {
        let batch: Vec<(Vector, bool)> = (0..per_round)
            .map(|_| {
                let coords: Vec<f64> =
                    (0..dim).map(|_| rng.random_range(-1.0..1.0) / (dim as f64).sqrt()).collect();
                (Vector::from_vec(coords), rng.random::<f64>() < 0.5)
            })
            .collect();
        log.push_round(batch);
    }
    log
}

fn criterion_2(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let h = 1e-5;
    let mut worst_grad: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=4);
        let log = random_log(&mut rng, dim, 6, 3);
        let lambda = rng.random_range(0.5..4.0);
        let coords: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = Vector::from_vec(coords);

        let grad = grad_log_loss(&theta, &log, lambda);
        let mut grad_err = 0.0;
        let mut grad_norm = 0.0;
        for i in 0..dim {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fd = (log_loss(&plus, &log, lambda) - log_loss(&minus, &log, lambda)) / (2.0 * h);
            grad_err += (fd - grad[i]) * (fd - grad[i]);
            grad_norm += grad[i] * grad[i];
        }
        worst_grad = worst_grad.max(grad_err.sqrt() / grad_norm.sqrt().max(1e-12));

        let hess = hessian(&theta, &log, lambda);
        let mut hess_err = 0.0;
        let mut hess_norm = 0.0;
        for i in 0..dim {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let gp = grad_log_loss(&plus, &log, lambda);
            let gm = grad_log_loss(&minus, &log, lambda);
            for j in 0..dim {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                hess_err += (fd - hess.get(i, j)) * (fd - hess.get(i, j));
                hess_norm += hess.get(i, j) * hess.get(i, j);
            }
        }
        worst_hess = worst_hess.max(hess_err.sqrt() / hess_norm.sqrt().max(1e-12));
    }

    // Solver tolerance at the benchmark horizon.
    let horizon = 2000.0;
    let big_log = random_log(&mut rng, 3, 300, 3);
    let fit = fit_mle(
        &big_log,
        5.0,
        &FitOptions { tol: 1.0 / horizon, max_iter: 10_000 },
        None,
    )
    .expect("solver runs");
    let solver_ok = fit.converged && fit.grad_norm <= 1.0 / horizon;

    // One-dimensional agreement with grid search.
    let mut grid_log = ObservationLog::new(1);
    for _ in 0..150 {
        let batch: Vec<(Vector, bool)> = (0..2)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y = rng.random::<f64>() < sigmoid(0.7 * x);
                (Vector::from_vec(vec![x]), y)
            })
            .collect();
        grid_log.push_round(batch);
    }
    let lambda = 1.0;
    let mut best = (f64::INFINITY, 0.0);
    let mut x = -3.0;
    while x <= 3.0 {
        let loss = log_loss(&Vector::from_vec(vec![x]), &grid_log, lambda);
        if loss < best.0 {
            best = (loss, x);
        }
        x += 1e-3;
    }
    let grid_fit =
        fit_mle(&grid_log, lambda, &FitOptions::default(), None).expect("1-d solver runs");
    let grid_gap = (grid_fit.theta[0] - best.1).abs();

    let secs = start.elapsed().as_secs_f64();
    let passed =
        worst_grad <= 1e-5 && worst_hess <= 1e-4 && solver_ok && grid_gap <= 0.05 && secs < 30.0;
    verdict(
        out,
        2,
        "estimator correctness",
        passed,
        format!(
            "grad rel err {worst_grad:.2e}, hessian rel err {worst_hess:.2e}, \
             solver grad norm {:.2e} (tol {:.2e}), 1-d grid gap {grid_gap:.4}, {secs:.1} s",
            fit.grad_norm,
            1.0 / horizon
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: link identities and self-concordance on a dense grid.
// ---------------------------------------------------------------------------

fn criterion_3(out: &mut Vec<Verdict>) {
    let mut worst_identity: f64 = 0.0;
    let mut self_concordant = true;
    for i in 0..=2000 {
        let x = -10.0 + 0.01 * i as f64;
        let l = sigmoid(x);
        let d1 = sigmoid_deriv(x);
        let d2 = sigmoid_second_deriv(x);
        worst_identity = worst_identity
            .max((l + sigmoid(-x) - 1.0).abs())
            .max((d1 - l * (1.0 - l)).abs())
            .max((d2 - d1 * (1.0 - 2.0 * l)).abs());
        self_concordant &= d2.abs() <= d1 + 1e-12;
        self_concordant &= d1 <= 0.25 + 1e-12;
    }
    let passed = worst_identity <= 1e-12 && self_concordant;
    verdict(
        out,
        3,
        "link identities and self-concordance",
        passed,
        format!("2001 grid points, worst identity error {worst_identity:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4, 5, 6 share one instrumented matrix of 200 seeded trials
// (cascading, m = 10, K = 3, d = 3, T = 500, delta = 0.1). Every round
// refits the estimator, measures the distance to the truth in both the
// Gram and Hessian norms, checks the running elliptical-potential
// inequality, and evaluates all three bonus constructions.
// ---------------------------------------------------------------------------

const COVERAGE_TRIALS: usize = 200;
const COVERAGE_HORIZON: usize = 500;
const COVERAGE_SEED: u64 = 91;

/// Damped Newton refit for the instrumented loop. The loop refits after
/// every single round, which first-order descent makes needlessly slow; at
/// d = 3 a handful of Newton steps reaches the same penalized MLE to far
/// below the slack used by the checks.
fn newton_fit(log: &ObservationLog, lambda: f64, warm: &Vector) -> Vector {
    let mut theta = warm.clone();
    for _ in 0..50 {
        let grad = grad_log_loss(&theta, log, lambda);
        if grad.norm2() <= 1e-8 {
            break;
        }
        let step = hessian(&theta, log, lambda)
            .cholesky()
            .expect("penalized Hessian is positive definite")
            .solve(&grad);
        let base = log_loss(&theta, log, lambda);
        let mut t = 1.0;
        loop {
            let mut candidate = theta.clone();
            candidate.add_scaled(&step, -t);
            if log_loss(&candidate, log, lambda) <= base || t < 1e-6 {
                theta = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    theta
}

struct CoverageMatrix {
    covered_trials: usize,
    total_rounds: usize,
    event_rounds: usize,
    sandwich_checks: usize,
    sandwich_violations: usize,
    potential_violations: usize,
    secs: f64,
    digest: String,
}

fn coverage_matrix() -> CoverageMatrix {
    let start = Instant::now();
    let (d, m, k) = (3usize, 10usize, 3usize);
    let delta = 0.1;
    let l = 1.0;
    let kappa = kappa_bound(l);
    let radius = RadiusParams::new(l, d, k, delta, kappa);
    // The potential bound is only claimed when the first regularizer
    // dominates the per-round trigger count.
    assert!(radius.lambda(1) >= k as f64);

    let mut covered_trials = 0;
    let mut total_rounds = 0;
    let mut event_rounds = 0;
    let mut sandwich_checks = 0;
    let mut sandwich_violations = 0;
    let mut potential_violations = 0;
    let mut digest = String::new();

    for trial in 0..COVERAGE_TRIALS {
        let spec = InstanceSpec {
            variant: VariantSpec::Cascading { m, k },
            d,
            l,
            seed: derive_seed(COVERAGE_SEED, 1_000_000 + trial as u64),
            time_varying: false,
        };
        let (truth, env) = synth_instance(&spec).expect("coverage instance builds");
        let features = truth.features_at(1);
        let mu_true = truth.means(&features);
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(COVERAGE_SEED, trial as u64));

        let mut log = ObservationLog::new(d);
        let mut warm = Vector::zeros(d);
        let mut covered = true;
        let mut pot_sum = 0.0;
        let mut last_dist_v = 0.0;

        for t in 1..=COVERAGE_HORIZON {
            let lambda = radius.lambda(t);
            let theta_hat = newton_fit(&log, lambda, &warm);
            warm = theta_hat.clone();

            let v = covariance(&log, kappa, lambda);
            let h = hessian(&theta_hat, &log, lambda);
            let v_chol = v.cholesky().expect("V is positive definite");
            let h_chol = h.cholesky().expect("H is positive definite");

            let gap = theta_hat.minus(&truth.theta_star);
            let dist_v = v.quad_form(&gap).sqrt();
            let dist_h = h.quad_form(&gap).sqrt();
            last_dist_v = dist_v;

            let beta = radius.beta(t);
            let sigma = radius.sigma(t);
            let nu = radius.nu(t);
            if dist_v > beta + SLACK {
                covered = false;
            }

            // Region event under which every bonus is provably optimistic:
            // inside it the Gram distance is within min(beta, sqrt(kappa) nu)
            // and the Hessian distance within min(sigma, nu).
            let event = dist_v <= beta.min(kappa.sqrt() * nu) + SLACK
                && dist_h <= sigma.min(nu) + SLACK;
            if event {
                event_rounds += 1;
                for kind in [
                    BonusKind::Agnostic { beta, scale: 0.25 },
                    BonusKind::Adaptive { sigma },
                    BonusKind::PostBurnIn { nu },
                ] {
                    let entries =
                        assemble_ucbs(&features, &theta_hat, kind, kappa, &v_chol, Some(&h_chol));
                    for (i, entry) in entries.iter().enumerate() {
                        sandwich_checks += 1;
                        let lower_ok = mu_true[i] <= entry.ucb + SLACK;
                        let upper_ok = entry.ucb <= mu_true[i] + 2.0 * entry.bonus + SLACK;
                        if !lower_ok || !upper_ok {
                            sandwich_violations += 1;
                        }
                    }
                }
            }

            // Behavior policy: the practically scaled agnostic index.
            let behavior = assemble_ucbs(
                &features,
                &theta_hat,
                BonusKind::Agnostic { beta: 0.05 * beta, scale: 0.25 },
                kappa,
                &v_chol,
                None,
            );
            let weights: Vec<f64> = behavior.iter().map(|e| e.ucb).collect();
            let action = env_oracle(&env, &weights).expect("oracle runs").action;

            let outcomes = sample_outcomes(&truth, &features, &mut rng);
            let feedback = env.trigger_and_observe(&action, &outcomes).expect("feasible action");

            pot_sum += feedback
                .triggered
                .iter()
                .map(|&i| v_chol.inv_quad_form(features.get(i)))
                .sum::<f64>();
            let bound = 2.0 * d as f64 * (radius.lambda(t + 1) + t as f64).ln();
            total_rounds += 1;
            if pot_sum > bound + SLACK {
                potential_violations += 1;
            }

            log.push_round(
                feedback
                    .triggered
                    .iter()
                    .zip(&feedback.outcomes)
                    .map(|(&i, &y)| (features.get(i).clone(), y)),
            );
        }

        if covered {
            covered_trials += 1;
        }
        let _ = write!(digest, "{trial}:{covered}:{last_dist_v:.17e}:{pot_sum:.17e};");
    }

    CoverageMatrix {
        covered_trials,
        total_rounds,
        event_rounds,
        sandwich_checks,
        sandwich_violations,
        potential_violations,
        secs: start.elapsed().as_secs_f64(),
        digest,
    }
}

fn criterion_4(out: &mut Vec<Verdict>, cov: &CoverageMatrix, bench: &ExperimentResult) {
    let final_reports: Vec<_> =
        bench.trials.iter().filter_map(|t| t.potential.as_ref()).collect();
    let applicable = final_reports.iter().filter(|p| p.applicable).count();
    let bench_ok = applicable > 0 && final_reports.iter().all(|p| !p.violated());
    let passed = cov.potential_violations == 0 && bench_ok;
    verdict(
        out,
        4,
        "elliptical potential",
        passed,
        format!(
            "{} rounds checked, {} violations; {} applicable end-of-run reports, all within bound",
            cov.total_rounds, cov.potential_violations, applicable
        ),
    );
}

fn criterion_5(out: &mut Vec<Verdict>, cov: &CoverageMatrix) {
    let fraction = cov.covered_trials as f64 / COVERAGE_TRIALS as f64;
    let passed = fraction >= 0.9 && cov.secs < 300.0;
    verdict(
        out,
        5,
        "confidence coverage",
        passed,
        format!(
            "{}/{COVERAGE_TRIALS} trials covered at every round (fraction {fraction:.3}), {:.1} s",
            cov.covered_trials, cov.secs
        ),
    );
}

fn criterion_6(out: &mut Vec<Verdict>, cov: &CoverageMatrix) {
    let passed = cov.sandwich_violations == 0 && cov.event_rounds > 0;
    verdict(
        out,
        6,
        "optimism sandwich",
        passed,
        format!(
            "region event held in {}/{} rounds; {} sandwich checks, {} violations",
            cov.event_rounds, cov.total_rounds, cov.sandwich_checks, cov.sandwich_violations
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 7, 8, 10 share the shipped cascading benchmark (m = 50, K = 5,
// d = 5, T = 2000, five seeded trials).
// ---------------------------------------------------------------------------

fn benchmark_run() -> (ExperimentResult, Vec<u8>, f64) {
    let cfg = parse_experiment(BENCHMARK_CONFIG, None).expect("benchmark config parses");
    let start = Instant::now();
    let result = run_experiment(&cfg).expect("benchmark experiment runs");
    let secs = start.elapsed().as_secs_f64();
    let mut csv = Vec::new();
    emit_csv(&result, &mut csv).expect("csv serializes");
    (result, csv, secs)
}

fn criterion_7(out: &mut Vec<Verdict>, bench: &ExperimentResult, secs: f64) {
    let clog = bench.mean_final_regret(AlgorithmKind::CLogUcb);
    let va = bench.mean_final_regret(AlgorithmKind::VaCLogUcb);
    let cucb = bench.mean_final_regret(AlgorithmKind::Cucb);
    let lin = bench.mean_final_regret(AlgorithmKind::LinUcb);
    let bar = 0.7 * cucb.min(lin);
    let passed = clog <= bar + SLACK && va <= clog + SLACK && secs < 600.0;
    verdict(
        out,
        7,
        "regret separation",
        passed,
        format!(
            "mean final regret: clogucb {clog:.2} <= 0.7 x min(cucb {cucb:.2}, linucb {lin:.2}) \
             = {bar:.2}; va-clogucb {va:.2} <= clogucb {clog:.2}; {secs:.0} s"
        ),
    );
}

fn criterion_8(out: &mut Vec<Verdict>, bench: &ExperimentResult) {
    let horizon = bench.horizon;
    let checkpoint = 500;
    let mut passed = true;
    let mut detail = String::new();
    for kind in [AlgorithmKind::CLogUcb, AlgorithmKind::VaCLogUcb, AlgorithmKind::EvaCLogUcb] {
        let early = bench.mean_regret_at(kind, checkpoint) / checkpoint as f64;
        let late = bench.mean_regret_at(kind, horizon) / horizon as f64;
        let ratio = late / early;
        passed &= ratio <= 0.7 + SLACK;
        let _ = write!(detail, "{kind} per-round ratio {ratio:.3}; ");
    }
    let _ = write!(detail, "bar 0.7");
    verdict(out, 8, "sublinearity", passed, detail);
}

// ---------------------------------------------------------------------------
// Criterion 9: monotonicity and 1-norm triggering-modulated smoothness on
// random perturbation pairs, plus the recorded smoothness constants.
// ---------------------------------------------------------------------------

fn criterion_9(out: &mut Vec<Verdict>) {
    let mut rng = ChaCha12Rng::seed_from_u64(67);
    let envs = [
        Environment::cascading(5, 3).expect("cascading builds"),
        Environment::routing(5, vec![(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (3, 4)], 0, 4)
            .expect("routing builds"),
    ];
    let pairs = 1000;
    let tol = 1e-10;
    let mut monotone_violations = 0;
    let mut smoothness_violations = 0;
    for env in &envs {
        let arms = env.num_arms();
        for _ in 0..pairs {
            let action = env.random_action(&mut rng);

            // Condition: reward is monotone in the means.
            let lo: Vec<f64> = (0..arms).map(|_| rng.random_range(0.01..0.94)).collect();
            let hi: Vec<f64> =
                lo.iter().map(|&x| (x + rng.random_range(0.0..0.05)).min(0.999)).collect();
            let r_lo = env.expected_reward(&action, &lo).expect("reward evaluates");
            let r_hi = env.expected_reward(&action, &hi).expect("reward evaluates");
            if r_lo > r_hi + tol {
                monotone_violations += 1;
            }

            // Condition: |r(S; mu') - r(S; mu)| <= sum_i p_i(S, mu) |Delta_i|.
            let mu: Vec<f64> = (0..arms).map(|_| rng.random_range(0.01..0.99)).collect();
            let mu_prime: Vec<f64> = (0..arms).map(|_| rng.random_range(0.01..0.99)).collect();
            let lhs = (env.expected_reward(&action, &mu_prime).expect("reward evaluates")
                - env.expected_reward(&action, &mu).expect("reward evaluates"))
            .abs();
            let rhs: f64 = (0..arms)
                .map(|i| {
                    env.triggering_prob(i, &action, &mu).expect("probability evaluates")
                        * (mu[i] - mu_prime[i]).abs()
                })
                .sum();
            if lhs > rhs + tol {
                smoothness_violations += 1;
            }
        }
    }

    let pmc_users = 4;
    let pmc_edges: Vec<(usize, usize)> =
        (0..3).flat_map(|s| (0..pmc_users).map(move |u| (s, u))).collect();
    let pmc = Environment::pmc(3, pmc_users, pmc_edges, 2, false).expect("pmc builds");
    let pmc_coeffs = tpvm_coefficients(&pmc);
    let constants_ok = tpvm_coefficients(&envs[0])
        == TpvmCoefficients { b_v: Some(1.0), b_1: 1.0, lambda: Some(1.0) }
        && tpvm_coefficients(&envs[1])
            == TpvmCoefficients { b_v: Some(1.0), b_1: 1.0, lambda: Some(1.0) }
        && pmc_coeffs.b_v == Some(3.0 * (2.0 * pmc_users as f64).sqrt())
        && pmc_coeffs.b_1 == 1.0
        && pmc_coeffs.lambda == Some(2.0)
        && tpvm_coefficients(
            &Environment::matching(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)])
                .expect("matching builds"),
        ) == TpvmCoefficients { b_v: None, b_1: 1.0, lambda: None };

    let passed = monotone_violations == 0 && smoothness_violations == 0 && constants_ok;
    verdict(
        out,
        9,
        "reward smoothness",
        passed,
        format!(
            "{} pairs per environment: {monotone_violations} monotonicity and \
             {smoothness_violations} smoothness violations; recorded constants verified",
            pairs
        ),
    );
}

fn criterion_10(
    out: &mut Vec<Verdict>,
    cov: &CoverageMatrix,
    cov_replay: &CoverageMatrix,
    csv: &[u8],
    csv_replay: &[u8],
) {
    let passed = csv == csv_replay && cov.digest == cov_replay.digest;
    verdict(
        out,
        10,
        "byte reproducibility",
        passed,
        format!(
            "benchmark csv identical across replays ({} bytes); coverage digest identical \
             ({COVERAGE_TRIALS} trials)",
            csv.len()
        ),
    );
}

#[test]
fn acceptance() {
    let mut verdicts = Vec::new();

    criterion_1(&mut verdicts);
    criterion_2(&mut verdicts);
    criterion_3(&mut verdicts);

    println!("[acceptance] running the 200-trial coverage matrix, twice for reproducibility...");
    let cov = coverage_matrix();
    let cov_replay = coverage_matrix();

    println!("[acceptance] running the cascading benchmark, twice for reproducibility...");
    let (bench, csv, bench_secs) = benchmark_run();
    let (_, csv_replay, _) = benchmark_run();

    criterion_4(&mut verdicts, &cov, &bench);
    criterion_5(&mut verdicts, &cov);
    criterion_6(&mut verdicts, &cov);
    criterion_7(&mut verdicts, &bench, bench_secs);
    criterion_8(&mut verdicts, &bench);
    criterion_9(&mut verdicts);
    criterion_10(&mut verdicts, &cov, &cov_replay, &csv, &csv_replay);

    verdicts.sort_by_key(|v| v.id);
    let mut failed = Vec::new();
    for v in &verdicts {
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!("[acceptance] criterion {} ({}): {status} — {}", v.id, v.label, v.detail);
        if !v.passed {
            failed.push(v.id);
        }
    }
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
