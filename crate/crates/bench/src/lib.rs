//! Shared fixtures for the criterion benchmarks: deterministic synthetic
//! observation logs, weight vectors, and graphs sized like the experiments.

use clogb::{Environment, MatchingGraph, ObservationLog, PmcGraph, RoutingGraph, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Random vector in the unit ball (coordinates scaled by `1/sqrt(d)`).
pub fn random_feature(rng: &mut ChaCha12Rng, d: usize) -> Vector {
    let scale = 1.0 / (d as f64).sqrt();
    let mut phi = Vector::zeros(d);
    for i in 0..d {
        phi[i] = rng.random_range(-1.0..1.0) * scale;
    }
    phi
}

/// A log with `rounds` rounds of `per_round` observations each, labels drawn
/// from a fixed logistic model.
pub fn observation_log(rounds: usize, d: usize, per_round: usize, seed: u64) -> ObservationLog {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let theta = random_feature(&mut rng, d);
    let mut log = ObservationLog::new(d);
    for _ in 0..rounds {
        let batch: Vec<(Vector, bool)> = (0..per_round)
            .map(|_| {
                let phi = random_feature(&mut rng, d);
                let p = clogb::sigmoid(theta.dot(&phi));
                let y = rng.random::<f64>() < p;
                (phi, y)
            })
            .collect();
        log.push_round(batch);
    }
    log
}

pub fn random_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.05..0.95)).collect()
}

/// Complete bipartite assignment instance.
pub fn full_matching(users: usize, channels: usize) -> (Environment, usize) {
    let pairs: Vec<(usize, usize)> =
        (0..users).flat_map(|u| (0..channels).map(move |v| (u, v))).collect();
    let env = Environment::matching(users, channels, pairs).unwrap();
    let arms = env.num_arms();
    (env, arms)
}

/// Layered DAG from a source through `layers` fully connected layers of
/// `width` nodes to a sink.
pub fn layered_routing(layers: usize, width: usize) -> (Environment, usize) {
    let nodes = 2 + layers * width;
    let node = |layer: usize, i: usize| 1 + layer * width + i;
    let mut edges = Vec::new();
    for i in 0..width {
        edges.push((0, node(0, i)));
        edges.push((node(layers - 1, i), nodes - 1));
    }
    for layer in 1..layers {
        for a in 0..width {
            for b in 0..width {
                edges.push((node(layer - 1, a), node(layer, b)));
            }
        }
    }
    let env = Environment::routing(nodes, edges, 0, nodes - 1).unwrap();
    let arms = env.num_arms();
    (env, arms)
}

/// Random bipartite coverage instance where every server reaches every user
/// with probability 0.3 (plus a spanning diagonal).
pub fn random_pmc(servers: usize, users: usize, budget: usize, seed: u64) -> (Environment, usize) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..servers {
        for v in 0..users {
            if rng.random::<f64>() < 0.3 {
                edges.push((u, v));
            }
        }
    }
    for v in 0..users {
        edges.push((v % servers, v));
    }
    let env = Environment::pmc(servers, users, edges, budget, false).unwrap();
    let arms = env.num_arms();
    (env, arms)
}

/// Borrowable pieces of `MatchingGraph`/`RoutingGraph`/`PmcGraph` from an env.
pub fn as_matching(env: &Environment) -> &MatchingGraph {
    match env {
        Environment::Matching(g) => g,
        _ => panic!("not a matching env"),
    }
}

pub fn as_routing(env: &Environment) -> &RoutingGraph {
    match env {
        Environment::Routing(g) => g,
        _ => panic!("not a routing env"),
    }
}

pub fn as_pmc(env: &Environment) -> &PmcGraph {
    match env {
        Environment::Pmc(g) => g,
        _ => panic!("not a pmc env"),
    }
}
