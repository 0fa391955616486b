//! Shared helpers for unit tests: tiny eigen-solver and seeded sampling.

use crate::numeric::{PsdMatrix, Vector};
use rand::Rng;

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi sweeps.
/// Only used in tests (d <= 8), where an O(d^3) sweep per rotation is fine.
pub fn min_eigenvalue(m: &PsdMatrix) -> f64 {
    let n = m.dim();
    let mut a: Vec<f64> = m.rows().into_iter().flatten().collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-15 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// Uniform vector in the ball of the given radius (rejection-free: sample a
/// cube point and rescale only when it lands outside).
pub fn random_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    let mut v = Vector::zeros(dim);
    for i in 0..dim {
        v[i] = rng.random_range(-radius..radius);
    }
    let norm = v.norm2();
    if norm > radius && norm > 0.0 {
        v = v.scaled(radius / norm);
    }
    v
}
