//! Diagonal Gaussian, Dirichlet and categorical distributions with the
//! derivatives PPO needs.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use coolsim_core::{Error, Result};

use crate::special::{digamma, ln_gamma, trigamma};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Smallest valve fraction a Dirichlet draw may take.
pub const SIMPLEX_FLOOR: f64 = 1e-12;

pub fn gaussian_logpdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * LN_2PI
}

pub fn gaussian_entropy(std: f64) -> f64 {
    0.5 + 0.5 * LN_2PI + std.ln()
}

fn invalid(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        op,
        reason: reason.into(),
    }
}

pub fn dirichlet_logpdf(x: &[f64], alpha: &[f64]) -> Result<f64> {
    if x.len() != alpha.len() {
        return Err(Error::Shape {
            op: "dirichlet_logpdf",
            expected: alpha.len(),
            got: x.len(),
        });
    }
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(invalid("dirichlet_logpdf", "concentrations must be positive"));
    }
    if x.iter().any(|v| !(*v > 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("dirichlet_logpdf", "point is not on the open simplex"));
    }
    Ok(dirichlet_logpdf_unchecked(x, alpha))
}

pub fn dirichlet_logpdf_unchecked(x: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    ln_gamma(a0) + alpha.iter().zip(x).map(|(a, v)| (a - 1.0) * v.ln() - ln_gamma(*a)).sum::<f64>()
}

/// `d logpdf / d alpha_k = psi(a0) - psi(a_k) + ln x_k`.
pub fn dirichlet_logpdf_grad(x: &[f64], alpha: &[f64]) -> Vec<f64> {
    let a0: f64 = alpha.iter().sum();
    let d0 = digamma(a0);
    alpha.iter().zip(x).map(|(a, v)| d0 - digamma(*a) + v.ln()).collect()
}

pub fn dirichlet_entropy(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let ln_b = alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>() - ln_gamma(a0);
    ln_b + (a0 - k) * digamma(a0) - alpha.iter().map(|a| (a - 1.0) * digamma(*a)).sum::<f64>()
}

/// `dH/d alpha_k = (a0 - K) psi1(a0) - (a_k - 1) psi1(a_k)`.
pub fn dirichlet_entropy_grad(alpha: &[f64]) -> Vec<f64> {
    let k = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let t0 = (a0 - k) * trigamma(a0);
    alpha.iter().map(|a| t0 - (a - 1.0) * trigamma(*a)).collect()
}

pub fn dirichlet_mean(alpha: &[f64]) -> Vec<f64> {
    let a0: f64 = alpha.iter().sum();
    alpha.iter().map(|a| a / a0).collect()
}

/// Normalized gamma variates; components are floored at `SIMPLEX_FLOOR`
/// and renormalized so every fraction is strictly inside `(0, 1)`.
pub fn sample_dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let s: f64 = g.iter().sum();
    if s > 0.0 && s.is_finite() {
        g.iter_mut().for_each(|v| *v /= s);
    } else {
        let n = g.len() as f64;
        g.iter_mut().for_each(|v| *v = 1.0 / n);
    }
    if g.iter().any(|v| *v < SIMPLEX_FLOOR) {
        g.iter_mut().for_each(|v| *v = v.max(SIMPLEX_FLOOR));
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
    }
    g
}

pub fn categorical_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn sample_categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
