//! One-dimensional dual of the Cressie-Read ball problem and its certificate.
//!
//! `h(β) = β + c_γ(η) · (E_P[(f − β)_+^{γ*}])^{1/γ*}` is convex in β and its
//! minimum equals the worst-case expectation. `h` is C¹ with
//! `h'(β) = 1 − c · E[(f−β)_+^{γ*−1}] / E[(f−β)_+^{γ*}]^{1/γ}`.

use serde::{Deserialize, Serialize};

use super::divergence::{c_gamma, gamma_star, phi_conjugate};
use super::{inner_max_bruteforce, DivergenceKind, DroError, DroInstance};

const MAX_BRACKET_WIDTH: f64 = 1e6;
const MAX_GOLDEN_ITERS: usize = 1000;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn check_gamma(gamma: f64) -> Result<(), DroError> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(DroError::Domain(format!("γ must lie in (1, ∞), got {gamma}")))
    }
}

/// Largest excess `max (f − β)_+` and `mean ((f − β)_+ / max)^p`, so that
/// large exponents never overflow. The mean is 0 when nothing exceeds β.
fn scaled_excess(scores: &[f64], beta: f64, p: f64) -> (f64, f64) {
    let m = scores.iter().map(|f| f - beta).fold(0.0, f64::max);
    if m <= 0.0 {
        return (0.0, 0.0);
    }
    let s: f64 = scores
        .iter()
        .map(|&f| {
            let x = f - beta;
            if x > 0.0 {
                (x / m).powf(p)
            } else {
                0.0
            }
        })
        .sum();
    (m, s / scores.len() as f64)
}

/// `E[(f − β)_+^p]^{1/p}`.
fn power_mean_excess(scores: &[f64], beta: f64, p: f64) -> f64 {
    let (m, s) = scaled_excess(scores, beta, p);
    m * s.powf(1.0 / p)
}

/// `h(β)` at the instance's radius.
pub fn dual_value(inst: &DroInstance, gamma: f64, beta: f64) -> f64 {
    let gs = gamma_star(gamma);
    let c = c_gamma(inst.radius, gamma);
    beta + c * power_mean_excess(&inst.scores, beta, gs)
}

/// `h'(β)`; equals 1 once β is at or above every score.
pub fn dual_derivative(inst: &DroInstance, gamma: f64, beta: f64) -> f64 {
    let gs = gamma_star(gamma);
    let c = c_gamma(inst.radius, gamma);
    let (m, top) = scaled_excess(&inst.scores, beta, gs);
    if m <= 0.0 {
        return 1.0;
    }
    // The scale cancels because γ*/γ = γ* − 1.
    let (_, lower) = scaled_excess(&inst.scores, beta, gs - 1.0);
    1.0 - c * lower / top.powf(1.0 / gamma)
}

/// Optimal multiplier of the divergence constraint for a given β:
/// `λ* = (γ−1) (γ(γ−1)η + 1)^{−1/γ*} E[(f−β)_+^{γ*}]^{1/γ*}`.
pub fn lambda_star(inst: &DroInstance, gamma: f64, beta: f64) -> f64 {
    let gs = gamma_star(gamma);
    (gamma - 1.0)
        * (gamma * (gamma - 1.0) * inst.radius + 1.0).powf(-1.0 / gs)
        * power_mean_excess(&inst.scores, beta, gs)
}

/// Two-multiplier Lagrangian dual `λη + ρ + λ E[φ*((f − ρ)/λ)]`.
pub fn lagrangian_dual(inst: &DroInstance, gamma: f64, lambda: f64, rho: f64) -> f64 {
    let n = inst.len() as f64;
    if lambda <= 0.0 {
        // Perspective limit: finite only when ρ dominates every score.
        return if inst.scores.iter().all(|&f| f <= rho) {
            rho
        } else {
            f64::INFINITY
        };
    }
    let conj: f64 = inst
        .scores
        .iter()
        .map(|&f| phi_conjugate((f - rho) / lambda, gamma))
        .sum::<f64>()
        / n;
    lambda * inst.radius + rho + lambda * conj
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMinimum {
    pub beta: f64,
    pub value: f64,
    pub iterations: usize,
    /// The minimizer lies beyond the widest bracket (η = 0 sends β* to
    /// −∞); `value` is then the infimum approached at the bracket end.
    pub bracket_capped: bool,
}

fn golden_section<F: Fn(f64) -> f64>(h: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64, usize) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut h1 = h(x1);
    let mut h2 = h(x2);
    let mut iters = 0;
    while hi - lo > tol && iters < MAX_GOLDEN_ITERS {
        iters += 1;
        if h1 <= h2 {
            hi = x2;
            x2 = x1;
            h2 = h1;
            x1 = hi - INV_PHI * (hi - lo);
            h1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + INV_PHI * (hi - lo);
            h2 = h(x2);
        }
    }
    let candidates = [(lo, h(lo)), (x1, h1), (x2, h2), (hi, h(hi))];
    let (x, v) = candidates
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    (x, v, iters)
}

/// Golden-section minimization of `h` over `[min f − 1, max f]`, widening
/// the left end while `h` is still increasing there.
pub fn minimize_dual(inst: &DroInstance, gamma: f64, tol: f64) -> Result<DualMinimum, DroError> {
    check_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(DroError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let hi = inst.max();
    let mut lo = inst.min() - 1.0;
    let mut capped = false;
    while dual_derivative(inst, gamma, lo) > 0.0 {
        if hi - lo >= MAX_BRACKET_WIDTH {
            capped = true;
            break;
        }
        lo = hi - 2.0 * (hi - lo);
    }
    if capped {
        return Ok(DualMinimum {
            beta: lo,
            value: dual_value(inst, gamma, lo),
            iterations: 0,
            bracket_capped: true,
        });
    }
    let (beta, value, iterations) = golden_section(|b| dual_value(inst, gamma, b), lo, hi, tol);
    if !value.is_finite() {
        return Err(DroError::NoConvergence(format!("non-finite dual value at β={beta}")));
    }
    Ok(DualMinimum {
        beta,
        value,
        iterations,
        bracket_capped: false,
    })
}

/// β*, λ* and the primal/dual pair for a Cressie-Read ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub beta_star: f64,
    pub lambda_star: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    /// `dual_value − primal_value`; nonnegative up to solver accuracy.
    pub gap: f64,
    pub bracket_capped: bool,
}

/// Minimizes the dual in β and certifies it against the brute-force primal.
pub fn solve_beta(inst: &DroInstance, gamma: f64, tol: f64) -> Result<DualCertificate, DroError> {
    let min = minimize_dual(inst, gamma, tol)?;
    let primal = inner_max_bruteforce(inst, DivergenceKind::CressieRead(gamma))?;
    Ok(DualCertificate {
        beta_star: min.beta,
        lambda_star: lambda_star(inst, gamma, min.beta),
        dual_value: min.value,
        primal_value: primal.value,
        gap: min.value - primal.value,
        bracket_capped: min.bracket_capped,
    })
}

/// `min_β { β + α · mean (f − β)_+ }`, exact: the objective is piecewise
/// linear with kinks at the scores, and α ≥ 1 makes it nonincreasing to the
/// left of the smallest score.
pub fn ccl_dual_min(scores: &[f64], alpha: f64) -> Result<(f64, f64), DroError> {
    if !(alpha >= 1.0) {
        return Err(DroError::Domain(format!("CCL dual needs α >= 1, got {alpha}")));
    }
    if scores.is_empty() {
        return Err(DroError::Shape("empty score vector".into()));
    }
    let n = scores.len() as f64;
    let h = |b: f64| b + alpha * scores.iter().map(|&f| (f - b).max(0.0)).sum::<f64>() / n;
    Ok(scores
        .iter()
        .map(|&b| (b, h(b)))
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc }))
}
