//! Cressie-Read generator, its Fenchel conjugate, and the three divergences
//! used to define ambiguity sets around the uniform negative distribution.

use super::{DivergenceKind, DroError};

/// Conjugate exponent `γ* = γ / (γ − 1)`.
pub fn gamma_star(gamma: f64) -> f64 {
    gamma / (gamma - 1.0)
}

/// Inverse of [`gamma_star`]; `γ* = 1` maps to `γ = ∞`.
pub fn gamma_from_star(gamma_star: f64) -> f64 {
    if gamma_star <= 1.0 {
        f64::INFINITY
    } else {
        gamma_star / (gamma_star - 1.0)
    }
}

/// Radius reparameterization `c_γ(η) = (1 + γ(γ−1)η)^{1/γ}`.
pub fn c_gamma(eta: f64, gamma: f64) -> f64 {
    (1.0 + gamma * (gamma - 1.0) * eta).powf(1.0 / gamma)
}

/// `t^{γ−1} − 1`, accurate when γ is close to 1.
fn pow_m1(t: f64, gamma: f64) -> f64 {
    ((gamma - 1.0) * t.ln()).exp_m1()
}

/// `φ_γ(t) = (t^γ − γt + γ − 1) / (γ(γ−1))`.
pub fn phi_gamma(t: f64, gamma: f64) -> Result<f64, DroError> {
    if !(t >= 0.0) {
        return Err(DroError::Domain(format!("phi_gamma needs t >= 0, got {t}")));
    }
    if !(gamma > 1.0) {
        return Err(DroError::Domain(format!("Cressie-Read order must exceed 1, got {gamma}")));
    }
    Ok(phi_unchecked(t, gamma))
}

pub(crate) fn phi_unchecked(t: f64, gamma: f64) -> f64 {
    if t == 0.0 {
        return 1.0 / gamma;
    }
    // t^γ − t − (γ−1)(t−1), rearranged to avoid cancellation near γ = 1.
    (t * pow_m1(t, gamma) - (gamma - 1.0) * (t - 1.0)) / (gamma * (gamma - 1.0))
}

/// `φ_γ'(t) = (t^{γ−1} − 1) / (γ − 1)`.
pub(crate) fn phi_prime(t: f64, gamma: f64) -> f64 {
    if t == 0.0 {
        return -1.0 / (gamma - 1.0);
    }
    pow_m1(t, gamma) / (gamma - 1.0)
}

/// `φ_γ''(t) = t^{γ−2}`.
pub(crate) fn phi_second(t: f64, gamma: f64) -> f64 {
    t.powf(gamma - 2.0)
}

/// `φ*_γ(x) = ((γ−1)x + 1)_+^{γ*} / γ − 1/γ`.
pub fn phi_conjugate(x: f64, gamma: f64) -> f64 {
    let base = (gamma - 1.0) * x + 1.0;
    if base <= 0.0 {
        return -1.0 / gamma;
    }
    let gs = gamma_star(gamma);
    ((gs * ((gamma - 1.0) * x).ln_1p()).exp_m1()) / gamma
}

/// `D(Q, P)` for the chosen family. Mass of `Q` where `P` vanishes yields
/// `+∞`.
pub fn divergence(q: &[f64], p: &[f64], kind: DivergenceKind) -> Result<f64, DroError> {
    if q.len() != p.len() {
        return Err(DroError::Shape(format!(
            "Q has {} entries, P has {}",
            q.len(),
            p.len()
        )));
    }
    if let DivergenceKind::CressieRead(g) = kind {
        if !(g > 1.0) {
            return Err(DroError::Domain(format!("Cressie-Read order must exceed 1, got {g}")));
        }
    }
    let mut acc = match kind {
        DivergenceKind::WorstRegret => f64::NEG_INFINITY,
        _ => 0.0,
    };
    for (&qj, &pj) in q.iter().zip(p) {
        if qj < 0.0 || pj < 0.0 {
            return Err(DroError::Domain("probabilities must be nonnegative".into()));
        }
        if pj == 0.0 {
            if qj > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        match kind {
            DivergenceKind::Kl => {
                if qj > 0.0 {
                    acc += qj * (qj / pj).ln();
                }
            }
            DivergenceKind::WorstRegret => {
                if qj > 0.0 {
                    acc = acc.max((qj / pj).ln());
                }
            }
            DivergenceKind::CressieRead(g) => acc += pj * phi_unchecked(qj / pj, g),
        }
    }
    Ok(acc)
}
