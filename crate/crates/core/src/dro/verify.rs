//! Numerical certificates comparing the brute-force primal against the
//! closed-form duals.

use serde::{Deserialize, Serialize};

use super::{
    c_gamma, ccl_dual_min, inner_max_bruteforce, solve_beta, DivergenceKind, DroError, DroInstance,
    DualCertificate, PerturbedDistribution,
};
use crate::losses::drrl_worst_case_weights;

/// One primal/dual comparison, serialized as a JSON line by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instance: Vec<f64>,
    pub kind: DivergenceKind,
    pub gamma: Option<f64>,
    pub eta: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub q_star: PerturbedDistribution,
    pub certificate: Option<DualCertificate>,
}

impl VerifyReport {
    pub fn abs_gap(&self) -> f64 {
        self.gap.abs()
    }
}

/// Cressie-Read ball of order γ: brute-force inner max against `min_β` of
/// the dual.
pub fn verify_duality(inst: &DroInstance, gamma: f64, tol: f64) -> Result<VerifyReport, DroError> {
    let cert = solve_beta(inst, gamma, tol)?;
    let primal = inner_max_bruteforce(inst, DivergenceKind::CressieRead(gamma))?;
    Ok(VerifyReport {
        instance: inst.scores.clone(),
        kind: DivergenceKind::CressieRead(gamma),
        gamma: Some(gamma),
        eta: inst.radius,
        primal: primal.value,
        dual: cert.dual_value,
        gap: cert.dual_value - primal.value,
        q_star: primal.q,
        certificate: Some(cert),
    })
}

/// Worst-regret ball of radius `log α` against the CCL dual
/// `min_β { β + α·mean (f − β)_+ }`.
pub fn verify_lemma1_ccl(scores: &[f64], alpha: f64) -> Result<VerifyReport, DroError> {
    if !(alpha >= 1.0) {
        return Err(DroError::Domain(format!("α must be >= 1, got {alpha}")));
    }
    let inst = DroInstance::new(scores.to_vec(), alpha.ln())?;
    let primal = inner_max_bruteforce(&inst, DivergenceKind::WorstRegret)?;
    let (_, dual) = ccl_dual_min(scores, alpha)?;
    Ok(VerifyReport {
        instance: scores.to_vec(),
        kind: DivergenceKind::WorstRegret,
        gamma: None,
        eta: inst.radius,
        primal: primal.value,
        dual,
        gap: dual - primal.value,
        q_star: primal.q,
        certificate: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlLimitReport {
    pub instance: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub cressie_read: f64,
    pub kl: f64,
    /// `|v_CR − v_KL|` relative to the KL robust premium `v_KL − mean`.
    pub relative_gap: f64,
}

/// Cressie-Read(γ) against KL, both brute force, at the same radius.
pub fn verify_kl_limit(inst: &DroInstance, gamma: f64) -> Result<KlLimitReport, DroError> {
    if !(gamma > 1.0) {
        return Err(DroError::Domain(format!("γ must exceed 1, got {gamma}")));
    }
    let cr = inner_max_bruteforce(inst, DivergenceKind::CressieRead(gamma))?.value;
    let kl = inner_max_bruteforce(inst, DivergenceKind::Kl)?.value;
    let premium = (kl - inst.mean()).max(1e-12);
    Ok(KlLimitReport {
        instance: inst.scores.clone(),
        gamma,
        eta: inst.radius,
        cressie_read: cr,
        kl,
        relative_gap: (cr - kl).abs() / premium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub beta_star: f64,
    /// `Σ_j Q*_j` with `Q*_j = w_j / n` from the closed-form weights.
    pub total_mass: f64,
    /// `E_{Q*}[f]` under the same reconstruction.
    pub expectation: f64,
    pub primal: f64,
}

/// Rebuilds Q* from the closed-form weights at β* and compares it with
/// the brute-force primal.
pub fn verify_worst_case(inst: &DroInstance, gamma: f64, tol: f64) -> Result<WorstCaseReport, DroError> {
    let cert = solve_beta(inst, gamma, tol)?;
    let c = c_gamma(inst.radius, gamma);
    let n = inst.len() as f64;
    let w = drrl_worst_case_weights(&inst.scores, gamma, c, cert.beta_star)
        .map_err(|e| DroError::Domain(e.to_string()))?;
    let q: Vec<f64> = w.weights.iter().map(|x| x / n).collect();
    Ok(WorstCaseReport {
        beta_star: cert.beta_star,
        total_mass: q.iter().sum(),
        expectation: q.iter().zip(&inst.scores).map(|(q, f)| q * f).sum(),
        primal: cert.primal_value,
    })
}
