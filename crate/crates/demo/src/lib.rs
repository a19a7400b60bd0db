//! Browser demo over `drrl-core`. Each operation has a plain Rust form that
//! returns a serializable struct, and a `wasm_bindgen` wrapper that returns
//! the same thing as a JSON string (or `{"error": ...}`).

use serde::Serialize;
use wasm_bindgen::prelude::*;

use drrl_core::dro::{gamma_from_star, minimize_dual, DroInstance};
use drrl_core::losses::{drrl_beta_objective, drrl_worst_case_weights, sl_worst_case_weights};
use drrl_core::metrics::{optimal_margin, truncation_ratio};

#[derive(Debug, Clone, Serialize)]
pub struct WeightComparison {
    pub scores: Vec<f64>,
    pub softmax: Vec<f64>,
    pub robust: Vec<f64>,
    /// The margin that minimizes the robust objective for these scores.
    pub beta: f64,
    pub truncation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueCurve {
    pub eta: Vec<f64>,
    pub value: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginCurve {
    pub beta: Vec<f64>,
    pub objective: Vec<f64>,
    pub beta_star: f64,
    pub objective_star: f64,
}

fn require_scores(scores: &[f64]) -> Result<(), String> {
    if scores.is_empty() {
        return Err("enter at least one score".into());
    }
    if scores.iter().any(|f| !f.is_finite()) {
        return Err("scores must be finite numbers".into());
    }
    Ok(())
}

/// Softmax weights against truncated robust weights on the same negatives.
pub fn compare_weights(scores: &[f64], tau: f64, gamma_star: f64, c: f64) -> Result<WeightComparison, String> {
    require_scores(scores)?;
    if !(tau > 0.0) {
        return Err("temperature must be positive".into());
    }
    if !(gamma_star >= 1.0) || !(c >= 1.0) {
        return Err("need γ* ≥ 1 and c ≥ 1".into());
    }
    let beta = optimal_margin(scores, gamma_star, c).map_err(|e| e.to_string())?;
    let robust = if gamma_star == 1.0 {
        scores.iter().map(|&f| if f > beta { c } else { 0.0 }).collect()
    } else {
        drrl_worst_case_weights(scores, gamma_from_star(gamma_star), c, beta)
            .map_err(|e| e.to_string())?
            .weights
    };
    Ok(WeightComparison {
        scores: scores.to_vec(),
        softmax: sl_worst_case_weights(scores, tau),
        robust,
        beta,
        truncation: truncation_ratio(scores, beta).map_err(|e| e.to_string())?,
    })
}

/// Worst-case expectation over the Cressie-Read ball as the radius grows
/// from 0 to `eta_max`.
pub fn value_curve(scores: &[f64], gamma: f64, eta_max: f64, steps: usize) -> Result<ValueCurve, String> {
    require_scores(scores)?;
    if !(gamma > 1.0) || !(eta_max > 0.0) || steps == 0 {
        return Err("need γ > 1, a positive radius and at least one step".into());
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut eta = vec![0.0];
    let mut value = vec![mean];
    for k in 1..=steps {
        let r = eta_max * k as f64 / steps as f64;
        let inst = DroInstance::new(scores.to_vec(), r).map_err(|e| e.to_string())?;
        let m = minimize_dual(&inst, gamma, 1e-10).map_err(|e| e.to_string())?;
        eta.push(r);
        value.push(m.value.min(max));
    }
    Ok(ValueCurve { eta, value, mean, max })
}

/// `β ↦ β + c·(mean (f − β)_+^{γ*})^{1/γ*}` sampled on a grid around its
/// minimizer.
pub fn margin_curve(scores: &[f64], gamma_star: f64, c: f64, points: usize) -> Result<MarginCurve, String> {
    require_scores(scores)?;
    if !(gamma_star >= 1.0) || !(c >= 1.0) || points < 2 {
        return Err("need γ* ≥ 1, c ≥ 1 and at least two points".into());
    }
    let beta_star = optimal_margin(scores, gamma_star, c).map_err(|e| e.to_string())?;
    let h = |b: f64| drrl_beta_objective(scores, gamma_star, c, 0.0, b).map_err(|e| e.to_string());
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // At c = 1 the minimizer runs off to −∞; keep the window readable.
    let lo = (min - 1.0).min(beta_star - 0.5).max(min - 4.0);
    let hi = max + 0.5;
    let mut beta = Vec::with_capacity(points);
    let mut objective = Vec::with_capacity(points);
    for k in 0..points {
        let b = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        beta.push(b);
        objective.push(h(b)?);
    }
    Ok(MarginCurve {
        beta,
        objective,
        beta_star,
        objective_star: h(beta_star)?,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!(r#"{{"error":"{e}"}}"#)),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen(js_name = compareWeights)]
pub fn compare_weights_json(scores: Vec<f64>, tau: f64, gamma_star: f64, c: f64) -> String {
    to_json(compare_weights(&scores, tau, gamma_star, c))
}

#[wasm_bindgen(js_name = valueCurve)]
pub fn value_curve_json(scores: Vec<f64>, gamma: f64, eta_max: f64, steps: usize) -> String {
    to_json(value_curve(&scores, gamma, eta_max, steps))
}

#[wasm_bindgen(js_name = marginCurve)]
pub fn margin_curve_json(scores: Vec<f64>, gamma_star: f64, c: f64, points: usize) -> String {
    to_json(margin_curve(&scores, gamma_star, c, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCORES: [f64; 6] = [0.9, 0.6, 0.2, -0.1, -0.4, 0.75];

    #[test]
    fn weights_have_unit_mean_and_truncate() {
        let w = compare_weights(&SCORES, 0.2, 2.0, 1.2).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&w.softmax) - 1.0).abs() < 1e-12);
        assert!(w.robust.iter().zip(&SCORES).all(|(wj, f)| (*wj == 0.0) == (*f <= w.beta)));
        assert!(w.truncation > 0.0 && w.truncation < 1.0);
    }

    #[test]
    fn value_curve_rises_from_mean_to_below_max() {
        let v = value_curve(&SCORES, 2.0, 1.0, 10).unwrap();
        assert_eq!(v.eta.len(), 11);
        assert_eq!(v.value[0], v.mean);
        assert!(v.value.windows(2).all(|p| p[1] >= p[0] - 1e-9));
        assert!(*v.value.last().unwrap() <= v.max);
    }

    #[test]
    fn margin_curve_minimum_is_marked() {
        let m = margin_curve(&SCORES, 2.0, 1.2, 101).unwrap();
        let grid_min = m.objective.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(m.objective_star <= grid_min + 1e-12);
        assert!(m.beta[0] < m.beta_star && m.beta_star < *m.beta.last().unwrap());
    }

    #[test]
    fn json_wrappers_report_errors() {
        let ok: serde_json::Value = serde_json::from_str(&margin_curve_json(SCORES.to_vec(), 2.0, 1.0, 5)).unwrap();
        assert_eq!(ok["beta"].as_array().unwrap().len(), 5);
        let err: serde_json::Value = serde_json::from_str(&compare_weights_json(vec![], 0.2, 2.0, 1.0)).unwrap();
        assert!(err["error"].as_str().unwrap().contains("score"));
    }
}
