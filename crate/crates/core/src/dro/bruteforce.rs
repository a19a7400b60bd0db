//! Primal solver for `max_Q E_Q[f]` over a divergence ball.
//!
//! The main path is a log-barrier interior-point method on the simplex:
//! each centering step is an equality-constrained Newton step whose
//! Hessian is diagonal plus one rank-one term, so it is solved in closed
//! form. The returned distribution is always strictly feasible and its
//! expectation is a lower bound on the optimum; `upper_bound` adds the
//! barrier's `m / t` suboptimality certificate. A search over feasible
//! points (Dirichlet draws, plus a full simplex grid for `n ≤ 5`) pulled
//! radially into the ball backs the barrier result up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::divergence::{phi_prime, phi_second, phi_unchecked};
use super::{divergence, DivergenceKind, DroError, DroInstance, PerturbedDistribution};

/// Instances above this size are rejected; the solver is meant as an oracle.
pub const MAX_BRUTE_FORCE_N: usize = 12;

const DIRICHLET_DRAWS: usize = 16;
const FINAL_GAP: f64 = 1e-9;
const T_GROWTH: f64 = 10.0;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMax {
    /// `E_Q[f]` at the returned distribution.
    pub value: f64,
    pub q: PerturbedDistribution,
    /// `D(Q, P)` at the returned distribution (≤ η up to rounding).
    pub achieved_divergence: f64,
    /// Certified upper bound on the optimum from the barrier gap.
    pub upper_bound: f64,
    pub converged: bool,
    pub newton_steps: usize,
    /// True when the point search beat the barrier solution.
    pub search_improved: bool,
}

struct Problem<'a> {
    f: &'a [f64],
    p: f64,
    eta: f64,
    kind: DivergenceKind,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.f.len()
    }

    /// Number of inequality constraints seen by the barrier.
    fn num_constraints(&self) -> usize {
        match self.kind {
            DivergenceKind::WorstRegret => 2 * self.n(),
            _ => self.n() + 1,
        }
    }

    fn wr_cap(&self) -> f64 {
        self.eta.exp() * self.p
    }

    /// `D(q)` with its gradient and Hessian diagonal (smooth kinds only).
    fn smooth(&self, q: &[f64], grad: &mut [f64], hdiag: &mut [f64]) -> f64 {
        let mut d = 0.0;
        for j in 0..q.len() {
            let r = q[j] / self.p;
            match self.kind {
                DivergenceKind::Kl => {
                    d += q[j] * r.ln();
                    grad[j] = r.ln() + 1.0;
                    hdiag[j] = 1.0 / q[j];
                }
                DivergenceKind::CressieRead(g) => {
                    d += self.p * phi_unchecked(r, g);
                    grad[j] = phi_prime(r, g);
                    hdiag[j] = phi_second(r, g) / self.p;
                }
                DivergenceKind::WorstRegret => unreachable!(),
            }
        }
        d
    }

    fn ball_divergence(&self, q: &[f64]) -> f64 {
        let p = vec![self.p; q.len()];
        divergence(q, &p, self.kind).unwrap_or(f64::INFINITY)
    }

    /// Barrier value; `None` outside the strict interior.
    fn barrier(&self, q: &[f64], t: f64) -> Option<f64> {
        if q.iter().any(|&x| !(x > 0.0)) {
            return None;
        }
        let lin: f64 = q.iter().zip(self.f).map(|(a, b)| a * b).sum();
        let logs: f64 = q.iter().map(|x| x.ln()).sum();
        let extra = match self.kind {
            DivergenceKind::WorstRegret => {
                let cap = self.wr_cap();
                let mut acc = 0.0;
                for &x in q {
                    let slack = cap - x;
                    if !(slack > 0.0) {
                        return None;
                    }
                    acc += slack.ln();
                }
                acc
            }
            _ => {
                let slack = self.eta - self.ball_divergence(q);
                if !(slack > 0.0) {
                    return None;
                }
                slack.ln()
            }
        };
        Some(-t * lin - logs - extra)
    }

    /// Newton direction on `{Σ dq = 0}`; returns the direction and the
    /// squared Newton decrement.
    fn newton_direction(&self, q: &[f64], t: f64) -> (Vec<f64>, f64) {
        let n = q.len();
        let mut g = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        // Rank-one part `v vᵀ / s²` of the Hessian, if any.
        let mut rank_one: Option<(Vec<f64>, f64)> = None;
        match self.kind {
            DivergenceKind::WorstRegret => {
                let cap = self.wr_cap();
                for j in 0..n {
                    let slack = cap - q[j];
                    g[j] = -t * self.f[j] - 1.0 / q[j] + 1.0 / slack;
                    dinv[j] = 1.0 / (1.0 / (q[j] * q[j]) + 1.0 / (slack * slack));
                }
            }
            _ => {
                let mut dg = vec![0.0; n];
                let mut dh = vec![0.0; n];
                let d = self.smooth(q, &mut dg, &mut dh);
                let s = self.eta - d;
                for j in 0..n {
                    g[j] = -t * self.f[j] - 1.0 / q[j] + dg[j] / s;
                    dinv[j] = 1.0 / (1.0 / (q[j] * q[j]) + dh[j] / s);
                }
                rank_one = Some((dg, s));
            }
        }
        // H⁻¹ r via Sherman–Morrison on diag + v vᵀ / s².
        let solve = |r: &[f64]| -> Vec<f64> {
            let base: Vec<f64> = r.iter().zip(&dinv).map(|(a, b)| a * b).collect();
            match &rank_one {
                None => base,
                Some((v, s)) => {
                    let dv: Vec<f64> = v.iter().zip(&dinv).map(|(a, b)| a * b).collect();
                    let vr: f64 = v.iter().zip(&base).map(|(a, b)| a * b).sum();
                    let vdv: f64 = v.iter().zip(&dv).map(|(a, b)| a * b).sum();
                    let coef = vr / (s * s + vdv);
                    base.iter().zip(&dv).map(|(b, d)| b - coef * d).collect()
                }
            }
        };
        let hg = solve(&g);
        let h1 = solve(&vec![1.0; n]);
        let w = -hg.iter().sum::<f64>() / h1.iter().sum::<f64>();
        // dq = −H⁻¹(g + w·1)
        let dq: Vec<f64> = hg.iter().zip(&h1).map(|(a, b)| -(a + w * b)).collect();
        let dec2 = -g.iter().zip(&dq).map(|(a, b)| a * b).sum::<f64>();
        (dq, dec2)
    }

    fn solve_barrier(&self) -> (Vec<f64>, f64, bool, usize) {
        let n = self.n();
        let m = self.num_constraints() as f64;
        let mut q = vec![self.p; n];
        let mut t = 1.0;
        let mut steps = 0;
        let mut converged = true;
        loop {
            let mut centered = false;
            for _ in 0..MAX_NEWTON {
                let (dq, dec2) = self.newton_direction(&q, t);
                if !dec2.is_finite() {
                    break;
                }
                if dec2 * 0.5 <= 1e-12 {
                    centered = true;
                    break;
                }
                let phi0 = self.barrier(&q, t).expect("iterate stays interior");
                let mut step = 1.0;
                let mut moved = false;
                while step > 1e-18 {
                    let cand: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a + step * b).collect();
                    if let Some(v) = self.barrier(&cand, t) {
                        if v <= phi0 - 0.25 * step * dec2 {
                            q = cand;
                            moved = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                steps += 1;
                if !moved {
                    // Progress is below rounding of the barrier value.
                    centered = true;
                    break;
                }
            }
            if !centered {
                converged = false;
            }
            if m / t <= FINAL_GAP {
                break;
            }
            t *= T_GROWTH;
        }
        (q, m / t, converged, steps)
    }

    /// Largest point of the segment `P → q` that lies in the ball.
    fn retract(&self, q: &[f64]) -> Vec<f64> {
        let along = |tau: f64| -> Vec<f64> { q.iter().map(|x| self.p + tau * (x - self.p)).collect() };
        if let DivergenceKind::WorstRegret = self.kind {
            let cap = self.wr_cap();
            let mut tau: f64 = 1.0;
            for &x in q {
                if x > self.p {
                    tau = tau.min((cap - self.p) / (x - self.p));
                }
            }
            return along(tau);
        }
        if self.ball_divergence(q) <= self.eta {
            return q.to_vec();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.ball_divergence(&along(mid)) <= self.eta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        along(lo)
    }

    fn search_points(&self, seed: u64) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut pts = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Flat Dirichlet draws as normalized exponentials.
        for _ in 0..DIRICHLET_DRAWS {
            let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = e.iter().sum();
            pts.push(e.into_iter().map(|x| x / s).collect());
        }
        let resolution = match n {
            2 => 4000,
            3 => 150,
            4 => 40,
            5 => 20,
            _ => 0,
        };
        if resolution > 0 {
            let mut cur = vec![0usize; n];
            compositions(resolution, 0, &mut cur, &mut |c| {
                pts.push(c.iter().map(|&k| k as f64 / resolution as f64).collect::<Vec<f64>>());
            });
        }
        pts
    }
}

fn compositions(remaining: usize, idx: usize, cur: &mut Vec<usize>, emit: &mut dyn FnMut(&[usize])) {
    if idx + 1 == cur.len() {
        cur[idx] = remaining;
        emit(cur);
        return;
    }
    for k in 0..=remaining {
        cur[idx] = k;
        compositions(remaining - k, idx + 1, cur, emit);
    }
}

/// Maximizes `E_Q[f]` over `{Q : D(Q, uniform) ≤ η}`. For the worst-regret
/// kind the radius is read as `log α`, i.e. `Q_j ≤ e^η / n`.
pub fn inner_max_bruteforce(inst: &DroInstance, kind: DivergenceKind) -> Result<InnerMax, DroError> {
    let n = inst.len();
    if n > MAX_BRUTE_FORCE_N {
        return Err(DroError::TooLarge(n));
    }
    if let DivergenceKind::CressieRead(g) = kind {
        if !(g > 1.0) {
            return Err(DroError::Domain(format!("Cressie-Read order must exceed 1, got {g}")));
        }
    }
    let problem = Problem {
        f: &inst.scores,
        p: 1.0 / n as f64,
        eta: inst.radius,
        kind,
    };
    if n == 1 || inst.radius <= 0.0 {
        let q = PerturbedDistribution::uniform(n);
        let value = q.expectation(&inst.scores);
        return Ok(InnerMax {
            value,
            q,
            achieved_divergence: 0.0,
            upper_bound: value,
            converged: true,
            newton_steps: 0,
            search_improved: false,
        });
    }

    let (q, gap, converged, steps) = problem.solve_barrier();
    let mut best_q = q;
    let mut best = dot(&best_q, &inst.scores);
    let upper_bound = best + gap;
    let mut search_improved = false;
    let seed = inst
        .scores
        .iter()
        .fold(0x5eed_u64, |h, s| h.rotate_left(7) ^ s.to_bits());
    for cand in problem.search_points(seed) {
        let feasible = problem.retract(&cand);
        let v = dot(&feasible, &inst.scores);
        if v > best + 1e-9 {
            best = v;
            best_q = feasible;
            search_improved = true;
        }
    }
    let achieved_divergence = problem.ball_divergence(&best_q);
    Ok(InnerMax {
        value: best,
        q: PerturbedDistribution(best_q),
        achieved_divergence,
        upper_bound: upper_bound.max(best),
        converged,
        newton_steps: steps,
        search_improved,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn inst(scores: &[f64], eta: f64) -> DroInstance {
        DroInstance::new(scores.to_vec(), eta).unwrap()
    }

    #[test]
    fn zero_radius_is_the_mean() {
        let r = inner_max_bruteforce(&inst(&[0.3, -0.2, 0.8], 0.0), DivergenceKind::Kl).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        assert_eq!(r.q, PerturbedDistribution::uniform(3));
    }

    #[test]
    fn kl_point_mass_on_the_boundary() {
        let r = inner_max_bruteforce(&inst(&[1.0, 0.0], 2f64.ln()), DivergenceKind::Kl).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "value {}", r.value);
        assert!((r.q.0[0] - 1.0).abs() < 1e-6);
        assert!(r.achieved_divergence <= 2f64.ln() + 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn worst_regret_matches_greedy_fill() {
        // With cap α/n, the optimum fills the highest scores first.
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let n = rng.random_range(2..=8);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let alpha: f64 = rng.random_range(1.0..(n as f64));
            let r = inner_max_bruteforce(&inst(&f, alpha.ln()), DivergenceKind::WorstRegret).unwrap();
            let mut sorted = f.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let cap = alpha / n as f64;
            let (mut left, mut greedy) = (1.0f64, 0.0);
            for s in sorted {
                let take = cap.min(left);
                greedy += take * s;
                left -= take;
            }
            assert!((r.value - greedy).abs() < 1e-6, "{} vs {greedy}", r.value);
        }
    }

    #[test]
    fn value_nondecreasing_in_radius() {
        let f = [0.4, -0.7, 0.9, 0.1, -0.2];
        for kind in [DivergenceKind::Kl, DivergenceKind::WorstRegret, DivergenceKind::CressieRead(2.0)] {
            let mut prev = f64::NEG_INFINITY;
            for eta in [0.0, 0.01, 0.05, 0.2, 0.5, 1.0, 2.0] {
                let v = inner_max_bruteforce(&inst(&f, eta), kind).unwrap().value;
                assert!(v >= prev - 1e-9, "{kind:?} η={eta}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn solution_is_feasible_and_upper_bound_is_tight() {
        let f = [0.2, 0.5, -0.3, 0.95, 0.0, -0.8];
        for kind in [DivergenceKind::Kl, DivergenceKind::CressieRead(1.5), DivergenceKind::CressieRead(3.0)] {
            let r = inner_max_bruteforce(&inst(&f, 0.1), kind).unwrap();
            assert!(r.achieved_divergence <= 0.1 + 1e-9);
            assert!((r.q.total_mass() - 1.0).abs() < 1e-9);
            assert!(r.upper_bound - r.value <= 1e-8);
            assert!(!r.search_improved);
        }
    }

    #[test]
    fn rejects_oversized_instances() {
        let f = vec![0.0; MAX_BRUTE_FORCE_N + 1];
        assert!(matches!(
            inner_max_bruteforce(&inst(&f, 0.1), DivergenceKind::Kl),
            Err(DroError::TooLarge(_))
        ));
    }
}
