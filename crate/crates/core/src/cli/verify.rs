//! The `verify` certification suite. Every check becomes one JSON line.

use clap::ValueEnum;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::VerifyArgs;
use crate::dataio::BatchSample;
use crate::dro::{lagrangian_dual, verify, DroInstance};
use crate::graphmodel::{BackboneConfig, BackboneKind, EmbeddingTable, InteractionGraph};
use crate::losses::{
    bce_loss, bpr_loss, ccl_loss, drrl_beta_gradient, drrl_beta_objective, drrl_loss, mse_loss, sl_worst_case_weights,
    softmax_loss, LossKind, LossOutput, LossSpec, MarginMode, MarginState, UserLossInput,
};
use crate::rng::{stream, stream_rng};
use crate::trainer::objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Duality,
    Lemma1,
    Kl,
    WorstCase,
    Degeneracy,
    Gradients,
    Convexity,
    All,
}

impl Suite {
    const EACH: [Suite; 7] = [
        Suite::Duality,
        Suite::Lemma1,
        Suite::Kl,
        Suite::WorstCase,
        Suite::Degeneracy,
        Suite::Gradients,
        Suite::Convexity,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub check: String,
    pub passed: bool,
    /// The measured error (or violation) compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub details: Value,
}

struct Ctx<'a> {
    args: &'a VerifyArgs,
    out: Vec<Check>,
    suite: Suite,
}

impl Ctx<'_> {
    fn tol(&self, default: f64) -> f64 {
        self.args.tol.unwrap_or(default)
    }

    fn push(&mut self, check: impl Into<String>, value: f64, default_tol: f64, details: Value) {
        let tolerance = self.tol(default_tol);
        self.out.push(Check {
            suite: self.suite,
            check: check.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            details,
        });
    }

    fn fail(&mut self, check: impl Into<String>, err: impl std::fmt::Display) {
        self.out.push(Check {
            suite: self.suite,
            check: check.into(),
            passed: false,
            value: f64::INFINITY,
            tolerance: 0.0,
            details: json!({ "error": err.to_string() }),
        });
    }
}

fn uniform_scores<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs one suite (or all of them) and returns the checks in order.
pub fn run_suite(args: &VerifyArgs) -> Vec<Check> {
    let suites: Vec<Suite> = if args.suite == Suite::All {
        Suite::EACH.to_vec()
    } else {
        vec![args.suite]
    };
    let mut ctx = Ctx {
        args,
        out: Vec::new(),
        suite: args.suite,
    };
    for s in suites {
        ctx.suite = s;
        match s {
            Suite::Duality => duality(&mut ctx),
            Suite::Lemma1 => lemma1(&mut ctx),
            Suite::Kl => kl(&mut ctx),
            Suite::WorstCase => worst_case(&mut ctx),
            Suite::Degeneracy => degeneracy(&mut ctx),
            Suite::Gradients => gradients(&mut ctx),
            Suite::Convexity => convexity(&mut ctx),
            Suite::All => unreachable!("expanded above"),
        }
    }
    ctx.out
}

pub fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<i32> {
    let checks = run_suite(args);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{}", serde_json::to_string(c)?);
    }
    eprintln!("{} checks, {} failed", checks.len(), failed);
    Ok(if failed == 0 { 0 } else { 1 })
}

fn duality(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    for k in 0..a.count {
        let scores = uniform_scores(a.n, &mut rng);
        let inst = match DroInstance::new(scores, a.eta) {
            Ok(i) => i,
            Err(e) => return ctx.fail("instance", e),
        };
        match verify::verify_duality(&inst, a.gamma, 1e-10) {
            Ok(r) => {
                let cert = r.certificate.clone().expect("cressie-read reports carry a certificate");
                let rho = cert.beta_star + cert.lambda_star / (a.gamma - 1.0);
                let lag = lagrangian_dual(&inst, a.gamma, cert.lambda_star, rho);
                ctx.push(
                    format!("gap[{k}]"),
                    r.abs_gap(),
                    1e-3,
                    json!({ "scores": r.instance, "primal": r.primal, "dual": r.dual, "beta_star": cert.beta_star }),
                );
                ctx.push(
                    format!("lambda_certificate[{k}]"),
                    (lag - r.dual).abs(),
                    1e-6,
                    json!({ "lambda_star": cert.lambda_star, "rho_star": rho, "lagrangian": lag, "dual": r.dual }),
                );
            }
            Err(e) => ctx.fail(format!("gap[{k}]"), e),
        }
    }
}

fn lemma1(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    for k in 0..a.count {
        let n = rng.random_range(4..=10usize);
        let scores = uniform_scores(n, &mut rng);
        for alpha in [1.0, 2.0, n as f64] {
            match verify::verify_lemma1_ccl(&scores, alpha) {
                Ok(r) => ctx.push(
                    format!("ccl_gap[{k}, alpha={alpha}]"),
                    r.abs_gap(),
                    1e-3,
                    json!({ "scores": r.instance, "primal": r.primal, "dual": r.dual }),
                ),
                Err(e) => ctx.fail(format!("ccl_gap[{k}, alpha={alpha}]"), e),
            }
        }
    }
}

fn kl(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    for k in 0..a.count {
        let n = rng.random_range(4..=10usize);
        let inst = match DroInstance::new(uniform_scores(n, &mut rng), a.eta) {
            Ok(i) => i,
            Err(e) => return ctx.fail("instance", e),
        };
        match verify::verify_kl_limit(&inst, 1.001) {
            Ok(r) => ctx.push(
                format!("kl_limit[{k}]"),
                r.relative_gap,
                1e-2,
                json!({ "cressie_read": r.cressie_read, "kl": r.kl, "gamma": r.gamma }),
            ),
            Err(e) => ctx.fail(format!("kl_limit[{k}]"), e),
        }
    }
}

fn worst_case(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    for k in 0..a.count {
        let inst = match DroInstance::new(uniform_scores(a.n, &mut rng), a.eta) {
            Ok(i) => i,
            Err(e) => return ctx.fail("instance", e),
        };
        match verify::verify_worst_case(&inst, a.gamma, 1e-8) {
            Ok(r) => {
                ctx.push(
                    format!("total_mass[{k}]"),
                    (r.total_mass - 1.0).abs(),
                    1e-3,
                    json!({ "total_mass": r.total_mass, "beta_star": r.beta_star }),
                );
                ctx.push(
                    format!("expectation[{k}]"),
                    (r.expectation - r.primal).abs(),
                    1e-3,
                    json!({ "expectation": r.expectation, "primal": r.primal }),
                );
            }
            Err(e) => ctx.fail(format!("worst_case[{k}]"), e),
        }
        let w = sl_worst_case_weights(&inst.scores, 0.2);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        ctx.push(format!("sl_weight_mean[{k}]"), (mean - 1.0).abs(), 1e-12, json!({ "mean": mean }));
    }
}

fn degeneracy(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    let trials = a.count * 50;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let pos = uniform_scores(rng.random_range(1..=3usize), &mut rng);
        let neg = uniform_scores(rng.random_range(2..=12usize), &mut rng);
        let alpha = rng.random_range(1.0..4.0);
        let beta = rng.random_range(-1.0..1.0);
        let input = UserLossInput::new(&pos, &neg);
        match (drrl_loss(input, 1.0, alpha, 0.0, beta), ccl_loss(input, alpha, beta)) {
            (Ok(d), Ok(c)) => worst = worst.max((d.value - c.value).abs()),
            (Err(e), _) | (_, Err(e)) => return ctx.fail("drrl_equals_ccl", e),
        }
    }
    ctx.push("drrl_equals_ccl", worst, 1e-12, json!({ "trials": trials }));
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

const H: f64 = 1e-5;

fn fd_max_error<F>(pos: &[f64], neg: &[f64], analytic: &LossOutput, f: F) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut worst: f64 = 0.0;
    for k in 0..pos.len() {
        let (mut p, mut m) = (pos.to_vec(), pos.to_vec());
        p[k] += H;
        m[k] -= H;
        let fd = (f(&p, neg) - f(&m, neg)) / (2.0 * H);
        worst = worst.max(rel_err(fd, analytic.d_pos[k]));
    }
    for k in 0..neg.len() {
        let (mut p, mut m) = (neg.to_vec(), neg.to_vec());
        p[k] += H;
        m[k] -= H;
        let fd = (f(pos, &p) - f(pos, &m)) / (2.0 * H);
        worst = worst.max(rel_err(fd, analytic.d_neg[k]));
    }
    worst
}

/// Negatives at least `gap` away from `kink`, so central differences
/// never straddle a truncation point.
fn scores_away_from<R: Rng + ?Sized>(n: usize, kink: f64, gap: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let f = rng.random_range(-1.0..1.0);
            if (f - kink).abs() >= gap {
                break f;
            }
        })
        .collect()
}

type LossFn = Box<dyn Fn(UserLossInput<'_>) -> LossOutput>;

fn gradients(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    let mut by_loss: Vec<(String, f64)> = Vec::new();
    let mut beta_worst: f64 = 0.0;
    for _ in 0..a.count {
        let pos = uniform_scores(rng.random_range(1..=3usize), &mut rng);
        let beta = rng.random_range(-0.8..0.8);
        let neg = scores_away_from(rng.random_range(3..=10usize), beta, 1e-3, &mut rng);
        let alpha = rng.random_range(1.0..3.0);
        let c = rng.random_range(1.0..2.0);
        let cases: Vec<(String, LossFn)> = vec![
            ("mse".into(), Box::new(|i| mse_loss(i).expect("valid input"))),
            ("bce".into(), Box::new(|i| bce_loss(i).expect("valid input"))),
            ("bpr".into(), Box::new(|i| bpr_loss(i).expect("valid input"))),
            ("sl".into(), Box::new(|i| softmax_loss(i, 0.2).expect("valid input"))),
            ("ccl".into(), Box::new(move |i| ccl_loss(i, alpha, beta).expect("valid input"))),
            ("drrl(1)".into(), Box::new(move |i| drrl_loss(i, 1.0, c, 0.0, beta).expect("valid input"))),
            ("drrl(2)".into(), Box::new(move |i| drrl_loss(i, 2.0, c, 1e-10, beta).expect("valid input"))),
            ("drrl(4)".into(), Box::new(move |i| drrl_loss(i, 4.0, c, 1e-10, beta).expect("valid input"))),
        ];
        for (name, f) in cases {
            let analytic = f(UserLossInput::new(&pos, &neg));
            let err = fd_max_error(&pos, &neg, &analytic, |p, n| f(UserLossInput::new(p, n)).value);
            match by_loss.iter_mut().find(|(n, _)| *n == name) {
                Some(entry) => entry.1 = entry.1.max(err),
                None => by_loss.push((name, err)),
            }
        }
        for gs in [1.5, 2.0, 4.0] {
            let obj = |b: f64| drrl_beta_objective(&neg, gs, c, 1e-10, b).expect("valid input");
            let fd = (obj(beta + H) - obj(beta - H)) / (2.0 * H);
            let g = drrl_beta_gradient(&neg, gs, c, 1e-10, beta).expect("valid input");
            beta_worst = beta_worst.max(rel_err(fd, g));
        }
    }
    for (name, err) in by_loss {
        ctx.push(format!("score_gradient[{name}]"), err, 1e-4, json!({ "instances": a.count }));
    }
    ctx.push("beta_gradient", beta_worst, 1e-4, json!({ "gamma_star": [1.5, 2.0, 4.0] }));
    full_chain(ctx);
}

/// Embedding gradients through the backbone on a 4 x 4 toy graph.
fn full_chain(ctx: &mut Ctx<'_>) {
    let edges = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0), (0, 2)];
    let graph = InteractionGraph::from_edges(4, 4, &edges);
    let batch = BatchSample {
        pairs: vec![(0, 1), (2, 3), (3, 0)],
        negatives: vec![vec![3, 2], vec![0, 1], vec![1, 2]],
        false_negative_mask: vec![vec![false; 2]; 3],
    };
    let margins = MarginState::from_values(MarginMode::PerUser, vec![-2.0; 4]);
    let seed = ctx.args.seed;
    for kind in [BackboneKind::Mf, BackboneKind::LightGcn, BackboneKind::XSimGcl] {
        let mut bb = BackboneConfig::new(kind);
        bb.dim = 3;
        let table = EmbeddingTable::random(4, 4, 3, 1.0, &mut stream_rng(seed, stream::INIT));
        for lk in [LossKind::Sl, LossKind::Ccl, LossKind::Drrl, LossKind::Bpr] {
            let loss = LossSpec::new(lk);
            let f = |t: &EmbeddingTable| objective(t, &graph, &bb, &loss, &margins, &batch, &mut stream_rng(seed, stream::NOISE));
            let g = match f(&table) {
                Ok((_, g)) => g,
                Err(e) => {
                    ctx.fail(format!("embedding_gradient[{kind}, {lk}]"), e);
                    continue;
                }
            };
            let mut worst: f64 = 0.0;
            for side in 0..2 {
                for r in 0..4 {
                    for c in 0..3 {
                        let (mut p, mut m) = (table.clone(), table.clone());
                        let gv = if side == 0 {
                            p.users[[r, c]] += H;
                            m.users[[r, c]] -= H;
                            g.users[[r, c]]
                        } else {
                            p.items[[r, c]] += H;
                            m.items[[r, c]] -= H;
                            g.items[[r, c]]
                        };
                        let fd = (f(&p).map_or(f64::NAN, |x| x.0) - f(&m).map_or(f64::NAN, |x| x.0)) / (2.0 * H);
                        let e = rel_err(fd, gv);
                        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
                    }
                }
            }
            ctx.push(format!("embedding_gradient[{kind}, {lk}]"), worst, 1e-4, json!({ "params": 24 }));
        }
    }
}

fn convexity(ctx: &mut Ctx<'_>) {
    let a = ctx.args;
    let mut rng = stream_rng(a.seed, stream::VERIFY);
    let trials = a.count * 50;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=12usize);
        let neg = uniform_scores(n, &mut rng);
        let gs = [1.0, 1.25, 2.0, 3.0, 5.0][rng.random_range(0..5)];
        let c = rng.random_range(1.0..3.0);
        let lo = rng.random_range(-3.0..2.0);
        let hi = rng.random_range(-3.0..2.0);
        let h = |b: f64| drrl_beta_objective(&neg, gs, c, 0.0, b).expect("valid input");
        let excess = h(0.5 * (lo + hi)) - 0.5 * (h(lo) + h(hi));
        worst = worst.max(excess);
    }
    ctx.push("midpoint", worst.max(0.0), 1e-10, json!({ "trials": trials, "max_excess": worst }));
}
