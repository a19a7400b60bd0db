use ndarray::{Array2, Zip};

use super::TrainError;
use crate::graphmodel::EmbeddingTable;

/// Bias-corrected Adam moments for a full embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: EmbeddingTable,
    v: EmbeddingTable,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape_of: &EmbeddingTable) -> Self {
        Self {
            m: shape_of.zeros_like(),
            v: shape_of.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn update(p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, s: &AdamScalars) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = s.b1 * *m + (1.0 - s.b1) * g;
        *v = s.b2 * *v + (1.0 - s.b2) * g * g;
        let mh = *m / s.c1;
        let vh = *v / s.c2;
        *p -= s.lr * mh / (vh.sqrt() + s.eps);
    });
}

struct AdamScalars {
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    lr: f64,
    eps: f64,
}

/// One Adam update of `params`. Non-finite gradients leave both the
/// parameters and the moments untouched.
pub fn adam_step(state: &mut AdamState, params: &mut EmbeddingTable, grads: &EmbeddingTable, lr: f64) -> Result<(), TrainError> {
    if params.users.dim() != grads.users.dim() || params.items.dim() != grads.items.dim() {
        return Err(TrainError::Shape("gradient shape differs from parameters".into()));
    }
    if !grads.all_finite() {
        return Err(TrainError::NonFinite("embedding gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let s = AdamScalars {
        b1: state.beta1,
        b2: state.beta2,
        c1: 1.0 - state.beta1.powi(t),
        c2: 1.0 - state.beta2.powi(t),
        lr,
        eps: state.eps,
    };
    update(&mut params.users, &grads.users, &mut state.m.users, &mut state.v.users, &s);
    update(&mut params.items, &grads.items, &mut state.m.items, &mut state.v.items, &s);
    Ok(())
}

/// Adds `2·wd·e` to the gradient of every listed user and item row.
/// Each row is decayed once however often it appears.
pub fn apply_weight_decay(table: &EmbeddingTable, grads: &mut EmbeddingTable, users: &[u32], items: &[u32], wd: f64) {
    if wd == 0.0 {
        return;
    }
    let mut seen_u = vec![false; table.num_users()];
    for &u in users {
        if !std::mem::replace(&mut seen_u[u as usize], true) {
            grads.users.row_mut(u as usize).scaled_add(2.0 * wd, &table.users.row(u as usize));
        }
    }
    let mut seen_i = vec![false; table.num_items()];
    for &i in items {
        if !std::mem::replace(&mut seen_i[i as usize], true) {
            grads.items.row_mut(i as usize).scaled_add(2.0 * wd, &table.items.row(i as usize));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(u: Array2<f64>, i: Array2<f64>) -> EmbeddingTable {
        EmbeddingTable::new(u, i).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = table(array![[1.0, -2.0]], array![[0.5, 0.5]]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &before.zeros_like(), 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = table(array![[1.0, 1.0]], array![[1.0, 1.0]]);
        let g = table(array![[0.3, 0.6]], array![[-2.0, 1e-3]]);
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &g, 0.01).unwrap();
        for (x, gx) in p.users.iter().chain(p.items.iter()).zip(g.users.iter().chain(g.items.iter())) {
            let delta = (x - 1.0).abs();
            assert!(delta >= 0.9 * 0.01 && delta <= 0.01);
            assert_eq!((1.0 - x).signum(), gx.signum());
        }
        assert!((p.users[[0, 0]] - p.users[[0, 1]]).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = table(array![[1.0]], array![[1.0]]);
        let g = table(array![[f64::NAN]], array![[0.0]]);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut s, &mut p, &g, 0.1).is_err());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn decay_touches_listed_rows_once() {
        let t = table(array![[0.6, 0.8], [1.0, 0.0]], array![[0.0, 1.0]]);
        let mut g = t.zeros_like();
        apply_weight_decay(&t, &mut g, &[0, 0], &[], 0.1);
        let n = g.users.row(0).dot(&g.users.row(0)).sqrt();
        assert!((n - 0.2).abs() < 1e-15);
        assert!(g.users.row(1).iter().all(|x| *x == 0.0));
        assert!(g.items.iter().all(|x| *x == 0.0));
        let mut z = t.zeros_like();
        apply_weight_decay(&t, &mut z, &[0, 1], &[0], 0.0);
        assert!(z.users.iter().all(|x| *x == 0.0));
    }
}
