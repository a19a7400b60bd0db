use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::{EmbeddingTable, GraphError};

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine similarity `e_u·e_i / (‖e_u‖‖e_i‖)`.
pub fn score(e_u: ArrayView1<'_, f64>, e_i: ArrayView1<'_, f64>) -> Result<f64, GraphError> {
    let (nu, ni) = (norm(e_u), norm(e_i));
    if nu == 0.0 || ni == 0.0 {
        return Err(GraphError::ZeroVector);
    }
    Ok(e_u.dot(&e_i) / (nu * ni))
}

/// `(∂f/∂e_u, ∂f/∂e_i)` with `∂f/∂e_u = (ê_i − f ê_u)/‖e_u‖`.
pub fn score_gradient(
    e_u: ArrayView1<'_, f64>,
    e_i: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>), GraphError> {
    let (nu, ni) = (norm(e_u), norm(e_i));
    if nu == 0.0 || ni == 0.0 {
        return Err(GraphError::ZeroVector);
    }
    let hu = &e_u / nu;
    let hi = &e_i / ni;
    let f = hu.dot(&hi);
    let gu = (&hi - &(&hu * f)) / nu;
    let gi = (&hu - &(&hi * f)) / ni;
    Ok((gu, gi))
}

/// Unit rows and norms of a table, for scoring many pairs against one
/// forward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    users: Array2<f64>,
    items: Array2<f64>,
    user_norm: Vec<f64>,
    item_norm: Vec<f64>,
}

fn normalize(m: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>), GraphError> {
    let norms: Vec<f64> = m.axis_iter(Axis(0)).map(norm).collect();
    if norms.iter().any(|n| *n == 0.0) {
        return Err(GraphError::ZeroVector);
    }
    let mut unit = m.clone();
    for (mut row, n) in unit.axis_iter_mut(Axis(0)).zip(&norms) {
        row /= *n;
    }
    Ok((unit, norms))
}

impl NormCache {
    pub fn new(table: &EmbeddingTable) -> Result<Self, GraphError> {
        let (users, user_norm) = normalize(&table.users)?;
        let (items, item_norm) = normalize(&table.items)?;
        Ok(Self {
            users,
            items,
            user_norm,
            item_norm,
        })
    }

    pub fn score(&self, u: u32, i: u32) -> f64 {
        self.users.row(u as usize).dot(&self.items.row(i as usize))
    }

    /// Scores of `u` against every item.
    pub fn user_scores(&self, u: u32) -> Array1<f64> {
        self.items.dot(&self.users.row(u as usize))
    }

    /// Adds `coef · ∂f(u,i)/∂(e_u, e_i)` into `grads`.
    pub fn accumulate(&self, u: u32, i: u32, coef: f64, grads: &mut EmbeddingTable) {
        if coef == 0.0 {
            return;
        }
        let (u, i) = (u as usize, i as usize);
        let hu = self.users.row(u);
        let hi = self.items.row(i);
        let f = hu.dot(&hi);
        let cu = coef / self.user_norm[u];
        let ci = coef / self.item_norm[i];
        let mut gu = grads.users.row_mut(u);
        gu.scaled_add(cu, &hi);
        gu.scaled_add(-cu * f, &hu);
        let mut gi = grads.items.row_mut(i);
        gi.scaled_add(ci, &hu);
        gi.scaled_add(-ci * f, &hi);
    }
}
