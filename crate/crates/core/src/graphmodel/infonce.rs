use ndarray::{Array2, ArrayView2, Axis};

use super::GraphError;

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub value: f64,
    pub grad_a: Array2<f64>,
    pub grad_b: Array2<f64>,
}

fn unit_rows(m: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Vec<f64>), GraphError> {
    let mut unit = m.to_owned();
    let mut norms = Vec::with_capacity(m.nrows());
    for mut row in unit.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(GraphError::ZeroVector);
        }
        row /= n;
        norms.push(n);
    }
    Ok((unit, norms))
}

/// `weight · mean_i −log softmax_k(cos(a_i, b_k)/τ)[i]`: row `i` of `b` is
/// the positive view of row `i` of `a`, every other row a negative.
pub fn infonce_auxiliary(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    temperature: f64,
    weight: f64,
) -> Result<InfoNceOutput, GraphError> {
    if a.dim() != b.dim() {
        return Err(GraphError::Shape(format!("views {:?} and {:?}", a.dim(), b.dim())));
    }
    if !(temperature > 0.0) {
        return Err(GraphError::Config(format!("temperature must be > 0, got {temperature}")));
    }
    let n = a.nrows();
    let zero = || InfoNceOutput {
        value: 0.0,
        grad_a: Array2::zeros(a.raw_dim()),
        grad_b: Array2::zeros(b.raw_dim()),
    };
    if n < 2 || weight == 0.0 {
        return Ok(zero());
    }
    let (ah, an) = unit_rows(a)?;
    let (bh, bn) = unit_rows(b)?;
    let s = ah.dot(&bh.t());
    let mut value = 0.0;
    // G = ∂L/∂s = weight/(nτ) · (softmax rows − I)
    let mut g = Array2::zeros((n, n));
    let scale = weight / (n as f64 * temperature);
    for i in 0..n {
        let row = s.row(i);
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / temperature;
        let z: f64 = row.iter().map(|x| (x / temperature - top).exp()).sum();
        let lse = top + z.ln();
        value += lse - s[[i, i]] / temperature;
        for k in 0..n {
            let p = (s[[i, k]] / temperature - lse).exp();
            g[[i, k]] = scale * (p - if i == k { 1.0 } else { 0.0 });
        }
    }
    let gs = &g * &s;
    let row_gs = gs.sum_axis(Axis(1));
    let col_gs = gs.sum_axis(Axis(0));
    let mut grad_a = g.dot(&bh);
    let mut grad_b = g.t().dot(&ah);
    for i in 0..n {
        let mut r = grad_a.row_mut(i);
        r.scaled_add(-row_gs[i], &ah.row(i));
        r /= an[i];
        let mut r = grad_b.row_mut(i);
        r.scaled_add(-col_gs[i], &bh.row(i));
        r /= bn[i];
    }
    Ok(InfoNceOutput {
        value: weight * value / n as f64,
        grad_a,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn orthogonal_pair() {
        let a = array![[1.0, 0.0], [0.0, 2.0]];
        let out = infonce_auxiliary(a.view(), a.view(), 0.2, 1.0).unwrap();
        assert!((out.value - (-5f64).exp().ln_1p()).abs() < 1e-14);
        let single = infonce_auxiliary(a.slice(ndarray::s![..1, ..]), a.slice(ndarray::s![..1, ..]), 0.2, 1.0).unwrap();
        assert_eq!(single.value, 0.0);
        let off = infonce_auxiliary(a.view(), a.view(), 0.2, 0.0).unwrap();
        assert!(off.grad_a.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gradient_vs_finite_differences() {
        let mut rng = stream_rng(21, 0);
        let a = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let b = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let out = infonce_auxiliary(a.view(), b.view(), 0.3, 0.7).unwrap();
        let f = |a: &Array2<f64>, b: &Array2<f64>| infonce_auxiliary(a.view(), b.view(), 0.3, 0.7).unwrap().value;
        let h = 1e-5;
        for idx in [[0, 0], [1, 2], [3, 1], [2, 0]] {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[idx] += h;
            am[idx] -= h;
            let fd = (f(&ap, &b) - f(&am, &b)) / (2.0 * h);
            assert!((fd - out.grad_a[idx]).abs() <= 1e-4 * fd.abs().max(1e-3));
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[idx] += h;
            bm[idx] -= h;
            let fd = (f(&a, &bp) - f(&a, &bm)) / (2.0 * h);
            assert!((fd - out.grad_b[idx]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
    }
}
