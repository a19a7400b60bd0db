use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{BackboneConfig, BackboneKind, EmbeddingTable, GraphError, InteractionGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Representations used for scoring.
    pub output: EmbeddingTable,
    /// Layer 0 (the raw table) through layer L; only layer 0 for MF.
    pub layers: Vec<EmbeddingTable>,
}

impl ForwardOutput {
    pub fn layer(&self, l: usize) -> &EmbeddingTable {
        &self.layers[l]
    }
}

/// Gradient arriving directly at one intermediate layer, e.g. from the
/// contrastive auxiliary.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub layer: usize,
    pub grads: EmbeddingTable,
}

fn add_noise<R: Rng + ?Sized>(m: &mut Array2<f64>, eps: f64, rng: &mut R) {
    let d = m.ncols();
    let mut dir = vec![0.0; d];
    for mut row in m.rows_mut() {
        let mut norm = 0.0;
        while norm == 0.0 {
            for x in dir.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        for (r, x) in row.iter_mut().zip(&dir) {
            *r += eps * x / norm;
        }
    }
}

fn check_graph(table: &EmbeddingTable, graph: &InteractionGraph) -> Result<(), GraphError> {
    if graph.num_users != table.num_users() || graph.num_items != table.num_items() {
        return Err(GraphError::Shape(format!(
            "graph has {}x{} nodes, table {}x{}",
            graph.num_users,
            graph.num_items,
            table.num_users(),
            table.num_items()
        )));
    }
    Ok(())
}

pub fn forward<R: Rng + ?Sized>(
    table: &EmbeddingTable,
    graph: &InteractionGraph,
    cfg: &BackboneConfig,
    rng: &mut R,
) -> Result<ForwardOutput, GraphError> {
    let depth = cfg.depth();
    if depth == 0 {
        return Ok(ForwardOutput {
            output: table.clone(),
            layers: vec![table.clone()],
        });
    }
    check_graph(table, graph)?;
    let noisy = cfg.kind == BackboneKind::XSimGcl && cfg.noise_eps > 0.0;
    let mut layers = vec![table.clone()];
    let mut sum = table.clone();
    for _ in 0..depth {
        let prev = layers.last().expect("layer 0 present");
        let (mut u, mut i) = graph.propagate(prev.users.view(), prev.items.view());
        if noisy {
            add_noise(&mut u, cfg.noise_eps, rng);
            add_noise(&mut i, cfg.noise_eps, rng);
        }
        let next = EmbeddingTable { users: u, items: i };
        sum.add_scaled(1.0, &next);
        layers.push(next);
    }
    let scale = 1.0 / (depth + 1) as f64;
    sum.users *= scale;
    sum.items *= scale;
    Ok(ForwardOutput { output: sum, layers })
}

/// Pulls gradients w.r.t. the forward output (plus any per-layer
/// gradients) back to the raw table. Noise is additive, so it drops out.
pub fn backward(
    graph: &InteractionGraph,
    cfg: &BackboneConfig,
    output_grads: &EmbeddingTable,
    layer_grads: &[LayerGradient],
) -> Result<EmbeddingTable, GraphError> {
    let depth = cfg.depth();
    for lg in layer_grads {
        if lg.layer > depth {
            return Err(GraphError::Shape(format!("layer {} beyond depth {depth}", lg.layer)));
        }
    }
    let scale = 1.0 / (depth + 1) as f64;
    let direct = |l: usize| {
        let mut g = output_grads.clone();
        g.users *= scale;
        g.items *= scale;
        for lg in layer_grads.iter().filter(|lg| lg.layer == l) {
            g.add_scaled(1.0, &lg.grads);
        }
        g
    };
    let mut g = direct(depth);
    for l in (0..depth).rev() {
        let (u, i) = graph.propagate(g.users.view(), g.items.view());
        let mut next = direct(l);
        next.users += &u;
        next.items += &i;
        g = next;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    fn single_edge() -> (EmbeddingTable, InteractionGraph) {
        let t = EmbeddingTable::new(array![[1.0, 2.0]], array![[-3.0, 0.5]]).unwrap();
        (t, InteractionGraph::from_edges(1, 1, &[(0, 0)]))
    }

    #[test]
    fn mf_is_identity() {
        let (t, g) = single_edge();
        let out = forward(&t, &g, &BackboneConfig::mf(2), &mut stream_rng(0, 0)).unwrap();
        assert_eq!(out.output, t);
        let back = backward(&g, &BackboneConfig::mf(2), &t, &[]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn two_layer_single_edge() {
        let (t, g) = single_edge();
        let mut cfg = BackboneConfig::new(BackboneKind::LightGcn);
        cfg.layers = 2;
        let out = forward(&t, &g, &cfg, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(out.layers[1].users.row(0), t.items.row(0));
        assert_eq!(out.layers[2].users.row(0), t.users.row(0));
        let expect = (&t.users.row(0) * 2.0 + &t.items.row(0)) / 3.0;
        for (a, b) in out.output.users.row(0).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn one_layer_backward_transposes() {
        let (_, g) = single_edge();
        let mut cfg = BackboneConfig::new(BackboneKind::LightGcn);
        cfg.layers = 1;
        let grads = EmbeddingTable::new(array![[1.0, 0.0]], array![[0.0, 4.0]]).unwrap();
        let back = backward(&g, &cfg, &grads, &[]).unwrap();
        assert_eq!(back.users, array![[0.5, 2.0]]);
        assert_eq!(back.items, array![[0.5, 2.0]]);
    }

    #[test]
    fn zero_noise_matches_lightgcn() {
        let t = EmbeddingTable::random(3, 4, 5, 0.1, &mut stream_rng(1, 0));
        let g = InteractionGraph::from_edges(3, 4, &[(0, 0), (0, 2), (1, 1), (2, 3), (2, 0)]);
        let mut x = BackboneConfig::new(BackboneKind::XSimGcl);
        x.noise_eps = 0.0;
        let l = BackboneConfig::new(BackboneKind::LightGcn);
        let a = forward(&t, &g, &x, &mut stream_rng(2, 0)).unwrap();
        let b = forward(&t, &g, &l, &mut stream_rng(3, 0)).unwrap();
        assert_eq!(a.output, b.output);
    }

    #[test]
    fn noise_has_requested_norm() {
        let mut m = Array2::zeros((6, 4));
        add_noise(&mut m, 0.2, &mut stream_rng(9, 0));
        for row in m.rows() {
            let n = row.dot(&row).sqrt();
            assert!((n - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_node_keeps_a_share_of_layer_zero() {
        let t = EmbeddingTable::random(2, 2, 3, 0.1, &mut stream_rng(4, 0));
        let g = InteractionGraph::from_edges(2, 2, &[(0, 0)]);
        let cfg = BackboneConfig::new(BackboneKind::LightGcn);
        let out = forward(&t, &g, &cfg, &mut stream_rng(0, 0)).unwrap();
        for (a, b) in out.output.users.row(1).iter().zip(t.users.row(1).iter()) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
    }
}
