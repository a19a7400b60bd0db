use ndarray::{Array2, ArrayView2};

use crate::dataio::DatasetSplit;

/// Bipartite user-item graph over train edges with LightGCN's symmetric
/// normalization `1/√(deg_u · deg_i)` stored per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub num_users: usize,
    pub num_items: usize,
    user_adj: Vec<Vec<(u32, f64)>>,
    item_adj: Vec<Vec<(u32, f64)>>,
}

impl InteractionGraph {
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(u32, u32)]) -> Self {
        let mut udeg = vec![0usize; num_users];
        let mut ideg = vec![0usize; num_items];
        for &(u, i) in edges {
            udeg[u as usize] += 1;
            ideg[i as usize] += 1;
        }
        let mut user_adj = vec![Vec::new(); num_users];
        let mut item_adj = vec![Vec::new(); num_items];
        for &(u, i) in edges {
            let w = 1.0 / ((udeg[u as usize] * ideg[i as usize]) as f64).sqrt();
            user_adj[u as usize].push((i, w));
            item_adj[i as usize].push((u, w));
        }
        Self {
            num_users,
            num_items,
            user_adj,
            item_adj,
        }
    }

    pub fn from_split(split: &DatasetSplit) -> Self {
        Self::from_edges(split.num_users, split.num_items, &split.train_pairs())
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_adj[u].len()
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_adj[i].len()
    }

    pub fn num_edges(&self) -> usize {
        self.user_adj.iter().map(Vec::len).sum()
    }

    pub fn user_neighbors(&self, u: usize) -> &[(u32, f64)] {
        &self.user_adj[u]
    }

    pub fn item_neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.item_adj[i]
    }

    /// One application of the normalized adjacency. The operator is
    /// symmetric, so it also serves as its own transpose in backward.
    pub fn propagate(&self, users: ArrayView2<'_, f64>, items: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let d = users.ncols();
        let mut nu = Array2::zeros((self.num_users, d));
        let mut ni = Array2::zeros((self.num_items, d));
        for (u, nbrs) in self.user_adj.iter().enumerate() {
            let mut row = nu.row_mut(u);
            for &(i, w) in nbrs {
                row.scaled_add(w, &items.row(i as usize));
            }
        }
        for (i, nbrs) in self.item_adj.iter().enumerate() {
            let mut row = ni.row_mut(i);
            for &(u, w) in nbrs {
                row.scaled_add(w, &users.row(u as usize));
            }
        }
        (nu, ni)
    }
}
