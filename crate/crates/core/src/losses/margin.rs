use serde::{Deserialize, Serialize};

/// How DrRL margins are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// One learnable β per user.
    #[default]
    PerUser,
    /// A single learnable β shared by every user.
    Shared,
    /// Per-user β frozen at its initial value.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginState {
    pub mode: MarginMode,
    values: Vec<f64>,
}

impl MarginState {
    pub fn new(mode: MarginMode, num_users: usize, beta0: f64) -> Self {
        let len = match mode {
            MarginMode::Shared => 1,
            _ => num_users,
        };
        Self {
            mode,
            values: vec![beta0; len],
        }
    }

    pub fn from_values(mode: MarginMode, values: Vec<f64>) -> Self {
        Self { mode, values }
    }

    pub fn get(&self, user: u32) -> f64 {
        match self.mode {
            MarginMode::Shared => self.values[0],
            _ => self.values[user as usize],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-user margins, expanding a shared β to every user.
    pub fn per_user(&self, num_users: usize) -> Vec<f64> {
        (0..num_users as u32).map(|u| self.get(u)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|b| b.is_finite())
    }

    /// `β_u ← β_u − lr·Σ ∂L_β/∂β_u` over the `(user, gradient)` pairs of a
    /// batch. Users absent from `grads` keep their margin.
    pub fn beta_step(&mut self, grads: &[(u32, f64)], lr: f64) {
        match self.mode {
            MarginMode::Fixed => {}
            MarginMode::Shared => {
                let g: f64 = grads.iter().map(|(_, g)| g).sum();
                self.values[0] -= lr * g;
            }
            MarginMode::PerUser => {
                for &(u, g) in grads {
                    self.values[u as usize] -= lr * g;
                }
            }
        }
    }
}
