use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i * T / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("T", format!("horizon must be positive and finite, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::param("n", format!("need at least 2 steps, got {steps}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `n`; there are `n + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes_len(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    /// Composite trapezoid of nodal values.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes_len());
        let interior: f64 = values[1..self.steps].iter().sum();
        self.dt() * (interior + 0.5 * (values[0] + values[self.steps]))
    }

    /// Trapezoid weights, `dt/2` at the ends and `dt` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.nodes_len()];
        w[0] = 0.5 * dt;
        w[self.steps] = 0.5 * dt;
        w
    }
}
