use super::{DiscretizeError, Grid};
use std::sync::Arc;

/// One real value per grid node, with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, DiscretizeError> {
        if values.len() != grid.len() {
            return Err(DiscretizeError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DiscretizeError::NonFinite(i));
        }
        Ok(Self { grid, values, time: 0.0 })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self { grid, values, time: 0.0 }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self { grid, values: vec![c; n], time: 0.0 }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same grid and time, new values.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = self.nodes().iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect();
        Field { grid: self.grid.clone(), values, time: self.time }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ w_i u_i` with the grid's trapezoid weights.
    pub fn integral(&self) -> f64 {
        self.grid.quadrature_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// Grid inner product `Σ w_i u_i v_i`.
    pub fn inner(&self, other: &Field) -> f64 {
        self.grid
            .quadrature_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}
