use super::{DiscretizeError, Field, Grid};
use crate::exec::Execution;
use nalgebra::DMatrix;
use std::sync::Arc;

/// Dense quadrature matrix: row `i` reconstructs `L[u](x_i)` from nodal
/// values (the tail closure, if any, is folded into the boundary columns).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    n: usize,
    /// Row-major entries.
    data: Vec<f64>,
    /// Kernel modulation `1 + a(x_i)` applied to each row.
    row_scale: Vec<f64>,
    /// Rows sum to zero in exact arithmetic; `apply` then uses the
    /// difference form `Σ_j A_ij (u_j - u_i)`, which maps constants to 0
    /// exactly.
    conservative: bool,
}

impl OperatorMatrix {
    pub(crate) fn from_rows(grid: Arc<Grid>, data: Vec<f64>, row_scale: Vec<f64>, conservative: bool) -> Self {
        let n = grid.len();
        debug_assert_eq!(data.len(), n * n);
        Self { grid, n, data, row_scale, conservative }
    }

    /// The zero operator (diffusion switched off).
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, n, data: vec![0.0; n * n], row_scale: vec![1.0; n], conservative: true }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    pub fn row_scale(&self) -> &[f64] {
        &self.row_scale
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    /// `max_i |Σ_j A_ij|` as the stored matrix sees it; this is what a
    /// factorization of the matrix inherits even when `apply` is exact on
    /// constants.
    pub fn row_sum_defect(&self) -> f64 {
        let ones = vec![1.0; self.n];
        (0..self.n).map(|i| dot(self.row(i), &ones).abs()).fold(0.0, f64::max)
    }

    /// `y = A x`, rows summed in a fixed order.
    pub fn apply_slice(&self, x: &[f64], exec: Execution) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        exec.fill_rows(&mut out, 1, |i, slot| {
            slot[0] = if self.conservative { dot_shifted(self.row(i), x, x[i]) } else { dot(self.row(i), x) };
        });
        out
    }

    pub fn apply(&self, u: &Field) -> Result<Field, DiscretizeError> {
        self.check_field(u)?;
        let values = self.apply_slice(u.values(), Execution::default());
        Ok(Field::new(self.grid.clone(), values)?.with_time(u.time()))
    }

    pub(crate) fn check_field(&self, u: &Field) -> Result<(), DiscretizeError> {
        if u.len() != self.n {
            return Err(DiscretizeError::LengthMismatch { expected: self.n, got: u.len() });
        }
        if !(Arc::ptr_eq(&self.grid, u.grid()) || *self.grid == **u.grid()) {
            return Err(DiscretizeError::GridMismatch);
        }
        Ok(())
    }

    /// Column-major copy with `diag_shift[i]` added on the diagonal and every
    /// entry multiplied by `scale`: `scale·A + diag(shift)`.
    pub fn to_dmatrix(&self, scale: f64, diag_shift: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::from_fn(n, n, |i, j| scale * self.data[i * n + j]);
        for i in 0..n {
            m[(i, i)] += diag_shift[i];
        }
        m
    }

    /// Largest `|A_ij - A_ji|` relative to the Frobenius norm.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut diff = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                diff += (a - b) * (a - b);
                norm += a * a;
            }
        }
        (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// `Σ_k a_k (b_k - c)`, same accumulation order as [`dot`].
fn dot_shifted(a: &[f64], b: &[f64], c: f64) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for q in 0..chunks {
        let k = 4 * q;
        acc[0] += a[k] * (b[k] - c);
        acc[1] += a[k + 1] * (b[k + 1] - c);
        acc[2] += a[k + 2] * (b[k + 2] - c);
        acc[3] += a[k + 3] * (b[k + 3] - c);
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * (b[k] - c);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators; order is fixed, so results are reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
