//! Finite-sum objectives `f(x) = (1/N) Σ fᵢ(x)` over a labelled dataset.
//!
//! Every summand carries the full regularizer, `fᵢ(x) = lossᵢ(x) + λ‖x‖²`, so a
//! mini-batch gradient always contains the exact regularizer gradient and stays
//! an unbiased estimate of `∇f`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Feature dimension up to which sparse inputs are stored densely.
pub const DENSE_DIM_LIMIT: usize = 512;

/// Sparse feature row, indices sorted ascending and unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Row-major `N × dim` matrix.
    Dense { dim: usize, values: Vec<f64> },
    Sparse { dim: usize, rows: Vec<SparseRow> },
}

/// Borrowed view of one feature row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl Row<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Dense(u) => linalg::dot(u, x),
            Row::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&j, v)| v * x[j]).sum()
            }
        }
    }

    /// `out += alpha * row`
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        match *self {
            Row::Dense(u) => linalg::axpy(alpha, u, out),
            Row::Sparse { indices, values } => {
                for (&j, v) in indices.iter().zip(values) {
                    out[j] += alpha * v;
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match *self {
            Row::Dense(u) => linalg::norm_sq(u),
            Row::Sparse { values, .. } => linalg::norm_sq(values),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        match *self {
            Row::Dense(u) => u.to_vec(),
            Row::Sparse { indices, values } => {
                let mut out = vec![0.0; dim];
                for (&j, &v) in indices.iter().zip(values) {
                    out[j] = v;
                }
                out
            }
        }
    }
}

/// Samples `(uᵢ, vᵢ)`: a feature row and a scalar label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Features,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn from_dense_rows(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(Features::Dense { dim, values }, labels)
    }

    /// Rows are `(index, value)` lists with 0-based indices; they are sorted here
    /// and duplicates rejected.
    pub fn from_sparse_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidDataset(format!("row {i} has a duplicate feature index")));
            }
            if let Some(&(j, _)) = row.last() {
                if j >= dim {
                    return Err(Error::InvalidDataset(format!(
                        "row {i} has feature index {j} >= dimension {dim}"
                    )));
                }
            }
            let (indices, values) = row.into_iter().unzip();
            out.push(SparseRow { indices, values });
        }
        Self::new(Features::Sparse { dim, rows: out }, labels)
    }

    pub fn new(features: Features, labels: Vec<f64>) -> Result<Self> {
        let (n_rows, dim) = match &features {
            Features::Dense { dim, values } => {
                if *dim == 0 {
                    return Err(Error::InvalidDataset("feature dimension is zero".into()));
                }
                if values.len() % dim != 0 {
                    return Err(Error::InvalidDataset("dense storage is not a whole number of rows".into()));
                }
                (values.len() / dim, *dim)
            }
            Features::Sparse { dim, rows } => (rows.len(), *dim),
        };
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if n_rows == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if labels.len() != n_rows {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n_rows} samples",
                labels.len()
            )));
        }
        let finite = match &features {
            Features::Dense { values, .. } => linalg::all_finite(values),
            Features::Sparse { rows, .. } => rows.iter().all(|r| linalg::all_finite(&r.values)),
        };
        if !finite || !linalg::all_finite(&labels) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { features, labels })
    }

    /// Converts sparse storage to dense when the dimension is small enough.
    pub fn densified_if_small(self) -> Self {
        match self.features {
            Features::Sparse { dim, ref rows } if dim <= DENSE_DIM_LIMIT => {
                let mut values = vec![0.0; rows.len() * dim];
                for (i, r) in rows.iter().enumerate() {
                    for (&j, &v) in r.indices.iter().zip(&r.values) {
                        values[i * dim + j] = v;
                    }
                }
                Self {
                    features: Features::Dense { dim, values },
                    labels: self.labels,
                }
            }
            _ => self,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        match &self.features {
            Features::Dense { dim, .. } | Features::Sparse { dim, .. } => *dim,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.features, Features::Sparse { .. })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.features {
            Features::Dense { dim, values } => Row::Dense(&values[i * dim..(i + 1) * dim]),
            Features::Sparse { rows, .. } => Row::Sparse {
                indices: &rows[i].indices,
                values: &rows[i].values,
            },
        }
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        (0..self.len()).map(|i| self.row(i).norm_sq()).fold(0.0, f64::max)
    }

    /// Rows as dense vectors, for serialization and comparison.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_dense(self.dim())).collect()
    }

    /// `(1/N) Σ uᵢuᵢᵀ`
    pub fn second_moment(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..self.len() {
            let u = DVector::from_vec(self.row(i).to_dense(n));
            m.ger(1.0, &u, &u, 1.0);
        }
        m / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `ln(1 + exp(−vᵢ uᵢᵀx))`, labels in {−1, +1}.
    Logistic,
    /// `1 − tanh(vᵢ uᵢᵀx)`, labels in {−1, +1}.
    SigmoidSvm,
    /// `½(uᵢᵀx)² − vᵢ uᵢᵀx`, any finite labels.
    Quadratic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::SigmoidSvm => "sigmoid-svm",
            LossKind::Quadratic => "quadratic",
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, LossKind::Quadratic)
    }

    /// Loss value at `a = uᵀx` for label `v`.
    fn value(self, a: f64, v: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                let z = v * a;
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            LossKind::SigmoidSvm => 1.0 - (v * a).tanh(),
            LossKind::Quadratic => 0.5 * a * a - v * a,
        }
    }

    /// Derivative of [`Self::value`] with respect to `a`.
    fn slope(self, a: f64, v: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                let z = v * a;
                // v·σ(−z), evaluated without overflow
                let s = if z >= 0.0 {
                    let e = (-z).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + z.exp())
                };
                -v * s
            }
            LossKind::SigmoidSvm => {
                let t = (v * a).tanh();
                -v * (1.0 - t * t)
            }
            LossKind::Quadratic => a - v,
        }
    }
}

/// Empirical risk over a shared, immutable dataset.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem {
    data: Arc<Dataset>,
    reg: f64,
    kind: LossKind,
    lipschitz: f64,
}

impl FiniteSumProblem {
    pub fn new(dataset: impl Into<Arc<Dataset>>, reg: f64, kind: LossKind) -> Result<Self> {
        let data = dataset.into();
        if !(reg >= 0.0 && reg.is_finite()) {
            return Err(Error::InvalidParameter(format!("regularizer must be finite and >= 0, got {reg}")));
        }
        if kind.is_binary() {
            if let Some((index, &label)) = data.labels().iter().enumerate().find(|(_, &v)| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidLabel { index, label });
            }
        }
        let r = data.max_row_norm_sq();
        let lipschitz = match kind {
            LossKind::Logistic => 0.25 * r + 2.0 * reg,
            LossKind::SigmoidSvm => 4.0 / (3.0 * 3f64.sqrt()) * r + 2.0 * reg,
            LossKind::Quadratic => {
                let eig = data.second_moment().symmetric_eigenvalues();
                eig.max() + 2.0 * reg
            }
        };
        Ok(Self { data, reg, kind, lipschitz })
    }

    pub fn make_logistic(dataset: impl Into<Arc<Dataset>>, reg: f64) -> Result<Self> {
        Self::new(dataset, reg, LossKind::Logistic)
    }

    pub fn make_sigmoid_svm(dataset: impl Into<Arc<Dataset>>, reg: f64) -> Result<Self> {
        Self::new(dataset, reg, LossKind::SigmoidSvm)
    }

    /// `f(x) = ½xᵀAx − bᵀx` split into `n` rank-one summands built from the
    /// Cholesky factor `A = LLᵀ`: `uⱼ = √n·lⱼ` and `vⱼ = √n·(L⁻¹b)ⱼ`.
    pub fn make_quadratic(a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidParameter("A must be a non-empty square matrix".into()));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let tol = 1e-12 * a.amax().max(1.0);
        if (a - a.transpose()).amax() > tol {
            return Err(Error::NotSpd);
        }
        let chol = a.clone().cholesky().ok_or(Error::NotSpd)?;
        let l = chol.l();
        let root = (n as f64).sqrt();
        let w = l
            .solve_lower_triangular(&DVector::from_column_slice(b))
            .ok_or(Error::NotSpd)?;
        let rows = (0..n).map(|j| l.column(j).iter().map(|v| root * v).collect()).collect();
        let labels = w.iter().map(|v| root * v).collect();
        Self::new(Dataset::from_dense_rows(rows, labels)?, 0.0, LossKind::Quadratic)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn shared_dataset(&self) -> Arc<Dataset> {
        Arc::clone(&self.data)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Lipschitz constant of `∇f`: exact for quadratics, the analytic bound
    /// `c·maxᵢ‖uᵢ‖² + 2λ` otherwise (`c = ¼` logistic, `4/(3√3)` sigmoid-SVM).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !linalg::all_finite(x) {
            return Err(Error::NonFinite("iterate"));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&index) = batch.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        Ok(())
    }

    pub fn eval_loss_i(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.batch_loss(&[i], x)
    }

    pub fn eval_grad_i(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.batch_grad(&[i], x)
    }

    /// Mean of `fᵢ(x)` over the batch, summed in ascending index order.
    pub fn batch_loss(&self, batch: &[usize], x: &[f64]) -> Result<f64> {
        self.check_batch(batch)?;
        self.check_point(x)?;
        let sorted = ascending(batch);
        let mut acc = 0.0;
        for &i in sorted.iter() {
            acc += self.kind.value(self.data.row(i).dot(x), self.data.label(i));
        }
        Ok(acc / batch.len() as f64 + self.reg * linalg::norm_sq(x))
    }

    /// Mean of `∇fᵢ(x)` over the batch, summed in ascending index order.
    pub fn batch_grad(&self, batch: &[usize], x: &[f64]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.check_point(x)?;
        let sorted = ascending(batch);
        let mut g = vec![0.0; self.dim()];
        for &i in sorted.iter() {
            let row = self.data.row(i);
            row.axpy_into(self.kind.slope(row.dot(x), self.data.label(i)), &mut g);
        }
        let m = batch.len() as f64;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj = *gj / m + 2.0 * self.reg * xj;
        }
        Ok(g)
    }

    pub fn full_loss(&self, x: &[f64]) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch_loss(&all, x)
    }

    pub fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch_grad(&all, x)
    }

    /// Fraction of samples with `sign(uᵢᵀx) = vᵢ` (zero margin counts as +1).
    /// `None` for non-binary problems.
    pub fn accuracy(&self, x: &[f64]) -> Option<f64> {
        accuracy_on(self.kind, &self.data, x)
    }
}

/// Sign-agreement accuracy of the linear classifier `x` on `data`.
pub fn accuracy_on(kind: LossKind, data: &Dataset, x: &[f64]) -> Option<f64> {
    if !kind.is_binary() || x.len() != data.dim() {
        return None;
    }
    let hits = (0..data.len())
        .filter(|&i| {
            let pred = if data.row(i).dot(x) >= 0.0 { 1.0 } else { -1.0 };
            pred == data.label(i)
        })
        .count();
    Some(hits as f64 / data.len() as f64)
}

fn ascending(batch: &[usize]) -> std::borrow::Cow<'_, [usize]> {
    if batch.windows(2).all(|w| w[0] <= w[1]) {
        std::borrow::Cow::Borrowed(batch)
    } else {
        let mut v = batch.to_vec();
        v.sort_unstable();
        std::borrow::Cow::Owned(v)
    }
}
