//! Graphs, Laplacians and multi-view data, plus the half-vectorization
//! machinery shared by the solvers.
//!
//! A Laplacian `L` on `N` nodes is parameterized by the `V = N(N+1)/2`
//! entries of its lower triangle, stored as nonnegative magnitudes: slot
//! `(i, i)` carries the degree `L_ii` and slot `(i, j)`, `i > j`, carries the
//! edge weight `-L_ij`. Slots are ordered column-major over the lower
//! triangle, so the 1-based slot of `(i, j)` is `(j-1)N + i - j(j-1)/2`.
//!
//! The duplication operator `D` maps a slot vector to `vec(L)` and the
//! constraint system `C l = d` encodes `tr(L) = N` and `L 1 = 0`. Neither is
//! ever stored densely; both are applied slot by slot in `O(N^2)`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{MlgError, Result};

/// Number of lower-triangle slots for `n` nodes.
pub fn slot_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// 1-based slot index of the lower-triangle entry `(i, j)`, `1 <= j <= i <= n`.
pub fn half_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if j == 0 || j > i || i > n {
        return Err(MlgError::Index(format!(
            "need 1 <= j <= i <= n, got i={i}, j={j}, n={n}"
        )));
    }
    Ok((j - 1) * n + i - j * (j - 1) / 2)
}

/// 0-based slot of the 0-based pair `(i, j)` with `i >= j`.
#[cfg(test)]
fn slot0(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i >= j && i < n);
    j * n + i - j * (j + 1) / 2
}

/// Multi-view observations over a shared set of `N` entities.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    views: Vec<DMatrix<f64>>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<DMatrix<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| MlgError::InvalidSize("a dataset needs at least one view".into()))?;
        let n = first.nrows();
        if n < 2 {
            return Err(MlgError::InvalidSize(format!(
                "a dataset needs at least 2 nodes, got {n}"
            )));
        }
        for (m, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(MlgError::Dimension(format!(
                    "view {} has {} rows, view 1 has {n}",
                    m + 1,
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(MlgError::InvalidSize(format!("view {} has no columns", m + 1)));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(MlgError::Validation(format!(
                    "view {} contains non-finite values",
                    m + 1
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(MlgError::Dimension(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        Ok(Self { views, labels })
    }

    pub fn n_nodes(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Feature counts `D_m` of each view.
    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }
}

/// Sample covariance `S = X X^T` of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCovariance {
    matrix: DMatrix<f64>,
}

impl ViewCovariance {
    /// Computes `X X^T` and symmetrizes away roundoff.
    pub fn from_view(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(MlgError::Dimension("empty view matrix".into()));
        }
        if x.nrows() < 2 {
            return Err(MlgError::InvalidSize("a view needs at least 2 rows".into()));
        }
        let s = x * x.transpose();
        let matrix = (&s + s.transpose()) * 0.5;
        Ok(Self { matrix })
    }

    /// Wraps an existing matrix after checking symmetry and positive semidefiniteness.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() < 2 {
            return Err(MlgError::Dimension(format!(
                "covariance must be square with N >= 2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(MlgError::Validation(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let eig = m.clone().symmetric_eigenvalues();
        let lo = eig.min();
        let hi = eig.max();
        if lo < -1e-10 * hi.max(0.0) - f64::EPSILON * scale {
            return Err(MlgError::Validation(format!(
                "covariance is not positive semidefinite (smallest eigenvalue {lo:e})"
            )));
        }
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// `S / tr(S)`, or `S` unchanged when the trace vanishes.
    pub fn trace_normalized(&self) -> Self {
        let tr = self.matrix.trace();
        if tr > 0.0 {
            Self {
                matrix: &self.matrix / tr,
            }
        } else {
            self.clone()
        }
    }
}

/// The structural property a candidate Laplacian failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianProperty {
    NotSquare,
    NonFinite,
    Asymmetric,
    PositiveOffDiagonal,
    NonzeroRowSum,
    NegativeDiagonal,
}

impl fmt::Display for LaplacianProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LaplacianProperty::NotSquare => "matrix is not square",
            LaplacianProperty::NonFinite => "non-finite entry",
            LaplacianProperty::Asymmetric => "asymmetric entries",
            LaplacianProperty::PositiveOffDiagonal => "positive off-diagonal entry",
            LaplacianProperty::NonzeroRowSum => "row sum is not zero",
            LaplacianProperty::NegativeDiagonal => "negative diagonal entry",
        };
        f.write_str(s)
    }
}

/// Why a matrix is not a combinatorial Laplacian. Positions are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianViolation {
    pub property: LaplacianProperty,
    pub row: usize,
    pub col: usize,
    /// Size of the worst violation (entry value, asymmetry or row sum).
    pub magnitude: f64,
}

impl fmt::Display for LaplacianViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at ({}, {}): {:e}",
            self.property, self.row, self.col, self.magnitude
        )
    }
}

impl std::error::Error for LaplacianViolation {}

impl From<LaplacianViolation> for MlgError {
    fn from(v: LaplacianViolation) -> Self {
        MlgError::Validation(v.to_string())
    }
}

/// A validated combinatorial graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: DMatrix<f64>,
}

pub const DEFAULT_LAPLACIAN_TOL: f64 = 1e-9;

impl GraphLaplacian {
    /// Checks symmetry, zero row sums, nonpositive off-diagonals and
    /// nonnegative diagonal, all within `tol`. Never panics.
    pub fn validate(m: DMatrix<f64>, tol: f64) -> std::result::Result<Self, LaplacianViolation> {
        if !m.is_square() {
            return Err(LaplacianViolation {
                property: LaplacianProperty::NotSquare,
                row: m.nrows(),
                col: m.ncols(),
                magnitude: f64::NAN,
            });
        }
        let n = m.nrows();
        let mut worst: Option<LaplacianViolation> = None;
        let note = |worst: &mut Option<LaplacianViolation>, prop, row, col, mag: f64| {
            if worst.as_ref().is_none_or(|w| mag > w.magnitude) {
                *worst = Some(LaplacianViolation {
                    property: prop,
                    row: row + 1,
                    col: col + 1,
                    magnitude: mag,
                });
            }
        };

        for j in 0..n {
            for i in 0..n {
                if !m[(i, j)].is_finite() {
                    note(&mut worst, LaplacianProperty::NonFinite, i, j, f64::INFINITY);
                }
            }
        }
        if let Some(w) = worst.take() {
            return Err(w);
        }

        for j in 0..n {
            for i in (j + 1)..n {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if d > tol {
                    note(&mut worst, LaplacianProperty::Asymmetric, i, j, d);
                }
            }
        }
        if let Some(w) = worst.take() {
            return Err(w);
        }

        for j in 0..n {
            for i in 0..n {
                if i != j && m[(i, j)] > tol {
                    note(&mut worst, LaplacianProperty::PositiveOffDiagonal, i, j, m[(i, j)]);
                }
            }
        }
        if let Some(w) = worst.take() {
            return Err(w);
        }

        for i in 0..n {
            let s: f64 = m.row(i).sum();
            if s.abs() > tol {
                note(&mut worst, LaplacianProperty::NonzeroRowSum, i, i, s.abs());
            }
        }
        if let Some(w) = worst.take() {
            return Err(w);
        }

        for i in 0..n {
            if m[(i, i)] < -tol {
                note(&mut worst, LaplacianProperty::NegativeDiagonal, i, i, -m[(i, i)]);
            }
        }
        if let Some(w) = worst {
            return Err(w);
        }

        Ok(Self { matrix: m })
    }

    /// Builds `diag(W 1) - W` from a symmetric nonnegative adjacency matrix.
    pub fn from_adjacency(w: &DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() < 2 {
            return Err(MlgError::Dimension("adjacency must be square with N >= 2".into()));
        }
        let n = w.nrows();
        let mut l = -w.clone();
        for i in 0..n {
            l[(i, i)] = 0.0;
            let deg: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
            l[(i, i)] = deg;
        }
        Ok(Self::validate(l, DEFAULT_LAPLACIAN_TOL)?)
    }

    /// Builds a Laplacian from 0-based weighted edges `(i, j, w)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n < 2 {
            return Err(MlgError::InvalidSize(format!("need N >= 2, got {n}")));
        }
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, weight) in edges {
            if i >= n || j >= n || i == j {
                return Err(MlgError::Index(format!(
                    "edge ({}, {}) invalid for {n} nodes",
                    i + 1,
                    j + 1
                )));
            }
            if !(weight >= 0.0) {
                return Err(MlgError::Validation(format!(
                    "edge ({}, {}) has weight {weight}",
                    i + 1,
                    j + 1
                )));
            }
            w[(i, j)] += weight;
            w[(j, i)] += weight;
        }
        Self::from_adjacency(&w)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// `W = diag(L) - L`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut w = -self.matrix.clone();
        w.fill_diagonal(0.0);
        w
    }

    /// Edges `(i, j, w)` with `i < j` (0-based) and weight above `threshold`.
    pub fn edges(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = -self.matrix[(j, i)];
                if w > threshold {
                    out.push((i, j, w));
                }
            }
        }
        out
    }
}

/// Smoothness `tr(L S)` of a view on a layer.
pub fn smoothness(l: &GraphLaplacian, s: &ViewCovariance) -> Result<f64> {
    if l.n_nodes() != s.n_nodes() {
        return Err(MlgError::Dimension(format!(
            "Laplacian has {} nodes, covariance {}",
            l.n_nodes(),
            s.n_nodes()
        )));
    }
    Ok(l.matrix().dot(s.matrix()))
}

/// Nonnegative half-vectorized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerVector {
    values: Vec<f64>,
    n_nodes: usize,
}

impl LayerVector {
    pub fn new(values: Vec<f64>, n_nodes: usize) -> Result<Self> {
        let v = slot_count(n_nodes);
        if values.len() != v {
            return Err(MlgError::Dimension(format!(
                "layer vector for {n_nodes} nodes needs {v} slots, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !(*x >= 0.0)) {
            return Err(MlgError::Validation(format!(
                "slot {} is {} (must be nonnegative)",
                pos + 1,
                values[pos]
            )));
        }
        Ok(Self { values, n_nodes })
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            values: vec![0.0; slot_count(n_nodes)],
            n_nodes,
        }
    }

    /// Half-vectorizes a Laplacian: degrees on diagonal slots, `-L_ij` elsewhere.
    pub fn from_laplacian(l: &GraphLaplacian) -> Self {
        let n = l.n_nodes();
        let m = l.matrix();
        let mut values = Vec::with_capacity(slot_count(n));
        for j in 0..n {
            values.push(m[(j, j)].max(0.0));
            for i in (j + 1)..n {
                values.push((-m[(i, j)]).max(0.0));
            }
        }
        Self { values, n_nodes: n }
    }

    pub(crate) fn from_raw(values: Vec<f64>, n_nodes: usize) -> Self {
        debug_assert_eq!(values.len(), slot_count(n_nodes));
        Self { values, n_nodes }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The duplication operator `D` with `vec(L) = D l`, applied implicitly.
///
/// Column `(i, j)`, `i > j`, holds `-1` at `(i, j)` and `(j, i)`; column
/// `(i, i)` holds `+1` at `(i, i)`. Hence `D^T D` is diagonal with entries 2
/// and 1 respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DuplicationOperator {
    n: usize,
}

impl DuplicationOperator {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(MlgError::InvalidSize(format!("need N >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_slots(&self) -> usize {
        slot_count(self.n)
    }

    /// Nonzeros of column `slot` (0-based) as `(row, col, coefficient)` in the
    /// `N x N` matrix layout.
    pub fn column(&self, slot: usize) -> Vec<(usize, usize, f64)> {
        let (i, j) = self.slot_pair(slot);
        if i == j {
            vec![(i, i, 1.0)]
        } else {
            vec![(i, j, -1.0), (j, i, -1.0)]
        }
    }

    /// 0-based `(i, j)`, `i >= j`, of a 0-based slot.
    pub fn slot_pair(&self, slot: usize) -> (usize, usize) {
        let n = self.n;
        assert!(slot < slot_count(n), "slot {slot} out of range");
        let mut j = 0;
        let mut start = 0;
        while start + (n - j) <= slot {
            start += n - j;
            j += 1;
        }
        (j + slot - start, j)
    }

    /// `mat(D l)`.
    pub fn apply(&self, l: &LayerVector) -> Result<DMatrix<f64>> {
        self.check_len(l.len())?;
        Ok(self.apply_slice(l.values()))
    }

    pub(crate) fn apply_slice(&self, l: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        let mut s = 0;
        for j in 0..n {
            m[(j, j)] = l[s];
            s += 1;
            for i in (j + 1)..n {
                m[(i, j)] = -l[s];
                m[(j, i)] = -l[s];
                s += 1;
            }
        }
        m
    }

    /// `D^T vec(M)`.
    pub fn adjoint(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(MlgError::Dimension(format!(
                "expected {n}x{n} matrix, got {}x{}",
                m.nrows(),
                m.ncols(),
                n = self.n
            )));
        }
        let n = self.n;
        let mut r = Vec::with_capacity(self.n_slots());
        for j in 0..n {
            r.push(m[(j, j)]);
            for i in (j + 1)..n {
                r.push(-(m[(i, j)] + m[(j, i)]));
            }
        }
        Ok(r)
    }

    /// Diagonal of `D^T D`.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let n = self.n;
        let mut g = Vec::with_capacity(self.n_slots());
        for j in 0..n {
            g.push(1.0);
            g.extend(std::iter::repeat_n(2.0, n - j - 1));
        }
        g
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_slots() {
            return Err(MlgError::Dimension(format!(
                "expected {} slots, got {len}",
                self.n_slots()
            )));
        }
        Ok(())
    }
}

/// The equality constraints `C l = d`: row 0 is `tr(L) = N`, row `k` is
/// `(L 1)_k = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintSystem {
    n: usize,
}

impl ConstraintSystem {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(MlgError::InvalidSize(format!("need N >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.n + 1
    }

    pub fn n_slots(&self) -> usize {
        slot_count(self.n)
    }

    /// Number of structural nonzeros in `C`.
    pub fn nnz(&self) -> usize {
        self.n * (self.n + 1)
    }

    /// `d = [N, 0, ..., 0]`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n + 1];
        d[0] = self.n as f64;
        d
    }

    /// `C l`.
    pub fn apply(&self, l: &[f64]) -> Result<Vec<f64>> {
        if l.len() != self.n_slots() {
            return Err(MlgError::Dimension(format!(
                "expected {} slots, got {}",
                self.n_slots(),
                l.len()
            )));
        }
        let mut out = vec![0.0; self.n + 1];
        self.apply_into(l, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, l: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut s = 0;
        for j in 0..n {
            out[0] += l[s];
            out[j + 1] += l[s];
            s += 1;
            for i in (j + 1)..n {
                out[i + 1] -= l[s];
                out[j + 1] -= l[s];
                s += 1;
            }
        }
    }

    /// `C^T mu`.
    pub fn apply_transpose(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.n + 1 {
            return Err(MlgError::Dimension(format!(
                "expected {} multipliers, got {}",
                self.n + 1,
                mu.len()
            )));
        }
        let mut out = vec![0.0; self.n_slots()];
        self.apply_transpose_into(mu, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_transpose_into(&self, mu: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut s = 0;
        for j in 0..n {
            out[s] = mu[0] + mu[j + 1];
            s += 1;
            let mj = mu[j + 1];
            for i in (j + 1)..n {
                out[s] = -mu[i + 1] - mj;
                s += 1;
            }
        }
    }

    /// Dense copy of `C`, for diagnostics and tests on small `N`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let v = self.n_slots();
        let mut c = DMatrix::zeros(self.n + 1, v);
        let mut e = vec![0.0; v];
        let mut col = vec![0.0; self.n + 1];
        for s in 0..v {
            e[s] = 1.0;
            self.apply_into(&e, &mut col);
            c.column_mut(s).copy_from_slice(&col);
            e[s] = 0.0;
        }
        c
    }

    /// Estimate of `sigma_max(C)^2 = lambda_max(C C^T)` by power iteration.
    pub fn sigma_max_sq(&self) -> f64 {
        let rows = self.n + 1;
        let mut x: Vec<f64> = (0..rows).map(|k| 1.0 + (k as f64) / rows as f64).collect();
        let mut ctx = vec![0.0; self.n_slots()];
        let mut y = vec![0.0; rows];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            self.apply_transpose_into(&x, &mut ctx);
            self.apply_into(&ctx, &mut y);
            let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut x, &mut y);
            if (next - lambda).abs() <= 1e-12 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        // Rayleigh quotients approach from below; pad slightly.
        lambda * 1.01
    }
}

/// One Laplacian per view over a shared vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerGraph {
    layers: Vec<GraphLaplacian>,
}

impl MultiLayerGraph {
    pub fn new(layers: Vec<GraphLaplacian>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| MlgError::InvalidSize("a multi-layer graph needs a layer".into()))?;
        let n = first.n_nodes();
        if let Some((m, l)) = layers.iter().enumerate().find(|(_, l)| l.n_nodes() != n) {
            return Err(MlgError::Dimension(format!(
                "layer {} has {} nodes, layer 1 has {n}",
                m + 1,
                l.n_nodes()
            )));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[GraphLaplacian] {
        &self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.layers[0].n_nodes()
    }

    /// `sum_m weights[m] * L_m`.
    pub fn weighted_sum(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        if weights.len() != self.layers.len() {
            return Err(MlgError::Dimension(format!(
                "{} weights for {} layers",
                weights.len(),
                self.layers.len()
            )));
        }
        let n = self.n_nodes();
        let mut sum = DMatrix::zeros(n, n);
        for (l, &w) in self.layers.iter().zip(weights) {
            sum += l.matrix() * w;
        }
        Ok(sum)
    }
}
