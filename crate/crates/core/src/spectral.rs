//! Smallest eigenpairs of symmetric matrices, the Ky Fan sum, component
//! counting, and the shared embedding update.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MlgError, Result};
use crate::graph::{GraphLaplacian, MultiLayerGraph};

/// Above this size the iterative solver is used.
pub const DENSE_EIGEN_MAX_N: usize = 512;

/// Default relative tolerance for counting zero eigenvalues.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// `N x K` matrix with orthonormal columns and the matching eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    q: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    gap_warning: bool,
}

impl Embedding {
    pub fn from_parts(q: DMatrix<f64>, eigenvalues: Vec<f64>) -> Self {
        debug_assert_eq!(q.ncols(), eigenvalues.len());
        Self {
            q,
            eigenvalues,
            gap_warning: false,
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Set when `lambda_{K+1} - lambda_K` is below `1e-10 lambda_max`: the
    /// returned subspace is then not unique.
    pub fn gap_warning(&self) -> bool {
        self.gap_warning
    }

    pub fn n_nodes(&self) -> usize {
        self.q.nrows()
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    /// Dense up to [`DENSE_EIGEN_MAX_N`], iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(MlgError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MlgError::Validation("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(MlgError::Validation(format!(
                    "matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
fn fix_signs(q: &mut DMatrix<f64>) {
    for mut col in q.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() * (1.0 + 1e-12) {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// The `k` algebraically smallest eigenpairs of a symmetric matrix.
pub fn smallest_k_eigenpairs(m: &DMatrix<f64>, k: usize) -> Result<Embedding> {
    smallest_k_eigenpairs_with(m, k, EigenMethod::Auto)
}

pub fn smallest_k_eigenpairs_with(
    m: &DMatrix<f64>,
    k: usize,
    method: EigenMethod,
) -> Result<Embedding> {
    check_symmetric(m)?;
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(MlgError::Parameter(format!("need 1 <= k <= {n}, got k={k}")));
    }
    let iterative = match method {
        EigenMethod::Auto => n > DENSE_EIGEN_MAX_N,
        EigenMethod::Dense => false,
        EigenMethod::Iterative => true,
    };
    let (mut q, values, next, top) = if iterative {
        block_krylov_smallest(m, k)
    } else {
        dense_smallest(m, k)
    };
    fix_signs(&mut q);
    let gap_warning = match next {
        Some(next) => next - values[k - 1] < 1e-10 * top.abs().max(f64::MIN_POSITIVE),
        None => false,
    };
    Ok(Embedding {
        q,
        eigenvalues: values,
        gap_warning,
    })
}

/// Returns `(vectors, values, lambda_{k+1}, |lambda|_max estimate)`.
fn dense_smallest(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, Option<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let q = DMatrix::from_fn(m.nrows(), k, |i, j| eig.eigenvectors[(i, order[j])]);
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let next = order.get(k).map(|&i| eig.eigenvalues[i]);
    let top = eig.eigenvalues.amax();
    (q, values, next, top)
}

/// Orthonormalizes the columns of `w` against `basis` and each other
/// (two passes of Gram-Schmidt), dropping columns that vanish.
fn orthonormalize_against(basis: Option<&DMatrix<f64>>, w: DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut kept: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(w.ncols());
    for col in w.column_iter() {
        let mut v = col.clone_owned();
        let orig = v.norm();
        if orig == 0.0 {
            continue;
        }
        for _ in 0..2 {
            if let Some(b) = basis {
                let coeffs = b.tr_mul(&v);
                v -= b * coeffs;
            }
            for u in &kept {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol * orig {
            kept.push(v / norm);
        }
    }
    if kept.is_empty() {
        DMatrix::zeros(w.nrows(), 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

/// Restarted block Krylov method with Rayleigh-Ritz extraction.
fn block_krylov_smallest(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, Option<f64>, f64) {
    let n = m.nrows();
    let block = (k + 4).min(n);
    let max_dim = n.min((6 * block).max(60));
    let fro = m.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * fro;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let start = DMatrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    let mut x = orthonormalize_against(None, start, 1e-12);

    for _restart in 0..500 {
        let mut basis = x.clone();
        let mut last = x.clone();
        while basis.ncols() < max_dim {
            let w = m * &last;
            let mut w = orthonormalize_against(Some(&basis), w, 1e-10);
            if w.ncols() == 0 {
                break;
            }
            let room = max_dim - basis.ncols();
            if w.ncols() > room {
                w = w.columns(0, room).into_owned();
            }
            let d = basis.ncols();
            basis = basis.insert_columns(d, w.ncols(), 0.0);
            basis.columns_mut(d, w.ncols()).copy_from(&w);
            last = w;
        }
        let mv = m * &basis;
        let h = basis.tr_mul(&mv);
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..basis.ncols()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let take = block.min(basis.ncols());
        let s = DMatrix::from_fn(basis.ncols(), take, |i, j| eig.eigenvectors[(i, order[j])]);
        let y = &basis * &s;
        let my = &mv * &s;
        let theta: Vec<f64> = order[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
        let worst = (0..k.min(take))
            .map(|j| (my.column(j) - y.column(j) * theta[j]).norm())
            .fold(0.0, f64::max);
        let top = eig.eigenvalues.amax();
        if (take >= k && worst <= tol) || basis.ncols() == n {
            let q = y.columns(0, k).into_owned();
            let next = theta.get(k).copied();
            return (q, theta[..k].to_vec(), next, top.max(fro / (n as f64).sqrt()));
        }
        x = orthonormalize_against(None, y, 1e-12);
        if x.ncols() < block {
            let extra = DMatrix::from_fn(n, block - x.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let extra = orthonormalize_against(Some(&x), extra, 1e-12);
            let d = x.ncols();
            x = x.insert_columns(d, extra.ncols(), 0.0);
            x.columns_mut(d, extra.ncols()).copy_from(&extra);
        }
    }
    dense_smallest(m, k)
}

/// `sum_{i <= k} lambda_i(M)`.
pub fn ky_fan_value(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    Ok(smallest_k_eigenpairs(m, k)?.eigenvalues.iter().sum())
}

/// Smallest `k` eigenvectors of `sum_m beta_m L_m`.
pub fn update_embedding(graph: &MultiLayerGraph, betas: &[f64], k: usize) -> Result<Embedding> {
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(MlgError::Parameter(format!("betas must be positive, got {b}")));
    }
    let sum = graph.weighted_sum(betas)?;
    smallest_k_eigenpairs(&sum, k)
}

/// Number of eigenvalues at most `rel_tol * max(lambda_max, 1)`.
pub fn count_components(l: &GraphLaplacian, rel_tol: f64) -> usize {
    let eig = l.matrix().clone().symmetric_eigenvalues();
    let cutoff = rel_tol * eig.max().max(1.0);
    eig.iter().filter(|&&v| v <= cutoff).count()
}

/// Connected components of the edges heavier than `threshold`, as a 0-based
/// component id per node (ids in order of first appearance).
pub fn component_labels(l: &GraphLaplacian, threshold: f64) -> Vec<usize> {
    let n = l.n_nodes();
    let m = l.matrix();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        label[root] = next;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if v != u && label[v] == usize::MAX && -m[(v, u)] > threshold {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Component count by breadth-first traversal of the positive-weight edges.
pub fn traversal_components(l: &GraphLaplacian) -> usize {
    component_labels(l, 0.0).into_iter().max().map_or(0, |m| m + 1)
}
