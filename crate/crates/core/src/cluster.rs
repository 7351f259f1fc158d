//! k-means on embedding rows, normalized mutual information, and spectral
//! clustering of single layers.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{MlgError, Result};
use crate::graph::GraphLaplacian;
use crate::spectral::smallest_k_eigenpairs;

/// Cluster assignment of `N` points into `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(MlgError::Validation(format!("label {bad} out of range for k={k}")));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max + 1` as the cluster count.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative WCSS change that ends a restart.
    pub tol: f64,
    pub seed: u64,
    /// Scale each row to unit norm first.
    pub row_normalize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
            tol: 1e-9,
            seed: 0,
            row_normalize: false,
        }
    }
}

impl KMeansOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labeling: Labeling,
    pub wcss: f64,
    /// `k x dim`.
    pub centroids: DMatrix<f64>,
    pub restart: usize,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn from_matrix(m: &DMatrix<f64>, normalize: bool) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            let row = m.row(i);
            let scale = if normalize {
                let norm = row.norm();
                if norm > 0.0 { 1.0 / norm } else { 1.0 }
            } else {
                1.0
            };
            data.extend(row.iter().map(|v| v * scale));
        }
        Self { data, n, dim }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    wcss: f64,
    history: Vec<f64>,
}

fn plus_plus_seed(pts: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = pts.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..pts.n);
    centroids.extend_from_slice(pts.row(first));
    let mut d2: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = pts.n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..pts.n)
        };
        centroids.extend_from_slice(pts.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), pts.row(pick)));
        }
    }
    centroids
}

fn lloyd(pts: &Points, k: usize, opts: &KMeansOptions, rng: &mut ChaCha8Rng) -> Run {
    let dim = pts.dim;
    let mut centroids = plus_plus_seed(pts, k, rng);
    let mut labels = vec![0usize; pts.n];
    let mut dists = vec![0.0; pts.n];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;

    for _ in 0..opts.max_iter {
        // Assignment; ties go to the lowest centroid index.
        let mut changed = false;
        for i in 0..pts.n {
            let p = pts.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(p, &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                changed = true;
                labels[i] = best;
            }
            dists[i] = best_d;
        }
        let wcss: f64 = dists.iter().sum();
        history.push(wcss);
        if history.len() > 1 && (!changed || prev - wcss <= opts.tol * prev) {
            break;
        }
        prev = wcss;

        // Update.
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..pts.n {
            let c = labels[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
        // Empty clusters restart at the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..pts.n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                centroids[c * dim..(c + 1) * dim].copy_from_slice(pts.row(far));
                dists[far] = 0.0;
            }
        }
    }
    let wcss = *history.last().unwrap_or(&0.0);
    Run {
        labels,
        centroids,
        wcss,
        history,
    }
}

fn check_kmeans_input(points: &DMatrix<f64>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(MlgError::Parameter("k must be at least 1".into()));
    }
    if k > points.nrows() {
        return Err(MlgError::Parameter(format!(
            "k={k} exceeds the number of points {}",
            points.nrows()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(MlgError::Validation("points contain non-finite values".into()));
    }
    Ok(())
}

/// Best-of-restarts k-means on the rows of `points`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, opts: &KMeansOptions) -> Result<KMeansResult> {
    check_kmeans_input(points, k)?;
    let pts = Points::from_matrix(points, opts.row_normalize);
    let restarts = opts.restarts.max(1);
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            lloyd(&pts, k, opts, &mut rng)
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.wcss < a.1.wcss { b } else { a })
        .expect("at least one restart");
    Ok(KMeansResult {
        labeling: Labeling {
            labels: best.labels,
            k,
        },
        wcss: best.wcss,
        centroids: DMatrix::from_row_slice(k, pts.dim, &best.centroids),
        restart,
        history: best.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNormalization {
    /// `2 I / (H(a) + H(b))`.
    #[default]
    Arithmetic,
    /// `I / sqrt(H(a) H(b))`.
    Geometric,
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn nmi(a: &Labeling, b: &Labeling) -> Result<f64> {
    nmi_slices(a.labels(), b.labels(), NmiNormalization::Arithmetic)
}

/// NMI of two raw label slices. Returns 1 when both partitions are trivial
/// and 0 when exactly one is.
pub fn nmi_slices(a: &[usize], b: &[usize], norm: NmiNormalization) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MlgError::Dimension(format!(
            "labelings have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MlgError::InvalidSize("labelings are empty".into()));
    }
    let n = a.len() as f64;
    let mut ca = BTreeMap::new();
    let mut cb = BTreeMap::new();
    let mut joint = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_insert(0usize) += 1;
        *cb.entry(y).or_insert(0usize) += 1;
        *joint.entry((x, y)).or_insert(0usize) += 1;
    }
    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    // Sorting the terms makes the sum independent of argument order.
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (c as f64 * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    let value = match norm {
        NmiNormalization::Arithmetic => 2.0 * mi / (ha + hb),
        NmiNormalization::Geometric => mi / (ha * hb).sqrt(),
    };
    Ok(value.clamp(0.0, 1.0))
}

/// k-means on the bottom-`k` eigenvectors of one layer.
pub fn spectral_cluster_layer(l: &GraphLaplacian, k: usize, opts: &KMeansOptions) -> Result<Labeling> {
    if k == 0 || k > l.n_nodes() {
        return Err(MlgError::Parameter(format!(
            "need 1 <= k <= {}, got k={k}",
            l.n_nodes()
        )));
    }
    let emb = smallest_k_eigenpairs(l.matrix(), k)?;
    Ok(kmeans(emb.q(), k, opts)?.labeling)
}
