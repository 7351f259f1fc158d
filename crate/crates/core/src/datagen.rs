//! Synthetic multi-layer graphs with complementary cluster structure and
//! smooth signals on them.
//!
//! Each layer sees the `K` planted clusters through a coarser partition
//! (its `groups`): nodes in the same group connect with `within_density`,
//! nodes in different groups with `cross_density`. No single layer need
//! separate every cluster pair, but the layers together must.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cluster::Labeling;
use crate::error::{MlgError, Result};
use crate::graph::{GraphLaplacian, MultiLayerGraph, MultiViewDataset};
use crate::spectral::smallest_k_eigenpairs;

const SIGNAL_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    /// Partition of the cluster ids `0..K` into the groups this layer sees.
    pub groups: Vec<Vec<usize>>,
    pub within_density: f64,
    pub cross_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub layers: Vec<LayerPlan>,
    pub n_eigvecs: usize,
    pub noise_variance: f64,
    /// Edge weights are drawn uniformly from `[weight_low, weight_high]`.
    pub weight_low: f64,
    pub weight_high: f64,
    pub seed: u64,
    /// Regeneration attempts when a layer comes out with isolated nodes.
    pub max_retries: usize,
}

pub const DEFAULT_WITHIN_DENSITY: f64 = 0.6;
pub const DEFAULT_CROSS_DENSITY: f64 = 0.05;

impl SyntheticSpec {
    /// Three layers on 100 nodes in four classes; each layer merges one
    /// distinct pair of classes. 15 smallest eigenvectors per layer plus
    /// Gaussian noise of variance 0.01.
    pub fn reference_preset(seed: u64) -> Self {
        let plan = |groups: Vec<Vec<usize>>| LayerPlan {
            groups,
            within_density: DEFAULT_WITHIN_DENSITY,
            cross_density: DEFAULT_CROSS_DENSITY,
        };
        Self {
            n_nodes: 100,
            n_clusters: 4,
            layers: vec![
                plan(vec![vec![0, 1], vec![2], vec![3]]),
                plan(vec![vec![0], vec![1], vec![2, 3]]),
                plan(vec![vec![0], vec![1, 2], vec![3]]),
            ],
            n_eigvecs: 15,
            noise_variance: 0.01,
            weight_low: 0.5,
            weight_high: 1.0,
            seed,
            max_retries: 100,
        }
    }

    /// The preset scaled to `n` nodes, keeping everything else.
    pub fn reference_preset_with_nodes(n: usize, seed: u64) -> Self {
        Self {
            n_nodes: n,
            ..Self::reference_preset(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_clusters;
        if self.n_nodes < 2 || k == 0 || k > self.n_nodes {
            return Err(MlgError::Parameter(format!(
                "need N >= 2 and 1 <= K <= N, got N={} K={k}",
                self.n_nodes
            )));
        }
        if self.layers.is_empty() {
            return Err(MlgError::Parameter("at least one layer is required".into()));
        }
        if self.n_eigvecs == 0 || self.n_eigvecs > self.n_nodes {
            return Err(MlgError::Parameter(format!(
                "need 1 <= n_eigvecs <= N, got {}",
                self.n_eigvecs
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(MlgError::Parameter("noise variance must be nonnegative".into()));
        }
        if !(self.weight_low > 0.0 && self.weight_low <= self.weight_high && self.weight_high.is_finite()) {
            return Err(MlgError::Parameter("need 0 < weight_low <= weight_high".into()));
        }
        for (m, layer) in self.layers.iter().enumerate() {
            let (w, c) = (layer.within_density, layer.cross_density);
            if !(0.0..=1.0).contains(&w) || !(0.0..=1.0).contains(&c) || w <= c {
                return Err(MlgError::Parameter(format!(
                    "layer {}: densities must lie in [0, 1] with within > cross, got {w} and {c}",
                    m + 1
                )));
            }
            let mut seen = vec![false; k];
            for &cl in layer.groups.iter().flatten() {
                if cl >= k || seen[cl] {
                    return Err(MlgError::Parameter(format!(
                        "layer {}: groups must partition the clusters 0..{k}",
                        m + 1
                    )));
                }
                seen[cl] = true;
            }
            if seen.iter().any(|s| !s) || layer.groups.iter().any(|g| g.is_empty()) {
                return Err(MlgError::Parameter(format!(
                    "layer {}: groups must partition the clusters 0..{k}",
                    m + 1
                )));
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                let separated = self
                    .layers
                    .iter()
                    .any(|l| group_of(&l.groups, a) != group_of(&l.groups, b));
                if !separated {
                    return Err(MlgError::Parameter(format!(
                        "no layer separates clusters {a} and {b}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn group_of(groups: &[Vec<usize>], cluster: usize) -> usize {
    groups
        .iter()
        .position(|g| g.contains(&cluster))
        .expect("validated partition")
}

/// Contiguous, as-balanced-as-possible class labels.
pub fn balanced_labels(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// A generated instance: graph, ground truth, and smooth signals.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub graph: MultiLayerGraph,
    pub truth: Labeling,
    pub data: MultiViewDataset,
}

fn generate_layer(
    spec: &SyntheticSpec,
    plan: &LayerPlan,
    truth: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<GraphLaplacian> {
    let n = spec.n_nodes;
    let group: Vec<usize> = truth.iter().map(|&c| group_of(&plan.groups, c)).collect();
    let mut edges = Vec::new();
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if group[i] == group[j] {
                plan.within_density
            } else {
                plan.cross_density
            };
            let u: f64 = rng.random();
            if u < p {
                let w = rng.random_range(spec.weight_low..=spec.weight_high);
                edges.push((i, j, w));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    if degree.contains(&0) {
        return None;
    }
    GraphLaplacian::from_edges(n, &edges).ok()
}

/// Random layers following the plan, with the balanced ground truth.
pub fn generate_multilayer(spec: &SyntheticSpec) -> Result<(MultiLayerGraph, Labeling)> {
    spec.validate()?;
    let truth = balanced_labels(spec.n_nodes, spec.n_clusters);
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (m, plan) in spec.layers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(m as u64);
        let layer = (0..=spec.max_retries)
            .find_map(|_| generate_layer(spec, plan, &truth, &mut rng))
            .ok_or_else(|| {
                MlgError::Generation(format!(
                    "layer {} still had isolated nodes after {} retries",
                    m + 1,
                    spec.max_retries
                ))
            })?;
        layers.push(layer);
    }
    Ok((
        MultiLayerGraph::new(layers)?,
        Labeling::new(truth, spec.n_clusters)?,
    ))
}

/// Per layer, the `n_eigvecs` smallest Laplacian eigenvectors plus white
/// Gaussian noise of the given variance.
pub fn generate_signals(
    graph: &MultiLayerGraph,
    n_eigvecs: usize,
    noise_variance: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    let n = graph.n_nodes();
    if n_eigvecs == 0 || n_eigvecs > n {
        return Err(MlgError::Dimension(format!(
            "need 1 <= n_eigvecs <= {n}, got {n_eigvecs}"
        )));
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(MlgError::Parameter(format!(
            "noise variance must be nonnegative, got {noise_variance}"
        )));
    }
    let noise = Normal::new(0.0, noise_variance.sqrt())
        .map_err(|e| MlgError::Parameter(e.to_string()))?;
    let mut views = Vec::with_capacity(graph.n_layers());
    for (m, l) in graph.layers().iter().enumerate() {
        let emb = smallest_k_eigenpairs(l.matrix(), n_eigvecs)?;
        let mut x: DMatrix<f64> = emb.q().clone();
        if noise_variance > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(SIGNAL_STREAM_OFFSET + m as u64);
            // Column-major fill keeps the draw order fixed.
            for v in x.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        views.push(x);
    }
    MultiViewDataset::new(views, None)
}

/// Graph, truth and signals for a spec, with labels attached to the data.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    let (graph, truth) = generate_multilayer(spec)?;
    let signals = generate_signals(&graph, spec.n_eigvecs, spec.noise_variance, spec.seed)?;
    let data = MultiViewDataset::new(signals.views().to_vec(), Some(truth.labels().to_vec()))?;
    Ok(SyntheticInstance { graph, truth, data })
}
