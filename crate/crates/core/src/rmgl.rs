//! Alternating minimization for rank-constrained multi-layer graph learning.
//!
//! The objective
//!
//! ```text
//! sum_m tr(L_m S_m) + alpha_m ||L_m||_F^2 + beta_m tr(Q^T L_m Q)
//! ```
//!
//! is minimized over Laplacians with `tr(L_m) = N` and an `N x K` isometry
//! `Q`. With `Q` fixed the layers decouple into diagonal QPs (see
//! [`crate::qp`]); with the layers fixed, `Q` is the bottom-`K` eigenbasis of
//! `sum_m beta_m L_m`. Both half-steps are exact minimizers, so the objective
//! is nonincreasing.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlgError, Result};
use crate::graph::{
    ConstraintSystem, DuplicationOperator, GraphLaplacian, MultiLayerGraph, MultiViewDataset,
    ViewCovariance, DEFAULT_LAPLACIAN_TOL,
};
use crate::qp::{assemble_qp, solve_layer_qp_from, DualAscentOptions};
use crate::spectral::{count_components, update_embedding, Embedding, DEFAULT_ZERO_TOL};

/// Default `alpha_m`.
pub const DEFAULT_ALPHA: f64 = 100.0;
/// Default `beta_m`, large enough for the rank target on the synthetic preset.
pub const DEFAULT_BETA: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEscalation {
    /// Multiplier `gamma > 1` applied to a layer's beta.
    pub factor: f64,
    /// Betas never grow past this value.
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmglConfig {
    pub k: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Dual ascent step; `None` picks it per layer.
    pub rho: Option<f64>,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub beta_escalation: Option<BetaEscalation>,
    /// Use `S_m / tr(S_m)` instead of the raw covariance.
    pub normalize_covariance: bool,
    /// Reuse each layer's multipliers across outer iterations.
    pub warm_start: bool,
    /// Relative zero-eigenvalue tolerance for component counts.
    pub zero_tol: f64,
    /// Count per-layer zero eigenvalues at every outer iteration for the run
    /// log. Costs a full eigendecomposition per layer and iteration.
    pub record_log: bool,
}

impl RmglConfig {
    pub fn new(k: usize, n_views: usize) -> Self {
        Self {
            k,
            alphas: vec![DEFAULT_ALPHA; n_views],
            betas: vec![DEFAULT_BETA; n_views],
            rho: None,
            inner_tol: 1e-6,
            outer_tol: 1e-6,
            max_outer: 100,
            max_inner: 50_000,
            beta_escalation: None,
            normalize_covariance: false,
            warm_start: true,
            zero_tol: DEFAULT_ZERO_TOL,
            record_log: false,
        }
    }

    pub fn with_alphas(mut self, alphas: Vec<f64>) -> Self {
        self.alphas = alphas;
        self
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Self {
        self.betas = betas;
        self
    }

    pub fn n_views(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self, n_nodes: usize, n_views: usize) -> Result<()> {
        if self.k == 0 || self.k >= n_nodes {
            return Err(MlgError::Parameter(format!(
                "need 1 <= K < N, got K={} with N={n_nodes}",
                self.k
            )));
        }
        if self.alphas.len() != n_views || self.betas.len() != n_views {
            return Err(MlgError::Parameter(format!(
                "{} alphas and {} betas for {n_views} views",
                self.alphas.len(),
                self.betas.len()
            )));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(MlgError::Parameter(format!("alpha must be positive, got {a}")));
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(MlgError::Parameter(format!("beta must be positive, got {b}")));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(MlgError::Parameter(format!("rho must be positive, got {rho}")));
            }
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol >= 0.0) || !(self.zero_tol > 0.0) {
            return Err(MlgError::Parameter("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(MlgError::Parameter("iteration limits must be positive".into()));
        }
        if let Some(esc) = self.beta_escalation {
            if !(esc.factor > 1.0 && esc.factor.is_finite()) || !(esc.cap > 0.0) {
                return Err(MlgError::Parameter(format!(
                    "beta escalation needs factor > 1 and a positive cap, got {}:{}",
                    esc.factor, esc.cap
                )));
            }
        }
        Ok(())
    }
}

/// One row of the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residuals: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    /// Empty unless [`RmglConfig::record_log`] is set.
    pub zero_eigenvalue_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RmglResult {
    pub graph: MultiLayerGraph,
    pub embedding: Embedding,
    pub objective_trace: Vec<f64>,
    /// Eigenvalues of the embedding after each outer iteration.
    pub eigenvalue_trace: Vec<Vec<f64>>,
    pub per_layer_ranks: Vec<usize>,
    /// Every layer has exactly `K` components.
    pub rank_achieved: bool,
    /// The relative objective change dropped below `outer_tol`.
    pub converged: bool,
    pub iterations: usize,
    pub log: Vec<OuterRecord>,
    /// Betas actually used (they differ from the input after escalation).
    pub betas: Vec<f64>,
    pub escalations: usize,
}

impl RmglResult {
    /// Writes the run log as CSV.
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.graph.n_layers();
        let mut header = String::from("iteration,objective");
        for i in 1..=m {
            header.push_str(&format!(",primal_residual_{i}"));
        }
        for i in 1..=m {
            header.push_str(&format!(",inner_iterations_{i}"));
        }
        for i in 1..=m {
            header.push_str(&format!(",zero_eigenvalues_{i}"));
        }
        writeln!(out, "{header}")?;
        for rec in &self.log {
            let mut row = format!("{},{:?}", rec.iteration, rec.objective);
            for r in &rec.primal_residuals {
                row.push_str(&format!(",{r:?}"));
            }
            for r in &rec.inner_iterations {
                row.push_str(&format!(",{r}"));
            }
            for i in 0..m {
                match rec.zero_eigenvalue_counts.get(i) {
                    Some(c) => row.push_str(&format!(",{c}")),
                    None => row.push(','),
                }
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Value of the relaxed objective.
pub fn rmgl_objective(
    graph: &MultiLayerGraph,
    q: &Embedding,
    covariances: &[ViewCovariance],
    cfg: &RmglConfig,
) -> Result<f64> {
    let m = graph.n_layers();
    if covariances.len() != m || cfg.alphas.len() != m || cfg.betas.len() != m {
        return Err(MlgError::Dimension(format!(
            "{m} layers, {} covariances, {} alphas, {} betas",
            covariances.len(),
            cfg.alphas.len(),
            cfg.betas.len()
        )));
    }
    if q.n_nodes() != graph.n_nodes() {
        return Err(MlgError::Dimension(format!(
            "embedding has {} rows, graph has {} nodes",
            q.n_nodes(),
            graph.n_nodes()
        )));
    }
    let mut total = 0.0;
    for (idx, l) in graph.layers().iter().enumerate() {
        let s = &covariances[idx];
        if s.n_nodes() != l.n_nodes() {
            return Err(MlgError::Dimension(format!("covariance {} has wrong size", idx + 1)));
        }
        let lm = l.matrix();
        let smooth = lm.dot(s.matrix());
        let fro = lm.norm_squared();
        let lq = lm * q.q();
        let spectral = q.q().dot(&lq);
        total += smooth + cfg.alphas[idx] * fro + cfg.betas[idx] * spectral;
    }
    Ok(total)
}

/// State of the alternation, exposed so a caller can take extra steps.
pub struct RmglSolver {
    cfg: RmglConfig,
    covariances: Vec<ViewCovariance>,
    dup: DuplicationOperator,
    cons: ConstraintSystem,
    mus: Vec<Option<Vec<f64>>>,
    embedding: Option<Embedding>,
    graph: Option<MultiLayerGraph>,
    objective_trace: Vec<f64>,
    eigenvalue_trace: Vec<Vec<f64>>,
    log: Vec<OuterRecord>,
}

impl RmglSolver {
    pub fn new(data: &MultiViewDataset, cfg: &RmglConfig) -> Result<Self> {
        let n = data.n_nodes();
        cfg.validate(n, data.n_views())?;
        let covariances = data
            .views()
            .iter()
            .map(|x| {
                let s = ViewCovariance::from_view(x)?;
                Ok(if cfg.normalize_covariance { s.trace_normalized() } else { s })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            covariances,
            dup: DuplicationOperator::new(n)?,
            cons: ConstraintSystem::new(n)?,
            mus: vec![None; data.n_views()],
            embedding: None,
            graph: None,
            objective_trace: Vec::new(),
            eigenvalue_trace: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn covariances(&self) -> &[ViewCovariance] {
        &self.covariances
    }

    pub fn embedding(&self) -> Option<&Embedding> {
        self.embedding.as_ref()
    }

    pub fn graph(&self) -> Option<&MultiLayerGraph> {
        self.graph.as_ref()
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    /// One outer iteration: all layer QPs, then the embedding. Returns the
    /// objective afterwards.
    pub fn step(&mut self) -> Result<f64> {
        let cfg = &self.cfg;
        let opts = DualAscentOptions {
            rho: cfg.rho,
            tol: cfg.inner_tol,
            max_iter: cfg.max_inner,
            record_trace: false,
        };
        let q = self.embedding.as_ref();
        let (dup, cons) = (&self.dup, &self.cons);
        let solved = self
            .covariances
            .par_iter()
            .zip(self.mus.par_iter())
            .enumerate()
            .map(|(m, (s, mu))| {
                let qp = assemble_qp(s, q, cfg.alphas[m], cfg.betas[m], dup, cons)?;
                let warm = if cfg.warm_start { mu.as_deref() } else { None };
                let sol = solve_layer_qp_from(&qp, &opts, warm).map_err(|e| match e {
                    MlgError::Divergence { iteration, .. } => MlgError::Divergence {
                        iteration,
                        layer: Some(m),
                    },
                    other => other,
                })?;
                let mat = dup.apply_slice(sol.l.values());
                let tol = DEFAULT_LAPLACIAN_TOL.max(sol.primal_residual * (1.0 + 1e-9));
                let lap = GraphLaplacian::validate(mat, tol).map_err(|v| {
                    MlgError::Validation(format!("layer {}: {v}", m + 1))
                })?;
                // Degrees rebuilt from the weights so rows sum to zero exactly.
                let lap = GraphLaplacian::from_adjacency(&lap.adjacency())?;
                Ok((lap, sol.mu, sol.primal_residual, sol.iterations))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut layers = Vec::with_capacity(solved.len());
        let mut residuals = Vec::with_capacity(solved.len());
        let mut inner = Vec::with_capacity(solved.len());
        for (m, (lap, mu, res, it)) in solved.into_iter().enumerate() {
            layers.push(lap);
            self.mus[m] = Some(mu);
            residuals.push(res);
            inner.push(it);
        }
        let graph = MultiLayerGraph::new(layers)?;
        let embedding = update_embedding(&graph, &cfg.betas, cfg.k)?;
        let objective = rmgl_objective(&graph, &embedding, &self.covariances, cfg)?;
        let zero_counts = if cfg.record_log {
            graph
                .layers()
                .par_iter()
                .map(|l| count_components(l, cfg.zero_tol))
                .collect()
        } else {
            Vec::new()
        };
        self.log.push(OuterRecord {
            iteration: self.objective_trace.len() + 1,
            objective,
            primal_residuals: residuals,
            inner_iterations: inner,
            zero_eigenvalue_counts: zero_counts,
        });
        self.objective_trace.push(objective);
        self.eigenvalue_trace.push(embedding.eigenvalues().to_vec());
        self.graph = Some(graph);
        self.embedding = Some(embedding);
        Ok(objective)
    }

    /// Iterates until the relative objective change is below `outer_tol` or
    /// `max_outer` steps were taken. Returns whether the tolerance was met.
    pub fn run(&mut self) -> Result<bool> {
        let start = self.objective_trace.len();
        while self.objective_trace.len() - start < self.cfg.max_outer {
            let obj = self.step()?;
            let t = self.objective_trace.len();
            if t >= 2 {
                let prev = self.objective_trace[t - 2];
                if (prev - obj).abs() <= self.cfg.outer_tol * prev.abs().max(f64::MIN_POSITIVE) {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    pub fn into_result(self, converged: bool) -> Result<RmglResult> {
        let graph = self
            .graph
            .ok_or_else(|| MlgError::Validation("no iteration has been run".into()))?;
        let embedding = self.embedding.expect("embedding set with graph");
        let per_layer_ranks: Vec<usize> = graph
            .layers()
            .par_iter()
            .map(|l| count_components(l, self.cfg.zero_tol))
            .collect();
        let rank_achieved = per_layer_ranks.iter().all(|&c| c == self.cfg.k);
        Ok(RmglResult {
            iterations: self.objective_trace.len(),
            graph,
            embedding,
            objective_trace: self.objective_trace,
            eigenvalue_trace: self.eigenvalue_trace,
            per_layer_ranks,
            rank_achieved,
            converged,
            log: self.log,
            betas: self.cfg.betas,
            escalations: 0,
        })
    }
}

/// Runs the alternation to convergence, escalating betas if configured.
///
/// When escalation hits its cap the last result is returned with
/// `rank_achieved == false`.
pub fn solve_rmgl(data: &MultiViewDataset, cfg: &RmglConfig) -> Result<RmglResult> {
    let mut cfg = cfg.clone();
    let mut escalations = 0;
    loop {
        let mut solver = RmglSolver::new(data, &cfg)?;
        let converged = solver.run()?;
        let mut result = solver.into_result(converged)?;
        result.escalations = escalations;
        if cfg.beta_escalation.is_none() || result.rank_achieved || !result.converged {
            return Ok(result);
        }
        match escalate_beta(&result, &cfg) {
            Ok(next) if next != cfg => {
                cfg = next;
                escalations += 1;
            }
            Ok(_) | Err(MlgError::RankNotAchieved(_)) => return Ok(result),
            Err(e) => return Err(e),
        }
    }
}

/// Multiplies `beta_m` by the escalation factor for every layer with fewer
/// than `K` components, respecting the cap.
pub fn escalate_beta(result: &RmglResult, cfg: &RmglConfig) -> Result<RmglConfig> {
    let esc = cfg
        .beta_escalation
        .ok_or_else(|| MlgError::Parameter("beta escalation is not enabled".into()))?;
    if !result.converged {
        return Err(MlgError::Parameter(
            "beta escalation needs a converged result".into(),
        ));
    }
    if result.per_layer_ranks.len() != cfg.betas.len() {
        return Err(MlgError::Dimension(format!(
            "{} layer ranks for {} betas",
            result.per_layer_ranks.len(),
            cfg.betas.len()
        )));
    }
    let mut next = cfg.clone();
    let mut stuck = Vec::new();
    for (m, &count) in result.per_layer_ranks.iter().enumerate() {
        if count < cfg.k {
            if cfg.betas[m] >= esc.cap {
                stuck.push(m + 1);
            } else {
                next.betas[m] = (cfg.betas[m] * esc.factor).min(esc.cap);
            }
        }
    }
    if !stuck.is_empty() {
        return Err(MlgError::RankNotAchieved(format!(
            "layers {stuck:?} have fewer than {} components with beta at the cap {}",
            cfg.k, esc.cap
        )));
    }
    Ok(next)
}
