//! Per-layer Laplacian update as a diagonal convex QP.
//!
//! ```text
//! minimize   1/2 l^T diag(p) l + r^T l
//! subject to C l = d,  l >= 0
//! ```
//!
//! With a diagonal quadratic term the Lagrangian is minimized over `l >= 0`
//! in closed form, `l(mu) = max(0, (C^T mu - r) / p)`, so the problem is
//! solved by gradient ascent on the dual:
//!
//! ```text
//! l_k      = max(0, (C^T mu_k - r) / p)
//! mu_{k+1} = mu_k - rho (C l_k - d)
//! ```
//!
//! Every iteration costs two sparse products with `C`, i.e. `O(N^2)`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{MlgError, Result};
use crate::graph::{ConstraintSystem, DuplicationOperator, LayerVector, ViewCovariance};
use crate::spectral::Embedding;

#[derive(Debug, Clone)]
pub struct QpProblem {
    p: Vec<f64>,
    r: Vec<f64>,
    constraints: ConstraintSystem,
}

impl QpProblem {
    pub fn new(p: Vec<f64>, r: Vec<f64>, constraints: ConstraintSystem) -> Result<Self> {
        let v = constraints.n_slots();
        if p.len() != v || r.len() != v {
            return Err(MlgError::Dimension(format!(
                "p has {} and r has {} entries, expected {v}",
                p.len(),
                r.len()
            )));
        }
        if let Some(bad) = p.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(MlgError::Parameter(format!(
                "quadratic coefficients must be positive, found {bad}"
            )));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(MlgError::Validation("linear term contains non-finite values".into()));
        }
        Ok(Self { p, r, constraints })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn n_nodes(&self) -> usize {
        self.constraints.n_nodes()
    }

    pub fn n_slots(&self) -> usize {
        self.p.len()
    }

    /// `1/2 l^T diag(p) l + r^T l`.
    pub fn objective(&self, l: &[f64]) -> f64 {
        l.iter()
            .zip(&self.p)
            .zip(&self.r)
            .map(|((x, p), r)| 0.5 * p * x * x + r * x)
            .sum()
    }

    /// Dual function `g(mu) = min_{l >= 0} Lagrangian(l, mu)`.
    pub fn dual_value(&self, mu: &[f64]) -> Result<f64> {
        let l = primal_from_dual(self, mu)?;
        let cl = self.constraints.apply(l.values())?;
        let d = self.constraints.rhs();
        let pen: f64 = mu.iter().zip(d.iter().zip(&cl)).map(|(m, (d, c))| m * (d - c)).sum();
        Ok(self.objective(l.values()) + pen)
    }

    /// Default step `min(p) / sigma_max(C)^2`, below the inverse Lipschitz
    /// constant of the dual gradient.
    pub fn default_step(&self) -> f64 {
        let pmin = self.p.iter().copied().fold(f64::INFINITY, f64::min);
        pmin / self.constraints.sigma_max_sq()
    }
}

/// Builds the QP for one layer with `R = S + beta Q Q^T`.
///
/// `q = None` (or `beta = 0`) drops the embedding term.
pub fn assemble_qp(
    s: &ViewCovariance,
    q: Option<&Embedding>,
    alpha: f64,
    beta: f64,
    d: &DuplicationOperator,
    c: &ConstraintSystem,
) -> Result<QpProblem> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MlgError::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(MlgError::Parameter(format!("beta must be nonnegative, got {beta}")));
    }
    let n = s.n_nodes();
    if d.n_nodes() != n || c.n_nodes() != n {
        return Err(MlgError::Dimension(format!(
            "covariance has {n} nodes, operators have {} and {}",
            d.n_nodes(),
            c.n_nodes()
        )));
    }
    let r = match q {
        Some(q) if beta > 0.0 => {
            if q.n_nodes() != n {
                return Err(MlgError::Dimension(format!(
                    "embedding has {} rows, expected {n}",
                    q.n_nodes()
                )));
            }
            let qm = q.q();
            let mut rm: DMatrix<f64> = s.matrix().clone();
            rm.gemm(beta, qm, &qm.transpose(), 1.0);
            d.adjoint(&rm)?
        }
        _ => d.adjoint(s.matrix())?,
    };
    let p = d.gram_diagonal().into_iter().map(|g| 2.0 * alpha * g).collect();
    QpProblem::new(p, r, *c)
}

/// `l(mu) = max(0, (C^T mu - r) / p)`.
pub fn primal_from_dual(qp: &QpProblem, mu: &[f64]) -> Result<LayerVector> {
    let ct = qp.constraints.apply_transpose(mu)?;
    let mut l = ct;
    project(&mut l, qp);
    Ok(LayerVector::from_raw(l, qp.n_nodes()))
}

#[inline]
fn project(ctmu: &mut [f64], qp: &QpProblem) {
    for ((x, p), r) in ctmu.iter_mut().zip(&qp.p).zip(&qp.r) {
        *x = ((*x - r) / p).max(0.0);
    }
}

/// KKT residual of `(l, mu)`: the largest of primal infeasibility
/// `||C l - d||_inf`, dual infeasibility `max(0, -lambda)` and complementary
/// slackness `max |lambda * l|`, where `lambda = diag(p) l + r - C^T mu`.
pub fn kkt_residual(qp: &QpProblem, l: &LayerVector, mu: &[f64]) -> Result<f64> {
    if l.len() != qp.n_slots() {
        return Err(MlgError::Dimension(format!(
            "layer vector has {} slots, expected {}",
            l.len(),
            qp.n_slots()
        )));
    }
    let cl = qp.constraints.apply(l.values())?;
    let d = qp.constraints.rhs();
    let primal = cl
        .iter()
        .zip(&d)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ct = qp.constraints.apply_transpose(mu)?;
    let mut dual: f64 = 0.0;
    let mut slack: f64 = 0.0;
    for s in 0..qp.n_slots() {
        let x = l.values()[s];
        let lambda = qp.p[s] * x + qp.r[s] - ct[s];
        dual = dual.max(-lambda);
        slack = slack.max((lambda * x).abs());
    }
    Ok(primal.max(dual).max(slack))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualAscentOptions {
    /// Step size; `None` picks [`QpProblem::default_step`].
    pub rho: Option<f64>,
    /// Stop once `||C l - d||_2 < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for DualAscentOptions {
    fn default() -> Self {
        Self {
            rho: None,
            tol: 1e-6,
            max_iter: 50_000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub objective: f64,
    pub dual_value: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub l: LayerVector,
    pub mu: Vec<f64>,
    pub kkt_residual: f64,
    /// `||C l - d||_2` at exit.
    pub primal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rho: f64,
    pub trace: Vec<TraceRow>,
}

/// Dual ascent from `mu = 0`.
pub fn solve_layer_qp(qp: &QpProblem, opts: &DualAscentOptions) -> Result<QpSolution> {
    solve_layer_qp_from(qp, opts, None)
}

/// Dual ascent from a given starting multiplier (warm start).
pub fn solve_layer_qp_from(
    qp: &QpProblem,
    opts: &DualAscentOptions,
    mu0: Option<&[f64]>,
) -> Result<QpSolution> {
    let rows = qp.constraints.n_rows();
    let rho = match opts.rho {
        Some(rho) if rho > 0.0 && rho.is_finite() => rho,
        Some(rho) => return Err(MlgError::Parameter(format!("step size must be positive, got {rho}"))),
        None => qp.default_step(),
    };
    if !(opts.tol > 0.0) {
        return Err(MlgError::Parameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut mu = match mu0 {
        Some(m) if m.len() == rows => m.to_vec(),
        Some(m) => {
            return Err(MlgError::Dimension(format!(
                "warm start has {} multipliers, expected {rows}",
                m.len()
            )))
        }
        None => vec![0.0; rows],
    };
    let d = qp.constraints.rhs();
    let mut l = vec![0.0; qp.n_slots()];
    let mut resid = vec![0.0; rows];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut norm;

    loop {
        qp.constraints.apply_transpose_into(&mu, &mut l);
        project(&mut l, qp);
        qp.constraints.apply_into(&l, &mut resid);
        resid.iter_mut().zip(&d).for_each(|(r, d)| *r -= d);
        norm = resid.iter().map(|x| x * x).sum::<f64>().sqrt();
        iterations += 1;
        if !norm.is_finite() {
            return Err(MlgError::Divergence {
                iteration: iterations,
                layer: None,
            });
        }
        if opts.record_trace {
            let objective = qp.objective(&l);
            let pen: f64 = mu.iter().zip(&resid).map(|(m, r)| -m * r).sum();
            trace.push(TraceRow {
                iteration: iterations,
                primal_residual: norm,
                objective,
                dual_value: objective + pen,
            });
        }
        if norm < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        mu.iter_mut().zip(&resid).for_each(|(m, r)| *m -= rho * r);
    }

    let l = LayerVector::from_raw(l, qp.n_nodes());
    let kkt = kkt_residual(qp, &l, &mu)?;
    Ok(QpSolution {
        l,
        mu,
        kkt_residual: kkt,
        primal_residual: norm,
        iterations,
        converged,
        rho,
        trace,
    })
}

/// Writes an iteration trace as CSV.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,primal_residual,objective,dual_value")?;
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?}",
            r.iteration, r.primal_residual, r.objective, r.dual_value
        )?;
    }
    Ok(())
}
