//! Reference implementations used by the integration tests. They are kept
//! deliberately naive and share no code with the library beyond plain data.

#![allow(dead_code)]

use mlgraph::graph::{ConstraintSystem, DuplicationOperator, ViewCovariance};
use mlgraph::qp::{assemble_qp, kkt_residual, solve_layer_qp, DualAscentOptions, QpProblem};
use mlgraph::spectral::Embedding;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = rng.random_range(1..=n + 2);
    let x = gaussian(n, d, rng);
    let s = &x * x.transpose();
    (&s + s.transpose()) * 0.5
}

/// `n x k` matrix with orthonormal columns, via Gram-Schmidt.
pub fn random_isometry(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = gaussian(n, k, rng);
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let ci = q.column(i).clone_owned();
                let mut cj = q.column_mut(j);
                cj.axpy(-proj, &ci, 1.0);
            }
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

/// 0-based slot pairs in the order of the half-vectorization.
pub fn slot_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..n {
        for i in j..n {
            out.push((i, j));
        }
    }
    out
}

/// Dense duplication matrix `D` (`n^2 x V`, column-major vec).
pub fn dense_duplication(n: usize) -> DMatrix<f64> {
    let pairs = slot_pairs(n);
    let mut d = DMatrix::zeros(n * n, pairs.len());
    for (s, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            d[(i + j * n, s)] = 1.0;
        } else {
            d[(i + j * n, s)] = -1.0;
            d[(j + i * n, s)] = -1.0;
        }
    }
    d
}

/// Dense constraint matrix built from its definition: trace row, then row
/// sums of `mat(D l)`.
pub fn dense_constraints(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let d = dense_duplication(n);
    let v = d.ncols();
    let mut c = DMatrix::zeros(n + 1, v);
    for s in 0..v {
        let col = d.column(s);
        for k in 0..n {
            c[(0, s)] += col[k + k * n];
        }
        for row in 0..n {
            for k in 0..n {
                c[(row + 1, s)] += col[row + k * n];
            }
        }
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[0] = n as f64;
    (c, rhs)
}

/// Reference QP data built densely: `p = 2 alpha diag(D^T D)`,
/// `r = D^T vec(S + beta Q Q^T)`.
pub fn dense_qp(s: &DMatrix<f64>, q: Option<&DMatrix<f64>>, alpha: f64, beta: f64) -> (DVector<f64>, DVector<f64>) {
    let n = s.nrows();
    let d = dense_duplication(n);
    let dtd = d.transpose() * &d;
    let p = DVector::from_fn(d.ncols(), |i, _| 2.0 * alpha * dtd[(i, i)]);
    let mut r_mat = s.clone();
    if let Some(q) = q {
        r_mat += q * q.transpose() * beta;
    }
    let vec_r = DVector::from_column_slice(r_mat.as_slice());
    (p, d.transpose() * vec_r)
}

pub struct OracleSolution {
    pub l: DVector<f64>,
    pub objective: f64,
}

/// Minimizes `0.5 l^T diag(p) l + r^T l` subject to `C l = d`, `l >= 0`.
///
/// The minimizer is the `diag(p)`-weighted projection of `-r / p` onto the
/// feasible polyhedron. Dykstra's alternating projections between the affine
/// set and the orthant locate it; an active-set refinement with exact KKT
/// solves then removes the remaining error.
pub fn qp_oracle(p: &DVector<f64>, r: &DVector<f64>, c: &DMatrix<f64>, d: &DVector<f64>) -> OracleSolution {
    let v = p.len();
    let pinv = p.map(|x| 1.0 / x);
    let target = -r.component_mul(&pinv);

    // Affine projection in the p-metric: x - P^-1 C^T (C P^-1 C^T)^-1 (C x - d).
    let cp = c * DMatrix::from_diagonal(&pinv);
    let gram = &cp * c.transpose();
    let gram_inv = gram
        .clone()
        .pseudo_inverse(1e-12)
        .expect("pseudo-inverse of the constraint Gram matrix");
    let proj = cp.transpose() * gram_inv;
    let affine = |x: &DVector<f64>| -> DVector<f64> { x - &proj * (c * x - d) };

    let mut x = target.clone();
    let mut inc_a = DVector::zeros(v);
    let mut inc_o = DVector::zeros(v);
    for _ in 0..200_000 {
        let y = affine(&(&x + &inc_a));
        inc_a = &x + &inc_a - &y;
        let z = (&y + &inc_o).map(|t| t.max(0.0));
        inc_o = &y + &inc_o - &z;
        let change = (&z - &x).amax();
        x = z;
        if change < 1e-14 {
            break;
        }
    }

    let l = polish(p, r, c, d, x);
    let objective = 0.5 * l.dot(&p.component_mul(&l)) + r.dot(&l);
    OracleSolution { l, objective }
}

/// Active-set refinement: fix slots at zero, solve the equality-constrained
/// QP on the rest exactly, and move slots between the sets until the KKT
/// conditions hold.
fn polish(p: &DVector<f64>, r: &DVector<f64>, c: &DMatrix<f64>, d: &DVector<f64>, start: DVector<f64>) -> DVector<f64> {
    let v = p.len();
    let scale = start.amax().max(1.0);
    let mut free: Vec<bool> = start.iter().map(|&x| x > 1e-7 * scale).collect();
    for _ in 0..(4 * v) {
        let idx: Vec<usize> = (0..v).filter(|&i| free[i]).collect();
        let m = c.nrows();
        let f = idx.len();
        // [P_F  -C_F^T; C_F 0] [l_F; mu] = [-r_F; d]
        let mut kkt = DMatrix::zeros(f + m, f + m);
        let mut rhs = DVector::zeros(f + m);
        for (a, &i) in idx.iter().enumerate() {
            kkt[(a, a)] = p[i];
            rhs[a] = -r[i];
            for row in 0..m {
                kkt[(a, f + row)] = -c[(row, i)];
                kkt[(f + row, a)] = c[(row, i)];
            }
        }
        for row in 0..m {
            rhs[f + row] = d[row];
        }
        let inv = kkt.clone().pseudo_inverse(1e-13).expect("KKT system");
        let mut sol = &inv * &rhs;
        // Iterative refinement against the rounding of the pseudo-inverse.
        for _ in 0..5 {
            let res = &rhs - &kkt * &sol;
            sol += &inv * res;
        }
        let mut l = DVector::zeros(v);
        for (a, &i) in idx.iter().enumerate() {
            l[i] = sol[a];
        }
        let mu = sol.rows(f, m).clone_owned();
        let lambda = p.component_mul(&l) + r - c.transpose() * &mu;

        let mut changed = false;
        // Drop the most negative free slot, else add the most violated fixed one.
        if let Some((i, _)) = idx
            .iter()
            .map(|&i| (i, l[i]))
            .filter(|&(_, x)| x < -1e-13)
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            free[i] = false;
            changed = true;
        } else if let Some((i, _)) = (0..v)
            .filter(|&i| !free[i])
            .map(|i| (i, lambda[i]))
            .filter(|&(_, g)| g < -1e-11)
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            free[i] = true;
            changed = true;
        }
        if !changed {
            return l.map(|x| x.max(0.0));
        }
    }
    panic!("active-set refinement did not settle");
}

/// NMI from an explicit contingency table, arithmetic-mean normalization.
pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (entropy(&row), entropy(&col));
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let nij = table[i][j];
            if nij > 0.0 {
                mi += (nij / n) * ((n * nij) / (row[i] * col[j])).ln();
            }
        }
    }
    if ha == 0.0 && hb == 0.0 {
        1.0
    } else if ha == 0.0 || hb == 0.0 {
        0.0
    } else {
        2.0 * mi / (ha + hb)
    }
}

/// All labelings of `n` points with labels below `k`.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = code % k;
                    code /= k;
                    d
                })
                .collect()
        })
        .collect()
}

/// Whether two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations, eigenvalues
/// ascending.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 * (1.0 + a.norm_squared()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (vals, vecs)
}

/// Connected components by union-find over entries with weight above `tol`.
pub fn union_find_components(adj: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let n = adj.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[(i, j)] > tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut ids = std::collections::BTreeMap::new();
    (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect()
}

/// Slot values of a random weighted graph on `n` nodes, scaled to trace `n`.
/// Roughly a third of the edges are absent.
pub fn random_feasible_layer(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            if rng.random_bool(0.65) {
                let x = rng.random_range(0.01..2.0);
                w[(i, j)] = x;
                w[(j, i)] = x;
            }
        }
    }
    // Keep at least one edge so the trace can be normalized.
    if w.iter().all(|&x| x == 0.0) {
        w[(1, 0)] = 1.0;
        w[(0, 1)] = 1.0;
    }
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let scale = n as f64 / degree.iter().sum::<f64>();
    slot_pairs(n)
        .into_iter()
        .map(|(i, j)| if i == j { degree[i] * scale } else { w[(i, j)] * scale })
        .collect()
}

/// `mat(D l)` assembled from the dense duplication matrix.
pub fn dense_apply(l: &[f64], n: usize) -> DMatrix<f64> {
    let v = dense_duplication(n) * DVector::from_column_slice(l);
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// A QP built by the library next to its dense reference data.
pub struct Instance {
    pub lib: QpProblem,
    pub p: DVector<f64>,
    pub r: DVector<f64>,
}

pub fn instance(s: &DMatrix<f64>, q: Option<&DMatrix<f64>>, alpha: f64, beta: f64) -> Instance {
    let n = s.nrows();
    let cov = ViewCovariance::from_matrix(s.clone()).unwrap();
    let emb = q.map(|q| Embedding::from_parts(q.clone(), vec![0.0; q.ncols()]));
    let d = DuplicationOperator::new(n).unwrap();
    let c = ConstraintSystem::new(n).unwrap();
    let lib = assemble_qp(&cov, emb.as_ref(), alpha, beta, &d, &c).unwrap();
    let (p, r) = dense_qp(s, q, alpha, beta);
    Instance { lib, p, r }
}

/// Random instance: `N <= 6`, PSD `S`, isometry `Q`, `alpha` in [0.1, 100],
/// `beta` in [0, 10].
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(2..=6);
    let s = random_psd(n, rng);
    let k = rng.random_range(1..n);
    let q = random_isometry(n, k, rng);
    let alpha = rng.random_range(0.1..=100.0);
    let beta = rng.random_range(0.0..=10.0);
    instance(&s, Some(&q), alpha, beta)
}

pub fn tight() -> DualAscentOptions {
    DualAscentOptions {
        tol: 1e-11,
        max_iter: 2_000_000,
        ..DualAscentOptions::default()
    }
}

pub struct Comparison {
    pub slot_err: f64,
    pub obj_gap: f64,
    pub kkt: f64,
}

/// Solves with the library at a tight tolerance and with the oracle.
pub fn compare(inst: &Instance) -> Comparison {
    let n = inst.lib.n_nodes();
    for (a, b) in inst.lib.p().iter().zip(inst.p.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "p differs: {a} vs {b}");
    }
    for (a, b) in inst.lib.r().iter().zip(inst.r.iter()) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "r differs: {a} vs {b}");
    }
    let (c, d) = dense_constraints(n);
    let oracle = qp_oracle(&inst.p, &inst.r, &c, &d);
    let sol = solve_layer_qp(&inst.lib, &tight()).unwrap();
    assert!(sol.converged, "dual ascent did not converge");
    let slot_err = sol
        .l
        .values()
        .iter()
        .zip(oracle.l.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let obj = inst.lib.objective(sol.l.values());
    Comparison {
        slot_err,
        obj_gap: (obj - oracle.objective).abs(),
        kkt: kkt_residual(&inst.lib, &sol.l, &sol.mu).unwrap(),
    }
}
