mod common;

use common::*;
use mlgraph::cluster::{kmeans, nmi_slices, KMeansOptions, NmiNormalization};
use mlgraph::graph::{
    half_index, slot_count, smoothness, ConstraintSystem, DuplicationOperator, GraphLaplacian, LayerVector,
    ViewCovariance,
};
use mlgraph::spectral::{ky_fan_value, smallest_k_eigenpairs};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn layer_case() -> impl Strategy<Value = (usize, u64)> {
    (3usize..=12, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duplication_round_trip((n, seed) in layer_case()) {
        let mut rng = rng(seed);
        let slots = random_feasible_layer(n, &mut rng);
        let l = LayerVector::new(slots.clone(), n).unwrap();
        let d = DuplicationOperator::new(n).unwrap();
        let m = d.apply(&l).unwrap();
        prop_assert!((&m - dense_apply(&slots, n)).amax() <= 1e-14);
        let lap = GraphLaplacian::validate(m, 1e-9);
        prop_assert!(lap.is_ok(), "{:?}", lap.err());
        let back = LayerVector::from_laplacian(&lap.unwrap());
        for (a, b) in back.values().iter().zip(&slots) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let c = ConstraintSystem::new(n).unwrap();
        let cl = c.apply(&slots).unwrap();
        for (a, b) in cl.iter().zip(c.rhs()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn adjoint_identity((n, seed) in layer_case()) {
        let mut rng = rng(seed);
        let l: Vec<f64> = (0..slot_count(n)).map(|_| rng.random_range(0.0..3.0)).collect();
        let g = gaussian(n, n, &mut rng);
        let sym = (&g + g.transpose()) * 0.5;
        let d = DuplicationOperator::new(n).unwrap();
        let lhs = d.apply(&LayerVector::new(l.clone(), n).unwrap()).unwrap().dot(&sym);
        let adj = d.adjoint(&sym).unwrap();
        let rhs: f64 = adj.iter().zip(&l).map(|(a, b)| a * b).sum();
        let scale = sym.norm() * DVector::from_vec(l).norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn constraint_matrix_matches_definition(n in 2usize..=8) {
        let (dense, rhs) = dense_constraints(n);
        let c = ConstraintSystem::new(n).unwrap();
        prop_assert_eq!(c.to_dense(), dense);
        prop_assert_eq!(c.rhs(), rhs.as_slice().to_vec());
        let d = DuplicationOperator::new(n).unwrap();
        let dd = dense_duplication(n);
        let gram = dd.transpose() * &dd;
        for (s, g) in d.gram_diagonal().iter().enumerate() {
            prop_assert_eq!(*g, gram[(s, s)]);
        }
        prop_assert!((gram.clone() - DMatrix::from_diagonal(&gram.diagonal())).amax() == 0.0);
    }

    #[test]
    fn half_index_is_a_bijection(n in 1usize..=15) {
        let mut seen = vec![false; slot_count(n)];
        for (s, (i, j)) in slot_pairs(n).into_iter().enumerate() {
            let idx = half_index(i + 1, j + 1, n).unwrap();
            prop_assert_eq!(idx, s + 1);
            prop_assert!(!seen[idx - 1]);
            seen[idx - 1] = true;
        }
        prop_assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn smoothness_is_linear_in_slots((n, seed) in layer_case()) {
        let mut rng = rng(seed);
        let slots = random_feasible_layer(n, &mut rng);
        let s = ViewCovariance::from_view(&gaussian(n, 4, &mut rng)).unwrap();
        let d = DuplicationOperator::new(n).unwrap();
        let l = LayerVector::new(slots.clone(), n).unwrap();
        let lap = GraphLaplacian::validate(d.apply(&l).unwrap(), 1e-9).unwrap();
        let direct = smoothness(&lap, &s).unwrap();
        let via_r: f64 = d.adjoint(s.matrix()).unwrap().iter().zip(&slots).map(|(a, b)| a * b).sum();
        prop_assert!((direct - via_r).abs() <= 1e-10 * direct.abs().max(1.0));
        prop_assert!(direct >= -1e-10);
    }

    #[test]
    fn nmi_matches_contingency_oracle(
        a in proptest::collection::vec(0usize..5, 2..40),
        seed in any::<u64>(),
    ) {
        let mut rng = rng(seed);
        let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..4)).collect();
        let v = nmi_slices(&a, &b, NmiNormalization::Arithmetic).unwrap();
        prop_assert!((v - nmi_oracle(&a, &b)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&v));
        let sym = nmi_slices(&b, &a, NmiNormalization::Arithmetic).unwrap();
        prop_assert_eq!(v, sym);
        let renamed: Vec<usize> = a.iter().map(|&x| (x + 3) % 5).collect();
        let w = nmi_slices(&renamed, &b, NmiNormalization::Arithmetic).unwrap();
        prop_assert!((v - w).abs() <= 1e-12);
        prop_assert!((nmi_slices(&a, &a, NmiNormalization::Arithmetic).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kmeans_is_deterministic_and_lloyd_descends(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = rng(seed);
        let pts = gaussian(30, 3, &mut rng);
        let opts = KMeansOptions { restarts: 4, ..KMeansOptions::with_seed(seed) };
        let a = kmeans(&pts, k, &opts).unwrap();
        let b = kmeans(&pts, k, &opts).unwrap();
        prop_assert_eq!(a.labeling.labels(), b.labeling.labels());
        prop_assert_eq!(a.wcss, b.wcss);
        prop_assert!(a.labeling.labels().iter().all(|&l| l < k));
        for w in a.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
        // WCSS recomputed from the labels.
        let mut wcss = 0.0;
        for c in 0..k {
            let rows: Vec<usize> = (0..30).filter(|&i| a.labeling.labels()[i] == c).collect();
            if rows.is_empty() {
                continue;
            }
            let mut mean = nalgebra::RowDVector::zeros(3);
            for &i in &rows {
                mean += pts.row(i);
            }
            mean /= rows.len() as f64;
            wcss += rows.iter().map(|&i| (pts.row(i) - &mean).norm_squared()).sum::<f64>();
        }
        prop_assert!((wcss - a.wcss).abs() <= 1e-9 * wcss.max(1.0));
    }

    #[test]
    fn ky_fan_is_minimal_over_isometries(seed in any::<u64>(), n in 2usize..=20, kk in 1usize..=5) {
        let k = kk.min(n);
        let mut rng = rng(seed);
        let m = random_psd(n, &mut rng);
        let emb = smallest_k_eigenpairs(&m, k).unwrap();
        let q = emb.q();
        let qtq = q.transpose() * q;
        prop_assert!((qtq - DMatrix::<f64>::identity(k, k)).amax() <= 1e-9);
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(emb.eigenvalues()));
        prop_assert!((&m * q - q * lam).amax() <= 1e-8 * m.amax().max(1.0));
        for w in emb.eigenvalues().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        let value = ky_fan_value(&m, k).unwrap();
        prop_assert!((value - (q.transpose() * &m * q).trace()).abs() <= 1e-8);
        let (all, _) = jacobi_eigen(&m);
        let expect: f64 = all[..k].iter().sum();
        prop_assert!((value - expect).abs() <= 1e-8 * m.amax().max(1.0));
        for _ in 0..5 {
            let u = random_isometry(n, k, &mut rng);
            prop_assert!((u.transpose() * &m * &u).trace() >= value - 1e-9);
        }
    }
}
