mod common;

use std::fs;
use std::path::PathBuf;

use common::*;
use mlgraph::cluster::Labeling;
use mlgraph::datagen::{generate, SyntheticSpec};
use mlgraph::io::{
    load_views, read_edges, read_labels, read_matrix_csv, save_result, write_edges, write_matrix_csv, DataSource,
    RunManifest, SaveOptions,
};
use mlgraph::rmgl::{solve_rmgl, RmglConfig};
use mlgraph::{GraphLaplacian, MlgError};
use nalgebra::{dmatrix, DMatrix};

#[test]
fn six_wide_views_with_two_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let dims = [216, 76, 64, 6, 240, 47];
    let mut rng = rng(1);
    let mut paths = Vec::new();
    for (m, &d) in dims.iter().enumerate() {
        let path = dir.path().join(format!("v{m}.csv"));
        write_matrix_csv(&path, &gaussian(2000, d, &mut rng)).unwrap();
        paths.push(path);
    }
    let data = load_views(&paths, None).unwrap();
    assert_eq!(data.n_nodes(), 2000);
    assert_eq!(data.view_dims(), dims.to_vec());
}

#[test]
fn mismatched_rows_name_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_matrix_csv(&a, &DMatrix::zeros(4, 2)).unwrap();
    write_matrix_csv(&b, &DMatrix::zeros(5, 2)).unwrap();
    match load_views(&[a.clone(), b.clone()], None) {
        Err(MlgError::RowMismatch { first, second, .. }) => {
            assert_eq!((first, second), (a, b));
        }
        other => panic!("expected a row mismatch, got {other:?}"),
    }
}

#[test]
fn edge_files_for_small_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let single = GraphLaplacian::validate(dmatrix![1.0, -1.0; -1.0, 1.0], 0.0).unwrap();
    let path = write_edges(&dir.path().join("one.edges"), &single, 1e-9).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().trim(), "1,2,1.0");

    let empty = GraphLaplacian::validate(DMatrix::zeros(3, 3), 0.0).unwrap();
    let path = write_edges(&dir.path().join("none.edges"), &empty, 1e-9).unwrap();
    assert!(fs::read_to_string(&path).unwrap().trim().is_empty());
    assert_eq!(read_edges(&path, 3).unwrap().matrix(), &DMatrix::zeros(3, 3));
}

#[test]
fn saved_model_loads_back() {
    let spec = SyntheticSpec::reference_preset_with_nodes(40, 4);
    let inst = generate(&spec).unwrap();
    let cfg = RmglConfig::new(4, 3);
    let result = solve_rmgl(&inst.data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let labels = Labeling::new(vec![0; 40], 4).unwrap();
    let manifest = RunManifest::new(DataSource::Synthetic(spec), cfg.clone(), 4, out.clone());
    let files = save_result(
        &result,
        &out,
        &SaveOptions {
            edge_threshold: Some(0.0),
            labels: Some(&labels),
            truth: Some(&inst.truth),
            manifest: Some(&manifest),
        },
    )
    .unwrap();
    for f in &files {
        assert!(f.exists(), "{} missing", f.display());
    }
    for (m, l) in result.graph.layers().iter().enumerate() {
        let back = read_edges(&out.join(format!("layer_{}.edges", m + 1)), 40).unwrap();
        assert!((back.matrix() - l.matrix()).norm() <= 1e-9);
    }
    let q = read_matrix_csv(&out.join("embedding.csv")).unwrap();
    assert_eq!(&q, result.embedding.q());
    assert_eq!(read_labels(&out.join("truth_labels.csv")).unwrap(), inst.truth.labels());
    let reread = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(reread.config, cfg);
    assert_eq!(reread.out_dir, PathBuf::from(&out));
}
