//! CSV matrices, label files, edge lists, and result persistence.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! written file reads back bit-exactly and identical runs produce identical
//! bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::Labeling;
use crate::datagen::SyntheticSpec;
use crate::error::{MlgError, Result};
use crate::graph::{GraphLaplacian, MultiViewDataset};
use crate::rmgl::{RmglConfig, RmglResult};

pub const FORMAT_VERSION: u32 = 1;

/// Weights at or below this are not written to edge lists.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-9;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| MlgError::io(path, e))
}

fn parse_row(line: &str, path: &Path, row: usize) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(col, cell)| {
            let cell = cell.trim();
            cell.parse::<f64>().map_err(|_| MlgError::Parse {
                path: path.to_path_buf(),
                row,
                col: col + 1,
                cell: cell.to_string(),
            })
        })
        .collect()
}

fn is_header(line: &str) -> bool {
    line.split(',')
        .next()
        .map(|c| c.trim().parse::<f64>().is_err())
        .unwrap_or(false)
}

/// Reads a dense comma-separated matrix, one row per line. A first line
/// whose first cell is not numeric is treated as a header.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 && is_header(line) {
            continue;
        }
        let row = parse_row(line, path, idx + 1)?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MlgError::Format(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    idx + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MlgError::Format(format!("{}: file has no data rows", path.display())));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Reads a single column of nonnegative integer labels (optional header).
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        if idx == 0 && cell.parse::<usize>().is_err() && cell.parse::<f64>().is_err() {
            continue;
        }
        let v = cell.parse::<usize>().map_err(|_| MlgError::Parse {
            path: path.to_path_buf(),
            row: idx + 1,
            col: 1,
            cell: cell.to_string(),
        })?;
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(MlgError::Format(format!("{}: file has no labels", path.display())));
    }
    Ok(labels)
}

/// Loads one view per file, in order, with optional ground-truth labels.
pub fn load_views(paths: &[PathBuf], labels: Option<&Path>) -> Result<MultiViewDataset> {
    if paths.is_empty() {
        return Err(MlgError::Parameter("no view files given".into()));
    }
    let mut views = Vec::with_capacity(paths.len());
    for path in paths {
        let x = read_matrix_csv(path)?;
        if let Some((first, first_x)) = paths.first().zip(views.first()) {
            let first_x: &DMatrix<f64> = first_x;
            if first_x.nrows() != x.nrows() {
                return Err(MlgError::RowMismatch {
                    first: first.clone(),
                    first_rows: first_x.nrows(),
                    second: path.clone(),
                    second_rows: x.nrows(),
                });
            }
        }
        views.push(x);
    }
    let labels = match labels {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != views[0].nrows() {
                return Err(MlgError::RowMismatch {
                    first: paths[0].clone(),
                    first_rows: views[0].nrows(),
                    second: p.to_path_buf(),
                    second_rows: l.len(),
                });
            }
            Some(l)
        }
        None => None,
    };
    MultiViewDataset::new(views, labels)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MlgError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<PathBuf> {
    w.flush().map_err(|e| MlgError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<PathBuf> {
    let mut w = create(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| MlgError::io(path, e))?;
    }
    finish(path, w)
}

/// Single-column label file whose header records `k` and the seed.
pub fn write_labels_csv(path: &Path, labeling: &Labeling, seed: u64) -> Result<PathBuf> {
    let mut w = create(path)?;
    let io = |e| MlgError::io(path, e);
    writeln!(w, "label:k={}:seed={seed}", labeling.k()).map_err(io)?;
    for l in labeling.labels() {
        writeln!(w, "{l}").map_err(io)?;
    }
    finish(path, w)
}

/// `i,j,weight` rows (1-based, `i < j`) for weights above `threshold`.
pub fn write_edges(path: &Path, l: &GraphLaplacian, threshold: f64) -> Result<PathBuf> {
    let mut w = create(path)?;
    for (i, j, weight) in l.edges(threshold) {
        writeln!(w, "{},{},{weight:?}", i + 1, j + 1).map_err(|e| MlgError::io(path, e))?;
    }
    finish(path, w)
}

pub fn read_edges(path: &Path, n: usize) -> Result<GraphLaplacian> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, path, idx + 1)?;
        if row.len() != 3 || row[0] < 1.0 || row[1] < 1.0 || row[0].fract() != 0.0 || row[1].fract() != 0.0 {
            return Err(MlgError::Format(format!(
                "{}: row {} is not `i,j,weight` with 1-based node ids",
                path.display(),
                idx + 1
            )));
        }
        edges.push((row[0] as usize - 1, row[1] as usize - 1, row[2]));
    }
    GraphLaplacian::from_edges(n, &edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Views {
        paths: Vec<PathBuf>,
        labels: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub source: DataSource,
    pub config: RmglConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn new(source: DataSource, config: RmglConfig, seed: u64, out_dir: PathBuf) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            source,
            config,
            seed,
            out_dir,
        }
    }

    /// Checks that all referenced inputs exist.
    pub fn check_inputs(&self) -> Result<()> {
        if let DataSource::Views { paths, labels } = &self.source {
            for p in paths.iter().chain(labels.iter()) {
                if !p.is_file() {
                    return Err(MlgError::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| MlgError::Format(format!("cannot serialize manifest: {e}")))?;
        fs::write(path, json + "\n").map_err(|e| MlgError::io(path, e))?;
        Ok(path.to_path_buf())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| MlgError::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SaveOptions<'a> {
    pub edge_threshold: Option<f64>,
    pub labels: Option<&'a Labeling>,
    pub truth: Option<&'a Labeling>,
    pub manifest: Option<&'a RunManifest>,
}

/// Writes a learned model into `dir` and returns the files written.
///
/// Layout: `layer_<m>.edges`, `embedding.csv` (`N x K`), `eigenvalues.csv`
/// (one row per outer iteration), `objective.csv`, `run_log.csv`, and when
/// given `labels.csv`, `truth_labels.csv` and `manifest.json`.
pub fn save_result(result: &RmglResult, dir: &Path, opts: &SaveOptions<'_>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| MlgError::io(dir, e))?;
    let threshold = opts.edge_threshold.unwrap_or(DEFAULT_EDGE_THRESHOLD);
    let seed = opts.manifest.map_or(0, |m| m.seed);
    let mut written = Vec::new();

    for (m, l) in result.graph.layers().iter().enumerate() {
        written.push(write_edges(&dir.join(format!("layer_{}.edges", m + 1)), l, threshold)?);
    }
    written.push(write_matrix_csv(&dir.join("embedding.csv"), result.embedding.q())?);

    let path = dir.join("eigenvalues.csv");
    let mut w = create(&path)?;
    for (t, vals) in result.eigenvalue_trace.iter().enumerate() {
        let cells: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{}", t + 1, cells.join(",")).map_err(|e| MlgError::io(&path, e))?;
    }
    written.push(finish(&path, w)?);

    let path = dir.join("objective.csv");
    let mut w = create(&path)?;
    writeln!(w, "iteration,objective").map_err(|e| MlgError::io(&path, e))?;
    for (t, v) in result.objective_trace.iter().enumerate() {
        writeln!(w, "{},{v:?}", t + 1).map_err(|e| MlgError::io(&path, e))?;
    }
    written.push(finish(&path, w)?);

    let path = dir.join("run_log.csv");
    let mut w = create(&path)?;
    result.write_log_csv(&mut w).map_err(|e| MlgError::io(&path, e))?;
    written.push(finish(&path, w)?);

    if let Some(labels) = opts.labels {
        written.push(write_labels_csv(&dir.join("labels.csv"), labels, seed)?);
    }
    if let Some(truth) = opts.truth {
        written.push(write_labels_csv(&dir.join("truth_labels.csv"), truth, seed)?);
    }
    if let Some(manifest) = opts.manifest {
        written.push(manifest.write(&dir.join("manifest.json"))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MultiLayerGraph;
    use crate::spectral::Embedding;
    use nalgebra::dmatrix;

    fn result_for(layers: Vec<GraphLaplacian>) -> RmglResult {
        let n = layers[0].n_nodes();
        let m = layers.len();
        RmglResult {
            graph: MultiLayerGraph::new(layers).unwrap(),
            embedding: Embedding::from_parts(DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt()), vec![0.0]),
            objective_trace: vec![3.0, 2.5],
            eigenvalue_trace: vec![vec![0.0], vec![0.0]],
            per_layer_ranks: vec![1; m],
            rank_achieved: true,
            converged: true,
            iterations: 2,
            log: vec![],
            betas: vec![1.0; m],
            escalations: 0,
        }
    }

    #[test]
    fn edge_files() {
        let dir = tempfile::tempdir().unwrap();
        let single = GraphLaplacian::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let empty = GraphLaplacian::validate(DMatrix::zeros(2, 2), 1e-9).unwrap();
        let res = result_for(vec![single.clone(), empty]);
        let files = save_result(&res, dir.path(), &SaveOptions::default()).unwrap();
        assert!(files.iter().all(|f| f.is_file()));
        assert_eq!(fs::read_to_string(dir.path().join("layer_1.edges")).unwrap(), "1,2,1.0\n");
        assert_eq!(fs::read_to_string(dir.path().join("layer_2.edges")).unwrap(), "");
        assert_eq!(read_edges(&dir.path().join("layer_1.edges"), 2).unwrap(), single);
    }

    #[test]
    fn matrix_csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = dmatrix![0.1, -2.5e-12; 3.0, 1.0 / 3.0];
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);

        let h = dir.path().join("h.csv");
        fs::write(&h, "a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(read_matrix_csv(&h).unwrap(), dmatrix![1.0, 2.0; 3.0, 4.0]);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "1,2\n3,x\n").unwrap();
        match read_matrix_csv(&bad).unwrap_err() {
            MlgError::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
            e => panic!("{e}"),
        }
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        assert!(matches!(read_matrix_csv(&empty), Err(MlgError::Format(_))));
        let ragged = dir.path().join("ragged.csv");
        fs::write(&ragged, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&ragged).is_err());
    }

    #[test]
    fn load_views_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let c = dir.path().join("c.csv");
        write_matrix_csv(&a, &DMatrix::from_element(4, 2, 1.0)).unwrap();
        write_matrix_csv(&b, &DMatrix::from_element(4, 3, 2.0)).unwrap();
        write_matrix_csv(&c, &DMatrix::from_element(5, 3, 2.0)).unwrap();
        let ds = load_views(&[a.clone(), b.clone()], None).unwrap();
        assert_eq!((ds.n_views(), ds.n_nodes()), (2, 4));
        match load_views(&[a.clone(), c.clone()], None).unwrap_err() {
            MlgError::RowMismatch { first, second, .. } => {
                assert_eq!(first, a);
                assert_eq!(second, c);
            }
            e => panic!("{e}"),
        }
        let labels = dir.path().join("l.csv");
        write_labels_csv(&labels, &Labeling::new(vec![0, 1, 1, 0], 2).unwrap(), 3).unwrap();
        let ds = load_views(&[a, b], Some(&labels)).unwrap();
        assert_eq!(ds.labels().unwrap(), &[0, 1, 1, 0]);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let lab = Labeling::new(vec![2, 0, 1], 3).unwrap();
        write_labels_csv(&p, &lab, 9).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("label:k=3:seed=9\n"));
        assert_eq!(read_labels(&p).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::new(
            DataSource::Synthetic(SyntheticSpec::reference_preset(4)),
            RmglConfig::new(4, 3),
            4,
            dir.path().to_path_buf(),
        );
        let p = dir.path().join("manifest.json");
        m.write(&p).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
        let missing = RunManifest::new(
            DataSource::Views { paths: vec![dir.path().join("nope.csv")], labels: None },
            RmglConfig::new(2, 1),
            0,
            dir.path().to_path_buf(),
        );
        assert!(missing.check_inputs().is_err());
    }
}
