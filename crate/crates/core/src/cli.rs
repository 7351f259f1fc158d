//! Command-line front end.
//!
//! Every subcommand prints one JSON object on stdout and progress on
//! stderr. Exit status is 0 on success, 2 for usage errors and 1 for
//! runtime failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::cluster::{kmeans, nmi_slices, spectral_cluster_layer, KMeansOptions, Labeling, NmiNormalization};
use crate::datagen::{generate, SyntheticInstance, SyntheticSpec};
use crate::error::{MlgError, Result};
use crate::graph::MultiViewDataset;
use crate::io::{
    load_views, read_edges, read_labels, read_matrix_csv, save_result, write_edges, write_labels_csv,
    write_matrix_csv, DataSource, RunManifest, SaveOptions, DEFAULT_EDGE_THRESHOLD,
};
use crate::rmgl::{solve_rmgl, BetaEscalation, RmglConfig, RmglResult, DEFAULT_ALPHA, DEFAULT_BETA};

#[derive(Debug, Parser)]
#[command(name = "mlgraph", version, about = "Multi-layer graph learning and multi-view clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-layer graph and its views.
    Synth(SynthArgs),
    /// Learn the multi-layer graph and the shared embedding.
    Learn(LearnArgs),
    /// Run k-means on a saved embedding.
    Cluster(ClusterArgs),
    /// NMI between two label files.
    Eval(EvalArgs),
    /// Learn, cluster and evaluate in one go.
    Pipeline(LearnArgs),
    /// Write scatter and NMI-bar data from a finished run.
    ExportPlot(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Three layers over four clusters, each layer merging one pair.
    Paper,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub synth_preset: Preset,
    /// Override the node count of the preset.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// One CSV file per view (repeat the flag or list several).
    #[arg(long, num_args = 1.., conflicts_with = "synth_preset")]
    pub views: Vec<PathBuf>,
    /// Ground-truth labels, one integer per row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Generate the data instead of reading it.
    #[arg(long, value_enum)]
    pub synth_preset: Option<Preset>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Reuse source, configuration and seed of an earlier run.
    #[arg(long, conflicts_with_all = ["views", "synth_preset"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub k: Option<usize>,
    /// Scalar or comma-separated list with one value per view.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Scalar or comma-separated list with one value per view.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    /// `factor[:cap]`, multiply beta of rank-deficient layers and retry.
    #[arg(long)]
    pub beta_escalation: Option<String>,
    /// Divide each covariance by its trace.
    #[arg(long)]
    pub normalize_covariance: bool,
    /// Record per-layer zero-eigenvalue counts in the run log.
    #[arg(long)]
    pub record_log: bool,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Edge weights at or below this are dropped from edge lists.
    #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// `N x K` embedding CSV.
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    /// Scale rows to unit length first.
    #[arg(long)]
    pub row_normalize: bool,
    /// Output label file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Exactly two label files.
    #[arg(long, num_args = 1, required = true)]
    pub labels: Vec<PathBuf>,
    /// Normalize by the geometric instead of the arithmetic mean.
    #[arg(long)]
    pub geometric: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Directory written by `learn` or `pipeline`.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `argv` and runs the command. Returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json value"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn dispatch(cmd: Command) -> Result<Value> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Learn(a) => learn(a, false),
        Command::Pipeline(a) => learn(a, true),
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::ExportPlot(a) => export_plot(a),
    }
}

fn preset_spec(preset: Preset, nodes: Option<usize>, seed: u64) -> SyntheticSpec {
    match (preset, nodes) {
        (Preset::Paper, Some(n)) => SyntheticSpec::reference_preset_with_nodes(n, seed),
        (Preset::Paper, None) => SyntheticSpec::reference_preset(seed),
    }
}

fn synth(a: SynthArgs) -> Result<Value> {
    let spec = preset_spec(a.synth_preset, a.nodes, a.seed);
    spec.validate()?;
    eprintln!("synth: generating N={} M={} K={}", spec.n_nodes, spec.layers.len(), spec.n_clusters);
    let inst = generate(&spec)?;
    create_dir(&a.out)?;
    let mut views = Vec::new();
    for (m, x) in inst.data.views().iter().enumerate() {
        views.push(write_matrix_csv(&a.out.join(format!("view_{}.csv", m + 1)), x)?);
    }
    let mut layers = Vec::new();
    for (m, l) in inst.graph.layers().iter().enumerate() {
        layers.push(write_edges(&a.out.join(format!("layer_{}.edges", m + 1)), l, DEFAULT_EDGE_THRESHOLD)?);
    }
    let labels = write_labels_csv(&a.out.join("labels.csv"), &inst.truth, a.seed)?;
    let spec_path = a.out.join("spec.json");
    let text = serde_json::to_string_pretty(&spec).map_err(|e| MlgError::Format(e.to_string()))?;
    fs::write(&spec_path, text + "\n").map_err(|e| MlgError::io(&spec_path, e))?;
    Ok(json!({
        "command": "synth",
        "n_nodes": spec.n_nodes,
        "n_views": spec.layers.len(),
        "k": spec.n_clusters,
        "seed": a.seed,
        "views": views,
        "layers": layers,
        "labels": labels,
        "spec": spec_path,
    }))
}

/// Parses `1.5` or `1,2,3` into one value per view.
pub fn parse_per_view(text: &str, n_views: usize, name: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| MlgError::Parameter(format!("--{name}: cannot parse `{}`", s.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; n_views]),
        n if n == n_views => Ok(values),
        n => Err(MlgError::Parameter(format!(
            "--{name} has {n} values for {n_views} views"
        ))),
    }
}

/// Parses `factor` or `factor:cap`.
pub fn parse_escalation(text: &str) -> Result<BetaEscalation> {
    let bad = || MlgError::Parameter(format!("--beta-escalation expects factor[:cap], got `{text}`"));
    let mut parts = text.split(':');
    let factor = parts.next().ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())?;
    let cap = match parts.next() {
        Some(c) => c.trim().parse::<f64>().map_err(|_| bad())?,
        None => 1e6,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(BetaEscalation { factor, cap })
}

fn build_config(s: &SolverArgs, default_k: Option<usize>, n_views: usize) -> Result<RmglConfig> {
    let k = s
        .k
        .or(default_k)
        .ok_or_else(|| MlgError::Parameter("--k is required when reading views from files".into()))?;
    let mut cfg = RmglConfig::new(k, n_views);
    cfg.alphas = match &s.alpha {
        Some(t) => parse_per_view(t, n_views, "alpha")?,
        None => vec![DEFAULT_ALPHA; n_views],
    };
    cfg.betas = match &s.beta {
        Some(t) => parse_per_view(t, n_views, "beta")?,
        None => vec![DEFAULT_BETA; n_views],
    };
    cfg.rho = s.rho;
    if let Some(v) = s.inner_tol {
        cfg.inner_tol = v;
    }
    if let Some(v) = s.outer_tol {
        cfg.outer_tol = v;
    }
    if let Some(v) = s.max_outer {
        cfg.max_outer = v;
    }
    if let Some(v) = s.max_inner {
        cfg.max_inner = v;
    }
    cfg.beta_escalation = s.beta_escalation.as_deref().map(parse_escalation).transpose()?;
    cfg.normalize_covariance = s.normalize_covariance;
    cfg.record_log = s.record_log;
    Ok(cfg)
}

struct Prepared {
    data: MultiViewDataset,
    truth: Option<Labeling>,
    manifest: RunManifest,
}

/// Loads and validates every input before anything is computed or written.
fn prepare(a: &LearnArgs) -> Result<Prepared> {
    let (source, cfg, seed) = if let Some(path) = &a.data.manifest {
        let m = RunManifest::read(path)?;
        (m.source, Some(m.config), m.seed)
    } else if let Some(preset) = a.data.synth_preset {
        if a.data.labels.is_some() {
            return Err(MlgError::Parameter("--labels cannot be combined with --synth-preset".into()));
        }
        (DataSource::Synthetic(preset_spec(preset, a.data.nodes, a.seed)), None, a.seed)
    } else if !a.data.views.is_empty() {
        let source = DataSource::Views {
            paths: a.data.views.clone(),
            labels: a.data.labels.clone(),
        };
        (source, None, a.seed)
    } else {
        return Err(MlgError::Parameter(
            "give --views, --synth-preset or --manifest".into(),
        ));
    };

    let (data, truth, default_k) = match &source {
        DataSource::Views { paths, labels } => {
            let data = load_views(paths, labels.as_deref())?;
            let truth = data.labels().map(|l| Labeling::from_labels(l.to_vec()));
            (data, truth, None)
        }
        DataSource::Synthetic(spec) => {
            spec.validate()?;
            let SyntheticInstance { data, truth, .. } = generate(spec)?;
            (data, Some(truth), Some(spec.n_clusters))
        }
    };
    let cfg = match cfg {
        Some(c) => c,
        None => build_config(&a.solver, default_k, data.n_views())?,
    };
    cfg.validate(data.n_nodes(), data.n_views())?;
    if !(a.edge_threshold >= 0.0) {
        return Err(MlgError::Parameter("--edge-threshold must be nonnegative".into()));
    }
    let manifest = RunManifest::new(source, cfg, seed, a.out.clone());
    manifest.check_inputs()?;
    Ok(Prepared { data, truth, manifest })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MlgError::io(dir, e))
}

fn learn(a: LearnArgs, full: bool) -> Result<Value> {
    let Prepared { data, truth, manifest } = prepare(&a)?;
    let cfg = &manifest.config;
    let seed = manifest.seed;
    eprintln!(
        "learn: N={} M={} K={} alpha={:?} beta={:?}",
        data.n_nodes(),
        data.n_views(),
        cfg.k,
        cfg.alphas,
        cfg.betas
    );
    let result = solve_rmgl(&data, cfg)?;
    eprintln!(
        "learn: {} outer iterations, converged={}, components per layer {:?}",
        result.iterations, result.converged, result.per_layer_ranks
    );

    let opts = KMeansOptions {
        restarts: a.restarts,
        ..KMeansOptions::with_seed(seed)
    };
    let labels = if full {
        Some(kmeans(result.embedding.q(), cfg.k, &opts)?.labeling)
    } else {
        None
    };
    let mut summary = result_summary(&result, if full { "pipeline" } else { "learn" }, &a.out);
    if full {
        let labels = labels.as_ref().expect("pipeline clusters");
        if let Some(truth) = &truth {
            let joint = nmi_slices(labels.labels(), truth.labels(), NmiNormalization::Arithmetic)?;
            let per_layer = result
                .graph
                .layers()
                .iter()
                .map(|l| {
                    let lab = spectral_cluster_layer(l, cfg.k, &opts)?;
                    nmi_slices(lab.labels(), truth.labels(), NmiNormalization::Arithmetic)
                })
                .collect::<Result<Vec<_>>>()?;
            eprintln!("pipeline: NMI {joint:.4}");
            summary["nmi"] = json!(joint);
            summary["single_layer_nmi"] = json!(per_layer);
        }
    }
    let files = save_result(
        &result,
        &a.out,
        &SaveOptions {
            edge_threshold: Some(a.edge_threshold),
            labels: labels.as_ref(),
            truth: truth.as_ref(),
            manifest: Some(&manifest),
        },
    )?;
    summary["files"] = json!(files);
    Ok(summary)
}

fn result_summary(result: &RmglResult, command: &str, out: &Path) -> Value {
    json!({
        "command": command,
        "n_nodes": result.graph.n_nodes(),
        "n_views": result.graph.n_layers(),
        "k": result.embedding.dim(),
        "per_layer_components": result.per_layer_ranks,
        "rank_achieved": result.rank_achieved,
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective_trace.last(),
        "betas": result.betas,
        "escalations": result.escalations,
        "gap_warning": result.embedding.gap_warning(),
        "out": out,
    })
}

fn cluster(a: ClusterArgs) -> Result<Value> {
    let q = read_matrix_csv(&a.embedding)?;
    let opts = KMeansOptions {
        restarts: a.restarts,
        row_normalize: a.row_normalize,
        ..KMeansOptions::with_seed(a.seed)
    };
    let res = kmeans(&q, a.k, &opts)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_labels_csv(&a.out, &res.labeling, a.seed)?;
    Ok(json!({
        "command": "cluster",
        "n_points": q.nrows(),
        "k": a.k,
        "wcss": res.wcss,
        "restart": res.restart,
        "labels": a.out,
    }))
}

fn eval(a: EvalArgs) -> Result<Value> {
    if a.labels.len() != 2 {
        return Err(MlgError::Parameter(format!(
            "eval needs exactly two --labels files, got {}",
            a.labels.len()
        )));
    }
    let x = read_labels(&a.labels[0])?;
    let y = read_labels(&a.labels[1])?;
    if x.len() != y.len() {
        return Err(MlgError::RowMismatch {
            first: a.labels[0].clone(),
            first_rows: x.len(),
            second: a.labels[1].clone(),
            second_rows: y.len(),
        });
    }
    let norm = if a.geometric {
        NmiNormalization::Geometric
    } else {
        NmiNormalization::Arithmetic
    };
    let v = nmi_slices(&x, &y, norm)?;
    Ok(json!({ "command": "eval", "nmi": v, "n": x.len() }))
}

fn export_plot(a: ExportArgs) -> Result<Value> {
    let manifest = RunManifest::read(&a.run.join("manifest.json"))?;
    let k = manifest.config.k;
    let q = read_matrix_csv(&a.run.join("embedding.csv"))?;
    let n = q.nrows();
    let labels_path = a.run.join("labels.csv");
    let labels = if labels_path.is_file() {
        read_labels(&labels_path)?
    } else {
        let opts = KMeansOptions::with_seed(a.seed);
        kmeans(&q, k, &opts)?.labeling.labels().to_vec()
    };
    let truth_path = a.run.join("truth_labels.csv");
    let truth = if truth_path.is_file() {
        Some(read_labels(&truth_path)?)
    } else {
        None
    };
    let out = a.out.unwrap_or_else(|| a.run.clone());
    create_dir(&out)?;

    let (cx, cy) = scatter_columns(&q);
    let scatter = out.join("embedding_scatter.csv");
    let mut text = String::from("node,x,y,label,truth\n");
    for i in 0..n {
        let t = truth.as_ref().map(|t| t[i].to_string()).unwrap_or_default();
        text.push_str(&format!("{},{:?},{:?},{},{t}\n", i + 1, q[(i, cx)], q[(i, cy)], labels[i]));
    }
    fs::write(&scatter, text).map_err(|e| MlgError::io(&scatter, e))?;

    let mut bars = Vec::new();
    if let Some(truth) = &truth {
        bars.push(("joint_embedding".to_string(), nmi_slices(&labels, truth, NmiNormalization::Arithmetic)?));
        let opts = KMeansOptions::with_seed(a.seed);
        for m in 1.. {
            let path = a.run.join(format!("layer_{m}.edges"));
            if !path.is_file() {
                break;
            }
            let l = read_edges(&path, n)?;
            let lab = spectral_cluster_layer(&l, k, &opts)?;
            bars.push((format!("layer_{m}"), nmi_slices(lab.labels(), truth, NmiNormalization::Arithmetic)?));
        }
    }
    let bars_path = out.join("nmi_bars.csv");
    let mut text = String::from("method,nmi\n");
    for (name, v) in &bars {
        text.push_str(&format!("{name},{v:?}\n"));
    }
    fs::write(&bars_path, text).map_err(|e| MlgError::io(&bars_path, e))?;

    Ok(json!({
        "command": "export-plot",
        "scatter": scatter,
        "nmi_bars": bars_path,
        "nmi": bars.iter().map(|(name, v)| json!({"method": name, "nmi": v})).collect::<Vec<_>>(),
    }))
}

/// The last two embedding columns, used for the two-dimensional scatter.
pub fn scatter_columns(q: &DMatrix<f64>) -> (usize, usize) {
    (q.ncols().saturating_sub(2), q.ncols() - 1)
}
