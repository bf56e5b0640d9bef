//! The command surface: `preprocess`, `train`, `export`.
//!
//! Every run writes its fully resolved configuration (defaults included),
//! the seed, and a format-version stamp into the output directory, so a run
//! is reproducible from its outputs alone. TSV outputs use `\t` separators,
//! `\n` line ends, and locale-independent decimal formatting.

pub mod pca;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digraph::{
    build_stack, split_link_prediction, split_nc_label_rate, split_node_classification,
    split_sign_prediction, Digraph, GraphStats, ProximityStack, TaskSplit,
};
use crate::error::{Error, Result};
use crate::model::{self, EmbeddingOutput};
use crate::train::{train, EvalReport, Task, TrainConfig};

/// Version stamp written into run directories and config echoes.
pub const FORMAT_VERSION: u32 = 1;

fn d_lr() -> f64 {
    0.01
}
fn d_dropout() -> f64 {
    0.05
}
fn d_epochs_max() -> usize {
    500
}
fn d_patience() -> usize {
    50
}
fn d_seed() -> u64 {
    42
}
fn d_k() -> usize {
    2
}
fn d_dims() -> Vec<usize> {
    vec![64, 32]
}
fn d_lambda() -> f64 {
    1.0
}
fn d_w_g() -> f64 {
    1.0
}
fn d_w_r() -> f64 {
    0.5
}
fn d_negative_ratio() -> usize {
    1
}
fn d_radius() -> f64 {
    2.0
}
fn d_temperature() -> f64 {
    1.0
}
fn d_true() -> bool {
    true
}
fn d_labeled_per_class() -> usize {
    20
}
fn d_val_size() -> usize {
    500
}
fn d_out_dir() -> PathBuf {
    PathBuf::from("dhypr_out")
}

/// A run configuration document. Unknown keys are rejected at parse time;
/// the resolved form (all defaults filled) is written next to run outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub edges: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,

    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    #[serde(default = "d_epochs_max")]
    pub epochs_max: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_w_g")]
    pub w_g: f64,
    #[serde(default = "d_w_r")]
    pub w_r: f64,
    #[serde(default = "d_negative_ratio")]
    pub negative_ratio: usize,
    #[serde(default = "d_radius")]
    pub r: f64,
    #[serde(default = "d_temperature")]
    pub t: f64,
    #[serde(default = "d_true")]
    pub deterministic: bool,

    /// Node-classification quota mode (ignored when `label_rate` is set).
    #[serde(default = "d_labeled_per_class")]
    pub labeled_per_class: usize,
    #[serde(default = "d_val_size")]
    pub val_size: usize,
    #[serde(default)]
    pub label_rate: Option<f64>,
}

impl RunConfig {
    /// Parses a run configuration. A `resolved_config.json` stamp written by
    /// a previous run is accepted too, so a run reproduces from its output
    /// directory alone.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if let Ok(stamp) = serde_json::from_str::<RunStamp>(&text) {
            return Ok(stamp.config);
        }
        serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            task: self.task,
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            epochs_max: self.epochs_max,
            patience: self.patience,
            seed: self.seed,
            k: self.k,
            dims: self.dims.clone(),
            lambda: self.lambda,
            w_g: self.w_g,
            w_r: self.w_r,
            negative_ratio: self.negative_ratio,
            r: self.r,
            t: self.t,
            deterministic: self.deterministic,
        }
    }

    fn load_graph(&self, relative_to: Option<&Path>) -> Result<Digraph> {
        Digraph::load(
            &join_base(&self.edges, relative_to),
            self.features.as_ref().map(|p| join_base(p, relative_to)).as_deref(),
            self.labels.as_ref().map(|p| join_base(p, relative_to)).as_deref(),
        )
    }
}

fn join_base(p: &Path, base: Option<&Path>) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn canonical(p: &Path, base: Option<&Path>) -> PathBuf {
    let joined = join_base(p, base);
    std::fs::canonicalize(&joined).unwrap_or(joined)
}

/// Resolved-config wrapper stored in every run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunStamp {
    pub format_version: u32,
    pub seed: u64,
    pub config: RunConfig,
}

/// `preprocess`: builds and caches the proximity stack of the full graph and
/// echoes basic statistics.
pub fn cmd_preprocess(edge_path: &Path, k: usize, out_dir: &Path) -> Result<GraphStats> {
    let g = Digraph::load(edge_path, None, None)?;
    let stack = build_stack(&g, k)?;
    std::fs::create_dir_all(out_dir)?;
    stack.save(&out_dir.join("stack.bin"))?;
    let stats = g.stats();
    std::fs::write(
        out_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats)? + "\n",
    )?;
    write_node_map(out_dir, &g)?;
    Ok(stats)
}

fn write_node_map(out_dir: &Path, g: &Digraph) -> Result<()> {
    let mut s = String::from("dense_id\toriginal_id\n");
    for (dense, orig) in g.node_ids.iter().enumerate() {
        s.push_str(&format!("{dense}\t{orig}\n"));
    }
    std::fs::write(out_dir.join("node_map.tsv"), s)?;
    Ok(())
}

fn make_split(cfg: &RunConfig, g: &Digraph) -> Result<TaskSplit> {
    Ok(match cfg.task {
        Task::Lp => TaskSplit::Lp(split_link_prediction(g, cfg.seed)?),
        Task::Nc => TaskSplit::Nc(match cfg.label_rate {
            Some(rate) => split_nc_label_rate(g, rate, cfg.val_size, cfg.seed)?,
            None => split_node_classification(g, cfg.labeled_per_class, cfg.val_size, cfg.seed)?,
        }),
        Task::Sp => TaskSplit::Sp(split_sign_prediction(g, cfg.seed)?),
    })
}

/// The aggregation stack for training: link prediction must only see the
/// retained training edges, the classification tasks see the full graph.
fn make_stack(cfg: &RunConfig, g: &Digraph, split: &TaskSplit) -> Result<(ProximityStack, Digraph)> {
    match split {
        TaskSplit::Lp(s) => {
            let train_g = g.with_edges(s.train_edges.clone())?;
            let stack = build_stack(&train_g, cfg.k)?;
            Ok((stack, train_g))
        }
        _ => Ok((build_stack(g, cfg.k)?, g.clone())),
    }
}

/// `train`: split, build, fit, and write checkpoint + report + stamps.
pub fn cmd_train(mut cfg: RunConfig, config_dir: Option<&Path>) -> Result<EvalReport> {
    cfg.train_config().validate()?;
    let g = cfg.load_graph(config_dir)?;
    let split = make_split(&cfg, &g)?;
    let (stack, _train_graph) = make_stack(&cfg, &g, &split)?;

    let (params, report) = train(&g, &stack, &split, &cfg.train_config())?;

    let out_dir = match config_dir {
        Some(base) if cfg.out_dir.is_relative() => base.join(&cfg.out_dir),
        _ => cfg.out_dir.clone(),
    };
    std::fs::create_dir_all(&out_dir)?;
    // stamp absolute paths so the resolved config reruns from anywhere
    cfg.edges = canonical(&cfg.edges, config_dir);
    cfg.features = cfg.features.as_ref().map(|p| canonical(p, config_dir));
    cfg.labels = cfg.labels.as_ref().map(|p| canonical(p, config_dir));
    cfg.out_dir = std::path::absolute(&out_dir).unwrap_or_else(|_| out_dir.clone());
    let stamp = RunStamp {
        format_version: FORMAT_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
    };
    let stamp_json = serde_json::to_string_pretty(&stamp)?;
    std::fs::write(out_dir.join("resolved_config.json"), stamp_json.clone() + "\n")?;
    write_node_map(&out_dir, &g)?;
    model::save_checkpoint(&out_dir.join("checkpoint.bin"), &stamp_json, &params)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

/// `export`: recomputes embeddings from a checkpoint and writes
/// `embeddings.tsv` (tangent coordinates), `mass.tsv`, and `projection.tsv`
/// (2-D PCA plus label column when labels exist).
pub fn cmd_export(
    checkpoint: &Path,
    edge_path: &Path,
    feature_path: Option<&Path>,
    label_path: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let (echo, params) = model::load_checkpoint(checkpoint)?;
    let stamp: RunStamp =
        serde_json::from_str(&echo).map_err(|e| Error::Format(format!("config echo: {e}")))?;
    let cfg = stamp.config;

    let g = Digraph::load(edge_path, feature_path, label_path)?;
    if g.features.cols != params.config.feature_dim {
        return Err(Error::contract(format!(
            "graph features have dimension {}, checkpoint expects {}",
            g.features.cols, params.config.feature_dim
        )));
    }
    let split = make_split(&cfg, &g)?;
    let (stack, graph_for_forward) = make_stack(&cfg, &g, &split)?;
    if stack.n() != g.n {
        return Err(Error::contract(format!(
            "checkpoint/graph mismatch: stack covers {} nodes, graph has {}",
            stack.n(),
            g.n
        )));
    }
    let emb = model::compute_embedding(&graph_for_forward.features, &stack, &params)?;

    std::fs::create_dir_all(out_dir)?;
    write_embedding_files(out_dir, &g, &emb)?;
    Ok(())
}

pub fn write_embedding_files(out_dir: &Path, g: &Digraph, emb: &EmbeddingOutput) -> Result<()> {
    let d = emb.z_tangent.cols;
    let mut et = String::new();
    for i in 0..g.n {
        et.push_str(&g.node_ids[i].to_string());
        for j in 0..d {
            et.push('\t');
            et.push_str(&format!("{}", emb.z_tangent.at(i, j)));
        }
        et.push('\n');
    }
    std::fs::write(out_dir.join("embeddings.tsv"), et)?;

    let mut mt = String::new();
    for i in 0..g.n {
        mt.push_str(&format!("{}\t{}\n", g.node_ids[i], emb.mass[i]));
    }
    std::fs::write(out_dir.join("mass.tsv"), mt)?;

    let proj = pca::project_2d(g.n, d, &emb.z_tangent.data);
    let mut pt = String::new();
    for i in 0..g.n {
        pt.push_str(&format!(
            "{}\t{}\t{}",
            g.node_ids[i], proj[i][0], proj[i][1]
        ));
        if let Some(labels) = &g.labels {
            pt.push_str(&format!("\t{}", labels[i]));
        }
        pt.push('\n');
    }
    std::fs::write(out_dir.join("projection.tsv"), pt)?;
    Ok(())
}

/// Machine-readable error envelope printed by the binary on failure.
#[derive(Debug, Serialize)]
pub struct ErrorEnvelope {
    pub error: BTreeMap<String, String>,
}

pub fn error_envelope(e: &Error) -> (i32, String) {
    let kind = match e {
        Error::Config(_) => "config",
        Error::Contract(_) => "contract",
        Error::Ingestion { .. } => "ingestion",
        Error::NonFinite { .. } => "numeric",
        Error::Training { .. } => "training",
        Error::UndefinedMetric(_) => "metric",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
    let mut m = BTreeMap::new();
    m.insert("kind".to_string(), kind.to_string());
    m.insert("message".to_string(), e.to_string());
    let body = serde_json::to_string(&ErrorEnvelope { error: m }).unwrap_or_else(|_| {
        format!("{{\"error\":{{\"kind\":\"{kind}\",\"message\":\"unprintable\"}}}}")
    });
    (code, body)
}
