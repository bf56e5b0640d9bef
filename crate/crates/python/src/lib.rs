//! Python bindings: the Poincaré-ball kernel, digraph construction with
//! proximity stacks, the decoders, rank metrics, and a one-call training
//! entry point. Built as the `_dhypr` extension module.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dhypr_core::decode::{self, DecoderConfig};
use dhypr_core::digraph::{
    build_stack, split_link_prediction, split_nc_label_rate, split_node_classification,
    split_sign_prediction, synth, Digraph, ProximityKind, TaskSplit,
};
use dhypr_core::geometry::{self, Curvature};
use dhypr_core::metrics;
use dhypr_core::model::compute_embedding;
use dhypr_core::tensor::Tensor;
use dhypr_core::train::{train, Task, TrainConfig};

fn py_err(e: dhypr_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn curvature(c: f64) -> PyResult<Curvature> {
    Curvature::new(c).map_err(py_err)
}

/// Möbius addition on the ball with parameter `c`.
#[pyfunction]
fn mobius_add(x: Vec<f64>, y: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    geometry::mobius_add(&x, &y, curvature(c)?).map_err(py_err)
}

/// Möbius scalar multiplication `r ⊗ x` (with `r ⊗ 0 = 0`).
#[pyfunction]
fn mobius_scalar_mul(r: f64, x: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    Ok(geometry::mobius_scalar_mul(r, &x, curvature(c)?))
}

/// Exponential map at the origin.
#[pyfunction]
fn exp_map_origin(v: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    Ok(geometry::exp_map_origin(&v, curvature(c)?))
}

/// Logarithmic map at the origin.
#[pyfunction]
fn log_map_origin(x: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    Ok(geometry::log_map_origin(&x, curvature(c)?))
}

/// Induced hyperbolic distance.
#[pyfunction]
fn poincare_distance(x: Vec<f64>, y: Vec<f64>, c: f64) -> PyResult<f64> {
    geometry::distance(&x, &y, curvature(c)?).map_err(py_err)
}

/// Projection onto the ball's numerical shell.
#[pyfunction]
fn project_to_ball(x: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    geometry::project_to_ball(&x, curvature(c)?).map_err(py_err)
}

/// Symmetric Fermi-Dirac edge likelihood.
#[pyfunction]
#[pyo3(signature = (zi, zj, c, r=2.0, t=1.0))]
fn fermi_dirac_score(zi: Vec<f64>, zj: Vec<f64>, c: f64, r: f64, t: f64) -> PyResult<f64> {
    let cfg = DecoderConfig {
        radius: r,
        temperature: t,
        ..DecoderConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    decode::fermi_dirac_score(&zi, &zj, curvature(c)?, &cfg).map_err(py_err)
}

/// Direction-sensitive gravity edge likelihood using the target mass.
#[pyfunction]
#[pyo3(signature = (zi, zj, mass_j, c, lam=1.0))]
fn gravity_score(zi: Vec<f64>, zj: Vec<f64>, mass_j: f64, c: f64, lam: f64) -> PyResult<f64> {
    let cfg = DecoderConfig {
        lambda: lam,
        ..DecoderConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    decode::gravity_score(&zi, &zj, mass_j, curvature(c)?, &cfg).map_err(py_err)
}

/// Exact rank-based AUC (ties count one half).
#[pyfunction]
fn auc(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<f64> {
    metrics::auc(&labels, &scores).map_err(py_err)
}

/// Average precision with stable tie-breaking.
#[pyfunction]
fn average_precision(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<f64> {
    metrics::average_precision(&labels, &scores).map_err(py_err)
}

/// Exact-match accuracy.
#[pyfunction]
fn accuracy(truth: Vec<usize>, predictions: Vec<usize>) -> PyResult<f64> {
    metrics::accuracy(&truth, &predictions).map_err(py_err)
}

/// A directed graph with optional features, node labels, and edge signs.
#[pyclass(name = "Digraph")]
struct PyDigraph {
    inner: Digraph,
}

#[pymethods]
impl PyDigraph {
    #[new]
    #[pyo3(signature = (n, edges, features=None, labels=None, edge_signs=None))]
    fn new(
        n: usize,
        edges: Vec<(u32, u32)>,
        features: Option<Vec<Vec<f64>>>,
        labels: Option<Vec<i64>>,
        edge_signs: Option<Vec<i64>>,
    ) -> PyResult<Self> {
        let features = features
            .map(|rows| {
                let cols = rows.first().map(|r| r.len()).unwrap_or(0);
                Tensor::new(rows.len(), cols, rows.concat())
            })
            .transpose()
            .map_err(py_err)?;
        let inner = Digraph::new(n, edges, features, labels, edge_signs).map_err(py_err)?;
        Ok(PyDigraph { inner })
    }

    /// Loads from an edge-list file with optional feature CSV / label file.
    #[staticmethod]
    #[pyo3(signature = (edge_path, feature_path=None, label_path=None))]
    fn load(
        edge_path: String,
        feature_path: Option<String>,
        label_path: Option<String>,
    ) -> PyResult<Self> {
        let inner = Digraph::load(
            Path::new(&edge_path),
            feature_path.as_deref().map(Path::new),
            label_path.as_deref().map(Path::new),
        )
        .map_err(py_err)?;
        Ok(PyDigraph { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges.clone()
    }

    fn stats(&self) -> BTreeMap<String, f64> {
        let s = self.inner.stats();
        BTreeMap::from([
            ("nodes".to_string(), s.nodes as f64),
            ("edges".to_string(), s.edges as f64),
            ("reciprocity".to_string(), s.reciprocity),
            ("avg_degree".to_string(), s.avg_degree),
            ("max_degree".to_string(), s.max_degree as f64),
        ])
    }

    /// Entries of one k-order proximity matrix as `(i, j)` pairs. `kind` is
    /// one of `"diffusion_in"`, `"diffusion_out"`, `"common_in"`,
    /// `"common_out"`.
    fn proximity_entries(&self, kind: &str, k: usize) -> PyResult<Vec<(usize, usize)>> {
        let pk = match kind {
            "diffusion_in" => ProximityKind::DiffusionIn,
            "diffusion_out" => ProximityKind::DiffusionOut,
            "common_in" => ProximityKind::CommonIn,
            "common_out" => ProximityKind::CommonOut,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown proximity kind `{other}`"
                )))
            }
        };
        let stack = build_stack(&self.inner, k).map_err(py_err)?;
        Ok(stack.matrix(pk, k).entries().collect())
    }
}

/// Seeded two-block digraph with hub-structured intra-block edges.
#[pyfunction]
#[pyo3(signature = (n, edges_per_node=10, p_out=0.005, seed=0))]
fn two_block_hub_digraph(n: usize, edges_per_node: usize, p_out: f64, seed: u64) -> PyDigraph {
    PyDigraph {
        inner: synth::two_block_hub_digraph(n, edges_per_node, p_out, seed),
    }
}

/// Seeded labeled digraph with class-correlated features.
#[pyfunction]
#[pyo3(signature = (n, classes=3, p_in=0.15, p_out=0.01, feat_dim=8, seed=0))]
fn labeled_blocks_digraph(
    n: usize,
    classes: usize,
    p_in: f64,
    p_out: f64,
    feat_dim: usize,
    seed: u64,
) -> PyDigraph {
    PyDigraph {
        inner: synth::labeled_blocks_digraph(n, classes, p_in, p_out, feat_dim, seed),
    }
}

/// Training outcome: metrics, history, and the final node embedding.
#[pyclass(name = "TrainResult")]
struct PyTrainResult {
    #[pyo3(get)]
    metrics: BTreeMap<String, f64>,
    #[pyo3(get)]
    best_epoch: usize,
    #[pyo3(get)]
    history: Vec<(usize, f64, f64)>,
    embedding: Vec<Vec<f64>>,
    mass: Vec<f64>,
    #[pyo3(get)]
    curvature: f64,
}

#[pymethods]
impl PyTrainResult {
    /// Tangent-space node embedding, one row per node.
    fn embedding(&self) -> Vec<Vec<f64>> {
        self.embedding.clone()
    }

    /// Learned node mass, one value per node.
    fn mass(&self) -> Vec<f64> {
        self.mass.clone()
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    task: Task,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    dropout: Option<f64>,
    epochs_max: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    k: Option<usize>,
    dims: Option<Vec<usize>>,
    lambda: Option<f64>,
    w_g: Option<f64>,
    w_r: Option<f64>,
    negative_ratio: Option<usize>,
    r: Option<f64>,
    t: Option<f64>,
    labeled_per_class: Option<usize>,
    val_size: Option<usize>,
    label_rate: Option<f64>,
}

/// Runs one task end to end. `config_json` must name the task (`"lp"`,
/// `"nc"`, or `"sp"`); every other key overrides a default.
#[pyfunction]
fn train_from_json(py: Python<'_>, graph: &PyDigraph, config_json: &str) -> PyResult<PyTrainResult> {
    let ov: Overrides =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut cfg = TrainConfig::defaults_for(ov.task);
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = ov.$field { cfg.$field = v; })*
        };
    }
    apply!(
        lr,
        weight_decay,
        dropout,
        epochs_max,
        patience,
        seed,
        k,
        dims,
        lambda,
        w_g,
        w_r,
        negative_ratio,
        r,
        t
    );

    py.detach(|| {
        let g = &graph.inner;
        let split = match cfg.task {
            Task::Lp => TaskSplit::Lp(split_link_prediction(g, cfg.seed).map_err(py_err)?),
            Task::Nc => TaskSplit::Nc(match ov.label_rate {
                Some(rate) => {
                    split_nc_label_rate(g, rate, ov.val_size.unwrap_or(500), cfg.seed)
                        .map_err(py_err)?
                }
                None => split_node_classification(
                    g,
                    ov.labeled_per_class.unwrap_or(20),
                    ov.val_size.unwrap_or(500),
                    cfg.seed,
                )
                .map_err(py_err)?,
            }),
            Task::Sp => TaskSplit::Sp(split_sign_prediction(g, cfg.seed).map_err(py_err)?),
        };
        let (stack, forward_graph) = match &split {
            TaskSplit::Lp(s) => {
                let train_g = g.with_edges(s.train_edges.clone()).map_err(py_err)?;
                let stack = build_stack(&train_g, cfg.k).map_err(py_err)?;
                (stack, train_g)
            }
            _ => (build_stack(g, cfg.k).map_err(py_err)?, g.clone()),
        };
        let (params, report) = train(g, &stack, &split, &cfg).map_err(py_err)?;
        let emb = compute_embedding(&forward_graph.features, &stack, &params).map_err(py_err)?;
        let embedding = (0..emb.z_tangent.rows)
            .map(|i| emb.z_tangent.row_slice(i).to_vec())
            .collect();
        Ok(PyTrainResult {
            metrics: report.metrics.into_iter().collect(),
            best_epoch: report.best_epoch,
            history: report
                .history
                .iter()
                .map(|h| (h.epoch, h.loss, h.val_metric))
                .collect(),
            embedding,
            mass: emb.mass,
            curvature: emb.curvature,
        })
    })
}

#[pymodule]
fn _dhypr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDigraph>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(mobius_add, m)?)?;
    m.add_function(wrap_pyfunction!(mobius_scalar_mul, m)?)?;
    m.add_function(wrap_pyfunction!(exp_map_origin, m)?)?;
    m.add_function(wrap_pyfunction!(log_map_origin, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_distance, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_ball, m)?)?;
    m.add_function(wrap_pyfunction!(fermi_dirac_score, m)?)?;
    m.add_function(wrap_pyfunction!(gravity_score, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(two_block_hub_digraph, m)?)?;
    m.add_function(wrap_pyfunction!(labeled_blocks_digraph, m)?)?;
    m.add_function(wrap_pyfunction!(train_from_json, m)?)?;
    Ok(())
}
