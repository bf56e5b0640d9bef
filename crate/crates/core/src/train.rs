//! The seeded training loop: forward, loss, backward, Adam, early stopping
//! on the validation metric, and the evaluation paths for all three tasks.
//!
//! One ChaCha20 stream seeded from the config drives parameter
//! initialization, per-epoch negative resampling, and dropout masks, so two
//! runs with the same seed and config are bit-identical in deterministic
//! mode. Validation metrics are always computed in evaluation mode (no
//! dropout); link-prediction pairs are ranked by the joint decoder
//! log-likelihood `log p_f + w_g·log p_g`, the same weighting the loss
//! optimizes for positive pairs.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{self, DecoderConfig, PROB_EPS};
use crate::digraph::{Digraph, ProximityStack, TaskSplit};
use crate::error::{Error, Result};
use crate::geometry::Curvature;
use crate::metrics;
use crate::model::{
    self, forward_full, stage_params, EmbeddingOutput, ForwardSettings, ModelConfig, ModelParams,
};
use crate::tensor::{Adam, AdamConfig, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Lp,
    Nc,
    Sp,
}

/// Everything the training loop needs. `dims` are the per-layer output
/// sizes; the final entry is the embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs_max: usize,
    pub patience: usize,
    pub seed: u64,
    pub k: usize,
    pub dims: Vec<usize>,
    pub lambda: f64,
    pub w_g: f64,
    pub w_r: f64,
    pub negative_ratio: usize,
    pub r: f64,
    pub t: f64,
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn defaults_for(task: Task) -> Self {
        TrainConfig {
            task,
            lr: 0.01,
            weight_decay: 0.0,
            dropout: 0.05,
            epochs_max: 500,
            patience: 50,
            seed: 42,
            k: 2,
            dims: vec![64, 32],
            lambda: 1.0,
            w_g: 1.0,
            w_r: 0.5,
            negative_ratio: 1,
            r: 2.0,
            t: 1.0,
            deterministic: true,
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            radius: self.r,
            temperature: self.t,
            lambda: self.lambda,
            w_g: self.w_g,
            w_r: self.w_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.lr.is_nan() {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.patience < 1 {
            return Err(Error::config("patience must be >= 1".to_string()));
        }
        if self.epochs_max < 1 {
            return Err(Error::config("epochs_max must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be nonnegative".to_string()));
        }
        if self.negative_ratio < 1 {
            return Err(Error::config("negative_ratio must be >= 1".to_string()));
        }
        if self.dims.is_empty() {
            return Err(Error::config("dims must name at least one layer".to_string()));
        }
        self.decoder().validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
}

/// Training outcome: final test metrics, the per-epoch history, the epoch
/// whose parameters were kept, and wall-clock seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub wall_clock_secs: f64,
}

/// Runs the configured task end to end and returns the best-validation
/// parameters with their report.
pub fn train(
    g: &Digraph,
    stack: &ProximityStack,
    split: &TaskSplit,
    cfg: &TrainConfig,
) -> Result<(ModelParams, EvalReport)> {
    cfg.validate()?;
    match (cfg.task, split) {
        (Task::Lp, TaskSplit::Lp(s)) => train_impl(g, stack, cfg, LpTask::new(g, s)?),
        (Task::Nc, TaskSplit::Nc(s)) => train_impl(g, stack, cfg, NcTask::new(g, s)?),
        (Task::Sp, TaskSplit::Sp(s)) => train_impl(g, stack, cfg, SpTask::new(g, s)?),
        _ => Err(Error::contract(
            "task/split mismatch between config and provided split".to_string(),
        )),
    }
}

/// Task-specific plumbing: which edges feed the self-supervised term, how
/// the classifier head is wired, and how validation/test are scored.
trait TaskDriver {
    /// Positives of the self-supervised link term.
    fn positives(&self) -> &[(u32, u32)];
    /// Edges the negative sampler must avoid.
    fn forbidden(&self) -> &HashSet<(u32, u32)>;
    /// Classifier head spec `(input_multiplier, classes)` when the task has one.
    fn classifier(&self) -> Option<(usize, usize)>;
    /// The scalar training loss for this epoch's negatives.
    fn loss(
        &self,
        tape: &mut Tape,
        emb: &model::ModelOutput,
        staged: &model::StagedParams,
        neg: &[(u32, u32)],
        dec: &DecoderConfig,
    ) -> Result<crate::tensor::TensorId>;
    /// Validation metric (higher is better).
    fn validate(&self, emb: &EmbeddingOutput, params: &ModelParams, dec: &DecoderConfig)
        -> Result<f64>;
    /// Final test metrics.
    fn test(
        &self,
        emb: &EmbeddingOutput,
        params: &ModelParams,
        dec: &DecoderConfig,
    ) -> Result<BTreeMap<String, f64>>;
    /// Name of the validation metric in the report.
    fn val_metric_name(&self) -> &'static str;
}

fn train_impl<D: TaskDriver>(
    g: &Digraph,
    stack: &ProximityStack,
    cfg: &TrainConfig,
    driver: D,
) -> Result<(ModelParams, EvalReport)> {
    let started = Instant::now();
    let dec = cfg.decoder();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    let mconfig = ModelConfig {
        feature_dim: g.features.cols,
        layer_dims: cfg.dims.clone(),
        k_max: cfg.k,
    };
    let mut params = ModelParams::init(mconfig, driver.classifier(), &mut rng)?;
    let lens: Vec<usize> = params.arrays().iter().map(|a| a.len()).collect();
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &lens);

    let mut history = Vec::new();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<ModelParams> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 1..=cfg.epochs_max {
        let negatives = decode::sample_training_negatives(
            &mut rng,
            g.n,
            driver.forbidden(),
            cfg.negative_ratio * driver.positives().len(),
        )?;

        let mut tape = Tape::new();
        let features = tape.constant(g.features.clone());
        let staged = stage_params(&mut tape, &params, true);
        let settings = ForwardSettings {
            dropout: cfg.dropout,
            training: true,
        };
        let emb = forward_full(&mut tape, features, stack, &staged, &params, settings, &mut rng)
            .map_err(|e| wrap_epoch(e, epoch))?;
        let loss = driver
            .loss(&mut tape, &emb, &staged, &negatives, &dec)
            .map_err(|e| wrap_epoch(e, epoch))?;
        let loss_value = tape.value(loss).data[0];
        if !loss_value.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("loss diverged to {loss_value}"),
            });
        }

        let grads = tape.backward(loss).map_err(|e| wrap_epoch(e, epoch))?;
        let grad_vecs: Vec<Vec<f64>> = staged
            .leaves
            .iter()
            .map(|&id| grads.get_or_zero(id).data)
            .collect();
        {
            let mut arrays = params.arrays_mut();
            adam.step(&mut arrays, &grad_vecs)?;
        }
        if !params.all_finite() {
            return Err(Error::Training {
                epoch,
                msg: "parameters became non-finite after the optimizer step".to_string(),
            });
        }

        let eval_emb = model::compute_embedding(&g.features, stack, &params)?;
        let val_metric = driver.validate(&eval_emb, &params, &dec)?;
        history.push(EpochRecord {
            epoch,
            loss: loss_value,
            val_metric,
        });

        if val_metric > best_metric {
            best_metric = val_metric;
            best_epoch = epoch;
            best_params = Some(params.clone());
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= cfg.patience {
                break;
            }
        }
    }

    let best_params = best_params.ok_or_else(|| Error::Training {
        epoch: 0,
        msg: "no epoch completed".to_string(),
    })?;

    let eval_emb = model::compute_embedding(&g.features, stack, &best_params)?;
    let mut metrics = driver.test(&eval_emb, &best_params, &dec)?;
    metrics.insert(
        format!("val_{}", driver.val_metric_name()),
        driver.validate(&eval_emb, &best_params, &dec)?,
    );

    let report = EvalReport {
        metrics,
        history,
        best_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

fn wrap_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { op } => Error::Training {
            epoch,
            msg: format!("non-finite value in `{op}`"),
        },
        other => other,
    }
}

/// Joint decoder log-likelihood used to rank candidate edges.
pub fn pair_score(
    emb: &EmbeddingOutput,
    pair: (u32, u32),
    dec: &DecoderConfig,
) -> Result<f64> {
    let c = Curvature::new(emb.curvature)?;
    let zi = emb.z_hyper.row_slice(pair.0 as usize);
    let zj = emb.z_hyper.row_slice(pair.1 as usize);
    let pf = decode::fermi_dirac_score(zi, zj, c, dec)?;
    let pg = decode::gravity_score(zi, zj, emb.mass[pair.1 as usize], c, dec)?;
    Ok(pf.max(PROB_EPS).ln() + dec.w_g * pg.max(PROB_EPS).ln())
}

fn score_pairs(
    emb: &EmbeddingOutput,
    pos: &[(u32, u32)],
    neg: &[(u32, u32)],
    dec: &DecoderConfig,
) -> Result<(Vec<bool>, Vec<f64>)> {
    let mut labels = Vec::with_capacity(pos.len() + neg.len());
    let mut scores = Vec::with_capacity(pos.len() + neg.len());
    for &p in pos {
        labels.push(true);
        scores.push(pair_score(emb, p, dec)?);
    }
    for &p in neg {
        labels.push(false);
        scores.push(pair_score(emb, p, dec)?);
    }
    Ok((labels, scores))
}

/// Argmax class predictions from a plain affine head over tangent rows.
fn classify_rows(inputs: Vec<Vec<f64>>, params: &ModelParams) -> Result<Vec<usize>> {
    let head = params
        .classifier
        .as_ref()
        .ok_or_else(|| Error::contract("model has no classifier head".to_string()))?;
    let mut out = Vec::with_capacity(inputs.len());
    for row in inputs {
        if row.len() != head.input_dim {
            return Err(Error::contract(format!(
                "classifier input has {} features, expected {}",
                row.len(),
                head.input_dim
            )));
        }
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..head.classes {
            let mut v = head.bias[c];
            for (f, &x) in row.iter().enumerate() {
                v += x * head.weight[f * head.classes + c];
            }
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}

struct LpTask {
    train_edges: Vec<(u32, u32)>,
    forbidden: HashSet<(u32, u32)>,
    val_pos: Vec<(u32, u32)>,
    val_neg: Vec<(u32, u32)>,
    test_pos: Vec<(u32, u32)>,
    test_neg: Vec<(u32, u32)>,
}

impl LpTask {
    fn new(_g: &Digraph, split: &crate::digraph::LpSplit) -> Result<Self> {
        if split.train_edges.is_empty() {
            return Err(Error::config("empty training edge set".to_string()));
        }
        Ok(LpTask {
            forbidden: split.train_edges.iter().copied().collect(),
            train_edges: split.train_edges.clone(),
            val_pos: split.val_pos.clone(),
            val_neg: split.val_neg.clone(),
            test_pos: split.test_pos.clone(),
            test_neg: split.test_neg.clone(),
        })
    }
}

impl TaskDriver for LpTask {
    fn positives(&self) -> &[(u32, u32)] {
        &self.train_edges
    }

    fn forbidden(&self) -> &HashSet<(u32, u32)> {
        &self.forbidden
    }

    fn classifier(&self) -> Option<(usize, usize)> {
        None
    }

    fn loss(
        &self,
        tape: &mut Tape,
        emb: &model::ModelOutput,
        _staged: &model::StagedParams,
        neg: &[(u32, u32)],
        dec: &DecoderConfig,
    ) -> Result<crate::tensor::TensorId> {
        decode::lp_loss(tape, emb, &self.train_edges, neg, dec)
    }

    fn validate(
        &self,
        emb: &EmbeddingOutput,
        _params: &ModelParams,
        dec: &DecoderConfig,
    ) -> Result<f64> {
        let (labels, scores) = score_pairs(emb, &self.val_pos, &self.val_neg, dec)?;
        metrics::auc(&labels, &scores)
    }

    fn test(
        &self,
        emb: &EmbeddingOutput,
        _params: &ModelParams,
        dec: &DecoderConfig,
    ) -> Result<BTreeMap<String, f64>> {
        let (labels, scores) = score_pairs(emb, &self.test_pos, &self.test_neg, dec)?;
        let mut out = BTreeMap::new();
        out.insert("auc".to_string(), metrics::auc(&labels, &scores)?);
        out.insert(
            "ap".to_string(),
            metrics::average_precision(&labels, &scores)?,
        );
        Ok(out)
    }

    fn val_metric_name(&self) -> &'static str {
        "auc"
    }
}

struct NcTask {
    edges: Vec<(u32, u32)>,
    forbidden: HashSet<(u32, u32)>,
    classes: usize,
    dense_labels: Vec<usize>,
    train_nodes: Vec<u32>,
    val_nodes: Vec<u32>,
    test_nodes: Vec<u32>,
}

impl NcTask {
    fn new(g: &Digraph, split: &crate::digraph::NcSplit) -> Result<Self> {
        let (classes, dense_labels) = g.class_index()?;
        if split.train_nodes.is_empty() {
            return Err(Error::config("empty training node set".to_string()));
        }
        Ok(NcTask {
            edges: g.edges.clone(),
            forbidden: g.edge_set(),
            classes: classes.len(),
            dense_labels,
            train_nodes: split.train_nodes.clone(),
            val_nodes: split.val_nodes.clone(),
            test_nodes: split.test_nodes.clone(),
        })
    }

    fn accuracy_on(
        &self,
        nodes: &[u32],
        emb: &EmbeddingOutput,
        params: &ModelParams,
    ) -> Result<f64> {
        let inputs: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&i| emb.z_tangent.row_slice(i as usize).to_vec())
            .collect();
        let preds = classify_rows(inputs, params)?;
        let truth: Vec<usize> = nodes
            .iter()
            .map(|&i| self.dense_labels[i as usize])
            .collect();
        metrics::accuracy(&truth, &preds)
    }
}

impl TaskDriver for NcTask {
    fn positives(&self) -> &[(u32, u32)] {
        &self.edges
    }

    fn forbidden(&self) -> &HashSet<(u32, u32)> {
        &self.forbidden
    }

    fn classifier(&self) -> Option<(usize, usize)> {
        Some((1, self.classes))
    }

    fn loss(
        &self,
        tape: &mut Tape,
        emb: &model::ModelOutput,
        staged: &model::StagedParams,
        neg: &[(u32, u32)],
        dec: &DecoderConfig,
    ) -> Result<crate::tensor::TensorId> {
        let (w, b) = staged.classifier.expect("NC stages a classifier head");
        let idx: Vec<usize> = self.train_nodes.iter().map(|&i| i as usize).collect();
        let input = tape.gather_rows(emb.z_tangent, std::rc::Rc::new(idx))?;
        let logprobs = decode::classifier_logprobs(tape, input, w, b)?;
        let labels: Vec<usize> = self
            .train_nodes
            .iter()
            .map(|&i| self.dense_labels[i as usize])
            .collect();
        let class_loss = decode::nll_loss(tape, logprobs, &labels)?;
        decode::nc_sp_loss(tape, class_loss, emb, &self.edges, neg, dec)
    }

    fn validate(
        &self,
        emb: &EmbeddingOutput,
        params: &ModelParams,
        _dec: &DecoderConfig,
    ) -> Result<f64> {
        self.accuracy_on(&self.val_nodes, emb, params)
    }

    fn test(
        &self,
        emb: &EmbeddingOutput,
        params: &ModelParams,
        _dec: &DecoderConfig,
    ) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        out.insert(
            "accuracy".to_string(),
            self.accuracy_on(&self.test_nodes, emb, params)?,
        );
        Ok(out)
    }

    fn val_metric_name(&self) -> &'static str {
        "accuracy"
    }
}

struct SpTask {
    edges: Vec<(u32, u32)>,
    forbidden: HashSet<(u32, u32)>,
    classes: usize,
    dense_signs: Vec<usize>,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl SpTask {
    fn new(g: &Digraph, split: &crate::digraph::SpSplit) -> Result<Self> {
        let (classes, dense_signs) = g.sign_index()?;
        Ok(SpTask {
            edges: g.edges.clone(),
            forbidden: g.edge_set(),
            classes: classes.len(),
            dense_signs,
            train_idx: split.train_edges.clone(),
            val_idx: split.val_edges.clone(),
            test_idx: split.test_edges.clone(),
        })
    }

    fn pair_input(&self, emb: &EmbeddingOutput, edge: usize) -> Vec<f64> {
        let (i, j) = self.edges[edge];
        let mut row = emb.z_tangent.row_slice(i as usize).to_vec();
        row.extend_from_slice(emb.z_tangent.row_slice(j as usize));
        row
    }

    fn accuracy_on(
        &self,
        idx: &[usize],
        emb: &EmbeddingOutput,
        params: &ModelParams,
    ) -> Result<f64> {
        let inputs: Vec<Vec<f64>> = idx.iter().map(|&e| self.pair_input(emb, e)).collect();
        let preds = classify_rows(inputs, params)?;
        let truth: Vec<usize> = idx.iter().map(|&e| self.dense_signs[e]).collect();
        metrics::accuracy(&truth, &preds)
    }
}

impl TaskDriver for SpTask {
    fn positives(&self) -> &[(u32, u32)] {
        &self.edges
    }

    fn forbidden(&self) -> &HashSet<(u32, u32)> {
        &self.forbidden
    }

    fn classifier(&self) -> Option<(usize, usize)> {
        Some((2, self.classes))
    }

    fn loss(
        &self,
        tape: &mut Tape,
        emb: &model::ModelOutput,
        staged: &model::StagedParams,
        neg: &[(u32, u32)],
        dec: &DecoderConfig,
    ) -> Result<crate::tensor::TensorId> {
        let (w, b) = staged.classifier.expect("SP stages a classifier head");
        let src: Vec<usize> = self
            .train_idx
            .iter()
            .map(|&e| self.edges[e].0 as usize)
            .collect();
        let dst: Vec<usize> = self
            .train_idx
            .iter()
            .map(|&e| self.edges[e].1 as usize)
            .collect();
        let zi = tape.gather_rows(emb.z_tangent, std::rc::Rc::new(src))?;
        let zj = tape.gather_rows(emb.z_tangent, std::rc::Rc::new(dst))?;
        let input = tape.concat_cols(zi, zj)?;
        let logprobs = decode::classifier_logprobs(tape, input, w, b)?;
        let labels: Vec<usize> = self.train_idx.iter().map(|&e| self.dense_signs[e]).collect();
        let class_loss = decode::nll_loss(tape, logprobs, &labels)?;
        decode::nc_sp_loss(tape, class_loss, emb, &self.edges, neg, dec)
    }

    fn validate(
        &self,
        emb: &EmbeddingOutput,
        params: &ModelParams,
        _dec: &DecoderConfig,
    ) -> Result<f64> {
        self.accuracy_on(&self.val_idx, emb, params)
    }

    fn test(
        &self,
        emb: &EmbeddingOutput,
        params: &ModelParams,
        _dec: &DecoderConfig,
    ) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        out.insert(
            "accuracy".to_string(),
            self.accuracy_on(&self.test_idx, emb, params)?,
        );
        Ok(out)
    }

    fn val_metric_name(&self) -> &'static str {
        "accuracy"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{build_stack, split_link_prediction, synth};

    fn quick_cfg(task: Task) -> TrainConfig {
        let mut cfg = TrainConfig::defaults_for(task);
        cfg.epochs_max = 8;
        cfg.patience = 8;
        cfg.k = 1;
        cfg.dims = vec![8, 4];
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn lp_training_runs_and_reports() {
        let g = synth::two_block_digraph(30, 0.35, 0.03, 5);
        let split = split_link_prediction(&g, 5).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let cfg = quick_cfg(Task::Lp);
        let (params, report) = train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap();
        assert!(params.all_finite());
        assert!(report.metrics.contains_key("auc"));
        assert!(report.metrics.contains_key("ap"));
        for (k, v) in &report.metrics {
            assert!((0.0..=1.0).contains(v), "{k} = {v} outside [0, 1]");
        }
        assert_eq!(report.history.len(), 8);
    }

    #[test]
    fn same_seed_reproduces_run() {
        let g = synth::two_block_digraph(24, 0.35, 0.03, 2);
        let split = split_link_prediction(&g, 3).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let cfg = quick_cfg(Task::Lp);
        let split = TaskSplit::Lp(split);
        let (p1, r1) = train(&g, &stack, &split, &cfg).unwrap();
        let (p2, r2) = train(&g, &stack, &split, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.metrics, r2.metrics);
        assert_eq!(r1.best_epoch, r2.best_epoch);
    }

    #[test]
    fn patience_one_with_flat_metric_stops_at_epoch_two() {
        let g = synth::two_block_digraph(24, 0.35, 0.03, 2);
        let split = split_link_prediction(&g, 3).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let mut cfg = quick_cfg(Task::Lp);
        cfg.lr = 1e-300; // effectively frozen parameters -> flat metric
        cfg.dropout = 0.0;
        cfg.patience = 1;
        cfg.epochs_max = 50;
        let (_, report) = train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap();
        assert_eq!(report.history.len(), 2);
        assert_eq!(report.best_epoch, 1);
    }

    #[test]
    fn best_params_reproduce_reported_val_metric() {
        let g = synth::two_block_digraph(24, 0.35, 0.03, 8);
        let split = split_link_prediction(&g, 1).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let cfg = quick_cfg(Task::Lp);
        let lp = split.clone();
        let (params, report) = train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap();
        let emb = model::compute_embedding(&g.features, &stack, &params).unwrap();
        let (labels, scores) = score_pairs(&emb, &lp.val_pos, &lp.val_neg, &cfg.decoder()).unwrap();
        let re_val = metrics::auc(&labels, &scores).unwrap();
        let recorded = report.metrics["val_auc"];
        assert!(
            (re_val - recorded).abs() < 1e-12,
            "re-evaluated {re_val} vs recorded {recorded}"
        );
        let best_in_history = report
            .history
            .iter()
            .find(|h| h.epoch == report.best_epoch)
            .unwrap();
        assert!((best_in_history.val_metric - recorded).abs() < 1e-12);
    }

    #[test]
    fn nc_training_runs() {
        let g = synth::labeled_blocks_digraph(45, 3, 0.3, 0.03, 6, 4);
        let split =
            crate::digraph::split_node_classification(&g, 5, 10, 4).unwrap();
        let stack = build_stack(&g, 1).unwrap();
        let cfg = quick_cfg(Task::Nc);
        let (_, report) = train(&g, &stack, &TaskSplit::Nc(split), &cfg).unwrap();
        assert!(report.metrics.contains_key("accuracy"));
    }

    #[test]
    fn sp_training_runs() {
        let mut g = synth::two_block_digraph(40, 0.4, 0.05, 6);
        let e = g.edges.len();
        // signs correlated with direction blocks so the task is learnable
        g.edge_signs = Some(
            g.edges
                .iter()
                .map(|&(i, j)| if (i < 20) == (j < 20) { 1 } else { -1 })
                .collect(),
        );
        assert!(e >= 20);
        let split = crate::digraph::split_sign_prediction(&g, 2).unwrap();
        let stack = build_stack(&g, 1).unwrap();
        let cfg = quick_cfg(Task::Sp);
        let (params, report) = train(&g, &stack, &TaskSplit::Sp(split), &cfg).unwrap();
        assert!(report.metrics.contains_key("accuracy"));
        assert_eq!(params.classifier.as_ref().unwrap().input_dim, 8);
    }

    #[test]
    fn lp_loss_decreases_over_fifty_epochs() {
        let g = synth::two_block_digraph(20, 0.4, 0.05, 12);
        let split = split_link_prediction(&g, 2).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let mut cfg = quick_cfg(Task::Lp);
        cfg.lr = 0.05;
        cfg.dropout = 0.0;
        cfg.epochs_max = 50;
        cfg.patience = 50;
        let (_, report) = train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap();
        let first = report.history.first().unwrap().loss;
        let last = report.history.last().unwrap().loss;
        assert!(
            last < first,
            "loss should decrease over 50 epochs: {first} -> {last}"
        );
    }

    #[test]
    fn non_finite_forward_surfaces_as_training_error_with_epoch() {
        // feature magnitudes whose squares overflow f64 blow up the first
        // forward pass; the loop must report it as a training error
        let feats = crate::tensor::Tensor::new(12, 2, vec![1e308; 24]).unwrap();
        let mut g = synth::two_block_digraph(12, 0.5, 0.1, 3);
        g.features = feats;
        let split = split_link_prediction(&g, 1).unwrap();
        let train_g = g.with_edges(split.train_edges.clone()).unwrap();
        let stack = build_stack(&train_g, 1).unwrap();
        let mut cfg = quick_cfg(Task::Lp);
        cfg.dims = vec![4, 2];
        match train(&g, &stack, &TaskSplit::Lp(split), &cfg) {
            Err(Error::Training { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected a training error, got {other:?}"),
        }
    }

    #[test]
    fn task_split_mismatch_rejected() {
        let g = synth::two_block_digraph(24, 0.35, 0.03, 2);
        let split = split_link_prediction(&g, 3).unwrap();
        let stack = build_stack(&g, 1).unwrap();
        let cfg = quick_cfg(Task::Nc);
        assert!(matches!(
            train(&g, &stack, &TaskSplit::Lp(split), &cfg),
            Err(Error::Contract(_))
        ));
    }
}
