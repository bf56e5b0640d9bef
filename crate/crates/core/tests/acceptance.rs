//! Acceptance suite. Each test pins one criterion at its stated tolerance
//! and runtime budget and prints a PASS line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The final optional criterion (a real citation-network run) needs a
//! dataset on disk and is `#[ignore]`d; see the README for how to run it.

#![allow(clippy::needless_range_loop)] // index loops mirror the oracle definitions

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dhypr_core::decode::{self, DecoderConfig};
use dhypr_core::digraph::{
    build_stack, split_link_prediction, split_node_classification, synth, BinaryMatrix, Digraph,
    ProximityKind, TaskSplit,
};
use dhypr_core::geometry::{self, Curvature};
use dhypr_core::metrics;
use dhypr_core::model::{
    forward_full, save_checkpoint, stage_params, ForwardSettings, ModelConfig, ModelParams,
};
use dhypr_core::tensor::Tape;
use dhypr_core::train::{train, EvalReport, Task, TrainConfig};

fn budget(name: &str, started: Instant, limit_secs: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < limit_secs,
        "{name} exceeded its runtime budget: {elapsed:.1}s >= {limit_secs}s"
    );
    println!("acceptance {name}: PASS ({elapsed:.2}s)");
}

fn ball_point(rng: &mut ChaCha20Rng, dim: usize, c: f64, max_frac: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            let target = rng.random_range(0.0..max_frac) / c.sqrt();
            return v.iter().map(|x| x / n * target).collect();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Criterion 1 — Geometry property suite: left cancellation, scalar distributivity and
/// associativity, exp/log mutual inversion, distance symmetry/identity —
/// 1000 random samples each at c in {0.5, 1, 2}, max abs error < 1e-6.
#[test]
fn criterion_1_geometry_property_suite() {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xC1);
    for &cval in &[0.5, 1.0, 2.0] {
        let c = Curvature::new(cval).unwrap();
        for _ in 0..1000 {
            let x = ball_point(&mut rng, 4, cval, 0.9);
            let y = ball_point(&mut rng, 4, cval, 0.9);
            let r: f64 = rng.random_range(-3.0..3.0);
            let s: f64 = rng.random_range(-3.0..3.0);

            // left cancellation
            let xy = geometry::mobius_add(&x, &y, c).unwrap();
            let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
            let back = geometry::mobius_add(&neg_x, &xy, c).unwrap();
            assert!(max_abs_diff(&back, &y) < 1e-6, "left cancellation at c={cval}");

            // scalar distributivity and associativity
            let rx = geometry::mobius_scalar_mul(r, &x, c);
            let sx = geometry::mobius_scalar_mul(s, &x, c);
            let lhs = geometry::mobius_scalar_mul(r + s, &x, c);
            let rhs = geometry::mobius_add(&rx, &sx, c).unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-6, "distributivity at c={cval}");
            let lhs = geometry::mobius_scalar_mul(r, &sx, c);
            let rhs = geometry::mobius_scalar_mul(r * s, &x, c);
            assert!(max_abs_diff(&lhs, &rhs) < 1e-6, "associativity at c={cval}");

            // exp/log mutual inversion, both compositions
            let v: Vec<f64> = x.iter().map(|t| t * 3.0).collect();
            let rt = geometry::log_map_origin(&geometry::exp_map_origin(&v, c), c);
            assert!(max_abs_diff(&rt, &v) < 1e-6, "log∘exp at c={cval}");
            let rt = geometry::exp_map_origin(&geometry::log_map_origin(&x, c), c);
            assert!(max_abs_diff(&rt, &x) < 1e-6, "exp∘log at c={cval}");

            // distance symmetry and identity
            let d = geometry::distance(&x, &y, c).unwrap();
            let d2 = geometry::distance(&y, &x, c).unwrap();
            assert!(d >= 0.0 && (d - d2).abs() < 1e-6, "symmetry at c={cval}");
            assert!(geometry::distance(&x, &x, c).unwrap() < 1e-9);
        }
    }
    budget("criterion 1 (geometry properties)", started, 5.0);
}

/// Criterion 2 — Gradient oracle: 10-node random digraph, K = 1, two layers (8 -> 4),
/// full link-prediction gradient vs central finite differences for every
/// trainable parameter, rel. error < 1e-3.
#[test]
fn criterion_2_gradient_oracle() {
    let started = Instant::now();
    let mut grng = ChaCha20Rng::seed_from_u64(0xC2);
    let n = 10;
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && grng.random::<f64>() < 0.25 {
                edges.push((i, j));
            }
        }
    }
    let d_feat = 6;
    let feats: Vec<f64> = (0..n * d_feat).map(|_| grng.random_range(-0.8..0.8)).collect();
    let features = dhypr_core::tensor::Tensor::new(n, d_feat, feats).unwrap();
    let g = Digraph::new(n, edges, Some(features), None, None).unwrap();
    let stack = build_stack(&g, 1).unwrap();

    let mut prng = ChaCha20Rng::seed_from_u64(5);
    let params = ModelParams::init(
        ModelConfig {
            feature_dim: d_feat,
            layer_dims: vec![8, 4],
            k_max: 1,
        },
        None,
        &mut prng,
    )
    .unwrap();
    let dec = DecoderConfig::default();
    let pos = g.edges.clone();
    let mut nrng = ChaCha20Rng::seed_from_u64(23);
    let neg =
        decode::sample_training_negatives(&mut nrng, g.n, &g.edge_set(), pos.len()).unwrap();

    let eval = |p: &ModelParams, with_grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let mut frng = ChaCha20Rng::seed_from_u64(0);
        let f = tape.constant(g.features.clone());
        let staged = stage_params(&mut tape, p, with_grads);
        let emb = forward_full(
            &mut tape,
            f,
            &stack,
            &staged,
            p,
            ForwardSettings::eval(),
            &mut frng,
        )
        .unwrap();
        let loss = decode::lp_loss(&mut tape, &emb, &pos, &neg, &dec).unwrap();
        let v = tape.value(loss).data[0];
        if !with_grads {
            return (v, Vec::new());
        }
        let grads = tape.backward(loss).unwrap();
        (
            v,
            staged
                .leaves
                .iter()
                .map(|&id| grads.get_or_zero(id).data)
                .collect(),
        )
    };

    let (_, analytic) = eval(&params, true);
    let h = 1e-5;
    let mut checked = 0;
    for a in 0..params.arrays().len() {
        for e in 0..params.arrays()[a].len() {
            let mut pp = params.clone();
            pp.arrays_mut()[a][e] += h;
            let (lp, _) = eval(&pp, false);
            let mut pm = params.clone();
            pm.arrays_mut()[a][e] -= h;
            let (lm, _) = eval(&pm, false);
            let numeric = (lp - lm) / (2.0 * h);
            let an = analytic[a][e];
            let denom = an.abs().max(numeric.abs());
            let rel = if denom < 1e-7 { 0.0 } else { (an - numeric).abs() / denom };
            assert!(
                rel < 1e-3,
                "parameter array {a} entry {e}: analytic {an} vs numeric {numeric}"
            );
            checked += 1;
        }
    }
    assert!(checked > 300);
    budget("criterion 2 (gradient oracle)", started, 30.0);
}

/// Criterion 3 — Proximity oracle: 50 random digraphs (n <= 30, p = 0.1), all 4K
/// matrices for K <= 3 exactly equal brute-force enumeration.
#[test]
fn criterion_3_proximity_oracle() {
    let started = Instant::now();

    fn path_exists(adj: &[Vec<bool>], from: usize, to: usize, k: usize) -> bool {
        if k == 0 {
            return from == to;
        }
        adj[from]
            .iter()
            .enumerate()
            .any(|(mid, &e)| e && path_exists(adj, mid, to, k - 1))
    }

    for trial in 0..50u64 {
        let n = 5 + (trial as usize * 7) % 26;
        let mut rng = ChaCha20Rng::seed_from_u64(0xC300 + trial);
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for j in 0..n as u32 {
                if i != j && rng.random::<f64>() < 0.1 {
                    edges.push((i, j));
                }
            }
        }
        let g = Digraph::new(n, edges, None, None, None).unwrap();
        let mut adj = vec![vec![false; n]; n];
        for &(i, j) in &g.edges {
            adj[i as usize][j as usize] = true;
        }
        let stack = build_stack(&g, 3).unwrap();
        for kind in ProximityKind::ALL {
            for k in 1..=3 {
                let got: &BinaryMatrix = stack.matrix(kind, k);
                for i in 0..n {
                    for j in 0..n {
                        let want = match kind {
                            ProximityKind::DiffusionIn => path_exists(&adj, j, i, k),
                            ProximityKind::DiffusionOut => path_exists(&adj, i, j, k),
                            ProximityKind::CommonIn => {
                                i != j
                                    && (0..n).any(|p| {
                                        p != i
                                            && p != j
                                            && path_exists(&adj, p, i, k)
                                            && path_exists(&adj, p, j, k)
                                    })
                            }
                            ProximityKind::CommonOut => {
                                i != j
                                    && (0..n).any(|p| {
                                        p != i
                                            && p != j
                                            && path_exists(&adj, i, p, k)
                                            && path_exists(&adj, j, p, k)
                                    })
                            }
                        };
                        assert_eq!(
                            got.contains(i, j as u32),
                            want,
                            "trial {trial} {kind:?} k={k} entry ({i}, {j})"
                        );
                    }
                }
            }
        }
    }
    budget("criterion 3 (proximity oracle)", started, 60.0);
}

/// Criterion 4 — Decoder identities: Fermi-Dirac is exactly 0.5 at d² = r; gravity is
/// exactly 0.5 when m_j = λ·log d²; gravity is direction-sensitive on an
/// unequal-mass pair.
#[test]
fn criterion_4_decoder_identities() {
    let started = Instant::now();
    let c = Curvature::new(1.0).unwrap();
    let zi = vec![0.05, -0.2, 0.1];
    let zj = vec![-0.3, 0.12, 0.2];
    let d = geometry::distance(&zi, &zj, c).unwrap();

    // r chosen as the computed d² makes the exponent exactly zero
    let cfg = DecoderConfig {
        radius: d * d,
        ..DecoderConfig::default()
    };
    let p = decode::fermi_dirac_score(&zi, &zj, c, &cfg).unwrap();
    assert_eq!(p, 0.5, "fermi-dirac at d² = r must be exactly one half");

    // default configuration sanity: d = 0 scores 1/(e^{-2} + 1)
    let cfg_default = DecoderConfig::default();
    let p0 = decode::fermi_dirac_score(&zi, &zi, c, &cfg_default).unwrap();
    assert!((p0 - 1.0 / ((-2.0f64).exp() + 1.0)).abs() < 1e-9);

    // gravity balance: m_j = λ·log d² (written the way the decoder computes)
    let m_balance = cfg_default.lambda * 2.0 * d.max(decode::DIST_FLOOR).ln();
    let pg = decode::gravity_score(&zi, &zj, m_balance, c, &cfg_default).unwrap();
    assert_eq!(pg, 0.5, "gravity at m_j = λ·log d² must be exactly one half");

    // asymmetry with unequal masses
    let p_ij = decode::gravity_score(&zi, &zj, 1.5, c, &cfg_default).unwrap();
    let p_ji = decode::gravity_score(&zj, &zi, -0.5, c, &cfg_default).unwrap();
    assert!(
        (p_ij - p_ji).abs() > 1e-6,
        "gravity must discriminate direction: {p_ij} vs {p_ji}"
    );
    budget("criterion 4 (decoder identities)", started, 1.0);
}

fn lp_acceptance_config(seed: u64, embed_dim: usize) -> TrainConfig {
    let mut cfg = TrainConfig::defaults_for(Task::Lp);
    cfg.seed = seed;
    cfg.k = 1;
    cfg.dims = vec![16, embed_dim];
    cfg.epochs_max = 200;
    cfg.patience = 200;
    cfg.lr = 0.05;
    cfg.w_g = 5.0;
    cfg.dropout = 0.0;
    cfg.negative_ratio = 3;
    cfg
}

fn run_lp(seed: u64, embed_dim: usize) -> (ModelParams, EvalReport) {
    let g = synth::two_block_hub_digraph(100, 10, 0.005, 1234);
    let split = split_link_prediction(&g, seed).unwrap();
    let train_g = g.with_edges(split.train_edges.clone()).unwrap();
    let stack = build_stack(&train_g, 1).unwrap();
    let cfg = lp_acceptance_config(seed, embed_dim);
    train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap()
}

/// Criterion 5 — End-to-end link prediction on the synthetic 100-node two-block
/// digraph (dense intra-block forward edges, sparse otherwise), 40% of
/// edges removed: test AUC >= 0.85 and AP >= 0.85 within 200 epochs for
/// three seeds at embedding dimension 8.
#[test]
fn criterion_5_end_to_end_link_prediction() {
    let started = Instant::now();
    for seed in [1u64, 2, 3] {
        let (_, report) = run_lp(seed, 8);
        let auc = report.metrics["auc"];
        let ap = report.metrics["ap"];
        assert!(auc >= 0.85, "seed {seed}: test AUC {auc:.4} < 0.85");
        assert!(ap >= 0.85, "seed {seed}: test AP {ap:.4} < 0.85");
        assert!(report.history.len() <= 200);
    }
    budget("criterion 5 (end-to-end LP, d'=8)", started, 120.0);
}

/// Criterion 6 — End-to-end node classification on a synthetic 3-class, 120-node
/// digraph with class-correlated features and 20 labeled nodes per class:
/// test accuracy >= 0.80 within 200 epochs for three seeds.
#[test]
fn criterion_6_end_to_end_node_classification() {
    let started = Instant::now();
    for seed in [1u64, 2, 3] {
        let g = synth::labeled_blocks_digraph(120, 3, 0.15, 0.01, 8, 777);
        let split = split_node_classification(&g, 20, 30, seed).unwrap();
        let stack = build_stack(&g, 1).unwrap();
        let mut cfg = TrainConfig::defaults_for(Task::Nc);
        cfg.seed = seed;
        cfg.k = 1;
        cfg.dims = vec![16, 8];
        cfg.epochs_max = 200;
        cfg.patience = 200;
        cfg.lr = 0.05;
        cfg.dropout = 0.0;
        let (_, report) = train(&g, &stack, &TaskSplit::Nc(split), &cfg).unwrap();
        let acc = report.metrics["accuracy"];
        assert!(acc >= 0.80, "seed {seed}: test accuracy {acc:.4} < 0.80");
        assert!(report.history.len() <= 200);
    }
    budget("criterion 6 (end-to-end NC)", started, 120.0);
}

/// Criterion 7 — Low-dimension robustness: the criterion-5 run repeated at embedding
/// dimension 4 still reaches AUC >= 0.80.
#[test]
fn criterion_7_low_dimension_link_prediction() {
    let started = Instant::now();
    for seed in [1u64, 2, 3] {
        let (_, report) = run_lp(seed, 4);
        let auc = report.metrics["auc"];
        assert!(auc >= 0.80, "seed {seed}: test AUC {auc:.4} < 0.80 at d'=4");
    }
    budget("criterion 7 (LP at d'=4)", started, 120.0);
}

/// Criterion 8 — Determinism: two runs of the criterion-5 setup with one seed produce
/// bit-identical checkpoints and metric values.
#[test]
fn criterion_8_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for run in 0..2 {
        let (params, report) = run_lp(1, 8);
        let path = dir.path().join(format!("run{run}.ckpt"));
        save_checkpoint(&path, "{}", &params).unwrap();
        files.push(std::fs::read(&path).unwrap());
        reports.push(report);
    }
    assert_eq!(files[0], files[1], "checkpoints must be bit-identical");
    assert_eq!(
        reports[0].metrics, reports[1].metrics,
        "metric values must be identical"
    );
    assert_eq!(reports[0].best_epoch, reports[1].best_epoch);
    budget("criterion 8 (determinism)", started, 180.0);
}

/// Criterion 9 — Metric oracles: the AUC and AP implementations match brute-force
/// definitions exactly on all-pairs inputs of size <= 200, including the
/// worked examples.
#[test]
fn criterion_9_metric_oracles() {
    let started = Instant::now();

    fn auc_brute(labels: &[bool], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    fn ap_brute(labels: &[bool], scores: &[f64]) -> f64 {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let pos = labels.iter().filter(|&&l| l).count();
        let mut total = 0.0;
        for k in 1..=order.len() {
            if labels[order[k - 1]] {
                // recount positives in the top k from scratch
                let hits = order[..k].iter().filter(|&&i| labels[i]).count();
                total += hits as f64 / k as f64;
            }
        }
        total / pos as f64
    }

    // worked examples
    let auc_val = metrics::auc(&[true, false, true, false], &[0.9, 0.8, 0.7, 0.1]).unwrap();
    assert_eq!(auc_val, 0.75);
    let ap_val = metrics::average_precision(&[true, false], &[0.1, 0.9]).unwrap();
    assert_eq!(ap_val, 0.5);
    assert_eq!(
        metrics::auc(&[true, false], &[0.3, 0.3]).unwrap(),
        0.5,
        "all ties give one half"
    );

    let mut rng = ChaCha20Rng::seed_from_u64(0xC9);
    for trial in 0..40 {
        let n = 5 + (trial * 5) % 196; // up to 200 items
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        // quantized scores force tied groups
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * 10.0).round() / 10.0)
            .collect();
        let fast = metrics::auc(&labels, &scores).unwrap();
        let brute = auc_brute(&labels, &scores);
        assert_eq!(fast, brute, "auc mismatch on trial {trial}");
        let fast = metrics::average_precision(&labels, &scores).unwrap();
        let brute = ap_brute(&labels, &scores);
        assert_eq!(fast, brute, "average precision mismatch on trial {trial}");
    }
    budget("criterion 9 (metric oracles)", started, 10.0);
}

/// Criterion 10 — OPTIONAL (not gating): a single-seed link-prediction run on a real
/// citation network at embedding dimension 32, expected test AUC >= 0.85.
/// Provide the edge list through `DHYPR_CORA_EDGES` and run with
/// `cargo test --test acceptance -- --ignored`.
#[test]
#[ignore = "needs a real dataset on disk; see README"]
fn criterion_10_optional_real_dataset_lp() {
    let path = std::env::var("DHYPR_CORA_EDGES")
        .expect("set DHYPR_CORA_EDGES to an edge-list file to run this");
    let g = Digraph::load(std::path::Path::new(&path), None, None).unwrap();
    let split = split_link_prediction(&g, 1).unwrap();
    let train_g = g.with_edges(split.train_edges.clone()).unwrap();
    let stack = build_stack(&train_g, 2).unwrap();
    let mut cfg = TrainConfig::defaults_for(Task::Lp);
    cfg.seed = 1;
    cfg.k = 2;
    cfg.dims = vec![64, 32];
    cfg.epochs_max = 500;
    cfg.patience = 50;
    cfg.lr = 0.01;
    cfg.w_g = 1.0;
    let (_, report) = train(&g, &stack, &TaskSplit::Lp(split), &cfg).unwrap();
    let auc = report.metrics["auc"];
    println!("real-dataset LP: auc {auc:.4}, ap {:.4}", report.metrics["ap"]);
    assert!(auc >= 0.85, "single-run AUC {auc:.4} < 0.85");
}
