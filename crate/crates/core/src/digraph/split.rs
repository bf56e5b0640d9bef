//! Seeded dataset splits for the three tasks.
//!
//! All randomness flows through one ChaCha20 stream per split, so a given
//! seed always reproduces the same partition. Negative samples are verified
//! non-edges of the full graph; the reverse `(j, i)` of a true edge is a
//! legal negative when absent from the edge set, since directed link
//! prediction must test direction discrimination. Validation and test
//! negatives are drawn disjointly.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::digraph::Digraph;
use crate::error::{Error, Result};

/// Link-prediction split: 60% of edges retained for training, the removed
/// 40% divided evenly into validation/test positives with matched negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSplit {
    pub seed: u64,
    pub train_edges: Vec<(u32, u32)>,
    pub val_pos: Vec<(u32, u32)>,
    pub val_neg: Vec<(u32, u32)>,
    pub test_pos: Vec<(u32, u32)>,
    pub test_neg: Vec<(u32, u32)>,
}

/// Node-classification split: a labeled training quota per class (or a
/// global label rate), a fixed-size validation set, remainder test.
#[derive(Debug, Clone, PartialEq)]
pub struct NcSplit {
    pub seed: u64,
    pub train_nodes: Vec<u32>,
    pub val_nodes: Vec<u32>,
    pub test_nodes: Vec<u32>,
}

/// Sign-prediction split over edge indices: 5% train, 5% val, 90% test.
#[derive(Debug, Clone, PartialEq)]
pub struct SpSplit {
    pub seed: u64,
    pub train_edges: Vec<usize>,
    pub val_edges: Vec<usize>,
    pub test_edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSplit {
    Lp(LpSplit),
    Nc(NcSplit),
    Sp(SpSplit),
}

/// Draws `count` ordered pairs `(i, j)`, `i != j`, that are neither edges of
/// the graph nor members of `avoid`.
pub fn sample_negatives(
    rng: &mut ChaCha20Rng,
    n: usize,
    edges: &HashSet<(u32, u32)>,
    avoid: &HashSet<(u32, u32)>,
    count: usize,
) -> Result<Vec<(u32, u32)>> {
    let capacity = n * n - n - edges.len() - avoid.len();
    if capacity < count {
        return Err(Error::config(format!(
            "cannot sample {count} negative pairs: only {capacity} non-edges available"
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut taken: HashSet<(u32, u32)> = HashSet::with_capacity(count);
    let mut attempts = 0usize;
    let max_attempts = 1000 + 200 * count;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(format!(
                "negative sampling stalled after {attempts} attempts \
                 ({} of {count} drawn); graph too dense",
                out.len()
            )));
        }
        let i = rng.random_range(0..n) as u32;
        let j = rng.random_range(0..n) as u32;
        let pair = (i, j);
        if i == j || edges.contains(&pair) || avoid.contains(&pair) || taken.contains(&pair) {
            continue;
        }
        taken.insert(pair);
        out.push(pair);
    }
    Ok(out)
}

pub fn split_link_prediction(g: &Digraph, seed: u64) -> Result<LpSplit> {
    let e = g.edges.len();
    if e < 10 {
        return Err(Error::config(format!(
            "link-prediction split needs at least 10 edges, graph has {e}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..e).collect();
    order.shuffle(&mut rng);

    let removed = ((0.4 * e as f64).round() as usize).min(e);
    let n_val = removed / 2;
    let n_test = removed - n_val;

    let val_pos: Vec<(u32, u32)> = order[..n_val].iter().map(|&i| g.edges[i]).collect();
    let test_pos: Vec<(u32, u32)> = order[n_val..n_val + n_test]
        .iter()
        .map(|&i| g.edges[i])
        .collect();
    let train_edges: Vec<(u32, u32)> = order[removed..].iter().map(|&i| g.edges[i]).collect();

    let edge_set = g.edge_set();
    let none = HashSet::new();
    let val_neg = sample_negatives(&mut rng, g.n, &edge_set, &none, n_val)?;
    let avoid: HashSet<(u32, u32)> = val_neg.iter().copied().collect();
    let test_neg = sample_negatives(&mut rng, g.n, &edge_set, &avoid, n_test)?;

    Ok(LpSplit {
        seed,
        train_edges,
        val_pos,
        val_neg,
        test_pos,
        test_neg,
    })
}

/// Per-class quota split: `labeled_per_class` training nodes from every
/// class, `val_size` random validation nodes, remainder test.
pub fn split_node_classification(
    g: &Digraph,
    labeled_per_class: usize,
    val_size: usize,
    seed: u64,
) -> Result<NcSplit> {
    let (classes, dense) = g.class_index()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); classes.len()];
    for (node, &c) in dense.iter().enumerate() {
        by_class[c].push(node as u32);
    }

    let mut train_nodes = Vec::new();
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.len() < labeled_per_class {
            return Err(Error::config(format!(
                "class {} has {} nodes, fewer than the quota {labeled_per_class}",
                classes[c],
                nodes.len()
            )));
        }
        nodes.shuffle(&mut rng);
        train_nodes.extend_from_slice(&nodes[..labeled_per_class]);
    }
    finish_nc_split(g, train_nodes, val_size, seed, &mut rng)
}

/// Label-rate split: `round(rate * n)` training nodes drawn uniformly.
pub fn split_nc_label_rate(
    g: &Digraph,
    rate: f64,
    val_size: usize,
    seed: u64,
) -> Result<NcSplit> {
    if !(0.0..=1.0).contains(&rate) || rate <= 0.0 {
        return Err(Error::config(format!(
            "label rate must lie in (0, 1], got {rate}"
        )));
    }
    g.class_index()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let quota = ((rate * g.n as f64).round() as usize).clamp(1, g.n);
    let mut nodes: Vec<u32> = (0..g.n as u32).collect();
    nodes.shuffle(&mut rng);
    let train_nodes = nodes[..quota].to_vec();
    finish_nc_split(g, train_nodes, val_size, seed, &mut rng)
}

fn finish_nc_split(
    g: &Digraph,
    mut train_nodes: Vec<u32>,
    val_size: usize,
    seed: u64,
    rng: &mut ChaCha20Rng,
) -> Result<NcSplit> {
    train_nodes.sort_unstable();
    let train_set: HashSet<u32> = train_nodes.iter().copied().collect();
    let mut rest: Vec<u32> = (0..g.n as u32).filter(|i| !train_set.contains(i)).collect();
    if rest.len() < val_size {
        return Err(Error::config(format!(
            "validation set of {val_size} requested but only {} unlabeled nodes remain",
            rest.len()
        )));
    }
    rest.shuffle(rng);
    let val_nodes = rest[..val_size].to_vec();
    let test_nodes = rest[val_size..].to_vec();
    Ok(NcSplit {
        seed,
        train_nodes,
        val_nodes,
        test_nodes,
    })
}

pub fn split_sign_prediction(g: &Digraph, seed: u64) -> Result<SpSplit> {
    if g.edge_signs.is_none() {
        return Err(Error::config(
            "sign-prediction split requires edge signs".to_string(),
        ));
    }
    let e = g.edges.len();
    let n_train = e / 20;
    let n_val = e / 20;
    if n_train == 0 || n_val == 0 || n_train + n_val >= e {
        return Err(Error::config(format!(
            "sign-prediction split needs at least 20 signed edges, graph has {e}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..e).collect();
    order.shuffle(&mut rng);
    Ok(SpSplit {
        seed,
        train_edges: order[..n_train].to_vec(),
        val_edges: order[n_train..n_train + n_val].to_vec(),
        test_edges: order[n_train + n_val..].to_vec(),
    })
}
