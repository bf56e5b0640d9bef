//! Seeded synthetic digraph generators used by the test suites, the demo
//! configuration, and the Python smoke test.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::digraph::Digraph;
use crate::tensor::Tensor;

/// Two blocks of `n/2` nodes with dense forward edges inside each block
/// (probability `p_in`, drawn only for ordered pairs `i < j` plus a sparse
/// back-edge fraction) and sparse edges across blocks (`p_out`). Features
/// are the one-hot node identity.
pub fn two_block_digraph(n: usize, p_in: f64, p_out: f64, seed: u64) -> Digraph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i == j {
                continue;
            }
            let same_block = (i as usize) < half && (j as usize) < half
                || (i as usize) >= half && (j as usize) >= half;
            let p = if same_block {
                // mostly low-to-high index edges so the blocks stay directed
                if i < j {
                    p_in
                } else {
                    p_in * 0.15
                }
            } else {
                p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Digraph::new(n, edges, None, None, None).expect("generator produces valid edges")
}

/// Two blocks whose intra-block edges attach preferentially: node `i` sends
/// `edges_per_node` forward edges to earlier block members sampled with
/// probability proportional to accumulated in-degree, so each block grows a
/// hub hierarchy. Cross-block edges appear with probability `p_out`.
/// Features are the one-hot node identity.
pub fn two_block_hub_digraph(n: usize, edges_per_node: usize, p_out: f64, seed: u64) -> Digraph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut edges = Vec::new();
    let mut weight = vec![0.5f64; n];
    for block in 0..2usize {
        let lo = block * half;
        let hi = if block == 0 { half } else { n };
        for i in (lo + 1)..hi {
            let k = edges_per_node.min(i - lo);
            let mut targets = std::collections::HashSet::new();
            while targets.len() < k {
                let total: f64 = (lo..i).map(|t| weight[t]).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = lo;
                for (t, w) in weight.iter().enumerate().take(i).skip(lo) {
                    u -= w;
                    pick = t;
                    if u <= 0.0 {
                        break;
                    }
                }
                targets.insert(pick);
            }
            let mut targets: Vec<usize> = targets.into_iter().collect();
            targets.sort_unstable();
            for t in targets {
                edges.push((i as u32, t as u32));
                weight[t] += 1.5;
            }
        }
    }
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            let cross = ((i as usize) < half) != ((j as usize) < half);
            if i != j && cross && rng.random::<f64>() < p_out {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Digraph::new(n, edges, None, None, None).expect("generator produces valid edges")
}

/// `classes` blocks with intra-class forward edges (`p_in`), sparse cross
/// edges (`p_out`), class labels, and class-correlated Gaussian features of
/// dimension `feat_dim` (unit-separated means, sigma 0.4).
pub fn labeled_blocks_digraph(
    n: usize,
    classes: usize,
    p_in: f64,
    p_out: f64,
    feat_dim: usize,
    seed: u64,
) -> Digraph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let labels: Vec<i64> = (0..n).map(|i| (i * classes / n) as i64).collect();
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i == j {
                continue;
            }
            let same = labels[i as usize] == labels[j as usize];
            let p = if same {
                if i < j {
                    p_in
                } else {
                    p_in * 0.15
                }
            } else {
                p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut feats = vec![0.0; n * feat_dim];
    for i in 0..n {
        let c = labels[i] as usize;
        for d in 0..feat_dim {
            let mean = if d % classes == c { 1.0 } else { 0.0 };
            feats[i * feat_dim + d] = mean + 0.4 * gaussian(&mut rng);
        }
    }
    let features = Tensor::new(n, feat_dim, feats).expect("finite features");
    Digraph::new(n, edges, Some(features), Some(labels), None)
        .expect("generator produces valid edges")
}

/// Box-Muller standard normal.
fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
