//! Directed-graph ingestion and the derived artifacts the model consumes:
//! k-order proximity stacks and task-specific dataset splits.

pub mod proximity;
pub mod split;
pub mod synth;

pub use proximity::{
    build_stack, common_in, common_out, diffusion_in, diffusion_out, BinaryMatrix,
    ProximityKind, ProximityStack,
};
pub use split::{
    sample_negatives, split_link_prediction, split_nc_label_rate, split_node_classification,
    split_sign_prediction, LpSplit, NcSplit, SpSplit, TaskSplit,
};

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A directed graph with node features and optional node labels / edge signs.
///
/// Edges are ordered pairs over a dense `0..n` index space; self-loops and
/// duplicates are rejected at construction.
#[derive(Debug, Clone)]
pub struct Digraph {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
    pub features: Tensor,
    pub labels: Option<Vec<i64>>,
    pub edge_signs: Option<Vec<i64>>,
    /// Original node identifier for each dense index (identity unless the
    /// edge file used sparse ids).
    pub node_ids: Vec<u64>,
}

/// The summary echoed by `preprocess`.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    /// Fraction of edges whose reverse edge also exists.
    pub reciprocity: f64,
    pub avg_degree: f64,
    pub max_degree: usize,
}

impl Digraph {
    /// Builds a validated digraph. `features` defaults to the one-hot node
    /// identity when `None`.
    pub fn new(
        n: usize,
        edges: Vec<(u32, u32)>,
        features: Option<Tensor>,
        labels: Option<Vec<i64>>,
        edge_signs: Option<Vec<i64>>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i as usize >= n || j as usize >= n {
                return Err(Error::contract(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::contract(format!("self-loop on node {i}")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::contract(format!("duplicate edge ({i}, {j})")));
            }
        }
        let features = match features {
            Some(f) => {
                if f.rows != n {
                    return Err(Error::contract(format!(
                        "feature matrix has {} rows for {n} nodes",
                        f.rows
                    )));
                }
                f
            }
            None => one_hot_features(n),
        };
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::contract(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        if let Some(s) = &edge_signs {
            if s.len() != edges.len() {
                return Err(Error::contract(format!(
                    "{} edge signs for {} edges",
                    s.len(),
                    edges.len()
                )));
            }
        }
        Ok(Digraph {
            node_ids: (0..n as u64).collect(),
            n,
            edges,
            features,
            labels,
            edge_signs,
        })
    }

    /// Loads from an edge-list file plus optional feature CSV and label file.
    ///
    /// Edge lines are `src dst` (whitespace-separated nonnegative integers)
    /// with an optional third integer column holding an edge sign. Node ids
    /// are remapped onto a dense `0..n` space; when a feature or label file
    /// is present it fixes `n` (row `i` = node `i`), so edge ids must already
    /// lie in `0..n`.
    pub fn load(
        edge_path: &Path,
        feature_path: Option<&Path>,
        label_path: Option<&Path>,
    ) -> Result<Self> {
        let raw = parse_edge_file(edge_path)?;
        let features = feature_path.map(parse_feature_csv).transpose()?;
        let labels = label_path.map(parse_label_file).transpose()?;

        let fixed_n = features
            .as_ref()
            .map(|f| f.rows)
            .or_else(|| labels.as_ref().map(|l| l.len()));

        let (n, remap, node_ids) = match fixed_n {
            Some(n) => {
                for e in &raw {
                    let bad = if e.src as usize >= n {
                        Some(e.src)
                    } else if e.dst as usize >= n {
                        Some(e.dst)
                    } else {
                        None
                    };
                    if let Some(id) = bad {
                        return Err(Error::Ingestion {
                            line: e.line,
                            msg: format!(
                                "node id {id} out of range: feature/label files fix n = {n}"
                            ),
                        });
                    }
                }
                (n, None, (0..n as u64).collect::<Vec<_>>())
            }
            None => {
                let mut ids: Vec<u64> = raw
                    .iter()
                    .flat_map(|e| [e.src, e.dst])
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                let map: std::collections::HashMap<u64, u32> = ids
                    .iter()
                    .enumerate()
                    .map(|(i, &id)| (id, i as u32))
                    .collect();
                (ids.len(), Some(map), ids)
            }
        };

        let mut edges = Vec::with_capacity(raw.len());
        let mut signs = Vec::new();
        let mut seen = HashSet::with_capacity(raw.len());
        let any_sign = raw.iter().any(|e| e.sign.is_some());
        for e in &raw {
            let (i, j) = match &remap {
                Some(map) => (map[&e.src], map[&e.dst]),
                None => (e.src as u32, e.dst as u32),
            };
            if i == j {
                return Err(Error::Ingestion {
                    line: e.line,
                    msg: format!("self-loop on node {}", e.src),
                });
            }
            if !seen.insert((i, j)) {
                return Err(Error::Ingestion {
                    line: e.line,
                    msg: format!("duplicate edge {} -> {}", e.src, e.dst),
                });
            }
            if any_sign {
                match e.sign {
                    Some(s) => signs.push(s),
                    None => {
                        return Err(Error::Ingestion {
                            line: e.line,
                            msg: "edge sign column present on other lines but missing here"
                                .to_string(),
                        })
                    }
                }
            }
            edges.push((i, j));
        }

        let mut g = Digraph::new(
            n,
            edges,
            features,
            labels,
            if any_sign { Some(signs) } else { None },
        )?;
        g.node_ids = node_ids;
        Ok(g)
    }

    pub fn edge_set(&self) -> HashSet<(u32, u32)> {
        self.edges.iter().copied().collect()
    }

    /// Same nodes, every edge reversed.
    pub fn reverse(&self) -> Digraph {
        let mut g = self.clone();
        g.edges = self.edges.iter().map(|&(i, j)| (j, i)).collect();
        g
    }

    /// Same graph restricted to a subset of its edges (features kept).
    pub fn with_edges(&self, edges: Vec<(u32, u32)>) -> Result<Digraph> {
        let mut g = Digraph::new(
            self.n,
            edges,
            Some(self.features.clone()),
            self.labels.clone(),
            None,
        )?;
        g.node_ids = self.node_ids.clone();
        Ok(g)
    }

    pub fn stats(&self) -> GraphStats {
        let set = self.edge_set();
        let recip = if self.edges.is_empty() {
            0.0
        } else {
            let mutual = self
                .edges
                .iter()
                .filter(|&&(i, j)| set.contains(&(j, i)))
                .count();
            mutual as f64 / self.edges.len() as f64
        };
        let mut degree = vec![0usize; self.n];
        for &(i, j) in &self.edges {
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        GraphStats {
            nodes: self.n,
            edges: self.edges.len(),
            reciprocity: recip,
            avg_degree: if self.n == 0 {
                0.0
            } else {
                2.0 * self.edges.len() as f64 / self.n as f64
            },
            max_degree: degree.iter().copied().max().unwrap_or(0),
        }
    }

    /// Distinct label values in ascending order and each node's dense class.
    pub fn class_index(&self) -> Result<(Vec<i64>, Vec<usize>)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::config("graph has no node labels".to_string()))?;
        Ok(dense_classes(labels))
    }

    /// Distinct sign values in ascending order and each edge's dense class.
    pub fn sign_index(&self) -> Result<(Vec<i64>, Vec<usize>)> {
        let signs = self
            .edge_signs
            .as_ref()
            .ok_or_else(|| Error::config("graph has no edge signs".to_string()))?;
        Ok(dense_classes(signs))
    }
}

fn dense_classes(values: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let mut distinct: Vec<i64> = values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dense = values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect();
    (distinct, dense)
}

fn one_hot_features(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor {
        rows: n,
        cols: n,
        data,
        requires_grad: false,
    }
}

struct RawEdge {
    src: u64,
    dst: u64,
    sign: Option<i64>,
    line: usize,
}

fn parse_edge_file(path: &Path) -> Result<Vec<RawEdge>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Ingestion {
                line: line_no,
                msg: format!("expected `src dst [sign]`, got {} fields", fields.len()),
            });
        }
        let parse_id = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Ingestion {
                line: line_no,
                msg: format!("invalid node id `{s}`"),
            })
        };
        let sign = fields
            .get(2)
            .map(|s| {
                s.parse::<i64>().map_err(|_| Error::Ingestion {
                    line: line_no,
                    msg: format!("invalid edge sign `{s}`"),
                })
            })
            .transpose()?;
        out.push(RawEdge {
            src: parse_id(fields[0])?,
            dst: parse_id(fields[1])?,
            sign,
            line: line_no,
        });
    }
    Ok(out)
}

fn parse_feature_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = trimmed
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Ingestion {
                    line: idx + 1,
                    msg: format!("invalid feature value `{}`", f.trim()),
                })
            })
            .collect();
        let row = row?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Ingestion {
                    line: idx + 1,
                    msg: format!(
                        "feature row has {} columns, expected {}",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingestion {
            line: 0,
            msg: "empty feature file".to_string(),
        });
    }
    let cols = rows[0].len();
    let n = rows.len();
    Tensor::new(n, cols, rows.into_iter().flatten().collect())
}

fn parse_label_file(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(trimmed.parse::<i64>().map_err(|_| Error::Ingestion {
            line: idx + 1,
            msg: format!("invalid label `{trimmed}`"),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_auto_sizes_node_count() {
        let f = write_tmp("0 1\n1 2\n");
        let g = Digraph::load(f.path(), None, None).unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(g.features.shape(), (3, 3));
    }

    #[test]
    fn load_rejects_self_loop_with_line() {
        let f = write_tmp("0 1\n0 0\n");
        match Digraph::load(f.path(), None, None) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_edge() {
        let f = write_tmp("0 1\n2 3\n0 1\n");
        match Digraph::load(f.path(), None, None) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn load_remaps_sparse_ids() {
        let f = write_tmp("10 40\n40 7\n");
        let g = Digraph::load(f.path(), None, None).unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.node_ids, vec![7, 10, 40]);
        assert_eq!(g.edges, vec![(1, 2), (2, 0)]);
    }

    #[test]
    fn load_with_signs() {
        let f = write_tmp("0 1 1\n1 2 -1\n");
        let g = Digraph::load(f.path(), None, None).unwrap();
        assert_eq!(g.edge_signs, Some(vec![1, -1]));
        let (vocab, dense) = g.sign_index().unwrap();
        assert_eq!(vocab, vec![-1, 1]);
        assert_eq!(dense, vec![1, 0]);
    }

    #[test]
    fn load_mixed_sign_presence_rejected() {
        let f = write_tmp("0 1 1\n1 2\n");
        assert!(Digraph::load(f.path(), None, None).is_err());
    }

    #[test]
    fn feature_file_fixes_node_count() {
        let e = write_tmp("0 1\n");
        let feats = write_tmp("1.0,0.0\n0.0,1.0\n0.5,0.5\n");
        let g = Digraph::load(e.path(), Some(feats.path()), None).unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.features.shape(), (3, 2));
    }

    #[test]
    fn reciprocity_of_two_cycle_is_one() {
        let g = Digraph::new(2, vec![(0, 1), (1, 0)], None, None, None).unwrap();
        assert!((g.stats().reciprocity - 1.0).abs() < 1e-12);
        let g2 = Digraph::new(3, vec![(0, 1), (1, 2)], None, None, None).unwrap();
        assert_eq!(g2.stats().reciprocity, 0.0);
    }
}
