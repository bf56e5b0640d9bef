//! The four k-order proximity constructions and their aggregation weights.
//!
//! Proximity is existence, not count: every intermediate product is
//! binarized, so entries never grow. `diffusion_in`/`diffusion_out` mark
//! exact-length-k directed paths; `common_in`/`common_out` mark pairs
//! sharing a k-hop in-/out-neighbor, with the witness `p` required to be
//! distinct from both endpoints (enforced during the search, since a
//! product entry may exist only via `p = i` or `p = j` and must not count).
//!
//! Construction parallelizes across rows when `DHYPR_THREADS` is set; the
//! result is identical for any thread count.

use std::path::Path;
use std::rc::Rc;

use crate::digraph::Digraph;
use crate::error::{Error, Result};
use crate::tensor::SparseMatrix;

/// One of the four neighborhood families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProximityKind {
    DiffusionIn,
    DiffusionOut,
    CommonIn,
    CommonOut,
}

impl ProximityKind {
    pub const ALL: [ProximityKind; 4] = [
        ProximityKind::DiffusionIn,
        ProximityKind::DiffusionOut,
        ProximityKind::CommonIn,
        ProximityKind::CommonOut,
    ];

    fn tag(self) -> u8 {
        match self {
            ProximityKind::DiffusionIn => 0,
            ProximityKind::DiffusionOut => 1,
            ProximityKind::CommonIn => 2,
            ProximityKind::CommonOut => 3,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => ProximityKind::DiffusionIn,
            1 => ProximityKind::DiffusionOut,
            2 => ProximityKind::CommonIn,
            3 => ProximityKind::CommonOut,
            _ => return Err(Error::Format(format!("unknown proximity kind tag {t}"))),
        })
    }
}

/// Square binary matrix in compressed-row form; columns sorted per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl BinaryMatrix {
    pub fn from_rows(n: usize, rows: Vec<Vec<u32>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        BinaryMatrix { n, row_ptr, cols }
    }

    /// Entry `(i, j) = 1` for every directed edge `i -> j`.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j) in edges {
            rows[i as usize].push(j);
        }
        BinaryMatrix::from_rows(n, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: u32) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn transpose(&self) -> BinaryMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for &j in self.row(i) {
                rows[j as usize].push(i as u32);
            }
        }
        BinaryMatrix::from_rows(self.n, rows)
    }

    /// Binarized boolean product `self · other`.
    pub fn bool_product(&self, other: &BinaryMatrix) -> BinaryMatrix {
        let n = self.n;
        let rows = par_rows(n, |range, out| {
            let mut mark = vec![false; n];
            let mut touched: Vec<u32> = Vec::new();
            for i in range {
                for &p in self.row(i) {
                    for &j in other.row(p as usize) {
                        if !mark[j as usize] {
                            mark[j as usize] = true;
                            touched.push(j);
                        }
                    }
                }
                let mut row = std::mem::take(&mut touched);
                row.sort_unstable();
                for &j in &row {
                    mark[j as usize] = false;
                }
                out.push(row);
            }
        });
        BinaryMatrix::from_rows(n, rows)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).iter().all(|&j| self.contains(j as usize, i as u32)))
    }

    pub fn diagonal_is_zero(&self) -> bool {
        (0..self.n).all(|i| !self.contains(i, i as u32))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j as usize)))
    }
}

/// Worker-thread cap from `DHYPR_THREADS` (default 1).
fn worker_threads() -> usize {
    std::env::var("DHYPR_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

/// Runs `fill(range, out)` over contiguous row chunks, one per worker, and
/// concatenates the per-chunk results in row order.
fn par_rows<F>(n: usize, fill: F) -> Vec<Vec<u32>>
where
    F: Fn(std::ops::Range<usize>, &mut Vec<Vec<u32>>) + Sync,
{
    let threads = worker_threads().min(n.max(1));
    if threads <= 1 {
        let mut out = Vec::with_capacity(n);
        fill(0..n, &mut out);
        return out;
    }
    let chunk = n.div_ceil(threads);
    let mut results: Vec<Vec<Vec<u32>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(n);
            if lo >= hi {
                break;
            }
            let fill = &fill;
            handles.push(scope.spawn(move || {
                let mut out = Vec::with_capacity(hi - lo);
                fill(lo..hi, &mut out);
                out
            }));
        }
        for h in handles {
            results.push(h.join().expect("proximity worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}

/// Exact-length-k reverse reachability: entry `(i, j) = 1` iff a directed
/// path `j -> ... -> i` of length exactly `k` exists.
pub fn diffusion_in(adj: &BinaryMatrix, k: usize) -> BinaryMatrix {
    assert!(k >= 1, "proximity order k must be >= 1");
    let base = adj.transpose();
    let mut acc = base.clone();
    for _ in 1..k {
        acc = acc.bool_product(&base);
    }
    acc
}

/// Exact-length-k forward reachability: entry `(i, j) = 1` iff a directed
/// path `i -> ... -> j` of length exactly `k` exists.
pub fn diffusion_out(adj: &BinaryMatrix, k: usize) -> BinaryMatrix {
    assert!(k >= 1, "proximity order k must be >= 1");
    let mut acc = adj.clone();
    for _ in 1..k {
        acc = acc.bool_product(adj);
    }
    acc
}

/// Entry `(i, j) = 1` iff nodes `i != j` share an in-neighbor exactly `k`
/// hops away through some witness `p` with `p != i, p != j`.
pub fn common_in(adj: &BinaryMatrix, k: usize) -> BinaryMatrix {
    let d_in = diffusion_in(adj, k);
    let d_out = diffusion_out(adj, k);
    common_from(&d_in, &d_out)
}

/// Mirror of [`common_in`] with the diffusion roles swapped.
pub fn common_out(adj: &BinaryMatrix, k: usize) -> BinaryMatrix {
    let d_in = diffusion_in(adj, k);
    let d_out = diffusion_out(adj, k);
    common_from(&d_out, &d_in)
}

/// Witness search `(i, j) = 1 iff ∃p ∉ {i, j}: left(i, p) ∧ right(p, j)`,
/// with the diagonal forced to zero.
fn common_from(left: &BinaryMatrix, right: &BinaryMatrix) -> BinaryMatrix {
    let n = left.n;
    let rows = par_rows(n, |range, out| {
        let mut mark = vec![false; n];
        let mut touched: Vec<u32> = Vec::new();
        for i in range {
            for &p in left.row(i) {
                if p as usize == i {
                    continue;
                }
                for &j in right.row(p as usize) {
                    if j as usize == i || j == p {
                        continue;
                    }
                    if !mark[j as usize] {
                        mark[j as usize] = true;
                        touched.push(j);
                    }
                }
            }
            let mut row = std::mem::take(&mut touched);
            row.sort_unstable();
            for &j in &row {
                mark[j as usize] = false;
            }
            out.push(row);
        }
    });
    BinaryMatrix::from_rows(n, rows)
}

/// Row-stochastic aggregation weights `D_out^{-1}(M + I)`: row `i` spreads
/// weight `1/(1 + deg_i)` over `{i} ∪ row(M, i)`.
pub fn aggregation_weights(m: &BinaryMatrix) -> SparseMatrix {
    let n = m.n;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let neigh = m.row(i);
        let has_self = neigh.contains(&(i as u32));
        let count = neigh.len() + usize::from(!has_self);
        let w = 1.0 / count as f64;
        let mut entries: Vec<(u32, f64)> = neigh.iter().map(|&j| (j, w)).collect();
        if !has_self {
            entries.push((i as u32, w));
        }
        rows.push(entries);
    }
    SparseMatrix::from_rows(n, rows).expect("weight rows are valid by construction")
}

/// The `4K` proximity matrices of a digraph plus their aggregation weights,
/// in the canonical branch order: diffusion-in `k = 1..K`, diffusion-out,
/// common-in, common-out.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityStack {
    n: usize,
    k_max: usize,
    matrices: Vec<BinaryMatrix>,
    weights: Vec<Rc<SparseMatrix>>,
}

/// Builds all `4K` matrices; the diffusion powers are shared with the
/// common-neighbor constructions instead of being recomputed.
pub fn build_stack(g: &Digraph, k_max: usize) -> Result<ProximityStack> {
    if k_max < 1 {
        return Err(Error::config(format!("K must be >= 1, got {k_max}")));
    }
    let adj = BinaryMatrix::from_edges(g.n, &g.edges);
    let adj_t = adj.transpose();

    let mut d_in: Vec<BinaryMatrix> = Vec::with_capacity(k_max);
    let mut d_out: Vec<BinaryMatrix> = Vec::with_capacity(k_max);
    for k in 0..k_max {
        if k == 0 {
            d_in.push(adj_t.clone());
            d_out.push(adj.clone());
        } else {
            d_in.push(d_in[k - 1].bool_product(&adj_t));
            d_out.push(d_out[k - 1].bool_product(&adj));
        }
    }
    let c_in: Vec<BinaryMatrix> = (0..k_max)
        .map(|k| common_from(&d_in[k], &d_out[k]))
        .collect();
    let c_out: Vec<BinaryMatrix> = (0..k_max)
        .map(|k| common_from(&d_out[k], &d_in[k]))
        .collect();

    let matrices: Vec<BinaryMatrix> = d_in
        .into_iter()
        .chain(d_out)
        .chain(c_in)
        .chain(c_out)
        .collect();
    let weights = matrices
        .iter()
        .map(|m| Rc::new(aggregation_weights(m)))
        .collect();
    Ok(ProximityStack {
        n: g.n,
        k_max,
        matrices,
        weights,
    })
}

impl ProximityStack {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn branch_count(&self) -> usize {
        4 * self.k_max
    }

    /// Canonical `(kind, k)` pairs in branch order.
    pub fn branch_order(&self) -> Vec<(ProximityKind, usize)> {
        ProximityKind::ALL
            .iter()
            .flat_map(|&kind| (1..=self.k_max).map(move |k| (kind, k)))
            .collect()
    }

    fn index(&self, kind: ProximityKind, k: usize) -> usize {
        debug_assert!((1..=self.k_max).contains(&k));
        kind.tag() as usize * self.k_max + (k - 1)
    }

    pub fn matrix(&self, kind: ProximityKind, k: usize) -> &BinaryMatrix {
        &self.matrices[self.index(kind, k)]
    }

    pub fn weights_for(&self, branch: usize) -> Rc<SparseMatrix> {
        Rc::clone(&self.weights[branch])
    }

    pub fn matrix_at(&self, branch: usize) -> &BinaryMatrix {
        &self.matrices[branch]
    }

    /// Serializes the matrices into a small versioned container; weights are
    /// rederived on load, so a reload is bit-exact by construction.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(STACK_MAGIC);
        push_u32(&mut buf, STACK_VERSION);
        push_u64(&mut buf, self.n as u64);
        push_u32(&mut buf, self.k_max as u32);
        for (idx, (kind, k)) in self.branch_order().into_iter().enumerate() {
            let m = &self.matrices[idx];
            buf.push(kind.tag());
            push_u32(&mut buf, k as u32);
            push_u64(&mut buf, m.nnz() as u64);
            for &p in &m.row_ptr {
                push_u64(&mut buf, p as u64);
            }
            for &c in &m.cols {
                push_u32(&mut buf, c);
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path)?;
        let mut r = Reader::new(&buf);
        if r.take(STACK_MAGIC.len())? != STACK_MAGIC {
            return Err(Error::Format("not a proximity stack cache".to_string()));
        }
        let version = r.u32()?;
        if version != STACK_VERSION {
            return Err(Error::Format(format!(
                "unsupported stack cache version {version}"
            )));
        }
        let n = r.u64()? as usize;
        let k_max = r.u32()? as usize;
        let mut matrices = Vec::with_capacity(4 * k_max);
        for (kind, k) in ProximityKind::ALL
            .iter()
            .flat_map(|&kind| (1..=k_max).map(move |k| (kind, k)))
        {
            let tag = ProximityKind::from_tag(r.u8()?)?;
            let kk = r.u32()? as usize;
            if tag != kind || kk != k {
                return Err(Error::Format(format!(
                    "stack cache entry out of order: expected {kind:?}/{k}, got {tag:?}/{kk}"
                )));
            }
            let nnz = r.u64()? as usize;
            let mut row_ptr = Vec::with_capacity(n + 1);
            for _ in 0..=n {
                row_ptr.push(r.u64()? as usize);
            }
            if row_ptr.first() != Some(&0) || row_ptr.last() != Some(&nnz) {
                return Err(Error::Format("corrupt row pointers".to_string()));
            }
            let mut cols = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let c = r.u32()?;
                if c as usize >= n {
                    return Err(Error::Format(format!("column {c} out of range")));
                }
                cols.push(c);
            }
            matrices.push(BinaryMatrix { n, row_ptr, cols });
        }
        r.finish()?;
        let weights = matrices
            .iter()
            .map(|m| Rc::new(aggregation_weights(m)))
            .collect();
        Ok(ProximityStack {
            n,
            k_max,
            matrices,
            weights,
        })
    }
}

const STACK_MAGIC: &[u8] = b"DHYPRSTK";
const STACK_VERSION: u32 = 1;

pub(crate) fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Format("unexpected end of file".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}
