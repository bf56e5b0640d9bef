//! Dense 2-D tensors, fixed sparse matrices, and the reverse-mode tape that
//! differentiates everything built from them.
//!
//! All arithmetic is 64-bit and reductions run in a fixed sequential
//! row-major order, so a run is bit-reproducible under a fixed seed.

mod adam;
mod tape;

pub use adam::{adam_step, Adam, AdamConfig, AdamParamState};
pub use tape::{Gradients, Tape, TensorId};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`. Scalars are `(1, 1)`, column vectors
/// `(n, 1)`, row vectors `(1, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "tensor of {} values cannot have shape ({rows}, {cols})",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(
                "tensor constructed from non-finite data".to_string(),
            ));
        }
        Ok(Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
            requires_grad: false,
        }
    }

    pub fn column(v: Vec<f64>) -> Self {
        Tensor {
            rows: v.len(),
            cols: 1,
            data: v,
            requires_grad: false,
        }
    }

    pub fn row(v: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: v.len(),
            data: v,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Row `i` as a slice.
    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Fixed (never trained) sparse matrix in compressed-row form. Used for the
/// aggregation-weight matrices; `Tape::sparse_matmul` multiplies it into a
/// dense tensor and backpropagates through the transpose product.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` entry lists; entries are sorted
    /// by column and duplicate columns are rejected.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut entries) in rows.into_iter().enumerate() {
            entries.sort_by_key(|&(c, _)| c);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::contract(format!(
                        "sparse row {i} has duplicate column {}",
                        w[0].0
                    )));
                }
            }
            for (c, v) in entries {
                if c as usize >= cols {
                    return Err(Error::contract(format!(
                        "sparse entry column {c} out of range (cols = {cols})"
                    )));
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            rows: n,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// `(column, value)` entries of row `i`, in ascending column order.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// `self · x` into a dense tensor.
    pub fn matmul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if self.cols != x.rows {
            return Err(Error::contract(format!(
                "sparse_matmul: ({}, {}) x ({}, {})",
                self.rows, self.cols, x.rows, x.cols
            )));
        }
        let mut out = vec![0.0; self.rows * x.cols];
        for i in 0..self.rows {
            let dst = &mut out[i * x.cols..(i + 1) * x.cols];
            for (j, v) in self.row_entries(i) {
                let src = x.row_slice(j);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(Tensor {
            rows: self.rows,
            cols: x.cols,
            data: out,
            requires_grad: false,
        })
    }

    /// `selfᵀ · g`, the backward product for `sparse_matmul`.
    pub fn transpose_matmul_dense(&self, g: &Tensor) -> Result<Tensor> {
        if self.rows != g.rows {
            return Err(Error::contract(format!(
                "sparse transpose matmul: ({}, {})ᵀ x ({}, {})",
                self.rows, self.cols, g.rows, g.cols
            )));
        }
        let mut out = vec![0.0; self.cols * g.cols];
        for i in 0..self.rows {
            let src = g.row_slice(i);
            for (j, v) in self.row_entries(i) {
                let dst = &mut out[j * g.cols..(j + 1) * g.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(Tensor {
            rows: self.cols,
            cols: g.cols,
            data: out,
            requires_grad: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_mismatch_rejected() {
        assert!(Tensor::new(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sparse_matmul_matches_dense() {
        // [[1, 0, 2], [0, 0, 0], [0, 3, 0]]
        let s = SparseMatrix::from_rows(
            3,
            vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, 3.0)]],
        )
        .unwrap();
        let x = Tensor::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = s.matmul_dense(&x).unwrap();
        assert_eq!(y.data, vec![11.0, 14.0, 0.0, 0.0, 9.0, 12.0]);

        let g = Tensor::new(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let gt = s.transpose_matmul_dense(&g).unwrap();
        assert_eq!(gt.data, vec![1.0, 1.0, 3.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn sparse_duplicate_column_rejected() {
        assert!(SparseMatrix::from_rows(2, vec![vec![(0, 1.0), (0, 2.0)]]).is_err());
    }

    #[test]
    fn matmul_identity_and_sigmoid_midpoint() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let x = tape.constant(Tensor::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let ix = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.value(ix).data, tape.value(x).data);

        let zero = tape.scalar(0.0);
        let s = tape.sigmoid(zero).unwrap();
        assert_eq!(tape.value(s).data[0], 0.5);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 3));
        assert!(tape.add(a, b).is_err());
        assert!(tape.concat_cols(a, b).is_err());
        let c = tape.constant(Tensor::zeros(2, 2));
        assert!(tape.matmul(a, c).is_err());
    }
}
