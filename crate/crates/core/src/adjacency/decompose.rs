use serde::{Deserialize, Serialize};

use super::{Matrix, ZERO_THRESHOLD};

/// Square matrix with at most one nonzero per column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternedSparseMatrix {
    pub n: usize,
    /// For each column k, the single (row, value) entry if present.
    pub entries: Vec<Option<(usize, f64)>>,
}

impl PatternedSparseMatrix {
    pub fn empty(n: usize) -> Self {
        PatternedSparseMatrix {
            n,
            entries: vec![None; n],
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (k, e) in self.entries.iter().enumerate() {
            if let Some((i, v)) = e {
                m.set(*i, k, *v);
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().flatten().count()
    }
}

/// Split `m` into patterned sparse matrices whose sum is `m`.
///
/// Each column's nonzeros, in ascending row order, go to the first, second, …
/// output matrix, so the number of outputs equals the largest column count.
pub fn decompose(m: &Matrix) -> Vec<PatternedSparseMatrix> {
    assert!(m.is_square(), "decompose expects a square matrix");
    let n = m.rows;
    let mut out: Vec<PatternedSparseMatrix> = Vec::new();
    for k in 0..n {
        let mut slot = 0;
        for i in 0..n {
            let v = m.get(i, k);
            if v.abs() <= ZERO_THRESHOLD {
                continue;
            }
            if slot == out.len() {
                out.push(PatternedSparseMatrix::empty(n));
            }
            out[slot].entries[k] = Some((i, v));
            slot += 1;
        }
    }
    out
}

/// Rows feeding output column `k`, one per decomposed matrix that has an
/// entry there, in decomposition order.
pub fn column_rows(decomp: &[PatternedSparseMatrix], k: usize) -> Vec<usize> {
    decomp
        .iter()
        .filter_map(|a| a.entries[k].map(|(i, _)| i))
        .collect()
}
