//! Normalized adjacency, 1×1 spatial-conv merging and patterned sparse
//! decomposition.
//!
//! Orientation: a merged matrix `M` maps input joint `j` to output joint `k`
//! through `M[j][k]`, i.e. `out[k] = Σ_j M[j][k] · in[j]`. Column `k` therefore
//! lists the input joints feeding output joint `k`.

mod decompose;
mod matrix;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompose::{column_rows, decompose, PatternedSparseMatrix};
pub use matrix::Matrix;

/// Magnitudes at or below this count as structural zeros.
pub const ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AdjacencyError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("adjacency entries must be nonnegative")]
    Negative,
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("edge ({0}, {1}) out of range for J = {2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("adjacency file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// D̃^{-1/2} (A + I) D̃^{-1/2}, with D̃ the row-sum degree matrix of A + I.
pub fn normalize(adj: &Matrix) -> Result<Matrix, AdjacencyError> {
    if !adj.is_square() {
        return Err(AdjacencyError::NotSquare(adj.rows, adj.cols));
    }
    if adj.data.iter().any(|v| *v < 0.0) {
        return Err(AdjacencyError::Negative);
    }
    let n = adj.rows;
    let mut a = adj.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a.get(i, j)).sum::<f64>().sqrt().recip())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, inv_sqrt[i] * a.get(i, j) * inv_sqrt[j]);
        }
    }
    Ok(a)
}

/// Raw 0/1 partition matrices; self-loops are added by [`normalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySet {
    pub joints: usize,
    pub partitions: Vec<Matrix>,
}

#[derive(Deserialize)]
struct AdjacencyFile {
    #[serde(rename = "J")]
    joints: usize,
    partitions: Vec<PartitionFile>,
}

#[derive(Deserialize)]
struct PartitionFile {
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    directed: bool,
}

impl AdjacencySet {
    pub fn new(joints: usize, partitions: Vec<Matrix>) -> Result<Self, AdjacencyError> {
        if partitions.is_empty() {
            return Err(AdjacencyError::Dim(
                "at least one partition required".into(),
            ));
        }
        for p in &partitions {
            if p.rows != joints || p.cols != joints {
                return Err(AdjacencyError::Dim(format!(
                    "partition is {}x{}, expected {joints}x{joints}",
                    p.rows, p.cols
                )));
            }
            if p.data.iter().any(|v| *v < 0.0) {
                return Err(AdjacencyError::Negative);
            }
        }
        Ok(AdjacencySet { joints, partitions })
    }

    /// Single partition from 0-based edges; undirected unless `directed`.
    pub fn from_edges(
        joints: usize,
        edges: &[(usize, usize)],
        directed: bool,
    ) -> Result<Self, AdjacencyError> {
        Ok(AdjacencySet::new(
            joints,
            vec![edge_matrix(joints, edges, directed)?],
        )?)
    }

    /// Self-loops only.
    pub fn isolated(joints: usize) -> Self {
        AdjacencySet {
            joints,
            partitions: vec![Matrix::zeros(joints, joints)],
        }
    }

    pub fn normalized(&self) -> Result<Vec<Matrix>, AdjacencyError> {
        self.partitions.iter().map(normalize).collect()
    }

    /// Structural pattern of Σ_p norm(A_p), in merged (input → output) orientation.
    pub fn pattern(&self) -> Matrix {
        let n = self.joints;
        let mut m = Matrix::zeros(n, n);
        for p in &self.partitions {
            for k in 0..n {
                for j in 0..n {
                    if j == k || p.get(k, j) != 0.0 {
                        m.set(j, k, 1.0);
                    }
                }
            }
        }
        m
    }

    /// JSON `{J, partitions:[{edges:[[i,j],…], directed?}]}` (0-based), or a
    /// dense 0/1 CSV matrix (one partition). Chosen by file extension.
    pub fn load(path: &Path) -> Result<Self, AdjacencyError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AdjacencyError> {
        let f: AdjacencyFile =
            serde_json::from_str(text).map_err(|e| AdjacencyError::Format(e.to_string()))?;
        let parts = f
            .partitions
            .iter()
            .map(|p| {
                let edges: Vec<(usize, usize)> = p.edges.iter().map(|e| (e[0], e[1])).collect();
                edge_matrix(f.joints, &edges, p.directed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        AdjacencySet::new(f.joints, parts)
    }

    pub fn from_csv(text: &str) -> Result<Self, AdjacencyError> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| AdjacencyError::Format(format!("{v:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = Matrix::from_rows(&rows)
            .ok_or_else(|| AdjacencyError::Format("ragged CSV rows".into()))?;
        if !m.is_square() {
            return Err(AdjacencyError::NotSquare(m.rows, m.cols));
        }
        AdjacencySet::new(m.rows, vec![m])
    }
}

fn edge_matrix(
    joints: usize,
    edges: &[(usize, usize)],
    directed: bool,
) -> Result<Matrix, AdjacencyError> {
    let mut m = Matrix::zeros(joints, joints);
    for &(i, j) in edges {
        if i >= joints || j >= joints {
            return Err(AdjacencyError::EdgeOutOfRange(i, j, joints));
        }
        m.set(i, j, 1.0);
        if !directed {
            m.set(j, i, 1.0);
        }
    }
    Ok(m)
}

/// Stand-in 25-node skeleton: a reconstruction, not the NTU RGB+D graph.
///
/// Starts from the 24 NTU bones and reroutes three of them so the graph is a
/// single path. Every merged column then has at most 3 nonzeros (m = 3), there
/// are 73 valid elements, and the nonzero diagonals number 19.
pub fn skeleton25() -> AdjacencySet {
    const EDGES: [(usize, usize); 24] = [
        (0, 1),
        (1, 20),
        (2, 20),
        (3, 2),
        (4, 8),
        (5, 4),
        (6, 5),
        (7, 6),
        (9, 8),
        (10, 9),
        (11, 10),
        (12, 0),
        (13, 12),
        (14, 13),
        (15, 14),
        (15, 23),
        (16, 21),
        (17, 16),
        (18, 17),
        (19, 18),
        (21, 22),
        (22, 7),
        (23, 24),
        (24, 11),
    ];
    AdjacencySet::from_edges(25, &EDGES, false).expect("static edge list is valid")
}

/// Undirected path 0–1–…–(J-1).
pub fn chain(joints: usize) -> AdjacencySet {
    let edges: Vec<_> = (1..joints).map(|i| (i - 1, i)).collect();
    AdjacencySet::from_edges(joints, &edges, false).expect("chain edges are valid")
}

/// Per-output-channel batch-norm parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn scale_shift(&self) -> (Vec<f64>, Vec<f64>) {
        let scale: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.var)
            .map(|(g, v)| g / (v + self.eps).sqrt())
            .collect();
        let shift = self
            .beta
            .iter()
            .zip(&self.mean)
            .zip(&scale)
            .map(|((b, m), s)| b - m * s)
            .collect();
        (scale, shift)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Adjacency and 1×1 conv weights folded into one J×J matrix per channel pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergedSpatialMatrix {
    pub joints: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Indexed `c * c_out + o`; entry (j, k) feeds input joint j to output joint k.
    pub mats: Vec<Matrix>,
    pub bias: Option<Vec<f64>>,
    /// Shared structural pattern (1.0 where any partition has an entry).
    pub pattern: Matrix,
}

impl MergedSpatialMatrix {
    pub fn matrix(&self, c: usize, o: usize) -> &Matrix {
        &self.mats[c * self.c_out + o]
    }

    /// Decomposition of the shared pattern (values are 1.0).
    pub fn decomposition(&self) -> Vec<PatternedSparseMatrix> {
        decompose(&self.pattern)
    }

    /// Number of structurally valid elements.
    pub fn valid_elements(&self) -> usize {
        self.pattern.nnz(ZERO_THRESHOLD)
    }

    /// Distinct offsets `d = j - k` over the pattern, ascending.
    pub fn diagonals(&self) -> Vec<i64> {
        let n = self.joints;
        let mut set = BTreeSet::new();
        for j in 0..n {
            for k in 0..n {
                if self.pattern.get(j, k) != 0.0 {
                    set.insert(j as i64 - k as i64);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Single channel pair built directly from a matrix (pattern = its nonzeros).
    pub fn from_matrix(m: &Matrix) -> Result<Self, AdjacencyError> {
        Self::from_matrices(m.rows, 1, 1, vec![m.clone()], None)
    }

    /// Channel pairs from explicit matrices; the pattern is their union.
    pub fn from_matrices(
        joints: usize,
        c_in: usize,
        c_out: usize,
        mats: Vec<Matrix>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self, AdjacencyError> {
        if mats.len() != c_in * c_out {
            return Err(AdjacencyError::Dim(format!(
                "expected {} matrices, got {}",
                c_in * c_out,
                mats.len()
            )));
        }
        let mut pattern = Matrix::zeros(joints, joints);
        for m in &mats {
            if m.rows != joints || m.cols != joints {
                return Err(AdjacencyError::Dim("matrix size differs from J".into()));
            }
            for (p, v) in pattern.data.iter_mut().zip(&m.data) {
                if v.abs() > ZERO_THRESHOLD {
                    *p = 1.0;
                }
            }
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(AdjacencyError::Dim(format!(
                    "bias has {} entries, expected {c_out}",
                    b.len()
                )));
            }
        }
        Ok(MergedSpatialMatrix {
            joints,
            c_in,
            c_out,
            mats,
            bias,
            pattern,
        })
    }
}

/// Fold partitions, 1×1 weights (`weights[p]` is C_in×C_out), an optional conv
/// bias and optional batch norm into per-channel-pair matrices.
pub fn merge_spatial(
    adjs: &AdjacencySet,
    weights: &[Matrix],
    bias: Option<&[f64]>,
    bn: Option<&BatchNorm>,
) -> Result<MergedSpatialMatrix, AdjacencyError> {
    if weights.len() != adjs.partitions.len() {
        return Err(AdjacencyError::Dim(format!(
            "{} weight matrices for {} partitions",
            weights.len(),
            adjs.partitions.len()
        )));
    }
    let (c_in, c_out) = (weights[0].rows, weights[0].cols);
    if weights.iter().any(|w| w.rows != c_in || w.cols != c_out) {
        return Err(AdjacencyError::Dim(
            "partition weights differ in shape".into(),
        ));
    }
    if bias.is_some_and(|b| b.len() != c_out) || bn.is_some_and(|b| b.len() != c_out) {
        return Err(AdjacencyError::Dim(
            "bias/bn length differs from C_out".into(),
        ));
    }
    let n = adjs.joints;
    // transposed so entry (j, k) multiplies input joint j into output joint k
    let norm_t: Vec<Matrix> = adjs.normalized()?.iter().map(Matrix::transpose).collect();
    let (scale, shift) = match bn {
        Some(bn) => bn.scale_shift(),
        None => (vec![1.0; c_out], vec![0.0; c_out]),
    };
    let mut mats = Vec::with_capacity(c_in * c_out);
    for c in 0..c_in {
        for o in 0..c_out {
            let mut m = Matrix::zeros(n, n);
            for (p, nt) in norm_t.iter().enumerate() {
                m.add_scaled(nt, weights[p].get(c, o) * scale[o]);
            }
            mats.push(m);
        }
    }
    let merged_bias = if bias.is_some() || bn.is_some() {
        Some(
            (0..c_out)
                .map(|o| bias.map_or(0.0, |b| b[o]) * scale[o] + shift[o])
                .collect(),
        )
    } else {
        None
    };
    Ok(MergedSpatialMatrix {
        joints: n,
        c_in,
        c_out,
        mats,
        bias: merged_bias,
        pattern: adjs.pattern(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize(&Matrix::zeros(2, 2)).unwrap(),
            Matrix::identity(2)
        );
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(normalize(&a)
            .unwrap()
            .data
            .iter()
            .all(|v| (v - 0.5).abs() < 1e-15));
        assert_eq!(normalize(&Matrix::zeros(1, 1)).unwrap().data, vec![1.0]);
        assert!(normalize(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn merge_scalar_identity() {
        let adj = AdjacencySet::isolated(3);
        let w = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let m = merge_spatial(&adj, &[w], None, None).unwrap();
        assert_eq!(m.matrix(0, 0), &Matrix::identity(3));
        assert!(m.bias.is_none());
    }

    #[test]
    fn merge_two_partitions_is_weighted_sum() {
        let adj = AdjacencySet::new(3, vec![chain(3).partitions[0].clone(), Matrix::zeros(3, 3)])
            .unwrap();
        let w1 = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![3.0]]).unwrap();
        let m = merge_spatial(&adj, &[w1, w2], None, None).unwrap();
        let n = adj.normalized().unwrap();
        let mut expect = n[0].scaled(2.0);
        expect.add_scaled(&n[1], 3.0);
        assert!(m.matrix(0, 0).max_abs_diff(&expect.transpose()) < 1e-15);
    }

    #[test]
    fn skeleton_stand_in_statistics() {
        let s = skeleton25();
        let w = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let m = merge_spatial(&s, &[w], None, None).unwrap();
        assert_eq!(m.valid_elements(), 73);
        assert_eq!(m.decomposition().len(), 3);
        assert_eq!(m.diagonals().len(), 19);
    }

    #[test]
    fn json_and_csv_inputs() {
        let j = r#"{"J":3,"partitions":[{"edges":[[0,1]]},{"edges":[[1,2]],"directed":true}]}"#;
        let s = AdjacencySet::from_json(j).unwrap();
        assert_eq!(s.partitions.len(), 2);
        assert_eq!(s.partitions[0].get(1, 0), 1.0);
        assert_eq!(s.partitions[1].get(2, 1), 0.0);
        let c = AdjacencySet::from_csv("0,1\n1,0\n").unwrap();
        assert_eq!(c.joints, 2);
        assert!(AdjacencySet::from_json(r#"{"J":2,"partitions":[{"edges":[[0,5]]}]}"#).is_err());
        assert!(AdjacencySet::from_csv("0,1,0\n1,0,0\n").is_err());
    }
}
