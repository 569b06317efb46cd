//! Analytical operation counts, multiplicative depth and HE parameter
//! selection.
//!
//! Three layers of prediction live here:
//! * [`matmul_hoc`]: closed forms for one dense multi-channel matrix product.
//! * [`layer_hoc`] / [`model_hoc`]: the analytic per-layer and per-method
//!   formulas, evaluated verbatim (`log` is base 2).
//! * [`schedule`]: an exact count of what the engine executes for a spec,
//!   derived from the packing geometry and the graph's sparsity pattern.

mod params;

use serde::Serialize;
use thiserror::Error;

use crate::adjacency::{AdjacencySet, MergedSpatialMatrix};
use crate::engine::{layer_label, HocReport, LayerHoc, LayerSpec, ModelSpec};
use crate::packing::{LayoutKind, PackingError, PackingLayout};
use crate::sim::OpCounts;

pub use params::{
    modulus_bits, select_params, select_params_with_margin, HeParams, SecurityTable, DEFAULT_MARGIN_BITS, DEFAULT_SECURITY_BITS,
};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("no polynomial degree supports {q_bits} modulus bits at {security} bits of security")]
    NoParameters { q_bits: u32, security: u32 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Packing(#[from] PackingError),
}

/// Multiplicative depth of a spec.
pub fn depth(spec: &ModelSpec) -> u32 {
    spec.depth()
}

/// Operation counts of one C-in, C-out 1×1 convolution merged with a dense
/// J×J adjacency on B·C ciphertexts.
///
/// AMA assumes each ciphertext carries J/B channel blocks; when B does not
/// divide J the rotation term uses ceil(J/B). The AMA PMult product
/// J·J·(BC/J)·C is evaluated as B·C·J·C so it stays integral.
pub fn matmul_hoc(fmt: LayoutKind, b: u64, c: u64, j: u64) -> OpCounts {
    let (rot, pmult) = match fmt {
        LayoutKind::RowMajor => (b * c * (2 * j - 2), b * c * (2 * j - 1) * c),
        LayoutKind::Ama => (b * c * (j.div_ceil(b) - 1), b * c * j * c),
    };
    OpCounts {
        rot,
        pmult,
        cmult: 0,
        add: pmult - b * c,
        rescale: pmult,
    }
}

/// Counts as reals, for formulas with fractional terms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HocRow {
    pub layer: String,
    pub rot: f64,
    pub pmult: f64,
    pub cmult: f64,
    pub add: f64,
}

impl HocRow {
    pub fn new(layer: impl Into<String>, rot: f64, pmult: f64, cmult: f64, add: f64) -> Self {
        HocRow {
            layer: layer.into(),
            rot,
            pmult,
            cmult,
            add,
        }
    }

    pub fn from_counts(layer: impl Into<String>, c: &OpCounts) -> Self {
        HocRow::new(
            layer,
            c.rot as f64,
            c.pmult as f64,
            c.cmult as f64,
            c.add as f64,
        )
    }

    pub fn total(&self) -> f64 {
        self.rot + self.pmult + self.cmult + self.add
    }

    pub fn get(&self, op: &str) -> Option<f64> {
        match op {
            "rot" => Some(self.rot),
            "pmult" => Some(self.pmult),
            "cmult" => Some(self.cmult),
            "add" => Some(self.add),
            _ => None,
        }
    }

    pub const OPS: [&'static str; 4] = ["rot", "pmult", "cmult", "add"];
}

/// Symbols of the layer and model formulas.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HocFormulaInput {
    pub b: f64,
    pub c: f64,
    /// Output channels.
    pub o: f64,
    pub t: f64,
    pub j: f64,
    pub k: f64,
    /// Channel blocks per AMA ciphertext.
    pub u: f64,
    /// AMA ciphertext count.
    pub n_a: f64,
    /// Row-major ciphertext count.
    pub n_r: f64,
    /// Spatial and temporal conv layer counts.
    pub s_p: f64,
    pub t_e: f64,
    /// Activation layers.
    pub a: f64,
    /// Valid elements of the merged adjacency.
    pub v: f64,
    /// Diagonals of the merged adjacency.
    pub d: f64,
    /// Output classes.
    pub c_s: f64,
    /// Polynomial degree (twice the slot count).
    pub r: f64,
    /// Samples.
    pub n: f64,
}

/// Shape summary of a uniform-width ST-GCN used to fill [`HocFormulaInput`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniformConfig {
    pub batch: usize,
    pub channels: usize,
    pub frames: usize,
    pub joints: usize,
    pub kernel: usize,
    pub slot_count: usize,
    pub spatial_layers: usize,
    pub temporal_layers: usize,
    pub activations: usize,
    pub classes: usize,
    pub samples: usize,
}

impl HocFormulaInput {
    /// Derive U and N_a from the AMA geometry and N_r = B·C·samples; V and D
    /// come from the adjacency pattern.
    pub fn from_config(
        cfg: &UniformConfig,
        pattern_valid: usize,
        diagonals: usize,
    ) -> Result<Self, CostError> {
        let l = PackingLayout::ama(
            cfg.slot_count,
            cfg.batch,
            cfg.channels,
            cfg.frames,
            cfg.joints,
        )?;
        Ok(HocFormulaInput {
            b: cfg.batch as f64,
            c: cfg.channels as f64,
            o: cfg.channels as f64,
            t: cfg.frames as f64,
            j: cfg.joints as f64,
            k: cfg.kernel as f64,
            u: l.channels_per_ct as f64,
            n_a: l.num_cts() as f64,
            n_r: (cfg.batch * cfg.channels * cfg.samples) as f64,
            s_p: cfg.spatial_layers as f64,
            t_e: cfg.temporal_layers as f64,
            a: cfg.activations as f64,
            v: pattern_valid as f64,
            d: diagonals as f64,
            c_s: cfg.classes as f64,
            r: (2 * cfg.slot_count) as f64,
            n: cfg.samples as f64,
        })
    }
}

impl HocFormulaInput {
    /// Symbols for an arbitrary model at `slot_count` slots.
    ///
    /// C is the widest convolution input, O the first spatial output width,
    /// U and N_a come from the AMA layout of a C-channel map, N_r = B·C, K the
    /// largest temporal kernel, and C_s the class count. A is the number of
    /// N_a-ciphertext activations with the same CMult count as the model's
    /// AMA schedule, so narrow early activations count fractionally.
    pub fn for_model(spec: &ModelSpec, graph: &GraphStats, slot_count: usize) -> Result<Self, CostError> {
        let d = spec.input;
        let mut c = 0;
        let mut o = None;
        let mut k = 1;
        let mut classes = 0;
        let (mut s_p, mut t_e) = (0, 0);
        for l in &spec.layers {
            match *l {
                LayerSpec::Spatial { c_in, c_out, .. } => {
                    c = c.max(c_in);
                    o.get_or_insert(c_out);
                    s_p += 1;
                }
                LayerSpec::Temporal { c_in, kernel, .. } => {
                    c = c.max(c_in);
                    k = k.max(kernel);
                    t_e += 1;
                }
                LayerSpec::Fc { classes: n, .. } => classes = n,
                _ => {}
            }
        }
        if c == 0 {
            return Err(CostError::Invalid("model has no convolution layers".into()));
        }
        let l = PackingLayout::ama(slot_count, d.batch, c, d.frames, d.joints)?;
        let n_a = l.num_cts() as f64;
        let act_cmult: u64 = schedule(spec, graph, LayoutKind::Ama, slot_count)?
            .iter()
            .filter(|l| l.kind == "act")
            .map(|l| l.counts.cmult)
            .sum();
        Ok(HocFormulaInput {
            b: d.batch as f64,
            c: c as f64,
            o: o.unwrap_or(c) as f64,
            t: d.frames as f64,
            j: d.joints as f64,
            k: k as f64,
            u: l.channels_per_ct as f64,
            n_a,
            n_r: (d.batch * c) as f64,
            s_p: s_p as f64,
            t_e: t_e as f64,
            a: act_cmult as f64 / n_a,
            v: graph.valid() as f64,
            d: graph.diagonals.len() as f64,
            c_s: classes as f64,
            r: (2 * slot_count) as f64,
            n: 1.0,
        })
    }
}

/// Per-layer rows (S-Conv, T-Conv, GAP, FC, Activation) of the analytic
/// breakdown, evaluated as printed.
pub fn layer_hoc(fmt: LayoutKind, p: &HocFormulaInput) -> Vec<HocRow> {
    let HocFormulaInput {
        c,
        o,
        t,
        j,
        k,
        u,
        n_a,
        n_r,
        s_p,
        t_e,
        a,
        v,
        d,
        c_s,
        r,
        n,
        ..
    } = *p;
    let lg = f64::log2;
    match fmt {
        LayoutKind::Ama => vec![
            HocRow::new(
                "S-Conv",
                j * (s_p + 1.0) * (o / u) * (u - 1.0),
                n_a * (v / j) * o * s_p,
                0.0,
                (n_a * (v / j) * o - n_a) * s_p,
            ),
            HocRow::new(
                "T-Conv",
                n_a * (k - 1.0) * (t_e + 1.0) + j * (u - 1.0) * (o / u) * s_p,
                n_a * o * k * (t_e + 1.0),
                0.0,
                (n_a * o * k - n_a) * (t_e + 1.0),
            ),
            HocRow::new("GAP", c / u * lg(t / 2.0), 0.0, 0.0, c / u * (j - 1.0)),
            HocRow::new("FC", c / u * c_s, c / u * c_s, 0.0, c / u * c_s),
            HocRow::new("Activation", 0.0, 2.0 * n_a * a, n_a * a, 2.0 * n_a * a),
        ],
        LayoutKind::RowMajor => vec![
            HocRow::new(
                "S-Conv",
                n_r * (d - 1.0) * s_p,
                n_r * d * c * (s_p + 1.0),
                0.0,
                (n_r * o * k - n_r) * (s_p + 1.0),
            ),
            HocRow::new(
                "T-Conv",
                n_r * (k - 1.0) * (t_e + 1.0),
                n_r * k * o * (t_e + 1.0),
                0.0,
                (n_r * k * o - n_r) * (t_e + 1.0),
            ),
            HocRow::new(
                "GAP",
                n_r / n * lg(r / 2.0),
                0.0,
                0.0,
                n_r / n + n_r / n * lg(r / 2.0),
            ),
            HocRow::new("FC", c_s, n_r / n * c_s, 0.0, n_r / n * c_s),
            HocRow::new("Activation", 0.0, n_r * 2.0 * a, n_r * a, n_r * a),
        ],
    }
}

/// Frameworks compared at model level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Chet,
    FastHear,
    AmaFormula,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Chet, Method::FastHear, Method::AmaFormula];

    pub fn name(self) -> &'static str {
        match self {
            Method::Chet => "CHET",
            Method::FastHear => "F-HEAR",
            Method::AmaFormula => "AMA-formula",
        }
    }
}

/// Whole-model counts of a method, evaluated as printed.
pub fn model_hoc(method: Method, p: &HocFormulaInput) -> HocRow {
    let HocFormulaInput {
        c,
        o,
        t,
        j,
        k,
        u,
        n_a,
        n_r,
        s_p,
        t_e,
        a,
        v,
        d,
        c_s,
        r,
        n,
        ..
    } = *p;
    let lg = f64::log2;
    let (rot, pmult, add, cmult) = match method {
        Method::Chet => (
            n_r * (d - 1.0) * (s_p + 1.0) + n_r * (k - 1.0) * (t_e + 2.0) + n_r * lg(r / 2.0) + c_s,
            n_r * d * o * (s_p + 2.0)
                + n_r * k * o * (t_e + 4.0)
                + n_r * 2.0 * a * 2.0
                + n_r / n * c_s,
            (n_r * d * o - n_r) * (s_p + 2.0)
                + (n_r * k * o - n_r) * (t_e + 4.0)
                + n_r * a * 2.0
                + n_r / n
                + n_r / 2.0 * lg(r / 2.0)
                + n_r / n * c_s,
            n_r * a * 2.0,
        ),
        Method::FastHear => (
            n_r * (d - 1.0) * s_p + n_r * (k - 1.0) * (t_e + 1.0) + n_r / n * lg(r / 2.0) + c_s,
            n_r * d * o * (s_p + 1.0)
                + n_r * k * o * (t_e + 1.0)
                + n_r * 2.0 * (a + 3.0)
                + n_r / n * c_s,
            (n_r * o * k - n_r) * (s_p + 1.0)
                + (n_r * k * o - n_r) * (t_e + 1.0)
                + n_r * (a + 3.0)
                + n_r / n
                + n_r / n * lg(r / 2.0)
                + c_s * n_r / n,
            n_r * (a + 3.0),
        ),
        Method::AmaFormula => (
            j * (s_p + 1.0 + t_e) * (o / u) * (u - 1.0)
                + n_a * (k - 1.0) * (t_e + 1.0)
                + c / u * lg(t / 2.0)
                + c / u * c_s,
            n_a * (v / j) * o * s_p + n_a * o * k * (t_e + 1.0) + c / u * c_s + 2.0 * n_a * a,
            (n_a * (v / j) * o - n_a) * s_p
                + (n_a * o * k - n_a) * (t_e + 1.0)
                + c / u * (j - 1.0)
                + (c / u) * c_s
                + 2.0 * n_a * a,
            n_a * a,
        ),
    };
    HocRow::new(method.name(), rot, pmult, cmult, add)
}

/// Fractional reduction of `ours` relative to `baseline` in total HOC.
pub fn reduction(ours: f64, baseline: f64) -> f64 {
    1.0 - ours / baseline
}

/// Sparsity summary of a graph, enough to predict spatial-layer counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub joints: usize,
    /// Nonzeros per column of the merged pattern.
    pub column_nnz: Vec<usize>,
    /// Distinct offsets j - k of the pattern.
    pub diagonals: Vec<i64>,
}

impl GraphStats {
    pub fn of(adj: &AdjacencySet) -> GraphStats {
        let pattern = adj.pattern();
        let merged = MergedSpatialMatrix::from_matrix(&pattern).expect("pattern is square");
        GraphStats {
            joints: adj.joints,
            column_nnz: (0..adj.joints)
                .map(|k| pattern.column_nnz(k, 0.0))
                .collect(),
            diagonals: merged.diagonals(),
        }
    }

    /// Valid elements V.
    pub fn valid(&self) -> usize {
        self.column_nnz.iter().sum()
    }

    /// Decomposition size m.
    pub fn max_column(&self) -> usize {
        self.column_nnz.iter().copied().max().unwrap_or(0)
    }
}

fn counts(rot: usize, pmult: usize, cmult: usize, add: usize) -> OpCounts {
    OpCounts {
        rot: rot as u64,
        pmult: pmult as u64,
        cmult: cmult as u64,
        add: add as u64,
        rescale: (pmult + cmult) as u64,
    }
}

/// Exact per-layer counts the engine performs for `spec` under `fmt`.
pub fn schedule(
    spec: &ModelSpec,
    graph: &GraphStats,
    fmt: LayoutKind,
    slot_count: usize,
) -> Result<Vec<LayerHoc>, CostError> {
    spec.stages()
        .map_err(|e| CostError::Invalid(e.to_string()))?;
    let d = spec.input;
    if graph.joints != d.joints {
        return Err(CostError::Invalid(format!(
            "graph has {} nodes, spec has J={}",
            graph.joints, d.joints
        )));
    }
    let mut l = match fmt {
        LayoutKind::Ama => PackingLayout::ama(slot_count, d.batch, d.channels, d.frames, d.joints)?,
        LayoutKind::RowMajor => {
            PackingLayout::row_major(slot_count, d.batch, d.channels, d.frames, d.joints)?
        }
    };
    let jn = d.joints;
    let b = d.batch;
    let nonzero_diags = graph.diagonals.iter().filter(|&&x| x != 0).count();
    let log2 = |x: usize| x.trailing_zeros() as usize;
    let mut out = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let n_in = l.num_cts();
        let c = match (*layer, fmt) {
            (LayerSpec::Norm { .. }, _) => counts(0, n_in, 0, n_in),
            (LayerSpec::Activation { pruned: true, .. }, _) => OpCounts::default(),
            (LayerSpec::Activation { .. }, _) => counts(0, 2 * n_in, n_in, 2 * n_in),
            (LayerSpec::Spatial { c_in, c_out, bias }, LayoutKind::Ama) => {
                let out_l = l.with_channels(c_out);
                let (u, g_in, g_out) = (l.channels_per_ct, l.cts_per_joint, out_l.cts_per_joint);
                let nonempty = graph.column_nnz.iter().filter(|&&n| n > 0).count();
                let terms: usize = graph.column_nnz.iter().map(|&n| u * g_in * n).sum();
                let adds: usize = graph
                    .column_nnz
                    .iter()
                    .filter(|&&n| n > 0)
                    .map(|&n| u * g_in * n - 1)
                    .sum();
                let _ = c_in;
                let n_out = out_l.num_cts();
                l = out_l;
                counts(
                    g_out * nonempty * (u - 1),
                    g_out * terms,
                    0,
                    g_out * adds + if bias { n_out } else { 0 },
                )
            }
            (LayerSpec::Spatial { c_in, c_out, bias }, LayoutKind::RowMajor) => {
                l = l.with_channels(c_out);
                let dn = graph.diagonals.len();
                counts(
                    b * c_in * nonzero_diags,
                    b * c_out * c_in * dn,
                    0,
                    b * c_out * (c_in * dn).saturating_sub(1) + if bias { b * c_out } else { 0 },
                )
            }
            (
                LayerSpec::Temporal {
                    c_out,
                    kernel,
                    stride,
                    bias,
                    ..
                },
                LayoutKind::Ama,
            ) => {
                let mut out_l = l.with_channels(c_out);
                if stride == 2 {
                    out_l = out_l.decimated();
                }
                let (u, g_in) = (l.channels_per_ct, l.cts_per_joint);
                let n_out = out_l.num_cts();
                l = out_l;
                counts(
                    n_in * (kernel - 1) + n_out * (u - 1),
                    n_out * u * g_in * kernel,
                    0,
                    n_out * (u * g_in * kernel - 1) + if bias { n_out } else { 0 },
                )
            }
            (
                LayerSpec::Temporal {
                    c_in,
                    c_out,
                    kernel,
                    stride,
                    bias,
                },
                LayoutKind::RowMajor,
            ) => {
                let mut out_l = l.with_channels(c_out);
                if stride == 2 {
                    out_l = out_l.decimated();
                }
                l = out_l;
                counts(
                    b * c_in * (kernel - 1),
                    b * c_out * c_in * kernel,
                    0,
                    b * c_out * (c_in * kernel - 1) + if bias { b * c_out } else { 0 },
                )
            }
            (LayerSpec::Gap, LayoutKind::Ama) => {
                let g = l.cts_per_joint;
                let steps = log2(l.frames.next_power_of_two());
                counts(g * steps, g, 0, g * (jn - 1 + steps))
            }
            (LayerSpec::Gap, LayoutKind::RowMajor) => {
                let steps = log2(l.pad_bt);
                counts(n_in * steps, n_in, 0, n_in * steps)
            }
            (LayerSpec::Fc { classes, .. }, LayoutKind::Ama) => {
                let (g, steps) = (l.cts_per_joint, log2(l.channels_per_ct));
                counts(
                    classes * steps,
                    classes * g,
                    0,
                    classes * (g - 1 + steps + 1),
                )
            }
            (LayerSpec::Fc { c_in, classes }, LayoutKind::RowMajor) => {
                counts(0, b * classes * c_in, 0, b * classes * c_in)
            }
        };
        out.push(LayerHoc {
            label: layer_label(i, layer),
            kind: layer.kind().to_string(),
            counts: c,
        });
    }
    Ok(out)
}

/// Map engine layer kinds onto the formula row names.
pub fn formula_row_name(kind: &str) -> &'static str {
    match kind {
        "spatial" => "S-Conv",
        "temporal" => "T-Conv",
        "gap" => "GAP",
        "fc" => "FC",
        "act" => "Activation",
        "norm" => "Norm",
        _ => "Other",
    }
}

/// Measured counts summed per formula row (S-Conv, T-Conv, ...).
pub fn rows_by_kind(layers: &[LayerHoc]) -> Vec<HocRow> {
    let mut rows: Vec<HocRow> = Vec::new();
    for l in layers {
        let name = formula_row_name(&l.kind);
        let row = HocRow::from_counts(name, &l.counts);
        match rows.iter_mut().find(|r| r.layer == name) {
            Some(r) => {
                r.rot += row.rot;
                r.pmult += row.pmult;
                r.cmult += row.cmult;
                r.add += row.add;
            }
            None => rows.push(row),
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffRow {
    pub layer: String,
    pub op: String,
    pub measured: f64,
    pub analytic: f64,
    /// measured - analytic
    pub diff: f64,
}

/// Signed per-layer, per-op differences between two sets of rows matched by
/// layer name; a row missing on one side counts as zero there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reconciliation {
    pub rows: Vec<DiffRow>,
}

impl Reconciliation {
    pub fn is_exact(&self) -> bool {
        self.rows.iter().all(|r| r.diff == 0.0)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &DiffRow> {
        self.rows.iter().filter(|r| r.diff != 0.0)
    }

    pub fn max_abs_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.diff.abs()).fold(0.0, f64::max)
    }
}

pub fn reconcile(measured: &[HocRow], analytic: &[HocRow]) -> Reconciliation {
    let mut names: Vec<&str> = measured.iter().map(|r| r.layer.as_str()).collect();
    for r in analytic {
        if !names.contains(&r.layer.as_str()) {
            names.push(&r.layer);
        }
    }
    let find = |rows: &[HocRow], name: &str, op: &str| {
        rows.iter()
            .find(|r| r.layer == name)
            .and_then(|r| r.get(op))
            .unwrap_or(0.0)
    };
    let mut rows = Vec::new();
    for name in names {
        for op in HocRow::OPS {
            let (m, a) = (find(measured, name, op), find(analytic, name, op));
            rows.push(DiffRow {
                layer: name.to_string(),
                op: op.to_string(),
                measured: m,
                analytic: a,
                diff: m - a,
            });
        }
    }
    Reconciliation { rows }
}

/// Exact per-layer comparison of a run against its [`schedule`].
pub fn reconcile_report(measured: &HocReport, predicted: &[LayerHoc]) -> Reconciliation {
    let m: Vec<HocRow> = measured
        .per_layer
        .iter()
        .map(|l| HocRow::from_counts(&l.label, &l.counts))
        .collect();
    let p: Vec<HocRow> = predicted
        .iter()
        .map(|l| HocRow::from_counts(&l.label, &l.counts))
        .collect();
    reconcile(&m, &p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_rowmajor_wide_shape() {
        let c = matmul_hoc(LayoutKind::RowMajor, 1, 64, 25);
        assert_eq!((c.rot, c.pmult, c.add), (3072, 200_704, 200_640));
    }

    #[test]
    fn matmul_ama_wide_shape() {
        // 25·25·(64/25)·64 = 64·25·64
        let c = matmul_hoc(LayoutKind::Ama, 1, 64, 25);
        assert_eq!((c.rot, c.pmult, c.add), (1536, 102_400, 102_336));
        assert_eq!(matmul_hoc(LayoutKind::Ama, 4, 8, 4).rot, 0);
    }

    fn reference_input() -> HocFormulaInput {
        HocFormulaInput {
            b: 1.0,
            c: 128.0,
            o: 64.0,
            t: 256.0,
            j: 25.0,
            k: 9.0,
            u: 32.0,
            n_a: 100.0,
            n_r: 128.0,
            s_p: 3.0,
            t_e: 3.0,
            a: 5.0,
            v: 73.0,
            d: 19.0,
            c_s: 60.0,
            r: 16384.0,
            n: 1.0,
        }
    }

    #[test]
    fn reference_input_derived_from_preset() {
        let spec = crate::engine::presets::stgcn3_64();
        let g = GraphStats::of(&crate::adjacency::skeleton25());
        assert_eq!(HocFormulaInput::for_model(&spec, &g, 8192).unwrap(), reference_input());
    }

    #[test]
    fn model_formulas_plugged() {
        let p = reference_input();
        let chet = model_hoc(Method::Chet, &p);
        // rot: 128·18·4 + 128·8·5 + 128·13 + 60
        assert_eq!(chet.rot, 9216.0 + 5120.0 + 1664.0 + 60.0);
        assert_eq!(chet.cmult, 1280.0);
        let ours = model_hoc(Method::AmaFormula, &p);
        assert_eq!(ours.cmult, 500.0);
        assert!((chet.total() - 2_624_636.0).abs() < 1.0, "{}", chet.total());
        assert!((ours.total() - 589_622.0).abs() < 1.0, "{}", ours.total());
    }

    #[test]
    fn layer_formula_examples() {
        let mut p = reference_input();
        p.c = 64.0;
        let ama = layer_hoc(LayoutKind::Ama, &p);
        assert_eq!(ama[2].rot, 14.0);
        assert_eq!(ama[4].cmult, p.n_a * p.a);
        let rm = layer_hoc(LayoutKind::RowMajor, &p);
        assert_eq!(rm[3].rot, 60.0);
    }

    #[test]
    fn reconcile_flags_differences() {
        let a = vec![HocRow::new("x", 1.0, 2.0, 0.0, 3.0)];
        assert!(reconcile(&a, &a).is_exact());
        assert!(reconcile(&[], &[]).is_exact());
        let b = vec![HocRow::new("x", 1.0, 2.0, 0.0, 4.0)];
        let r = reconcile(&a, &b);
        assert_eq!(r.mismatches().count(), 1);
        assert_eq!(r.max_abs_diff(), 1.0);
    }
}
