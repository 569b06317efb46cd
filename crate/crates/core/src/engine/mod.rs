//! Encrypted ST-GCN layers over AMA and row-major packings, the full
//! pipeline, and a dense plaintext oracle.
//!
//! AMA channel mixing uses one fused plaintext per (rotation r, source
//! ciphertext) term: the value placed in source block p is the coefficient
//! linking that block's input channel to the output channel of block p - r.
//! Summing `Rot(z_r, r·pad_bt)` over r < U then lands every input channel on
//! every output block in one multiplicative level and U - 1 rotations per
//! output ciphertext.

mod head;
mod model;
mod pipeline;
mod pointwise;
pub mod presets;
mod reference;
mod spatial;
mod temporal;
mod weights;

use rayon::prelude::*;
use thiserror::Error;

use crate::adjacency::AdjacencyError;
use crate::packing::{LayoutKind, PackingError, PackingLayout};
use crate::sim::{Evaluator, SimCiphertext, SimError};

pub use head::{fully_connected, global_avg_pool, EncryptedScores, PooledMap};
pub use model::{layer_label, InputDims, LayerSpec, ModelSpec, Stage};
pub use pipeline::{
    resolve_adjacency, run_model, run_model_with, HocReport, InferenceOutput, LayerHoc, LevelStep,
    Model, RunOptions,
};
pub use pointwise::{affine_norm, poly_activation};
pub use reference::{plaintext_reference, reference_forward, ModelOutput};
pub use spatial::{ama_spatial, rowmajor_spatial, spatial_conv};
pub use temporal::temporal_conv;
pub use weights::{LayerWeights, ModelWeights, TemporalWeights};

/// Packing format used for an encrypted run.
pub type Format = LayoutKind;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Packing(#[from] PackingError),
    #[error(transparent)]
    Adjacency(#[from] AdjacencyError),
    #[error("model spec: {0}")]
    Spec(String),
    #[error("weights: {0}")]
    Weights(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error(
        "depth budget exceeded at layer {layer}: model needs {needed} levels, context has {available}"
    )]
    DepthExceeded {
        layer: String,
        needed: u32,
        available: u32,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ciphertexts of one feature map plus the layout that decodes them.
#[derive(Clone, Debug)]
pub struct EncryptedFeatureMap {
    pub cts: Vec<SimCiphertext>,
    pub layout: PackingLayout,
    pub label: String,
}

impl EncryptedFeatureMap {
    pub fn new(
        cts: Vec<SimCiphertext>,
        layout: PackingLayout,
        label: impl Into<String>,
    ) -> Result<Self, EngineError> {
        let fm = EncryptedFeatureMap {
            cts,
            layout,
            label: label.into(),
        };
        fm.level()?;
        Ok(fm)
    }

    /// Shared level of all ciphertexts.
    pub fn level(&self) -> Result<u32, EngineError> {
        let first = self
            .cts
            .first()
            .ok_or_else(|| EngineError::Layout("feature map has no ciphertexts".into()))?
            .level();
        if self.cts.iter().any(|c| c.level() != first) {
            return Err(EngineError::Layout(
                "ciphertexts of one feature map differ in level".into(),
            ));
        }
        if self.cts.len() != self.layout.num_cts() {
            return Err(EngineError::Layout(format!(
                "{} ciphertexts for a layout of {}",
                self.cts.len(),
                self.layout.num_cts()
            )));
        }
        Ok(first)
    }

    pub fn decrypt(&self) -> Result<crate::packing::GraphTensor, EngineError> {
        Ok(crate::packing::unpack(&self.cts, &self.layout)?)
    }
}

/// Map `f` over `0..n` in parallel, each call on a forked evaluator; counters
/// and logs are joined back in index order.
pub(crate) fn par_map<T, F>(ev: &mut Evaluator, n: usize, f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(usize, &mut Evaluator) -> Result<T, EngineError> + Sync,
{
    let template = ev.fork();
    let results: Vec<Result<(T, Evaluator), EngineError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut child = template.fork();
            let v = f(i, &mut child)?;
            Ok((v, child))
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for r in results {
        let (v, child) = r?;
        ev.join(child);
        out.push(v);
    }
    Ok(out)
}

/// Add `term` into an optional running sum.
pub(crate) fn accumulate(
    ev: &mut Evaluator,
    acc: &mut Option<SimCiphertext>,
    term: SimCiphertext,
) -> Result<(), EngineError> {
    match acc {
        Some(a) => ev.add_assign(a, &term)?,
        None => *acc = Some(term),
    }
    Ok(())
}

/// In-block offsets of every valid (b, t) pair of an AMA layout.
pub(crate) fn bt_offsets(l: &PackingLayout) -> Vec<usize> {
    let mut v = Vec::with_capacity(l.batch * l.frames);
    for b in 0..l.batch {
        for t in 0..l.frames {
            v.push(l.bt_offset(b, t));
        }
    }
    v
}

pub(crate) fn require_kind(
    l: &PackingLayout,
    kind: LayoutKind,
    op: &str,
) -> Result<(), EngineError> {
    if l.kind != kind {
        return Err(EngineError::Layout(format!(
            "{op} expects a {kind:?} layout, got {:?}",
            l.kind
        )));
    }
    Ok(())
}

pub(crate) fn require_level(level: u32, needed: u32, op: &'static str) -> Result<(), EngineError> {
    if level < needed {
        return Err(EngineError::Sim(SimError::LevelExhausted { op }));
    }
    Ok(())
}
