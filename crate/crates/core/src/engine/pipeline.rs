use std::path::Path;

use serde::Serialize;

use crate::adjacency::{chain, merge_spatial, skeleton25, AdjacencySet};
use crate::packing::{pack, GraphTensor};
use crate::sim::{Evaluator, HocCounter, OpCounts, OpRecord, SimContext};

use super::head::{fully_connected, global_avg_pool, EncryptedScores, PooledMap};
use super::model::{layer_label, LayerSpec, ModelSpec};
use super::pointwise::{affine_norm, poly_activation};
use super::reference::ModelOutput;
use super::spatial::spatial_conv;
use super::temporal::temporal_conv;
use super::weights::{LayerWeights, ModelWeights};
use super::{EncryptedFeatureMap, EngineError, Format};

/// Resolve an adjacency reference for a graph of `joints` nodes.
/// Relative paths are taken from `base` when given.
pub fn resolve_adjacency(
    name: &str,
    joints: usize,
    base: Option<&Path>,
) -> Result<AdjacencySet, EngineError> {
    let adj = match name {
        "builtin:skeleton25" => {
            if joints != 25 {
                return Err(EngineError::Spec(format!(
                    "builtin:skeleton25 needs J=25, model has J={joints}"
                )));
            }
            skeleton25()
        }
        "builtin:chain" => chain(joints),
        "builtin:isolated" => AdjacencySet::isolated(joints),
        other if other.starts_with("builtin:") => {
            return Err(EngineError::Spec(format!(
                "unknown builtin adjacency {other}"
            )));
        }
        path => {
            let p = Path::new(path);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            AdjacencySet::load(&p)?
        }
    };
    if adj.joints != joints {
        return Err(EngineError::Spec(format!(
            "adjacency has {} nodes, model has J={joints}",
            adj.joints
        )));
    }
    Ok(adj)
}

/// A spec with its resolved graph and weights.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub adjacency: AdjacencySet,
    pub weights: ModelWeights,
}

impl Model {
    /// Resolve the adjacency and load (or seed-generate) weights.
    pub fn from_spec(spec: ModelSpec, base: Option<&Path>) -> Result<Model, EngineError> {
        spec.stages()?;
        let adjacency = resolve_adjacency(&spec.adjacency, spec.input.joints, base)?;
        let parts = adjacency.partitions.len();
        let weights = match &spec.weights {
            Some(w) => {
                let p = Path::new(w);
                let p = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                ModelWeights::load(&p, &spec, parts)?
            }
            None => ModelWeights::random(&spec, parts, spec.seed),
        };
        Model::new(spec, adjacency, weights)
    }

    pub fn new(
        spec: ModelSpec,
        adjacency: AdjacencySet,
        weights: ModelWeights,
    ) -> Result<Model, EngineError> {
        spec.stages()?;
        weights.check(&spec, adjacency.partitions.len())?;
        if adjacency.joints != spec.input.joints {
            return Err(EngineError::Spec("adjacency size differs from J".into()));
        }
        Ok(Model {
            spec,
            adjacency,
            weights,
        })
    }

    pub fn load(path: &Path) -> Result<Model, EngineError> {
        Model::from_spec(ModelSpec::load(path)?, path.parent())
    }

    pub fn depth(&self) -> u32 {
        self.spec.depth()
    }

    /// Same weights with a different batch size.
    pub fn with_batch(&self, batch: usize) -> Model {
        Model {
            spec: self.spec.with_batch(batch),
            ..self.clone()
        }
    }

    /// Same weights with the given activations (by activation ordinal) pruned.
    pub fn with_pruned(&self, activations: &[usize]) -> Result<Model, EngineError> {
        Ok(Model {
            spec: self.spec.with_pruned(activations)?,
            ..self.clone()
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep the per-operation log.
    pub log: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerHoc {
    pub label: String,
    pub kind: String,
    pub counts: OpCounts,
}

/// Per-layer and total operation counts of one run.
#[derive(Clone, Debug)]
pub struct HocReport {
    pub per_layer: Vec<LayerHoc>,
    pub total: OpCounts,
    pub counter: HocCounter,
}

impl HocReport {
    /// Sum over layers of the given kind (`spatial`, `temporal`, `act`, ...).
    pub fn by_kind(&self, kind: &str) -> OpCounts {
        self.per_layer
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.counts)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelStep {
    pub label: String,
    pub level_in: u32,
    pub level_out: u32,
}

#[derive(Clone, Debug)]
pub struct InferenceOutput {
    pub format: Format,
    pub output: ModelOutput,
    pub hoc: HocReport,
    pub levels: Vec<LevelStep>,
    /// Ciphertexts holding the packed input.
    pub input_cts: usize,
    pub log: Option<Vec<OpRecord>>,
}

impl InferenceOutput {
    /// Levels consumed by the whole run.
    pub fn levels_used(&self) -> u32 {
        self.levels.iter().map(|s| s.level_in - s.level_out).sum()
    }
}

enum State {
    Map(EncryptedFeatureMap),
    Pooled(PooledMap),
    Scores(EncryptedScores),
}

impl State {
    fn level(&self) -> Result<u32, EngineError> {
        match self {
            State::Map(fm) => fm.level(),
            State::Pooled(p) => Ok(p.level()),
            State::Scores(s) => Ok(s.level()),
        }
    }
}

pub fn run_model(
    model: &Model,
    x: &GraphTensor,
    format: Format,
    ctx: &SimContext,
) -> Result<InferenceOutput, EngineError> {
    run_model_with(model, x, format, ctx, &RunOptions::default())
}

/// Encrypt `x`, run every layer under `format`, decrypt the result.
pub fn run_model_with(
    model: &Model,
    x: &GraphTensor,
    format: Format,
    ctx: &SimContext,
    opts: &RunOptions,
) -> Result<InferenceOutput, EngineError> {
    let spec = &model.spec;
    spec.stages()?;
    let input = spec.input.as_array();
    if x.dims() != input {
        return Err(EngineError::Spec(format!(
            "input dims {:?}, model expects {input:?}",
            x.dims()
        )));
    }
    let total = spec.depth();
    let mut used = 0;
    for (i, layer) in spec.layers.iter().enumerate() {
        used += layer.depth();
        if used > ctx.max_level {
            return Err(EngineError::DepthExceeded {
                layer: layer_label(i, layer),
                needed: total,
                available: ctx.max_level,
            });
        }
    }

    let mut ev = Evaluator::new(ctx.clone());
    if opts.log {
        ev = ev.with_log();
    }
    let (cts, layout) = pack(x, format, ctx)?;
    let input_cts = cts.len();
    let mut state = State::Map(EncryptedFeatureMap::new(cts, layout, "input")?);
    let mut levels = Vec::with_capacity(spec.layers.len());
    let mut labels = Vec::with_capacity(spec.layers.len());

    for (i, (layer, w)) in spec.layers.iter().zip(&model.weights.layers).enumerate() {
        let label = layer_label(i, layer);
        ev.set_layer(label.clone());
        let level_in = state.level()?;
        state = match (layer, w, state) {
            (LayerSpec::Norm { .. }, LayerWeights::Norm { scale, shift }, State::Map(fm)) => {
                State::Map(affine_norm(&mut ev, &fm, scale, shift)?)
            }
            (
                LayerSpec::Spatial { .. },
                LayerWeights::Spatial {
                    partitions,
                    bias,
                    bn,
                },
                State::Map(fm),
            ) => {
                let merged =
                    merge_spatial(&model.adjacency, partitions, bias.as_deref(), bn.as_ref())?;
                State::Map(spatial_conv(&mut ev, &fm, &merged)?)
            }
            (&LayerSpec::Temporal { stride, .. }, LayerWeights::Temporal(tw), State::Map(fm)) => {
                State::Map(temporal_conv(&mut ev, &fm, tw, stride)?)
            }
            (&LayerSpec::Activation { pruned: true, .. }, _, s @ State::Map(_)) => s,
            (&LayerSpec::Activation { a, b, c, .. }, _, State::Map(fm)) => {
                State::Map(poly_activation(&mut ev, &fm, a, b, c)?)
            }
            (LayerSpec::Gap, _, State::Map(fm)) => State::Pooled(global_avg_pool(&mut ev, &fm)?),
            (LayerSpec::Fc { .. }, LayerWeights::Fc { w, bias }, State::Pooled(p)) => {
                State::Scores(fully_connected(&mut ev, &p, w, bias)?)
            }
            _ => {
                return Err(EngineError::Spec(format!(
                    "layer {label} cannot be applied here"
                )))
            }
        };
        if let State::Map(fm) = &mut state {
            fm.label = label.clone();
        }
        levels.push(LevelStep {
            label: label.clone(),
            level_in,
            level_out: state.level()?,
        });
        labels.push((label, layer.kind()));
    }

    let output = match &state {
        State::Map(fm) => ModelOutput::Map(fm.decrypt()?),
        State::Pooled(p) => ModelOutput::Pooled(p.decrypt()),
        State::Scores(s) => ModelOutput::Scores(s.decrypt()),
    };
    let counter = ev.counter().clone();
    let per_layer = labels
        .into_iter()
        .map(|(label, kind)| LayerHoc {
            counts: counter.layer(&label),
            label,
            kind: kind.to_string(),
        })
        .collect();
    Ok(InferenceOutput {
        format,
        output,
        hoc: HocReport {
            per_layer,
            total: counter.total(),
            counter,
        },
        levels,
        input_cts,
        log: ev.log().map(<[OpRecord]>::to_vec),
    })
}
