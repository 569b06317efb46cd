use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// Input tensor dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    #[serde(rename = "B")]
    pub batch: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "J")]
    pub joints: usize,
}

impl InputDims {
    pub fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.frames, self.joints]
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

/// One layer of the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Per-(channel, joint) affine map, the input batch norm of ST-GCN.
    Norm {
        channels: usize,
    },
    /// Adjacency-merged 1×1 spatial convolution over the model's graph.
    Spatial {
        c_in: usize,
        c_out: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// Temporal convolution with `kernel` taps along T and SAME zero padding.
    Temporal {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// a·x² + b·x + c, or the identity when pruned.
    Activation {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        pruned: bool,
    },
    Gap,
    Fc {
        c_in: usize,
        classes: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Norm { .. } => "norm",
            LayerSpec::Spatial { .. } => "spatial",
            LayerSpec::Temporal { .. } => "temporal",
            LayerSpec::Activation { .. } => "act",
            LayerSpec::Gap => "gap",
            LayerSpec::Fc { .. } => "fc",
        }
    }

    /// Levels consumed by this layer.
    pub fn depth(&self) -> u32 {
        match self {
            LayerSpec::Activation { pruned: true, .. } => 0,
            LayerSpec::Activation { .. } => 2,
            _ => 1,
        }
    }

    /// A default degree-2 activation (a common ReLU fit on [-4, 4]).
    pub fn activation() -> LayerSpec {
        LayerSpec::Activation {
            a: 0.125,
            b: 0.5,
            c: 0.25,
            pruned: false,
        }
    }
}

/// Label used for counters and level traces: `NN-kind`.
pub fn layer_label(index: usize, layer: &LayerSpec) -> String {
    format!("{index:02}-{}", layer.kind())
}

fn default_adjacency() -> String {
    "builtin:skeleton25".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: InputDims,
    pub layers: Vec<LayerSpec>,
    /// `builtin:skeleton25`, `builtin:chain`, `builtin:isolated`, or a file path.
    #[serde(default = "default_adjacency")]
    pub adjacency: String,
    /// Weights manifest path; random weights from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

/// Shape of the data flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Map { channels: usize, frames: usize },
    Pooled { channels: usize },
    Scores { classes: usize },
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| EngineError::Spec(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Check that layer shapes compose; returns the stage after each layer.
    pub fn stages(&self) -> Result<Vec<Stage>, EngineError> {
        let d = self.input;
        if d.as_array().contains(&0) {
            return Err(EngineError::Spec("input dims must be >= 1".into()));
        }
        let mut stage = Stage::Map {
            channels: d.channels,
            frames: d.frames,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad =
                |msg: String| EngineError::Spec(format!("layer {}: {msg}", layer_label(i, layer)));
            stage = match (*layer, stage) {
                (LayerSpec::Norm { channels }, Stage::Map { channels: c, .. }) => {
                    if channels != c {
                        return Err(bad(format!("expects {channels} channels, input has {c}")));
                    }
                    stage
                }
                (LayerSpec::Spatial { c_in, c_out, .. }, Stage::Map { channels, frames }) => {
                    if c_in != channels || c_out == 0 {
                        return Err(bad(format!(
                            "c_in {c_in} / c_out {c_out} vs input channels {channels}"
                        )));
                    }
                    Stage::Map {
                        channels: c_out,
                        frames,
                    }
                }
                (
                    LayerSpec::Temporal {
                        c_in,
                        c_out,
                        kernel,
                        stride,
                        ..
                    },
                    Stage::Map { channels, frames },
                ) => {
                    if c_in != channels || c_out == 0 {
                        return Err(bad(format!(
                            "c_in {c_in} / c_out {c_out} vs input channels {channels}"
                        )));
                    }
                    if kernel % 2 == 0 {
                        return Err(bad(format!("kernel {kernel} must be odd")));
                    }
                    if kernel > frames {
                        return Err(bad(format!("kernel {kernel} exceeds {frames} frames")));
                    }
                    if stride != 1 && stride != 2 {
                        return Err(bad(format!("stride {stride} unsupported (1 or 2)")));
                    }
                    Stage::Map {
                        channels: c_out,
                        frames: if stride == 2 {
                            frames.div_ceil(2)
                        } else {
                            frames
                        },
                    }
                }
                (LayerSpec::Activation { .. }, Stage::Map { .. }) => stage,
                (LayerSpec::Gap, Stage::Map { channels, .. }) => Stage::Pooled { channels },
                (LayerSpec::Fc { c_in, classes }, Stage::Pooled { channels }) => {
                    if c_in != channels || classes == 0 {
                        return Err(bad(format!("c_in {c_in} vs pooled channels {channels}")));
                    }
                    Stage::Scores { classes }
                }
                (_, s) => return Err(bad(format!("cannot follow {s:?}"))),
            };
            out.push(stage);
        }
        Ok(out)
    }

    /// Ordinal positions (in `layers`) of activation layers.
    pub fn activation_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Activation { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with the given activations (by activation ordinal) pruned.
    pub fn with_pruned(&self, activations: &[usize]) -> Result<ModelSpec, EngineError> {
        let acts = self.activation_layers();
        let mut spec = self.clone();
        for &a in activations {
            let li = *acts.get(a).ok_or_else(|| {
                EngineError::Spec(format!(
                    "activation index {a} out of range ({})",
                    acts.len()
                ))
            })?;
            if let LayerSpec::Activation { pruned, .. } = &mut spec.layers[li] {
                *pruned = true;
            }
        }
        Ok(spec)
    }

    /// Activation ordinals currently pruned.
    pub fn pruned_activations(&self) -> Vec<usize> {
        self.activation_layers()
            .iter()
            .enumerate()
            .filter(|(_, &li)| {
                matches!(self.layers[li], LayerSpec::Activation { pruned: true, .. })
            })
            .map(|(a, _)| a)
            .collect()
    }

    pub fn with_batch(&self, batch: usize) -> ModelSpec {
        let mut s = self.clone();
        s.input.batch = batch;
        s
    }
}

impl ModelSpec {
    /// Total multiplicative depth.
    pub fn depth(&self) -> u32 {
        self.layers.iter().map(LayerSpec::depth).sum()
    }
}
