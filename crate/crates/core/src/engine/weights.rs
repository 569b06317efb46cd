use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LayerSpec, ModelSpec};
use super::EngineError;
use crate::adjacency::{BatchNorm, Matrix};

/// Temporal convolution taps, indexed `w[(o * c_in + c) * kernel + kappa]`;
/// tap `kappa` reads frame `t + kappa - (kernel - 1) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWeights {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub w: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl TemporalWeights {
    #[inline]
    pub fn tap(&self, o: usize, c: usize, kappa: usize) -> f64 {
        self.w[(o * self.c_in + c) * self.kernel + kappa]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeights {
    None,
    /// `scale[c * J + j]`, `shift[c * J + j]`.
    Norm {
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
    /// One C_in×C_out matrix per adjacency partition.
    Spatial {
        partitions: Vec<Matrix>,
        bias: Option<Vec<f64>>,
        bn: Option<BatchNorm>,
    },
    Temporal(TemporalWeights),
    /// `w` is classes × C.
    Fc {
        w: Matrix,
        bias: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect()
}

impl ModelWeights {
    /// Seeded random weights scaled so activations stay O(1).
    pub fn random(spec: &ModelSpec, partitions: usize, seed: u64) -> ModelWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = spec.input.joints;
        let layers = spec
            .layers
            .iter()
            .map(|layer| match *layer {
                LayerSpec::Norm { channels } => LayerWeights::Norm {
                    scale: (0..channels * j).map(|_| rng.gen_range(0.5..1.5)).collect(),
                    shift: uniform(&mut rng, channels * j, 0.1),
                },
                LayerSpec::Spatial { c_in, c_out, bias } => {
                    let s = 1.0 / ((c_in * partitions) as f64).sqrt();
                    let partitions = (0..partitions)
                        .map(|_| Matrix {
                            rows: c_in,
                            cols: c_out,
                            data: uniform(&mut rng, c_in * c_out, s),
                        })
                        .collect();
                    let (bias, bn) = if bias {
                        let b = uniform(&mut rng, c_out, 0.1);
                        let bn = BatchNorm {
                            gamma: (0..c_out).map(|_| rng.gen_range(0.8..1.2)).collect(),
                            beta: uniform(&mut rng, c_out, 0.1),
                            mean: uniform(&mut rng, c_out, 0.1),
                            var: (0..c_out).map(|_| rng.gen_range(0.5..1.5)).collect(),
                            eps: 1e-5,
                        };
                        (Some(b), Some(bn))
                    } else {
                        (None, None)
                    };
                    LayerWeights::Spatial {
                        partitions,
                        bias,
                        bn,
                    }
                }
                LayerSpec::Temporal {
                    c_in,
                    c_out,
                    kernel,
                    bias,
                    ..
                } => {
                    let s = 1.0 / ((c_in * kernel) as f64).sqrt();
                    LayerWeights::Temporal(TemporalWeights {
                        c_in,
                        c_out,
                        kernel,
                        w: uniform(&mut rng, c_out * c_in * kernel, s),
                        bias: bias.then(|| uniform(&mut rng, c_out, 0.1)),
                    })
                }
                LayerSpec::Fc { c_in, classes } => LayerWeights::Fc {
                    w: Matrix {
                        rows: classes,
                        cols: c_in,
                        data: uniform(&mut rng, classes * c_in, 1.0 / (c_in as f64).sqrt()),
                    },
                    bias: uniform(&mut rng, classes, 0.1),
                },
                LayerSpec::Activation { .. } | LayerSpec::Gap => LayerWeights::None,
            })
            .collect();
        ModelWeights { layers }
    }

    /// Check weight shapes against the model spec.
    pub fn check(&self, spec: &ModelSpec, partitions: usize) -> Result<(), EngineError> {
        if self.layers.len() != spec.layers.len() {
            return Err(EngineError::Weights(format!(
                "{} weight entries for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        let j = spec.input.joints;
        for (i, (l, w)) in spec.layers.iter().zip(&self.layers).enumerate() {
            let ok = match (*l, w) {
                (LayerSpec::Norm { channels }, LayerWeights::Norm { scale, shift }) => {
                    scale.len() == channels * j && shift.len() == channels * j
                }
                (
                    LayerSpec::Spatial { c_in, c_out, .. },
                    LayerWeights::Spatial {
                        partitions: p,
                        bias,
                        bn,
                    },
                ) => {
                    p.len() == partitions
                        && p.iter().all(|m| m.rows == c_in && m.cols == c_out)
                        && bias.as_ref().map_or(true, |b| b.len() == c_out)
                        && bn.as_ref().map_or(true, |b| {
                            b.len() == c_out
                                && b.beta.len() == c_out
                                && b.mean.len() == c_out
                                && b.var.len() == c_out
                        })
                }
                (
                    LayerSpec::Temporal {
                        c_in,
                        c_out,
                        kernel,
                        ..
                    },
                    LayerWeights::Temporal(t),
                ) => {
                    t.c_in == c_in
                        && t.c_out == c_out
                        && t.kernel == kernel
                        && t.w.len() == c_in * c_out * kernel
                        && t.bias.as_ref().map_or(true, |b| b.len() == c_out)
                }
                (LayerSpec::Fc { c_in, classes }, LayerWeights::Fc { w, bias }) => {
                    w.rows == classes && w.cols == c_in && bias.len() == classes
                }
                (LayerSpec::Activation { .. } | LayerSpec::Gap, LayerWeights::None) => true,
                _ => false,
            };
            if !ok {
                return Err(EngineError::Weights(format!(
                    "layer {i} ({}) weights do not match spec",
                    l.kind()
                )));
            }
        }
        Ok(())
    }

    /// Write a JSON manifest plus a flat little-endian f64 blob next to it.
    pub fn save(&self, manifest: &Path) -> Result<(), EngineError> {
        let blob_path = manifest.with_extension("bin");
        let mut blob: Vec<f64> = Vec::new();
        let mut tensors = Vec::new();
        let mut put = |layer: usize, name: &str, shape: Vec<usize>, data: &[f64]| {
            tensors.push(TensorEntry {
                layer,
                name: name.to_string(),
                shape,
                offset: blob.len(),
            });
            blob.extend_from_slice(data);
        };
        for (i, w) in self.layers.iter().enumerate() {
            match w {
                LayerWeights::None => {}
                LayerWeights::Norm { scale, shift } => {
                    put(i, "scale", vec![scale.len()], scale);
                    put(i, "shift", vec![shift.len()], shift);
                }
                LayerWeights::Spatial {
                    partitions,
                    bias,
                    bn,
                } => {
                    let (r, c) = (partitions[0].rows, partitions[0].cols);
                    let flat: Vec<f64> = partitions
                        .iter()
                        .flat_map(|m| m.data.iter().copied())
                        .collect();
                    put(i, "w", vec![partitions.len(), r, c], &flat);
                    if let Some(b) = bias {
                        put(i, "bias", vec![b.len()], b);
                    }
                    if let Some(bn) = bn {
                        put(i, "bn_gamma", vec![bn.len()], &bn.gamma);
                        put(i, "bn_beta", vec![bn.len()], &bn.beta);
                        put(i, "bn_mean", vec![bn.len()], &bn.mean);
                        put(i, "bn_var", vec![bn.len()], &bn.var);
                        put(i, "bn_eps", vec![1], &[bn.eps]);
                    }
                }
                LayerWeights::Temporal(t) => {
                    put(i, "w", vec![t.c_out, t.c_in, t.kernel], &t.w);
                    if let Some(b) = &t.bias {
                        put(i, "bias", vec![b.len()], b);
                    }
                }
                LayerWeights::Fc { w, bias } => {
                    put(i, "w", vec![w.rows, w.cols], &w.data);
                    put(i, "bias", vec![bias.len()], bias);
                }
            }
        }
        let m = Manifest {
            blob: blob_path
                .file_name()
                .and_then(|f| f.to_str())
                .unwrap_or("weights.bin")
                .to_string(),
            tensors,
        };
        std::fs::write(
            manifest,
            serde_json::to_string_pretty(&m).expect("manifest serializes"),
        )?;
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(blob_path, bytes)?;
        Ok(())
    }

    /// Read weights written by [`ModelWeights::save`] for the given spec.
    pub fn load(
        manifest: &Path,
        spec: &ModelSpec,
        partitions: usize,
    ) -> Result<ModelWeights, EngineError> {
        let text = std::fs::read_to_string(manifest)?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| EngineError::Weights(e.to_string()))?;
        let blob_path: PathBuf = manifest.parent().unwrap_or(Path::new(".")).join(&m.blob);
        let bytes = std::fs::read(&blob_path)?;
        if bytes.len() % 8 != 0 {
            return Err(EngineError::Weights(
                "blob length is not a multiple of 8".into(),
            ));
        }
        let blob: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let get = |layer: usize, name: &str| -> Result<Option<Vec<f64>>, EngineError> {
            let Some(t) = m
                .tensors
                .iter()
                .find(|t| t.layer == layer && t.name == name)
            else {
                return Ok(None);
            };
            let n: usize = t.shape.iter().product();
            blob.get(t.offset..t.offset + n)
                .map(|s| Some(s.to_vec()))
                .ok_or_else(|| {
                    EngineError::Weights(format!("tensor {layer}/{name} runs past the blob"))
                })
        };
        let need = |layer: usize, name: &str| -> Result<Vec<f64>, EngineError> {
            get(layer, name)?
                .ok_or_else(|| EngineError::Weights(format!("missing tensor {layer}/{name}")))
        };
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            layers.push(match *l {
                LayerSpec::Norm { .. } => LayerWeights::Norm {
                    scale: need(i, "scale")?,
                    shift: need(i, "shift")?,
                },
                LayerSpec::Spatial { c_in, c_out, .. } => {
                    let w = need(i, "w")?;
                    let per = c_in * c_out;
                    if w.len() != per * partitions {
                        return Err(EngineError::Weights(format!(
                            "layer {i}: spatial weight size mismatch"
                        )));
                    }
                    let parts = w
                        .chunks(per)
                        .map(|d| Matrix {
                            rows: c_in,
                            cols: c_out,
                            data: d.to_vec(),
                        })
                        .collect();
                    let bn = match get(i, "bn_gamma")? {
                        Some(gamma) => Some(BatchNorm {
                            gamma,
                            beta: need(i, "bn_beta")?,
                            mean: need(i, "bn_mean")?,
                            var: need(i, "bn_var")?,
                            eps: need(i, "bn_eps")?[0],
                        }),
                        None => None,
                    };
                    LayerWeights::Spatial {
                        partitions: parts,
                        bias: get(i, "bias")?,
                        bn,
                    }
                }
                LayerSpec::Temporal {
                    c_in,
                    c_out,
                    kernel,
                    ..
                } => LayerWeights::Temporal(TemporalWeights {
                    c_in,
                    c_out,
                    kernel,
                    w: need(i, "w")?,
                    bias: get(i, "bias")?,
                }),
                LayerSpec::Fc { c_in, classes } => LayerWeights::Fc {
                    w: Matrix {
                        rows: classes,
                        cols: c_in,
                        data: need(i, "w")?,
                    },
                    bias: need(i, "bias")?,
                },
                LayerSpec::Activation { .. } | LayerSpec::Gap => LayerWeights::None,
            });
        }
        let w = ModelWeights { layers };
        w.check(spec, partitions)?;
        Ok(w)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    blob: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    layer: usize,
    name: String,
    shape: Vec<usize>,
    /// Offset in f64 elements.
    offset: usize,
}
