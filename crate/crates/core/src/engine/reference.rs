use crate::adjacency::{normalize, AdjacencySet, Matrix};
use crate::packing::GraphTensor;

use super::model::{LayerSpec, ModelSpec};
use super::pipeline::Model;
use super::weights::{LayerWeights, ModelWeights};
use super::EngineError;

/// Final value of a forward pass; what it holds depends on where the layer
/// list stops.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelOutput {
    Map(GraphTensor),
    /// B × C channel means.
    Pooled(Vec<Vec<f64>>),
    /// B × classes scores.
    Scores(Vec<Vec<f64>>),
}

impl ModelOutput {
    /// One row per batch element, flattened.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            ModelOutput::Map(t) => {
                let per = t.data().len() / t.batch();
                t.data().chunks(per).map(<[f64]>::to_vec).collect()
            }
            ModelOutput::Pooled(r) | ModelOutput::Scores(r) => r.clone(),
        }
    }

    pub fn scores(&self) -> Option<&[Vec<f64>]> {
        match self {
            ModelOutput::Scores(s) => Some(s),
            _ => None,
        }
    }

    /// Largest elementwise difference; infinite when the shapes differ.
    pub fn max_abs_diff(&self, other: &ModelOutput) -> f64 {
        let (a, b) = (self.rows(), other.rows());
        if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.len() != y.len()) {
            return f64::INFINITY;
        }
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense forward pass of a [`Model`].
pub fn plaintext_reference(model: &Model, x: &GraphTensor) -> Result<ModelOutput, EngineError> {
    reference_forward(&model.spec, &model.weights, &model.adjacency, x)
}

/// Dense forward pass in the clear, with the adjacency applied unmerged
/// (normalized partitions, 1×1 weights, bias, then batch norm).
pub fn reference_forward(
    spec: &ModelSpec,
    weights: &ModelWeights,
    adj: &AdjacencySet,
    x: &GraphTensor,
) -> Result<ModelOutput, EngineError> {
    spec.stages()?;
    weights.check(spec, adj.partitions.len())?;
    let input = spec.input.as_array();
    if x.dims() != input {
        return Err(EngineError::Spec(format!(
            "input dims {:?}, model expects {input:?}",
            x.dims()
        )));
    }
    let norms: Vec<Matrix> = adj
        .partitions
        .iter()
        .map(normalize)
        .collect::<Result<_, _>>()?;
    let mut out = ModelOutput::Map(x.clone());
    for (layer, w) in spec.layers.iter().zip(&weights.layers) {
        out = match (layer, w, out) {
            (LayerSpec::Norm { .. }, LayerWeights::Norm { scale, shift }, ModelOutput::Map(x)) => {
                let mut y = x.clone();
                let [bn, cn, tn, jn] = x.dims();
                for b in 0..bn {
                    for c in 0..cn {
                        for t in 0..tn {
                            for j in 0..jn {
                                y.set(
                                    b,
                                    c,
                                    t,
                                    j,
                                    scale[c * jn + j] * x.get(b, c, t, j) + shift[c * jn + j],
                                );
                            }
                        }
                    }
                }
                ModelOutput::Map(y)
            }
            (
                &LayerSpec::Spatial { c_out, .. },
                LayerWeights::Spatial {
                    partitions,
                    bias,
                    bn,
                },
                ModelOutput::Map(x),
            ) => {
                let [bn_, cn, tn, jn] = x.dims();
                let mut y = GraphTensor::zeros([bn_, c_out, tn, jn])?;
                for (p, np) in norms.iter().enumerate() {
                    for b in 0..bn_ {
                        for t in 0..tn {
                            // (N_p X)[k][c] = sum_j N_p[k][j] X[j][c]
                            let mut nx = vec![0.0; jn * cn];
                            for k in 0..jn {
                                for j in 0..jn {
                                    let a = np.get(k, j);
                                    if a == 0.0 {
                                        continue;
                                    }
                                    for c in 0..cn {
                                        nx[k * cn + c] += a * x.get(b, c, t, j);
                                    }
                                }
                            }
                            for k in 0..jn {
                                for o in 0..c_out {
                                    let v: f64 = (0..cn)
                                        .map(|c| nx[k * cn + c] * partitions[p].get(c, o))
                                        .sum();
                                    y.set(b, o, t, k, y.get(b, o, t, k) + v);
                                }
                            }
                        }
                    }
                }
                let (scale, shift) = match bn {
                    Some(bn) => bn.scale_shift(),
                    None => (vec![1.0; c_out], vec![0.0; c_out]),
                };
                for b in 0..bn_ {
                    for o in 0..c_out {
                        let bo = bias.as_ref().map_or(0.0, |v| v[o]);
                        for t in 0..tn {
                            for k in 0..jn {
                                y.set(b, o, t, k, (y.get(b, o, t, k) + bo) * scale[o] + shift[o]);
                            }
                        }
                    }
                }
                ModelOutput::Map(y)
            }
            (
                &LayerSpec::Temporal {
                    c_out,
                    kernel,
                    stride,
                    ..
                },
                LayerWeights::Temporal(tw),
                ModelOutput::Map(x),
            ) => {
                let [bn, cn, tn, jn] = x.dims();
                let t_out = tn.div_ceil(stride);
                let h = (kernel - 1) / 2;
                let mut y = GraphTensor::zeros([bn, c_out, t_out, jn])?;
                for b in 0..bn {
                    for o in 0..c_out {
                        for to in 0..t_out {
                            for j in 0..jn {
                                let mut v = tw.bias.as_ref().map_or(0.0, |bs| bs[o]);
                                for c in 0..cn {
                                    for kappa in 0..kernel {
                                        let src = (to * stride + kappa) as i64 - h as i64;
                                        if (0..tn as i64).contains(&src) {
                                            v += tw.tap(o, c, kappa) * x.get(b, c, src as usize, j);
                                        }
                                    }
                                }
                                y.set(b, o, to, j, v);
                            }
                        }
                    }
                }
                ModelOutput::Map(y)
            }
            (&LayerSpec::Activation { a, b, c, pruned }, _, ModelOutput::Map(x)) => {
                if pruned {
                    ModelOutput::Map(x)
                } else {
                    let data = x.data().iter().map(|&v| a * v * v + b * v + c).collect();
                    ModelOutput::Map(GraphTensor::from_vec(x.dims(), data)?)
                }
            }
            (LayerSpec::Gap, _, ModelOutput::Map(x)) => {
                let [bn, cn, tn, jn] = x.dims();
                let n = (tn * jn) as f64;
                ModelOutput::Pooled(
                    (0..bn)
                        .map(|b| {
                            (0..cn)
                                .map(|c| {
                                    let start = x.index(b, c, 0, 0);
                                    x.data()[start..start + tn * jn].iter().sum::<f64>() / n
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            (LayerSpec::Fc { .. }, LayerWeights::Fc { w, bias }, ModelOutput::Pooled(h)) => {
                ModelOutput::Scores(
                    h.iter()
                        .map(|hb| {
                            (0..w.rows)
                                .map(|i| {
                                    bias[i] + (0..w.cols).map(|c| w.get(i, c) * hb[c]).sum::<f64>()
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            (l, _, _) => {
                return Err(EngineError::Spec(format!(
                    "layer {} cannot be applied here",
                    l.kind()
                )))
            }
        };
    }
    Ok(out)
}
