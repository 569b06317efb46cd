//! Ready-made model specs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{InputDims, LayerSpec, ModelSpec};
use super::pipeline::Model;
use super::weights::ModelWeights;
use super::EngineError;
use crate::adjacency::{AdjacencySet, Matrix};

pub const NAMES: [&str; 3] = ["64-stgcn-3", "128-stgcn-3", "tiny"];

/// One ST-GCN block: spatial conv, activation, temporal conv, activation.
fn block(
    layers: &mut Vec<LayerSpec>,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    bias: bool,
) {
    layers.push(LayerSpec::Spatial { c_in, c_out, bias });
    layers.push(LayerSpec::activation());
    layers.push(LayerSpec::Temporal {
        c_in: c_out,
        c_out,
        kernel,
        stride,
        bias,
    });
    layers.push(LayerSpec::activation());
}

/// Three ST-GCN blocks of widths (w, 2w, 2w), the second with stride 2,
/// behind an input norm and followed by GAP and an FC head.
pub fn stgcn3(
    input: InputDims,
    width: usize,
    kernel: usize,
    classes: usize,
    bias: bool,
) -> ModelSpec {
    let mut layers = vec![LayerSpec::Norm {
        channels: input.channels,
    }];
    block(&mut layers, input.channels, width, kernel, 1, bias);
    block(&mut layers, width, 2 * width, kernel, 2, bias);
    block(&mut layers, 2 * width, 2 * width, kernel, 1, bias);
    layers.push(LayerSpec::Gap);
    layers.push(LayerSpec::Fc {
        c_in: 2 * width,
        classes,
    });
    ModelSpec {
        input,
        layers,
        adjacency: "builtin:skeleton25".into(),
        weights: None,
        seed: 0,
    }
}

/// 3-channel skeleton input, 256 frames, 25 joints.
pub fn skeleton_input(batch: usize) -> InputDims {
    InputDims {
        batch,
        channels: 3,
        frames: 256,
        joints: 25,
    }
}

/// 64-STGCN-3: (64, 128, 128) channels, K = 9, 60 classes.
pub fn stgcn3_64() -> ModelSpec {
    stgcn3(skeleton_input(1), 64, 9, 60, true)
}

/// 128-STGCN-3: (128, 256, 256) channels, K = 9, 60 classes.
pub fn stgcn3_128() -> ModelSpec {
    stgcn3(skeleton_input(1), 128, 9, 60, true)
}

/// Small three-block model: C=8, T=16, J=5 on a chain graph.
pub fn tiny() -> ModelSpec {
    let input = InputDims {
        batch: 1,
        channels: 8,
        frames: 16,
        joints: 5,
    };
    let mut spec = stgcn3(input, 8, 3, 4, true);
    spec.adjacency = "builtin:chain".into();
    spec
}

pub fn by_name(name: &str) -> Result<ModelSpec, EngineError> {
    match name.to_ascii_lowercase().as_str() {
        "64-stgcn-3" | "stgcn3-64" => Ok(stgcn3_64()),
        "128-stgcn-3" | "stgcn3-128" => Ok(stgcn3_128()),
        "tiny" => Ok(tiny()),
        other => Err(EngineError::Spec(format!(
            "unknown preset {other:?}; known: {}",
            NAMES.join(", ")
        ))),
    }
}

/// Random graph with 1-3 partitions of random undirected edges.
pub fn random_adjacency(joints: usize, rng: &mut ChaCha8Rng) -> AdjacencySet {
    let parts = rng.gen_range(1..=3);
    let partitions = (0..parts)
        .map(|_| {
            let mut m = Matrix::zeros(joints, joints);
            for i in 0..joints {
                for j in i + 1..joints {
                    if rng.gen_bool(0.35) {
                        m.set(i, j, 1.0);
                        m.set(j, i, 1.0);
                    }
                }
            }
            m
        })
        .collect();
    AdjacencySet::new(joints, partitions).expect("square partitions")
}

/// Random small model: C in {2,4,8}, T in {8,16}, J in {4,5,8}, one to three
/// ST-GCN blocks, random graph, weights and activation coefficients.
pub fn random_tiny(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, v: &[usize]| v[rng.gen_range(0..v.len())];
    let c = pick(&mut rng, &[2, 4, 8]);
    let t = pick(&mut rng, &[8, 16]);
    let j = pick(&mut rng, &[4, 5, 8]);
    let batch = pick(&mut rng, &[1, 2]);
    let input = InputDims {
        batch,
        channels: c,
        frames: t,
        joints: j,
    };
    let mut layers = Vec::new();
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::Norm { channels: c });
    }
    let blocks = rng.gen_range(1..=3);
    let mut ch = c;
    let mut frames = t;
    for _ in 0..blocks {
        let out = pick(&mut rng, &[2, 4, 8]);
        let kernels: Vec<usize> = [1, 3, 5].into_iter().filter(|&k| k <= frames).collect();
        let kernel = pick(&mut rng, &kernels);
        let stride = if frames >= 4 && rng.gen_bool(0.3) {
            2
        } else {
            1
        };
        let bias = rng.gen_bool(0.7);
        layers.push(LayerSpec::Spatial {
            c_in: ch,
            c_out: out,
            bias,
        });
        layers.push(random_activation(&mut rng));
        layers.push(LayerSpec::Temporal {
            c_in: out,
            c_out: out,
            kernel,
            stride,
            bias,
        });
        layers.push(random_activation(&mut rng));
        ch = out;
        frames = frames.div_ceil(stride);
    }
    layers.push(LayerSpec::Gap);
    layers.push(LayerSpec::Fc {
        c_in: ch,
        classes: rng.gen_range(2..=5),
    });
    let spec = ModelSpec {
        input,
        layers,
        adjacency: "random".into(),
        weights: None,
        seed,
    };
    let adjacency = random_adjacency(j, &mut rng);
    let weights = ModelWeights::random(&spec, adjacency.partitions.len(), seed ^ 0x9e37_79b9);
    Model::new(spec, adjacency, weights).expect("generated model is consistent")
}

fn random_activation(rng: &mut ChaCha8Rng) -> LayerSpec {
    LayerSpec::Activation {
        a: rng.gen_range(-0.2..0.2),
        b: rng.gen_range(0.5..1.0),
        c: rng.gen_range(-0.1..0.1),
        pruned: rng.gen_bool(0.2),
    }
}
