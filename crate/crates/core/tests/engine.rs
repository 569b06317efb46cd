use hegcn_core::adjacency::{decompose, Matrix, MergedSpatialMatrix};
use hegcn_core::engine::{
    ama_spatial, fully_connected, global_avg_pool, plaintext_reference, poly_activation, presets,
    rowmajor_spatial, run_model, temporal_conv, EncryptedFeatureMap, LayerSpec, Model, ModelOutput,
    TemporalWeights,
};
use hegcn_core::packing::{pack, GraphTensor, LayoutKind};
use hegcn_core::sim::{Evaluator, SimContext};

fn encrypt(
    x: &GraphTensor,
    kind: LayoutKind,
    slots: usize,
    level: u32,
) -> (Evaluator, EncryptedFeatureMap) {
    let ctx = SimContext::new(slots, level).unwrap();
    let (cts, layout) = pack(x, kind, &ctx).unwrap();
    (
        Evaluator::new(ctx),
        EncryptedFeatureMap::new(cts, layout, "in").unwrap(),
    )
}

fn figure_matrix() -> Matrix {
    let mut m = Matrix::zeros(4, 4);
    for (i, j) in [
        (1, 1),
        (1, 3),
        (1, 4),
        (2, 3),
        (3, 2),
        (4, 1),
        (4, 2),
        (4, 4),
    ] {
        m.set(i - 1, j - 1, 0.1 * (10 * i + j) as f64);
    }
    m
}

/// out[b,0,t,k] = sum_j x[b,0,t,j] * m[j][k]
fn dense_spatial(x: &GraphTensor, m: &Matrix) -> GraphTensor {
    let [bn, _, tn, jn] = x.dims();
    let mut y = GraphTensor::zeros(x.dims()).unwrap();
    for b in 0..bn {
        for t in 0..tn {
            for k in 0..jn {
                y.set(
                    b,
                    0,
                    t,
                    k,
                    (0..jn).map(|j| x.get(b, 0, t, j) * m.get(j, k)).sum(),
                );
            }
        }
    }
    y
}

#[test]
fn spatial_figure_instance_both_layouts() {
    let m = figure_matrix();
    let merged = MergedSpatialMatrix::from_matrix(&m).unwrap();
    let x = GraphTensor::random([1, 1, 8, 4], 3).unwrap();
    let want = dense_spatial(&x, &m);

    let (mut ev, fm) = encrypt(&x, LayoutKind::Ama, 64, 3);
    let out = ama_spatial(&mut ev, &fm, &merged, &decompose(&m)).unwrap();
    assert_eq!(out.level().unwrap(), 2);
    assert!(out.decrypt().unwrap().max_abs_diff(&want) < 1e-12);
    // C = 1: no channel rotations, none for the matrix either
    assert_eq!(ev.counter().total().rot, 0);
    assert_eq!(ev.counter().total().pmult, 8);

    let (mut ev, fm) = encrypt(&x, LayoutKind::RowMajor, 64, 3);
    let out = rowmajor_spatial(&mut ev, &fm, &merged).unwrap();
    assert!(out.decrypt().unwrap().max_abs_diff(&want) < 1e-12);
}

#[test]
fn spatial_identity_keeps_values() {
    let merged = MergedSpatialMatrix::from_matrix(&Matrix::identity(5)).unwrap();
    let x = GraphTensor::random([2, 1, 4, 5], 9).unwrap();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let (mut ev, fm) = encrypt(&x, kind, 64, 2);
        let out = hegcn_core::engine::spatial_conv(&mut ev, &fm, &merged).unwrap();
        assert_eq!(out.level().unwrap(), 1);
        assert!(out.decrypt().unwrap().max_abs_diff(&x) < 1e-15);
        assert_eq!(ev.counter().total().rot, 0);
    }
}

#[test]
fn rowmajor_dense_rotations_per_ciphertext() {
    let mut m = Matrix::zeros(4, 4);
    m.data
        .iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v = 1.0 + i as f64);
    let merged = MergedSpatialMatrix::from_matrix(&m).unwrap();
    let x = GraphTensor::random([1, 1, 4, 4], 1).unwrap();
    let (mut ev, fm) = encrypt(&x, LayoutKind::RowMajor, 16, 2);
    let out = rowmajor_spatial(&mut ev, &fm, &merged).unwrap();
    assert_eq!(ev.counter().total().rot, 6);
    assert_eq!(ev.counter().total().pmult, 7);
    assert!(out.decrypt().unwrap().max_abs_diff(&dense_spatial(&x, &m)) < 1e-12);
}

fn taps(w: Vec<f64>, kernel: usize) -> TemporalWeights {
    TemporalWeights {
        c_in: 1,
        c_out: 1,
        kernel,
        w,
        bias: None,
    }
}

#[test]
fn temporal_scaling_and_moving_average() {
    let ramp: Vec<f64> = (0..8).map(|t| t as f64).collect();
    let x = GraphTensor::from_vec([1, 1, 8, 1], ramp.clone()).unwrap();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let (mut ev, fm) = encrypt(&x, kind, 16, 2);
        let y = temporal_conv(&mut ev, &fm, &taps(vec![2.5], 1), 1)
            .unwrap()
            .decrypt()
            .unwrap();
        assert_eq!(
            y.data(),
            ramp.iter().map(|v| v * 2.5).collect::<Vec<_>>().as_slice()
        );
        assert_eq!(ev.counter().total().rot, 0);

        let (mut ev, fm) = encrypt(&x, kind, 16, 2);
        let y = temporal_conv(&mut ev, &fm, &taps(vec![1.0 / 3.0; 3], 3), 1)
            .unwrap()
            .decrypt()
            .unwrap();
        let want: Vec<f64> = (0..8)
            .map(|t: i64| {
                (t - 1..=t + 1)
                    .filter(|s| (0..8).contains(s))
                    .map(|s| s as f64)
                    .sum::<f64>()
                    / 3.0
            })
            .collect();
        let diff = y
            .data()
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{kind:?}: {diff}");
    }
}

#[test]
fn temporal_kernel9_rotations_and_errors() {
    let x = GraphTensor::random([1, 1, 16, 1], 2).unwrap();
    let (mut ev, fm) = encrypt(&x, LayoutKind::Ama, 16, 2);
    temporal_conv(&mut ev, &fm, &taps(vec![0.1; 9], 9), 1).unwrap();
    assert_eq!(ev.counter().total().rot, 8);
    assert!(temporal_conv(&mut ev, &fm, &taps(vec![0.1; 4], 4), 1).is_err());
    let short = GraphTensor::random([1, 1, 4, 1], 2).unwrap();
    let (mut ev, fm) = encrypt(&short, LayoutKind::Ama, 16, 2);
    assert!(temporal_conv(&mut ev, &fm, &taps(vec![0.1; 5], 5), 1).is_err());
}

#[test]
fn temporal_stride_two_decimates() {
    let x = GraphTensor::random([2, 3, 8, 2], 5).unwrap();
    let tw = TemporalWeights {
        c_in: 3,
        c_out: 2,
        kernel: 3,
        w: (0..18).map(|i| 0.1 * i as f64 - 0.8).collect(),
        bias: Some(vec![0.3, -0.2]),
    };
    let mut outs = Vec::new();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let (mut ev, fm) = encrypt(&x, kind, 64, 2);
        let y = temporal_conv(&mut ev, &fm, &tw, 2).unwrap();
        assert_eq!(y.layout.frames, 4);
        outs.push(y.decrypt().unwrap());
    }
    for b in 0..2 {
        for o in 0..2 {
            for t in 0..4 {
                for j in 0..2 {
                    let mut v = tw.bias.as_ref().unwrap()[o];
                    for c in 0..3 {
                        for k in 0..3 {
                            let s = 2 * t as i64 + k as i64 - 1;
                            if (0..8).contains(&s) {
                                v += tw.tap(o, c, k) * x.get(b, c, s as usize, j);
                            }
                        }
                    }
                    for y in &outs {
                        assert!((y.get(b, o, t, j) - v).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn activation_examples() {
    let x = GraphTensor::from_vec([1, 1, 2, 1], vec![-2.0, 3.0]).unwrap();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let (mut ev, fm) = encrypt(&x, kind, 8, 3);
        let y = poly_activation(&mut ev, &fm, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(y.level().unwrap(), 1);
        assert_eq!(y.decrypt().unwrap().data(), &[4.0, 9.0]);
        let y = poly_activation(&mut ev, &fm, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(y.decrypt().unwrap().data(), x.data());
        let c = ev.counter().total();
        assert_eq!((c.cmult, c.pmult, c.add), (2, 4, 4));
        let (mut ev, fm) = encrypt(&x, kind, 8, 1);
        assert!(poly_activation(&mut ev, &fm, 1.0, 0.0, 0.0).is_err());
    }
}

#[test]
fn pooling_examples() {
    let x = GraphTensor::from_vec([1, 1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let c = GraphTensor::from_vec([2, 3, 4, 2], vec![0.75; 48]).unwrap();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let (mut ev, fm) = encrypt(&x, kind, 16, 1);
        assert_eq!(
            global_avg_pool(&mut ev, &fm).unwrap().decrypt(),
            vec![vec![2.5]]
        );
        let (mut ev, fm) = encrypt(&c, kind, 64, 1);
        let p = global_avg_pool(&mut ev, &fm).unwrap().decrypt();
        assert!(p.iter().flatten().all(|v| (v - 0.75).abs() < 1e-15));
    }
}

#[test]
fn fc_pmult_count_two_groups() {
    // C = 64 channels over U = 32 blocks: two groups, 60 classes
    let x = GraphTensor::random([1, 64, 256, 1], 4).unwrap();
    let (mut ev, fm) = encrypt(&x, LayoutKind::Ama, 8192, 2);
    assert_eq!(fm.layout.channels_per_ct, 32);
    let pooled = global_avg_pool(&mut ev, &fm).unwrap();
    let mut w = Matrix::zeros(60, 64);
    w.data
        .iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v = ((i * 7) % 13) as f64 * 0.01);
    let bias: Vec<f64> = (0..60).map(|i| i as f64).collect();
    ev.set_layer("fc");
    let scores = fully_connected(&mut ev, &pooled, &w, &bias).unwrap();
    assert_eq!(ev.counter().layer("fc").pmult, 120);
    let means = pooled.decrypt();
    let got = scores.decrypt();
    for i in 0..60 {
        let want = bias[i] + (0..64).map(|c| w.get(i, c) * means[0][c]).sum::<f64>();
        assert!((got[0][i] - want).abs() < 1e-9);
    }
}

fn tiny_model() -> Model {
    Model::from_spec(presets::tiny(), None).unwrap()
}

#[test]
fn tiny_model_matches_reference_in_both_formats() {
    let model = tiny_model();
    let x = GraphTensor::random(model.spec.input.as_array(), 11).unwrap();
    let want = plaintext_reference(&model, &x).unwrap();
    let ctx = SimContext::new(256, model.depth()).unwrap();
    let mut scores = Vec::new();
    for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
        let out = run_model(&model, &x, kind, &ctx).unwrap();
        assert!(out.output.max_abs_diff(&want) < 1e-9, "{kind:?}");
        assert_eq!(out.levels_used(), model.depth());
        assert!(out.hoc.counter.is_consistent());
        scores.push(out.output);
    }
    assert!(scores[0].max_abs_diff(&scores[1]) < 1e-9);
}

#[test]
fn zero_input_gives_bias_only_scores() {
    let mut spec = presets::tiny();
    for l in spec.layers.iter_mut() {
        match l {
            LayerSpec::Spatial { bias, .. } | LayerSpec::Temporal { bias, .. } => *bias = false,
            LayerSpec::Activation { c, .. } => *c = 0.0,
            _ => {}
        }
    }
    spec.layers.retain(|l| !matches!(l, LayerSpec::Norm { .. }));
    let model = Model::from_spec(spec, None).unwrap();
    let x = GraphTensor::zeros(model.spec.input.as_array()).unwrap();
    let ctx = SimContext::new(256, model.depth()).unwrap();
    let out = run_model(&model, &x, LayoutKind::Ama, &ctx).unwrap();
    let hegcn_core::engine::LayerWeights::Fc { bias, .. } = model.weights.layers.last().unwrap()
    else {
        panic!("last layer is fc")
    };
    assert_eq!(out.output, ModelOutput::Scores(vec![bias.clone()]));
}

#[test]
fn depth_budget_violation_names_layer() {
    let model = tiny_model();
    let x = GraphTensor::random(model.spec.input.as_array(), 1).unwrap();
    let ctx = SimContext::new(256, 5).unwrap();
    let err = run_model(&model, &x, LayoutKind::Ama, &ctx).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("04-act"), "{msg}");
}

#[test]
fn wide_shape_depth_is_21() {
    let spec = presets::stgcn3_64();
    assert_eq!(spec.depth(), 21);
    assert_eq!(spec.with_pruned(&[0]).unwrap().depth(), 19);
    assert_eq!(spec.with_pruned(&[0, 1]).unwrap().depth(), 17);
}

#[test]
fn random_tiny_models_agree() {
    for seed in 0..8 {
        let model = presets::random_tiny(seed);
        let x = GraphTensor::random(model.spec.input.as_array(), seed).unwrap();
        let want = plaintext_reference(&model, &x).unwrap();
        let ctx = SimContext::new(256, model.depth()).unwrap();
        for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
            let out = run_model(&model, &x, kind, &ctx).unwrap();
            let d = out.output.max_abs_diff(&want);
            assert!(d < 1e-9, "seed {seed} {kind:?}: {d}");
        }
    }
}
