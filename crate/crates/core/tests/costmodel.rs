use hegcn_core::adjacency::{AdjacencySet, Matrix};
use hegcn_core::costmodel::{matmul_hoc, reconcile_report, schedule, GraphStats};
use hegcn_core::engine::{
    presets, run_model, InputDims, LayerSpec, Model, ModelSpec, ModelWeights,
};
use hegcn_core::packing::{GraphTensor, LayoutKind};
use hegcn_core::sim::SimContext;

const FORMATS: [LayoutKind; 2] = [LayoutKind::Ama, LayoutKind::RowMajor];

#[test]
fn schedule_predicts_tiny_model_exactly() {
    let model = Model::from_spec(presets::tiny(), None).unwrap();
    let x = GraphTensor::random(model.spec.input.as_array(), 3).unwrap();
    let ctx = SimContext::new(256, model.depth()).unwrap();
    let stats = GraphStats::of(&model.adjacency);
    for fmt in FORMATS {
        let out = run_model(&model, &x, fmt, &ctx).unwrap();
        let predicted = schedule(&model.spec, &stats, fmt, 256).unwrap();
        let r = reconcile_report(&out.hoc, &predicted);
        assert!(
            r.is_exact(),
            "{fmt:?}: {:?}",
            r.mismatches().collect::<Vec<_>>()
        );
    }
}

#[test]
fn schedule_predicts_random_models_exactly() {
    for seed in 100..112 {
        let model = presets::random_tiny(seed);
        let x = GraphTensor::random(model.spec.input.as_array(), seed).unwrap();
        let ctx = SimContext::new(256, model.depth()).unwrap();
        let stats = GraphStats::of(&model.adjacency);
        for fmt in FORMATS {
            let out = run_model(&model, &x, fmt, &ctx).unwrap();
            let predicted = schedule(&model.spec, &stats, fmt, 256).unwrap();
            let r = reconcile_report(&out.hoc, &predicted);
            assert!(
                r.is_exact(),
                "seed {seed} {fmt:?}: {:?}",
                r.mismatches().collect::<Vec<_>>()
            );
        }
    }
}

fn dense_spatial_model(b: usize, c: usize, j: usize, t: usize) -> Model {
    let mut dense = Matrix::zeros(j, j);
    dense.data.iter_mut().for_each(|v| *v = 1.0);
    let adj = AdjacencySet::new(j, vec![dense]).unwrap();
    let spec = ModelSpec {
        input: InputDims {
            batch: b,
            channels: c,
            frames: t,
            joints: j,
        },
        layers: vec![LayerSpec::Spatial {
            c_in: c,
            c_out: c,
            bias: false,
        }],
        adjacency: "dense".into(),
        weights: None,
        seed: 0,
    };
    let w = ModelWeights::random(&spec, 1, 7);
    Model::new(spec, adj, w).unwrap()
}

#[test]
fn dense_matmul_counts_follow_closed_forms_when_u_is_j_over_b() {
    let t = 4;
    for (b, c, j) in [(1, 4, 4), (2, 4, 8), (1, 8, 8), (4, 8, 4), (2, 8, 8)] {
        let model = dense_spatial_model(b, c, j, t);
        let x = GraphTensor::random([b, c, t, j], 1).unwrap();
        let ctx = SimContext::new(t * j, 1).unwrap();
        for fmt in FORMATS {
            let got = run_model(&model, &x, fmt, &ctx).unwrap().hoc.total;
            let want = matmul_hoc(fmt, b as u64, c as u64, j as u64);
            assert_eq!(
                (got.rot, got.pmult, got.add),
                (want.rot, want.pmult, want.add),
                "B={b} C={c} J={j} {fmt:?}"
            );
        }
    }
}
