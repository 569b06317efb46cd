use hegcn_core::adjacency::{decompose, Matrix, MergedSpatialMatrix};
use hegcn_core::costmodel::{schedule, select_params, GraphStats, SecurityTable};
use hegcn_core::engine::{presets, InputDims, LayerSpec, ModelSpec};
use hegcn_core::packing::{pack, unpack, GraphTensor, LayoutKind};
use hegcn_core::sim::{Evaluator, HocCounter, OpKind, SimContext};
use proptest::prelude::*;

const SLOTS: usize = 64;

fn slot_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, SLOTS)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ops_are_slotwise(a in slot_vec(), b in slot_vec()) {
        let ctx = SimContext::new(SLOTS, 3).unwrap();
        let mut ev = Evaluator::new(ctx.clone());
        let (ca, cb) = (ctx.encrypt(&a).unwrap(), ctx.encrypt(&b).unwrap());
        let sum = ev.add(&ca, &cb).unwrap().decrypt();
        let prod = ev.cmult(&ca, &cb).unwrap().decrypt();
        let pprod = ev.pmult(&ca, &b).unwrap().decrypt();
        for i in 0..SLOTS {
            prop_assert_eq!(sum[i], a[i] + b[i]);
            prop_assert_eq!(prod[i], a[i] * b[i]);
            prop_assert_eq!(pprod[i], a[i] * b[i]);
        }
        let t = ev.counter().total();
        prop_assert_eq!((t.add, t.cmult, t.pmult), (1, 1, 1));
    }

    #[test]
    fn rotations_compose(a in slot_vec(), r in -200i64..200, s in -200i64..200) {
        let ctx = SimContext::new(SLOTS, 1).unwrap();
        let mut ev = Evaluator::new(ctx.clone());
        let c = ctx.encrypt(&a).unwrap();
        let tmp = ev.rotate(&c, r);
        let two = ev.rotate(&tmp, s).decrypt();
        let one = ev.rotate(&c, r + s).decrypt();
        prop_assert_eq!(&two, &one);
        let back = ev.rotate(&c, SLOTS as i64 * r);
        prop_assert_eq!(back.decrypt(), a);
    }

    #[test]
    fn pack_round_trip(
        b in 1usize..=3,
        c in 1usize..=6,
        t in 1usize..=9,
        j in 1usize..=7,
        seed in any::<u64>(),
    ) {
        let x = GraphTensor::random([b, c, t, j], seed).unwrap();
        let ctx = SimContext::new(512, 1).unwrap();
        for kind in [LayoutKind::Ama, LayoutKind::RowMajor] {
            let (cts, layout) = pack(&x, kind, &ctx).unwrap();
            prop_assert_eq!(layout.dims(), [b, c, t, j]);
            let y = unpack(&cts, &layout).unwrap();
            prop_assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn decomposition_reconstructs(n in 1usize..=12, cells in prop::collection::vec((0.0f64..1.0, -3.0f64..3.0), 144), density in 0.0f64..1.0) {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let (u, v) = cells[i * 12 + k];
                if u < density && v != 0.0 {
                    m.set(i, k, v);
                }
            }
        }
        let parts = decompose(&m);
        let mut sum = Matrix::zeros(n, n);
        for p in &parts {
            sum.add_scaled(&p.to_dense(), 1.0);
        }
        prop_assert_eq!(&sum.data, &m.data);
        let m_max = (0..n).map(|k| m.column_nnz(k, 0.0)).max().unwrap_or(0);
        prop_assert_eq!(parts.len(), m_max);
    }

    #[test]
    fn counter_merge_is_order_independent(ops in prop::collection::vec((0usize..3, 0usize..5), 0..60), split in 0usize..4) {
        let kinds = [OpKind::Rot, OpKind::Pmult, OpKind::Cmult, OpKind::Add, OpKind::ModSwitch];
        let layers = ["a", "b", "c"];
        let mut parts = vec![HocCounter::new(); 4];
        for (n, &(l, k)) in ops.iter().enumerate() {
            parts[(n + split) % 4].record(layers[l], kinds[k]);
        }
        let mut fwd = HocCounter::new();
        parts.iter().for_each(|p| fwd.merge(p));
        let mut rev = HocCounter::new();
        parts.iter().rev().for_each(|p| rev.merge(p));
        prop_assert_eq!(&fwd, &rev);
        prop_assert!(fwd.is_consistent());
    }

    #[test]
    fn select_params_is_monotone(l in 1u32..60, extra in 0u32..10, sec in prop::sample::select(vec![80u32, 128, 192, 256])) {
        let t = SecurityTable::default();
        let (lo, hi) = (select_params(l, 33, sec, &t), select_params(l + extra, 33, sec, &t));
        match (lo, hi) {
            (Ok(a), Ok(b)) => prop_assert!(b.poly_degree >= a.poly_degree && b.q_bits >= a.q_bits),
            (Err(_), Ok(_)) => prop_assert!(false, "fewer levels failed where more succeeded"),
            _ => {}
        }
    }
}

fn spatial_only(joints: usize, channels: usize) -> ModelSpec {
    ModelSpec {
        input: InputDims {
            batch: 1,
            channels,
            frames: 8,
            joints,
        },
        layers: vec![LayerSpec::Spatial {
            c_in: channels,
            c_out: channels,
            bias: false,
        }],
        adjacency: "pattern".into(),
        weights: None,
        seed: 0,
    }
}

fn stats_of(pattern: &Matrix) -> GraphStats {
    let n = pattern.rows;
    GraphStats {
        joints: n,
        column_nnz: (0..n).map(|k| pattern.column_nnz(k, 0.0)).collect(),
        diagonals: MergedSpatialMatrix::from_matrix(pattern).unwrap().diagonals(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ama_pmult_grows_with_valid_elements(order in Just((0..64).collect::<Vec<usize>>()).prop_shuffle(), c in 1usize..=8) {
        let n = 8;
        let spec = spatial_only(n, c);
        let mut pattern = Matrix::identity(n);
        let mut prev = 0;
        for cell in order {
            pattern.set(cell / n, cell % n, 1.0);
            let s = schedule(&spec, &stats_of(&pattern), LayoutKind::Ama, 256).unwrap();
            let pm = s[0].counts.pmult;
            prop_assert!(pm >= prev);
            prev = pm;
        }
    }

    #[test]
    fn pruning_costs_two_levels_each(k in 0usize..=6) {
        let spec = presets::stgcn3_64();
        let prune: Vec<usize> = (0..k).collect();
        prop_assert_eq!(spec.with_pruned(&prune).unwrap().depth(), spec.depth() - 2 * k as u32);
    }
}
