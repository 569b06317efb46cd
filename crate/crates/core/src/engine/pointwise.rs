use crate::packing::{LayoutKind, PackingLayout};
use crate::sim::Evaluator;

use super::{bt_offsets, par_map, require_level, EncryptedFeatureMap, EngineError};

/// Slots of ciphertext `idx` that carry valid data, as a 0/1 mask (replicas
/// included under AMA).
fn valid_mask(l: &PackingLayout, idx: usize) -> Vec<f64> {
    let mut m = vec![0.0; l.slot_count];
    match l.kind {
        LayoutKind::Ama => {
            let g = idx % l.cts_per_joint;
            let offsets = bt_offsets(l);
            for p in 0..l.blocks() {
                if l.block_channel(g, p).is_some() {
                    for &off in &offsets {
                        m[p * l.pad_bt + off] = 1.0;
                    }
                }
            }
        }
        LayoutKind::RowMajor => {
            for t in 0..l.frames {
                for j in 0..l.joints {
                    m[l.tj_slot(t, j)] = 1.0;
                }
            }
        }
    }
    m
}

/// a·x² + b·x + c on every valid slot: one CMult, two PMults, two Adds, two
/// levels. The constant only lands on valid slots so padding stays zero.
pub fn poly_activation(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    a: f64,
    b: f64,
    c: f64,
) -> Result<EncryptedFeatureMap, EngineError> {
    let level = fm.level()?;
    require_level(level, 2, "poly activation")?;
    let l = &fm.layout;
    // AMA ciphertexts of the same group share a mask; cache per group
    let groups = match l.kind {
        LayoutKind::Ama => l.cts_per_joint,
        LayoutKind::RowMajor => 1,
    };
    let masks: Vec<Vec<f64>> = (0..groups)
        .map(|g| valid_mask(l, g).iter().map(|v| v * c).collect())
        .collect();
    let cts = par_map(ev, fm.cts.len(), |i, ev| {
        let x = &fm.cts[i];
        let x2 = ev.cmult(x, x)?;
        let ax2 = ev.pmult_scalar(&x2, a)?;
        let bx = ev.pmult_scalar(x, b)?;
        let bx = ev.mod_switch(&bx, ax2.level())?;
        let s = ev.add(&ax2, &bx)?;
        Ok(ev.add_plain(&s, &masks[i % groups])?)
    })?;
    EncryptedFeatureMap::new(cts, l.clone(), &fm.label)
}

/// Per-(channel, joint) affine map `scale[c·J + j]·x + shift[c·J + j]`: one
/// PMult and one Add per ciphertext, one level.
pub fn affine_norm(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    scale: &[f64],
    shift: &[f64],
) -> Result<EncryptedFeatureMap, EngineError> {
    let l = &fm.layout;
    let n = l.channels * l.joints;
    if scale.len() != n || shift.len() != n {
        return Err(EngineError::Layout(format!(
            "norm parameters have {} entries, expected {n}",
            scale.len()
        )));
    }
    let level = fm.level()?;
    require_level(level, 1, "affine norm")?;
    let offsets = bt_offsets(l);
    let cts = par_map(ev, fm.cts.len(), |i, ev| {
        let mut mul = vec![0.0; l.slot_count];
        let mut add = vec![0.0; l.slot_count];
        match l.kind {
            LayoutKind::Ama => {
                let (j, g) = (i / l.cts_per_joint, i % l.cts_per_joint);
                for p in 0..l.blocks() {
                    let Some(c) = l.block_channel(g, p) else {
                        continue;
                    };
                    for &off in &offsets {
                        mul[p * l.pad_bt + off] = scale[c * l.joints + j];
                        add[p * l.pad_bt + off] = shift[c * l.joints + j];
                    }
                }
            }
            LayoutKind::RowMajor => {
                let c = i % l.channels;
                for t in 0..l.frames {
                    for j in 0..l.joints {
                        mul[l.tj_slot(t, j)] = scale[c * l.joints + j];
                        add[l.tj_slot(t, j)] = shift[c * l.joints + j];
                    }
                }
            }
        }
        let y = ev.pmult(&fm.cts[i], &mul)?;
        Ok(ev.add_plain(&y, &add)?)
    })?;
    EncryptedFeatureMap::new(cts, l.clone(), &fm.label)
}
