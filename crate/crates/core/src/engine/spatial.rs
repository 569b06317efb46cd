use crate::adjacency::{column_rows, MergedSpatialMatrix, PatternedSparseMatrix};
use crate::packing::LayoutKind;
use crate::sim::{Evaluator, SimCiphertext};

use super::{
    accumulate, bt_offsets, par_map, require_kind, require_level, EncryptedFeatureMap, EngineError,
};

fn check_merged(
    fm: &EncryptedFeatureMap,
    merged: &MergedSpatialMatrix,
) -> Result<u32, EngineError> {
    let l = &fm.layout;
    if merged.joints != l.joints || merged.c_in != l.channels {
        return Err(EngineError::Layout(format!(
            "merged matrix is J={} C_in={}, feature map is J={} C={}",
            merged.joints, merged.c_in, l.joints, l.channels
        )));
    }
    let level = fm.level()?;
    require_level(level, 1, "spatial conv")?;
    Ok(level)
}

/// Rotation-free adjacency multiplication on AMA ciphertexts.
///
/// Output ciphertext (joint k, group g) sums, over the decomposed matrices with
/// an entry in column k, PMults of the source joint's ciphertexts. Channel
/// mixing folds into the same plaintexts; only the U_in - 1 block rotations
/// that line channels up are needed, none for the adjacency itself.
pub fn ama_spatial(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    merged: &MergedSpatialMatrix,
    decomp: &[PatternedSparseMatrix],
) -> Result<EncryptedFeatureMap, EngineError> {
    require_kind(&fm.layout, LayoutKind::Ama, "ama_spatial")?;
    let level = check_merged(fm, merged)?;
    let l = &fm.layout;
    if decomp.iter().any(|a| a.n != l.joints) {
        return Err(EngineError::Layout(
            "decomposition size differs from J".into(),
        ));
    }
    let out_l = l.with_channels(merged.c_out);
    let (u_in, g_in, blocks, pad) = (l.channels_per_ct, l.cts_per_joint, l.blocks(), l.pad_bt);
    let g_out = out_l.cts_per_joint;
    let offsets = bt_offsets(l);
    let cols: Vec<Vec<usize>> = (0..l.joints).map(|k| column_rows(decomp, k)).collect();
    let slots = l.slot_count;

    let cts = par_map(ev, out_l.num_cts(), |idx, ev| {
        let (k, g) = (idx / g_out, idx % g_out);
        let mut acc: Option<SimCiphertext> = None;
        let mut pt = vec![0.0; slots];
        for r in 0..u_in {
            let mut z: Option<SimCiphertext> = None;
            for &j in &cols[k] {
                for gi in 0..g_in {
                    pt.iter_mut().for_each(|v| *v = 0.0);
                    for p in 0..blocks {
                        let Some(c) = l.block_channel(gi, p) else {
                            continue;
                        };
                        let Some(o) = out_l.block_channel(g, (p + blocks - r) % blocks) else {
                            continue;
                        };
                        let a = merged.matrix(c, o).get(j, k);
                        for &off in &offsets {
                            pt[p * pad + off] = a;
                        }
                    }
                    let term = ev.pmult(&fm.cts[l.ama_ct(gi, j)], &pt)?;
                    accumulate(ev, &mut z, term)?;
                }
            }
            if let Some(z) = z {
                let shifted = ev.rotate(&z, (r * pad) as i64);
                accumulate(ev, &mut acc, shifted)?;
            }
        }
        let mut out = acc.unwrap_or_else(|| ev.zero_at(level - 1));
        if let Some(bias) = &merged.bias {
            pt.iter_mut().for_each(|v| *v = 0.0);
            for p in 0..blocks {
                if let Some(o) = out_l.block_channel(g, p) {
                    for &off in &offsets {
                        pt[p * pad + off] = bias[o];
                    }
                }
            }
            out = ev.add_plain(&out, &pt)?;
        }
        Ok(out)
    })?;
    EncryptedFeatureMap::new(cts, out_l, &fm.label)
}

/// Diagonal method on row-major ciphertexts.
///
/// Each input ciphertext is rotated once per nonzero offset d = j - k of the
/// adjacency pattern (d = 0 is free); the plaintext for offset d holds
/// M[k + d][k] at slot (t, k) and zero where k + d leaves [0, J).
pub fn rowmajor_spatial(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    merged: &MergedSpatialMatrix,
) -> Result<EncryptedFeatureMap, EngineError> {
    require_kind(&fm.layout, LayoutKind::RowMajor, "rowmajor_spatial")?;
    let level = check_merged(fm, merged)?;
    let l = &fm.layout;
    let out_l = l.with_channels(merged.c_out);
    let diags = merged.diagonals();
    let (c_in, c_out, jn) = (l.channels, merged.c_out, l.joints as i64);
    let slots = l.slot_count;
    let mut cts = Vec::with_capacity(out_l.num_cts());
    for b in 0..l.batch {
        let rotated: Vec<Vec<SimCiphertext>> = par_map(ev, c_in, |c, ev| {
            Ok(diags
                .iter()
                .map(|&d| ev.rotate(&fm.cts[b * c_in + c], d))
                .collect())
        })?;
        let outs = par_map(ev, c_out, |o, ev| {
            let mut acc: Option<SimCiphertext> = None;
            let mut pt = vec![0.0; slots];
            for c in 0..c_in {
                let m = merged.matrix(c, o);
                for (di, &d) in diags.iter().enumerate() {
                    pt.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..jn {
                        let j = k + d;
                        if !(0..jn).contains(&j) {
                            continue;
                        }
                        let a = m.get(j as usize, k as usize);
                        for t in 0..l.frames {
                            pt[l.tj_slot(t, k as usize)] = a;
                        }
                    }
                    let term = ev.pmult(&rotated[c][di], &pt)?;
                    accumulate(ev, &mut acc, term)?;
                }
            }
            let mut out = acc.unwrap_or_else(|| ev.zero_at(level - 1));
            if let Some(bias) = &merged.bias {
                pt.iter_mut().for_each(|v| *v = 0.0);
                for t in 0..l.frames {
                    for j in 0..l.joints {
                        pt[l.tj_slot(t, j)] = bias[o];
                    }
                }
                out = ev.add_plain(&out, &pt)?;
            }
            Ok(out)
        })?;
        cts.extend(outs);
    }
    EncryptedFeatureMap::new(cts, out_l, &fm.label)
}

/// Dispatch on the feature map's layout.
pub fn spatial_conv(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    merged: &MergedSpatialMatrix,
) -> Result<EncryptedFeatureMap, EngineError> {
    match fm.layout.kind {
        LayoutKind::Ama => ama_spatial(ev, fm, merged, &merged.decomposition()),
        LayoutKind::RowMajor => rowmajor_spatial(ev, fm, merged),
    }
}
