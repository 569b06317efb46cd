use crate::packing::LayoutKind;
use crate::sim::{Evaluator, SimCiphertext};

use super::weights::TemporalWeights;
use super::{accumulate, par_map, require_level, EncryptedFeatureMap, EngineError};

/// Temporal convolution with SAME zero padding.
///
/// Each input ciphertext is rotated once per nonzero tap offset (K - 1
/// rotations, shared by every output channel). Tap weights, boundary masks and
/// stride-2 decimation are fused into one plaintext per term, so the layer
/// consumes one level. Under AMA the channel mixing adds U_in - 1 block
/// rotations per output ciphertext.
pub fn temporal_conv(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
    tw: &TemporalWeights,
    stride: usize,
) -> Result<EncryptedFeatureMap, EngineError> {
    let l = &fm.layout;
    let k = tw.kernel;
    if k % 2 == 0 {
        return Err(EngineError::Spec(format!(
            "temporal kernel {k} must be odd"
        )));
    }
    if k > l.frames {
        return Err(EngineError::Spec(format!(
            "temporal kernel {k} exceeds {} frames",
            l.frames
        )));
    }
    if stride != 1 && stride != 2 {
        return Err(EngineError::Spec(format!("stride {stride} unsupported")));
    }
    if tw.c_in != l.channels || tw.w.len() != tw.c_in * tw.c_out * k {
        return Err(EngineError::Layout(format!(
            "temporal weights C_in={} vs feature map C={}",
            tw.c_in, l.channels
        )));
    }
    let level = fm.level()?;
    require_level(level, 1, "temporal conv")?;
    let h = (k - 1) / 2;
    let frames = l.frames;
    // output frame kept at input frame t, and whether tap kappa stays in range
    let keep = |t: usize| stride == 1 || t % 2 == 0;
    let in_range = |t: usize, kappa: usize| {
        let src = t as i64 + kappa as i64 - h as i64;
        (0..frames as i64).contains(&src)
    };
    let step = match l.kind {
        LayoutKind::Ama => l.time_stride as i64,
        LayoutKind::RowMajor => (l.time_stride * l.joints) as i64,
    };
    let rotated: Vec<Vec<SimCiphertext>> = par_map(ev, fm.cts.len(), |i, ev| {
        Ok((0..k)
            .map(|kappa| ev.rotate(&fm.cts[i], (kappa as i64 - h as i64) * step))
            .collect())
    })?;
    let mut out_l = l.with_channels(tw.c_out);
    if stride == 2 {
        out_l = out_l.decimated();
    }
    let slots = l.slot_count;

    let cts = match l.kind {
        LayoutKind::Ama => {
            let (u_in, g_in, blocks, pad) =
                (l.channels_per_ct, l.cts_per_joint, l.blocks(), l.pad_bt);
            let g_out = out_l.cts_per_joint;
            par_map(ev, out_l.num_cts(), |idx, ev| {
                let (j, g) = (idx / g_out, idx % g_out);
                let mut acc: Option<SimCiphertext> = None;
                let mut pt = vec![0.0; slots];
                for r in 0..u_in {
                    let mut z: Option<SimCiphertext> = None;
                    for gi in 0..g_in {
                        for kappa in 0..k {
                            pt.iter_mut().for_each(|v| *v = 0.0);
                            for p in 0..blocks {
                                let Some(c) = l.block_channel(gi, p) else {
                                    continue;
                                };
                                let Some(o) = out_l.block_channel(g, (p + blocks - r) % blocks)
                                else {
                                    continue;
                                };
                                let w = tw.tap(o, c, kappa);
                                for b in 0..l.batch {
                                    for t in (0..frames).filter(|&t| keep(t) && in_range(t, kappa))
                                    {
                                        pt[p * pad + l.bt_offset(b, t)] = w;
                                    }
                                }
                            }
                            let term = ev.pmult(&rotated[l.ama_ct(gi, j)][kappa], &pt)?;
                            accumulate(ev, &mut z, term)?;
                        }
                    }
                    if let Some(z) = z {
                        let shifted = ev.rotate(&z, (r * pad) as i64);
                        accumulate(ev, &mut acc, shifted)?;
                    }
                }
                let mut out = acc.unwrap_or_else(|| ev.zero_at(level - 1));
                if let Some(bias) = &tw.bias {
                    pt.iter_mut().for_each(|v| *v = 0.0);
                    for p in 0..blocks {
                        let Some(o) = out_l.block_channel(g, p) else {
                            continue;
                        };
                        for b in 0..out_l.batch {
                            for t in 0..out_l.frames {
                                pt[p * pad + out_l.bt_offset(b, t)] = bias[o];
                            }
                        }
                    }
                    out = ev.add_plain(&out, &pt)?;
                }
                Ok(out)
            })?
        }
        LayoutKind::RowMajor => {
            let c_in = l.channels;
            par_map(ev, out_l.num_cts(), |idx, ev| {
                let (b, o) = (idx / tw.c_out, idx % tw.c_out);
                let mut acc: Option<SimCiphertext> = None;
                let mut pt = vec![0.0; slots];
                for c in 0..c_in {
                    for kappa in 0..k {
                        pt.iter_mut().for_each(|v| *v = 0.0);
                        let w = tw.tap(o, c, kappa);
                        for t in (0..frames).filter(|&t| keep(t) && in_range(t, kappa)) {
                            for jj in 0..l.joints {
                                pt[l.tj_slot(t, jj)] = w;
                            }
                        }
                        let term = ev.pmult(&rotated[b * c_in + c][kappa], &pt)?;
                        accumulate(ev, &mut acc, term)?;
                    }
                }
                let mut out = acc.unwrap_or_else(|| ev.zero_at(level - 1));
                if let Some(bias) = &tw.bias {
                    pt.iter_mut().for_each(|v| *v = 0.0);
                    for t in 0..out_l.frames {
                        for jj in 0..l.joints {
                            pt[out_l.tj_slot(t, jj)] = bias[o];
                        }
                    }
                    out = ev.add_plain(&out, &pt)?;
                }
                Ok(out)
            })?
        }
    };
    EncryptedFeatureMap::new(cts, out_l, &fm.label)
}
