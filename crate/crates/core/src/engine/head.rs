use crate::adjacency::Matrix;
use crate::packing::{LayoutKind, PackingLayout};
use crate::sim::{Evaluator, SimCiphertext};

use super::{accumulate, par_map, require_level, EncryptedFeatureMap, EngineError};

/// Output of global average pooling: per-(batch, channel) means at known
/// (ciphertext, slot) positions.
#[derive(Clone, Debug)]
pub struct PooledMap {
    pub cts: Vec<SimCiphertext>,
    /// Layout of the feature map that was pooled.
    pub layout: PackingLayout,
    /// `readout[b * C + c]` = (ciphertext, slot) of the mean.
    pub readout: Vec<(usize, usize)>,
}

impl PooledMap {
    pub fn level(&self) -> u32 {
        self.cts.first().map_or(0, |c| c.level())
    }

    /// B × C means.
    pub fn decrypt(&self) -> Vec<Vec<f64>> {
        let c = self.layout.channels;
        (0..self.layout.batch)
            .map(|b| {
                (0..c)
                    .map(|ch| {
                        let (ct, s) = self.readout[b * c + ch];
                        self.cts[ct].slots()[s]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Encrypted class scores.
#[derive(Clone, Debug)]
pub struct EncryptedScores {
    pub cts: Vec<SimCiphertext>,
    pub batch: usize,
    pub classes: usize,
    /// `readout[b * classes + i]` = (ciphertext, slot).
    pub readout: Vec<(usize, usize)>,
}

impl EncryptedScores {
    pub fn level(&self) -> u32 {
        self.cts.first().map_or(0, |c| c.level())
    }

    /// B × classes scores.
    pub fn decrypt(&self) -> Vec<Vec<f64>> {
        (0..self.batch)
            .map(|b| {
                (0..self.classes)
                    .map(|i| {
                        let (ct, s) = self.readout[b * self.classes + i];
                        self.cts[ct].slots()[s]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Mean over valid frames and joints.
///
/// AMA: joint ciphertexts of a channel group are summed (J - 1 Adds), masked
/// and scaled by 1/(T·J) in one PMult, then folded with a rotate-and-add tree
/// over the frame stride (log2 T_valid rotations per group). The mean of
/// (b, channel in block p) lands at block p, offset b·T_span.
///
/// Row-major: each (b, c) ciphertext is masked and scaled, then folded over
/// the whole padded T×J grid; the mean lands in slot 0.
pub fn global_avg_pool(
    ev: &mut Evaluator,
    fm: &EncryptedFeatureMap,
) -> Result<PooledMap, EngineError> {
    let level = fm.level()?;
    require_level(level, 1, "global average pool")?;
    let l = &fm.layout;
    let scale = 1.0 / (l.frames * l.joints) as f64;
    let slots = l.slot_count;
    match l.kind {
        LayoutKind::Ama => {
            let steps = l.frames.next_power_of_two().trailing_zeros();
            let window = (1usize << steps) * l.time_stride;
            if l.batch > 1 && window > l.frame_span {
                return Err(EngineError::Unsupported(format!(
                    "AMA pooling with B={} needs the {} valid frames to fill the frame span {}",
                    l.batch, l.frames, l.frame_span
                )));
            }
            let g_n = l.cts_per_joint;
            let cts = par_map(ev, g_n, |g, ev| {
                let mut s: Option<SimCiphertext> = None;
                for j in 0..l.joints {
                    accumulate(ev, &mut s, fm.cts[l.ama_ct(g, j)].clone())?;
                }
                let mut mask = vec![0.0; slots];
                for p in 0..l.blocks() {
                    if l.block_channel(g, p).is_none() {
                        continue;
                    }
                    for b in 0..l.batch {
                        for t in 0..l.frames {
                            mask[p * l.pad_bt + l.bt_offset(b, t)] = scale;
                        }
                    }
                }
                let mut acc = ev.pmult(&s.expect("J >= 1"), &mask)?;
                for m in 0..steps {
                    let r = ev.rotate(&acc, ((1usize << m) * l.time_stride) as i64);
                    ev.add_assign(&mut acc, &r)?;
                }
                Ok(acc)
            })?;
            let u = l.channels_per_ct;
            let mut readout = Vec::with_capacity(l.batch * l.channels);
            for b in 0..l.batch {
                for c in 0..l.channels {
                    readout.push((c / u, (c % u) * l.pad_bt + l.bt_offset(b, 0)));
                }
            }
            Ok(PooledMap {
                cts,
                layout: l.clone(),
                readout,
            })
        }
        LayoutKind::RowMajor => {
            let steps = l.pad_bt.trailing_zeros();
            let mut mask = vec![0.0; slots];
            for t in 0..l.frames {
                for j in 0..l.joints {
                    mask[l.tj_slot(t, j)] = scale;
                }
            }
            let cts = par_map(ev, fm.cts.len(), |i, ev| {
                let mut acc = ev.pmult(&fm.cts[i], &mask)?;
                for m in 0..steps {
                    let r = ev.rotate(&acc, 1i64 << m);
                    ev.add_assign(&mut acc, &r)?;
                }
                Ok(acc)
            })?;
            let readout = (0..l.batch * l.channels).map(|i| (i, 0)).collect();
            Ok(PooledMap {
                cts,
                layout: l.clone(),
                readout,
            })
        }
    }
}

/// Scores `W·h + bias` for every batch element; `w` is classes × C.
///
/// AMA: one ciphertext per class. Each channel group contributes one PMult
/// whose plaintext carries W[i][c] at the first copy of every channel block;
/// a log2(U)-step rotate-and-add tree across blocks then gathers the channel
/// sum into block 0.
///
/// Row-major: one ciphertext per (b, class) accumulating C PMults that keep
/// only slot 0.
pub fn fully_connected(
    ev: &mut Evaluator,
    pooled: &PooledMap,
    w: &Matrix,
    bias: &[f64],
) -> Result<EncryptedScores, EngineError> {
    let l = &pooled.layout;
    let classes = w.rows;
    if w.cols != l.channels || bias.len() != classes {
        return Err(EngineError::Layout(format!(
            "fc weights {}×{} with {} biases for {} pooled channels",
            w.rows,
            w.cols,
            bias.len(),
            l.channels
        )));
    }
    require_level(pooled.level(), 1, "fully connected")?;
    let slots = l.slot_count;
    match l.kind {
        LayoutKind::Ama => {
            let u = l.channels_per_ct;
            let steps = u.trailing_zeros();
            let cts = par_map(ev, classes, |i, ev| {
                let mut acc: Option<SimCiphertext> = None;
                let mut pt = vec![0.0; slots];
                for (g, ct) in pooled.cts.iter().enumerate() {
                    pt.iter_mut().for_each(|v| *v = 0.0);
                    for p in 0..u {
                        let Some(c) = l.block_channel(g, p) else {
                            continue;
                        };
                        for b in 0..l.batch {
                            pt[p * l.pad_bt + l.bt_offset(b, 0)] = w.get(i, c);
                        }
                    }
                    let term = ev.pmult(ct, &pt)?;
                    accumulate(ev, &mut acc, term)?;
                }
                let mut acc = acc.expect("at least one channel group");
                for m in 0..steps {
                    let r = ev.rotate(&acc, ((1usize << m) * l.pad_bt) as i64);
                    ev.add_assign(&mut acc, &r)?;
                }
                pt.iter_mut().for_each(|v| *v = 0.0);
                for b in 0..l.batch {
                    pt[l.bt_offset(b, 0)] = bias[i];
                }
                Ok(ev.add_plain(&acc, &pt)?)
            })?;
            let mut readout = Vec::with_capacity(l.batch * classes);
            for b in 0..l.batch {
                for i in 0..classes {
                    readout.push((i, l.bt_offset(b, 0)));
                }
            }
            Ok(EncryptedScores {
                cts,
                batch: l.batch,
                classes,
                readout,
            })
        }
        LayoutKind::RowMajor => {
            let c_n = l.channels;
            let cts = par_map(ev, l.batch * classes, |idx, ev| {
                let (b, i) = (idx / classes, idx % classes);
                let mut acc: Option<SimCiphertext> = None;
                let mut pt = vec![0.0; slots];
                for c in 0..c_n {
                    pt[0] = w.get(i, c);
                    let term = ev.pmult(&pooled.cts[b * c_n + c], &pt)?;
                    accumulate(ev, &mut acc, term)?;
                }
                pt[0] = bias[i];
                Ok(ev.add_plain(&acc.expect("C >= 1"), &pt)?)
            })?;
            let readout = (0..l.batch * classes).map(|i| (i, 0)).collect();
            Ok(EncryptedScores {
                cts,
                batch: l.batch,
                classes,
                readout,
            })
        }
    }
}
