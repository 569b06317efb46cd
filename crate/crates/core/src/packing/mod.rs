//! AMA and row-major slot layouts for (B, C, T, J) graph tensors.
//!
//! AMA: one ciphertext per (joint, channel group). Each channel owns a block
//! of `pad_bt` slots holding its (b, t) values batch-major; blocks are laid out
//! in channel order and the group repeats until the slot vector is full.
//!
//! Row-major: one ciphertext per (batch, channel) holding the T×J grid row by
//! row.

mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SimCiphertext, SimContext, SimError};
pub use tensor::GraphTensor;

/// Tolerance used when checking that AMA replicas agree.
pub const REPLICA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PackingError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("channel block of {pad_bt} slots does not fit in {slots} slots")]
    BlockTooLarge { pad_bt: usize, slots: usize },
    #[error("T*J = {grid} exceeds slot count {slots}")]
    GridTooLarge { grid: usize, slots: usize },
    #[error("replica divergence in ciphertext {ct} at slot {slot}: |diff| = {diff:e}")]
    ReplicaDivergence { ct: usize, slot: usize, diff: f64 },
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("tensor file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Ama,
    RowMajor,
}

/// Bijection between tensor coordinates and (ciphertext, slot) positions.
///
/// `frames` is the number of valid frames; frame `t` sits at original frame
/// position `t * time_stride`, which lets stride-2 temporal layers decimate in
/// place without repacking. `frame_span` is the original frame count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingLayout {
    pub kind: LayoutKind,
    pub slot_count: usize,
    pub batch: usize,
    pub channels: usize,
    pub frames: usize,
    pub joints: usize,
    pub frame_span: usize,
    pub time_stride: usize,
    pub pad_bt: usize,
    pub channels_per_ct: usize,
    pub cts_per_joint: usize,
    pub replication: usize,
}

impl PackingLayout {
    /// AMA geometry. `U` is the number of channel blocks per ciphertext:
    /// all blocks when C does not fit, otherwise C rounded up to a power of two
    /// so that the replicated group tiles the slot vector exactly.
    pub fn ama(
        slot_count: usize,
        batch: usize,
        channels: usize,
        frames: usize,
        joints: usize,
    ) -> Result<Self, PackingError> {
        check_geometry(slot_count, [batch, channels, frames, joints])?;
        let pad_bt = (batch * frames).next_power_of_two();
        if pad_bt > slot_count {
            return Err(PackingError::BlockTooLarge {
                pad_bt,
                slots: slot_count,
            });
        }
        let mut l = PackingLayout {
            kind: LayoutKind::Ama,
            slot_count,
            batch,
            channels,
            frames,
            joints,
            frame_span: frames,
            time_stride: 1,
            pad_bt,
            channels_per_ct: 0,
            cts_per_joint: 0,
            replication: 0,
        };
        l.set_channels(channels);
        Ok(l)
    }

    pub fn row_major(
        slot_count: usize,
        batch: usize,
        channels: usize,
        frames: usize,
        joints: usize,
    ) -> Result<Self, PackingError> {
        check_geometry(slot_count, [batch, channels, frames, joints])?;
        let grid = frames * joints;
        if grid > slot_count {
            return Err(PackingError::GridTooLarge {
                grid,
                slots: slot_count,
            });
        }
        Ok(PackingLayout {
            kind: LayoutKind::RowMajor,
            slot_count,
            batch,
            channels,
            frames,
            joints,
            frame_span: frames,
            time_stride: 1,
            pad_bt: grid.next_power_of_two(),
            channels_per_ct: 1,
            cts_per_joint: 0,
            replication: 1,
        })
    }

    fn set_channels(&mut self, channels: usize) {
        self.channels = channels;
        if self.kind == LayoutKind::Ama {
            let blocks = self.blocks();
            let u = blocks.min(channels.next_power_of_two());
            self.channels_per_ct = u;
            self.cts_per_joint = channels.div_ceil(u);
            self.replication = if self.cts_per_joint == 1 {
                blocks / u
            } else {
                1
            };
        }
    }

    /// Same geometry with a different channel count (output of a conv layer).
    pub fn with_channels(&self, channels: usize) -> PackingLayout {
        let mut l = self.clone();
        l.set_channels(channels);
        l
    }

    /// Layout after a stride-2 temporal layer: every other valid frame is kept.
    pub fn decimated(&self) -> PackingLayout {
        let mut l = self.clone();
        l.frames = self.frames.div_ceil(2);
        l.time_stride = self.time_stride * 2;
        l
    }

    /// Number of `pad_bt` blocks per ciphertext (AMA).
    pub fn blocks(&self) -> usize {
        self.slot_count / self.pad_bt
    }

    pub fn num_cts(&self) -> usize {
        match self.kind {
            LayoutKind::Ama => self.joints * self.cts_per_joint,
            LayoutKind::RowMajor => self.batch * self.channels,
        }
    }

    /// AMA ciphertext index of (channel group, joint).
    pub fn ama_ct(&self, group: usize, joint: usize) -> usize {
        joint * self.cts_per_joint + group
    }

    /// Channel held by block `p` of channel group `group` (AMA), if any.
    pub fn block_channel(&self, group: usize, p: usize) -> Option<usize> {
        let c = group * self.channels_per_ct + p % self.channels_per_ct;
        (c < self.channels).then_some(c)
    }

    /// Offset of (b, t) inside an AMA block.
    #[inline]
    pub fn bt_offset(&self, b: usize, t: usize) -> usize {
        b * self.frame_span + t * self.time_stride
    }

    /// Row-major slot of (t, j).
    #[inline]
    pub fn tj_slot(&self, t: usize, j: usize) -> usize {
        t * self.time_stride * self.joints + j
    }

    /// First-copy position of (b, c, t, j).
    pub fn position(&self, b: usize, c: usize, t: usize, j: usize) -> (usize, usize) {
        match self.kind {
            LayoutKind::Ama => {
                let u = self.channels_per_ct;
                (
                    self.ama_ct(c / u, j),
                    (c % u) * self.pad_bt + self.bt_offset(b, t),
                )
            }
            LayoutKind::RowMajor => (b * self.channels + c, self.tj_slot(t, j)),
        }
    }

    /// Slots carrying tensor data (replicas excluded).
    pub fn occupied_slots(&self) -> usize {
        self.batch * self.channels * self.frames * self.joints
    }

    /// Slots across all ciphertexts that hold neither data nor replicas.
    pub fn wasted_slots(&self) -> usize {
        let data = self.occupied_slots();
        let replicas = match self.kind {
            LayoutKind::Ama => data * (self.replication - 1),
            LayoutKind::RowMajor => 0,
        };
        self.num_cts() * self.slot_count - data - replicas
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.frames, self.joints]
    }

    fn check_cts(&self, cts: &[SimCiphertext]) -> Result<(), PackingError> {
        if cts.len() != self.num_cts() {
            return Err(PackingError::LayoutMismatch(format!(
                "layout expects {} ciphertexts, got {}",
                self.num_cts(),
                cts.len()
            )));
        }
        if let Some(ct) = cts.iter().find(|c| c.slot_count() != self.slot_count) {
            return Err(PackingError::LayoutMismatch(format!(
                "ciphertext has {} slots, layout has {}",
                ct.slot_count(),
                self.slot_count
            )));
        }
        Ok(())
    }
}

fn check_geometry(slot_count: usize, dims: [usize; 4]) -> Result<(), PackingError> {
    if slot_count == 0 || !slot_count.is_power_of_two() {
        return Err(PackingError::Sim(SimError::NotPowerOfTwo(slot_count)));
    }
    if dims.contains(&0) {
        return Err(PackingError::Shape(format!(
            "all dims must be >= 1, got {dims:?}"
        )));
    }
    Ok(())
}

/// Slot vectors for an AMA layout, before encryption.
pub fn ama_slots(x: &GraphTensor, layout: &PackingLayout) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; layout.slot_count]; layout.num_cts()];
    for j in 0..layout.joints {
        for g in 0..layout.cts_per_joint {
            let v = &mut out[layout.ama_ct(g, j)];
            for p in 0..layout.blocks() {
                let Some(c) = layout.block_channel(g, p) else {
                    continue;
                };
                let base = p * layout.pad_bt;
                for b in 0..layout.batch {
                    for t in 0..layout.frames {
                        v[base + layout.bt_offset(b, t)] = x.get(b, c, t, j);
                    }
                }
            }
        }
    }
    out
}

pub fn ama_pack(
    x: &GraphTensor,
    ctx: &SimContext,
) -> Result<(Vec<SimCiphertext>, PackingLayout), PackingError> {
    let [b, c, t, j] = x.dims();
    let layout = PackingLayout::ama(ctx.slot_count, b, c, t, j)?;
    let cts = ama_slots(x, &layout)
        .iter()
        .map(|v| ctx.encrypt(v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cts, layout))
}

/// Inverse of [`ama_pack`]; reads the first copy and checks every replica.
pub fn ama_unpack(
    cts: &[SimCiphertext],
    layout: &PackingLayout,
) -> Result<GraphTensor, PackingError> {
    if layout.kind != LayoutKind::Ama {
        return Err(PackingError::LayoutMismatch(
            "expected an AMA layout".into(),
        ));
    }
    layout.check_cts(cts)?;
    let mut x = GraphTensor::zeros(layout.dims())?;
    let u = layout.channels_per_ct;
    for j in 0..layout.joints {
        for g in 0..layout.cts_per_joint {
            let ci = layout.ama_ct(g, j);
            let s = cts[ci].slots();
            for p in 0..layout.blocks() {
                let Some(c) = layout.block_channel(g, p) else {
                    continue;
                };
                for b in 0..layout.batch {
                    for t in 0..layout.frames {
                        let slot = p * layout.pad_bt + layout.bt_offset(b, t);
                        if p < u {
                            x.set(b, c, t, j, s[slot]);
                        } else {
                            let diff = (s[slot] - x.get(b, c, t, j)).abs();
                            if diff > REPLICA_TOLERANCE || diff.is_nan() {
                                return Err(PackingError::ReplicaDivergence { ct: ci, slot, diff });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(x)
}

pub fn rowmajor_slots(x: &GraphTensor, layout: &PackingLayout) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; layout.slot_count]; layout.num_cts()];
    for b in 0..layout.batch {
        for c in 0..layout.channels {
            let v = &mut out[b * layout.channels + c];
            for t in 0..layout.frames {
                for j in 0..layout.joints {
                    v[layout.tj_slot(t, j)] = x.get(b, c, t, j);
                }
            }
        }
    }
    out
}

pub fn rowmajor_pack(
    x: &GraphTensor,
    ctx: &SimContext,
) -> Result<(Vec<SimCiphertext>, PackingLayout), PackingError> {
    let [b, c, t, j] = x.dims();
    let layout = PackingLayout::row_major(ctx.slot_count, b, c, t, j)?;
    let cts = rowmajor_slots(x, &layout)
        .iter()
        .map(|v| ctx.encrypt(v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cts, layout))
}

pub fn rowmajor_unpack(
    cts: &[SimCiphertext],
    layout: &PackingLayout,
) -> Result<GraphTensor, PackingError> {
    if layout.kind != LayoutKind::RowMajor {
        return Err(PackingError::LayoutMismatch(
            "expected a row-major layout".into(),
        ));
    }
    layout.check_cts(cts)?;
    let mut x = GraphTensor::zeros(layout.dims())?;
    for b in 0..layout.batch {
        for c in 0..layout.channels {
            let s = cts[b * layout.channels + c].slots();
            for t in 0..layout.frames {
                for j in 0..layout.joints {
                    x.set(b, c, t, j, s[layout.tj_slot(t, j)]);
                }
            }
        }
    }
    Ok(x)
}

/// Pack with the given layout kind.
pub fn pack(
    x: &GraphTensor,
    kind: LayoutKind,
    ctx: &SimContext,
) -> Result<(Vec<SimCiphertext>, PackingLayout), PackingError> {
    match kind {
        LayoutKind::Ama => ama_pack(x, ctx),
        LayoutKind::RowMajor => rowmajor_pack(x, ctx),
    }
}

pub fn unpack(cts: &[SimCiphertext], layout: &PackingLayout) -> Result<GraphTensor, PackingError> {
    match layout.kind {
        LayoutKind::Ama => ama_unpack(cts, layout),
        LayoutKind::RowMajor => rowmajor_unpack(cts, layout),
    }
}
