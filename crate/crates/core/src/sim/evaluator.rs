use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::counter::{HocCounter, OpKind, OpRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("slot count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("input length {len} exceeds slot count {slots}")]
    TooManyValues { len: usize, slots: usize },
    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(u32, u32),
    #[error("level exhausted: {op} needs level >= 1")]
    LevelExhausted { op: &'static str },
    #[error("cannot mod_switch up from level {from} to {to}")]
    ModSwitchUp { from: u32, to: u32 },
    #[error("slot count mismatch: {0} vs {1}")]
    SlotMismatch(usize, usize),
}

/// Simulation parameters shared by every ciphertext of one evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimContext {
    pub slot_count: usize,
    pub max_level: u32,
    pub scale_bits: u32,
    pub quantize: bool,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

impl SimContext {
    pub fn new(slot_count: usize, max_level: u32) -> Result<Self, SimError> {
        if slot_count == 0 || !slot_count.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(slot_count));
        }
        Ok(SimContext {
            slot_count,
            max_level,
            scale_bits: 33,
            quantize: false,
        })
    }

    pub fn with_quantize(mut self, on: bool) -> Self {
        self.quantize = on;
        self
    }

    pub fn with_scale_bits(mut self, bits: u32) -> Self {
        self.scale_bits = bits;
        self
    }

    /// Round to the fixed-point grid 2^-scale_bits when quantization is on.
    #[inline]
    pub fn q(&self, v: f64) -> f64 {
        if self.quantize {
            let s = (self.scale_bits as f64).exp2();
            (v * s).round() / s
        } else {
            v
        }
    }

    /// Fresh ciphertext at `max_level`; a short input is zero-extended.
    pub fn encrypt(&self, values: &[f64]) -> Result<SimCiphertext, SimError> {
        if values.len() > self.slot_count {
            return Err(SimError::TooManyValues {
                len: values.len(),
                slots: self.slot_count,
            });
        }
        let mut slots = vec![0.0; self.slot_count];
        for (s, v) in slots.iter_mut().zip(values) {
            *s = self.q(*v);
        }
        Ok(SimCiphertext::fresh(slots, self.max_level))
    }
}

/// Slot vector plus level. Immutable: every operation returns a new value.
#[derive(Clone, Debug, PartialEq)]
pub struct SimCiphertext {
    slots: Vec<f64>,
    level: u32,
    id: u64,
}

impl SimCiphertext {
    fn fresh(slots: Vec<f64>, level: u32) -> Self {
        SimCiphertext {
            slots,
            level,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn decrypt(&self) -> Vec<f64> {
        self.slots.clone()
    }
}

/// Executes homomorphic operations, counting and optionally logging each one.
#[derive(Debug)]
pub struct Evaluator {
    ctx: SimContext,
    counter: HocCounter,
    log: Option<Vec<OpRecord>>,
    layer: String,
}

impl Evaluator {
    pub fn new(ctx: SimContext) -> Self {
        Evaluator {
            ctx,
            counter: HocCounter::new(),
            log: None,
            layer: String::new(),
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn ctx(&self) -> &SimContext {
        &self.ctx
    }

    pub fn counter(&self) -> &HocCounter {
        &self.counter
    }

    pub fn log(&self) -> Option<&[OpRecord]> {
        self.log.as_deref()
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    /// Label attached to subsequent counters and log records.
    pub fn set_layer(&mut self, label: impl Into<String>) {
        self.layer = label.into();
    }

    /// Child evaluator for parallel work: same context and layer, empty counters.
    pub fn fork(&self) -> Evaluator {
        Evaluator {
            ctx: self.ctx.clone(),
            counter: HocCounter::new(),
            log: self.log.as_ref().map(|_| Vec::new()),
            layer: self.layer.clone(),
        }
    }

    /// Fold a child's counters and log back in.
    pub fn join(&mut self, child: Evaluator) {
        self.counter.merge(&child.counter);
        if let (Some(mine), Some(theirs)) = (self.log.as_mut(), child.log) {
            mine.extend(theirs);
        }
    }

    pub fn encrypt(&self, values: &[f64]) -> Result<SimCiphertext, SimError> {
        self.ctx.encrypt(values)
    }

    /// All-zero ciphertext at `level`, e.g. an output no term contributes to.
    pub fn zero_at(&self, level: u32) -> SimCiphertext {
        SimCiphertext::fresh(
            vec![0.0; self.ctx.slot_count],
            level.min(self.ctx.max_level),
        )
    }

    fn note(&mut self, op: OpKind, before: u32, after: u32, rot: Option<i64>) {
        self.counter.record(&self.layer, op);
        if let Some(log) = self.log.as_mut() {
            log.push(OpRecord {
                op,
                layer: self.layer.clone(),
                level_before: before,
                level_after: after,
                rotation_amount: rot,
            });
        }
    }

    fn check_slots(&self, n: usize) -> Result<(), SimError> {
        if n != self.ctx.slot_count {
            return Err(SimError::SlotMismatch(n, self.ctx.slot_count));
        }
        Ok(())
    }

    pub fn add(&mut self, a: &SimCiphertext, b: &SimCiphertext) -> Result<SimCiphertext, SimError> {
        if a.level != b.level {
            return Err(SimError::LevelMismatch(a.level, b.level));
        }
        self.check_slots(a.slots.len())?;
        self.check_slots(b.slots.len())?;
        let slots = a.slots.iter().zip(&b.slots).map(|(x, y)| x + y).collect();
        self.note(OpKind::Add, a.level, a.level, None);
        Ok(SimCiphertext::fresh(slots, a.level))
    }

    /// In-place accumulate `acc += b`; counted as one Add.
    pub fn add_assign(
        &mut self,
        acc: &mut SimCiphertext,
        b: &SimCiphertext,
    ) -> Result<(), SimError> {
        if acc.level != b.level {
            return Err(SimError::LevelMismatch(acc.level, b.level));
        }
        self.check_slots(b.slots.len())?;
        for (x, y) in acc.slots.iter_mut().zip(&b.slots) {
            *x += y;
        }
        self.note(OpKind::Add, acc.level, acc.level, None);
        Ok(())
    }

    /// Ciphertext plus plaintext vector (short plaintexts are zero-extended).
    pub fn add_plain(&mut self, a: &SimCiphertext, pt: &[f64]) -> Result<SimCiphertext, SimError> {
        if pt.len() > self.ctx.slot_count {
            return Err(SimError::TooManyValues {
                len: pt.len(),
                slots: self.ctx.slot_count,
            });
        }
        let mut slots = a.slots.clone();
        for (s, p) in slots.iter_mut().zip(pt) {
            *s += self.ctx.q(*p);
        }
        self.note(OpKind::Add, a.level, a.level, None);
        Ok(SimCiphertext::fresh(slots, a.level))
    }

    /// Ciphertext times plaintext vector with implicit rescale (level - 1).
    pub fn pmult(&mut self, a: &SimCiphertext, pt: &[f64]) -> Result<SimCiphertext, SimError> {
        if a.level == 0 {
            return Err(SimError::LevelExhausted { op: "pmult" });
        }
        if pt.len() > self.ctx.slot_count {
            return Err(SimError::TooManyValues {
                len: pt.len(),
                slots: self.ctx.slot_count,
            });
        }
        let mut slots = vec![0.0; a.slots.len()];
        let ctx = &self.ctx;
        for ((s, x), p) in slots.iter_mut().zip(&a.slots).zip(pt) {
            *s = ctx.q(x * ctx.q(*p));
        }
        self.note(OpKind::Pmult, a.level, a.level - 1, None);
        Ok(SimCiphertext::fresh(slots, a.level - 1))
    }

    pub fn pmult_scalar(&mut self, a: &SimCiphertext, s: f64) -> Result<SimCiphertext, SimError> {
        let pt = vec![s; self.ctx.slot_count];
        self.pmult(a, &pt)
    }

    pub fn cmult(
        &mut self,
        a: &SimCiphertext,
        b: &SimCiphertext,
    ) -> Result<SimCiphertext, SimError> {
        if a.level != b.level {
            return Err(SimError::LevelMismatch(a.level, b.level));
        }
        if a.level == 0 {
            return Err(SimError::LevelExhausted { op: "cmult" });
        }
        self.check_slots(b.slots.len())?;
        let ctx = &self.ctx;
        let slots = a
            .slots
            .iter()
            .zip(&b.slots)
            .map(|(x, y)| ctx.q(x * y))
            .collect();
        self.note(OpKind::Cmult, a.level, a.level - 1, None);
        Ok(SimCiphertext::fresh(slots, a.level - 1))
    }

    /// Left cyclic shift by `k` (negative = right). Rotation by a multiple of
    /// the slot count is free and not counted.
    pub fn rotate(&mut self, a: &SimCiphertext, k: i64) -> SimCiphertext {
        let n = a.slots.len() as i64;
        let r = k.rem_euclid(n) as usize;
        if r == 0 {
            return a.clone();
        }
        let mut slots = Vec::with_capacity(a.slots.len());
        slots.extend_from_slice(&a.slots[r..]);
        slots.extend_from_slice(&a.slots[..r]);
        self.note(OpKind::Rot, a.level, a.level, Some(k));
        SimCiphertext::fresh(slots, a.level)
    }

    pub fn mod_switch(
        &mut self,
        a: &SimCiphertext,
        target: u32,
    ) -> Result<SimCiphertext, SimError> {
        if target > a.level {
            return Err(SimError::ModSwitchUp {
                from: a.level,
                to: target,
            });
        }
        if target == a.level {
            return Ok(a.clone());
        }
        if let Some(log) = self.log.as_mut() {
            log.push(OpRecord {
                op: OpKind::ModSwitch,
                layer: self.layer.clone(),
                level_before: a.level,
                level_after: target,
                rotation_amount: None,
            });
        }
        Ok(SimCiphertext::fresh(a.slots.clone(), target))
    }
}
