use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Homomorphic operation kinds that appear in the operation log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Rot,
    Pmult,
    Cmult,
    Add,
    ModSwitch,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Rot => "rot",
            OpKind::Pmult => "pmult",
            OpKind::Cmult => "cmult",
            OpKind::Add => "add",
            OpKind::ModSwitch => "mod_switch",
        }
    }
}

/// Five-way operation tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub rot: u64,
    pub pmult: u64,
    pub cmult: u64,
    pub add: u64,
    pub rescale: u64,
}

impl OpCounts {
    /// Total homomorphic operation count: Rot + PMult + CMult + Add.
    /// Rescales ride along with multiplications and are not counted separately.
    pub fn hoc(&self) -> u64 {
        self.rot + self.pmult + self.cmult + self.add
    }

    fn bump(&mut self, kind: OpKind) {
        match kind {
            OpKind::Rot => self.rot += 1,
            OpKind::Pmult => {
                self.pmult += 1;
                self.rescale += 1;
            }
            OpKind::Cmult => {
                self.cmult += 1;
                self.rescale += 1;
            }
            OpKind::Add => self.add += 1,
            OpKind::ModSwitch => {}
        }
    }

    /// Value of one named counter ("rot", "pmult", "cmult", "add", "rescale").
    pub fn get(&self, name: &str) -> Option<u64> {
        Some(match name {
            "rot" => self.rot,
            "pmult" => self.pmult,
            "cmult" => self.cmult,
            "add" => self.add,
            "rescale" => self.rescale,
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 5] = ["rot", "pmult", "cmult", "add", "rescale"];
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(mut self, rhs: OpCounts) -> OpCounts {
        self += rhs;
        self
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: OpCounts) {
        self.rot += rhs.rot;
        self.pmult += rhs.pmult;
        self.cmult += rhs.cmult;
        self.add += rhs.add;
        self.rescale += rhs.rescale;
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(iter: I) -> OpCounts {
        iter.fold(OpCounts::default(), |a, b| a + b)
    }
}

/// Operation counters, in total and per layer label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HocCounter {
    pub rot: u64,
    pub pmult: u64,
    pub cmult: u64,
    pub add: u64,
    pub rescale: u64,
    pub per_layer: BTreeMap<String, OpCounts>,
}

impl HocCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, layer: &str, kind: OpKind) {
        let mut one = OpCounts::default();
        one.bump(kind);
        self.add_counts(layer, one);
    }

    fn add_counts(&mut self, layer: &str, c: OpCounts) {
        self.rot += c.rot;
        self.pmult += c.pmult;
        self.cmult += c.cmult;
        self.add += c.add;
        self.rescale += c.rescale;
        match self.per_layer.get_mut(layer) {
            Some(slot) => *slot += c,
            None => {
                self.per_layer.insert(layer.to_string(), c);
            }
        }
    }

    /// Associative, order-independent merge.
    pub fn merge(&mut self, other: &HocCounter) {
        for (layer, c) in &other.per_layer {
            self.add_counts(layer, *c);
        }
    }

    pub fn total(&self) -> OpCounts {
        OpCounts {
            rot: self.rot,
            pmult: self.pmult,
            cmult: self.cmult,
            add: self.add,
            rescale: self.rescale,
        }
    }

    pub fn layer(&self, label: &str) -> OpCounts {
        self.per_layer.get(label).copied().unwrap_or_default()
    }

    /// True when the totals equal the sum over layers.
    pub fn is_consistent(&self) -> bool {
        self.per_layer.values().copied().sum::<OpCounts>() == self.total()
    }

    /// Rebuild counters from an operation log.
    pub fn from_log<'a>(records: impl IntoIterator<Item = &'a OpRecord>) -> Self {
        let mut c = HocCounter::new();
        for r in records {
            c.record(&r.layer, r.op);
        }
        c
    }
}

/// One line of the JSON-lines operation log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub op: OpKind,
    pub layer: String,
    pub level_before: u32,
    pub level_after: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_amount: Option<i64>,
}

/// Write records as JSON lines.
pub fn write_log<W: std::io::Write>(mut w: W, records: &[OpRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse JSON-lines records; blank lines are skipped.
pub fn read_log<R: std::io::BufRead>(r: R) -> std::io::Result<Vec<OpRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(rec);
    }
    Ok(out)
}
