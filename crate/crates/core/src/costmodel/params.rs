use serde::{Deserialize, Serialize};

use super::CostError;

pub const DEFAULT_SECURITY_BITS: u32 = 80;
/// Bits reserved on top of L·Δ for the base and special primes.
pub const DEFAULT_MARGIN_BITS: u32 = 36;
/// Q is rounded up to a multiple of this many bits.
const Q_GRANULE: u32 = 20;

/// Largest modulus (bits) per polynomial degree at each security level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityTable {
    /// `(security bits, [(log2 N, max log Q)])`, ascending in both.
    pub levels: Vec<(u32, Vec<(u32, u32)>)>,
}

impl Default for SecurityTable {
    /// 128/192/256-bit rows of the usual ternary-secret table; the 80-bit row
    /// scales the 128-bit bound by 1.6.
    fn default() -> Self {
        let row = |v: [u32; 5]| (12..=16).zip(v).collect::<Vec<_>>();
        SecurityTable {
            levels: vec![
                (80, row([174, 350, 700, 1409, 2818])),
                (128, row([109, 218, 438, 881, 1761])),
                (192, row([75, 152, 305, 611, 1224])),
                (256, row([58, 118, 237, 476, 953])),
            ],
        }
    }
}

impl SecurityTable {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let t: SecurityTable =
            serde_json::from_str(text).map_err(|e| CostError::Invalid(e.to_string()))?;
        if t.levels.is_empty() {
            return Err(CostError::Invalid("empty security table".into()));
        }
        Ok(t)
    }

    /// Row for the smallest tabulated security level >= `bits`.
    fn row_for(&self, bits: u32) -> Option<(u32, &[(u32, u32)])> {
        self.levels
            .iter()
            .filter(|(s, _)| *s >= bits)
            .min_by_key(|(s, _)| *s)
            .map(|(s, r)| (*s, r.as_slice()))
    }

    /// Highest tabulated security level at which `log_n` admits `q_bits`.
    pub fn estimate(&self, log_n: u32, q_bits: u32) -> Option<u32> {
        self.levels
            .iter()
            .filter(|(_, r)| r.iter().any(|&(n, q)| n == log_n && q >= q_bits))
            .map(|(s, _)| *s)
            .max()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeParams {
    pub poly_degree: u64,
    pub log_n: u32,
    pub slot_count: u64,
    pub q_bits: u32,
    pub scale_bits: u32,
    pub levels: u32,
    pub security_bits: u32,
}

/// Modulus budget for `levels` rescalings: L·Δ plus the margin, rounded up
/// to a multiple of 20 bits.
pub fn modulus_bits(levels: u32, scale_bits: u32, margin: u32) -> u32 {
    (levels * scale_bits + margin).div_ceil(Q_GRANULE) * Q_GRANULE
}

/// Smallest N whose modulus bound at the requested security covers the
/// budget for `levels`.
pub fn select_params(
    levels: u32,
    scale_bits: u32,
    security_bits: u32,
    table: &SecurityTable,
) -> Result<HeParams, CostError> {
    select_params_with_margin(
        levels,
        scale_bits,
        security_bits,
        DEFAULT_MARGIN_BITS,
        table,
    )
}

pub fn select_params_with_margin(
    levels: u32,
    scale_bits: u32,
    security_bits: u32,
    margin: u32,
    table: &SecurityTable,
) -> Result<HeParams, CostError> {
    if levels == 0 {
        return Err(CostError::Invalid("levels must be >= 1".into()));
    }
    let q_bits = modulus_bits(levels, scale_bits, margin);
    let none = || CostError::NoParameters {
        q_bits,
        security: security_bits,
    };
    let (_, row) = table.row_for(security_bits).ok_or_else(none)?;
    let &(log_n, _) = row
        .iter()
        .filter(|&&(_, q)| q >= q_bits)
        .min_by_key(|(n, _)| *n)
        .ok_or_else(none)?;
    Ok(HeParams {
        poly_degree: 1 << log_n,
        log_n,
        slot_count: 1 << (log_n - 1),
        q_bits,
        scale_bits,
        levels,
        security_bits: table.estimate(log_n, q_bits).unwrap_or(security_bits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pick(levels: u32) -> (u64, u32) {
        let p = select_params(levels, 33, 80, &SecurityTable::default()).unwrap();
        (p.poly_degree, p.q_bits)
    }

    #[test]
    fn reference_choices() {
        assert_eq!(pick(21), (1 << 15, 740));
        assert_eq!(pick(19), (1 << 14, 680));
        assert_eq!(pick(17), (1 << 14, 600));
    }

    #[test]
    fn one_level_gets_smallest_entry() {
        let p = select_params(1, 33, 0, &SecurityTable::default()).unwrap();
        assert_eq!(p.log_n, 12);
    }

    #[test]
    fn impossible_targets() {
        let t = SecurityTable::default();
        assert!(matches!(
            select_params(21, 33, 512, &t),
            Err(CostError::NoParameters { .. })
        ));
        assert!(matches!(
            select_params(200, 33, 128, &t),
            Err(CostError::NoParameters { .. })
        ));
        assert!(select_params(0, 33, 80, &t).is_err());
    }

    #[test]
    fn monotone_in_levels() {
        let t = SecurityTable::default();
        let mut prev = (0, 0);
        for l in 1..=40 {
            let p = select_params(l, 33, 128, &t).unwrap();
            assert!(p.poly_degree >= prev.0 && p.q_bits >= prev.1);
            prev = (p.poly_degree, p.q_bits);
        }
    }
}
