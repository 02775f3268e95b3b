use std::collections::BTreeSet;

use super::{Architecture, LayerSpec, OperatorKind, SpaceConfig, NUM_OPS};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// `5^L * 2^(L(L-1)/2)` with skips, `5^L` without; saturates at `u128::MAX`.
pub fn space_size(cfg: &SpaceConfig) -> u128 {
    let ops = (NUM_OPS as u128).checked_pow(cfg.layer_count as u32);
    let skips = 1u128.checked_shl(cfg.feasible_skips() as u32);
    match (ops, skips) {
        (Some(o), Some(s)) => o.saturating_mul(s),
        _ => u128::MAX,
    }
}

/// Every architecture of the space, operators varying slowest-first by layer
/// and skip bits fastest.
pub fn enumerate_space(cfg: &SpaceConfig, cap: Option<u128>) -> Result<Vec<Architecture>> {
    cfg.validate()?;
    let cap = cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let size = space_size(cfg);
    if size > cap {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    let l = cfg.layer_count;
    let op_combos = NUM_OPS.pow(l as u32);
    let skip_bits = cfg.feasible_skips();
    let mut out = Vec::with_capacity(size as usize);
    for op_index in 0..op_combos {
        let mut ops = vec![OperatorKind::Identity; l];
        let mut rem = op_index;
        for slot in ops.iter_mut().rev() {
            *slot = OperatorKind::ALL[rem % NUM_OPS];
            rem /= NUM_OPS;
        }
        for mask in 0..(1u64 << skip_bits) {
            let mut bit = 0;
            let layers = ops
                .iter()
                .enumerate()
                .map(|(i, &op)| {
                    let mut skips = BTreeSet::new();
                    if cfg.skips_enabled {
                        for s in 0..i {
                            if mask >> bit & 1 == 1 {
                                skips.insert(s);
                            }
                            bit += 1;
                        }
                    }
                    LayerSpec { op, skips }
                })
                .collect();
            out.push(Architecture { layers });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn closed_form_sizes() {
        for l in 1..=4 {
            for skips in [false, true] {
                let cfg = SpaceConfig::new(l, skips).unwrap();
                let all = enumerate_space(&cfg, None).unwrap();
                let expected = 5u128.pow(l as u32) * if skips { 1 << (l * (l - 1) / 2) } else { 1 };
                assert_eq!(all.len() as u128, expected);
                assert_eq!(space_size(&cfg), expected);
                let unique: HashSet<_> = all.iter().collect();
                assert_eq!(unique.len(), all.len());
                for a in &all {
                    a.validate(&cfg).unwrap();
                }
            }
        }
    }

    #[test]
    fn named_sizes() {
        assert_eq!(enumerate_space(&SpaceConfig::new(4, false).unwrap(), None).unwrap().len(), 625);
        assert_eq!(enumerate_space(&SpaceConfig::new(2, true).unwrap(), None).unwrap().len(), 50);
        assert_eq!(enumerate_space(&SpaceConfig::new(1, true).unwrap(), None).unwrap().len(), 5);
    }

    #[test]
    fn cap_enforced() {
        let err = enumerate_space(&SpaceConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::SpaceTooLarge { .. }));
        assert!(enumerate_space(&SpaceConfig::new(4, false).unwrap(), Some(100)).is_err());
    }
}
