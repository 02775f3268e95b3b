use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine annealing with warm restarts every `t0` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub l_max: f64,
    pub l_min: f64,
    pub t0: u32,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            l_max: 0.05,
            l_min: 0.001,
            t0: 10,
        }
    }
}

impl LrSchedule {
    pub fn new(l_max: f64, l_min: f64, t0: u32) -> Result<Self> {
        let s = LrSchedule { l_max, l_min, t0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return Err(Error::Config(format!(
                "need 0 < l_min < l_max, got l_min={} l_max={}",
                self.l_min, self.l_max
            )));
        }
        if self.t0 == 0 {
            return Err(Error::Config("t0 must be positive".into()));
        }
        Ok(())
    }

    pub fn at(&self, epoch: f64) -> f64 {
        cosine_lr(self, epoch)
    }
}

/// `l_min + (l_max - l_min)(1 + cos(pi (t mod t0) / t0)) / 2` at fractional epoch `t`.
pub fn cosine_lr(sched: &LrSchedule, t: f64) -> f64 {
    let period = sched.t0 as f64;
    let phase = t.max(0.0) % period;
    let lr = sched.l_min + 0.5 * (sched.l_max - sched.l_min) * (1.0 + (PI * phase / period).cos());
    lr.clamp(sched.l_min, sched.l_max)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn golden_values() {
        let s = LrSchedule::default();
        assert_eq!(cosine_lr(&s, 0.0), 0.05);
        assert!((cosine_lr(&s, 5.0) - 0.0255).abs() < 1e-12);
        let near_end = cosine_lr(&s, 10.0 - 1e-6);
        assert!((near_end - 0.001).abs() < 1e-9);
        // restart
        assert_eq!(cosine_lr(&s, 10.0), 0.05);
    }

    #[test]
    fn invalid_schedules() {
        assert!(LrSchedule::new(0.01, 0.05, 10).is_err());
        assert!(LrSchedule::new(0.05, 0.0, 10).is_err());
        assert!(LrSchedule::new(0.05, 0.001, 0).is_err());
    }

    proptest! {
        #[test]
        fn bounded(t in 0.0f64..1e4) {
            let s = LrSchedule::default();
            let lr = cosine_lr(&s, t);
            prop_assert!(lr >= s.l_min && lr <= s.l_max);
        }
    }
}
