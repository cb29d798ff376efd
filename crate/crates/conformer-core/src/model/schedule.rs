//! Transformer learning-rate schedule with warmup.

use crate::error::{Error, Result};

/// Learning rate at `step` (1-based):
/// `(0.05 / sqrt(d_model)) * min(step / warmup, sqrt(warmup / step))`.
///
/// Rises linearly to the peak `0.05 / sqrt(d_model)` at `step == warmup`,
/// then decays as the inverse square root of the step.
pub fn lr_schedule(step: u64, d_model: usize, warmup: u64) -> Result<f64> {
    if step == 0 {
        return Err(Error::Config("schedule step must be at least 1".into()));
    }
    if d_model == 0 || warmup == 0 {
        return Err(Error::Config(
            "schedule needs d_model >= 1 and warmup >= 1".into(),
        ));
    }
    let peak = 0.05 / (d_model as f64).sqrt();
    let s = step as f64;
    let w = warmup as f64;
    Ok(peak * (s / w).min((w / s).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_value_is_exact() {
        // 0.05 / sqrt(256) is a pure exponent shift, so the comparison is
        // exact in binary floating point
        assert_eq!(lr_schedule(10_000, 256, 10_000).unwrap(), 0.003125);
    }

    #[test]
    fn half_peak_at_half_and_quadruple_warmup() {
        let peak = lr_schedule(10_000, 256, 10_000).unwrap();
        assert_eq!(lr_schedule(5_000, 256, 10_000).unwrap(), peak / 2.0);
        assert_eq!(lr_schedule(40_000, 256, 10_000).unwrap(), peak / 2.0);
    }

    #[test]
    fn warmup_rises_then_decays() {
        let w = 10_000;
        let mut prev = 0.0;
        for step in (1..=w).step_by(500) {
            let r = lr_schedule(step, 144, w).unwrap();
            assert!(r > prev);
            prev = r;
        }
        let mut prev = lr_schedule(w, 144, w).unwrap();
        for step in ((w + 1)..(10 * w)).step_by(5_000) {
            let r = lr_schedule(step, 144, w).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn step_zero_is_rejected() {
        assert!(lr_schedule(0, 256, 10_000).is_err());
        assert!(lr_schedule(1, 0, 10_000).is_err());
        assert!(lr_schedule(1, 256, 0).is_err());
    }

    #[test]
    fn scales_inversely_with_sqrt_width() {
        let a = lr_schedule(10_000, 144, 10_000).unwrap();
        let b = lr_schedule(10_000, 576, 10_000).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }
}
