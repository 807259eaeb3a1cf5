//! Exponential clocks driven by piecewise-constant rates.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("rate segment list is empty")]
    Empty,
    #[error("segment {index} has invalid rate {rate}")]
    InvalidRate { index: usize, rate: f64 },
    #[error("segment {index} has non-positive duration {duration}")]
    InvalidDuration { index: usize, duration: f64 },
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}

/// A constant rate held for `duration` (which may be infinite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSegment {
    pub rate: f64,
    pub duration: f64,
}

impl RateSegment {
    pub fn new(rate: f64, duration: f64) -> Self {
        Self { rate, duration }
    }

    pub fn forever(rate: f64) -> Self {
        Self {
            rate,
            duration: f64::INFINITY,
        }
    }
}

fn validate(segments: &[RateSegment]) -> Result<(), ClockError> {
    if segments.is_empty() {
        return Err(ClockError::Empty);
    }
    for (index, s) in segments.iter().enumerate() {
        if !(s.rate >= 0.0) || !s.rate.is_finite() {
            return Err(ClockError::InvalidRate { index, rate: s.rate });
        }
        if !(s.duration > 0.0) {
            return Err(ClockError::InvalidDuration {
                index,
                duration: s.duration,
            });
        }
    }
    Ok(())
}

/// Integrated rate over `[0, t]`. Time past the last segment accrues nothing.
pub fn cumulative(segments: &[RateSegment], t: f64) -> Result<f64, ClockError> {
    validate(segments)?;
    let mut acc = 0.0;
    let mut start = 0.0;
    for s in segments {
        if t <= start {
            break;
        }
        let span = (t - start).min(s.duration);
        acc += s.rate * span;
        start += s.duration;
    }
    Ok(acc)
}

/// First time at which the integrated rate reaches `threshold`, or `None`
/// (an infinite time) when the total integral stays below it.
pub fn exp_clock_invert(segments: &[RateSegment], threshold: f64) -> Result<Option<f64>, ClockError> {
    validate(segments)?;
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(ClockError::InvalidThreshold(threshold));
    }
    let mut remaining = threshold;
    let mut start = 0.0;
    for s in segments {
        if s.rate > 0.0 {
            let needed = remaining / s.rate;
            if needed <= s.duration {
                return Ok(Some(start + needed));
            }
            remaining -= s.rate * s.duration;
        }
        start += s.duration;
        if !start.is_finite() {
            break;
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate() {
        let t = exp_clock_invert(&[RateSegment::forever(2.0)], 3.0).unwrap();
        assert_eq!(t, Some(1.5));
    }

    #[test]
    fn zero_rate_never_fires() {
        let t = exp_clock_invert(&[RateSegment::forever(0.0)], 1.0).unwrap();
        assert_eq!(t, None);
    }

    #[test]
    fn two_segments_hand_integrated() {
        let segs = [RateSegment::new(2.0, 1.0), RateSegment::forever(4.0)];
        let t = exp_clock_invert(&segs, 3.0).unwrap().unwrap();
        assert!((t - 1.25).abs() < 1e-15);
    }

    #[test]
    fn exhausted_finite_list() {
        let segs = [RateSegment::new(1.0, 1.0), RateSegment::new(1.0, 1.0)];
        assert_eq!(exp_clock_invert(&segs, 2.5).unwrap(), None);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(exp_clock_invert(&[], 1.0), Err(ClockError::Empty));
        assert!(matches!(
            exp_clock_invert(&[RateSegment::forever(-1.0)], 1.0),
            Err(ClockError::InvalidRate { .. })
        ));
        assert!(matches!(
            exp_clock_invert(&[RateSegment::new(1.0, 0.0)], 1.0),
            Err(ClockError::InvalidDuration { .. })
        ));
        assert!(matches!(
            exp_clock_invert(&[RateSegment::forever(1.0)], 0.0),
            Err(ClockError::InvalidThreshold(_))
        ));
    }
}
