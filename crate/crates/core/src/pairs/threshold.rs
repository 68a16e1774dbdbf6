use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_FMR: f64 = 1e-4;

/// A shared decision threshold fixed on one group's impostor scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub calibration_group: String,
    pub target_fmr: f64,
    pub achieved_fmr: f64,
    /// Impostor scores the threshold was calibrated on.
    pub score_count: u64,
}

/// Largest number of scores allowed at or above the threshold.
fn allowed_matches(target: f64, n: u64) -> u64 {
    // relative slack keeps products like 0.57 * 100 from flooring to 56
    (target * n as f64 * (1.0 + 1e-12)).floor() as u64
}

fn required_scores(target: f64) -> u64 {
    ((1.0 / target) * (1.0 - 1e-12)).ceil() as u64
}

/// Streaming calibration. Retains only the largest scores, so memory is
/// bounded by `target * max_scores` rather than by the number of pairs.
#[derive(Debug, Clone)]
pub struct ThresholdCalibrator {
    target: f64,
    capacity: usize,
    top: BinaryHeap<Reverse<OrderedFloat<f64>>>,
    min: f64,
    seen: u64,
}

impl ThresholdCalibrator {
    /// `max_scores` is an upper bound on how many scores will be pushed.
    pub fn new(target_fmr: f64, max_scores: u64) -> Result<Self> {
        if !(target_fmr > 0.0 && target_fmr.is_finite()) {
            return Err(Error::Config(format!("target FMR must be positive, got {target_fmr}")));
        }
        let capacity = allowed_matches(target_fmr, max_scores)
            .saturating_add(1)
            .min(max_scores.max(1)) as usize;
        Ok(Self {
            target: target_fmr,
            capacity,
            top: BinaryHeap::new(),
            min: f64::INFINITY,
            seen: 0,
        })
    }

    #[inline]
    pub fn push(&mut self, score: f64) {
        self.seen += 1;
        self.min = self.min.min(score);
        if self.top.len() < self.capacity {
            self.top.push(Reverse(OrderedFloat(score)));
        } else if let Some(Reverse(smallest)) = self.top.peek() {
            if score > smallest.0 {
                self.top.pop();
                self.top.push(Reverse(OrderedFloat(score)));
            }
        }
    }

    pub fn merge(&mut self, other: Self) {
        self.seen += other.seen;
        self.min = self.min.min(other.min);
        for Reverse(s) in other.top {
            if self.top.len() < self.capacity {
                self.top.push(Reverse(s));
            } else if let Some(Reverse(smallest)) = self.top.peek() {
                if s > *smallest {
                    self.top.pop();
                    self.top.push(Reverse(s));
                }
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Smallest observed `t` with `#(score >= t) / n <= target`.
    pub fn finish(self, calibration_group: &str) -> Result<Threshold> {
        let n = self.seen;
        let allowed = allowed_matches(self.target, n);
        if n == 0 || allowed == 0 {
            return Err(Error::TooFewScores {
                target: self.target,
                required: required_scores(self.target),
                actual: n,
            });
        }
        let threshold = |value: f64, at_or_above: u64| Threshold {
            value,
            calibration_group: calibration_group.to_string(),
            target_fmr: self.target,
            achieved_fmr: at_or_above as f64 / n as f64,
            score_count: n,
        };
        if allowed >= n {
            return Ok(threshold(self.min, n));
        }
        if (self.top.len() as u64) < allowed + 1 {
            return Err(Error::Invariant(format!(
                "calibrator kept {} scores but needs {}; max_scores bound was too small",
                self.top.len(),
                allowed + 1
            )));
        }
        let mut desc: Vec<f64> = self.top.into_iter().map(|Reverse(s)| s.0).collect();
        desc.sort_by(|a, b| b.total_cmp(a));
        // Every t <= the (allowed+1)-th largest score admits too many matches.
        let blocker = desc[allowed as usize];
        let above: Vec<f64> = desc[..allowed as usize]
            .iter()
            .copied()
            .filter(|&s| s > blocker)
            .collect();
        match above.last() {
            Some(&value) => Ok(threshold(value, above.len() as u64)),
            None => Err(Error::UnresolvableThreshold { target: self.target }),
        }
    }
}

/// Calibrates a threshold from a full list of impostor scores.
pub fn calibrate_threshold(scores: &[f64], target_fmr: f64, calibration_group: &str) -> Result<Threshold> {
    let mut cal = ThresholdCalibrator::new(target_fmr, scores.len() as u64)?;
    for &s in scores {
        cal.push(s);
    }
    cal.finish(calibration_group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tenths() -> Vec<f64> {
        (1..=10).map(|i| i as f64 / 10.0).collect()
    }

    /// Brute force: scan every observed value ascending.
    fn oracle(scores: &[f64], target: f64) -> Option<(f64, f64)> {
        let n = scores.len() as f64;
        let mut cands = scores.to_vec();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        cands.into_iter().find_map(|t| {
            let c = scores.iter().filter(|&&s| s >= t).count() as f64;
            (c / n <= target * (1.0 + 1e-12)).then_some((t, c / n))
        })
    }

    #[test]
    fn rank_arithmetic() {
        let t = calibrate_threshold(&tenths(), 0.2, "CM").unwrap();
        assert_eq!((t.value, t.achieved_fmr), (0.9, 0.2));
        let t = calibrate_threshold(&tenths(), 0.1, "CM").unwrap();
        assert_eq!((t.value, t.achieved_fmr), (1.0, 0.1));
        let err = calibrate_threshold(&tenths(), 0.05, "CM").unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewScores {
                required: 20,
                actual: 10,
                ..
            }
        ));
        assert!(err.to_string().contains("unresolvable below one score"));
    }

    #[test]
    fn identical_scores() {
        let s = vec![0.3; 50];
        assert!(matches!(
            calibrate_threshold(&s, 0.1, "G"),
            Err(Error::UnresolvableThreshold { .. })
        ));
        let t = calibrate_threshold(&s, 1.0, "G").unwrap();
        assert_eq!((t.value, t.achieved_fmr), (0.3, 1.0));
    }

    #[test]
    fn required_minimum() {
        assert_eq!(required_scores(1e-4), 10_000);
        assert_eq!(required_scores(0.2), 5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            scores in prop::collection::vec((0u32..40).prop_map(|v| v as f64 / 40.0), 1..200),
            target in 0.005f64..0.6,
            split in 0usize..200,
        ) {
            let split = split.min(scores.len());
            let mut a = ThresholdCalibrator::new(target, scores.len() as u64).unwrap();
            let mut b = ThresholdCalibrator::new(target, scores.len() as u64).unwrap();
            scores[..split].iter().for_each(|&s| a.push(s));
            scores[split..].iter().for_each(|&s| b.push(s));
            a.merge(b);
            match (a.finish("G"), oracle(&scores, target)) {
                (Ok(t), Some((v, f))) => {
                    prop_assert_eq!(t.value, v);
                    prop_assert_eq!(t.achieved_fmr, f);
                    prop_assert!(t.achieved_fmr <= target * (1.0 + 1e-12));
                }
                (Err(_), None) => {}
                (got, want) => prop_assert!(false, "got {:?}, oracle {:?}", got, want),
            }
        }
    }
}
