use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exposure band of a single image, darkest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExposureCategory {
    #[serde(rename = "SU")]
    StronglyUnder,
    #[serde(rename = "U")]
    Under,
    #[serde(rename = "M")]
    Middle,
    #[serde(rename = "O")]
    Over,
    #[serde(rename = "SO")]
    StronglyOver,
}

impl ExposureCategory {
    pub const ALL: [ExposureCategory; 5] = [
        ExposureCategory::StronglyUnder,
        ExposureCategory::Under,
        ExposureCategory::Middle,
        ExposureCategory::Over,
        ExposureCategory::StronglyOver,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ExposureCategory::StronglyUnder => "SU",
            ExposureCategory::Under => "U",
            ExposureCategory::Middle => "M",
            ExposureCategory::Over => "O",
            ExposureCategory::StronglyOver => "SO",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ExposureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ExposureCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::Input(format!("unknown exposure category `{s}`")))
    }
}

/// Percentile levels used to cut the pooled FSB distribution.
pub const DEFAULT_PERCENTILES: [f64; 4] = [5.0, 15.0, 85.0, 95.0];

/// Minimum sample size for fitting a scheme.
pub const MIN_SCHEME_SAMPLES: usize = 20;

/// Four nondecreasing boundaries splitting FSB values into five categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    pub b5: f64,
    pub b15: f64,
    pub b85: f64,
    pub b95: f64,
    pub source_count: usize,
}

impl CategoryScheme {
    pub fn new(b5: f64, b15: f64, b85: f64, b95: f64, source_count: usize) -> Result<Self> {
        if !(b5 <= b15 && b15 <= b85 && b85 <= b95) {
            return Err(Error::Input(format!(
                "category boundaries must be nondecreasing: {b5}, {b15}, {b85}, {b95}"
            )));
        }
        Ok(Self {
            b5,
            b15,
            b85,
            b95,
            source_count,
        })
    }

    pub fn boundaries(&self) -> [f64; 4] {
        [self.b5, self.b15, self.b85, self.b95]
    }

    pub fn categorize(&self, fsb: f64) -> ExposureCategory {
        categorize(fsb, self)
    }
}

/// Value at 1-indexed rank `ceil(p/100 * n)` of the sorted sample.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    // p*n is formed before dividing so integral p and n stay exact.
    let rank = (percentile * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Fits nearest-rank percentile boundaries on a sample.
pub fn fit_category_scheme(fsb_values: &[f64], percentiles: [f64; 4]) -> Result<CategoryScheme> {
    if fsb_values.len() < MIN_SCHEME_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SCHEME_SAMPLES,
            actual: fsb_values.len(),
        });
    }
    if percentiles.windows(2).any(|w| w[0] > w[1]) || percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(Error::Config(format!(
            "percentiles must be nondecreasing within [0, 100]: {percentiles:?}"
        )));
    }
    let mut sorted = fsb_values.to_vec();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("FSB sample contains NaN".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let [b5, b15, b85, b95] = percentiles.map(|p| nearest_rank(&sorted, p));
    CategoryScheme::new(b5, b15, b85, b95, sorted.len())
}

/// Half-open bands; a value on a boundary belongs to the brighter category.
pub fn categorize(fsb: f64, scheme: &CategoryScheme) -> ExposureCategory {
    if fsb < scheme.b5 {
        ExposureCategory::StronglyUnder
    } else if fsb < scheme.b15 {
        ExposureCategory::Under
    } else if fsb < scheme.b85 {
        ExposureCategory::Middle
    } else if fsb < scheme.b95 {
        ExposureCategory::Over
    } else {
        ExposureCategory::StronglyOver
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ExposureCategory::*;

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = fit_category_scheme(&v, DEFAULT_PERCENTILES).unwrap();
        assert_eq!(s.boundaries(), [5.0, 15.0, 85.0, 95.0]);
        assert_eq!(s.source_count, 100);
    }

    #[test]
    fn degenerate_sample() {
        let s = fit_category_scheme(&[42.0; 30], DEFAULT_PERCENTILES).unwrap();
        assert_eq!(s.boundaries(), [42.0; 4]);
        assert_eq!(categorize(42.0, &s), StronglyOver);
    }

    #[test]
    fn too_few() {
        let err = fit_category_scheme(&[1.0; 19], DEFAULT_PERCENTILES).unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewSamples {
                required: 20,
                actual: 19
            }
        ));
    }

    #[test]
    fn boundaries_go_up() {
        let s = CategoryScheme::new(5.0, 15.0, 85.0, 95.0, 100).unwrap();
        assert_eq!(categorize(50.0, &s), Middle);
        assert_eq!(categorize(95.0, &s), StronglyOver);
        assert_eq!(categorize(4.999, &s), StronglyUnder);
        assert_eq!(categorize(5.0, &s), Under);
        assert_eq!(categorize(15.0, &s), Middle);
        assert_eq!(categorize(85.0, &s), Over);
    }

    #[test]
    fn order_and_codes() {
        assert!(StronglyUnder < Under && Under < Middle && Middle < Over && Over < StronglyOver);
        for c in ExposureCategory::ALL {
            assert_eq!(c.code().parse::<ExposureCategory>().unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn populations_match_percentiles(n in 20usize..3000, seed in any::<u64>()) {
            // distinct values in scrambled order
            let mut v: Vec<f64> = (0..n).map(|i| (i as f64) * 0.37 + (seed % 97) as f64).collect();
            let len = v.len();
            v.rotate_left((seed as usize) % len);
            let s = fit_category_scheme(&v, DEFAULT_PERCENTILES).unwrap();
            let mut counts = [0usize; 5];
            for &x in &v {
                counts[categorize(x, &s).index()] += 1;
            }
            let expected = [0.05, 0.10, 0.70, 0.10, 0.05];
            for (c, e) in counts.iter().zip(expected) {
                prop_assert!((*c as f64 - e * n as f64).abs() <= 1.0, "{counts:?} n={n}");
            }
        }
    }
}
