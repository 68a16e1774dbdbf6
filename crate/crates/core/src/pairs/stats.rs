use serde::{Deserialize, Serialize};

/// Fixed-width score bins over `[lo, hi]`; out-of-range scores are clamped
/// into the end bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            bins: 2000,
        }
    }
}

impl HistogramSpec {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn bin_of(&self, score: f64) -> usize {
        let pos = ((score - self.lo) / (self.hi - self.lo) * self.bins as f64).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.bins - 1)
        }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + bin as f64 * w, self.lo + (bin + 1) as f64 * w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    spec: HistogramSpec,
    counts: Vec<u64>,
}

impl ScoreHistogram {
    pub fn new(spec: HistogramSpec) -> Self {
        Self {
            counts: vec![0; spec.bins],
            spec,
        }
    }

    pub fn spec(&self) -> HistogramSpec {
        self.spec
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn add(&mut self, score: f64) {
        let b = self.spec.bin_of(score);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.spec, other.spec, "merging histograms with different layouts");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Count, sum and sum of squares of a score sample.
pub trait Moments {
    fn count(&self) -> u64;
    fn sum(&self) -> f64;
    fn sum_sq(&self) -> f64;

    fn mean(&self) -> Option<f64> {
        (self.count() > 0).then(|| self.sum() / self.count() as f64)
    }

    /// Sample (n - 1) variance, clamped at zero against rounding.
    fn sample_variance(&self) -> Option<f64> {
        let n = self.count();
        (n > 1).then(|| {
            let n = n as f64;
            ((self.sum_sq() - self.sum() * self.sum() / n) / (n - 1.0)).max(0.0)
        })
    }
}

/// Moments without a histogram, for cheap per-window accumulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreMoments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ScoreMoments {
    #[inline]
    pub fn observe(&mut self, score: f64) {
        self.count += 1;
        self.sum += score;
        self.sum_sq += score * score;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn from_scores(scores: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Self::default();
        for s in scores {
            m.observe(s);
        }
        m
    }
}

impl Moments for ScoreMoments {
    fn count(&self) -> u64 {
        self.count
    }
    fn sum(&self) -> f64 {
        self.sum
    }
    fn sum_sq(&self) -> f64 {
        self.sum_sq
    }
}

/// Mergeable score statistics for one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub pair_count: u64,
    pub above_threshold_count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub score_histogram: ScoreHistogram,
}

impl PairStats {
    pub fn new(spec: HistogramSpec) -> Self {
        Self {
            pair_count: 0,
            above_threshold_count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            score_histogram: ScoreHistogram::new(spec),
        }
    }

    /// Records one score; it counts as a match iff `score >= threshold`.
    #[inline]
    pub fn observe(&mut self, score: f64, threshold: f64) {
        self.pair_count += 1;
        self.above_threshold_count += u64::from(is_match(score, threshold));
        self.sum += score;
        self.sum_sq += score * score;
        self.score_histogram.add(score);
    }

    pub fn merge(&mut self, other: &Self) {
        self.pair_count += other.pair_count;
        self.above_threshold_count += other.above_threshold_count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.score_histogram.merge(&other.score_histogram);
    }

    pub fn moments(&self) -> ScoreMoments {
        ScoreMoments {
            count: self.pair_count,
            sum: self.sum,
            sum_sq: self.sum_sq,
        }
    }
}

impl Moments for PairStats {
    fn count(&self) -> u64 {
        self.pair_count
    }
    fn sum(&self) -> f64 {
        self.sum
    }
    fn sum_sq(&self) -> f64 {
        self.sum_sq
    }
}

/// The single decision rule: a pair matches iff its score reaches the threshold.
#[inline]
pub fn is_match(score: f64, threshold: f64) -> bool {
    score >= threshold
}

/// False match rate of a bucket, `None` when it is empty.
pub fn fmr(stats: &PairStats) -> Option<f64> {
    (stats.pair_count > 0).then(|| stats.above_threshold_count as f64 / stats.pair_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_matches() {
        let mut s = PairStats::new(HistogramSpec::default());
        for x in [0.4, 0.5, 0.6] {
            s.observe(x, 0.5);
        }
        assert_eq!((s.pair_count, s.above_threshold_count), (3, 2));
        assert!((fmr(&s).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fmr_values() {
        let mut s = PairStats::new(HistogramSpec::default());
        assert_eq!(fmr(&s), None);
        s.pair_count = 100;
        assert_eq!(fmr(&s), Some(0.0));
        s.pair_count = 10_000;
        s.above_threshold_count = 96;
        assert_eq!(fmr(&s), Some(0.0096));
    }

    #[test]
    fn histogram_bins() {
        let spec = HistogramSpec::default();
        assert_eq!(spec.bin_of(-1.0), 0);
        assert_eq!(spec.bin_of(-5.0), 0);
        assert_eq!(spec.bin_of(1.0), 1999);
        assert_eq!(spec.bin_of(0.0), 1000);
        let (lo, hi) = spec.edges(1000);
        assert!((lo - 0.0).abs() < 1e-12 && (hi - 0.001).abs() < 1e-12);
    }

    fn stats_of(scores: &[f64], t: f64) -> PairStats {
        let mut s = PairStats::new(HistogramSpec {
            lo: -1.0,
            hi: 1.0,
            bins: 50,
        });
        for &x in scores {
            s.observe(x, t);
        }
        s
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in prop::collection::vec(-1.0f64..1.0, 0..40),
            b in prop::collection::vec(-1.0f64..1.0, 0..40),
            c in prop::collection::vec(-1.0f64..1.0, 0..40),
            t in -1.0f64..1.0,
        ) {
            let (sa, sb, sc) = (stats_of(&a, t), stats_of(&b, t), stats_of(&c, t));
            let mut ab_c = sa.clone(); ab_c.merge(&sb); ab_c.merge(&sc);
            let mut bc = sb.clone(); bc.merge(&sc);
            let mut a_bc = sa.clone(); a_bc.merge(&bc);
            let mut cba = sc.clone(); cba.merge(&sb); cba.merge(&sa);
            for other in [&a_bc, &cba] {
                prop_assert_eq!(ab_c.pair_count, other.pair_count);
                prop_assert_eq!(ab_c.above_threshold_count, other.above_threshold_count);
                prop_assert_eq!(ab_c.score_histogram.counts(), other.score_histogram.counts());
                prop_assert!((ab_c.sum - other.sum).abs() <= 1e-12 * (1.0 + ab_c.sum.abs()));
                prop_assert!((ab_c.sum_sq - other.sum_sq).abs() <= 1e-12 * (1.0 + ab_c.sum_sq));
            }
            let all: Vec<f64> = a.iter().chain(&b).chain(&c).copied().collect();
            let single = stats_of(&all, t);
            prop_assert_eq!(single.pair_count, ab_c.pair_count);
            prop_assert!(ab_c.above_threshold_count <= ab_c.pair_count);
            if ab_c.pair_count > 0 {
                prop_assert!(ab_c.sum_sq >= ab_c.sum * ab_c.sum / ab_c.pair_count as f64 - 1e-9);
            }
        }

        #[test]
        fn fmr_nonincreasing_in_threshold(
            scores in prop::collection::vec(-1.0f64..1.0, 1..80),
            t1 in -1.0f64..1.0,
            t2 in -1.0f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(fmr(&stats_of(&scores, hi)).unwrap() <= fmr(&stats_of(&scores, lo)).unwrap());
        }
    }
}
