use std::collections::BTreeMap;

use serde::Serialize;

use super::engine::PairBuckets;
use super::stats::ScoreHistogram;

pub const DEFAULT_SATURATION_FRACTION: f64 = 0.5;

/// Share of scores piled up at the ends of a group's score range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationRow {
    pub group: String,
    pub impostor_count: u64,
    /// Fraction of impostor scores in the lowest histogram bin.
    pub impostor_floor_fraction: Option<f64>,
    pub impostor_saturated: bool,
    pub genuine_count: u64,
    /// Fraction of genuine scores in the highest histogram bin.
    pub genuine_ceiling_fraction: Option<f64>,
    pub genuine_saturated: bool,
}

fn pooled<'a>(hists: impl Iterator<Item = &'a ScoreHistogram>) -> Option<ScoreHistogram> {
    hists.fold(None, |acc: Option<ScoreHistogram>, h| match acc {
        None => Some(h.clone()),
        Some(mut a) => {
            a.merge(h);
            Some(a)
        }
    })
}

fn edge_fraction(h: &Option<ScoreHistogram>, top: bool) -> (u64, Option<f64>) {
    match h {
        Some(h) if h.total() > 0 => {
            let c = h.counts();
            let edge = if top { c[c.len() - 1] } else { c[0] };
            (h.total(), Some(edge as f64 / h.total() as f64))
        }
        _ => (0, None),
    }
}

/// Per group, pools all category buckets and flags a side as saturated when
/// its edge-bin fraction exceeds `threshold`.
pub fn saturation_report(buckets: &PairBuckets, threshold: f64) -> Vec<SaturationRow> {
    let mut groups: BTreeMap<&str, (Vec<&ScoreHistogram>, Vec<&ScoreHistogram>)> = BTreeMap::new();
    for (k, s) in &buckets.impostor {
        groups.entry(&k.group).or_default().0.push(&s.score_histogram);
    }
    for (k, s) in &buckets.genuine {
        groups.entry(&k.group).or_default().1.push(&s.score_histogram);
    }
    groups
        .into_iter()
        .map(|(group, (imp, gen))| {
            let (impostor_count, imp_frac) = edge_fraction(&pooled(imp.into_iter()), false);
            let (genuine_count, gen_frac) = edge_fraction(&pooled(gen.into_iter()), true);
            SaturationRow {
                group: group.to_string(),
                impostor_count,
                impostor_floor_fraction: imp_frac,
                impostor_saturated: imp_frac.is_some_and(|f| f > threshold),
                genuine_count,
                genuine_ceiling_fraction: gen_frac,
                genuine_saturated: gen_frac.is_some_and(|f| f > threshold),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brightness::ExposureCategory::*;
    use crate::pairs::{HistogramSpec, PairKey, PairStats};

    fn buckets(impostor: &[f64], spec: HistogramSpec) -> PairBuckets {
        let mut s = PairStats::new(spec);
        for &x in impostor {
            s.observe(x, 0.5);
        }
        let mut b = PairBuckets::default();
        b.impostor.insert(PairKey::new("G", Middle, Middle), s);
        b
    }

    #[test]
    fn all_zero_is_saturated() {
        let spec = HistogramSpec {
            lo: 0.0,
            hi: 1.0,
            bins: 2000,
        };
        let r = saturation_report(&buckets(&[0.0; 100], spec), DEFAULT_SATURATION_FRACTION);
        assert_eq!(r[0].impostor_floor_fraction, Some(1.0));
        assert!(r[0].impostor_saturated);
        assert_eq!(r[0].genuine_ceiling_fraction, None);
    }

    #[test]
    fn uniform_is_not() {
        let spec = HistogramSpec::default();
        // one score at the centre of each of the 2000 bins
        let scores: Vec<f64> = (0..2000).map(|i| -1.0 + (i as f64 + 0.5) * 0.001).collect();
        let r = saturation_report(&buckets(&scores, spec), DEFAULT_SATURATION_FRACTION);
        assert!((r[0].impostor_floor_fraction.unwrap() - 1.0 / 2000.0).abs() < 1e-12);
        assert!(!r[0].impostor_saturated);
    }

    #[test]
    fn fifty_eight_percent_flagged() {
        let spec = HistogramSpec {
            lo: 0.0,
            hi: 1.0,
            bins: 2000,
        };
        let mut scores = vec![0.0; 58];
        scores.extend((0..42).map(|i| 0.3 + i as f64 * 0.01));
        let r = saturation_report(&buckets(&scores, spec), DEFAULT_SATURATION_FRACTION);
        assert!((r[0].impostor_floor_fraction.unwrap() - 0.58).abs() < 1e-12);
        assert!(r[0].impostor_saturated);
    }
}
