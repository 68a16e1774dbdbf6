use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::ImageRecord;

/// FSB summary for one demographic group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Set when the group has a single image and `std` is reported as 0.
    pub single_image: bool,
}

/// Per-group count, mean and sample standard deviation of FSB.
///
/// `fsb` pairs an image id with its FSB value; every id must have a record.
pub fn group_stats<'a>(
    fsb: impl IntoIterator<Item = (&'a str, f64)>,
    records: &[ImageRecord],
) -> Result<Vec<GroupStats>> {
    let group_of: HashMap<&str, &str> = records
        .iter()
        .map(|r| (r.image_id.as_str(), r.group.as_str()))
        .collect();
    let labelled = fsb
        .into_iter()
        .map(|(id, value)| {
            let group = group_of.get(id).ok_or_else(|| Error::UnknownImage(id.to_string()))?;
            Ok((*group, value))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_groups(labelled))
}

/// Per-group statistics from `(group, fsb)` pairs, sorted by group.
pub fn summarize_groups<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<GroupStats> {
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (group, value) in values {
        by_group.entry(group).or_default().push(value);
    }
    by_group
        .into_iter()
        .map(|(group, values)| summarize(group, &values))
        .collect()
}

fn summarize(group: &str, values: &[f64]) -> GroupStats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    GroupStats {
        group: group.to_string(),
        count: n,
        mean,
        std,
        single_image: n == 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, group: &str) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            subject_id: id.into(),
            group: group.into(),
            image_path: "a".into(),
            mask_path: "b".into(),
            embedding_index: None,
        }
    }

    #[test]
    fn two_point_sample() {
        let recs = [rec("a", "G"), rec("b", "G"), rec("c", "H")];
        let s = group_stats([("a", 10.0), ("b", 20.0), ("c", 7.0)], &recs).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].mean, 15.0);
        assert!((s[0].std - 7.0710678118654755).abs() < 1e-12);
        assert!(!s[0].single_image);
        assert_eq!((s[1].mean, s[1].std, s[1].single_image), (7.0, 0.0, true));
    }

    #[test]
    fn unmatched_profile() {
        let err = group_stats([("zz", 1.0)], &[rec("a", "G")]).unwrap_err();
        assert!(matches!(err, Error::UnknownImage(id) if id == "zz"));
    }
}
