//! Sliding-window search for the brightness band with the best separation.

use std::collections::BTreeMap;

use serde::Serialize;

use super::measure::ImageMetrics;
use crate::brightness::BrightnessWindow;
use crate::error::Result;
use crate::ingest::ImageRecord;
use crate::pairs::{
    d_prime, run_pairs, EngineOptions, GroupIndex, PairKind, PairSink, PairSpace, ScoreMoments, Scorer,
};

/// Contiguous range of windows containing each record's FSB.
pub struct WindowLayout {
    pub windows: Vec<BrightnessWindow>,
    members: Vec<(u16, u16)>,
}

impl WindowLayout {
    pub fn new(windows: Vec<BrightnessWindow>, metrics: &[Option<ImageMetrics>]) -> Self {
        let members = metrics
            .iter()
            .map(|m| {
                let Some(m) = m else { return (0, 0) };
                let mut inside = windows
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.contains(m.fsb))
                    .map(|(i, _)| i as u16);
                match inside.next() {
                    Some(first) => (first, inside.next_back().unwrap_or(first) + 1),
                    None => (0, 0),
                }
            })
            .collect();
        Self { windows, members }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Genuine/impostor moments per (group pair, window); a pair counts toward a
/// window only when both of its images fall inside it.
pub struct WindowSink<'a> {
    layout: &'a WindowLayout,
    groups: &'a GroupIndex,
    moments: Vec<ScoreMoments>,
}

impl<'a> WindowSink<'a> {
    pub fn new(layout: &'a WindowLayout, groups: &'a GroupIndex) -> Self {
        Self {
            layout,
            groups,
            moments: vec![ScoreMoments::default(); groups.pair_slots() * layout.len() * 2],
        }
    }

    /// `(genuine, impostor)` moments for a same-group window.
    pub fn get(&self, group: u16, window: usize) -> (ScoreMoments, ScoreMoments) {
        let base = (self.groups.pair_slot(group, group) * self.layout.len() + window) * 2;
        (self.moments[base], self.moments[base + 1])
    }
}

impl PairSink for WindowSink<'_> {
    #[inline]
    fn observe(&mut self, a: usize, b: usize, kind: PairKind, score: f64) {
        let (sa, ea) = self.layout.members[a];
        let (sb, eb) = self.layout.members[b];
        let (start, end) = (sa.max(sb) as usize, ea.min(eb) as usize);
        if start >= end {
            return;
        }
        let slot = self.groups.pair_slot(self.groups.of(a), self.groups.of(b)) * self.layout.len();
        let k = usize::from(kind == PairKind::Impostor);
        for w in start..end {
            self.moments[(slot + w) * 2 + k].observe(score);
        }
    }

    fn merge(&mut self, other: Self) {
        for (m, o) in self.moments.iter_mut().zip(&other.moments) {
            m.merge(o);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlidingCell {
    pub group: String,
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub images: u64,
    pub avg_bim: Option<f64>,
    pub genuine_pairs: u64,
    pub impostor_pairs: u64,
    pub d_prime: Option<f64>,
    /// Too few genuine pairs; excluded from the argmax.
    pub low_support: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRef {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTarget {
    pub group: String,
    pub argmax_by_bim: Option<WindowRef>,
    pub argmax_by_dprime: Option<WindowRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetRange {
    pub per_group: Vec<GroupTarget>,
    /// Union of the per-group d' argmax windows as disjoint `[lo, hi]` intervals;
    /// `None` when no group has a supported window.
    pub consensus: Option<Vec<[f64; 2]>>,
}

impl TargetRange {
    /// Smallest single interval covering the consensus.
    pub fn span(&self) -> Option<[f64; 2]> {
        let c = self.consensus.as_ref()?;
        Some([c.first()?[0], c.last()?[1]])
    }
}

/// Merges closed intervals into a sorted disjoint union.
pub fn union_intervals(mut intervals: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    intervals.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut out: Vec<[f64; 2]> = Vec::new();
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => out.push(iv),
        }
    }
    out
}

fn window_ref(w: &BrightnessWindow) -> WindowRef {
    WindowRef {
        label: w.label.clone(),
        lo: w.lo,
        hi: w.hi,
    }
}

/// First index holding the maximum; NaN-free input assumed.
fn argmax(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    values
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Builds the sliding table and argmax/consensus results for `groups`.
pub fn summarize_windows(
    groups: &[(u16, String)],
    group_index: &GroupIndex,
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    layout: &WindowLayout,
    sink: &WindowSink<'_>,
    min_genuine: u64,
) -> (Vec<SlidingCell>, TargetRange) {
    let mut cells = Vec::new();
    let mut per_group = Vec::new();
    let mut winners = Vec::new();
    for (g, name) in groups {
        let first = cells.len();
        for (w, window) in layout.windows.iter().enumerate() {
            let bims: Vec<f64> = (0..records.len())
                .filter(|&i| group_index.of(i) == *g)
                .filter_map(|i| metrics[i])
                .filter(|m| window.contains(m.fsb))
                .map(|m| m.bim)
                .collect();
            let (gen, imp) = sink.get(*g, w);
            let dp = d_prime(&gen, &imp);
            let low_support = gen.count < min_genuine;
            let note = match (&dp, low_support) {
                (Err(e), _) => Some(format!("d' undefined: {e}")),
                (Ok(_), true) => Some(format!("{} genuine pairs, below minimum {min_genuine}", gen.count)),
                _ => None,
            };
            cells.push(SlidingCell {
                group: name.clone(),
                label: window.label.clone(),
                lo: window.lo,
                hi: window.hi,
                images: bims.len() as u64,
                avg_bim: (!bims.is_empty()).then(|| bims.iter().sum::<f64>() / bims.len() as f64),
                genuine_pairs: gen.count,
                impostor_pairs: imp.count,
                d_prime: dp.ok(),
                low_support,
                note,
            });
        }
        let group_cells = &cells[first..];
        let supported = || group_cells.iter().enumerate().filter(|(_, c)| !c.low_support);
        let by_bim = argmax(supported().filter_map(|(i, c)| c.avg_bim.map(|v| (i, v))));
        let by_dprime = argmax(supported().filter_map(|(i, c)| c.d_prime.map(|v| (i, v))));
        if let Some(i) = by_dprime {
            winners.push([layout.windows[i].lo, layout.windows[i].hi]);
        }
        per_group.push(GroupTarget {
            group: name.clone(),
            argmax_by_bim: by_bim.map(|i| window_ref(&layout.windows[i])),
            argmax_by_dprime: by_dprime.map(|i| window_ref(&layout.windows[i])),
        });
    }
    let consensus = (!winners.is_empty()).then(|| union_intervals(winners));
    (cells, TargetRange { per_group, consensus })
}

#[derive(Debug, Clone)]
pub struct TargetSearch {
    pub cells: Vec<SlidingCell>,
    pub target: TargetRange,
    pub coverage: BTreeMap<String, f64>,
}

/// Standalone search: scores within-window pairs for every group that has
/// measured images and summarizes them.
pub fn target_range_search<Sc: Scorer>(
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    scorer: &Sc,
    space: &PairSpace,
    windows: Vec<BrightnessWindow>,
    min_genuine: u64,
    options: &EngineOptions,
) -> Result<TargetSearch> {
    let layout = WindowLayout::new(windows, metrics);
    let eligible: Vec<bool> = (0..records.len())
        .map(|i| metrics[i].is_some() && scorer.available(i))
        .collect();
    let groups = space.groups();
    let (sink, _) = run_pairs(space, scorer, &eligible, options, || WindowSink::new(&layout, groups))?;
    let present: Vec<(u16, String)> = groups
        .names()
        .iter()
        .enumerate()
        .filter(|(g, _)| (0..records.len()).any(|i| groups.of(i) as usize == *g && metrics[i].is_some()))
        .map(|(g, n)| (g as u16, n.clone()))
        .collect();
    let (cells, target) = summarize_windows(&present, groups, records, metrics, &layout, &sink, min_genuine);
    let coverage = match &target.consensus {
        Some(ranges) => coverage_fraction(records, metrics, ranges),
        None => BTreeMap::new(),
    };
    Ok(TargetSearch {
        cells,
        target,
        coverage,
    })
}

/// Per group, the fraction of measured images whose FSB lies in any of `ranges`.
pub fn coverage_fraction(
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    ranges: &[[f64; 2]],
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (rec, m) in records.iter().zip(metrics) {
        let Some(m) = m else { continue };
        let e = counts.entry(rec.group.clone()).or_default();
        e.1 += 1;
        if ranges.iter().any(|r| r[0] <= m.fsb && m.fsb <= r[1]) {
            e.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(g, (inside, n))| (g, inside as f64 / n as f64))
        .collect()
}
