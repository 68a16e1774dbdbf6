//! Blocked, data-parallel traversal of a pair space.
//!
//! Each segment's pair triangle is cut into square tiles of `block_size`
//! rows. Tiles are processed in fixed-size waves; inside a wave tiles run in
//! parallel, each into a private sink, and the sinks are merged in tile
//! order. The merge order therefore never depends on the worker count, so
//! floating-point sums are reproducible bit-for-bit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::key::{CategoryPair, PairKey, PairKind, CATEGORY_PAIRS};
use super::score::Scorer;
use super::space::{GroupIndex, PairSpace};
use super::stats::{HistogramSpec, PairStats};
use crate::brightness::ExposureCategory;
use crate::error::{Error, Result};
use crate::ingest::ImageRecord;

/// Tiles merged per wave.
const WAVE_TILES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineOptions {
    pub block_size: usize,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            block_size: 256,
            threads: None,
        }
    }
}

/// Receives scored pairs. One sink per tile; sinks are merged afterwards.
pub trait PairSink: Send + Sized {
    fn observe(&mut self, a: usize, b: usize, kind: PairKind, score: f64);
    fn merge(&mut self, other: Self);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub scored: u64,
    /// Pairs dropped because an image was ineligible or the pair had no score.
    pub skipped: u64,
}

impl PairTally {
    fn add(&mut self, other: PairTally) {
        self.scored += other.scored;
        self.skipped += other.skipped;
    }
}

#[derive(Debug, Clone, Copy)]
struct Tile {
    seg: u32,
    row_block: u32,
    col_block: u32,
}

fn tiles(space: &PairSpace, block: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for (s, seg) in space.segments().iter().enumerate() {
        let blocks = seg.len().div_ceil(block);
        for r in 0..blocks {
            for c in r..blocks {
                out.push(Tile {
                    seg: s as u32,
                    row_block: r as u32,
                    col_block: c as u32,
                });
            }
        }
    }
    out
}

fn run_tile<Sc: Scorer, S: PairSink>(
    space: &PairSpace,
    scorer: &Sc,
    eligible: &[bool],
    block: usize,
    tile: Tile,
    sink: &mut S,
) -> PairTally {
    let seg = &space.segments()[tile.seg as usize];
    let rows = block * tile.row_block as usize..(block * (tile.row_block as usize + 1)).min(seg.len());
    let cols_end = (block * (tile.col_block as usize + 1)).min(seg.len());
    let mut tally = PairTally::default();
    for i in rows {
        let cols_start = if tile.row_block == tile.col_block {
            i + 1
        } else {
            block * tile.col_block as usize
        };
        if cols_start >= cols_end {
            continue;
        }
        let a = seg[i] as usize;
        if !eligible[a] {
            tally.skipped += (cols_end - cols_start) as u64;
            continue;
        }
        for &b in &seg[cols_start..cols_end] {
            let b = b as usize;
            if !eligible[b] {
                tally.skipped += 1;
                continue;
            }
            match scorer.score(a, b) {
                Some(s) => {
                    tally.scored += 1;
                    sink.observe(a, b, space.kind(a, b), s);
                }
                None => tally.skipped += 1,
            }
        }
    }
    tally
}

/// Scores every eligible pair of `space` into sinks built by `make`.
pub fn run_pairs<Sc, S, F>(
    space: &PairSpace,
    scorer: &Sc,
    eligible: &[bool],
    options: &EngineOptions,
    make: F,
) -> Result<(S, PairTally)>
where
    Sc: Scorer,
    S: PairSink,
    F: Fn() -> S + Sync,
{
    if options.block_size == 0 {
        return Err(Error::Config("block_size must be positive".into()));
    }
    let block = options.block_size;
    let all = tiles(space, block);
    let work = || {
        let mut acc = make();
        let mut tally = PairTally::default();
        for wave in all.chunks(WAVE_TILES) {
            let parts: Vec<(S, PairTally)> = wave
                .par_iter()
                .map(|&t| {
                    let mut sink = make();
                    let tally = run_tile(space, scorer, eligible, block, t, &mut sink);
                    (sink, tally)
                })
                .collect();
            for (sink, t) in parts {
                acc.merge(sink);
                tally.add(t);
            }
        }
        (acc, tally)
    };
    match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Genuine and impostor statistics per (group, category pair).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairBuckets {
    pub genuine: BTreeMap<PairKey, PairStats>,
    pub impostor: BTreeMap<PairKey, PairStats>,
}

impl PairBuckets {
    pub fn side(&self, kind: PairKind) -> &BTreeMap<PairKey, PairStats> {
        match kind {
            PairKind::Genuine => &self.genuine,
            PairKind::Impostor => &self.impostor,
        }
    }

    pub fn get(&self, kind: PairKind, key: &PairKey) -> Option<&PairStats> {
        self.side(kind).get(key)
    }

    /// Sum of pair counts over every bucket of both kinds.
    pub fn total_pairs(&self) -> u64 {
        self.genuine
            .values()
            .chain(self.impostor.values())
            .map(|s| s.pair_count)
            .sum()
    }
}

/// Per-record lookup data shared by bucket sinks.
pub struct BucketContext<'a> {
    pub groups: &'a GroupIndex,
    pub categories: &'a [Option<ExposureCategory>],
    pub histogram: HistogramSpec,
    pub threshold: f64,
}

impl BucketContext<'_> {
    fn slots(&self) -> usize {
        self.groups.pair_slots() * CATEGORY_PAIRS.len() * 2
    }
}

/// Dense-array bucket accumulator; histograms are allocated on first use.
pub struct BucketSink<'a> {
    ctx: &'a BucketContext<'a>,
    slots: Vec<Option<Box<PairStats>>>,
}

impl<'a> BucketSink<'a> {
    pub fn new(ctx: &'a BucketContext<'a>) -> Self {
        Self {
            ctx,
            slots: (0..ctx.slots()).map(|_| None).collect(),
        }
    }

    pub fn into_buckets(self) -> PairBuckets {
        let mut out = PairBuckets::default();
        let per_group = CATEGORY_PAIRS.len() * 2;
        let names = self.ctx.groups.names().len();
        let labels: Vec<String> = (0..names as u16)
            .flat_map(|hi| (0..=hi).map(move |lo| (lo, hi)))
            .map(|(lo, hi)| self.ctx.groups.pair_label(lo, hi))
            .collect();
        for (slot, stats) in self.slots.into_iter().enumerate() {
            let Some(stats) = stats else { continue };
            let group = &labels[slot / per_group];
            let pair = CATEGORY_PAIRS[(slot % per_group) / 2];
            let key = PairKey::new(group.clone(), pair.cat_a, pair.cat_b);
            let side = if slot % 2 == 0 {
                &mut out.genuine
            } else {
                &mut out.impostor
            };
            side.insert(key, *stats);
        }
        out
    }
}

impl PairSink for BucketSink<'_> {
    #[inline]
    fn observe(&mut self, a: usize, b: usize, kind: PairKind, score: f64) {
        let ctx = self.ctx;
        let (Some(ca), Some(cb)) = (ctx.categories[a], ctx.categories[b]) else {
            debug_assert!(false, "uncategorized record reached the bucket sink");
            return;
        };
        let group_slot = ctx.groups.pair_slot(ctx.groups.of(a), ctx.groups.of(b));
        let slot = (group_slot * CATEGORY_PAIRS.len() + CategoryPair::new(ca, cb).index()) * 2
            + usize::from(kind == PairKind::Impostor);
        self.slots[slot]
            .get_or_insert_with(|| Box::new(PairStats::new(ctx.histogram)))
            .observe(score, ctx.threshold);
    }

    fn merge(&mut self, other: Self) {
        for (mine, theirs) in self.slots.iter_mut().zip(other.slots) {
            match (mine.as_mut(), theirs) {
                (_, None) => {}
                (None, Some(t)) => *mine = Some(t),
                (Some(m), Some(t)) => m.merge(&t),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Accumulated {
    pub buckets: PairBuckets,
    pub tally: PairTally,
    /// Images without a category or a score source; their pairs are skipped.
    pub missing_ids: Vec<String>,
}

/// Which records have everything needed to be scored and bucketed.
pub fn eligibility<Sc: Scorer>(
    records: &[ImageRecord],
    categories: &[Option<ExposureCategory>],
    scorer: &Sc,
) -> (Vec<bool>, Vec<String>) {
    let eligible: Vec<bool> = (0..records.len())
        .map(|i| categories[i].is_some() && scorer.available(i))
        .collect();
    let mut missing: Vec<String> = records
        .iter()
        .zip(&eligible)
        .filter(|(_, &ok)| !ok)
        .map(|(r, _)| r.image_id.clone())
        .collect();
    missing.sort();
    (eligible, missing)
}

/// Scores the pair space and accumulates per-bucket statistics, counting a
/// pair as a match iff its score reaches `threshold`.
pub fn accumulate<Sc: Scorer>(
    records: &[ImageRecord],
    space: &PairSpace,
    scorer: &Sc,
    categories: &[Option<ExposureCategory>],
    threshold: f64,
    histogram: HistogramSpec,
    options: &EngineOptions,
) -> Result<Accumulated> {
    if categories.len() != records.len() {
        return Err(Error::Invariant(format!(
            "{} categories for {} records",
            categories.len(),
            records.len()
        )));
    }
    let (eligible, missing_ids) = eligibility(records, categories, scorer);
    let ctx = BucketContext {
        groups: space.groups(),
        categories,
        histogram,
        threshold,
    };
    let (sink, tally) = run_pairs(space, scorer, &eligible, options, || BucketSink::new(&ctx))?;
    let buckets = sink.into_buckets();
    if buckets.total_pairs() != tally.scored {
        return Err(Error::Invariant(format!(
            "bucket total {} differs from scored pairs {}",
            buckets.total_pairs(),
            tally.scored
        )));
    }
    Ok(Accumulated {
        buckets,
        tally,
        missing_ids,
    })
}
