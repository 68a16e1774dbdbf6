//! End-to-end audit over measured images and a score source.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::config::{AuditConfig, SchemeMode};
use super::export::{default_selectors, export_distributions, DistributionExport};
use super::measure::{Exclusion, ImageMetrics};
use super::report::{
    AuditReport, BimCell, CategoryCounts, DistributionHandle, FmrCell, InputDigest, OverallRow, Provenance,
};
use super::target::{coverage_fraction, summarize_windows, WindowLayout, WindowSink};
use crate::brightness::{
    fit_category_scheme, group_stats, sliding_windows, CategoryScheme, ExposureCategory, MIN_SCHEME_SAMPLES,
};
use crate::error::{Error, Result};
use crate::ingest::{EmbeddingStore, ImageRecord, ScoreTable};
use crate::pairs::{
    d_prime, eligibility, fmr, run_pairs, saturation_report, BucketContext, BucketSink, EmbeddingScorer, PairBuckets,
    PairKey, PairKind, PairSink, PairSpace, PairStats, ScoreMoments, Scorer, TableScorer, Threshold,
    ThresholdCalibrator, CATEGORY_PAIRS,
};

/// Where pair scores come from.
#[derive(Clone, Copy)]
pub enum ScoreSource<'a> {
    Embeddings(&'a EmbeddingStore),
    Scores(&'a ScoreTable),
}

impl<'a> ScoreSource<'a> {
    /// A scorer over `records` backed by this source.
    pub fn scorer(self, records: &[ImageRecord]) -> Result<SourceScorer<'a>> {
        Ok(match self {
            ScoreSource::Embeddings(store) => SourceScorer::Embeddings(EmbeddingScorer::new(store, records)?),
            ScoreSource::Scores(table) => SourceScorer::Table(TableScorer::new(table, records)),
        })
    }
}

/// Either kind of scorer behind one type.
pub enum SourceScorer<'a> {
    Embeddings(EmbeddingScorer<'a>),
    Table(TableScorer),
}

impl Scorer for SourceScorer<'_> {
    fn available(&self, record: usize) -> bool {
        match self {
            SourceScorer::Embeddings(s) => s.available(record),
            SourceScorer::Table(s) => s.available(record),
        }
    }

    #[inline]
    fn score(&self, a: usize, b: usize) -> Option<f64> {
        match self {
            SourceScorer::Embeddings(s) => s.score(a, b),
            SourceScorer::Table(s) => s.score(a, b),
        }
    }
}

/// Measured inputs to an audit.
pub struct AuditInput<'a> {
    pub records: &'a [ImageRecord],
    /// Per record, `None` for excluded images.
    pub metrics: &'a [Option<ImageMetrics>],
    pub exclusions: Vec<Exclusion>,
    /// Warnings from earlier stages, carried into the report.
    pub warnings: Vec<String>,
    pub source: Option<ScoreSource<'a>>,
    pub digests: Vec<InputDigest>,
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub buckets: PairBuckets,
    pub categories: Vec<Option<ExposureCategory>>,
    pub distributions: Vec<DistributionExport>,
    pub fsb_histograms: BTreeMap<String, Vec<u64>>,
}

/// Impostor scores of the calibration group, fed to a bounded calibrator.
struct CalibrationSink(ThresholdCalibrator);

impl PairSink for CalibrationSink {
    #[inline]
    fn observe(&mut self, _: usize, _: usize, kind: PairKind, score: f64) {
        if kind == PairKind::Impostor {
            self.0.push(score);
        }
    }

    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
    }
}

struct AuditSink<'a> {
    buckets: BucketSink<'a>,
    windows: WindowSink<'a>,
}

impl PairSink for AuditSink<'_> {
    #[inline]
    fn observe(&mut self, a: usize, b: usize, kind: PairKind, score: f64) {
        self.buckets.observe(a, b, kind, score);
        self.windows.observe(a, b, kind, score);
    }

    fn merge(&mut self, other: Self) {
        self.buckets.merge(other.buckets);
        self.windows.merge(other.windows);
    }
}

/// Runs the audit: fit the scheme, categorize, calibrate the threshold on the
/// calibration group's impostor pairs, score every pair once into category
/// buckets and sliding windows, and assemble the tables.
pub fn run_audit(input: AuditInput<'_>, config: &AuditConfig) -> Result<AuditOutcome> {
    config.validate()?;
    match input.source {
        None => Err(Error::Input(
            "no score source: provide embeddings (with ids) or a score table".into(),
        )),
        Some(ScoreSource::Embeddings(store)) => {
            let scorer = EmbeddingScorer::new(store, input.records)?;
            run_with(&input, config, &scorer, Vec::new())
        }
        Some(ScoreSource::Scores(table)) => {
            let scorer = TableScorer::new(table, input.records);
            let mut warnings = Vec::new();
            if !scorer.unknown_ids().is_empty() {
                warnings.push(format!(
                    "score table names {} images absent from the manifest (first: `{}`)",
                    scorer.unknown_ids().len(),
                    scorer.unknown_ids()[0]
                ));
            }
            run_with(&input, config, &scorer, warnings)
        }
    }
}

fn fit_schemes(
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    groups: &[String],
    config: &AuditConfig,
    warnings: &mut Vec<String>,
) -> Result<(CategoryScheme, Option<BTreeMap<String, CategoryScheme>>)> {
    let pooled: Vec<f64> = metrics.iter().flatten().map(|m| m.fsb).collect();
    let scheme = fit_category_scheme(&pooled, config.percentiles)?;
    if config.scheme_mode == SchemeMode::Pooled {
        return Ok((scheme, None));
    }
    let mut per_group = BTreeMap::new();
    for g in groups {
        let values: Vec<f64> = records
            .iter()
            .zip(metrics)
            .filter(|(r, _)| &r.group == g)
            .filter_map(|(_, m)| m.map(|m| m.fsb))
            .collect();
        if values.len() < MIN_SCHEME_SAMPLES {
            warnings.push(format!(
                "group `{g}` has {} usable images, fewer than {MIN_SCHEME_SAMPLES}; using the pooled scheme",
                values.len()
            ));
            per_group.insert(g.clone(), scheme);
        } else {
            per_group.insert(g.clone(), fit_category_scheme(&values, config.percentiles)?);
        }
    }
    Ok((scheme, Some(per_group)))
}

fn run_with<Sc: Scorer>(
    input: &AuditInput<'_>,
    config: &AuditConfig,
    scorer: &Sc,
    mut warnings: Vec<String>,
) -> Result<AuditOutcome> {
    let records = input.records;
    let metrics = input.metrics;
    if metrics.len() != records.len() {
        return Err(Error::Invariant(format!(
            "{} measurements for {} records",
            metrics.len(),
            records.len()
        )));
    }
    warnings.extend(input.warnings.iter().cloned());

    let declared = config
        .groups
        .clone()
        .unwrap_or_else(|| crate::ingest::distinct_groups(records));
    crate::ingest::check_groups(records, &declared)?;
    let usable_groups: BTreeSet<&str> = records
        .iter()
        .zip(metrics)
        .filter(|(_, m)| m.is_some())
        .map(|(r, _)| r.group.as_str())
        .collect();
    let groups: Vec<String> = declared
        .iter()
        .filter(|g| usable_groups.contains(g.as_str()))
        .cloned()
        .collect();
    let omitted_groups: Vec<String> = declared
        .iter()
        .filter(|g| !usable_groups.contains(g.as_str()))
        .cloned()
        .collect();
    for g in &omitted_groups {
        warnings.push(format!("group `{g}` has no usable images and is omitted"));
    }
    if groups.is_empty() {
        return Err(Error::Input("no usable images in any group".into()));
    }

    // Categories.
    let (scheme, group_schemes) = fit_schemes(records, metrics, &groups, config, &mut warnings)?;
    let categories: Vec<Option<ExposureCategory>> = records
        .iter()
        .zip(metrics)
        .map(|(r, m)| {
            m.map(|m| match &group_schemes {
                Some(per) => per[&r.group].categorize(m.fsb),
                None => scheme.categorize(m.fsb),
            })
        })
        .collect();

    let (eligible, missing_ids) = eligibility(records, &categories, scorer);
    let missing_scores: Vec<String> = missing_ids
        .iter()
        .filter(|id| !input.exclusions.iter().any(|e| &e.image_id == *id))
        .cloned()
        .collect();
    if !missing_scores.is_empty() {
        warnings.push(format!(
            "{} images have no score source entry and are skipped (first: `{}`)",
            missing_scores.len(),
            missing_scores[0]
        ));
    }

    // Precondition: some group has two or more subjects to compare.
    let mut subjects: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut subject_groups: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for (r, _) in records.iter().zip(&eligible).filter(|(_, &ok)| ok) {
        subjects.entry(&r.group).or_default().insert(&r.subject_id);
        subject_groups.entry(&r.subject_id).or_default().insert(&r.group);
    }
    if !subjects.values().any(|s| s.len() >= 2) {
        return Err(Error::Input(
            "no group has two or more subjects with usable, scored images".into(),
        ));
    }
    let spanning = subject_groups.values().filter(|g| g.len() > 1).count();
    if spanning > 0 {
        warnings.push(format!(
            "{spanning} subjects appear in more than one group; their cross-group genuine pairs are only scored with cross_group scope"
        ));
    }

    // Threshold.
    let threshold = calibrate(records, &eligible, scorer, config)?;

    // Windows span the M band unless configured.
    let windows = match sliding_windows(&config.window_spec((scheme.b15, scheme.b85))) {
        Ok(w) => w,
        Err(e) => {
            warnings.push(format!("sliding windows skipped: {e}"));
            Vec::new()
        }
    };
    let layout = WindowLayout::new(windows, metrics);

    // Main pass.
    let space = PairSpace::new(records, config.impostor_scope);
    let group_index = space.groups();
    let ctx = BucketContext {
        groups: group_index,
        categories: &categories,
        histogram: config.histogram,
        threshold: threshold.value,
    };
    let (sink, tally) = run_pairs(&space, scorer, &eligible, &config.engine(), || AuditSink {
        buckets: BucketSink::new(&ctx),
        windows: WindowSink::new(&layout, group_index),
    })?;
    let AuditSink {
        buckets,
        windows: window_sink,
    } = sink;
    let buckets = buckets.into_buckets();
    if buckets.total_pairs() != tally.scored {
        return Err(Error::Invariant(format!(
            "bucket total {} differs from scored pairs {}",
            buckets.total_pairs(),
            tally.scored
        )));
    }

    // Tables.
    let mut labels: Vec<String> = groups.clone();
    if config.impostor_scope == crate::pairs::ImpostorScope::CrossGroup {
        for (i, a) in groups.iter().enumerate() {
            for b in &groups[i + 1..] {
                let (ga, gb) = (
                    group_index.position(a).unwrap_or(0),
                    group_index.position(b).unwrap_or(0),
                );
                labels.push(group_index.pair_label(ga, gb));
            }
        }
    }
    let fmr_table = fmr_table(&buckets, &labels, config.min_support);
    let bim_table = bim_table(&buckets, &groups, records, metrics, &categories, config.min_support);
    let overall = overall(&buckets, &labels);

    let window_groups: Vec<(u16, String)> = groups
        .iter()
        .filter_map(|g| group_index.position(g).map(|p| (p, g.clone())))
        .collect();
    let (sliding_table, target_range) = summarize_windows(
        &window_groups,
        group_index,
        records,
        metrics,
        &layout,
        &window_sink,
        config.min_window_genuine,
    );
    if !layout.is_empty() && target_range.consensus.is_none() {
        warnings.push(format!(
            "no sliding window reaches {} genuine pairs; consensus target range undefined",
            config.min_window_genuine
        ));
    }
    let coverage = match &target_range.consensus {
        Some(r) => coverage_fraction(records, metrics, r),
        None => BTreeMap::new(),
    };

    let selectors = default_selectors(&buckets, config.export_distributions);
    let distributions = export_distributions(&buckets, &selectors)?;
    let handles = distributions
        .iter()
        .map(|d| DistributionHandle {
            group: d.selector.group.clone(),
            pair: d.selector.pair.to_string(),
            kind: d.selector.kind,
            file: format!("distributions/{}", d.file_name()),
            count: d.total,
        })
        .collect();

    let fsb_pairs: Vec<(&str, f64)> = records
        .iter()
        .zip(metrics)
        .filter_map(|(r, m)| m.map(|m| (r.image_id.as_str(), m.fsb)))
        .collect();
    let group_stats = group_stats(fsb_pairs, records)?;
    let mut fsb_histograms: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for ((r, m), c) in records.iter().zip(metrics).zip(&categories) {
        let (Some(m), Some(c)) = (m, c) else { continue };
        fsb_histograms.entry(r.group.clone()).or_insert_with(|| vec![0; 256])[(m.fsb.floor() as usize).min(255)] += 1;
        let per = counts.entry(r.group.clone()).or_insert_with(|| {
            ExposureCategory::ALL
                .iter()
                .map(|c| (c.code().to_string(), 0))
                .collect()
        });
        *per.get_mut(c.code()).expect("all categories present") += 1;
    }
    let category_counts = counts
        .into_iter()
        .map(|(group, counts)| CategoryCounts { group, counts })
        .collect();

    let mut exclusions = input.exclusions.clone();
    exclusions.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let report = AuditReport {
        groups,
        omitted_groups,
        scheme,
        group_schemes,
        group_stats,
        category_counts,
        threshold,
        pair_tally: tally,
        overall,
        fmr_table,
        bim_table,
        sliding_table,
        target_range,
        coverage,
        saturation: saturation_report(&buckets, config.saturation_fraction),
        distributions: handles,
        exclusions,
        missing_ids: missing_scores,
        warnings,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.snapshot(),
            inputs: input.digests.clone(),
        },
    };
    Ok(AuditOutcome {
        report,
        buckets,
        categories,
        distributions,
        fsb_histograms,
    })
}

/// Threshold from every impostor pair inside the calibration group.
fn calibrate<Sc: Scorer>(
    records: &[ImageRecord],
    eligible: &[bool],
    scorer: &Sc,
    config: &AuditConfig,
) -> Result<Threshold> {
    let group = &config.calibration_group;
    if !records.iter().zip(eligible).any(|(r, &ok)| ok && &r.group == group) {
        return Err(Error::Config(format!(
            "calibration group `{group}` has no usable, scored images"
        )));
    }
    let space = PairSpace::filtered(records, config.impostor_scope, |i| {
        eligible[i] && &records[i].group == group
    });
    let (_, impostors) = space.kind_counts();
    let (sink, _) = run_pairs(&space, scorer, eligible, &config.engine(), || {
        CalibrationSink(ThresholdCalibrator::new(config.target_fmr, impostors).expect("target validated"))
    })?;
    sink.0.finish(group)
}

fn fmr_table(buckets: &PairBuckets, labels: &[String], min_support: u64) -> Vec<FmrCell> {
    let mut out = Vec::new();
    for g in labels {
        for pair in CATEGORY_PAIRS {
            let key = PairKey::new(g.clone(), pair.cat_a, pair.cat_b);
            let imp = buckets.get(PairKind::Impostor, &key);
            let impostor_pairs = imp.map_or(0, |s| s.pair_count);
            out.push(FmrCell {
                group: g.clone(),
                pair: pair.to_string(),
                impostor_pairs,
                false_matches: imp.map_or(0, |s| s.above_threshold_count),
                fmr: imp.and_then(fmr),
                genuine_pairs: buckets.get(PairKind::Genuine, &key).map_or(0, |s| s.pair_count),
                low_support: impostor_pairs < min_support,
            });
        }
    }
    out
}

fn bim_table(
    buckets: &PairBuckets,
    groups: &[String],
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    categories: &[Option<ExposureCategory>],
    min_support: u64,
) -> Vec<BimCell> {
    let mut out = Vec::new();
    for g in groups {
        for cat in ExposureCategory::ALL {
            let bims: Vec<f64> = (0..records.len())
                .filter(|&i| &records[i].group == g && categories[i] == Some(cat))
                .filter_map(|i| metrics[i].map(|m| m.bim))
                .collect();
            let key = PairKey::new(g.clone(), cat, cat);
            let imp = buckets.get(PairKind::Impostor, &key);
            let gen = buckets.get(PairKind::Genuine, &key);
            let moments = |s: Option<&PairStats>| s.map(PairStats::moments).unwrap_or_default();
            let dp = d_prime(&moments(gen), &moments(imp));
            let impostor_pairs = imp.map_or(0, |s| s.pair_count);
            let low_support = impostor_pairs < min_support;
            let mut notes = Vec::new();
            if low_support {
                notes.push(format!("{impostor_pairs} impostor pairs, below minimum {min_support}"));
            }
            if let Err(e) = &dp {
                notes.push(format!("d' undefined: {e}"));
            }
            out.push(BimCell {
                group: g.clone(),
                category: cat,
                images: bims.len() as u64,
                avg_bim: (!bims.is_empty()).then(|| bims.iter().sum::<f64>() / bims.len() as f64),
                fmr: imp.and_then(fmr),
                d_prime: dp.ok(),
                low_support,
                note: (!notes.is_empty()).then(|| notes.join("; ")),
            });
        }
    }
    out
}

fn overall(buckets: &PairBuckets, labels: &[String]) -> Vec<OverallRow> {
    labels
        .iter()
        .map(|g| {
            let pool = |kind: PairKind| {
                let mut m = ScoreMoments::default();
                let mut above = 0;
                for s in buckets.side(kind).iter().filter(|(k, _)| &k.group == g).map(|(_, s)| s) {
                    m.merge(&s.moments());
                    above += s.above_threshold_count;
                }
                (m, above)
            };
            let (gen, _) = pool(PairKind::Genuine);
            let (imp, false_matches) = pool(PairKind::Impostor);
            OverallRow {
                group: g.clone(),
                genuine_pairs: gen.count,
                impostor_pairs: imp.count,
                fmr: (imp.count > 0).then(|| false_matches as f64 / imp.count as f64),
                d_prime: d_prime(&gen, &imp).ok(),
            }
        })
        .collect()
}
