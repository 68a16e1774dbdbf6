//! Distribution exports and writing the report directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::DistributionSelection;
use super::format::{round_json, sig6};
use super::report::AuditReport;
use crate::brightness::ExposureCategory;
use crate::error::{Error, Result};
use crate::pairs::{CategoryPair, PairBuckets, PairKey, PairKind};

/// Names one bucket side, written `GROUP:SU-M:impostor`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BucketSelector {
    pub group: String,
    pub pair: CategoryPair,
    pub kind: PairKind,
}

impl std::str::FromStr for BucketSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Input(format!(
                "bucket `{s}` is not of the form GROUP:CAT-CAT:genuine|impostor"
            ))
        };
        let mut parts = s.rsplitn(3, ':');
        let (kind, pair, group) = (
            parts.next().ok_or_else(bad)?,
            parts.next().ok_or_else(bad)?,
            parts.next().ok_or_else(bad)?,
        );
        let kind = match kind {
            "genuine" => PairKind::Genuine,
            "impostor" => PairKind::Impostor,
            _ => return Err(bad()),
        };
        let (a, b) = pair.split_once('-').ok_or_else(bad)?;
        let a: ExposureCategory = a.parse().map_err(|_| bad())?;
        let b: ExposureCategory = b.parse().map_err(|_| bad())?;
        if group.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            group: group.to_string(),
            pair: CategoryPair::new(a, b),
            kind,
        })
    }
}

impl std::fmt::Display for BucketSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.group, self.pair.slug(), self.kind.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionExport {
    pub selector: BucketSelector,
    pub total: u64,
    pub rows: Vec<DensityRow>,
}

impl DistributionExport {
    /// File name safe on any platform, e.g. `CM_SU-M_impostor.csv`.
    pub fn file_name(&self) -> String {
        let group: String = self
            .selector
            .group
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!(
            "{group}_{}_{}.csv",
            self.selector.pair.slug(),
            self.selector.kind.as_str()
        )
    }
}

/// Every nonempty bucket side, optionally restricted to same-category pairs.
pub fn default_selectors(buckets: &PairBuckets, selection: DistributionSelection) -> Vec<BucketSelector> {
    if selection == DistributionSelection::None {
        return Vec::new();
    }
    let mut out = Vec::new();
    for kind in [PairKind::Genuine, PairKind::Impostor] {
        for (key, stats) in buckets.side(kind) {
            let pair = key.categories();
            if stats.pair_count == 0 || (selection == DistributionSelection::Diagonal && !pair.is_diagonal()) {
                continue;
            }
            out.push(BucketSelector {
                group: key.group.clone(),
                pair,
                kind,
            });
        }
    }
    out.sort();
    out
}

/// Density histograms of the selected buckets. Densities are per unit score
/// and integrate to one.
pub fn export_distributions(buckets: &PairBuckets, selection: &[BucketSelector]) -> Result<Vec<DistributionExport>> {
    selection
        .iter()
        .map(|sel| {
            let key = PairKey::new(sel.group.clone(), sel.pair.cat_a, sel.pair.cat_b);
            let stats = buckets
                .get(sel.kind, &key)
                .filter(|s| s.pair_count > 0)
                .ok_or_else(|| Error::Input(format!("unknown or empty bucket `{sel}`")))?;
            let h = &stats.score_histogram;
            let spec = h.spec();
            let total = h.total();
            let norm = total as f64 * spec.bin_width();
            let rows = h
                .counts()
                .iter()
                .enumerate()
                .map(|(i, &count)| {
                    let (bin_low, bin_high) = spec.edges(i);
                    DensityRow {
                        bin_low,
                        bin_high,
                        count,
                        density: count as f64 / norm,
                    }
                })
                .collect();
            Ok(DistributionExport {
                selector: sel.clone(),
                total,
                rows,
            })
        })
        .collect()
}

pub fn write_distribution_csv(path: &Path, export: &DistributionExport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    w.write_record(["bin_low", "bin_high", "count", "density"])
        .map_err(err)?;
    for r in &export.rows {
        w.write_record([sig6(r.bin_low), sig6(r.bin_high), r.count.to_string(), sig6(r.density)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The report serialized with every float rounded to six significant digits.
pub fn report_json(report: &AuditReport) -> Result<String> {
    let mut value = serde_json::to_value(report).map_err(|e| Error::Invariant(format!("report serialization: {e}")))?;
    round_json(&mut value);
    let mut text =
        serde_json::to_string_pretty(&value).map_err(|e| Error::Invariant(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Everything the audit writes besides the report object.
pub struct AuditArtifacts<'a> {
    pub distributions: &'a [DistributionExport],
    /// Per group, image counts per integer FSB level.
    pub fsb_histograms: &'a BTreeMap<String, Vec<u64>>,
    /// Seconds since the Unix epoch when the run started.
    pub started_at: u64,
}

/// Writes the report directory. All files except `run_meta.json` depend only
/// on the inputs and settings.
pub fn write_report_dir(dir: &Path, report: &AuditReport, artifacts: &AuditArtifacts<'_>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.json", &report_json(report)?)?;
    write("report.txt", &report.to_text())?;

    write_rows(
        &dir.join("fmr_table.csv"),
        &[
            "group",
            "pair",
            "impostor_pairs",
            "false_matches",
            "fmr",
            "genuine_pairs",
            "low_support",
        ],
        report.fmr_table.iter().map(|c| {
            vec![
                c.group.clone(),
                c.pair.clone(),
                c.impostor_pairs.to_string(),
                c.false_matches.to_string(),
                opt(c.fmr),
                c.genuine_pairs.to_string(),
                c.low_support.to_string(),
            ]
        }),
    )?;
    write_rows(
        &dir.join("bim_table.csv"),
        &[
            "group",
            "category",
            "images",
            "avg_bim",
            "fmr",
            "d_prime",
            "low_support",
            "note",
        ],
        report.bim_table.iter().map(|c| {
            vec![
                c.group.clone(),
                c.category.code().to_string(),
                c.images.to_string(),
                opt(c.avg_bim),
                opt(c.fmr),
                opt(c.d_prime),
                c.low_support.to_string(),
                c.note.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_sliding_csv(&dir.join("sliding_table.csv"), &report.sliding_table)?;

    let dist_dir = dir.join("distributions");
    if !artifacts.distributions.is_empty() {
        fs::create_dir_all(&dist_dir).map_err(|e| Error::io(&dist_dir, e))?;
    }
    for d in artifacts.distributions {
        write_distribution_csv(&dist_dir.join(d.file_name()), d)?;
    }
    for (group, counts) in artifacts.fsb_histograms {
        write_fsb_histogram(&dir.join(format!("hist_{group}.csv")), counts)?;
    }

    let finished = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "started_at_unix": artifacts.started_at,
        "finished_at_unix": finished,
    });
    write("run_meta.json", &format!("{meta:#}\n"))
}

pub fn write_sliding_csv(path: &Path, cells: &[super::target::SlidingCell]) -> Result<()> {
    write_rows(
        path,
        &[
            "group",
            "window",
            "lo",
            "hi",
            "images",
            "avg_bim",
            "genuine_pairs",
            "impostor_pairs",
            "d_prime",
            "low_support",
        ],
        cells.iter().map(|c| {
            vec![
                c.group.clone(),
                c.label.clone(),
                sig6(c.lo),
                sig6(c.hi),
                c.images.to_string(),
                opt(c.avg_bim),
                c.genuine_pairs.to_string(),
                c.impostor_pairs.to_string(),
                opt(c.d_prime),
                c.low_support.to_string(),
            ]
        }),
    )
}

/// `fsb_level,count` for levels 0 to 255, where an image counts at `floor(FSB)`.
pub fn write_fsb_histogram(path: &Path, counts: &[u64]) -> Result<()> {
    write_rows(
        path,
        &["fsb_level", "count"],
        counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![i.to_string(), c.to_string()]),
    )
}
