//! Report types and the aligned-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::format::{sig6, sig6_or_dash, DASH};
use super::measure::Exclusion;
use super::target::{SlidingCell, TargetRange};
use crate::brightness::{CategoryScheme, ExposureCategory, GroupStats};
use crate::error::{Error, Result};
use crate::pairs::{PairKind, PairTally, SaturationRow, Threshold, CATEGORY_PAIRS};

/// One Table-2 style cell: impostor FMR of a (group, category pair) bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FmrCell {
    pub group: String,
    /// `(SU,M)` style label.
    pub pair: String,
    pub impostor_pairs: u64,
    pub false_matches: u64,
    pub fmr: Option<f64>,
    pub genuine_pairs: u64,
    /// Fewer impostor pairs than the configured minimum support.
    pub low_support: bool,
}

/// One Table-3 style row: a same-category bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BimCell {
    pub group: String,
    pub category: ExposureCategory,
    pub images: u64,
    pub avg_bim: Option<f64>,
    pub fmr: Option<f64>,
    pub d_prime: Option<f64>,
    pub low_support: bool,
    /// Why a value is missing or rendered as a dash.
    pub note: Option<String>,
}

/// All-pairs summary per group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallRow {
    pub group: String,
    pub genuine_pairs: u64,
    pub impostor_pairs: u64,
    pub fmr: Option<f64>,
    pub d_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCounts {
    pub group: String,
    /// Image counts keyed by category code.
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionHandle {
    pub group: String,
    pub pair: String,
    pub kind: PairKind,
    /// Path relative to the output directory.
    pub file: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// SHA-256 of a file's contents.
pub fn digest_file(role: &str, path: impl AsRef<Path>) -> Result<InputDigest> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let sha256 = hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256,
    })
}

/// Settings and inputs a report was produced from. Wall-clock times live in
/// `run_meta.json` so that the report itself is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub groups: Vec<String>,
    pub omitted_groups: Vec<String>,
    pub scheme: CategoryScheme,
    /// Present when schemes were fitted per group.
    pub group_schemes: Option<BTreeMap<String, CategoryScheme>>,
    pub group_stats: Vec<GroupStats>,
    pub category_counts: Vec<CategoryCounts>,
    pub threshold: Threshold,
    pub pair_tally: PairTally,
    pub overall: Vec<OverallRow>,
    pub fmr_table: Vec<FmrCell>,
    pub bim_table: Vec<BimCell>,
    pub sliding_table: Vec<SlidingCell>,
    pub target_range: TargetRange,
    /// Per group, share of measured images inside the consensus range.
    pub coverage: BTreeMap<String, f64>,
    pub saturation: Vec<SaturationRow>,
    pub distributions: Vec<DistributionHandle>,
    pub exclusions: Vec<Exclusion>,
    /// Images that could not be scored.
    pub missing_ids: Vec<String>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl AuditReport {
    pub fn fmr_cell(&self, group: &str, a: ExposureCategory, b: ExposureCategory) -> Option<&FmrCell> {
        let label = crate::pairs::CategoryPair::new(a, b).to_string();
        self.fmr_table.iter().find(|c| c.group == group && c.pair == label)
    }

    pub fn bim_cell(&self, group: &str, category: ExposureCategory) -> Option<&BimCell> {
        self.bim_table
            .iter()
            .find(|c| c.group == group && c.category == category)
    }

    /// Human-readable rendering with aligned columns.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = self.write_text(&mut out);
        out
    }

    fn write_text(&self, out: &mut String) -> std::fmt::Result {
        let s = &self.scheme;
        writeln!(out, "Exposure categories (pooled over {} images)", s.source_count)?;
        writeln!(
            out,
            "  SU < {}  <= U < {}  <= M < {}  <= O < {}  <= SO",
            sig6(s.b5),
            sig6(s.b15),
            sig6(s.b85),
            sig6(s.b95)
        )?;
        writeln!(out)?;

        writeln!(out, "FSB by group")?;
        let mut rows = vec![row(["group", "images", "mean", "std", "SU", "U", "M", "O", "SO"])];
        for g in &self.group_stats {
            let counts = self.category_counts.iter().find(|c| c.group == g.group);
            let mut r = vec![g.group.clone(), g.count.to_string(), sig6(g.mean), sig6(g.std)];
            for cat in ExposureCategory::ALL {
                r.push(
                    counts
                        .and_then(|c| c.counts.get(cat.code()))
                        .copied()
                        .unwrap_or(0)
                        .to_string(),
                );
            }
            rows.push(r);
        }
        write_table(out, &rows)?;
        writeln!(out)?;

        let t = &self.threshold;
        writeln!(
            out,
            "Threshold {} calibrated on {} impostor pairs of {} (target FMR {}, achieved {})",
            sig6(t.value),
            t.score_count,
            t.calibration_group,
            sig6(t.target_fmr),
            sig6(t.achieved_fmr)
        )?;
        writeln!(
            out,
            "Scored pairs {}, skipped {}",
            self.pair_tally.scored, self.pair_tally.skipped
        )?;
        writeln!(out)?;

        writeln!(out, "Overall")?;
        let mut rows = vec![row(["group", "genuine", "impostor", "FMR", "d'"])];
        for o in &self.overall {
            rows.push(vec![
                o.group.clone(),
                o.genuine_pairs.to_string(),
                o.impostor_pairs.to_string(),
                sig6_or_dash(o.fmr),
                sig6_or_dash(o.d_prime),
            ]);
        }
        write_table(out, &rows)?;
        writeln!(out)?;

        let groups: Vec<&str> = {
            let mut g: Vec<&str> = self.fmr_table.iter().map(|c| c.group.as_str()).collect();
            g.dedup();
            g
        };
        writeln!(
            out,
            "FMR by pair brightness category (* = below minimum impostor support)"
        )?;
        let mut header = vec!["pair".to_string()];
        header.extend(groups.iter().map(|g| g.to_string()));
        let mut rows = vec![header];
        for pair in CATEGORY_PAIRS {
            let label = pair.to_string();
            let mut r = vec![label.clone()];
            for g in &groups {
                let cell = self.fmr_table.iter().find(|c| c.group == *g && c.pair == label);
                r.push(match cell {
                    Some(c) => match c.fmr {
                        Some(f) if c.low_support => format!("{}*", sig6(f)),
                        Some(f) => sig6(f),
                        None => DASH.to_string(),
                    },
                    None => DASH.to_string(),
                });
            }
            rows.push(r);
        }
        write_table(out, &rows)?;
        writeln!(out)?;

        writeln!(out, "Same-category pairs")?;
        let mut rows = vec![row(["group", "category", "images", "avg BIM", "FMR", "d'"])];
        let mut notes = Vec::new();
        for c in &self.bim_table {
            let hide = |v: Option<f64>| {
                if c.low_support {
                    DASH.to_string()
                } else {
                    sig6_or_dash(v)
                }
            };
            rows.push(vec![
                c.group.clone(),
                c.category.code().to_string(),
                c.images.to_string(),
                sig6_or_dash(c.avg_bim),
                hide(c.fmr),
                hide(c.d_prime),
            ]);
            if let Some(n) = &c.note {
                notes.push(format!("  {} {}: {n}", c.group, c.category.code()));
            }
        }
        write_table(out, &rows)?;
        for n in notes {
            writeln!(out, "{n}")?;
        }
        writeln!(out)?;

        if !self.sliding_table.is_empty() {
            writeln!(out, "Sliding windows (* = below minimum genuine support)")?;
            let mut rows = vec![row(["group", "window", "range", "images", "avg BIM", "d'"])];
            for c in &self.sliding_table {
                let mark = if c.low_support { "*" } else { "" };
                rows.push(vec![
                    c.group.clone(),
                    format!("{}{mark}", c.label),
                    format!("{}-{}", sig6(c.lo), sig6(c.hi)),
                    c.images.to_string(),
                    sig6_or_dash(c.avg_bim),
                    sig6_or_dash(c.d_prime),
                ]);
            }
            write_table(out, &rows)?;
            writeln!(out)?;
        }

        writeln!(out, "Target range")?;
        let mut rows = vec![row(["group", "best by BIM", "best by d'"])];
        let fmt_ref = |w: &Option<super::target::WindowRef>| match w {
            Some(w) => format!("{} ({}-{})", w.label, sig6(w.lo), sig6(w.hi)),
            None => DASH.to_string(),
        };
        for g in &self.target_range.per_group {
            rows.push(vec![
                g.group.clone(),
                fmt_ref(&g.argmax_by_bim),
                fmt_ref(&g.argmax_by_dprime),
            ]);
        }
        write_table(out, &rows)?;
        match &self.target_range.consensus {
            Some(ranges) => {
                let parts: Vec<String> = ranges
                    .iter()
                    .map(|r| format!("{}-{}", sig6(r[0]), sig6(r[1])))
                    .collect();
                writeln!(out, "Consensus: {}", parts.join(", "))?;
                for (g, f) in &self.coverage {
                    writeln!(out, "  {g}: {} of images inside", sig6(*f))?;
                }
            }
            None => writeln!(out, "Consensus: undefined (no window meets the genuine-pair minimum)")?,
        }
        writeln!(out)?;

        writeln!(out, "Score saturation")?;
        let mut rows = vec![row(["group", "impostor floor", "genuine ceiling"])];
        for r in &self.saturation {
            let flag =
                |f: Option<f64>, sat: bool| format!("{}{}", sig6_or_dash(f), if sat { " saturated" } else { "" });
            rows.push(vec![
                r.group.clone(),
                flag(r.impostor_floor_fraction, r.impostor_saturated),
                flag(r.genuine_ceiling_fraction, r.genuine_saturated),
            ]);
        }
        write_table(out, &rows)?;

        if !self.exclusions.is_empty() || !self.missing_ids.is_empty() || !self.warnings.is_empty() {
            writeln!(out)?;
            writeln!(
                out,
                "{} images excluded, {} images without scores",
                self.exclusions.len(),
                self.missing_ids.len()
            )?;
            for w in &self.warnings {
                writeln!(out, "warning: {w}")?;
            }
        }
        Ok(())
    }
}

fn row<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|c| c.to_string()).collect()
}

/// Left-aligned first column, right-aligned numbers.
fn write_table(out: &mut String, rows: &[Vec<String>]) -> std::fmt::Result {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str("  ");
                line.push_str(cell);
                line.extend(std::iter::repeat_n(' ', pad));
            } else {
                line.push_str("  ");
                line.extend(std::iter::repeat_n(' ', pad));
                line.push_str(cell);
            }
        }
        writeln!(out, "{}", line.trim_end())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            digest_file("manifest", &p).unwrap().sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn table_alignment() {
        let mut s = String::new();
        write_table(&mut s, &[row(["g", "n"]), row(["long", "1234"])]).unwrap();
        assert_eq!(s, "  g        n\n  long  1234\n");
    }
}
