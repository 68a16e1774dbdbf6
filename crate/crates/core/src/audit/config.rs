//! Key-value configuration.
//!
//! One `key = value` per line; `#` starts a comment. Unknown keys are
//! rejected. Recognized keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `percentiles` | `5,15,85,95` | category cut points |
//! | `scheme_mode` | `pooled` | `pooled` or `per_group` scheme fitting |
//! | `calibration_group` | `CM` | group whose impostors fix the threshold |
//! | `target_fmr` | `1e-4` | calibration target |
//! | `min_support` | `1000000` | impostor pairs below which a cell is low-support |
//! | `min_window_genuine` | `1000` | genuine pairs a window needs to compete in the argmax |
//! | `window_lo`, `window_hi` | M band of the scheme | sliding-window span |
//! | `window_width`, `window_step` | `40`, `5` | sliding-window geometry |
//! | `window_label_prefix`, `window_label_start` | `M`, `1` | window labels |
//! | `normalize` | `true` | L2-normalize embeddings on load |
//! | `score_min`, `score_max`, `score_bins` | `-1`, `1`, `2000` | score histogram layout |
//! | `saturation_fraction` | `0.5` | edge-bin share flagged as saturated |
//! | `impostor_scope` | `within_group` | or `cross_group` |
//! | `groups` | groups in the manifest | declared group list |
//! | `block_size` | `256` | pair-engine tile size |
//! | `threads` | all cores | worker threads |
//! | `export_distributions` | `all` | `all`, `diagonal` or `none` |
//! | `label.<index>` | face-parsing defaults | region name of a label index |
//! | `manifest`, `embeddings`, `ids`, `scores`, `fsb_cache`, `out` | none | input and output paths |

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::brightness::{WindowSpec, DEFAULT_PERCENTILES};
use crate::error::{Error, Result};
use crate::ingest::LabelSemantics;
use crate::pairs::{EngineOptions, HistogramSpec, ImpostorScope, DEFAULT_SATURATION_FRACTION, DEFAULT_TARGET_FMR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeMode {
    Pooled,
    PerGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionSelection {
    All,
    Diagonal,
    None,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputPaths {
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub ids: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub fsb_cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub percentiles: [f64; 4],
    pub scheme_mode: SchemeMode,
    pub calibration_group: String,
    pub target_fmr: f64,
    pub min_support: u64,
    pub min_window_genuine: u64,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub window_width: f64,
    pub window_step: f64,
    pub window_label_prefix: String,
    pub window_label_start: i64,
    pub normalize: bool,
    pub histogram: HistogramSpec,
    pub saturation_fraction: f64,
    pub impostor_scope: ImpostorScope,
    pub groups: Option<BTreeSet<String>>,
    pub block_size: usize,
    pub threads: Option<usize>,
    pub export_distributions: DistributionSelection,
    pub labels: LabelSemantics,
    pub paths: InputPaths,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            percentiles: DEFAULT_PERCENTILES,
            scheme_mode: SchemeMode::Pooled,
            calibration_group: "CM".into(),
            target_fmr: DEFAULT_TARGET_FMR,
            min_support: 1_000_000,
            min_window_genuine: 1_000,
            window_lo: None,
            window_hi: None,
            window_width: 40.0,
            window_step: 5.0,
            window_label_prefix: "M".into(),
            window_label_start: 1,
            normalize: true,
            histogram: HistogramSpec::default(),
            saturation_fraction: DEFAULT_SATURATION_FRACTION,
            impostor_scope: ImpostorScope::WithinGroup,
            groups: None,
            block_size: 256,
            threads: None,
            export_distributions: DistributionSelection::All,
            labels: LabelSemantics::default(),
            paths: InputPaths::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl AuditConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative paths inside a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.manifest,
            &mut p.embeddings,
            &mut p.ids,
            &mut p.scores,
            &mut p.fsb_cache,
            &mut p.out,
        ] {
            if let Some(rel) = slot.as_mut().filter(|p| p.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Sets one key. Command-line flags go through here too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "percentiles" => {
                let parts: Vec<f64> = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?;
                self.percentiles = parts
                    .try_into()
                    .map_err(|_| Error::Config("`percentiles` needs exactly four values".into()))?;
            }
            "scheme_mode" => {
                self.scheme_mode = match value {
                    "pooled" => SchemeMode::Pooled,
                    "per_group" => SchemeMode::PerGroup,
                    _ => return Err(Error::Config(format!("`scheme_mode`: unknown mode `{value}`"))),
                }
            }
            "calibration_group" => self.calibration_group = value.to_string(),
            "target_fmr" => self.target_fmr = parse(key, value)?,
            "min_support" => self.min_support = parse(key, value)?,
            "min_window_genuine" => self.min_window_genuine = parse(key, value)?,
            "window_lo" => self.window_lo = Some(parse(key, value)?),
            "window_hi" => self.window_hi = Some(parse(key, value)?),
            "window_width" => self.window_width = parse(key, value)?,
            "window_step" => self.window_step = parse(key, value)?,
            "window_label_prefix" => self.window_label_prefix = value.to_string(),
            "window_label_start" => self.window_label_start = parse(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "score_min" => self.histogram.lo = parse(key, value)?,
            "score_max" => self.histogram.hi = parse(key, value)?,
            "score_bins" => self.histogram.bins = parse(key, value)?,
            "saturation_fraction" => self.saturation_fraction = parse(key, value)?,
            "impostor_scope" => {
                self.impostor_scope = match value {
                    "within_group" => ImpostorScope::WithinGroup,
                    "cross_group" => ImpostorScope::CrossGroup,
                    _ => return Err(Error::Config(format!("`impostor_scope`: unknown scope `{value}`"))),
                }
            }
            "groups" => {
                self.groups = Some(
                    value
                        .split(',')
                        .map(|g| g.trim().to_string())
                        .filter(|g| !g.is_empty())
                        .collect(),
                )
            }
            "block_size" => self.block_size = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "export_distributions" => {
                self.export_distributions = match value {
                    "all" => DistributionSelection::All,
                    "diagonal" => DistributionSelection::Diagonal,
                    "none" => DistributionSelection::None,
                    _ => {
                        return Err(Error::Config(format!(
                            "`export_distributions`: unknown selection `{value}`"
                        )))
                    }
                }
            }
            "manifest" => self.paths.manifest = path(),
            "embeddings" => self.paths.embeddings = path(),
            "ids" => self.paths.ids = path(),
            "scores" => self.paths.scores = path(),
            "fsb_cache" => self.paths.fsb_cache = path(),
            "out" => self.paths.out = path(),
            _ => match key.strip_prefix("label.") {
                Some(idx) => self.labels.set(parse::<u8>(key, idx)?, value),
                None => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.target_fmr > 0.0 && self.target_fmr <= 1.0) {
            return bad(format!("target_fmr must lie in (0, 1], got {}", self.target_fmr));
        }
        if self.histogram.lo.partial_cmp(&self.histogram.hi) != Some(std::cmp::Ordering::Less)
            || self.histogram.bins == 0
        {
            return bad("score range must satisfy score_min < score_max with score_bins > 0".into());
        }
        if self.block_size == 0 {
            return bad("block_size must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineOptions {
        EngineOptions {
            block_size: self.block_size,
            threads: self.threads,
        }
    }

    /// Window geometry, taking the span from `default_span` unless configured.
    pub fn window_spec(&self, default_span: (f64, f64)) -> WindowSpec {
        WindowSpec {
            lo: self.window_lo.unwrap_or(default_span.0),
            hi: self.window_hi.unwrap_or(default_span.1),
            width: self.window_width,
            step: self.window_step,
            label_prefix: self.window_label_prefix.clone(),
            label_start: self.window_label_start,
        }
    }

    /// Analysis settings as strings, for provenance. Paths are left out.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("percentiles", self.percentiles.map(|p| p.to_string()).join(","));
        put(
            "scheme_mode",
            match self.scheme_mode {
                SchemeMode::Pooled => "pooled".into(),
                SchemeMode::PerGroup => "per_group".into(),
            },
        );
        put("calibration_group", self.calibration_group.clone());
        put("target_fmr", self.target_fmr.to_string());
        put("min_support", self.min_support.to_string());
        put("min_window_genuine", self.min_window_genuine.to_string());
        if let Some(v) = self.window_lo {
            put("window_lo", v.to_string());
        }
        if let Some(v) = self.window_hi {
            put("window_hi", v.to_string());
        }
        put("window_width", self.window_width.to_string());
        put("window_step", self.window_step.to_string());
        put("window_label_prefix", self.window_label_prefix.clone());
        put("window_label_start", self.window_label_start.to_string());
        put("normalize", self.normalize.to_string());
        put("score_min", self.histogram.lo.to_string());
        put("score_max", self.histogram.hi.to_string());
        put("score_bins", self.histogram.bins.to_string());
        put("saturation_fraction", self.saturation_fraction.to_string());
        put(
            "impostor_scope",
            match self.impostor_scope {
                ImpostorScope::WithinGroup => "within_group".into(),
                ImpostorScope::CrossGroup => "cross_group".into(),
            },
        );
        if let Some(g) = &self.groups {
            put("groups", g.iter().cloned().collect::<Vec<_>>().join(","));
        }
        put("block_size", self.block_size.to_string());
        put(
            "export_distributions",
            match self.export_distributions {
                DistributionSelection::All => "all".into(),
                DistributionSelection::Diagonal => "diagonal".into(),
                DistributionSelection::None => "none".into(),
            },
        );
        for (i, name) in self.labels.iter() {
            put(&format!("label.{i}"), name.to_string());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let cfg = AuditConfig::parse(
            "# comment\n\
             percentiles = 10, 20, 80, 90\n\
             calibration_group = CF   # trailing\n\
             target_fmr = 1e-3\n\
             window_lo = 145\nwindow_hi = 220\nwindow_label_start = 6\n\
             normalize = false\n\
             score_min = 0\nscore_max = 1\nscore_bins = 100\n\
             impostor_scope = cross_group\n\
             groups = CM,CF\n\
             label.3 = nose\n",
        )
        .unwrap();
        assert_eq!(cfg.percentiles, [10.0, 20.0, 80.0, 90.0]);
        assert_eq!(cfg.calibration_group, "CF");
        assert_eq!(cfg.target_fmr, 1e-3);
        assert!(!cfg.normalize);
        assert_eq!(
            cfg.histogram,
            HistogramSpec {
                lo: 0.0,
                hi: 1.0,
                bins: 100
            }
        );
        assert_eq!(cfg.impostor_scope, ImpostorScope::CrossGroup);
        assert_eq!(cfg.labels.name(3), Some("nose"));
        let spec = cfg.window_spec((0.0, 1.0));
        assert_eq!((spec.lo, spec.hi, spec.label_start), (145.0, 220.0, 6));
        assert_eq!(cfg.groups.unwrap().len(), 2);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(AuditConfig::parse("bogus = 1").is_err());
        assert!(AuditConfig::parse("target_fmr = 0").is_err());
        assert!(AuditConfig::parse("percentiles = 1,2,3").is_err());
        assert!(AuditConfig::parse("no equals sign").is_err());
        assert!(AuditConfig::parse("score_min = 2").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = AuditConfig::default();
        cfg.set("min_support", "50").unwrap();
        let text: String = cfg.snapshot().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(AuditConfig::parse(&text).unwrap(), cfg);
    }
}
