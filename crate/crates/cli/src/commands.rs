use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use facelight_core::audit::{
    default_selectors, digest_file, export_distributions, load_fsb_csv, measure_images, read_fsb_rows, run_audit, sig6,
    target_range_search, write_distribution_csv, write_fsb_csv, write_fsb_histogram, write_fsb_rows, write_report_dir,
    write_sliding_csv, AuditArtifacts, AuditConfig, AuditInput, BucketSelector, Exclusion, FileImages, ImageMetrics,
    InputDigest, ScoreSource,
};
use facelight_core::brightness::{fit_category_scheme, sliding_windows, summarize_groups, CategoryScheme};
use facelight_core::ingest::{load_embeddings, load_label_map, load_manifest, load_scores};
use facelight_core::pairs::{accumulate, PairSpace};
use facelight_core::skinregion::derive_skin_mask;
use facelight_core::{EmbeddingStore, ExposureCategory, ImageRecord, ScoreTable};

use crate::{Cli, Command, Global, ImageInputs, ScoreInputs};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli.global)?;
    match cli.command {
        Command::Fsb {
            inputs,
            out,
            mask_dir,
            percentiles,
        } => {
            apply_images(&mut cfg, &inputs)?;
            set(&mut cfg, "percentiles", percentiles)?;
            set(&mut cfg, "out", out.map(path_str))?;
            init_threads(&cfg)?;
            fsb(&cfg, mask_dir.as_deref())
        }
        Command::Bim {
            inputs,
            out,
            percentiles,
        } => {
            apply_images(&mut cfg, &inputs)?;
            set(&mut cfg, "percentiles", percentiles)?;
            init_threads(&cfg)?;
            bim(&cfg, out.as_deref())
        }
        Command::Categorize {
            fsb,
            out,
            scheme_out,
            percentiles,
        } => {
            set(&mut cfg, "fsb_cache", fsb.map(path_str))?;
            set(&mut cfg, "percentiles", percentiles)?;
            set(&mut cfg, "out", out.map(path_str))?;
            categorize(&cfg, scheme_out.as_deref())
        }
        Command::Stats { inputs, out, hist_dir } => {
            apply_images(&mut cfg, &inputs)?;
            init_threads(&cfg)?;
            stats(&cfg, out.as_deref(), hist_dir.as_deref())
        }
        Command::Audit {
            inputs,
            scores,
            calibration_group,
            target_fmr,
            min_support,
            out,
        } => {
            apply_images(&mut cfg, &inputs)?;
            apply_scores(&mut cfg, &scores)?;
            set(&mut cfg, "calibration_group", calibration_group)?;
            set(&mut cfg, "target_fmr", target_fmr)?;
            set(&mut cfg, "min_support", min_support)?;
            set(&mut cfg, "out", out.map(path_str))?;
            init_threads(&cfg)?;
            audit(&cfg)
        }
        Command::TargetRange {
            inputs,
            scores,
            window,
            step,
            lo,
            hi,
            min_genuine,
            out,
        } => {
            apply_images(&mut cfg, &inputs)?;
            apply_scores(&mut cfg, &scores)?;
            set(&mut cfg, "window_width", window)?;
            set(&mut cfg, "window_step", step)?;
            set(&mut cfg, "window_lo", lo)?;
            set(&mut cfg, "window_hi", hi)?;
            set(&mut cfg, "min_window_genuine", min_genuine)?;
            set(&mut cfg, "out", out.map(path_str))?;
            init_threads(&cfg)?;
            target_range(&cfg)
        }
        Command::ExportDist {
            inputs,
            scores,
            buckets,
            out,
        } => {
            apply_images(&mut cfg, &inputs)?;
            apply_scores(&mut cfg, &scores)?;
            set(&mut cfg, "out", out.map(path_str))?;
            init_threads(&cfg)?;
            export_dist(&cfg, &buckets)
        }
    }
}

fn path_str(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

fn base_config(global: &Global) -> Result<AuditConfig> {
    let mut cfg = match &global.config {
        Some(path) => AuditConfig::from_file(path)?,
        None => AuditConfig::default(),
    };
    for kv in &global.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    set(&mut cfg, "threads", global.threads)?;
    Ok(cfg)
}

fn set(cfg: &mut AuditConfig, key: &str, value: Option<impl ToString>) -> Result<()> {
    if let Some(v) = value {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn apply_images(cfg: &mut AuditConfig, inputs: &ImageInputs) -> Result<()> {
    set(cfg, "manifest", inputs.manifest.clone().map(path_str))?;
    set(cfg, "fsb_cache", inputs.fsb_cache.clone().map(path_str))?;
    set(cfg, "groups", inputs.groups.clone())
}

fn apply_scores(cfg: &mut AuditConfig, scores: &ScoreInputs) -> Result<()> {
    set(cfg, "embeddings", scores.embeddings.clone().map(path_str))?;
    set(cfg, "ids", scores.ids.clone().map(path_str))?;
    set(cfg, "scores", scores.scores.clone().map(path_str))?;
    set(cfg, "normalize", scores.normalize)?;
    set(cfg, "impostor_scope", scores.impostor_scope.clone())
}

fn init_threads(cfg: &AuditConfig) -> Result<()> {
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("cannot start {n} worker threads: {e}"))?;
    }
    Ok(())
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| {
        anyhow!(facelight_core::Error::Config(format!(
            "missing --{flag} (or `{}` in the config file)",
            flag.replace('-', "_")
        )))
    })
}

/// Records with their measurements, from the FSB cache when one is given.
struct Measured {
    records: Vec<ImageRecord>,
    metrics: Vec<Option<ImageMetrics>>,
    exclusions: Vec<Exclusion>,
    warnings: Vec<String>,
    digests: Vec<InputDigest>,
}

fn measured(cfg: &AuditConfig) -> Result<Measured> {
    let manifest = require(&cfg.paths.manifest, "manifest")?;
    let records = load_manifest(manifest)?;
    let mut digests = vec![digest_file("manifest", manifest)?];
    let (metrics, exclusions, warnings) = match &cfg.paths.fsb_cache {
        Some(cache) => {
            digests.push(digest_file("fsb_cache", cache)?);
            let metrics = load_fsb_csv(cache, &records)?;
            let exclusions = records
                .iter()
                .zip(&metrics)
                .filter(|(_, m)| m.is_none())
                .map(|(r, _)| Exclusion {
                    image_id: r.image_id.clone(),
                    reason: "not in the FSB cache".into(),
                })
                .collect();
            (metrics, exclusions, Vec::new())
        }
        None => {
            let m = measure_images(
                &records,
                &FileImages {
                    semantics: cfg.labels.clone(),
                },
            )?;
            (m.metrics, m.exclusions, m.warnings)
        }
    };
    Ok(Measured {
        records,
        metrics,
        exclusions,
        warnings,
        digests,
    })
}

fn pooled_scheme(cfg: &AuditConfig, metrics: &[Option<ImageMetrics>]) -> Result<CategoryScheme> {
    let values: Vec<f64> = metrics.iter().flatten().map(|m| m.fsb).collect();
    Ok(fit_category_scheme(&values, cfg.percentiles)?)
}

fn categories(scheme: &CategoryScheme, metrics: &[Option<ImageMetrics>]) -> Vec<Option<ExposureCategory>> {
    metrics.iter().map(|m| m.map(|m| scheme.categorize(m.fsb))).collect()
}

fn note_warnings(m: &Measured) {
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    for e in &m.exclusions {
        eprintln!("excluded {}: {}", e.image_id, e.reason);
    }
}

fn fsb(cfg: &AuditConfig, mask_dir: Option<&Path>) -> Result<()> {
    let out = require(&cfg.paths.out, "out")?;
    let m = measured(cfg)?;
    note_warnings(&m);
    let cats = match pooled_scheme(cfg, &m.metrics) {
        Ok(s) => categories(&s, &m.metrics),
        Err(e) => {
            eprintln!("warning: categories left blank: {e}");
            vec![None; m.records.len()]
        }
    };
    write_fsb_csv(out, &m.records, &m.metrics, &cats)?;
    if let Some(dir) = mask_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for rec in &m.records {
            let labels = load_label_map(&rec.mask_path, &cfg.labels)?;
            if let Ok(mask) = derive_skin_mask(&labels) {
                mask.save_debug_png(dir.join(format!("{}.png", rec.image_id)))?;
            }
        }
    }
    let measured = m.metrics.iter().flatten().count();
    eprintln!("measured {measured} images, excluded {}", m.exclusions.len());
    Ok(())
}

fn bim(cfg: &AuditConfig, out: Option<&Path>) -> Result<()> {
    let m = measured(cfg)?;
    note_warnings(&m);
    let scheme = pooled_scheme(cfg, &m.metrics)?;
    let cats = categories(&scheme, &m.metrics);
    let mut sums: BTreeMap<(&str, ExposureCategory), (u64, f64)> = BTreeMap::new();
    for ((rec, metric), cat) in m.records.iter().zip(&m.metrics).zip(&cats) {
        if let (Some(metric), Some(cat)) = (metric, cat) {
            let e = sums.entry((rec.group.as_str(), *cat)).or_default();
            e.0 += 1;
            e.1 += metric.bim;
        }
    }
    let mut text = String::from("group,category,images,avg_bim\n");
    for ((group, cat), (n, sum)) in sums {
        text.push_str(&format!("{group},{},{n},{}\n", cat.code(), sig6(sum / n as f64)));
    }
    emit(out, &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn categorize(cfg: &AuditConfig, scheme_out: Option<&Path>) -> Result<()> {
    let input = require(&cfg.paths.fsb_cache, "fsb")?;
    let out = require(&cfg.paths.out, "out")?;
    let mut rows = read_fsb_rows(input)?;
    let values: Vec<f64> = rows.iter().map(|r| r.metrics.fsb).collect();
    let scheme = fit_category_scheme(&values, cfg.percentiles)?;
    for r in &mut rows {
        r.category = Some(scheme.categorize(r.metrics.fsb));
    }
    write_fsb_rows(out, &rows)?;
    if let Some(p) = scheme_out {
        let json = serde_json::to_string_pretty(&scheme)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    let [b5, b15, b85, b95] = scheme.boundaries();
    eprintln!(
        "boundaries over {} images: {} {} {} {}",
        scheme.source_count,
        sig6(b5),
        sig6(b15),
        sig6(b85),
        sig6(b95)
    );
    Ok(())
}

fn stats(cfg: &AuditConfig, out: Option<&Path>, hist_dir: Option<&Path>) -> Result<()> {
    // An FSB cache alone is enough; it carries the group column.
    let pairs: Vec<(String, f64)> = match (&cfg.paths.manifest, &cfg.paths.fsb_cache) {
        (None, Some(cache)) => read_fsb_rows(cache)?
            .into_iter()
            .map(|r| (r.group, r.metrics.fsb))
            .collect(),
        _ => {
            let m = measured(cfg)?;
            note_warnings(&m);
            m.records
                .iter()
                .zip(&m.metrics)
                .filter_map(|(r, x)| x.map(|x| (r.group.clone(), x.fsb)))
                .collect()
        }
    };
    let rows = summarize_groups(pairs.iter().map(|(g, v)| (g.as_str(), *v)));
    let mut text = String::from("group,count,mean,std,single_image\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.group,
            r.count,
            sig6(r.mean),
            sig6(r.std),
            r.single_image
        ));
    }
    emit(out, &text)?;
    if let Some(dir) = hist_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut hists: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
        for (g, v) in &pairs {
            hists.entry(g).or_insert_with(|| vec![0; 256])[(v.floor() as usize).min(255)] += 1;
        }
        for (g, counts) in hists {
            write_fsb_histogram(&dir.join(format!("hist_{g}.csv")), &counts)?;
        }
    }
    Ok(())
}

/// The loaded score source; keeps the store or table alive for borrowing.
enum Loaded {
    Embeddings(EmbeddingStore),
    Scores(ScoreTable),
    None,
}

impl Loaded {
    fn source(&self) -> Option<ScoreSource<'_>> {
        match self {
            Loaded::Embeddings(s) => Some(ScoreSource::Embeddings(s)),
            Loaded::Scores(t) => Some(ScoreSource::Scores(t)),
            Loaded::None => None,
        }
    }
}

fn load_source(cfg: &AuditConfig, digests: &mut Vec<InputDigest>) -> Result<Loaded> {
    let p = &cfg.paths;
    match (&p.embeddings, &p.ids, &p.scores) {
        (Some(_), Some(_), Some(_)) => bail!(facelight_core::Error::Config(
            "give either embeddings or a score table, not both".into()
        )),
        (Some(e), Some(ids), None) => {
            digests.push(digest_file("embeddings", e)?);
            digests.push(digest_file("ids", ids)?);
            Ok(Loaded::Embeddings(load_embeddings(e, ids, cfg.normalize)?))
        }
        (Some(_), None, _) => bail!(facelight_core::Error::Config("--embeddings needs --ids".into())),
        (None, _, Some(s)) => {
            digests.push(digest_file("scores", s)?);
            Ok(Loaded::Scores(load_scores(s)?))
        }
        _ => Ok(Loaded::None),
    }
}

fn no_source() -> anyhow::Error {
    anyhow!(facelight_core::Error::Input(
        "no score source: provide --embeddings with --ids, or --scores".into()
    ))
}

fn audit(cfg: &AuditConfig) -> Result<()> {
    let out = require(&cfg.paths.out, "out")?.to_path_buf();
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut m = measured(cfg)?;
    let loaded = load_source(cfg, &mut m.digests)?;
    let outcome = run_audit(
        AuditInput {
            records: &m.records,
            metrics: &m.metrics,
            exclusions: m.exclusions.clone(),
            warnings: m.warnings.clone(),
            source: loaded.source(),
            digests: m.digests.clone(),
        },
        cfg,
    )?;
    write_report_dir(
        &out,
        &outcome.report,
        &AuditArtifacts {
            distributions: &outcome.distributions,
            fsb_histograms: &outcome.fsb_histograms,
            started_at,
        },
    )?;
    let r = &outcome.report;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "threshold {} on {} ({} pairs scored, {} skipped); report written to {}",
        sig6(r.threshold.value),
        r.threshold.calibration_group,
        r.pair_tally.scored,
        r.pair_tally.skipped,
        out.display()
    );
    Ok(())
}

fn target_range(cfg: &AuditConfig) -> Result<()> {
    let mut m = measured(cfg)?;
    note_warnings(&m);
    let loaded = load_source(cfg, &mut m.digests)?;
    let source = loaded.source().ok_or_else(no_source)?;
    let scheme = pooled_scheme(cfg, &m.metrics)?;
    let windows = sliding_windows(&cfg.window_spec((scheme.b15, scheme.b85)))?;
    let scorer = source.scorer(&m.records)?;
    let space = PairSpace::new(&m.records, cfg.impostor_scope);
    let search = target_range_search(
        &m.records,
        &m.metrics,
        &scorer,
        &space,
        windows,
        cfg.min_window_genuine,
        &cfg.engine(),
    )?;
    if let Some(dir) = &cfg.paths.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_sliding_csv(&dir.join("sliding_table.csv"), &search.cells)?;
        let mut value = serde_json::json!({
            "per_group": search.target.per_group,
            "consensus": search.target.consensus,
            "coverage": search.coverage,
        });
        round_floats(&mut value);
        fs::write(dir.join("target_range.json"), format!("{value:#}\n"))
            .with_context(|| format!("writing {}", dir.display()))?;
    }
    for g in &search.target.per_group {
        let best = g
            .argmax_by_dprime
            .as_ref()
            .map(|w| format!("{} [{}, {}]", w.label, sig6(w.lo), sig6(w.hi)))
            .unwrap_or_else(|| "none".into());
        println!("{}: best window by d' {best}", g.group);
    }
    match &search.target.consensus {
        Some(ranges) => {
            let parts: Vec<String> = ranges
                .iter()
                .map(|r| format!("[{}, {}]", sig6(r[0]), sig6(r[1])))
                .collect();
            println!("consensus {}", parts.join(" "));
        }
        None => println!("consensus undefined: no window meets the genuine-pair minimum"),
    }
    Ok(())
}

fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(facelight_core::audit::round_sig6)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn export_dist(cfg: &AuditConfig, selectors: &[String]) -> Result<()> {
    let out = require(&cfg.paths.out, "out")?;
    let mut m = measured(cfg)?;
    note_warnings(&m);
    let loaded = load_source(cfg, &mut m.digests)?;
    let source = loaded.source().ok_or_else(no_source)?;
    let scheme = pooled_scheme(cfg, &m.metrics)?;
    let cats = categories(&scheme, &m.metrics);
    let scorer = source.scorer(&m.records)?;
    let space = PairSpace::new(&m.records, cfg.impostor_scope);
    // Densities do not depend on the threshold.
    let acc = accumulate(
        &m.records,
        &space,
        &scorer,
        &cats,
        f64::INFINITY,
        cfg.histogram,
        &cfg.engine(),
    )?;
    let chosen: Vec<BucketSelector> = if selectors.is_empty() {
        default_selectors(&acc.buckets, cfg.export_distributions)
    } else {
        selectors.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let exports = export_distributions(&acc.buckets, &chosen)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for e in &exports {
        write_distribution_csv(&out.join(e.file_name()), e)?;
        println!("{} {} scores -> {}", e.selector, e.total, e.file_name());
    }
    Ok(())
}
