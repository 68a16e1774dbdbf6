use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facelight_core::synth::{generate, SynthConfig, SynthGroup, SynthPaths};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn facelight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facelight"))
        .args(args)
        .env_remove("FACELIGHT_CONFIG")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dataset(dir: &Path) -> SynthPaths {
    generate(&SynthConfig {
        groups: ["CF", "CM"]
            .iter()
            .map(|g| SynthGroup::new(g, 40, 5, 175.0, 35.0))
            .collect(),
        ..SynthConfig::default()
    })
    .unwrap()
    .write_to(dir.join("data"))
    .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let out = facelight(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "fsb",
        "bim",
        "categorize",
        "stats",
        "audit",
        "target-range",
        "export-dist",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
    assert_eq!(code(&facelight(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&facelight(&["audit", "--no-such-flag"])), 1);
    assert_eq!(code(&facelight(&[])), 1);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = facelight(&["fsb", "--manifest", s(&missing), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = facelight(&["categorize", "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--fsb"));
    let out = facelight(&["stats", "--set", "no_such_key=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn categorize_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let (out, scheme) = (dir.path().join("cat.csv"), dir.path().join("scheme.json"));
    let run = facelight(&[
        "categorize",
        "--fsb",
        s(&golden("fsb20.csv")),
        "--out",
        s(&out),
        "--scheme-out",
        s(&scheme),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(
        fs::read_to_string(out).unwrap(),
        fs::read_to_string(golden("categorized.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(scheme).unwrap(),
        fs::read_to_string(golden("scheme.json")).unwrap()
    );
}

#[test]
fn audit_pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dataset(dir.path());
    let fsb = dir.path().join("fsb.csv");
    let run = facelight(&["fsb", "--manifest", s(&p.manifest), "--out", s(&fsb)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let lines = fs::read_to_string(&fsb).unwrap();
    assert_eq!(lines.lines().next().unwrap(), "image_id,group,fsb,bim,category");
    assert_eq!(lines.lines().count(), 401);

    let audit = |out: &str, threads: &str, cache: bool| {
        let out = dir.path().join(out);
        let mut args = vec!["audit", "--manifest", s(&p.manifest), "--embeddings", s(&p.embeddings)];
        args.extend(["--ids", s(&p.ids), "--threads", threads, "--out", s(&out)]);
        if cache {
            args.extend(["--fsb-cache", s(&fsb)]);
        }
        let run = facelight(&args);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        out
    };
    let a = audit("a", "1", false);
    let b = audit("b", "2", false);
    for f in [
        "report.json",
        "report.txt",
        "fmr_table.csv",
        "bim_table.csv",
        "sliding_table.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert!(a.join("run_meta.json").exists());
    let fmr = fs::read_to_string(a.join("fmr_table.csv")).unwrap();
    assert_eq!(fmr.lines().count(), 1 + 2 * 15);

    // metrics read back from the FSB cache give the same tables
    let c = audit("c", "1", true);
    assert_eq!(
        fs::read(a.join("fmr_table.csv")).unwrap(),
        fs::read(c.join("fmr_table.csv")).unwrap()
    );
}

#[test]
fn config_file_from_env_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dataset(dir.path());
    let config = dir.path().join("facelight.conf");
    fs::write(
        &config,
        "# audit settings\ncalibration_group = NOPE\ntarget_fmr = 1e-3\n",
    )
    .unwrap();
    let base = [
        "audit",
        "--manifest",
        s(&p.manifest),
        "--embeddings",
        s(&p.embeddings),
        "--ids",
        s(&p.ids),
    ];
    let with_env = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_facelight"))
            .args(base)
            .args(extra)
            .env("FACELIGHT_CONFIG", &config)
            .output()
            .unwrap()
    };
    let out_dir = dir.path().join("out");
    let run = with_env(&["--out", s(&out_dir)]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("NOPE"), "{}", stderr(&run));

    let run = with_env(&["--out", s(&out_dir), "--calibration-group", "CF"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["threshold"]["calibration_group"], "CF");
    assert_eq!(report["threshold"]["target_fmr"], 1e-3);
}

#[test]
fn target_range_and_export_dist_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dataset(dir.path());
    let scores = [
        "--manifest",
        s(&p.manifest),
        "--embeddings",
        s(&p.embeddings),
        "--ids",
        s(&p.ids),
    ];
    let tr = dir.path().join("tr");
    let mut args = vec!["target-range"];
    args.extend(scores);
    args.extend([
        "--lo",
        "100",
        "--hi",
        "250",
        "--window",
        "40",
        "--step",
        "10",
        "--min-genuine",
        "10",
        "--out",
        s(&tr),
    ]);
    let run = facelight(&args);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let sliding = fs::read_to_string(tr.join("sliding_table.csv")).unwrap();
    // 12 windows per group
    assert_eq!(sliding.lines().count(), 1 + 2 * 12);
    assert!(tr.join("target_range.json").exists());

    let ed = dir.path().join("ed");
    let mut args = vec!["export-dist"];
    args.extend(scores);
    args.extend([
        "--bucket",
        "CM:M-M:impostor",
        "--bucket",
        "CF:M-M:genuine",
        "--out",
        s(&ed),
    ]);
    let run = facelight(&args);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let csv = fs::read_to_string(ed.join("CM_M-M_impostor.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "bin_low,bin_high,count,density");
    assert!(ed.join("CF_M-M_genuine.csv").exists());

    let mut args = vec!["export-dist"];
    args.extend(scores);
    args.extend(["--bucket", "ZZ:M-M:impostor", "--out", s(&ed)]);
    assert_eq!(code(&facelight(&args)), 2);
}
