//! `facelight`: face-skin brightness measurement and pair-brightness audits.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for usage errors.
const EXIT_USAGE: u8 = 1;
/// Exit status for bad input, configuration or validation failures.
const EXIT_INPUT: u8 = 2;
/// Exit status when an internal consistency check fails.
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "facelight",
    version,
    about = "Face-skin brightness measurement and pair-brightness accuracy audits"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Config file of `key = value` lines. Flags override its values.
    #[arg(long, global = true, env = "FACELIGHT_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Set any config key, e.g. `--set min_support=1000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Where images and their measurements come from.
#[derive(Args, Debug, Default)]
pub struct ImageInputs {
    /// Manifest CSV: image_id,subject_id,group,image_path,mask_path[,embedding_index].
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// FSB/BIM CSV from `facelight fsb`; skips image loading.
    #[arg(long, value_name = "FILE")]
    pub fsb_cache: Option<PathBuf>,
    /// Declared groups, comma separated [default: groups in the manifest].
    #[arg(long, value_name = "LIST")]
    pub groups: Option<String>,
}

/// Where pair scores come from.
#[derive(Args, Debug, Default)]
pub struct ScoreInputs {
    /// Binary embedding matrix.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// One image id per embedding row.
    #[arg(long, value_name = "FILE")]
    pub ids: Option<PathBuf>,
    /// Precomputed scores CSV: image_id_a,image_id_b,score.
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// L2-normalize embeddings on load.
    #[arg(long, value_name = "BOOL")]
    pub normalize: Option<bool>,
    /// Compare pairs within each group or across the whole dataset.
    #[arg(long, value_name = "SCOPE", value_parser = ["within_group", "cross_group"])]
    pub impostor_scope: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Measure per-image FSB and BIM and write them with exposure categories.
    Fsb {
        #[command(flatten)]
        inputs: ImageInputs,
        /// Output CSV: image_id,group,fsb,bim,category.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write each image's skin mask as a PNG into this directory.
        #[arg(long, value_name = "DIR")]
        mask_dir: Option<PathBuf>,
        /// Category cut points, four comma-separated percentiles.
        #[arg(long, value_name = "P5,P15,P85,P95")]
        percentiles: Option<String>,
    },
    /// Average BIM per group and exposure category.
    Bim {
        #[command(flatten)]
        inputs: ImageInputs,
        /// Output CSV [default: stdout].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "P5,P15,P85,P95")]
        percentiles: Option<String>,
    },
    /// Fit the exposure scheme on an FSB CSV and assign categories.
    Categorize {
        /// FSB CSV to categorize.
        #[arg(long, value_name = "FILE")]
        fsb: Option<PathBuf>,
        /// Output CSV with the category column filled.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write the fitted boundaries as JSON.
        #[arg(long, value_name = "FILE")]
        scheme_out: Option<PathBuf>,
        #[arg(long, value_name = "P5,P15,P85,P95")]
        percentiles: Option<String>,
    },
    /// Per-group FSB count, mean and standard deviation.
    Stats {
        #[command(flatten)]
        inputs: ImageInputs,
        /// Output CSV [default: stdout].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write hist_<group>.csv FSB histograms into this directory.
        #[arg(long, value_name = "DIR")]
        hist_dir: Option<PathBuf>,
    },
    /// Run the full audit and write the report directory.
    Audit {
        #[command(flatten)]
        inputs: ImageInputs,
        #[command(flatten)]
        scores: ScoreInputs,
        /// Group whose impostor scores fix the threshold.
        #[arg(long, value_name = "GROUP")]
        calibration_group: Option<String>,
        /// False-match rate the threshold is calibrated to.
        #[arg(long, value_name = "RATE")]
        target_fmr: Option<f64>,
        /// Impostor pairs below which a cell is flagged low-support.
        #[arg(long, value_name = "N")]
        min_support: Option<u64>,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Sliding-window search for the brightness range with the best separation.
    TargetRange {
        #[command(flatten)]
        inputs: ImageInputs,
        #[command(flatten)]
        scores: ScoreInputs,
        /// Window width in FSB levels.
        #[arg(long, value_name = "WIDTH")]
        window: Option<f64>,
        /// Offset between consecutive windows.
        #[arg(long, value_name = "STEP")]
        step: Option<f64>,
        /// Lower end of the searched span [default: lower edge of the M band].
        #[arg(long, value_name = "FSB")]
        lo: Option<f64>,
        /// Upper end of the searched span [default: upper edge of the M band].
        #[arg(long, value_name = "FSB")]
        hi: Option<f64>,
        /// Genuine pairs a window needs to compete for the best window.
        #[arg(long, value_name = "N")]
        min_genuine: Option<u64>,
        /// Output directory for sliding_table.csv and target_range.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Export genuine/impostor score densities for chosen buckets.
    ExportDist {
        #[command(flatten)]
        inputs: ImageInputs,
        #[command(flatten)]
        scores: ScoreInputs,
        /// Bucket as GROUP:CAT-CAT:genuine|impostor, e.g. CM:SU-SU:impostor.
        /// Repeatable [default: per `export_distributions` config].
        #[arg(long = "bucket", value_name = "SELECTOR")]
        buckets: Vec<String>,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let internal = err
                .downcast_ref::<facelight_core::Error>()
                .is_some_and(facelight_core::Error::is_internal);
            if internal {
                eprintln!("internal error: {err:#}");
                eprintln!("this is a bug; please report it with the input that triggered it");
                ExitCode::from(EXIT_INTERNAL)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(EXIT_INPUT)
            }
        }
    }
}
