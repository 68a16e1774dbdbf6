//! End-to-end audit: configuration, measurement, the pair-brightness tables,
//! the target-range search and the files written for a run.

mod config;
mod export;
mod format;
mod measure;
mod report;
mod run;
mod target;

pub use self::config::{AuditConfig, DistributionSelection, InputPaths, SchemeMode};
pub use self::export::{
    default_selectors, export_distributions, report_json, write_distribution_csv, write_fsb_histogram,
    write_report_dir, write_sliding_csv, AuditArtifacts, BucketSelector, DensityRow, DistributionExport,
};
pub use self::format::{round_sig6, sig6};
pub use self::measure::{
    load_fsb_csv, measure_images, read_fsb_rows, write_fsb_csv, write_fsb_rows, Exclusion, FileImages, FsbRow,
    ImageMetrics, ImageProvider, Measurements,
};
pub use self::report::{
    digest_file, AuditReport, BimCell, CategoryCounts, DistributionHandle, FmrCell, InputDigest, OverallRow, Provenance,
};
pub use self::run::{run_audit, AuditInput, AuditOutcome, ScoreSource, SourceScorer};
pub use self::target::{
    coverage_fraction, summarize_windows, target_range_search, union_intervals, GroupTarget, SlidingCell, TargetRange,
    TargetSearch, WindowLayout, WindowRef, WindowSink,
};
