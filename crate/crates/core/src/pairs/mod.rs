//! Pair enumeration, scoring, threshold calibration and per-bucket
//! statistics.

mod dprime;
mod engine;
mod key;
mod saturation;
mod score;
mod space;
mod stats;
mod threshold;

pub use self::dprime::{d_prime, DPrimeUndefined};
pub use self::engine::{
    accumulate, eligibility, run_pairs, Accumulated, BucketContext, BucketSink, EngineOptions, PairBuckets, PairSink,
    PairTally,
};
pub use self::key::{CategoryPair, PairKey, PairKind, CATEGORY_PAIRS};
pub use self::saturation::{saturation_report, SaturationRow, DEFAULT_SATURATION_FRACTION};
pub use self::score::{cosine_score, EmbeddingScorer, Scorer, TableScorer};
pub use self::space::{enumerate_pairs, GroupIndex, ImpostorScope, PairSpace, PairStream};
pub use self::stats::{fmr, is_match, HistogramSpec, Moments, PairStats, ScoreHistogram, ScoreMoments};
pub use self::threshold::{calibrate_threshold, Threshold, ThresholdCalibrator, DEFAULT_TARGET_FMR};
