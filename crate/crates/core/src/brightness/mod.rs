//! Face-skin brightness (FSB), brightness information (BIM), exposure
//! categories and sliding brightness windows.

mod category;
mod histogram;
mod stats;
mod windows;

pub use self::category::{
    categorize, fit_category_scheme, nearest_rank, CategoryScheme, ExposureCategory, DEFAULT_PERCENTILES,
    MIN_SCHEME_SAMPLES,
};
pub use self::histogram::{compute_bim, compute_fsb, BrightnessHistogram, BrightnessProfile};
pub use self::stats::{group_stats, summarize_groups, GroupStats};
pub use self::windows::{sliding_windows, BrightnessWindow, WindowSpec};
