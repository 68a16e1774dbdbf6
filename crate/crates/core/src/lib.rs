//! Face-skin brightness measurement and pair-brightness accuracy auditing.
//!
//! The pipeline measures how bright the recognition-relevant skin region of
//! each face image is, sorts images into five exposure bands, and then asks
//! how false-match rate and genuine/impostor separation change with the
//! brightness of the *pair* of images being compared, per demographic group.
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: manifests, images, label maps, embeddings, score tables
//! - [`skinregion`]: skin mask from a face-parsing label map
//! - [`brightness`]: FSB, BIM, exposure categories, sliding windows
//! - [`pairs`]: pair engine, threshold calibration, FMR and d'
//! - [`audit`]: end-to-end run and report products
//! - [`synth`]: synthetic datasets with planted brightness effects

pub mod audit;
pub mod brightness;
pub mod error;
pub mod ingest;
pub mod pairs;
pub mod skinregion;
pub mod synth;

pub use crate::brightness::{BrightnessProfile, CategoryScheme, ExposureCategory};
pub use crate::error::{Error, Result};
pub use crate::ingest::{EmbeddingStore, GrayImage, ImageRecord, LabelMap, ScoreTable};
pub use crate::pairs::{PairKey, PairKind, PairStats, Threshold};
pub use crate::skinregion::SkinMask;
