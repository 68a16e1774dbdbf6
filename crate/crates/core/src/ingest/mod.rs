//! Loading and validating dataset inputs.

mod embeddings;
mod image;
mod manifest;
mod scores;

pub use self::embeddings::{decode_matrix, encode_matrix, load_embeddings, write_embeddings, EmbeddingStore};
pub use self::image::{load_gray_image, load_label_map, rec601_luma, region, GrayImage, LabelMap, LabelSemantics};
pub use self::manifest::{check_groups, distinct_groups, load_manifest, parse_manifest, write_manifest, ImageRecord};
pub use self::scores::{load_scores, ScoreEntry, ScoreTable};
