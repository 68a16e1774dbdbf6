//! Synthetic datasets with a planted brightness effect.
//!
//! Each image gets a nominal skin brightness drawn from its group's normal
//! distribution. A small face-like label map is painted (skin, brows, eyes,
//! nose, lips, background) and skin pixels are set to the nominal brightness
//! plus uniform noise whose spread is largest at `info_peak`, so BIM peaks
//! there too. FSB is then measured from the rendered image exactly as the
//! pipeline would.
//!
//! The embedding of an image with measured brightness `b` is
//!
//! ```text
//! e = a(b) * u_subject + t(b) * v_shared + noise * n
//! a(b) = identity_min + (identity_max - identity_min) * exp(-((b - info_peak) / info_width)^2 / 2)
//! z    = clamp((b - shared_center) / shared_scale, -1, 1)
//! t(b) = shared_strength * sign(z) * |z|^shared_power
//! ```
//!
//! with `u_subject` a random unit vector per subject, `v_shared` one unit
//! vector for the whole dataset and `n` standard normal noise scaled by
//! `1/sqrt(dim)`. Far from the centre the shared term grows: two dark images
//! (or two bright ones) look alike regardless of identity, while a dark and a
//! bright image are pushed apart. Identity strength is highest near
//! `info_peak`, so separation is best there.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::audit::{ImageMetrics, ImageProvider};
use crate::brightness::compute_fsb;
use crate::error::{Error, Result};
use crate::ingest::{
    write_embeddings, write_manifest, EmbeddingStore, GrayImage, ImageRecord, LabelMap, LabelSemantics,
};
use crate::skinregion::derive_skin_mask;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGroup {
    pub name: String,
    pub subjects: usize,
    pub images_per_subject: usize,
    pub fsb_mean: f64,
    pub fsb_std: f64,
}

impl SynthGroup {
    pub fn new(name: &str, subjects: usize, images_per_subject: usize, fsb_mean: f64, fsb_std: f64) -> Self {
        Self {
            name: name.to_string(),
            subjects,
            images_per_subject,
            fsb_mean,
            fsb_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub groups: Vec<SynthGroup>,
    pub dim: usize,
    /// Side length of the square images; at least 16.
    pub image_size: u32,
    pub seed: u64,
    pub info_peak: f64,
    pub info_width: f64,
    pub identity_min: f64,
    pub identity_max: f64,
    pub shared_center: f64,
    pub shared_scale: f64,
    pub shared_strength: f64,
    pub shared_power: f64,
    pub noise: f64,
    /// Half-width of the uniform skin-pixel noise, at the peak and far from it.
    pub pixel_spread_max: f64,
    pub pixel_spread_min: f64,
}

impl Default for SynthConfig {
    /// Four groups of 1,250 images (250 subjects with 5 images each).
    fn default() -> Self {
        Self {
            groups: vec![
                SynthGroup::new("AAF", 250, 5, 174.0, 35.0),
                SynthGroup::new("AAM", 250, 5, 173.0, 35.0),
                SynthGroup::new("CF", 250, 5, 177.0, 35.0),
                SynthGroup::new("CM", 250, 5, 176.0, 35.0),
            ],
            dim: 16,
            image_size: 16,
            seed: 7,
            info_peak: 175.0,
            info_width: 40.0,
            identity_min: 0.32,
            identity_max: 2.2,
            shared_center: 175.0,
            shared_scale: 140.0,
            shared_strength: 1.8,
            shared_power: 0.6,
            noise: 1.0,
            pixel_spread_max: 40.0,
            pixel_spread_min: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn image_count(&self) -> usize {
        self.groups.iter().map(|g| g.subjects * g.images_per_subject).sum()
    }

    fn identity(&self, b: f64) -> f64 {
        let z = (b - self.info_peak) / self.info_width;
        self.identity_min + (self.identity_max - self.identity_min) * (-0.5 * z * z).exp()
    }

    fn shared(&self, b: f64) -> f64 {
        let z = ((b - self.shared_center) / self.shared_scale).clamp(-1.0, 1.0);
        self.shared_strength * z.signum() * z.abs().powf(self.shared_power)
    }

    fn pixel_spread(&self, b: f64) -> f64 {
        let z = (b - self.info_peak) / self.info_width;
        self.pixel_spread_min + (self.pixel_spread_max - self.pixel_spread_min) * (-0.5 * z * z).exp()
    }
}

/// Label indices used by the painted maps; they match the default semantics.
mod paint {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const LEFT_BROW: u8 = 2;
    pub const RIGHT_BROW: u8 = 3;
    pub const LEFT_EYE: u8 = 4;
    pub const RIGHT_EYE: u8 = 5;
    pub const NOSE: u8 = 10;
    pub const MOUTH: u8 = 11;
    pub const UPPER_LIP: u8 = 12;
    pub const LOWER_LIP: u8 = 13;
}

/// Face layout on a `size x size` grid, scaled from a 16x16 template.
fn face_labels(size: u32) -> Vec<u8> {
    let s = size as usize;
    let at = |v: usize| v * s / 16;
    let mut labels = vec![paint::BACKGROUND; s * s];
    let mut fill = |r0: usize, r1: usize, c0: usize, c1: usize, v: u8| {
        for r in at(r0)..at(r1) {
            for c in at(c0)..at(c1) {
                labels[r * s + c] = v;
            }
        }
    };
    fill(1, 15, 1, 15, paint::SKIN);
    fill(3, 4, 3, 6, paint::LEFT_BROW);
    fill(3, 4, 10, 13, paint::RIGHT_BROW);
    fill(4, 5, 3, 6, paint::LEFT_EYE);
    fill(4, 5, 10, 13, paint::RIGHT_EYE);
    fill(6, 10, 7, 9, paint::NOSE);
    fill(11, 12, 5, 11, paint::UPPER_LIP);
    fill(12, 13, 7, 9, paint::MOUTH);
    fill(13, 14, 5, 11, paint::LOWER_LIP);
    labels
}

/// An in-memory dataset. Images are kept so it can serve as an
/// [`ImageProvider`] without touching the disk.
pub struct SynthDataset {
    pub records: Vec<ImageRecord>,
    pub images: Vec<GrayImage>,
    pub labels: Vec<LabelMap>,
    /// Measured FSB/BIM per record.
    pub metrics: Vec<ImageMetrics>,
    pub embeddings: EmbeddingStore,
    position: HashMap<String, usize>,
}

/// Builds a dataset from `config`. The same config always yields the same
/// dataset.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    if config.image_size < 16 || config.dim == 0 {
        return Err(Error::Config("synthetic images need size >= 16 and dim > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    };
    let shared_dir = unit(&mut rng);
    let template = face_labels(config.image_size);
    let semantics = LabelSemantics::default();
    let noise_scale = config.noise / (dim as f64).sqrt();

    let n = config.image_count();
    let mut records = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut metrics = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n * dim);
    for group in &config.groups {
        let brightness = Normal::new(group.fsb_mean, group.fsb_std)
            .map_err(|e| Error::Config(format!("group `{}`: {e}", group.name)))?;
        for s in 0..group.subjects {
            let subject = format!("{}-s{s:04}", group.name);
            let identity = unit(&mut rng);
            for k in 0..group.images_per_subject {
                let id = format!("{subject}-{k:02}");
                let nominal: f64 = brightness.sample(&mut rng).clamp(8.0, 247.0);
                let spread = config.pixel_spread(nominal);
                let pixels: Vec<u8> = template
                    .iter()
                    .map(|&l| {
                        let v = match l {
                            paint::BACKGROUND => 20.0,
                            paint::LEFT_EYE | paint::RIGHT_EYE | paint::LEFT_BROW | paint::RIGHT_BROW => nominal * 0.3,
                            paint::UPPER_LIP | paint::LOWER_LIP | paint::MOUTH => nominal * 0.7,
                            _ => nominal + spread * rng.random_range(-1.0..=1.0),
                        };
                        v.round().clamp(0.0, 255.0) as u8
                    })
                    .collect();
                let image = GrayImage::new(config.image_size, config.image_size, pixels)?;
                let label_map = LabelMap::new(
                    config.image_size,
                    config.image_size,
                    template.clone(),
                    semantics.clone(),
                )?;
                let mask = derive_skin_mask(&label_map)?;
                let profile = compute_fsb(&id, &image, &mask)?;
                let b = profile.fsb;

                let (a, t) = (config.identity(b), config.shared(b));
                for j in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    rows.push((a * identity[j] + t * shared_dir[j] + noise_scale * z) as f32);
                }
                records.push(ImageRecord {
                    image_id: id,
                    subject_id: subject.clone(),
                    group: group.name.clone(),
                    image_path: PathBuf::from(format!("images/{subject}-{k:02}.png")),
                    mask_path: PathBuf::from(format!("masks/{subject}-{k:02}.png")),
                    embedding_index: None,
                });
                images.push(image);
                labels.push(label_map);
                metrics.push(ImageMetrics {
                    fsb: b,
                    bim: profile.bim,
                });
            }
        }
    }
    let ids = records.iter().map(|r| r.image_id.clone()).collect();
    let embeddings = EmbeddingStore::from_rows(dim, rows, ids, true)?;
    let position = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.clone(), i))
        .collect();
    Ok(SynthDataset {
        records,
        images,
        labels,
        metrics,
        embeddings,
        position,
    })
}

/// Files written by [`SynthDataset::write_to`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub ids: PathBuf,
}

impl SynthDataset {
    pub fn metrics(&self) -> Vec<Option<ImageMetrics>> {
        self.metrics.iter().copied().map(Some).collect()
    }

    /// Writes PNG images and label maps, `manifest.csv`, `embeddings.bin` and
    /// `embeddings.ids` under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SynthPaths> {
        let dir = dir.as_ref();
        for sub in ["images", "masks"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for ((rec, image), labels) in self.records.iter().zip(&self.images).zip(&self.labels) {
            image.save_png(dir.join(&rec.image_path))?;
            labels.save_png(dir.join(&rec.mask_path))?;
        }
        let paths = SynthPaths {
            manifest: dir.join("manifest.csv"),
            embeddings: dir.join("embeddings.bin"),
            ids: dir.join("embeddings.ids"),
        };
        write_manifest(&paths.manifest, &self.records)?;
        write_embeddings(&self.embeddings, &paths.embeddings, &paths.ids)?;
        Ok(paths)
    }
}

impl ImageProvider for SynthDataset {
    fn load(&self, record: &ImageRecord) -> Result<(GrayImage, LabelMap)> {
        let &i = self
            .position
            .get(&record.image_id)
            .ok_or_else(|| Error::UnknownImage(record.image_id.clone()))?;
        Ok((self.images[i].clone(), self.labels[i].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::measure_images;

    fn small() -> SynthConfig {
        SynthConfig {
            groups: vec![SynthGroup::new("G", 4, 3, 150.0, 30.0)],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.embeddings.rows(), b.embeddings.rows());
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.records.len(), 12);
    }

    #[test]
    fn provider_matches_stored_metrics() {
        let d = generate(&small()).unwrap();
        let m = measure_images(&d.records, &d).unwrap();
        assert_eq!(m.metrics, d.metrics());
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn files_round_trip() {
        let d = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = d.write_to(dir.path()).unwrap();
        let records = crate::ingest::load_manifest(&paths.manifest).unwrap();
        let m = measure_images(
            &records,
            &crate::audit::FileImages {
                semantics: LabelSemantics::default(),
            },
        )
        .unwrap();
        assert_eq!(m.metrics, d.metrics());
        let store = crate::ingest::load_embeddings(&paths.embeddings, &paths.ids, false).unwrap();
        assert_eq!(store.rows(), d.embeddings.rows());
    }

    #[test]
    fn layout_has_nose_and_cut_rows() {
        let labels = face_labels(16);
        let map = LabelMap::new(16, 16, labels, LabelSemantics::default()).unwrap();
        let mask = derive_skin_mask(&map).unwrap();
        assert_eq!(mask.nose_row(), Some(9));
        assert!(mask.pixel_count() > 50);
    }
}
