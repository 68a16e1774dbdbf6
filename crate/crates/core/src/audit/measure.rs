//! Per-image brightness measurement and the FSB/BIM CSV cache.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::brightness::{compute_fsb, ExposureCategory};
use crate::error::{Error, Result};
use crate::ingest::{load_gray_image, load_label_map, GrayImage, ImageRecord, LabelMap, LabelSemantics};
use crate::skinregion::{derive_skin_mask, MaskWarning};

/// The two per-image numbers the audit needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub fsb: f64,
    pub bim: f64,
}

/// Supplies the grayscale image and label map for a record.
pub trait ImageProvider: Sync {
    fn load(&self, record: &ImageRecord) -> Result<(GrayImage, LabelMap)>;
}

/// Reads images and label maps from the paths in each record.
pub struct FileImages {
    pub semantics: LabelSemantics,
}

impl ImageProvider for FileImages {
    fn load(&self, record: &ImageRecord) -> Result<(GrayImage, LabelMap)> {
        Ok((
            load_gray_image(&record.image_path)?,
            load_label_map(&record.mask_path, &self.semantics)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Measurements {
    /// Per record, `None` when the image was excluded.
    pub metrics: Vec<Option<ImageMetrics>>,
    pub exclusions: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

/// Measures every record in parallel. Images whose skin mask is empty are
/// excluded and logged; any other failure aborts.
pub fn measure_images(records: &[ImageRecord], provider: &dyn ImageProvider) -> Result<Measurements> {
    let results: Vec<Result<(Option<ImageMetrics>, Option<String>)>> = records
        .par_iter()
        .map(|rec| {
            let (image, labels) = provider.load(rec)?;
            if (image.width(), image.height()) != (labels.width(), labels.height()) {
                return Err(Error::DimensionMismatch(format!(
                    "image `{}` is {}x{} but its label map is {}x{}",
                    rec.image_id,
                    image.width(),
                    image.height(),
                    labels.width(),
                    labels.height()
                )));
            }
            let mask = match derive_skin_mask(&labels) {
                Ok(m) => m,
                Err(Error::EmptyMask) => return Ok((None, None)),
                Err(e) => return Err(e),
            };
            let warning = mask
                .warnings()
                .contains(&MaskWarning::NoNose)
                .then(|| format!("image `{}`: no nose pixels, below-nose cutoff skipped", rec.image_id));
            let p = compute_fsb(&rec.image_id, &image, &mask)?;
            Ok((Some(ImageMetrics { fsb: p.fsb, bim: p.bim }), warning))
        })
        .collect();

    let mut out = Measurements::default();
    for (rec, r) in records.iter().zip(results) {
        let (m, warning) = r?;
        if m.is_none() {
            out.exclusions.push(Exclusion {
                image_id: rec.image_id.clone(),
                reason: "empty skin mask".into(),
            });
        }
        out.metrics.push(m);
        out.warnings.extend(warning);
    }
    Ok(out)
}

/// Writes `image_id,group,fsb,bim,category` rows for measured images.
pub fn write_fsb_csv(
    path: impl AsRef<Path>,
    records: &[ImageRecord],
    metrics: &[Option<ImageMetrics>],
    categories: &[Option<ExposureCategory>],
) -> Result<()> {
    let rows: Vec<FsbRow> = records
        .iter()
        .enumerate()
        .filter_map(|(i, rec)| {
            metrics[i].map(|m| FsbRow {
                image_id: rec.image_id.clone(),
                group: rec.group.clone(),
                metrics: m,
                category: categories.get(i).copied().flatten(),
            })
        })
        .collect();
    write_fsb_rows(path, &rows)
}

/// Writes rows in the format read by [`read_fsb_rows`]. Values are written
/// in full precision so a cache reproduces the measurement exactly.
pub fn write_fsb_rows(path: impl AsRef<Path>, rows: &[FsbRow]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["image_id", "group", "fsb", "bim", "category"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.image_id.as_str(),
            row.group.as_str(),
            &row.metrics.fsb.to_string(),
            &row.metrics.bim.to_string(),
            row.category.map(|c| c.code()).unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_fsb_csv`] and aligns it with `records`.
/// Records absent from the file come back as `None`.
pub fn load_fsb_csv(path: impl AsRef<Path>, records: &[ImageRecord]) -> Result<Vec<Option<ImageMetrics>>> {
    let path = path.as_ref();
    let rows = read_fsb_rows(path)?;
    let position: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    let mut out = vec![None; records.len()];
    for row in rows {
        let &i = position
            .get(row.image_id.as_str())
            .ok_or_else(|| Error::UnknownImage(row.image_id.clone()))?;
        out[i] = Some(row.metrics);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsbRow {
    pub image_id: String,
    pub group: String,
    pub metrics: ImageMetrics,
    pub category: Option<ExposureCategory>,
}

pub fn read_fsb_rows(path: impl AsRef<Path>) -> Result<Vec<FsbRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["image_id", "group", "fsb", "bim", "category"] {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: "image_id,group,fsb,bim,category".into(),
            found: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, what: &str| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{what} `{}` is not a number", &rec[i]),
            })
        };
        rows.push(FsbRow {
            image_id: rec[0].to_string(),
            group: rec[1].to_string(),
            metrics: ImageMetrics {
                fsb: num(2, "fsb")?,
                bim: num(3, "bim")?,
            },
            category: match &rec[4] {
                "" => None,
                c => Some(c.parse()?),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl ImageProvider for Fixed {
        fn load(&self, rec: &ImageRecord) -> Result<(GrayImage, LabelMap)> {
            let sem = LabelSemantics::default();
            let labels = if rec.image_id == "blank" {
                vec![0; 4]
            } else {
                vec![1; 4]
            };
            Ok((
                GrayImage::new(2, 2, vec![10, 20, 30, 40]).unwrap(),
                LabelMap::new(2, 2, labels, sem).unwrap(),
            ))
        }
    }

    fn rec(id: &str) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            subject_id: "s".into(),
            group: "G".into(),
            image_path: "i".into(),
            mask_path: "m".into(),
            embedding_index: None,
        }
    }

    #[test]
    fn excludes_empty_masks() {
        let recs = [rec("a"), rec("blank")];
        let m = measure_images(&recs, &Fixed).unwrap();
        assert_eq!(m.metrics[0], Some(ImageMetrics { fsb: 25.0, bim: 10.0 }));
        assert_eq!(m.metrics[1], None);
        assert_eq!(m.exclusions[0].image_id, "blank");
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fsb.csv");
        let recs = [rec("a"), rec("b")];
        let metrics = [Some(ImageMetrics { fsb: 12.25, bim: 3.5 }), None];
        write_fsb_csv(&p, &recs, &metrics, &[Some(ExposureCategory::Middle), None]).unwrap();
        assert_eq!(load_fsb_csv(&p, &recs).unwrap(), metrics.to_vec());
        assert_eq!(read_fsb_rows(&p).unwrap()[0].category, Some(ExposureCategory::Middle));
    }
}
