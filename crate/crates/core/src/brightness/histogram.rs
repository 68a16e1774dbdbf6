use crate::error::{Error, Result};
use crate::ingest::GrayImage;
use crate::skinregion::SkinMask;

/// Skin-pixel counts per 8-bit intensity level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrightnessHistogram {
    bins: [u64; 256],
    total: u64,
}

impl Default for BrightnessHistogram {
    fn default() -> Self {
        Self {
            bins: [0; 256],
            total: 0,
        }
    }
}

impl BrightnessHistogram {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        Self {
            total: bins.iter().sum(),
            bins,
        }
    }

    pub fn from_intensities(values: impl IntoIterator<Item = u8>) -> Self {
        let mut h = Self::default();
        for v in values {
            h.add(v, 1);
        }
        h
    }

    pub fn add(&mut self, level: u8, count: u64) {
        self.bins[level as usize] += count;
        self.total += count;
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Sum of intensities over all counted pixels.
    pub fn intensity_sum(&self) -> u64 {
        self.bins.iter().enumerate().map(|(i, &c)| i as u64 * c).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| self.intensity_sum() as f64 / self.total as f64)
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn occupied_levels(&self) -> usize {
        self.bins.iter().filter(|&&c| c > 0).count()
    }
}

/// Per-image brightness measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct BrightnessProfile {
    pub image_id: String,
    pub fsb: f64,
    pub histogram: BrightnessHistogram,
    pub bim: f64,
}

/// Face-skin brightness: mean intensity over the mask, plus the mask's
/// intensity histogram and its BIM.
pub fn compute_fsb(image_id: &str, image: &GrayImage, mask: &SkinMask) -> Result<BrightnessProfile> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, mask is {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if mask.pixel_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let histogram = BrightnessHistogram::from_intensities(
        image
            .pixels()
            .iter()
            .zip(mask.included())
            .filter(|(_, &inc)| inc)
            .map(|(&p, _)| p),
    );
    // Both sums are exact integers; a single division rounds once.
    let fsb = histogram.intensity_sum() as f64 / histogram.total() as f64;
    let bim = compute_bim(&histogram)?;
    Ok(BrightnessProfile {
        image_id: image_id.to_string(),
        fsb,
        histogram,
        bim,
    })
}

/// Brightness information metric: the probability-weighted mean absolute
/// deviation of skin intensities from their mean, `sum |i - mean| * P(i)`
/// over the 256 levels.
pub fn compute_bim(histogram: &BrightnessHistogram) -> Result<f64> {
    let mean = histogram.mean().ok_or(Error::EmptyHistogram)?;
    let total = histogram.total() as f64;
    Ok(histogram
        .bins()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i as f64 - mean).abs() * (c as f64 / total))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_mask(w: u32, h: u32) -> SkinMask {
        SkinMask::from_included(w, h, vec![true; (w * h) as usize]).unwrap()
    }

    #[test]
    fn constant_image() {
        let img = GrayImage::filled(5, 4, 128);
        let p = compute_fsb("x", &img, &full_mask(5, 4)).unwrap();
        assert_eq!(p.fsb, 128.0);
        assert_eq!(p.histogram.bins()[128], 20);
        assert_eq!(p.bim, 0.0);
    }

    #[test]
    fn partial_mask_mean() {
        let img = GrayImage::new(3, 2, vec![100, 110, 255, 120, 130, 0]).unwrap();
        let mask = SkinMask::from_included(3, 2, vec![true, true, false, true, true, false]).unwrap();
        let p = compute_fsb("x", &img, &mask).unwrap();
        assert_eq!(p.fsb, 115.0);
        assert_eq!(p.histogram.total(), 4);
    }

    #[test]
    fn empty_mask_and_mismatch() {
        let img = GrayImage::filled(2, 2, 9);
        let empty = SkinMask::from_included(2, 2, vec![false; 4]).unwrap();
        assert!(matches!(compute_fsb("x", &img, &empty), Err(Error::EmptyMask)));
        assert!(matches!(
            compute_fsb("x", &img, &full_mask(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn bim_examples() {
        let h = BrightnessHistogram::from_intensities([100, 200, 100, 200]);
        assert_eq!(h.mean(), Some(150.0));
        assert_eq!(compute_bim(&h).unwrap(), 50.0);
        let h = BrightnessHistogram::from_intensities([0, 255]);
        assert_eq!(compute_bim(&h).unwrap(), 127.5);
        assert!(matches!(
            compute_bim(&BrightnessHistogram::default()),
            Err(Error::EmptyHistogram)
        ));
    }
}
