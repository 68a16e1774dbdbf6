//! Recognition-relevant face-skin region.
//!
//! Starting from the `skin` label, the mask drops eyes, brows, lips, mouth
//! interior and nose, then everything below the lowest nose row (moustache
//! and beard territory).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{region, LabelMap};

/// Regions removed from the skin area.
pub const EXCLUDED_REGIONS: [&str; 8] = [
    region::LEFT_EYE,
    region::RIGHT_EYE,
    region::LEFT_BROW,
    region::RIGHT_BROW,
    region::UPPER_LIP,
    region::LOWER_LIP,
    region::MOUTH_INTERIOR,
    region::NOSE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskWarning {
    /// No nose pixels, so the below-nose cutoff was not applied.
    NoNose,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    width: u32,
    height: u32,
    included: Vec<bool>,
    pixel_count: usize,
    /// Lowest nose row, when a nose was found.
    nose_row: Option<u32>,
    warnings: Vec<MaskWarning>,
}

impl SkinMask {
    /// Builds a mask directly from a boolean buffer.
    pub fn from_included(width: u32, height: u32, included: Vec<bool>) -> Result<Self> {
        if included.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch(format!(
                "mask {width}x{height} with {} entries",
                included.len()
            )));
        }
        let pixel_count = included.iter().filter(|&&b| b).count();
        Ok(Self {
            width,
            height,
            included,
            pixel_count,
            nose_row: None,
            warnings: Vec::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn nose_row(&self) -> Option<u32> {
        self.nose_row
    }

    pub fn warnings(&self) -> &[MaskWarning] {
        &self.warnings
    }

    /// Writes the mask as a 1-bit grayscale PNG (white = included).
    pub fn save_debug_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let stride = (self.width as usize).div_ceil(8);
        let mut packed = vec![0u8; stride * self.height as usize];
        for (i, _) in self.included.iter().enumerate().filter(|(_, &b)| b) {
            let (row, col) = (i / self.width as usize, i % self.width as usize);
            packed[row * stride + col / 8] |= 0x80 >> (col % 8);
        }
        let png_err = |e: png::EncodingError| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&packed).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}

/// Derives the face-skin mask from a parsing label map.
///
/// Fails with [`Error::NoSkinRegion`] when the semantics lack `skin`, and with
/// [`Error::EmptyMask`] when nothing survives the exclusions.
pub fn derive_skin_mask(labels: &LabelMap) -> Result<SkinMask> {
    let semantics = labels.semantics();
    let skin = semantics.indices_of(region::SKIN);
    if skin.is_empty() {
        return Err(Error::NoSkinRegion);
    }
    let mut is_skin = [false; 256];
    for i in skin {
        is_skin[i as usize] = true;
    }
    let mut is_nose = [false; 256];
    for i in semantics.indices_of(region::NOSE) {
        is_nose[i as usize] = true;
    }
    // A label named both skin and excluded would be odd; exclusion wins.
    for name in EXCLUDED_REGIONS {
        for i in semantics.indices_of(name) {
            is_skin[i as usize] = false;
        }
    }

    let width = labels.width() as usize;
    let nose_row = labels
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| is_nose[l as usize])
        .map(|(i, _)| (i / width) as u32)
        .max();

    let included: Vec<bool> = labels
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| is_skin[l as usize] && nose_row.is_none_or(|cut| (i / width) as u32 <= cut))
        .collect();
    let pixel_count = included.iter().filter(|&&b| b).count();
    if pixel_count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(SkinMask {
        width: labels.width(),
        height: labels.height(),
        included,
        pixel_count,
        nose_row,
        warnings: if nose_row.is_none() {
            vec![MaskWarning::NoNose]
        } else {
            Vec::new()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LabelSemantics;
    use proptest::prelude::*;

    const BG: u8 = 0;
    const SKIN: u8 = 1;
    const L_EYE: u8 = 4;
    const NOSE: u8 = 10;
    const U_LIP: u8 = 12;

    fn map(w: u32, h: u32, labels: Vec<u8>) -> LabelMap {
        LabelMap::new(w, h, labels, LabelSemantics::default()).unwrap()
    }

    #[test]
    fn cuts_below_nose_level() {
        // 4x4 all skin, one nose pixel at row 1, col 2.
        let mut labels = vec![SKIN; 16];
        labels[4 + 2] = NOSE;
        let mask = derive_skin_mask(&map(4, 4, labels)).unwrap();
        let expected: Vec<bool> = (0..16).map(|i| i / 4 <= 1 && i != 6).collect();
        assert_eq!(mask.included(), expected.as_slice());
        assert_eq!(mask.pixel_count(), 7);
        assert_eq!(mask.nose_row(), Some(1));
        assert!(mask.warnings().is_empty());
    }

    #[test]
    fn background_only_is_empty() {
        let err = derive_skin_mask(&map(3, 3, vec![BG; 9])).unwrap_err();
        assert!(matches!(err, Error::EmptyMask));
    }

    #[test]
    fn all_skin_without_nose_warns() {
        let mask = derive_skin_mask(&map(3, 2, vec![SKIN; 6])).unwrap();
        assert_eq!(mask.pixel_count(), 6);
        assert_eq!(mask.warnings(), &[MaskWarning::NoNose]);
    }

    #[test]
    fn missing_skin_semantics() {
        let mut sem = LabelSemantics::new(Default::default());
        sem.set(0, "background");
        let m = LabelMap::new(1, 1, vec![0], sem).unwrap();
        assert!(matches!(derive_skin_mask(&m), Err(Error::NoSkinRegion)));
    }

    #[test]
    fn debug_png_round_trips() {
        let mut labels = vec![SKIN; 20];
        labels[7] = NOSE;
        labels[3] = L_EYE;
        let mask = derive_skin_mask(&map(10, 2, labels)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        mask.save_debug_png(&p).unwrap();
        let img = image::open(&p).unwrap().to_luma8();
        let back: Vec<bool> = img.pixels().map(|p| p.0[0] > 0).collect();
        assert_eq!(back, mask.included());
    }

    fn label_strategy() -> impl Strategy<Value = (u32, u32, Vec<u8>)> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            let pool = prop::sample::select(vec![BG, SKIN, SKIN, SKIN, L_EYE, NOSE, U_LIP, 2, 11, 17]);
            (Just(w), Just(h), prop::collection::vec(pool, (w * h) as usize))
        })
    }

    proptest! {
        #[test]
        fn mask_properties((w, h, labels) in label_strategy()) {
            let m = map(w, h, labels.clone());
            let sem = LabelSemantics::default();
            let Ok(mask) = derive_skin_mask(&m) else { return Ok(()); };
            let nose_max = labels.iter().enumerate().filter(|(_, &l)| l == NOSE).map(|(i, _)| i as u32 / w).max();
            prop_assert_eq!(mask.pixel_count(), mask.included().iter().filter(|&&b| b).count());
            for (i, &inc) in mask.included().iter().enumerate() {
                if !inc { continue; }
                let name = sem.name(labels[i]).unwrap();
                // subset of skin, disjoint from excluded regions
                prop_assert_eq!(name, "skin");
                prop_assert!(!EXCLUDED_REGIONS.contains(&name));
                if let Some(cut) = nose_max {
                    prop_assert!(i as u32 / w <= cut);
                }
            }
        }
    }
}
