//! Grayscale images and face-parsing label maps.

use std::collections::BTreeMap;
use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// Row-major 8-bit intensity image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.pixels[(row as usize) * (self.width as usize) + col as usize]
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Integer-rounded Rec.601 luma: round(0.299 R + 0.587 G + 0.114 B).
///
/// Computed in integer arithmetic so that halves round up exactly.
pub fn rec601_luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000) as u8
}

/// Loads an 8-bit grayscale or color PNG/JPEG. Color is converted with
/// [`rec601_luma`]; alpha is ignored.
pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (width, height) = (img.width(), img.height());
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| rec601_luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| rec601_luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(unsupported_depth(path, &other)),
    };
    GrayImage::new(width, height, pixels)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let image_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(e.to_string()))
}

fn unsupported_depth(path: &Path, img: &DynamicImage) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: format!("unsupported bit depth ({:?}); expected 8-bit samples", img.color()),
    }
}

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    let expected = (width as usize) * (height as usize);
    if expected != len {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} needs {expected} pixels, buffer has {len}"
        )));
    }
    Ok(())
}

/// Canonical region names understood by the skin-region rules.
pub mod region {
    pub const SKIN: &str = "skin";
    pub const NOSE: &str = "nose";
    pub const LEFT_EYE: &str = "left_eye";
    pub const RIGHT_EYE: &str = "right_eye";
    pub const LEFT_BROW: &str = "left_brow";
    pub const RIGHT_BROW: &str = "right_brow";
    pub const UPPER_LIP: &str = "upper_lip";
    pub const LOWER_LIP: &str = "lower_lip";
    pub const MOUTH_INTERIOR: &str = "mouth_interior";
    pub const HAIR: &str = "hair";
    pub const BACKGROUND: &str = "background";
}

/// Maps label indices to region names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSemantics {
    names: BTreeMap<u8, String>,
}

impl LabelSemantics {
    pub fn new(names: BTreeMap<u8, String>) -> Self {
        Self { names }
    }

    pub fn name(&self, index: u8) -> Option<&str> {
        self.names.get(&index).map(String::as_str)
    }

    /// All indices carrying `name`.
    pub fn indices_of(&self, name: &str) -> Vec<u8> {
        self.names
            .iter()
            .filter(|(_, n)| n.as_str() == name)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &str)> {
        self.names.iter().map(|(&i, n)| (i, n.as_str()))
    }

    pub fn set(&mut self, index: u8, name: impl Into<String>) {
        self.names.insert(index, name.into());
    }
}

impl Default for LabelSemantics {
    /// The 19-class layout produced by the common BiSeNet face-parsing
    /// checkpoint (CelebAMask-HQ classes).
    fn default() -> Self {
        let names = [
            "background",
            "skin",
            "left_brow",
            "right_brow",
            "left_eye",
            "right_eye",
            "eyeglasses",
            "left_ear",
            "right_ear",
            "earring",
            "nose",
            "mouth_interior",
            "upper_lip",
            "lower_lip",
            "neck",
            "necklace",
            "cloth",
            "hair",
            "hat",
        ];
        Self {
            names: names
                .iter()
                .enumerate()
                .map(|(i, n)| (i as u8, n.to_string()))
                .collect(),
        }
    }
}

/// Row-major per-pixel region indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
    semantics: LabelSemantics,
}

impl LabelMap {
    /// Fails if the buffer size is wrong or an index has no name.
    pub fn new(width: u32, height: u32, labels: Vec<u8>, semantics: LabelSemantics) -> Result<Self> {
        check_len(width, height, labels.len())?;
        let mut present = [false; 256];
        for &l in &labels {
            present[l as usize] = true;
        }
        for (index, _) in present.iter().enumerate().filter(|(_, &p)| p) {
            if semantics.name(index as u8).is_none() {
                return Err(Error::UnknownLabel { index: index as u8 });
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            semantics,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn semantics(&self) -> &LabelSemantics {
        &self.semantics
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.labels.clone(),
        }
        .save_png(path)
    }
}

/// Loads an 8-bit single-channel label map (PNG, lossless only in practice).
pub fn load_label_map(path: impl AsRef<Path>, semantics: &LabelSemantics) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (width, height) = (img.width(), img.height());
    let labels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("label map must be 8-bit single channel, found {:?}", other.color()),
            })
        }
    };
    LabelMap::new(width, height, labels, semantics.clone()).map_err(|e| match e {
        Error::UnknownLabel { index } => Error::Image {
            path: path.to_path_buf(),
            message: format!("label index {index} has no region name in the configured semantics"),
        },
        other => other,
    })
}
