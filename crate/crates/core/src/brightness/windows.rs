use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed FSB band `[lo, hi]` used by the sliding-bin search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrightnessWindow {
    pub lo: f64,
    pub hi: f64,
    pub label: String,
}

impl BrightnessWindow {
    pub fn contains(&self, fsb: f64) -> bool {
        self.lo <= fsb && fsb <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub step: f64,
    pub label_prefix: String,
    /// Number given to the first window's label.
    pub label_start: i64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 255.0,
            width: 40.0,
            step: 5.0,
            label_prefix: "M".into(),
            label_start: 1,
        }
    }
}

/// Windows `[lo + k*step, lo + k*step + width]` for every `k` whose upper
/// edge stays within `hi`.
pub fn sliding_windows(spec: &WindowSpec) -> Result<Vec<BrightnessWindow>> {
    let WindowSpec {
        lo, hi, width, step, ..
    } = *spec;
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::WindowGeometry(format!("width must be positive, got {width}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::WindowGeometry(format!("step must be positive, got {step}")));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo + width > hi {
        return Err(Error::WindowGeometry(format!(
            "[{lo}, {hi}] cannot hold a window of width {width}"
        )));
    }
    // Tolerance absorbs fractional steps that should land exactly on `hi`.
    let slack = 1e-9 * hi.abs().max(1.0);
    let mut out = Vec::new();
    for k in 0.. {
        let start = lo + k as f64 * step;
        if start + width > hi + slack {
            break;
        }
        out.push(BrightnessWindow {
            lo: start,
            hi: start + width,
            label: format!("{}{}", spec.label_prefix, spec.label_start + k),
        });
    }
    Ok(out)
}
