//! Coverage of the primary (facade) and secondary (billboard) contours.
//!
//! The secondary-to-primary ratio only depends on the two class counts:
//! whatever denominator the coverages use cancels out.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{CanonicalClass, LabelMask, MaskError};

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("no reports to aggregate")]
    Empty,
    #[error("image is {image:?} but mask is {mask:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
}

/// Which pixels the coverage fractions are taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DenominatorMode {
    #[default]
    WholeImage,
    /// Every pixel that is neither sky nor road.
    NonSkyRoad,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourReport {
    pub image_id: String,
    /// Fraction of the denominator per class. Under
    /// [`DenominatorMode::NonSkyRoad`] sky and road are absent, and the map
    /// is empty when the image holds nothing but sky and road.
    pub coverage: BTreeMap<CanonicalClass, f64>,
    /// Secondary pixels over primary pixels; `None` without primary pixels.
    pub ratio_sp: Option<f64>,
    pub denominator_mode: DenominatorMode,
    pub counts: BTreeMap<CanonicalClass, u64>,
    pub total_pixels: u64,
}

impl ContourReport {
    pub fn coverage_of(&self, class: CanonicalClass) -> f64 {
        self.coverage.get(&class).copied().unwrap_or(0.0)
    }

    pub fn count_of(&self, class: CanonicalClass) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }
}

pub fn analyze(mask: &LabelMask, image_id: &str) -> Result<ContourReport, ContourError> {
    analyze_with(mask, image_id, DenominatorMode::WholeImage)
}

pub fn analyze_with(mask: &LabelMask, image_id: &str, mode: DenominatorMode) -> Result<ContourReport, ContourError> {
    mask.ensure_canonical()?;
    let hist = mask.histogram();
    let counts: BTreeMap<CanonicalClass, u64> = CanonicalClass::ALL
        .into_iter()
        .map(|c| (c, hist[c.id() as usize]))
        .collect();
    let total = mask.pixel_count();
    let included = |c: &CanonicalClass| match mode {
        DenominatorMode::WholeImage => true,
        DenominatorMode::NonSkyRoad => !matches!(c, CanonicalClass::Sky | CanonicalClass::Road),
    };
    let denominator: u64 = counts.iter().filter(|(c, _)| included(c)).map(|(_, n)| n).sum();
    let coverage = if denominator == 0 {
        BTreeMap::new()
    } else {
        counts
            .iter()
            .filter(|(c, _)| included(c))
            .map(|(&c, &n)| (c, n as f64 / denominator as f64))
            .collect()
    };
    let primary = counts[&CanonicalClass::Primary];
    let secondary = counts[&CanonicalClass::Secondary];
    let ratio_sp = (primary > 0).then(|| secondary as f64 / primary as f64);
    Ok(ContourReport {
        image_id: image_id.to_string(),
        coverage,
        ratio_sp,
        denominator_mode: mode,
        counts,
        total_pixels: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl FieldStats {
    fn of(mut values: Vec<f64>) -> Option<FieldStats> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Some(FieldStats {
            mean: values.iter().sum::<f64>() / n as f64,
            median,
            min: values[0],
            max: values[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourSummary {
    pub images: usize,
    /// Per-class coverage statistics, keyed by class name.
    pub coverage: BTreeMap<String, Option<FieldStats>>,
    pub ratio_sp: Option<FieldStats>,
    pub undefined_ratios: usize,
}

pub fn aggregate(reports: &[ContourReport]) -> Result<ContourSummary, ContourError> {
    if reports.is_empty() {
        return Err(ContourError::Empty);
    }
    let coverage = CanonicalClass::ALL
        .into_iter()
        .map(|c| {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.coverage.get(&c).copied()).collect();
            (c.name().to_string(), FieldStats::of(values))
        })
        .collect();
    let ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio_sp).collect();
    let undefined_ratios = reports.len() - ratios.len();
    Ok(ContourSummary {
        images: reports.len(),
        coverage,
        ratio_sp: FieldStats::of(ratios),
        undefined_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub alpha: f64,
    pub primary: [u8; 3],
    pub secondary: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            primary: [0, 0, 255],
            secondary: [255, 0, 0],
        }
    }
}

/// Tints primary pixels blue and secondary pixels red.
pub fn render_overlay(image: &RgbImage, mask: &LabelMask, style: &OverlayStyle) -> Result<RgbImage, ContourError> {
    if image.dimensions() != mask.dimensions() {
        return Err(ContourError::DimensionMismatch {
            image: image.dimensions(),
            mask: mask.dimensions(),
        });
    }
    let a = style.alpha.clamp(0.0, 1.0);
    let blend = |px: &Rgb<u8>, tint: [u8; 3]| {
        Rgb([0, 1, 2].map(|c| ((1.0 - a) * px[c] as f64 + a * tint[c] as f64).round() as u8))
    };
    let (p, s) = (CanonicalClass::Primary.id(), CanonicalClass::Secondary.id());
    let mut out = image.clone();
    for (px, &label) in out.pixels_mut().zip(mask.data()) {
        if label == p {
            *px = blend(px, style.primary);
        } else if label == s {
            *px = blend(px, style.secondary);
        }
    }
    Ok(out)
}
