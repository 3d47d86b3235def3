//! Joint image and mask augmentation.
//!
//! Geometric transforms are inverse-mapped: every output pixel centre is sent
//! back into the source frame, the image is sampled bilinearly and the mask by
//! nearest neighbour. Source points outside the frame yield black pixels and
//! [`IGNORE`] labels, so a mask never gains a class it did not have.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{LabelMask, IGNORE};
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("image is {image:?} but mask is {mask:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("crop {crop:?} does not fit in {frame:?}")]
    CropTooLarge { crop: (u32, u32), frame: (u32, u32) },
    #[error("degenerate perspective quadrilateral: {0}")]
    DegenerateHomography(String),
    #[error("invalid augmentation spec: {0}")]
    Spec(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> AugmentError {
    AugmentError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// An RGB image with its label mask; both always share dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    image: RgbImage,
    mask: LabelMask,
}

impl Sample {
    pub fn new(image: RgbImage, mask: LabelMask) -> Result<Self, AugmentError> {
        if image.dimensions() != mask.dimensions() {
            return Err(AugmentError::DimensionMismatch {
                image: image.dimensions(),
                mask: mask.dimensions(),
            });
        }
        Ok(Self { image, mask })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn mask(&self) -> &LabelMask {
        &self.mask
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.mask.dimensions()
    }

    pub fn into_parts(self) -> (RgbImage, LabelMask) {
        (self.image, self.mask)
    }
}

pub fn flip_h(s: &Sample) -> Sample {
    Sample {
        image: image::imageops::flip_horizontal(&s.image),
        mask: s.mask.flip_horizontal(),
    }
}

/// Sine and cosine of an angle in degrees, exact at multiples of 90°.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match quarter.rem_euclid(4.0) as i64 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

fn sample_bilinear(img: &RgbImage, sx: f64, sy: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    if !(sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64) {
        return Rgb([0, 0, 0]);
    }
    let (u, v) = (sx - 0.5, sy - 0.5);
    let (x0f, y0f) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0f, v - y0f);
    let clamp_x = |x: f64| x.clamp(0.0, (w - 1) as f64) as u32;
    let clamp_y = |y: f64| y.clamp(0.0, (h - 1) as f64) as u32;
    let (x0, x1) = (clamp_x(x0f), clamp_x(x0f + 1.0));
    let (y0, y1) = (clamp_y(y0f), clamp_y(y0f + 1.0));
    let (p00, p10, p01, p11) = (img.get_pixel(x0, y0), img.get_pixel(x1, y0), img.get_pixel(x0, y1), img.get_pixel(x1, y1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

fn sample_nearest(mask: &LabelMask, sx: f64, sy: f64) -> u8 {
    let (w, h) = mask.dimensions();
    if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
        mask.get(sx as u32, sy as u32)
    } else {
        IGNORE
    }
}

/// Resamples into an `out_w`×`out_h` frame; `source` maps an output pixel
/// centre to continuous source coordinates.
fn warp(s: &Sample, out_w: u32, out_h: u32, source: impl Fn(f64, f64) -> (f64, f64)) -> Sample {
    let mut image = RgbImage::new(out_w, out_h);
    let mut labels = Vec::with_capacity(out_w as usize * out_h as usize);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = source(x as f64 + 0.5, y as f64 + 0.5);
            image.put_pixel(x, y, sample_bilinear(&s.image, sx, sy));
            labels.push(sample_nearest(&s.mask, sx, sy));
        }
    }
    Sample {
        image,
        mask: LabelMask::new(out_w, out_h, labels).expect("warp output has matching length"),
    }
}

/// Geometric parameters for [`affine`]. Shifts are fractions of the frame
/// size, rotation is in degrees, counter-clockwise as displayed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub shift: (f64, f64),
    pub scale: f64,
    pub rotate_deg: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        shift: (0.0, 0.0),
        scale: 1.0,
        rotate_deg: 0.0,
    };
}

/// Scales and rotates about the frame centre, then shifts.
pub fn affine(s: &Sample, params: AffineParams) -> Result<Sample, AugmentError> {
    let AffineParams { shift, scale, rotate_deg } = params;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", format!("must be positive, got {scale}")));
    }
    if !(shift.0.is_finite() && shift.1.is_finite() && rotate_deg.is_finite()) {
        return Err(invalid("affine", "parameters must be finite"));
    }
    let (w, h) = s.dimensions();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (tx, ty) = (shift.0 * w as f64, shift.1 * h as f64);
    let (sin, cos) = sin_cos_deg(rotate_deg);
    // forward, y pointing down: d' = scale * [[cos, sin], [-sin, cos]] d
    Ok(warp(s, w, h, |x, y| {
        let (dx, dy) = (x - cx - tx, y - cy - ty);
        let sx = (cos * dx - sin * dy) / scale;
        let sy = (sin * dx + cos * dy) / scale;
        (cx + sx, cy + sy)
    }))
}

pub fn crop(s: &Sample, x: u32, y: u32, out_w: u32, out_h: u32) -> Result<Sample, AugmentError> {
    let (w, h) = s.dimensions();
    if out_w == 0 || out_h == 0 || x as u64 + out_w as u64 > w as u64 || y as u64 + out_h as u64 > h as u64 {
        return Err(AugmentError::CropTooLarge {
            crop: (out_w, out_h),
            frame: (w, h),
        });
    }
    let image = image::imageops::crop_imm(&s.image, x, y, out_w, out_h).to_image();
    let mask = LabelMask::from_fn(out_w, out_h, |cx, cy| s.mask.get(x + cx, y + cy));
    Ok(Sample { image, mask })
}

/// Crops an `out_w`×`out_h` window at a uniformly drawn offset.
pub fn random_crop(s: &Sample, out_w: u32, out_h: u32, rng: &mut SeededRng) -> Result<Sample, AugmentError> {
    let (w, h) = s.dimensions();
    if out_w == 0 || out_h == 0 || out_w > w || out_h > h {
        return Err(AugmentError::CropTooLarge {
            crop: (out_w, out_h),
            frame: (w, h),
        });
    }
    let x = rng.between(0, (w - out_w) as u64) as u32;
    let y = rng.between(0, (h - out_h) as u64) as u32;
    crop(s, x, y, out_w, out_h)
}

/// Mean of ITU-R BT.601 luma over all pixels.
pub fn grayscale_mean(image: &RgbImage) -> f64 {
    let n = (image.width() as u64 * image.height() as u64) as f64;
    let sum: f64 = image
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .sum();
    sum / n
}

/// Stretches every channel value away from (or towards) the grayscale mean.
pub fn random_contrast(image: &RgbImage, factor: f64) -> Result<RgbImage, AugmentError> {
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(invalid("contrast factor", format!("must be non-negative, got {factor}")));
    }
    let mean = grayscale_mean(image);
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = (mean + factor * (v as f64 - mean)).round().clamp(0.0, 255.0) as u8;
    }
    let mut out = image.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = lut[*c as usize];
        }
    }
    Ok(out)
}

/// Projective map between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    /// Solves for the map sending each `src[i]` to `dst[i]`.
    pub fn from_points(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> Option<Homography> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for (i, ((x, y), (u, v))) in src.into_iter().zip(dst).enumerate() {
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b)?;
        if h.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
        Some(Homography(m))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p[0] / p[2], p[1] / p[2])
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.try_inverse().map(Homography)
    }
}

fn is_strictly_convex(quad: &[(f64, f64); 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b, c) = (quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]);
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        if cross == 0.0 || !cross.is_finite() {
            return false;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Homography that sends the displaced corners of a `w`×`h` frame onto its
/// true corners. Corners run top-left, top-right, bottom-right, bottom-left;
/// displacements are fractions of the frame size.
pub fn perspective_homography(w: u32, h: u32, displacements: [(f64, f64); 4]) -> Result<Homography, AugmentError> {
    let (wf, hf) = (w as f64, h as f64);
    let corners = [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)];
    let mut displaced = corners;
    for (p, (dx, dy)) in displaced.iter_mut().zip(displacements) {
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(invalid("perspective displacement", "must be finite"));
        }
        p.0 += dx * wf;
        p.1 += dy * hf;
    }
    if !is_strictly_convex(&displaced) {
        return Err(AugmentError::DegenerateHomography(format!("corners {displaced:?} are not a convex quadrilateral")));
    }
    let forward = Homography::from_points(displaced, corners)
        .ok_or_else(|| AugmentError::DegenerateHomography("singular corner system".into()))?;
    if forward.0.determinant().abs() < 1e-12 {
        return Err(AugmentError::DegenerateHomography("non-invertible map".into()));
    }
    Ok(forward)
}

/// Four-point perspective warp.
pub fn perspective(s: &Sample, displacements: [(f64, f64); 4]) -> Result<Sample, AugmentError> {
    let (w, h) = s.dimensions();
    let forward = perspective_homography(w, h, displacements)?;
    let back = forward
        .inverse()
        .ok_or_else(|| AugmentError::DegenerateHomography("non-invertible map".into()))?;
    Ok(warp(s, w, h, |x, y| back.apply(x, y)))
}

/// Resizes to `⌊W·factor⌋`×`⌊H·factor⌋`.
pub fn downscale(s: &Sample, factor: f64) -> Result<Sample, AugmentError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(invalid("downscale factor", format!("must lie in (0, 1], got {factor}")));
    }
    let (w, h) = s.dimensions();
    let (out_w, out_h) = ((w as f64 * factor).floor() as u32, (h as f64 * factor).floor() as u32);
    if out_w == 0 || out_h == 0 {
        return Err(invalid("downscale factor", format!("{factor} collapses {w}x{h} to {out_w}x{out_h}")));
    }
    resize(s, out_w, out_h)
}

/// Bilinear resize of an image alone.
pub fn resize_image(image: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let (w, h) = image.dimensions();
    let (kx, ky) = (w as f64 / out_w as f64, h as f64 / out_h as f64);
    RgbImage::from_fn(out_w, out_h, |x, y| sample_bilinear(image, (x as f64 + 0.5) * kx, (y as f64 + 0.5) * ky))
}

/// Bilinear image, nearest-neighbour mask resize.
pub fn resize(s: &Sample, out_w: u32, out_h: u32) -> Result<Sample, AugmentError> {
    if out_w == 0 || out_h == 0 {
        return Err(invalid("size", "output dimensions must be positive"));
    }
    let (w, h) = s.dimensions();
    let (kx, ky) = (w as f64 / out_w as f64, h as f64 / out_h as f64);
    Ok(warp(s, out_w, out_h, |x, y| (x * kx, y * ky)))
}

/// Closed interval serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn check(&self, name: &'static str, lo: f64, hi: f64, open_lo: bool) -> Result<(), AugmentError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(invalid(name, format!("range [{}, {}] is empty", self.min, self.max)));
        }
        let low_ok = if open_lo { self.min > lo } else { self.min >= lo };
        if !low_ok || self.max > hi {
            let open = if open_lo { "(" } else { "[" };
            return Err(invalid(name, format!("range [{}, {}] must lie in {open}{lo}, {hi}]", self.min, self.max)));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SeededRng) -> f64 {
        rng.uniform(self.min, self.max)
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineRanges {
    /// Applied independently to the horizontal and vertical shift.
    pub shift: Interval,
    pub scale: Interval,
    pub rotate: Interval,
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            shift: Interval::new(-0.1, 0.1),
            scale: Interval::new(0.9, 1.1),
            rotate: Interval::new(-15.0, 15.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropRanges {
    /// Window side as a fraction of the frame side, drawn once per crop.
    pub size: Interval,
}

impl Default for CropRanges {
    fn default() -> Self {
        Self { size: Interval::point(0.9) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastRanges {
    pub factor: Interval,
}

impl Default for ContrastRanges {
    fn default() -> Self {
        Self { factor: Interval::new(0.8, 1.2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerspectiveRanges {
    /// Inward displacement of each corner coordinate, as a fraction of the frame size.
    pub displacement: Interval,
}

impl Default for PerspectiveRanges {
    fn default() -> Self {
        Self { displacement: Interval::new(0.0, 0.1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownscaleRanges {
    pub factor: Interval,
}

impl Default for DownscaleRanges {
    fn default() -> Self {
        Self { factor: Interval::new(0.25, 0.5) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    FlipH,
    Affine(AffineRanges),
    RandomCrop(CropRanges),
    RandomContrast(ContrastRanges),
    Perspective(PerspectiveRanges),
    Downscale(DownscaleRanges),
}

impl StepKind {
    pub fn name(&self) -> &'static str {
        match self {
            StepKind::FlipH => "flip_h",
            StepKind::Affine(_) => "affine",
            StepKind::RandomCrop(_) => "random_crop",
            StepKind::RandomContrast(_) => "random_contrast",
            StepKind::Perspective(_) => "perspective",
            StepKind::Downscale(_) => "downscale",
        }
    }

    fn validate(&self) -> Result<(), AugmentError> {
        match self {
            StepKind::FlipH => Ok(()),
            StepKind::Affine(r) => {
                r.shift.check("affine shift", -1.0, 1.0, false)?;
                r.scale.check("affine scale", 0.0, f64::MAX, true)?;
                r.rotate.check("affine rotate", -360.0, 360.0, false)
            }
            StepKind::RandomCrop(r) => r.size.check("crop size", 0.0, 1.0, true),
            StepKind::RandomContrast(r) => r.factor.check("contrast factor", 0.0, f64::MAX, true),
            StepKind::Perspective(r) => r.displacement.check("perspective displacement", 0.0, 0.49, false),
            StepKind::Downscale(r) => r.factor.check("downscale factor", 0.0, 1.0, true),
        }
    }

    fn apply(&self, s: Sample, rng: &mut SeededRng) -> Result<Sample, AugmentError> {
        match self {
            StepKind::FlipH => Ok(flip_h(&s)),
            StepKind::Affine(r) => {
                let params = AffineParams {
                    shift: (r.shift.draw(rng), r.shift.draw(rng)),
                    scale: r.scale.draw(rng),
                    rotate_deg: r.rotate.draw(rng),
                };
                affine(&s, params)
            }
            StepKind::RandomCrop(r) => {
                let (w, h) = s.dimensions();
                let f = r.size.draw(rng);
                let side = |n: u32| ((n as f64 * f).round() as u32).clamp(1, n);
                random_crop(&s, side(w), side(h), rng)
            }
            StepKind::RandomContrast(r) => {
                let image = random_contrast(&s.image, r.factor.draw(rng))?;
                Ok(Sample { image, ..s })
            }
            StepKind::Perspective(r) => {
                // inward direction of each corner: TL, TR, BR, BL
                const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
                let mut d = [(0.0, 0.0); 4];
                for (slot, (sx, sy)) in d.iter_mut().zip(SIGNS) {
                    *slot = (sx * r.displacement.draw(rng), sy * r.displacement.draw(rng));
                }
                perspective(&s, d)
            }
            StepKind::Downscale(r) => {
                let (w, h) = s.dimensions();
                // never collapse a side to zero
                let min_factor = (1.0 / w.min(h) as f64).min(1.0);
                downscale(&s, r.factor.draw(rng).max(min_factor))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStep", into = "RawStep")]
pub struct AugmentStep {
    pub kind: StepKind,
    pub probability: f64,
}

impl AugmentStep {
    pub fn new(kind: StepKind, probability: f64) -> Self {
        Self { kind, probability }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    kind: String,
    probability: f64,
    #[serde(default)]
    params: serde_json::Value,
}

fn params<T: Default + serde::de::DeserializeOwned>(v: serde_json::Value, kind: &str) -> Result<T, String> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v).map_err(|e| format!("{kind} params: {e}"))
}

impl TryFrom<RawStep> for AugmentStep {
    type Error = String;

    fn try_from(raw: RawStep) -> Result<Self, String> {
        let p = raw.params;
        let kind = match raw.kind.as_str() {
            "flip_h" => StepKind::FlipH,
            "affine" => StepKind::Affine(params(p, "affine")?),
            "random_crop" => StepKind::RandomCrop(params(p, "random_crop")?),
            "random_contrast" => StepKind::RandomContrast(params(p, "random_contrast")?),
            "perspective" => StepKind::Perspective(params(p, "perspective")?),
            "downscale" => StepKind::Downscale(params(p, "downscale")?),
            other => return Err(format!("unknown step kind `{other}`")),
        };
        Ok(AugmentStep {
            kind,
            probability: raw.probability,
        })
    }
}

impl From<AugmentStep> for RawStep {
    fn from(step: AugmentStep) -> Self {
        let params = match step.kind {
            StepKind::FlipH => Ok(serde_json::Value::Null),
            StepKind::Affine(r) => serde_json::to_value(r),
            StepKind::RandomCrop(r) => serde_json::to_value(r),
            StepKind::RandomContrast(r) => serde_json::to_value(r),
            StepKind::Perspective(r) => serde_json::to_value(r),
            StepKind::Downscale(r) => serde_json::to_value(r),
        }
        .unwrap_or(serde_json::Value::Null);
        RawStep {
            kind: step.kind.name().to_string(),
            probability: step.probability,
            params,
        }
    }
}

/// An ordered augmentation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    #[serde(default)]
    pub base_seed: u64,
    pub steps: Vec<AugmentStep>,
}

impl AugmentSpec {
    /// Flip, affine, crop, contrast and perspective at probability 0.5 each,
    /// followed by an unconditional downscale.
    pub fn standard(base_seed: u64) -> Self {
        Self {
            base_seed,
            steps: vec![
                AugmentStep::new(StepKind::FlipH, 0.5),
                AugmentStep::new(StepKind::Affine(AffineRanges::default()), 0.5),
                AugmentStep::new(StepKind::RandomCrop(CropRanges::default()), 0.5),
                AugmentStep::new(StepKind::RandomContrast(ContrastRanges::default()), 0.5),
                AugmentStep::new(StepKind::Perspective(PerspectiveRanges::default()), 0.5),
                AugmentStep::new(StepKind::Downscale(DownscaleRanges::default()), 1.0),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let spec: AugmentSpec = serde_json::from_str(text).map_err(|e| {
            AugmentError::Spec(format!("{e} (line {}, column {})", e.line(), e.column()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for step in &self.steps {
            if !(0.0..=1.0).contains(&step.probability) {
                return Err(invalid("probability", format!("{} for step {} is outside [0, 1]", step.probability, step.kind.name())));
            }
            step.kind.validate()?;
        }
        Ok(())
    }
}

/// Runs every step whose probability draw succeeds, in order. All draws
/// come from [`SeededRng::for_item`]`(spec.base_seed, sample_id)`.
pub fn apply_pipeline(spec: &AugmentSpec, sample: &Sample, sample_id: &str) -> Result<Sample, AugmentError> {
    spec.validate()?;
    let mut rng = SeededRng::for_item(spec.base_seed, sample_id);
    let mut current = sample.clone();
    for step in &spec.steps {
        if rng.chance(step.probability) {
            current = step.kind.apply(current, &mut rng)?;
            debug_assert_eq!(current.image.dimensions(), current.mask.dimensions());
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: u32, h: u32) -> Sample {
        let image = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 37 % 256) as u8, (y * 91 % 256) as u8, ((x + y) * 13 % 256) as u8]));
        let mask = LabelMask::from_fn(w, h, |x, y| ((x + 2 * y) % 5) as u8);
        Sample::new(image, mask).unwrap()
    }

    #[test]
    fn flip_small_mask() {
        let s = Sample::new(RgbImage::new(2, 1), LabelMask::new(2, 1, vec![1, 2]).unwrap()).unwrap();
        assert_eq!(flip_h(&s).mask().data(), &[2, 1]);
        assert_eq!(flip_h(&flip_h(&s)), s);
    }

    #[test]
    fn mismatched_sample_rejected() {
        assert!(matches!(
            Sample::new(RgbImage::new(2, 2), LabelMask::filled(2, 3, 0)),
            Err(AugmentError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn affine_identity_is_exact() {
        let s = sample(13, 9);
        assert_eq!(affine(&s, AffineParams::IDENTITY).unwrap(), s);
    }

    #[test]
    fn rotate_half_turn_reverses_grid() {
        let image = RgbImage::from_fn(2, 2, |x, y| Rgb([(10 * (x + 2 * y)) as u8, 0, 0]));
        let s = Sample::new(image, LabelMask::new(2, 2, vec![0, 1, 2, 3]).unwrap()).unwrap();
        let r = affine(&s, AffineParams { rotate_deg: 180.0, ..AffineParams::IDENTITY }).unwrap();
        assert_eq!(r.mask().data(), &[3, 2, 1, 0]);
        assert_eq!(r.image().get_pixel(0, 0)[0], 30);
        assert_eq!(r.image().get_pixel(1, 1)[0], 0);
    }

    #[test]
    fn affine_rejects_bad_scale() {
        let s = sample(4, 4);
        for scale in [0.0, -1.0, f64::NAN] {
            assert!(affine(&s, AffineParams { scale, ..AffineParams::IDENTITY }).is_err());
        }
    }

    #[test]
    fn shift_fills_with_ignore_and_black() {
        let s = sample(10, 4);
        let out = affine(&s, AffineParams { shift: (0.2, 0.0), ..AffineParams::IDENTITY }).unwrap();
        for y in 0..4 {
            for x in 0..2 {
                assert_eq!(out.mask().get(x, y), IGNORE);
                assert_eq!(out.image().get_pixel(x, y), &Rgb([0, 0, 0]));
            }
            for x in 2..10 {
                assert_eq!(out.mask().get(x, y), s.mask().get(x - 2, y));
            }
        }
    }

    #[test]
    fn crop_full_frame_is_identity() {
        let s = sample(6, 5);
        let mut rng = SeededRng::new(0);
        assert_eq!(random_crop(&s, 6, 5, &mut rng).unwrap(), s);
        assert!(matches!(random_crop(&s, 7, 5, &mut rng), Err(AugmentError::CropTooLarge { .. })));
    }

    #[test]
    fn crop_single_pixel_window() {
        let s = sample(6, 5);
        let a = random_crop(&s, 1, 1, &mut SeededRng::new(11)).unwrap();
        let b = random_crop(&s, 1, 1, &mut SeededRng::new(11)).unwrap();
        assert_eq!(a, b);
        let found = (0..5).flat_map(|y| (0..6).map(move |x| (x, y))).any(|(x, y)| {
            s.mask().get(x, y) == a.mask().get(0, 0) && s.image().get_pixel(x, y) == a.image().get_pixel(0, 0)
        });
        assert!(found);
    }

    #[test]
    fn contrast_cases() {
        let s = sample(7, 3);
        assert_eq!(&random_contrast(s.image(), 1.0).unwrap(), s.image());
        let flat = RgbImage::from_pixel(4, 4, Rgb([90, 90, 90]));
        assert_eq!(random_contrast(&flat, 1.7).unwrap(), flat);
        let collapsed = random_contrast(s.image(), 0.0).unwrap();
        let m = grayscale_mean(s.image()).round() as u8;
        assert!(collapsed.pixels().all(|p| p.0 == [m, m, m]));
        assert!(random_contrast(s.image(), -0.5).is_err());
    }

    #[test]
    fn perspective_identity_is_exact() {
        let s = sample(11, 7);
        assert_eq!(perspective(&s, [(0.0, 0.0); 4]).unwrap(), s);
    }

    #[test]
    fn perspective_corners_round_trip() {
        let (w, h) = (640, 480);
        let d = [(0.05, 0.02), (-0.08, 0.07), (-0.01, -0.09), (0.03, -0.04)];
        let forward = perspective_homography(w, h, d).unwrap();
        let back = forward.inverse().unwrap();
        let corners = [(0.0, 0.0), (640.0, 0.0), (640.0, 480.0), (0.0, 480.0)];
        for ((cx, cy), (dx, dy)) in corners.into_iter().zip(d) {
            let displaced = (cx + dx * 640.0, cy + dy * 480.0);
            let (fx, fy) = forward.apply(displaced.0, displaced.1);
            assert!((fx - cx).abs() < 1e-6 && (fy - cy).abs() < 1e-6);
            let (bx, by) = back.apply(fx, fy);
            assert!((bx - displaced.0).abs() < 1e-6 && (by - displaced.1).abs() < 1e-6);
        }
    }

    #[test]
    fn perspective_rejects_bow_tie() {
        let s = sample(8, 8);
        // swap the top corners past each other
        let d = [(1.2, 0.0), (-1.2, 0.0), (0.0, 0.0), (0.0, 0.0)];
        assert!(matches!(perspective(&s, d), Err(AugmentError::DegenerateHomography(_))));
    }

    #[test]
    fn downscale_dimensions() {
        let s = Sample::new(RgbImage::new(640, 480), LabelMask::filled(640, 480, 1)).unwrap();
        let half = downscale(&s, 0.5).unwrap();
        assert_eq!(half.dimensions(), (320, 240));
        assert_eq!(half.mask().distinct_ids(), vec![1]);
        assert_eq!(downscale(&s, 1.0).unwrap(), s);
        assert!(downscale(&s, 0.0).is_err());
        assert!(downscale(&s, 1.5).is_err());
        let tiny = sample(3, 3);
        assert!(downscale(&tiny, 0.2).is_err());
    }

    #[test]
    fn pipeline_zero_probability_is_noop() {
        let mut spec = AugmentSpec::standard(5);
        for step in &mut spec.steps {
            step.probability = 0.0;
        }
        let s = sample(20, 12);
        assert_eq!(apply_pipeline(&spec, &s, "a").unwrap(), s);
    }

    #[test]
    fn pipeline_deterministic() {
        let spec = AugmentSpec::standard(5);
        let s = sample(24, 16);
        assert_eq!(apply_pipeline(&spec, &s, "a").unwrap(), apply_pipeline(&spec, &s, "a").unwrap());
    }

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let spec = AugmentSpec::standard(9);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(AugmentSpec::from_json(&json).unwrap(), spec);
        let minimal = AugmentSpec::from_json(r#"{"steps":[{"kind":"affine","probability":1}]}"#).unwrap();
        assert_eq!(minimal.steps[0].kind, StepKind::Affine(AffineRanges::default()));
        assert_eq!(minimal.base_seed, 0);
    }

    #[test]
    fn spec_validation() {
        let err = AugmentSpec::from_json(r#"{"steps":[{"kind":"flip_h","probability":1.5}]}"#).unwrap_err();
        assert!(matches!(err, AugmentError::InvalidParameter { name: "probability", .. }));
        let err = AugmentSpec::from_json(r#"{"steps":[{"kind":"affine","probability":1,"params":{"scale":[1.2,0.8]}}]}"#).unwrap_err();
        assert!(matches!(err, AugmentError::InvalidParameter { .. }), "{err:?}");
        let err = AugmentSpec::from_json("{\"steps\": [\n  {\"kind\": \"warp\", \"probability\": 1}]}").unwrap_err();
        assert!(err.to_string().contains("warp") && err.to_string().contains("line 2"), "{err}");
    }
}
