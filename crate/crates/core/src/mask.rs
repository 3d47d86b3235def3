//! Label masks in the canonical streetscape label space.
//!
//! A [`LabelMask`] is a row-major grid of 8-bit class ids. Masks coming out of
//! third-party models or datasets live in their own label space until they are
//! passed through [`LabelMask::remap`] with a [`ClassMap`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved id for pixels that take no part in metrics or coverage ratios.
pub const IGNORE: u8 = 255;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("mask data has {actual} values, expected {expected} for {width}x{height}")]
    LengthMismatch {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("incompatible masks: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("class id {0} is not in the canonical label space")]
    NotCanonical(u8),
}

/// The canonical pixel classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CanonicalClass {
    Other = 0,
    /// Building facades and exterior walls.
    Primary = 1,
    /// Billboards and signs mounted on facades.
    Secondary = 2,
    Sky = 3,
    Road = 4,
    Ignore = IGNORE,
}

impl CanonicalClass {
    pub const ALL: [CanonicalClass; 6] = [
        CanonicalClass::Other,
        CanonicalClass::Primary,
        CanonicalClass::Secondary,
        CanonicalClass::Sky,
        CanonicalClass::Road,
        CanonicalClass::Ignore,
    ];

    #[inline]
    pub const fn id(self) -> u8 {
        self as u8
    }

    pub const fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CanonicalClass::Other),
            1 => Some(CanonicalClass::Primary),
            2 => Some(CanonicalClass::Secondary),
            3 => Some(CanonicalClass::Sky),
            4 => Some(CanonicalClass::Road),
            IGNORE => Some(CanonicalClass::Ignore),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            CanonicalClass::Other => "other",
            CanonicalClass::Primary => "primary",
            CanonicalClass::Secondary => "secondary",
            CanonicalClass::Sky => "sky",
            CanonicalClass::Road => "road",
            CanonicalClass::Ignore => "ignore",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for CanonicalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-pixel class ids, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for LabelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabelMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl LabelMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(MaskError::LengthMismatch {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    /// A mask with every pixel set to `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// Builds a mask by evaluating `f(x, y)` for every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> u64 {
        self.data.len() as u64
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        let start = y as usize * w;
        &self.data[start..start + w]
    }

    /// Sorted set of distinct ids present in the mask.
    pub fn distinct_ids(&self) -> Vec<u8> {
        let hist = self.histogram();
        (0..=255u8).filter(|&id| hist[id as usize] > 0).collect()
    }

    pub fn is_canonical(&self) -> bool {
        self.first_non_canonical().is_none()
    }

    pub fn ensure_canonical(&self) -> Result<(), MaskError> {
        match self.first_non_canonical() {
            Some(id) => Err(MaskError::NotCanonical(id)),
            None => Ok(()),
        }
    }

    fn first_non_canonical(&self) -> Option<u8> {
        let hist = self.histogram();
        (0..=255u8).find(|&id| hist[id as usize] > 0 && CanonicalClass::from_id(id).is_none())
    }

    /// Pixel counts indexed by class id.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    /// Pixel count per class id; only ids that occur appear as keys.
    pub fn class_areas(&self) -> BTreeMap<u8, u64> {
        self.histogram()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(id, &n)| (id as u8, n))
            .collect()
    }

    pub fn remap(&self, map: &ClassMap) -> LabelMask {
        let table = map.lookup_table();
        LabelMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| table[v as usize]).collect(),
        }
    }

    pub fn ensure_same_dimensions(&self, other: &LabelMask) -> Result<(), MaskError> {
        if self.dimensions() != other.dimensions() {
            return Err(MaskError::DimensionMismatch {
                left: self.dimensions(),
                right: other.dimensions(),
            });
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> LabelMask {
        let w = self.width as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(w) {
            data.extend(row.iter().rev());
        }
        LabelMask { data, ..*self }
    }

    /// Replicates every pixel into a `factor`×`factor` block.
    pub fn upscale_nearest(&self, factor: u32) -> LabelMask {
        assert!(factor > 0, "upscale factor must be positive");
        let (w, h) = (self.width * factor, self.height * factor);
        LabelMask::from_fn(w, h, |x, y| self.get(x / factor, y / factor))
    }
}

/// Overlays a secondary-contour prediction on a primary-contour prediction.
///
/// Wherever `secondary` is [`CanonicalClass::Secondary`] the output is
/// secondary; every other pixel keeps the primary prediction.
pub fn merge(primary: &LabelMask, secondary: &LabelMask) -> Result<LabelMask, MaskError> {
    primary.ensure_same_dimensions(secondary)?;
    let s = CanonicalClass::Secondary.id();
    let data = primary
        .data
        .iter()
        .zip(&secondary.data)
        .map(|(&p, &b)| if b == s { s } else { p })
        .collect();
    Ok(LabelMask {
        width: primary.width,
        height: primary.height,
        data,
    })
}

/// Total mapping from a source label space into the canonical one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    entries: BTreeMap<u8, CanonicalClass>,
    default: CanonicalClass,
}

impl ClassMap {
    pub fn new(default: CanonicalClass) -> Self {
        Self {
            entries: BTreeMap::new(),
            default,
        }
    }

    /// Maps every canonical id to itself and anything else to `Ignore`.
    pub fn identity() -> Self {
        let mut map = Self::new(CanonicalClass::Ignore);
        for class in CanonicalClass::ALL {
            map = map.with(class.id(), class);
        }
        map
    }

    /// Adds an entry. Entries for [`IGNORE`] are ignored: it always maps to itself.
    pub fn with(mut self, source: u8, target: CanonicalClass) -> Self {
        self.insert(source, target);
        self
    }

    pub fn insert(&mut self, source: u8, target: CanonicalClass) {
        if source != IGNORE {
            self.entries.insert(source, target);
        }
    }

    pub fn default_class(&self) -> CanonicalClass {
        self.default
    }

    pub fn get(&self, source: u8) -> CanonicalClass {
        if source == IGNORE {
            return CanonicalClass::Ignore;
        }
        self.entries.get(&source).copied().unwrap_or(self.default)
    }

    pub fn lookup_table(&self) -> [u8; 256] {
        let mut table = [0u8; 256];
        for (id, slot) in table.iter_mut().enumerate() {
            *slot = self.get(id as u8).id();
        }
        table
    }

    /// Cityscapes `labelIds` (0..=33): building and wall are the primary
    /// contour, sky and road keep their meaning, the rest is `Other`.
    pub fn cityscapes_label_ids() -> Self {
        Self::new(CanonicalClass::Other)
            .with(7, CanonicalClass::Road)
            .with(11, CanonicalClass::Primary)
            .with(12, CanonicalClass::Primary)
            .with(23, CanonicalClass::Sky)
    }

    /// Cityscapes `trainIds` (0..=18), the output space of models trained on
    /// Cityscapes.
    pub fn cityscapes_train_ids() -> Self {
        Self::new(CanonicalClass::Other)
            .with(0, CanonicalClass::Road)
            .with(2, CanonicalClass::Primary)
            .with(3, CanonicalClass::Primary)
            .with(10, CanonicalClass::Sky)
    }

    /// Binary billboard space: 1 is a billboard, everything else is `Other`.
    pub fn billboard_binary() -> Self {
        Self::new(CanonicalClass::Other).with(1, CanonicalClass::Secondary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: u8 = 0;
    const P: u8 = 1;
    const S: u8 = 2;

    #[test]
    fn constructor_checks_length() {
        assert!(matches!(
            LabelMask::new(2, 2, vec![0; 3]),
            Err(MaskError::LengthMismatch { expected: 4, actual: 3, .. })
        ));
        assert!(LabelMask::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn class_areas_constant_mask() {
        let m = LabelMask::filled(2, 2, O);
        assert_eq!(m.class_areas(), BTreeMap::from([(O, 4)]));
    }

    #[test]
    fn class_areas_enumeration() {
        let m = LabelMask::new(4, 1, vec![P, P, S, IGNORE]).unwrap();
        assert_eq!(m.class_areas(), BTreeMap::from([(P, 2), (S, 1), (IGNORE, 1)]));
    }

    #[test]
    fn remap_identity_on_canonical() {
        let m = LabelMask::new(3, 2, vec![0, 1, 2, 3, 4, 255]).unwrap();
        assert_eq!(m.remap(&ClassMap::identity()), m);
    }

    #[test]
    fn remap_cityscapes_regions() {
        // 4x2: building | wall | sky | road on top, car | sidewalk | vegetation | unlabeled below
        let m = LabelMask::new(4, 2, vec![11, 12, 23, 7, 26, 8, 21, 0]).unwrap();
        let out = m.remap(&ClassMap::cityscapes_label_ids());
        assert_eq!(out.data(), &[P, P, 3, 4, O, O, O, O]);
        assert!(out.is_canonical());
    }

    #[test]
    fn remap_default_ignore() {
        let m = LabelMask::new(3, 1, vec![200, 1, 200]).unwrap();
        let map = ClassMap::new(CanonicalClass::Ignore).with(1, CanonicalClass::Primary);
        assert_eq!(m.remap(&map).data(), &[IGNORE, P, IGNORE]);
    }

    #[test]
    fn ignore_always_maps_to_ignore() {
        let map = ClassMap::new(CanonicalClass::Other).with(IGNORE, CanonicalClass::Primary);
        assert_eq!(map.get(IGNORE), CanonicalClass::Ignore);
    }

    #[test]
    fn merge_precedence() {
        let primary = LabelMask::filled(3, 3, P);
        let other = LabelMask::filled(3, 3, O);
        assert_eq!(merge(&primary, &other).unwrap(), primary);
        let secondary = LabelMask::filled(3, 3, S);
        assert_eq!(merge(&primary, &secondary).unwrap(), secondary);
    }

    #[test]
    fn merge_dimension_mismatch() {
        let a = LabelMask::filled(3, 3, P);
        let b = LabelMask::filled(3, 2, S);
        assert!(matches!(merge(&a, &b), Err(MaskError::DimensionMismatch { .. })));
    }

    #[test]
    fn canonical_check_names_offender() {
        let m = LabelMask::new(2, 1, vec![1, 9]).unwrap();
        assert_eq!(m.ensure_canonical(), Err(MaskError::NotCanonical(9)));
    }

    #[test]
    fn class_map_serde() {
        let map = ClassMap::cityscapes_train_ids();
        let json = serde_json::to_string(&map).unwrap();
        let back: ClassMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
    }
}
