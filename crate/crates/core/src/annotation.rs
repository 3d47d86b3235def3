//! Polygon annotations and their rasterization into label masks.
//!
//! The on-disk schema is
//!
//! ```json
//! {"image_id": "img_001", "image_width": 1920, "image_height": 1080,
//!  "shapes": [{"label": "billboard", "points": [[x, y], ...], "holes": [[[x, y], ...]]}]}
//! ```
//!
//! `holes` is optional. LabelMe exports (`imagePath`, `imageWidth`,
//! `imageHeight`, polygon/rectangle shapes) are converted by
//! [`parse_labelme`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mask::{CanonicalClass, LabelMask};

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("malformed annotation JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("annotation schema error: field `{field}` {problem}")]
    Schema { field: String, problem: String },
    #[error("shape {shape_index}: {message}")]
    Geometry { shape_index: usize, message: String },
    #[error("label `{0}` does not resolve to a class")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub label: String,
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl Shape {
    pub fn polygon(label: impl Into<String>, exterior: Vec<Point>) -> Self {
        Self {
            label: label.into(),
            exterior,
            holes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonAnnotation {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub shapes: Vec<Shape>,
}

impl PolygonAnnotation {
    fn validate(&self) -> Result<(), AnnotationError> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(schema(
                if self.image_width == 0 { "image_width" } else { "image_height" },
                "must be positive",
            ));
        }
        for (i, shape) in self.shapes.iter().enumerate() {
            if shape.label.is_empty() {
                return Err(schema(&format!("shapes[{i}].label"), "must be non-empty"));
            }
            for (ring_no, ring) in std::iter::once(&shape.exterior).chain(&shape.holes).enumerate() {
                let what = if ring_no == 0 { "exterior".to_string() } else { format!("hole {}", ring_no - 1) };
                if ring.len() < 3 {
                    return Err(AnnotationError::Geometry {
                        shape_index: i,
                        message: format!("{what} has {} vertices, at least 3 required", ring.len()),
                    });
                }
                if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                    return Err(AnnotationError::Geometry {
                        shape_index: i,
                        message: format!("{what} has a non-finite vertex"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let ring = |r: &[Point]| Value::from(r.iter().map(|p| vec![p.x, p.y]).collect::<Vec<_>>());
        let shapes: Vec<Value> = self
            .shapes
            .iter()
            .map(|s| {
                serde_json::json!({
                    "label": s.label,
                    "points": ring(&s.exterior),
                    "holes": s.holes.iter().map(|h| ring(h)).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "image_id": self.image_id,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "shapes": shapes,
        })
    }
}

fn schema(field: &str, problem: &str) -> AnnotationError {
    AnnotationError::Schema {
        field: field.to_string(),
        problem: problem.to_string(),
    }
}

fn parse_value(text: &str) -> Result<Value, AnnotationError> {
    serde_json::from_str(text).map_err(|e| AnnotationError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Value, AnnotationError> {
    obj.get(name).ok_or_else(|| schema(path, "is missing"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, AnnotationError> {
    v.as_object().ok_or_else(|| schema(path, "must be an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, AnnotationError> {
    v.as_array().ok_or_else(|| schema(path, "must be an array"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, AnnotationError> {
    v.as_str().ok_or_else(|| schema(path, "must be a string"))
}

fn as_dimension(v: &Value, path: &str) -> Result<u32, AnnotationError> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| schema(path, "must be a non-negative integer"))
}

fn parse_ring(v: &Value, path: &str) -> Result<Vec<Point>, AnnotationError> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let vpath = format!("{path}[{i}]");
            let xy = as_array(p, &vpath)?;
            match xy.as_slice() {
                [x, y] => match (x.as_f64(), y.as_f64()) {
                    (Some(x), Some(y)) => Ok(Point::new(x, y)),
                    _ => Err(schema(&vpath, "must hold two numbers")),
                },
                _ => Err(schema(&vpath, "must be an [x, y] pair")),
            }
        })
        .collect()
}

/// Parses an annotation document in the native schema.
pub fn parse_annotation(text: &str) -> Result<PolygonAnnotation, AnnotationError> {
    let root = parse_value(text)?;
    let obj = as_object(&root, "<root>")?;
    let image_id = as_str(field(obj, "image_id", "image_id")?, "image_id")?.to_string();
    let image_width = as_dimension(field(obj, "image_width", "image_width")?, "image_width")?;
    let image_height = as_dimension(field(obj, "image_height", "image_height")?, "image_height")?;
    let mut shapes = Vec::new();
    for (i, s) in as_array(field(obj, "shapes", "shapes")?, "shapes")?.iter().enumerate() {
        let base = format!("shapes[{i}]");
        let so = as_object(s, &base)?;
        let label_path = format!("{base}.label");
        let label = as_str(field(so, "label", &label_path)?, &label_path)?.to_string();
        let points_path = format!("{base}.points");
        let exterior = parse_ring(field(so, "points", &points_path)?, &points_path)?;
        let holes = match so.get("holes") {
            None | Some(Value::Null) => Vec::new(),
            Some(h) => {
                let holes_path = format!("{base}.holes");
                as_array(h, &holes_path)?
                    .iter()
                    .enumerate()
                    .map(|(j, ring)| parse_ring(ring, &format!("{holes_path}[{j}]")))
                    .collect::<Result<_, _>>()?
            }
        };
        shapes.push(Shape { label, exterior, holes });
    }
    let ann = PolygonAnnotation {
        image_id,
        image_width,
        image_height,
        shapes,
    };
    ann.validate()?;
    Ok(ann)
}

/// Converts a LabelMe export. `polygon` shapes are taken as-is and
/// `rectangle` shapes (two corner points) are expanded to four vertices;
/// other shape types are rejected. The image id is the `imagePath` stem.
pub fn parse_labelme(text: &str) -> Result<PolygonAnnotation, AnnotationError> {
    let root = parse_value(text)?;
    let obj = as_object(&root, "<root>")?;
    let image_path = as_str(field(obj, "imagePath", "imagePath")?, "imagePath")?;
    let image_id = std::path::Path::new(image_path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(image_path)
        .to_string();
    let image_width = as_dimension(field(obj, "imageWidth", "imageWidth")?, "imageWidth")?;
    let image_height = as_dimension(field(obj, "imageHeight", "imageHeight")?, "imageHeight")?;
    let mut shapes = Vec::new();
    for (i, s) in as_array(field(obj, "shapes", "shapes")?, "shapes")?.iter().enumerate() {
        let base = format!("shapes[{i}]");
        let so = as_object(s, &base)?;
        let label_path = format!("{base}.label");
        let label = as_str(field(so, "label", &label_path)?, &label_path)?.to_string();
        let points_path = format!("{base}.points");
        let points = parse_ring(field(so, "points", &points_path)?, &points_path)?;
        let kind = so.get("shape_type").and_then(Value::as_str).unwrap_or("polygon");
        let exterior = match kind {
            "polygon" => points,
            "rectangle" if points.len() == 2 => {
                let (a, b) = (points[0], points[1]);
                vec![a, Point::new(b.x, a.y), b, Point::new(a.x, b.y)]
            }
            other => {
                return Err(AnnotationError::Geometry {
                    shape_index: i,
                    message: format!("unsupported LabelMe shape type `{other}`"),
                })
            }
        };
        shapes.push(Shape::polygon(label, exterior));
    }
    let ann = PolygonAnnotation {
        image_id,
        image_width,
        image_height,
        shapes,
    };
    ann.validate()?;
    Ok(ann)
}

/// Resolves annotation labels to canonical classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTable {
    pub labels: BTreeMap<String, CanonicalClass>,
    #[serde(default)]
    pub default: Option<CanonicalClass>,
}

impl LabelTable {
    pub fn new(default: Option<CanonicalClass>) -> Self {
        Self {
            labels: BTreeMap::new(),
            default,
        }
    }

    pub fn with(mut self, label: &str, class: CanonicalClass) -> Self {
        self.labels.insert(label.to_string(), class);
        self
    }

    pub fn resolve(&self, label: &str) -> Result<CanonicalClass, AnnotationError> {
        self.labels
            .get(label)
            .copied()
            .or(self.default)
            .ok_or_else(|| AnnotationError::UnknownLabel(label.to_string()))
    }
}

impl Default for LabelTable {
    /// Signs of every kind (billboards, road signs, signs on glass) are the
    /// secondary contour; facades and walls are the primary contour.
    fn default() -> Self {
        let mut table = LabelTable::new(None);
        for label in ["billboard", "sign", "signboard", "road_sign", "glass_sign", "signage"] {
            table = table.with(label, CanonicalClass::Secondary);
        }
        for label in ["building", "facade", "wall"] {
            table = table.with(label, CanonicalClass::Primary);
        }
        table
            .with("sky", CanonicalClass::Sky)
            .with("road", CanonicalClass::Road)
            .with("other", CanonicalClass::Other)
    }
}

/// Fills shapes in list order onto an `Other` background.
///
/// A pixel belongs to a shape when its centre lies inside the shape under
/// the even-odd rule applied to the exterior ring and all holes together, so
/// holes expose whatever earlier shapes painted.
pub fn rasterize(ann: &PolygonAnnotation, table: &LabelTable) -> Result<LabelMask, AnnotationError> {
    let classes = ann
        .shapes
        .iter()
        .map(|s| table.resolve(&s.label))
        .collect::<Result<Vec<_>, _>>()?;
    let mut mask = LabelMask::filled(ann.image_width, ann.image_height, CanonicalClass::Other.id());
    for (shape, class) in ann.shapes.iter().zip(classes) {
        let rings: Vec<&[Point]> = std::iter::once(shape.exterior.as_slice())
            .chain(shape.holes.iter().map(Vec::as_slice))
            .collect();
        fill_rings(&mut mask, &rings, class.id());
    }
    Ok(mask)
}

/// Even-odd scanline fill sampled at pixel centres.
pub fn fill_rings(mask: &mut LabelMask, rings: &[&[Point]], value: u8) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let (min_y, max_y) = rings
        .iter()
        .flat_map(|r| r.iter().map(|p| p.y))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if !min_y.is_finite() || !max_y.is_finite() {
        return;
    }
    let row_start = ((min_y - 0.5).ceil() as i64).max(0);
    let row_end = ((max_y - 0.5).ceil() as i64).min(h);
    let mut crossings = Vec::new();
    for row in row_start..row_end {
        let yc = row as f64 + 0.5;
        crossings.clear();
        for ring in rings {
            let n = ring.len();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                if (a.y <= yc) != (b.y <= yc) {
                    crossings.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let first = ((pair[0] - 0.5).ceil() as i64).max(0);
            let last = ((pair[1] - 0.5).ceil() as i64).min(w);
            for col in first..last {
                mask.set(col as u32, row as u32, value);
            }
        }
    }
}

/// Signed shoelace area (positive for counter-clockwise rings in y-up axes).
pub fn shoelace_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

pub fn perimeter(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (b.x - a.x).hypot(b.y - a.y)
        })
        .sum()
}
