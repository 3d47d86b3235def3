//! Synthetic inputs shared by the benchmarks.

use image::{Rgb, RgbImage};
use streetscape_core::annotation::{Point, Shape};
use streetscape_core::rng::SeededRng;
use streetscape_core::{LabelMask, PolygonAnnotation, Sample};

/// Street-like mask: sky on top, road at the bottom, facade blocks with
/// billboards in between.
pub fn street_mask(w: u32, h: u32) -> LabelMask {
    LabelMask::from_fn(w, h, |x, y| {
        let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
        if fy < 0.2 {
            3
        } else if fy > 0.8 {
            4
        } else if (fx * 6.0).fract() < 0.8 {
            if (0.4..0.5).contains(&fy) && (fx * 12.0).fract() < 0.5 { 2 } else { 1 }
        } else {
            0
        }
    })
}

pub fn noisy_mask(w: u32, h: u32, seed: u64) -> LabelMask {
    let mut rng = SeededRng::new(seed);
    LabelMask::from_fn(w, h, |_, _| rng.below(3) as u8)
}

pub fn street_image(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]))
}

pub fn street_sample(w: u32, h: u32) -> Sample {
    Sample::new(street_image(w, h), street_mask(w, h)).expect("matching sizes")
}

/// `n` regular polygons with `sides` vertices spread over the image.
pub fn polygon_annotation(w: u32, h: u32, n: usize, sides: usize) -> PolygonAnnotation {
    let mut rng = SeededRng::new(7);
    let shapes = (0..n)
        .map(|i| {
            let (cx, cy) = (rng.uniform(0.0, w as f64), rng.uniform(0.0, h as f64));
            let r = rng.uniform(10.0, w as f64 / 6.0);
            let ring = (0..sides)
                .map(|k| {
                    let a = k as f64 / sides as f64 * std::f64::consts::TAU;
                    Point { x: cx + r * a.cos(), y: cy + r * a.sin() }
                })
                .collect();
            Shape::polygon(if i % 3 == 0 { "billboard" } else { "building" }, ring)
        })
        .collect();
    PolygonAnnotation {
        image_id: "bench".into(),
        image_width: w,
        image_height: h,
        shapes,
    }
}
