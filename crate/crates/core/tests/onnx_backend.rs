#![cfg(feature = "onnx")]

use std::path::PathBuf;

use image::{Rgb, RgbImage};
use streetscape_core::inference::{predict_secondary, InferenceError, ModelConfig, OnnxBackend, SegmentationBackend};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn tiny_config() -> ModelConfig {
    let json = r#"{"model_path": "tiny_binary.onnx", "label_space": [0, 1], "input_size": [8, 8],
                   "normalization": {"mean": [0, 0, 0], "std": [1, 1, 1]}, "billboard_class": 1}"#;
    ModelConfig::from_json(json, &fixture("")).unwrap()
}

#[test]
fn tiny_model_thresholds_red_channel() {
    let mut backend = OnnxBackend::load(&tiny_config()).unwrap();
    assert_eq!(backend.label_space(), &[0, 1]);
    // left half saturated red, right half dark; 16x16 input is resized to the 8x8 model grid
    let img = RgbImage::from_fn(16, 16, |x, _| if x < 8 { Rgb([255, 0, 0]) } else { Rgb([20, 0, 0]) });
    let mask = predict_secondary(&img, &mut backend, &tiny_config().secondary_config(0.5)).unwrap();
    assert_eq!(mask.dimensions(), (16, 16));
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(mask.get(x, y), if x < 8 { 2 } else { 0 }, "({x},{y})");
        }
    }
}

#[test]
fn backend_is_deterministic() {
    let mut backend = OnnxBackend::load(&tiny_config()).unwrap();
    let img = RgbImage::from_fn(8, 8, |x, y| Rgb([(x * 30 + y * 3) as u8, 0, 0]));
    let a = backend.infer(&img).unwrap();
    let b = backend.infer(&img).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_model_file() {
    let mut cfg = tiny_config();
    cfg.model_path = fixture("absent.onnx");
    let err = OnnxBackend::load(&cfg).unwrap_err();
    assert!(matches!(err, InferenceError::MissingModel(ref p) if p.ends_with("absent.onnx")));
}
