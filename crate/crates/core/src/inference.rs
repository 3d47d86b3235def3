//! Segmentation model inference behind a pluggable backend.
//!
//! A [`SegmentationBackend`] turns an RGB image into either per-class score
//! planes or a label map at the model's own resolution. Post-processing
//! (argmax, thresholding, remapping) happens on that grid and the resulting
//! label map is brought back to the input size by nearest neighbour.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::resize_image;
use crate::mask::{merge, CanonicalClass, ClassMap, LabelMask, MaskError};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("model file not found: {}", .0.display())]
    MissingModel(PathBuf),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("backend produced a non-finite score")]
    NonFiniteScores,
    #[error("backend output shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Nchw,
    Nhwc,
}

/// Per-channel statistics on the `[0, 1]` scale, in RGB order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    pub const IMAGENET: Normalization = Normalization {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    pub const NONE: Normalization = Normalization {
        mean: [0.0; 3],
        std: [1.0; 3],
    };
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IMAGENET
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreprocessSpec {
    /// `(width, height)` to resize to; `None` keeps the input size.
    pub target_size: Option<(u32, u32)>,
    pub normalization: Normalization,
    pub channel_order: ChannelOrder,
    pub layout: Layout,
}

impl PreprocessSpec {
    fn validate(&self) -> Result<(), InferenceError> {
        if let Some((w, h)) = self.target_size {
            if w == 0 || h == 0 {
                return Err(InferenceError::Config(format!("target size {w}x{h} has a zero side")));
            }
        }
        let n = &self.normalization;
        if n.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || n.mean.iter().any(|m| !m.is_finite()) {
            return Err(InferenceError::Config("normalization std must be positive and finite".into()));
        }
        Ok(())
    }
}

/// A batch-of-one float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

pub fn preprocess(image: &RgbImage, spec: &PreprocessSpec) -> Result<InputTensor, InferenceError> {
    spec.validate()?;
    let resized;
    let img = match spec.target_size {
        Some((w, h)) if (w, h) != image.dimensions() => {
            resized = resize_image(image, w, h);
            &resized
        }
        _ => image,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let order: [usize; 3] = match spec.channel_order {
        ChannelOrder::Rgb => [0, 1, 2],
        ChannelOrder::Bgr => [2, 1, 0],
    };
    let Normalization { mean, std } = spec.normalization;
    let norm = |px: &image::Rgb<u8>, slot: usize| {
        let c = order[slot];
        (px[c] as f32 / 255.0 - mean[c]) / std[c]
    };
    let mut data = vec![0f32; 3 * w * h];
    match spec.layout {
        Layout::Nchw => {
            for (i, px) in img.pixels().enumerate() {
                for slot in 0..3 {
                    data[slot * w * h + i] = norm(px, slot);
                }
            }
        }
        Layout::Nhwc => {
            for (i, px) in img.pixels().enumerate() {
                for slot in 0..3 {
                    data[i * 3 + slot] = norm(px, slot);
                }
            }
        }
    }
    let shape = match spec.layout {
        Layout::Nchw => [1, 3, h, w],
        Layout::Nhwc => [1, h, w, 3],
    };
    Ok(InputTensor { shape, data })
}

/// Class score planes, channel-major: `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: u32, height: u32, channels: usize, data: Vec<f32>) -> Result<Self, InferenceError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(InferenceError::Shape(format!("empty score map {channels}x{height}x{width}")));
        }
        if data.len() != channels * width as usize * height as usize {
            return Err(InferenceError::Shape(format!(
                "{} scores for a {channels}x{height}x{width} map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::NonFiniteScores);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn score(&self, channel: usize, pixel: usize) -> f32 {
        self.data[channel * self.plane_len() + pixel]
    }

    /// Index of the highest score per pixel; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.plane_len())
            .map(|i| {
                let mut best = 0;
                for c in 1..self.channels {
                    if self.score(c, i) > self.score(best, i) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Probability of `channel` per pixel: sigmoid for a single channel,
    /// softmax across channels otherwise.
    pub fn probability(&self, channel: usize) -> Vec<f32> {
        if self.channels == 1 {
            return self.data.iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect();
        }
        (0..self.plane_len())
            .map(|i| {
                let max = (0..self.channels).map(|c| self.score(c, i)).fold(f32::NEG_INFINITY, f32::max);
                let denom: f32 = (0..self.channels).map(|c| (self.score(c, i) - max).exp()).sum();
                (self.score(channel, i) - max).exp() / denom
            })
            .collect()
    }
}

/// Raw model output at model resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendOutput {
    Scores(ScoreMap),
    /// Per-pixel output channel index, for models that emit label maps.
    Labels(LabelMask),
}

impl BackendOutput {
    fn dimensions(&self) -> (u32, u32) {
        match self {
            BackendOutput::Scores(s) => s.dimensions(),
            BackendOutput::Labels(l) => l.dimensions(),
        }
    }
}

pub trait SegmentationBackend {
    /// Source label id of every output channel, in channel order.
    fn label_space(&self) -> &[u8];

    fn infer(&mut self, image: &RgbImage) -> Result<BackendOutput, InferenceError>;
}

impl<B: SegmentationBackend + ?Sized> SegmentationBackend for Box<B> {
    fn label_space(&self) -> &[u8] {
        (**self).label_space()
    }

    fn infer(&mut self, image: &RgbImage) -> Result<BackendOutput, InferenceError> {
        (**self).infer(image)
    }
}

/// Nearest-neighbour resize of a label grid.
pub fn upsample_nearest(labels: &LabelMask, width: u32, height: u32) -> LabelMask {
    if labels.dimensions() == (width, height) {
        return labels.clone();
    }
    let (sw, sh) = labels.dimensions();
    let src = |dst: u32, dst_len: u32, src_len: u32| {
        (((dst as u64 * 2 + 1) * src_len as u64) / (2 * dst_len as u64)).min(src_len as u64 - 1) as u32
    };
    let xs: Vec<u32> = (0..width).map(|x| src(x, width, sw)).collect();
    LabelMask::from_fn(width, height, |x, y| labels.get(xs[x as usize], src(y, height, sh)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondaryConfig {
    pub threshold: f32,
    /// Label id of the billboard channel; defaults to 1 when the model has
    /// two channels and is ignored for single-channel (sigmoid) heads.
    pub billboard_class: Option<u8>,
}

impl Default for SecondaryConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            billboard_class: None,
        }
    }
}

fn billboard_channel(label_space: &[u8], channels: usize, config: &SecondaryConfig) -> Result<usize, InferenceError> {
    if channels == 1 {
        return Ok(0);
    }
    match config.billboard_class {
        Some(id) => label_space
            .iter()
            .position(|&l| l == id)
            .filter(|&c| c < channels)
            .ok_or_else(|| InferenceError::Config(format!("billboard class {id} is not in the label space {label_space:?}"))),
        None if channels == 2 => Ok(1),
        None => Err(InferenceError::Config(format!(
            "model has {channels} channels; set billboard_class to pick the billboard one"
        ))),
    }
}

fn check_label_space(backend_labels: &[u8], channels: usize) -> Result<(), InferenceError> {
    if backend_labels.len() != channels {
        return Err(InferenceError::Config(format!(
            "label space lists {} classes but the model produced {channels} channels",
            backend_labels.len()
        )));
    }
    Ok(())
}

/// Billboard mask in canonical ids (`Secondary` or `Other`).
pub fn predict_secondary<B: SegmentationBackend + ?Sized>(
    image: &RgbImage,
    backend: &mut B,
    config: &SecondaryConfig,
) -> Result<LabelMask, InferenceError> {
    let (w, h) = image.dimensions();
    let (s, o) = (CanonicalClass::Secondary.id(), CanonicalClass::Other.id());
    let output = backend.infer(image)?;
    let (mw, mh) = output.dimensions();
    let small = match output {
        BackendOutput::Scores(scores) => {
            check_label_space(backend.label_space(), scores.channels())?;
            let channel = billboard_channel(backend.label_space(), scores.channels(), config)?;
            let probs = scores.probability(channel);
            LabelMask::new(mw, mh, probs.iter().map(|&p| if p >= config.threshold { s } else { o }).collect())?
        }
        BackendOutput::Labels(labels) => {
            let channels = backend.label_space().len();
            let channel = billboard_channel(backend.label_space(), channels.max(2), config)?;
            let data = labels.data().iter().map(|&l| if l as usize == channel { s } else { o }).collect();
            LabelMask::new(mw, mh, data)?
        }
    };
    Ok(upsample_nearest(&small, w, h))
}

/// Argmax over the backend's classes, remapped to canonical ids.
pub fn predict_primary<B: SegmentationBackend + ?Sized>(
    image: &RgbImage,
    backend: &mut B,
    class_map: &ClassMap,
) -> Result<LabelMask, InferenceError> {
    let (w, h) = image.dimensions();
    let output = backend.infer(image)?;
    let labels = backend.label_space();
    let (mw, mh) = output.dimensions();
    let channel_to_id = |c: usize| {
        labels
            .get(c)
            .copied()
            .ok_or_else(|| InferenceError::Config(format!("output channel {c} has no entry in the label space")))
    };
    let source = match output {
        BackendOutput::Scores(scores) => {
            check_label_space(labels, scores.channels())?;
            let ids = scores.argmax().into_iter().map(channel_to_id).collect::<Result<Vec<_>, _>>()?;
            LabelMask::new(mw, mh, ids)?
        }
        BackendOutput::Labels(map) => {
            let ids = map.data().iter().map(|&c| channel_to_id(c as usize)).collect::<Result<Vec<_>, _>>()?;
            LabelMask::new(mw, mh, ids)?
        }
    };
    Ok(upsample_nearest(&source.remap(class_map), w, h))
}

/// Primary prediction with billboards painted over it.
pub fn predict_composite<P, S>(
    image: &RgbImage,
    primary: &mut P,
    secondary: &mut S,
    class_map: &ClassMap,
    secondary_config: &SecondaryConfig,
) -> Result<LabelMask, InferenceError>
where
    P: SegmentationBackend + ?Sized,
    S: SegmentationBackend + ?Sized,
{
    let p = predict_primary(image, primary, class_map)?;
    let s = predict_secondary(image, secondary, secondary_config)?;
    Ok(merge(&p, &s)?)
}

/// On-disk model description (`model-config.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Relative paths are resolved against the config file's directory.
    pub model_path: PathBuf,
    pub label_space: Vec<u8>,
    /// `[width, height]` of the model input.
    pub input_size: [u32; 2],
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub billboard_class: Option<u8>,
    #[serde(default)]
    pub channel_order: ChannelOrder,
    #[serde(default)]
    pub layout: Layout,
}

impl ModelConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, InferenceError> {
        let mut config: ModelConfig =
            serde_json::from_str(text).map_err(|e| InferenceError::Config(e.to_string()))?;
        if config.model_path.is_relative() {
            config.model_path = base_dir.join(&config.model_path);
        }
        if config.label_space.is_empty() {
            return Err(InferenceError::Config("label_space must not be empty".into()));
        }
        config.preprocess_spec().validate()?;
        Ok(config)
    }

    /// Reads a config file and checks that the model file it names exists.
    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        let text = std::fs::read_to_string(path).map_err(|source| InferenceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))?;
        if !config.model_path.is_file() {
            return Err(InferenceError::MissingModel(config.model_path));
        }
        Ok(config)
    }

    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            target_size: Some((self.input_size[0], self.input_size[1])),
            normalization: self.normalization,
            channel_order: self.channel_order,
            layout: self.layout,
        }
    }

    pub fn secondary_config(&self, threshold: f32) -> SecondaryConfig {
        SecondaryConfig {
            threshold,
            billboard_class: self.billboard_class,
        }
    }
}

/// Hands out backends to one caller at a time.
pub struct BackendPool<B> {
    idle: Mutex<Vec<B>>,
    available: Condvar,
}

impl<B> BackendPool<B> {
    /// Panics if `backends` is empty.
    pub fn new(backends: Vec<B>) -> Self {
        assert!(!backends.is_empty(), "backend pool needs at least one backend");
        Self {
            idle: Mutex::new(backends),
            available: Condvar::new(),
        }
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut B) -> R) -> R {
        let mut backend = {
            let mut idle = self.idle.lock().expect("backend pool poisoned");
            loop {
                if let Some(b) = idle.pop() {
                    break b;
                }
                idle = self.available.wait(idle).expect("backend pool poisoned");
            }
        };
        let result = f(&mut backend);
        self.idle.lock().expect("backend pool poisoned").push(backend);
        self.available.notify_one();
        result
    }
}

#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

#[cfg(feature = "onnx")]
mod onnx {
    use super::*;
    use tract_onnx::prelude::*;

    type Plan = std::sync::Arc<TypedRunnableModel>;

    /// ONNX model executed with tract. The graph input is fixed to the
    /// configured `input_size`. Clones share the loaded plan.
    #[derive(Clone)]
    pub struct OnnxBackend {
        plan: Plan,
        config: ModelConfig,
    }

    impl std::fmt::Debug for OnnxBackend {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.debug_struct("OnnxBackend").field("model", &self.config.model_path).finish()
        }
    }

    fn backend_err(context: &str, e: impl std::fmt::Display) -> InferenceError {
        InferenceError::Backend(format!("{context}: {e}"))
    }

    impl OnnxBackend {
        pub fn load(config: &ModelConfig) -> Result<Self, InferenceError> {
            if !config.model_path.is_file() {
                return Err(InferenceError::MissingModel(config.model_path.clone()));
            }
            let [w, h] = config.input_size;
            let shape: [usize; 4] = match config.layout {
                Layout::Nchw => [1, 3, h as usize, w as usize],
                Layout::Nhwc => [1, h as usize, w as usize, 3],
            };
            let path = config.model_path.display().to_string();
            let plan = tract_onnx::onnx()
                .model_for_path(&config.model_path)
                .map_err(|e| backend_err(&format!("loading {path}"), e))?
                .with_input_fact(0, f32::fact(shape).into())
                .map_err(|e| backend_err(&format!("fixing input shape of {path}"), e))?
                .into_optimized()
                .map_err(|e| backend_err(&format!("optimizing {path}"), e))?
                .into_runnable()
                .map_err(|e| backend_err(&format!("planning {path}"), e))?;
            Ok(Self {
                plan,
                config: config.clone(),
            })
        }

        pub fn config(&self) -> &ModelConfig {
            &self.config
        }
    }

    impl SegmentationBackend for OnnxBackend {
        fn label_space(&self) -> &[u8] {
            &self.config.label_space
        }

        fn infer(&mut self, image: &RgbImage) -> Result<BackendOutput, InferenceError> {
            let input = preprocess(image, &self.config.preprocess_spec())?;
            let tensor = tract_ndarray::Array4::from_shape_vec(input.shape, input.data)
                .map_err(|e| backend_err("building input", e))?
                .into_tensor();
            let outputs = self.plan.run(tvec!(tensor.into())).map_err(|e| backend_err("running model", e))?;
            let out = outputs.first().ok_or_else(|| InferenceError::Shape("model produced no outputs".into()))?;
            let dims = out.shape().to_vec();
            if out.datum_type().is_float() {
                let out = out.cast_to::<f32>().map_err(|e| backend_err("reading scores", e))?;
                let view = out.to_plain_array_view::<f32>().map_err(|e| backend_err("reading scores", e))?;
                let (c, h, w) = match dims.as_slice() {
                    [1, c, h, w] => (*c, *h, *w),
                    [c, h, w] => (*c, *h, *w),
                    other => return Err(InferenceError::Shape(format!("expected (1, C, H, W) scores, got {other:?}"))),
                };
                let data: Vec<f32> = view.iter().copied().collect();
                Ok(BackendOutput::Scores(ScoreMap::new(w as u32, h as u32, c, data)?))
            } else {
                let out = out.cast_to::<i64>().map_err(|e| backend_err("reading labels", e))?;
                let view = out.to_plain_array_view::<i64>().map_err(|e| backend_err("reading labels", e))?;
                let (h, w) = match dims.as_slice() {
                    [1, 1, h, w] | [1, h, w] => (*h, *w),
                    [h, w] => (*h, *w),
                    other => return Err(InferenceError::Shape(format!("expected (1, H, W) labels, got {other:?}"))),
                };
                let data = view
                    .iter()
                    .map(|&v| u8::try_from(v).map_err(|_| InferenceError::Shape(format!("label {v} out of range"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(BackendOutput::Labels(LabelMask::new(w as u32, h as u32, data)?))
            }
        }
    }
}
