use std::path::Path;

use image::RgbImage;
use streetscape_core::inference::{BackendPool, InferenceError, SecondaryConfig};
use streetscape_core::{predict_composite, ClassMap, LabelMask, ModelConfig, SegmentationBackend};

use crate::error::{CliError, CliResult};
use crate::files::read_text;
use crate::ModelOpts;

type DynBackend = Box<dyn SegmentationBackend + Send>;

/// Facade and billboard backends, `jobs` of each.
pub struct Models {
    primary: BackendPool<DynBackend>,
    secondary: BackendPool<DynBackend>,
    class_map: ClassMap,
    secondary_config: SecondaryConfig,
}

fn config_error(path: &Path, e: InferenceError) -> CliError {
    match e {
        InferenceError::Config(_) => CliError::usage(format!("{}: {e}", path.display())),
        other => CliError::env(format!("{}: {other}", path.display())),
    }
}

fn load_config(path: &Path) -> CliResult<ModelConfig> {
    ModelConfig::load(path).map_err(|e| config_error(path, e))
}

#[cfg(feature = "onnx")]
fn load_backends(config: &ModelConfig, path: &Path, jobs: usize) -> CliResult<Vec<DynBackend>> {
    let backend = streetscape_core::inference::OnnxBackend::load(config).map_err(|e| config_error(path, e))?;
    Ok((0..jobs).map(|_| Box::new(backend.clone()) as DynBackend).collect())
}

#[cfg(not(feature = "onnx"))]
fn load_backends(_config: &ModelConfig, path: &Path, _jobs: usize) -> CliResult<Vec<DynBackend>> {
    Err(CliError::env(format!(
        "{}: this build has no ONNX support (enable the `onnx` feature)",
        path.display()
    )))
}

impl Models {
    pub fn load(opts: &ModelOpts, jobs: usize) -> CliResult<Self> {
        let (Some(p_path), Some(s_path)) = (&opts.primary_model, &opts.secondary_model) else {
            return Err(CliError::usage("both --primary-model and --secondary-model are required"));
        };
        if !(0.0..=1.0).contains(&opts.threshold) {
            return Err(CliError::usage(format!("--threshold {} is outside [0, 1]", opts.threshold)));
        }
        let class_map = match &opts.class_map {
            None => ClassMap::cityscapes_train_ids(),
            Some(path) => serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::usage(format!("{}: invalid class map: {e}", path.display())))?,
        };
        let p_config = load_config(p_path)?;
        let s_config = load_config(s_path)?;
        let jobs = jobs.max(1);
        Ok(Self {
            primary: BackendPool::new(load_backends(&p_config, p_path, jobs)?),
            secondary: BackendPool::new(load_backends(&s_config, s_path, jobs)?),
            class_map,
            secondary_config: s_config.secondary_config(opts.threshold),
        })
    }

    pub fn predict(&self, id: &str, image: &RgbImage) -> CliResult<LabelMask> {
        self.primary
            .with(|p| {
                self.secondary
                    .with(|s| predict_composite(image, p, s, &self.class_map, &self.secondary_config))
            })
            .map_err(|e| CliError::env(format!("image {id}: {e}")))
    }
}
