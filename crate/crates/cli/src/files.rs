use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use streetscape_core::{load_mask_png, parse_annotation, rasterize, save_mask_png, LabelMask, LabelTable};

use crate::error::{CliError, CliResult};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

pub fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(path, "not a directory"))
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(path, "no such file"))
    }
}

/// Files in `dir` with one of `extensions`, keyed by stem. Two files sharing
/// a stem are a usage error.
pub fn list_by_stem(dir: &Path, extensions: &[&str]) -> CliResult<BTreeMap<String, PathBuf>> {
    require_dir(dir)?;
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(ext) = extension(&path) else { continue };
        if !extensions.contains(&ext.as_str()) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(CliError::usage(format!(
                "{} and {} share the id {stem:?}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn load_image(path: &Path) -> CliResult<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })?;
    Ok(img.to_rgb8())
}

pub fn save_image(path: &Path, img: &RgbImage) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    img.save(path).map_err(|e| CliError::io(path, e))
}

pub fn load_mask(path: &Path) -> CliResult<LabelMask> {
    load_mask_png(&read_bytes(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn save_mask(path: &Path, mask: &LabelMask) -> CliResult<()> {
    let bytes = save_mask_png(mask).map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
    write_bytes(path, &bytes)
}

pub fn is_json(path: &Path) -> bool {
    extension(path).as_deref() == Some("json")
}

/// A PNG mask, or a polygon JSON annotation rasterized through `table`.
pub fn load_truth(path: &Path, table: &LabelTable) -> CliResult<LabelMask> {
    if !is_json(path) {
        return load_mask(path);
    }
    let text = read_text(path)?;
    let ann = parse_annotation(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    rasterize(&ann, table).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn load_label_table(path: Option<&Path>) -> CliResult<LabelTable> {
    match path {
        None => Ok(LabelTable::default()),
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::usage(format!("{}: invalid label table: {e}", p.display()))),
    }
}

pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}
