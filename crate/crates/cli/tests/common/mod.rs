#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use streetscape_core::{save_mask_png, CanonicalClass, LabelMask};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streetscape"))
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run(args: &[&str]) -> Run {
    let Output { status, stdout, stderr } = bin().args(args).output().expect("spawn streetscape");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub fn write_mask(path: &Path, mask: &LabelMask) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, save_mask_png(mask).unwrap()).unwrap();
}

pub fn write_image(path: &Path, img: &RgbImage) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    img.save(path).unwrap();
}

pub fn textured(w: u32, h: u32, salt: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 + salt) as u8, (y * 11 + salt * 3) as u8, ((x ^ y) * 5) as u8]))
}

/// 1000x1000 mask with exactly `primary` and `secondary` pixels; the rest
/// is `Other`.
pub fn coverage_mask(primary: usize, secondary: usize) -> LabelMask {
    let mut data = vec![CanonicalClass::Other.id(); 1_000_000];
    data[..primary].fill(CanonicalClass::Primary.id());
    data[primary..primary + secondary].fill(CanonicalClass::Secondary.id());
    LabelMask::new(1000, 1000, data).unwrap()
}

/// Relative file paths under `root` with their contents, sorted.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

pub fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}
