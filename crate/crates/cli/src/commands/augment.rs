use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use streetscape_core::dataset::ManifestEntry;
use streetscape_core::{apply_pipeline, load_manifest, AugmentSpec, DatasetManifest, LabelMask, LabelTable, Sample, IGNORE};

use crate::error::{CliError, CliResult};
use crate::files::{is_json, load_image, load_truth, read_bytes, read_text, require_file, save_image, save_mask, write_bytes};
use crate::AugmentArgs;

/// Rejects absolute paths and `..` so outputs stay inside the output dir.
fn relative(path: &str) -> CliResult<PathBuf> {
    let p = PathBuf::from(path);
    if p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        Ok(p)
    } else {
        Err(CliError::usage(format!("manifest path {path:?} must be relative and stay below the manifest")))
    }
}

fn copy(from: &Path, to: &Path) -> CliResult<()> {
    write_bytes(to, &read_bytes(from)?)
}

/// Output paths for one entry; polygon annotations become PNG masks once
/// the sample changes.
struct Job<'a> {
    entry: &'a ManifestEntry,
    image: PathBuf,
    annotation: Option<PathBuf>,
}

fn process(job: &Job, root: &Path, out: &Path, spec: &AugmentSpec, table: &LabelTable) -> CliResult<ManifestEntry> {
    let id = &job.entry.id;
    let image_src = root.join(&job.image);
    let image = load_image(&image_src)?;
    let mask = match &job.annotation {
        Some(rel) => load_truth(&root.join(rel), table)?,
        None => LabelMask::filled(image.width(), image.height(), IGNORE),
    };
    let sample = Sample::new(image, mask).map_err(|e| CliError::usage(format!("entry {id}: {e}")))?;
    let result = apply_pipeline(spec, &sample, id).map_err(|e| CliError::usage(format!("entry {id}: {e}")))?;
    let mut entry = job.entry.clone();
    if result == sample {
        copy(&image_src, &out.join(&job.image))?;
        if let Some(rel) = &job.annotation {
            copy(&root.join(rel), &out.join(rel))?;
        }
        return Ok(entry);
    }
    let (image, mask) = result.into_parts();
    save_image(&out.join(&job.image), &image)?;
    if let Some(rel) = &job.annotation {
        let mask_rel = if is_json(rel) { rel.with_extension("png") } else { rel.clone() };
        save_mask(&out.join(&mask_rel), &mask)?;
        entry.annotation_path = Some(mask_rel.to_string_lossy().replace('\\', "/"));
    }
    Ok(entry)
}

pub fn run(args: &AugmentArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = seed.ok_or_else(|| CliError::usage("augment needs an explicit --seed"))?;
    require_file(&args.spec)?;
    require_file(&args.manifest)?;
    let mut spec = AugmentSpec::from_json(&read_text(&args.spec)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.spec.display())))?;
    spec.base_seed = seed;
    let manifest = load_manifest(&read_text(&args.manifest)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.manifest.display())))?;
    let root = args.manifest.parent().unwrap_or(Path::new("."));
    let jobs = manifest
        .entries()
        .iter()
        .map(|entry| {
            Ok(Job {
                entry,
                image: relative(&entry.image_path)?,
                annotation: entry.annotation_path.as_deref().map(relative).transpose()?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let table = LabelTable::default();
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    let every = args.progress_every.max(1);
    let entries = jobs
        .par_iter()
        .map(|job| {
            let entry = process(job, root, &args.out, &spec, &table)?;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(every) || n == total {
                eprintln!("augmented {n}/{total}");
            }
            Ok(entry)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out_manifest = DatasetManifest::new(entries).map_err(|e| CliError::usage(e.to_string()))?;
    write_bytes(&args.out.join("manifest.csv"), out_manifest.to_csv().as_bytes())?;
    println!("augmented {total} entries");
    Ok(())
}
