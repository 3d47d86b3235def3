use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use streetscape_core::{aggregate, analyze_with, render_overlay, CanonicalClass, ContourReport, DenominatorMode, LabelMask, OverlayStyle};

use crate::commands::models::Models;
use crate::error::{CliError, CliResult};
use crate::files::{create_dir, list_by_stem, load_image, load_mask, save_image, to_json_pretty, write_bytes, IMAGE_EXTENSIONS};
use crate::{AnalyzeArgs, Denominator};

const CSV_CLASSES: [(CanonicalClass, &str); 6] = [
    (CanonicalClass::Primary, "primary_pct"),
    (CanonicalClass::Secondary, "secondary_pct"),
    (CanonicalClass::Sky, "sky_pct"),
    (CanonicalClass::Road, "road_pct"),
    (CanonicalClass::Other, "other_pct"),
    (CanonicalClass::Ignore, "ignore_pct"),
];

fn pct(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{:.6}", x * 100.0))
}

/// Per-image CSV; coverages and `ratio_sp` are percentages, undefined values
/// are empty cells.
pub fn reports_csv(reports: &[ContourReport]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id"];
    header.extend(CSV_CLASSES.iter().map(|(_, name)| *name));
    header.push("ratio_sp");
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![r.image_id.clone()];
        row.extend(CSV_CLASSES.iter().map(|(c, _)| pct(r.coverage.get(c).copied())));
        row.push(pct(r.ratio_sp));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

enum Source {
    Masks(BTreeMap<String, PathBuf>),
    Models(Models),
}

pub fn run(args: &AnalyzeArgs, jobs: usize) -> CliResult<()> {
    let mode = match args.denominator {
        Denominator::Whole => DenominatorMode::WholeImage,
        Denominator::NonSkyRoad => DenominatorMode::NonSkyRoad,
    };
    let images = match &args.images {
        Some(dir) => Some(list_by_stem(dir, IMAGE_EXTENSIONS)?),
        None => None,
    };
    let source = match &args.masks {
        Some(dir) => Source::Masks(list_by_stem(dir, &["png"])?),
        None => {
            if images.is_none() {
                return Err(CliError::usage("give either --masks or --images with model configs"));
            }
            Source::Models(Models::load(&args.models, jobs)?)
        }
    };
    if args.overlay && images.is_none() {
        return Err(CliError::usage("--overlay needs --images"));
    }
    let ids: Vec<String> = match &source {
        Source::Masks(masks) => masks.keys().cloned().collect(),
        Source::Models(_) => images.as_ref().expect("checked").keys().cloned().collect(),
    };
    if ids.is_empty() {
        return Err(CliError::usage("no inputs"));
    }
    if args.overlay {
        let imgs = images.as_ref().expect("checked");
        if let Some(id) = ids.iter().find(|id| !imgs.contains_key(*id)) {
            return Err(CliError::usage(format!("no image for mask {id}")));
        }
    }
    create_dir(&args.out)?;
    let overlay_dir = args.out.join("overlays");
    if args.overlay {
        create_dir(&overlay_dir)?;
    }
    let style = OverlayStyle::default();

    let reports: Vec<ContourReport> = ids
        .par_iter()
        .map(|id| {
            let image = match (&images, args.overlay || matches!(source, Source::Models(_))) {
                (Some(imgs), true) => Some(load_image(&imgs[id])?),
                _ => None,
            };
            let mask: LabelMask = match &source {
                Source::Masks(masks) => load_mask(&masks[id])?,
                Source::Models(models) => models.predict(id, image.as_ref().expect("loaded"))?,
            };
            let report = analyze_with(&mask, id, mode).map_err(|e| CliError::usage(format!("image {id}: {e}")))?;
            if args.overlay {
                let img = image.as_ref().expect("loaded");
                let out = render_overlay(img, &mask, &style).map_err(|e| CliError::usage(format!("image {id}: {e}")))?;
                save_image(&overlay_path(&overlay_dir, id), &out)?;
            }
            log::debug!("{id}: ratio_sp {:?}", report.ratio_sp);
            Ok(report)
        })
        .collect::<CliResult<_>>()?;

    write_bytes(&args.out.join("contours.csv"), &reports_csv(&reports))?;
    let summary = aggregate(&reports).map_err(|e| CliError::usage(e.to_string()))?;
    write_bytes(&args.out.join("summary.json"), to_json_pretty(&summary).as_bytes())?;
    println!("analyzed {} images", reports.len());
    Ok(())
}

pub fn overlay_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.png"))
}
