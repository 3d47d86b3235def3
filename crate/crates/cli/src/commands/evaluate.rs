use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use streetscape_core::{CanonicalClass, ClassMap, ConfusionMatrix, LabelMask};

use crate::error::{CliError, CliResult};
use crate::files::{list_by_stem, load_label_table, load_mask, load_truth, write_bytes, to_json_pretty};
use crate::{EvaluateArgs, IouMode};

const MAX_LISTED: usize = 10;

#[derive(Debug, Serialize)]
struct Report {
    mode: &'static str,
    eval_classes: Vec<u8>,
    per_class_iou: BTreeMap<String, Option<f64>>,
    mean_iou: Option<f64>,
    pixels_evaluated: u64,
    images: usize,
}

fn listing(ids: &[&String]) -> String {
    let mut shown: Vec<&str> = ids.iter().take(MAX_LISTED).map(|s| s.as_str()).collect();
    if ids.len() > MAX_LISTED {
        shown.push("...");
    }
    shown.join(", ")
}

/// Pairs prediction and truth files by stem.
fn pair(args: &EvaluateArgs) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let preds = list_by_stem(&args.pred, &["png"])?;
    let truths = list_by_stem(&args.truth, &["png", "json"])?;
    let missing_truth: Vec<&String> = preds.keys().filter(|k| !truths.contains_key(*k)).collect();
    let missing_pred: Vec<&String> = truths.keys().filter(|k| !preds.contains_key(*k)).collect();
    let mut problems = Vec::new();
    if !missing_truth.is_empty() {
        problems.push(format!("{} prediction(s) without truth: {}", missing_truth.len(), listing(&missing_truth)));
    }
    if !missing_pred.is_empty() {
        problems.push(format!("{} truth file(s) without prediction: {}", missing_pred.len(), listing(&missing_pred)));
    }
    if !problems.is_empty() {
        return Err(CliError::usage(format!("unmatched ids; {}", problems.join("; "))));
    }
    if preds.is_empty() {
        return Err(CliError::usage("no inputs"));
    }
    Ok(preds
        .into_iter()
        .map(|(id, pred)| {
            let truth = truths[&id].clone();
            (id, pred, truth)
        })
        .collect())
}

fn binary_map() -> ClassMap {
    ClassMap::new(CanonicalClass::Other).with(CanonicalClass::Secondary.id(), CanonicalClass::Secondary)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(args: &EvaluateArgs) -> CliResult<()> {
    let mut classes = args.classes.clone();
    classes.sort_unstable();
    classes.dedup();
    let eval: Vec<u8> = if args.billboard_only {
        vec![CanonicalClass::Secondary.id()]
    } else {
        args.eval.clone().unwrap_or_else(|| classes.clone())
    };
    let template = ConfusionMatrix::new(&classes).map_err(|e| CliError::usage(format!("--classes: {e}")))?;
    if let Some(c) = eval.iter().find(|c| !classes.contains(c)) {
        return Err(CliError::usage(format!("eval class {c} is not among --classes {classes:?}")));
    }
    if args.per_image_csv.is_some() && args.mode != IouMode::Macro {
        return Err(CliError::usage("--per-image-csv needs --mode macro"));
    }
    let table = load_label_table(args.label_table.as_deref())?;
    let pairs = pair(args)?;
    let binary = args.binary.then(binary_map);
    let prepare = |m: LabelMask| match &binary {
        Some(map) => m.remap(map),
        None => m,
    };

    let per_image: Vec<(String, ConfusionMatrix)> = pairs
        .par_iter()
        .map(|(id, pred_path, truth_path)| {
            let pred = prepare(load_mask(pred_path)?);
            let truth = prepare(load_truth(truth_path, &table)?);
            let mut cm = template.clone();
            cm.accumulate(&pred, &truth).map_err(|e| CliError::usage(format!("image {id}: {e}")))?;
            Ok((id.clone(), cm))
        })
        .collect::<CliResult<_>>()?;

    let mut total = template.clone();
    for (_, cm) in &per_image {
        total.merge(cm).expect("same label space");
    }
    let name = |c: u8| CanonicalClass::from_id(c).map_or_else(|| c.to_string(), |k| k.name().to_string());
    let (per_class_iou, mean_iou) = match args.mode {
        IouMode::Micro => {
            let per_class = total.iou_per_class().into_iter().map(|(c, v)| (name(c), v)).collect();
            (per_class, total.mean_iou(&eval).expect("validated eval classes"))
        }
        IouMode::Macro => {
            let per_class: BTreeMap<u8, Option<f64>> = classes
                .iter()
                .map(|&c| (c, mean(per_image.iter().filter_map(|(_, cm)| cm.class_counts(c).ok()?.iou()))))
                .collect();
            let mean_iou = mean(eval.iter().filter_map(|c| per_class[c]));
            if let Some(path) = &args.per_image_csv {
                write_per_image(path, &classes, &eval, &per_image)?;
            }
            (per_class.into_iter().map(|(c, v)| (name(c), v)).collect(), mean_iou)
        }
    };
    let report = Report {
        mode: match args.mode {
            IouMode::Micro => "micro",
            IouMode::Macro => "macro",
        },
        eval_classes: eval,
        per_class_iou,
        mean_iou,
        pixels_evaluated: total.total(),
        images: per_image.len(),
    };
    let json = to_json_pretty(&report);
    match &args.out {
        Some(path) => write_bytes(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn write_per_image(
    path: &std::path::Path,
    classes: &[u8],
    eval: &[u8],
    per_image: &[(String, ConfusionMatrix)],
) -> CliResult<()> {
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id".to_string()];
    header.extend(classes.iter().map(|c| format!("iou_{c}")));
    header.push("mean_iou".into());
    w.write_record(&header).expect("in-memory write");
    for (id, cm) in per_image {
        let mut row = vec![id.clone()];
        row.extend(classes.iter().map(|&c| cell(cm.class_counts(c).expect("own class").iou())));
        row.push(cell(cm.mean_iou(eval).expect("validated eval classes")));
        w.write_record(&row).expect("in-memory write");
    }
    write_bytes(path, &w.into_inner().expect("in-memory flush"))
}
