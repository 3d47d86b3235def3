use streetscape_core::dataset::DatasetError;
use streetscape_core::{load_manifest, split, SplitRatios};

use crate::error::{CliError, CliResult};
use crate::files::{read_text, require_file, to_json_pretty, write_bytes};
use crate::SplitArgs;

fn parse_ratios(text: &str) -> CliResult<SplitRatios> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!("ratios must look like a:b:c, got {text:?}")));
    }
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("ratios: {part:?} is not a number")))?;
    }
    SplitRatios::new(values[0], values[1], values[2]).map_err(|e| CliError::usage(format!("ratios: {e}")))
}

pub fn run(args: &SplitArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = seed.ok_or_else(|| CliError::usage("split needs an explicit --seed"))?;
    let ratios = parse_ratios(&args.ratios)?;
    require_file(&args.manifest)?;
    let manifest = load_manifest(&read_text(&args.manifest)?).map_err(|e| match e {
        DatasetError::InvalidRatios { .. } => CliError::usage(format!("ratios: {e}")),
        other => CliError::usage(format!("{}: {other}", args.manifest.display())),
    })?;
    let assignment = split(&manifest, ratios, seed).map_err(|e| CliError::usage(e.to_string()))?;
    write_bytes(&args.out, to_json_pretty(&assignment).as_bytes())?;
    let [train, val, test] = assignment.sizes();
    println!("{train} {val} {test}");
    Ok(())
}
