use rayon::prelude::*;
use streetscape_core::{render_overlay, OverlayStyle};

use crate::commands::analyze::overlay_path;
use crate::error::{CliError, CliResult};
use crate::files::{create_dir, list_by_stem, load_image, load_mask, save_image, IMAGE_EXTENSIONS};
use crate::OverlayArgs;

pub fn run(args: &OverlayArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::usage(format!("--alpha {} is outside [0, 1]", args.alpha)));
    }
    let style = OverlayStyle {
        alpha: args.alpha,
        ..OverlayStyle::default()
    };
    let images = list_by_stem(&args.images, IMAGE_EXTENSIONS)?;
    let masks = list_by_stem(&args.masks, &["png"])?;
    if masks.is_empty() {
        return Err(CliError::usage("no inputs"));
    }
    if let Some(id) = masks.keys().find(|id| !images.contains_key(*id)) {
        return Err(CliError::usage(format!("no image for mask {id}")));
    }
    create_dir(&args.out)?;
    masks.par_iter().try_for_each(|(id, mask_path)| {
        let image = load_image(&images[id])?;
        let mask = load_mask(mask_path)?;
        let out = render_overlay(&image, &mask, &style).map_err(|e| CliError::usage(format!("image {id}: {e}")))?;
        save_image(&overlay_path(&args.out, id), &out)
    })?;
    println!("wrote {} overlays", masks.len());
    Ok(())
}
