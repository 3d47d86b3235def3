use rayon::prelude::*;

use crate::commands::models::Models;
use crate::error::{CliError, CliResult};
use crate::files::{create_dir, list_by_stem, load_image, save_mask, IMAGE_EXTENSIONS};
use crate::InferArgs;

pub fn run(args: &InferArgs, jobs: usize) -> CliResult<()> {
    let images = list_by_stem(&args.images, IMAGE_EXTENSIONS)?;
    if images.is_empty() {
        return Err(CliError::usage("no inputs"));
    }
    let models = Models::load(&args.models, jobs)?;
    create_dir(&args.out)?;
    images.par_iter().try_for_each(|(id, path)| {
        let mask = models.predict(id, &load_image(path)?)?;
        save_mask(&args.out.join(format!("{id}.png")), &mask)
    })?;
    println!("wrote {} masks", images.len());
    Ok(())
}
