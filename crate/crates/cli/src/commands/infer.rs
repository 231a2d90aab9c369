use std::path::Path;
use std::time::Instant;

use disparity_core::data::{load_image, save_disparity, save_image};
use disparity_core::train::load_checkpoint;

use super::{predict_padded, read_bytes, sidecar};
use crate::colormap;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub fn run(checkpoint: &Path, left: &Path, right: &Path, out: &Path, color: Option<&Path>, argv: &[String]) -> CliResult<()> {
    let mut manifest = RunManifest::start("infer", argv);
    let ck = load_checkpoint::<f32>(&read_bytes(checkpoint)?).map_err(|e| CliError::from(e).context(checkpoint.display()))?;
    let pre = ck.preprocess.clone();
    let (model, _, _) = ck.into_model()?;
    let l = load_image(left).map_err(|e| CliError::from(e).context(left.display()))?;
    let r = load_image(right).map_err(|e| CliError::from(e).context(right.display()))?;
    let started = Instant::now();
    let disp = predict_padded(&model, &pre, &l, &r)?;
    let ms = started.elapsed().as_secs_f64() * 1e3;
    save_disparity(out, &disp)?;
    manifest.outputs.push(out.to_path_buf());
    if let Some(c) = color {
        save_image(c, &colormap::render(&disp, None))?;
        manifest.outputs.push(c.to_path_buf());
    }
    println!("inference_ms={ms:.3} height={} width={}", disp.shape().h, disp.shape().w);
    manifest.inputs = vec![checkpoint.into(), left.into(), right.into()];
    manifest.write(&sidecar(out))
}
