use std::path::{Path, PathBuf};

use disparity_core::data::{load_sample, Manifest, PreprocessConfig};
use disparity_core::network::Model;
use disparity_core::train::{load_checkpoint, score, EvalSummary, SampleMetrics};
use disparity_core::Tensor;
use serde::Serialize;

use super::{predict_padded, read_bytes, sidecar};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::Predictor;

#[derive(Debug, Serialize)]
struct SampleReport {
    source_id: String,
    epe: f64,
    d1: f64,
    valid_pixels: usize,
}

#[derive(Debug, Serialize)]
pub struct Report {
    predictor: String,
    epe: f64,
    d1: f64,
    evaluated: usize,
    skipped: usize,
    samples: Vec<SampleReport>,
}

pub fn run(
    checkpoint: Option<&Path>,
    data: &Path,
    predictor: Predictor,
    report: Option<&Path>,
    manifest_path: Option<&Path>,
    argv: &[String],
) -> CliResult<()> {
    let mut manifest = RunManifest::start("eval", argv);
    let model: Option<(Model<f32>, PreprocessConfig)> = match (predictor, checkpoint) {
        (Predictor::Model, None) => return Err(CliError::usage("--predictor model requires --checkpoint")),
        (Predictor::Model, Some(p)) => {
            manifest.inputs.push(p.to_path_buf());
            let ck = load_checkpoint::<f32>(&read_bytes(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
            let pre = ck.preprocess.clone();
            Some((ck.into_model()?.0, pre))
        }
        _ => None,
    };
    let list = Manifest::load(data).map_err(|e| CliError::from(e).context("dataset"))?;
    manifest.inputs.push(data.to_path_buf());
    let mut scored: Vec<SampleMetrics> = Vec::new();
    let mut skipped = 0;
    for entry in &list.entries {
        let sample = load_sample(entry).map_err(|e| CliError::from(e).context(entry.left.display()))?;
        let Some(gt) = &sample.gt else {
            eprintln!("warning: {} has no ground truth; skipped", sample.source_id);
            skipped += 1;
            continue;
        };
        let pred = match (&model, predictor) {
            (Some((m, pre)), _) => predict_padded(m, pre, &sample.left, &sample.right)?,
            (None, Predictor::Oracle) => gt.clone(),
            (None, _) => Tensor::zeros(gt.shape()),
        };
        let m = score(&pred, gt, &sample.source_id)?;
        println!("sample={} epe={} d1={} valid_pixels={}", m.source_id, m.epe, m.d1, m.valid_pixels);
        scored.push(m);
    }
    let summary = EvalSummary::from_samples(scored);
    println!(
        "summary predictor={:?} epe={} d1={} evaluated={} skipped={}",
        predictor,
        summary.epe,
        summary.d1,
        summary.samples.len(),
        skipped
    );
    let rep = Report {
        predictor: format!("{predictor:?}").to_lowercase(),
        epe: summary.epe,
        d1: summary.d1,
        evaluated: summary.samples.len(),
        skipped,
        samples: summary
            .samples
            .into_iter()
            .map(|s| SampleReport {
                source_id: s.source_id,
                epe: s.epe,
                d1: s.d1,
                valid_pixels: s.valid_pixels,
            })
            .collect(),
    };
    let mut target: Option<PathBuf> = manifest_path.map(Path::to_path_buf);
    if let Some(r) = report {
        let text = serde_json::to_string_pretty(&rep).map_err(|e| CliError::usage(e.to_string()))?;
        std::fs::write(r, text + "\n").map_err(|e| CliError::usage(format!("{}: {e}", r.display())))?;
        manifest.outputs.push(r.to_path_buf());
        target = target.or_else(|| Some(sidecar(r)));
    }
    match target {
        Some(t) => manifest.write(&t),
        None => Ok(()),
    }
}
