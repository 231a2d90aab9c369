pub mod bench;
mod data;
mod eval;
mod infer;
mod train;

use std::path::{Path, PathBuf};

use disparity_core::config::RunConfig;
use disparity_core::data::{load_disparity, normalize_colors, save_image, PreprocessConfig};
use disparity_core::network::{Model, SIZE_MULTIPLE};
use disparity_core::train::predict_disparity;
use disparity_core::Tensor;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::{colormap, Command, Preset};

pub use bench::{bench_kernel, BenchReport};
pub use train::synthetic;

pub fn dispatch(command: Command, argv: &[String]) -> CliResult<()> {
    match command {
        Command::Train {
            config,
            preset,
            data,
            test_data,
            out,
            max_epochs,
            resume,
        } => train::run(
            &train::Args {
                config,
                preset,
                data,
                test_data,
                out,
                max_epochs,
                resume,
            },
            argv,
        ),
        Command::Infer {
            checkpoint,
            left,
            right,
            out,
            color,
        } => infer::run(&checkpoint, &left, &right, &out, color.as_deref(), argv),
        Command::Eval {
            checkpoint,
            data,
            predictor,
            report,
            manifest,
        } => eval::run(checkpoint.as_deref(), &data, predictor, report.as_deref(), manifest.as_deref(), argv),
        Command::GenData {
            n,
            height,
            width,
            seed,
            max_disparity,
            constant,
            objects,
            out,
        } => data::gen(
            &data::GenArgs {
                n,
                height,
                width,
                seed,
                max_disparity,
                constant,
                objects,
            },
            &out,
            argv,
        ),
        Command::Bench {
            kernel,
            shape,
            reps,
            warmup,
            max_range,
            kernel_half_size,
            manifest,
        } => bench::run(kernel, &shape, reps, warmup, max_range, kernel_half_size, manifest.as_deref(), argv),
        Command::DumpConfig { preset } => {
            print!("{}", config_to_toml(&preset_config(preset))?);
            Ok(())
        }
        Command::Render { disparity, out, max } => {
            let mut m = RunManifest::start("render", argv);
            let d = load_disparity(&disparity).map_err(|e| CliError::from(e).context(disparity.display()))?;
            save_image(&out, &colormap::render(&d, max))?;
            m.inputs.push(disparity);
            m.outputs.push(out.clone());
            m.write(&sidecar(&out))
        }
        Command::Rerun { manifest } => {
            let m = RunManifest::read(&manifest)?;
            if m.command == "rerun" {
                return Err(CliError::usage("refusing to replay a rerun manifest"));
            }
            crate::run_args(&m.argv)
        }
    }
}

/// `<path>.run.json`
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

pub fn preset_config(preset: Preset) -> RunConfig {
    match preset {
        Preset::Desk => RunConfig::desk(),
        Preset::Full => RunConfig::default(),
    }
}

pub fn config_to_toml(cfg: &RunConfig) -> CliResult<String> {
    toml::to_string_pretty(cfg).map_err(|e| CliError::usage(format!("config serialisation: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses TOML text on top of `base`; unspecified fields keep their values.
pub fn parse_config(text: &str, base: &RunConfig) -> CliResult<RunConfig> {
    let over: toml::Table = toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
    let mut table = toml::Table::try_from(base).map_err(|e| CliError::usage(e.to_string()))?;
    merge(&mut table, over);
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, preset: Preset) -> CliResult<RunConfig> {
    let base = preset_config(preset);
    match path {
        None => {
            base.validate()?;
            Ok(base)
        }
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            parse_config(&text, &base).map_err(|e| e.context(p.display()))
        }
    }
}

/// Normalises, pads to the network multiple, predicts and crops back.
pub fn predict_padded(model: &Model<f32>, pre: &PreprocessConfig, left: &Tensor<f32>, right: &Tensor<f32>) -> CliResult<Tensor<f32>> {
    if left.shape() != right.shape() {
        return Err(CliError::usage(format!(
            "left image is {} but right image is {}",
            left.shape(),
            right.shape()
        )));
    }
    let s = left.shape();
    let (ph, pw) = (s.h.next_multiple_of(SIZE_MULTIPLE), s.w.next_multiple_of(SIZE_MULTIPLE));
    let l = normalize_colors(left, pre)?.pad_to(ph, pw)?;
    let r = normalize_colors(right, pre)?.pad_to(ph, pw)?;
    Ok(predict_disparity(model, &l, &r)?.crop(0, 0, s.h, s.w)?)
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
