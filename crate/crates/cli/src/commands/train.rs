use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use disparity_core::config::{RunConfig, SyntheticDataConfig};
use disparity_core::data::{gen_random_dot_stereogram, load_sample, Manifest, StereoSample};
use disparity_core::network::Model;
use disparity_core::train::{evaluate, load_checkpoint, EpochLog, PreparedSample, TrainObserver, Trainer};
use disparity_core::Error;

use super::{create_dir, load_config, read_bytes};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::Preset;

pub struct Args {
    pub config: Option<PathBuf>,
    pub preset: Preset,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: PathBuf,
    pub max_epochs: Option<usize>,
    pub resume: Option<PathBuf>,
}

pub const METRICS_FILE: &str = "metrics.log";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
/// Written instead of the final checkpoint when `--max-epochs` stops early.
pub const LAST_CHECKPOINT: &str = "last.ckpt";

pub fn round_checkpoint(round: usize) -> String {
    format!("round{round}.ckpt")
}

fn load_manifest(path: &Path) -> CliResult<Vec<StereoSample>> {
    let m = Manifest::load(path).map_err(|e| CliError::from(e).context("dataset"))?;
    if m.is_empty() {
        return Err(CliError::usage(format!("dataset {} is empty", path.display())));
    }
    m.entries
        .iter()
        .map(|e| load_sample(e).map_err(|err| CliError::from(err).context(e.left.display())))
        .collect()
}

/// Train and test stereograms described by `cfg`.
pub fn synthetic(cfg: &SyntheticDataConfig) -> CliResult<(Vec<StereoSample>, Vec<StereoSample>)> {
    let field = cfg.field();
    let gen = |i: usize, test: bool| gen_random_dot_stereogram(cfg.height, cfg.width, &field, cfg.sample_seed(i, test));
    let train = (0..cfg.train_samples).map(|i| gen(i, false)).collect::<Result<_, _>>()?;
    let test = (0..cfg.test_samples).map(|i| gen(i, true)).collect::<Result<_, _>>()?;
    Ok((train, test))
}

/// logfmt line for one epoch; wall time is left out so reruns match.
pub fn log_line(l: &EpochLog) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "event=epoch round={} epoch={} step={} lr={} train_loss={} train_epe={} test_epe={} test_d1={}",
        l.round, l.epoch, l.step, l.lr, l.train_loss, l.train_epe, l.test_epe, l.test_d1
    );
    s
}

struct Logger<'a> {
    file: File,
    out: &'a Path,
    written: Vec<PathBuf>,
}

impl TrainObserver for Logger<'_> {
    fn on_epoch(&mut self, l: &EpochLog) -> disparity_core::Result<()> {
        writeln!(self.file, "{}", log_line(l))?;
        eprintln!(
            "round {} epoch {}: loss {:.4} train EPE {:.3} test EPE {:.3} ({:.1} s)",
            l.round, l.epoch, l.train_loss, l.train_epe, l.test_epe, l.seconds
        );
        Ok(())
    }

    fn on_round_end(&mut self, round: usize, trainer: &Trainer) -> disparity_core::Result<()> {
        let path = self.out.join(round_checkpoint(round));
        std::fs::write(&path, trainer.checkpoint()?)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn run(args: &Args, argv: &[String]) -> CliResult<()> {
    let mut manifest = RunManifest::start("train", argv);
    let cfg: RunConfig = load_config(args.config.as_deref(), args.preset)?;
    let (train_raw, test_raw) = match &args.data {
        Some(p) => {
            manifest.inputs.push(p.clone());
            let test = match &args.test_data {
                Some(t) => {
                    manifest.inputs.push(t.clone());
                    load_manifest(t)?
                }
                None => Vec::new(),
            };
            (load_manifest(p)?, test)
        }
        None => synthetic(&cfg.data)?,
    };
    let pre = &cfg.train.preprocess;
    let train = PreparedSample::prepare_all(&train_raw, pre)?;
    let test = PreparedSample::prepare_all(&test_raw, pre)?;
    create_dir(&args.out)?;

    let model = Model::new(cfg.network.clone())?;
    let mut trainer = match &args.resume {
        Some(p) => {
            manifest.inputs.push(p.clone());
            let ck = load_checkpoint(&read_bytes(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
            Trainer::resume(model, cfg.train.clone(), ck)?
        }
        None => Trainer::new(model, cfg.train.clone())?,
    };

    let metrics = args.out.join(METRICS_FILE);
    let file = if args.resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&metrics)?
    } else {
        File::create(&metrics)?
    };
    let mut logger = Logger {
        file,
        out: &args.out,
        written: vec![metrics],
    };
    if args.resume.is_none() && !test.is_empty() {
        let base = evaluate(&trainer.model, &test, cfg.train.batch_size)?;
        writeln!(logger.file, "event=baseline test_epe={} test_d1={}", base.epe, base.d1)?;
    }

    let result = trainer.run(&train, &test, args.max_epochs, &mut logger);
    if let Err(Error::Numerical(msg)) = &result {
        let snap = args.out.join("nan_snapshot.ckpt");
        std::fs::write(&snap, trainer.checkpoint()?)?;
        return Err(CliError {
            code: crate::exit::NUMERICAL,
            message: format!("{msg}; snapshot written to {}", snap.display()),
        });
    }
    result?;
    let name = if trainer.is_finished() { FINAL_CHECKPOINT } else { LAST_CHECKPOINT };
    let final_path = args.out.join(name);
    std::fs::write(&final_path, trainer.checkpoint()?)?;
    manifest.outputs = logger.written;
    manifest.outputs.push(final_path);
    manifest.seed = Some(cfg.train.seed);
    manifest.config = serde_json::to_value(&cfg).ok();
    manifest.write(&args.out.join("run.json"))
}
