//! Adam optimisation, round-based loss-weight scheduling, the training loop
//! and checkpoints.

mod adam;
mod checkpoint;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, OptimizerConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::data::{crop_offset, normalize_colors, PreprocessConfig, StereoSample};
use crate::error::{Error, Result};
use crate::loss::{d1_rate, epe, multiscale_loss, GtPyramid, LossWeightSchedule, ValidityMask, NUM_SCALES};
use crate::network::Model;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: LossWeightSchedule,
    pub preprocess: PreprocessConfig,
    /// Also supervise the first-stage maps `c_s` with the round's weights.
    pub supervise_initial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            seed: 1,
            optimizer: OptimizerConfig::default(),
            schedule: LossWeightSchedule::default(),
            preprocess: PreprocessConfig::default(),
            supervise_initial: true,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig {
                initial_lr: 1e-3,
                ..OptimizerConfig::default()
            },
            schedule: LossWeightSchedule::desk(),
            preprocess: PreprocessConfig::desk(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.schedule.rounds.is_empty() {
            return Err(Error::Config("schedule has no rounds".into()));
        }
        for (i, r) in self.schedule.rounds.iter().enumerate() {
            if r.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Config(format!("round {} has a negative or non-finite weight", i + 1)));
            }
        }
        self.optimizer.validate()?;
        self.preprocess.validate()
    }
}

/// Loss weights and learning rate for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSetting {
    pub weights: [f64; NUM_SCALES],
    pub lr: f64,
}

/// Weights and learning rate for `round` (1-based) and `epoch` (0-based,
/// counted within the round). The learning rate restarts every round.
pub fn schedule(rounds: &LossWeightSchedule, opt: &OptimizerConfig, round: usize, epoch: usize) -> Result<EpochSetting> {
    let r = round
        .checked_sub(1)
        .and_then(|i| rounds.rounds.get(i))
        .ok_or_else(|| Error::Contract(format!("round {round} outside 1..={}", rounds.rounds.len())))?;
    if epoch >= r.epochs {
        return Err(Error::Contract(format!("epoch {epoch} outside round {round}'s {} epochs", r.epochs)));
    }
    Ok(EpochSetting {
        weights: r.weights,
        lr: opt.lr(epoch),
    })
}

/// Training progress. The data order and crops of an epoch depend only on
/// `seed`, `round` and `epoch`, so these fields determine the random state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrainState {
    /// 0-based index of the round in progress.
    pub round: usize,
    /// 0-based epoch within the round.
    pub epoch: usize,
    pub step: u64,
    pub adam_step: u64,
    pub seed: u64,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        TrainState {
            seed,
            ..Self::default()
        }
    }

    pub fn epoch_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.round as u64) << 32) | self.epoch as u64);
        rng
    }
}

/// A sample with normalised images, ready for batching.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub left: Tensor<f32>,
    pub right: Tensor<f32>,
    pub gt: Tensor<f32>,
    pub source_id: String,
}

impl PreparedSample {
    pub fn new(sample: &StereoSample, cfg: &PreprocessConfig) -> Result<Self> {
        let gt = sample
            .gt
            .clone()
            .ok_or_else(|| Error::Contract(format!("sample {} has no ground truth", sample.source_id)))?;
        Ok(PreparedSample {
            left: normalize_colors(&sample.left, cfg)?,
            right: normalize_colors(&sample.right, cfg)?,
            gt,
            source_id: sample.source_id.clone(),
        })
    }

    pub fn prepare_all(samples: &[StereoSample], cfg: &PreprocessConfig) -> Result<Vec<Self>> {
        samples.iter().map(|s| Self::new(s, cfg)).collect()
    }
}

/// Stacks samples into a batch, optionally cropping each at a random offset.
pub fn make_batch(
    samples: &[&PreparedSample],
    crop: Option<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let (mut ls, mut rs, mut gs) = (Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        let sh = s.left.shape();
        let (y, x, h, w) = match crop {
            Some((ch, cw)) => {
                let (y, x) = crop_offset(sh.h, sh.w, ch, cw, rng)?;
                (y, x, ch, cw)
            }
            None => (0, 0, sh.h, sh.w),
        };
        ls.push(s.left.crop(y, x, h, w)?);
        rs.push(s.right.crop(y, x, h, w)?);
        gs.push(s.gt.crop(y, x, h, w)?);
    }
    Ok((Tensor::stack(&ls)?, Tensor::stack(&rs)?, Tensor::stack(&gs)?))
}

/// Accuracy of full-resolution predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub source_id: String,
    pub epe: f64,
    pub d1: f64,
    pub valid_pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Mean of per-sample EPE.
    pub epe: f64,
    /// Mean of per-sample D1.
    pub d1: f64,
    pub samples: Vec<SampleMetrics>,
}

impl EvalSummary {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Self {
        let scored: Vec<&SampleMetrics> = samples.iter().filter(|s| s.valid_pixels > 0).collect();
        let n = scored.len().max(1) as f64;
        EvalSummary {
            epe: scored.iter().map(|s| s.epe).sum::<f64>() / n,
            d1: scored.iter().map(|s| s.d1).sum::<f64>() / n,
            samples,
        }
    }
}

/// Non-negative full-resolution output of the stacked network.
pub fn predict_disparity(model: &Model<f32>, left: &Tensor<f32>, right: &Tensor<f32>) -> Result<Tensor<f32>> {
    let p = model.predict(left, right)?;
    Ok(p.disparity.finest().map(|v| v.max(0.0)))
}

/// Evaluates EPE and D1 at full resolution.
pub fn evaluate(model: &Model<f32>, samples: &[PreparedSample], batch_size: usize) -> Result<EvalSummary> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&PreparedSample> = chunk.iter().collect();
        let (l, r, _) = make_batch(&refs, None, &mut ChaCha8Rng::seed_from_u64(0))?;
        let pred = predict_disparity(model, &l, &r)?;
        for (i, s) in chunk.iter().enumerate() {
            out.push(score(&pred.select(i), &s.gt, &s.source_id)?);
        }
    }
    Ok(EvalSummary::from_samples(out))
}

pub fn score(pred: &Tensor<f32>, gt: &Tensor<f32>, source_id: &str) -> Result<SampleMetrics> {
    let mask = ValidityMask::from_disparity(gt);
    let e = epe(pred, gt, &mask)?;
    let d = d1_rate(pred, gt, &mask, None)?;
    Ok(SampleMetrics {
        source_id: source_id.to_string(),
        epe: e.value,
        d1: d.value,
        valid_pixels: e.valid_pixels,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    /// 1-based round.
    pub round: usize,
    /// 0-based epoch within the round.
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub train_epe: f64,
    pub test_epe: f64,
    pub test_d1: f64,
    pub seconds: f64,
}

/// Hooks invoked by [`Trainer::run`].
pub trait TrainObserver {
    fn on_epoch(&mut self, _log: &EpochLog) -> Result<()> {
        Ok(())
    }

    /// Called after the last epoch of `round` (1-based).
    fn on_round_end(&mut self, _round: usize, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

pub struct Trainer {
    pub model: Model<f32>,
    pub config: TrainConfig,
    pub state: TrainState,
    pub adam: AdamState<f32>,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.params);
        let state = TrainState::new(config.seed);
        Ok(Trainer {
            model,
            config,
            state,
            adam,
        })
    }

    /// Continues from a checkpoint taken with the same configuration.
    pub fn resume(mut model: Model<f32>, config: TrainConfig, checkpoint: Checkpoint<f32>) -> Result<Self> {
        config.validate()?;
        let (state, adam) = checkpoint.restore(&mut model)?;
        if state.seed != config.seed {
            return Err(Error::Config(format!("checkpoint seed {} differs from config seed {}", state.seed, config.seed)));
        }
        Ok(Trainer {
            model,
            config,
            state,
            adam,
        })
    }

    pub fn checkpoint(&self) -> Result<Vec<u8>> {
        save_checkpoint(&self.model.config, &self.config.preprocess, &self.model.params, &self.state, &self.adam)
    }

    pub fn is_finished(&self) -> bool {
        let rounds = &self.config.schedule.rounds;
        (self.state.round..rounds.len()).all(|r| rounds[r].epochs == 0)
    }

    /// Moves past rounds with no epochs left.
    fn settle(&mut self) {
        let rounds = &self.config.schedule.rounds;
        while self.state.round < rounds.len() && self.state.epoch >= rounds[self.state.round].epochs {
            self.state.round += 1;
            self.state.epoch = 0;
            if self.config.optimizer.reset_moments_each_round && self.state.round < rounds.len() {
                self.adam.reset();
                self.state.adam_step = 0;
            }
        }
    }

    fn crop(&self, sample: &PreparedSample) -> Option<(usize, usize)> {
        let s = sample.left.shape();
        let (ch, cw) = (self.config.preprocess.crop_h, self.config.preprocess.crop_w);
        (ch < s.h || cw < s.w).then_some((ch.min(s.h), cw.min(s.w)))
    }

    /// One optimisation step; returns the loss and the batch EPE.
    pub fn step(&mut self, left: &Tensor<f32>, right: &Tensor<f32>, gt: &Tensor<f32>, setting: &EpochSetting) -> Result<(f64, f64)> {
        let mask = ValidityMask::from_disparity(gt);
        let pyramid = GtPyramid::build(gt, &mask)?;
        let mut tape = Tape::new();
        let p = self.model.params.bind(&mut tape, true);
        let l = tape.constant(left.clone());
        let r = tape.constant(right.clone());
        let out = self.model.forward(&mut tape, &p, l, r)?;
        let mut loss = multiscale_loss(&mut tape, &out.disparity, &pyramid, &setting.weights)?;
        if self.config.supervise_initial {
            let first = multiscale_loss(&mut tape, &out.initial, &pyramid, &setting.weights)?;
            loss = tape.add(loss, first)?;
        }
        let value = tape.value(loss).data()[0] as f64;
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss {value} at round {} epoch {} step {}; parameters left at their pre-step values",
                self.state.round + 1,
                self.state.epoch,
                self.state.step
            )));
        }
        let pred = tape.value(out.disparity[0]).map(|v| v.max(0.0));
        let batch_epe = epe(&pred, gt, &mask)?.value;
        tape.backward(loss)?;
        let grads: Vec<Option<Tensor<f32>>> = p.vars().iter().map(|&v| tape.take_grad(v)).collect();
        if let Some((i, _)) = grads.iter().enumerate().find(|(_, g)| g.as_ref().is_some_and(|g| !g.is_finite())) {
            let name = self.model.params.name(self.model.params.ids().nth(i).expect("index in range"));
            return Err(Error::Numerical(format!("non-finite gradient for {name} at step {}", self.state.step)));
        }
        adam_step(&mut self.model.params, &grads, &mut self.adam, setting.lr, &self.config.optimizer)?;
        self.state.step += 1;
        self.state.adam_step = self.adam.step;
        Ok((value, batch_epe))
    }

    /// Runs the current epoch and advances the round/epoch counters.
    pub fn train_epoch(&mut self, train: &[PreparedSample], test: &[PreparedSample]) -> Result<EpochLog> {
        if self.is_finished() {
            return Err(Error::Contract("training schedule already completed".into()));
        }
        if train.is_empty() {
            return Err(Error::Contract("empty training set".into()));
        }
        self.settle();
        let started = Instant::now();
        let round = self.state.round + 1;
        let setting = schedule(&self.config.schedule, &self.config.optimizer, round, self.state.epoch)?;
        let mut rng = self.state.epoch_rng();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut epe_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let refs: Vec<&PreparedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let crop = self.crop(refs[0]);
            let (l, r, g) = make_batch(&refs, crop, &mut rng)?;
            let (loss, e) = self.step(&l, &r, &g, &setting)?;
            loss_sum += loss;
            epe_sum += e;
            batches += 1;
        }
        let eval = if test.is_empty() {
            None
        } else {
            Some(evaluate(&self.model, test, self.config.batch_size)?)
        };
        let log = EpochLog {
            round,
            epoch: self.state.epoch,
            step: self.state.step,
            lr: setting.lr,
            train_loss: loss_sum / batches as f64,
            train_epe: epe_sum / batches as f64,
            test_epe: eval.as_ref().map_or(f64::NAN, |e| e.epe),
            test_d1: eval.as_ref().map_or(f64::NAN, |e| e.d1),
            seconds: started.elapsed().as_secs_f64(),
        };
        self.state.epoch += 1;
        self.settle();
        Ok(log)
    }

    /// Trains until the schedule completes, or for at most `max_epochs`.
    pub fn run(
        &mut self,
        train: &[PreparedSample],
        test: &[PreparedSample],
        max_epochs: Option<usize>,
        observer: &mut dyn TrainObserver,
    ) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while !self.is_finished() && max_epochs.is_none_or(|m| logs.len() < m) {
            let round_before = self.state.round;
            let log = self.train_epoch(train, test)?;
            observer.on_epoch(&log)?;
            logs.push(log);
            if self.state.round != round_before {
                observer.on_round_end(round_before + 1, self)?;
            }
        }
        Ok(logs)
    }
}
