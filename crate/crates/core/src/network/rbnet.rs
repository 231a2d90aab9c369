use super::blocks::{Conv, DownBlock, ResBlock, UpConv};
use super::params::{Bound, Initializer, ParamStore};
use super::{MultiScaleOutput, NetworkConfig, RefinementInput};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

const PREDICTION_WEIGHT_SCALE: f64 = 0.1;

/// One decoder level: upsample features, merge with the upsampled coarser
/// prediction and the encoder skip, then predict.
#[derive(Debug, Clone)]
struct Level {
    up: UpConv,
    fuse: Conv,
    pred: Conv,
}

/// Coarse-to-fine decoder producing one map per scale.
#[derive(Debug, Clone)]
pub struct Decoder {
    top: Conv,
    levels: Vec<Level>,
    rectify: bool,
}

impl Decoder {
    fn new<T: Scalar>(
        cfg: &NetworkConfig,
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        rectify: bool,
    ) -> Self {
        let top_s = cfg.scales - 1;
        let top = Conv::new(store, init, &format!("{name}.pred{top_s}"), cfg.channels(top_s), 1, 3, 1, true);
        let levels = (0..top_s)
            .map(|s| {
                let c = cfg.channels(s);
                Level {
                    up: UpConv::new(store, init, &format!("{name}.up{s}"), cfg.channels(s + 1), c),
                    fuse: Conv::new(store, init, &format!("{name}.fuse{s}"), 2 * c + 1, c, 3, 1, true),
                    pred: Conv::new(store, init, &format!("{name}.pred{s}"), c, 1, 3, 1, true),
                }
            })
            .collect();
        let dec = Decoder { top, levels, rectify };
        dec.init_predictions(store);
        dec
    }

    /// Prediction layers start near a constant output: small weights, and
    /// for rectified outputs a positive bias so no unit starts dead.
    fn init_predictions<T: Scalar>(&self, store: &mut ParamStore<T>) {
        let bias = if self.rectify { T::one() } else { T::zero() };
        for conv in std::iter::once(&self.top).chain(self.levels.iter().map(|l| &l.pred)) {
            for w in store.get_mut(conv.weight).data_mut() {
                *w *= T::lit(PREDICTION_WEIGHT_SCALE);
            }
            if let Some(b) = conv.bias {
                store.get_mut(b).data_mut().fill(bias);
            }
        }
    }

    fn finish<T: Scalar>(&self, tape: &mut Tape<T>, raw: Var) -> Var {
        if self.rectify {
            tape.relu(raw)
        } else {
            raw
        }
    }

    /// `skips[s]` is the encoder feature at scale `s`; returns predictions
    /// finest first, each in pixels of its own scale.
    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, skips: &[Var], slope: T) -> Result<Vec<Var>> {
        let top_s = self.levels.len();
        let mut out = vec![skips[0]; top_s + 1];
        let mut feat = skips[top_s];
        let raw = self.top.apply(tape, p, feat)?;
        out[top_s] = self.finish(tape, raw);
        for s in (0..top_s).rev() {
            let lv = &self.levels[s];
            let up = lv.up.apply(tape, p, feat)?;
            let up = tape.leaky_relu(up, slope);
            let coarse = tape.bilinear_upsample2x(out[s + 1])?;
            let coarse = tape.scale(coarse, T::lit(2.0));
            let cat = tape.concat_channels(&[up, coarse, skips[s]])?;
            let f = lv.fuse.apply(tape, p, cat)?;
            feat = tape.leaky_relu(f, slope);
            let raw = lv.pred.apply(tape, p, feat)?;
            out[s] = self.finish(tape, raw);
        }
        Ok(out)
    }

    /// Zeroes every prediction layer so all outputs are exactly zero.
    fn zero_predictions<T: Scalar>(&self, store: &mut ParamStore<T>) {
        self.top.zero(store);
        for lv in &self.levels {
            lv.pred.zero(store);
        }
    }
}

/// Stem conv plus a stack of downsampling blocks.
#[derive(Debug, Clone)]
struct Encoder {
    stem: Conv,
    blocks: Vec<DownBlock>,
}

impl Encoder {
    fn new<T: Scalar>(
        cfg: &NetworkConfig,
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_c: usize,
        stages: std::ops::RangeInclusive<usize>,
    ) -> Self {
        let stem = Conv::new(store, init, &format!("{name}.stem"), in_c, cfg.channels(0), 3, 1, true);
        let blocks = stages
            .map(|i| DownBlock::new(cfg.block, store, init, &format!("{name}.down{i}"), cfg.channels(i - 1), cfg.channels(i)))
            .collect();
        Encoder { stem, blocks }
    }

    /// Returns the stem output followed by each block output.
    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, slope: T) -> Result<Vec<Var>> {
        let h = self.stem.apply(tape, p, x)?;
        let mut feats = vec![tape.leaky_relu(h, slope)];
        for b in &self.blocks {
            let last = *feats.last().expect("non-empty");
            feats.push(b.apply(tape, p, last, slope)?);
        }
        Ok(feats)
    }
}

/// First stage: Siamese encoder, point-wise correlation, decoder with
/// rectified (non-negative) outputs.
#[derive(Debug, Clone)]
pub struct CorrNet {
    left: Encoder,
    right: Option<Encoder>,
    pre_left: Conv,
    pre_right: Option<Conv>,
    redir: Conv,
    fuse: ResBlock,
    tail: Vec<DownBlock>,
    decoder: Decoder,
}

impl CorrNet {
    pub fn new<T: Scalar>(cfg: &NetworkConfig, store: &mut ParamStore<T>, init: &mut Initializer) -> Self {
        let a = cfg.correlation_after_stage;
        let ca = cfg.channels(a);
        let left = Encoder::new(cfg, store, init, "corrnet.enc", 3, 1..=a);
        let pre_left = Conv::new(store, init, "corrnet.corr_pre", ca, ca, 3, 1, true);
        let (right, pre_right) = if cfg.share_encoder_weights {
            (None, None)
        } else {
            (
                Some(Encoder::new(cfg, store, init, "corrnet.enc_right", 3, 1..=a)),
                Some(Conv::new(store, init, "corrnet.corr_pre_right", ca, ca, 3, 1, true)),
            )
        };
        let redir_c = (ca / 2).max(1);
        let redir = Conv::new(store, init, "corrnet.redir", ca, redir_c, 1, 1, true);
        let fuse = ResBlock::new(store, init, "corrnet.fuse", cfg.corr.num_shifts() + redir_c, ca, 1);
        let tail = (a + 1..cfg.encoder_stages)
            .map(|i| DownBlock::new(cfg.block, store, init, &format!("corrnet.down{i}"), cfg.channels(i - 1), cfg.channels(i)))
            .collect();
        let decoder = Decoder::new(cfg, store, init, "corrnet.dec", true);
        CorrNet {
            left,
            right,
            pre_left,
            pre_right,
            redir,
            fuse,
            tail,
            decoder,
        }
    }

    /// Returns `c_s`, finest first.
    pub fn forward<T: Scalar>(
        &self,
        cfg: &NetworkConfig,
        tape: &mut Tape<T>,
        p: &Bound,
        left: Var,
        right: Var,
    ) -> Result<Vec<Var>> {
        check_pair(cfg, tape, left, right)?;
        let slope = T::lit(cfg.leaky_slope);
        let mut skips = self.left.forward(tape, p, left, slope)?;
        let rf = self.right.as_ref().unwrap_or(&self.left).forward(tape, p, right, slope)?;
        let fl = *skips.last().expect("non-empty");
        let fr = *rf.last().expect("non-empty");
        let pl = &self.pre_left;
        let pr = self.pre_right.as_ref().unwrap_or(pl);
        let cost = tape.pointwise_correlation(
            fl,
            fr,
            (p.var(pl.weight), pl.bias.map(|b| p.var(b))),
            (p.var(pr.weight), pr.bias.map(|b| p.var(b))),
            &cfg.corr,
        )?;
        let r = self.redir.apply(tape, p, fl)?;
        let r = tape.leaky_relu(r, slope);
        let cat = tape.concat_channels(&[cost, r])?;
        let mut x = self.fuse.apply(tape, p, cat, slope)?;
        *skips.last_mut().expect("non-empty") = x;
        for b in &self.tail {
            x = b.apply(tape, p, x, slope)?;
            skips.push(x);
        }
        self.decoder.forward(tape, p, &skips, slope)
    }
}

/// Second stage: predicts signed residuals from the configured inputs.
#[derive(Debug, Clone)]
pub struct RefineNet {
    encoder: Encoder,
    decoder: Decoder,
}

impl RefineNet {
    pub fn new<T: Scalar>(cfg: &NetworkConfig, store: &mut ParamStore<T>, init: &mut Initializer) -> Self {
        RefineNet {
            encoder: Encoder::new(cfg, store, init, "refinenet.enc", cfg.refinement_channels(), 1..=cfg.encoder_stages - 1),
            decoder: Decoder::new(cfg, store, init, "refinenet.dec", false),
        }
    }

    /// Returns `r_s`, finest first. `c0` is the finest first-stage map.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        cfg: &NetworkConfig,
        tape: &mut Tape<T>,
        p: &Bound,
        left: Var,
        right: Var,
        warped_left: Var,
        c0: Var,
    ) -> Result<Vec<Var>> {
        check_pair(cfg, tape, left, right)?;
        let mut parts = Vec::with_capacity(cfg.refinement_inputs.len());
        for input in &cfg.refinement_inputs {
            parts.push(match input {
                RefinementInput::Left => left,
                RefinementInput::Right => right,
                RefinementInput::WarpedLeft => warped_left,
                RefinementInput::InitialDisparity => c0,
                RefinementInput::ReconstructionError => {
                    let d = tape.sub(left, warped_left)?;
                    let d = tape.abs(d);
                    tape.mean_channels(d)
                }
            });
        }
        let x = tape.concat_channels(&parts)?;
        let slope = T::lit(cfg.leaky_slope);
        let skips = self.encoder.forward(tape, p, x, slope)?;
        self.decoder.forward(tape, p, &skips, slope)
    }

    /// Makes every residual exactly zero.
    pub fn zero_output_layers<T: Scalar>(&self, store: &mut ParamStore<T>) {
        self.decoder.zero_predictions(store);
    }
}

fn check_pair<T: Scalar>(cfg: &NetworkConfig, tape: &Tape<T>, left: Var, right: Var) -> Result<()> {
    let (l, r) = (tape.shape(left), tape.shape(right));
    cfg.check_input(l)?;
    if l != r {
        return Err(Error::shape("network input", format!("left {l} and right {r} differ")));
    }
    Ok(())
}

/// Per-scale handles from one stacked forward pass, finest first.
#[derive(Debug, Clone)]
pub struct StackOutput {
    /// `d_s = c_s + r_s`
    pub disparity: Vec<Var>,
    pub initial: Vec<Var>,
    pub residual: Vec<Var>,
}

/// The two-stage stack.
#[derive(Debug, Clone)]
pub struct StackedNet {
    pub corr: CorrNet,
    pub refine: RefineNet,
}

impl StackedNet {
    pub fn new<T: Scalar>(cfg: &NetworkConfig, store: &mut ParamStore<T>) -> Self {
        let mut init = Initializer::new(cfg.init_seed, cfg.leaky_slope);
        let corr = CorrNet::new(cfg, store, &mut init);
        let refine = RefineNet::new(cfg, store, &mut init);
        StackedNet { corr, refine }
    }

    pub fn forward<T: Scalar>(
        &self,
        cfg: &NetworkConfig,
        tape: &mut Tape<T>,
        p: &Bound,
        left: Var,
        right: Var,
    ) -> Result<StackOutput> {
        let initial = self.corr.forward(cfg, tape, p, left, right)?;
        let warped = tape.warp_by_disparity(right, initial[0])?;
        let residual = self.refine.forward(cfg, tape, p, left, right, warped, initial[0])?;
        let disparity = initial
            .iter()
            .zip(&residual)
            .map(|(&c, &r)| tape.add(c, r))
            .collect::<Result<_>>()?;
        Ok(StackOutput {
            disparity,
            initial,
            residual,
        })
    }
}

/// A network together with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: NetworkConfig,
    pub net: StackedNet,
    pub params: ParamStore<T>,
}

/// Evaluated pyramids of one forward pass.
#[derive(Debug, Clone)]
pub struct Prediction<T: Scalar> {
    pub disparity: MultiScaleOutput<T>,
    pub initial: MultiScaleOutput<T>,
    pub residual: MultiScaleOutput<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let net = StackedNet::new(&config, &mut params);
        Ok(Model { config, net, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records a forward pass on `tape` using already bound parameters.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, left: Var, right: Var) -> Result<StackOutput> {
        self.net.forward(&self.config, tape, p, left, right)
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, left: &Tensor<T>, right: &Tensor<T>) -> Result<Prediction<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let l = tape.constant(left.clone());
        let r = tape.constant(right.clone());
        let out = self.forward(&mut tape, &p, l, r)?;
        let collect = |vars: &[Var], tape: &Tape<T>| MultiScaleOutput::new(vars.iter().map(|&v| tape.value(v).clone()).collect());
        Ok(Prediction {
            disparity: collect(&out.disparity, &tape)?,
            initial: collect(&out.initial, &tape)?,
            residual: collect(&out.residual, &tape)?,
        })
    }

    pub fn zero_refinement_outputs(&mut self) {
        self.net.refine.zero_output_layers(&mut self.params);
    }
}
