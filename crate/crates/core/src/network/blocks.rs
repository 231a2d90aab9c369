use serde::{Deserialize, Serialize};

use super::params::{Bound, Initializer, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tape, Tensor, Var};

const RESIDUAL_BRANCH_SCALE: f64 = 0.1;

/// Downsampling module used by the encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// stride-1 conv followed by stride-2 conv
    DualConv,
    /// the same pair with each conv replaced by a residual block
    #[default]
    DualResBlock,
}

/// Convolution layer with optional bias.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        bias: bool,
    ) -> Self {
        let w = init.weight(Shape::new(out_c, in_c, k, k), in_c * k * k);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(Shape::new(1, out_c, 1, 1))));
        Conv {
            weight,
            bias,
            stride,
            padding: k / 2,
        }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv2d(x, p.var(self.weight), self.bias.map(|b| p.var(b)), self.stride, self.padding)
    }

    /// Sets weight and bias to zero.
    pub fn zero<T: Scalar>(&self, store: &mut ParamStore<T>) {
        store.get_mut(self.weight).data_mut().fill(T::zero());
        if let Some(b) = self.bias {
            store.get_mut(b).data_mut().fill(T::zero());
        }
    }
}

/// 4×4 stride-2 transposed convolution, doubling spatial size.
#[derive(Debug, Clone)]
pub struct UpConv {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl UpConv {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Initializer, name: &str, in_c: usize, out_c: usize) -> Self {
        // each output pixel receives in_c · 2 · 2 taps
        let w = init.weight(Shape::new(in_c, out_c, 4, 4), in_c * 4);
        UpConv {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(Shape::new(1, out_c, 1, 1))),
        }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv_transpose2d(x, p.var(self.weight), Some(p.var(self.bias)), 2, 1)
    }
}

/// `act(conv(act(conv(x))) + shortcut(x))`; the shortcut is a 1×1
/// projection when channels or stride change, identity otherwise.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub shortcut: Option<Conv>,
}

impl ResBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_c: usize,
        out_c: usize,
        stride: usize,
    ) -> Self {
        let conv1 = Conv::new(store, init, &format!("{name}.conv1"), in_c, out_c, 3, stride, true);
        let conv2 = Conv::new(store, init, &format!("{name}.conv2"), out_c, out_c, 3, 1, true);
        // Without normalisation layers, full-scale residual branches make
        // activations grow with depth; start each block near its shortcut.
        for w in store.get_mut(conv2.weight).data_mut() {
            *w *= T::lit(RESIDUAL_BRANCH_SCALE);
        }
        let shortcut = (in_c != out_c || stride != 1)
            .then(|| Conv::new(store, init, &format!("{name}.shortcut"), in_c, out_c, 1, stride, false));
        ResBlock { conv1, conv2, shortcut }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, slope: T) -> Result<Var> {
        let h = self.conv1.apply(tape, p, x)?;
        let h = tape.leaky_relu(h, slope);
        let h = self.conv2.apply(tape, p, h)?;
        let s = match &self.shortcut {
            Some(c) => c.apply(tape, p, x)?,
            None => x,
        };
        let sum = tape.add(h, s)?;
        Ok(tape.leaky_relu(sum, slope))
    }
}

/// Halves resolution: a stride-1 layer then a stride-2 layer.
#[derive(Debug, Clone)]
pub enum DownBlock {
    DualConv { first: Conv, second: Conv },
    DualRes { first: ResBlock, second: ResBlock },
}

impl DownBlock {
    pub fn new<T: Scalar>(
        kind: BlockKind,
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_c: usize,
        out_c: usize,
    ) -> Self {
        match kind {
            BlockKind::DualConv => DownBlock::DualConv {
                first: Conv::new(store, init, &format!("{name}.a"), in_c, in_c, 3, 1, true),
                second: Conv::new(store, init, &format!("{name}.b"), in_c, out_c, 3, 2, true),
            },
            BlockKind::DualResBlock => DownBlock::DualRes {
                first: ResBlock::new(store, init, &format!("{name}.a"), in_c, in_c, 1),
                second: ResBlock::new(store, init, &format!("{name}.b"), in_c, out_c, 2),
            },
        }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, slope: T) -> Result<Var> {
        let s = tape.shape(x);
        if !s.h.is_multiple_of(2) {
            return Err(Error::dim("dual block", "height", s.h + 1, s.h));
        }
        if !s.w.is_multiple_of(2) {
            return Err(Error::dim("dual block", "width", s.w + 1, s.w));
        }
        match self {
            DownBlock::DualConv { first, second } => {
                let h = first.apply(tape, p, x)?;
                let h = tape.leaky_relu(h, slope);
                let h = second.apply(tape, p, h)?;
                Ok(tape.leaky_relu(h, slope))
            }
            DownBlock::DualRes { first, second } => {
                let h = first.apply(tape, p, x, slope)?;
                second.apply(tape, p, h, slope)
            }
        }
    }
}
