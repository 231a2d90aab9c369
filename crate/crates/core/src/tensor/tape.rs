use super::kernels;
use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};
use crate::loss;
use crate::stereo::{self, CorrelationConfig};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        input: Var,
        slope: T,
    },
    Concat {
        parts: Vec<Var>,
    },
    Upsample2x {
        input: Var,
    },
    AvgPool {
        input: Var,
        factor: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    Abs {
        input: Var,
    },
    MeanChannels {
        input: Var,
    },
    Sum {
        input: Var,
    },
    WeightedSum {
        terms: Vec<(Var, T)>,
    },
    Correlation {
        f1: Var,
        f2: Var,
        cfg: CorrelationConfig,
    },
    Warp {
        image: Var,
        disparity: Var,
    },
    SmoothL1 {
        pred: Var,
        target: Tensor<T>,
        mask: Vec<bool>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
    op: Op<T>,
}

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Values are appended in execution order, so replaying the record
/// backwards visits every node after all of its consumers.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that collects gradients.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        // Nothing upstream needs gradients, so the op is never replayed.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            out,
            &inputs,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv_transpose2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            out,
            &inputs,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: T) -> Var {
        let out = kernels::leaky_relu(self.value(input), slope);
        self.push(out, &[input], Op::LeakyRelu { input, slope })
    }

    /// Clamp at zero.
    pub fn relu(&mut self, input: Var) -> Var {
        self.leaky_relu(input, T::zero())
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = kernels::concat_channels(&values)?;
        Ok(self.push(out, parts, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn bilinear_upsample2x(&mut self, input: Var) -> Result<Var> {
        let out = kernels::bilinear_upsample2x(self.value(input))?;
        Ok(self.push(out, &[input], Op::Upsample2x { input }))
    }

    pub fn avgpool_downsample(&mut self, input: Var, factor: usize) -> Result<Var> {
        let out = kernels::avgpool_downsample(self.value(input), factor)?;
        Ok(self.push(out, &[input], Op::AvgPool { input, factor }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, &[a, b], Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, &[a, b], Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, &[a, b], Op::Mul { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let out = self.value(input).map(|v| v * factor);
        self.push(out, &[input], Op::Scale { input, factor })
    }

    pub fn abs(&mut self, input: Var) -> Var {
        let out = self.value(input).map(|v| v.abs());
        self.push(out, &[input], Op::Abs { input })
    }

    /// Mean over channels, keeping a single channel.
    pub fn mean_channels(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let s = x.shape();
        let inv = T::one() / T::lit(s.c as f64);
        let out = Tensor::from_fn(s.with_c(1), |n, _, y, xx| {
            (0..s.c).map(|c| x.at(n, c, y, xx)).sum::<T>() * inv
        });
        self.push(out, &[input], Op::MeanChannels { input })
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        self.push(out, &[input], Op::Sum { input })
    }

    /// `Σ wᵢ·xᵢ` over scalar vars. Terms with zero weight are skipped
    /// entirely, so nothing upstream of them receives gradient.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = T::zero();
        let mut kept = Vec::new();
        for &(v, w) in terms {
            let val = self.value(v);
            if val.len() != 1 {
                return Err(Error::dim("weighted_sum", "element count", 1, val.len()));
            }
            if w != T::zero() {
                total += w * val.data()[0];
                kept.push((v, w));
            }
        }
        let inputs: Vec<Var> = kept.iter().map(|t| t.0).collect();
        Ok(self.push(Tensor::scalar(total), &inputs, Op::WeightedSum { terms: kept }))
    }

    /// Cost volume of `f1` against horizontally shifted `f2`.
    pub fn correlation(&mut self, f1: Var, f2: Var, cfg: &CorrelationConfig) -> Result<Var> {
        let vol = stereo::correlation(self.value(f1), self.value(f2), cfg)?;
        Ok(self.push(vol.volume, &[f1, f2], Op::Correlation { f1, f2, cfg: cfg.clone() }))
    }

    /// Resamples `image` at `x - disparity(x)` along each row.
    pub fn warp_by_disparity(&mut self, image: Var, disparity: Var) -> Result<Var> {
        let out = stereo::warp_by_disparity(self.value(image), self.value(disparity))?;
        Ok(self.push(out, &[image, disparity], Op::Warp { image, disparity }))
    }

    /// Masked mean smooth-L1 distance between `pred` and a fixed target.
    pub fn smooth_l1_loss(&mut self, pred: Var, target: &Tensor<T>, mask: &[bool]) -> Result<Var> {
        let value = loss::masked_smooth_l1(self.value(pred), target, mask)?;
        Ok(self.push(
            Tensor::scalar(value),
            &[pred],
            Op::SmoothL1 {
                pred,
                target: target.clone(),
                mask: mask.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grad`]; every gradient-requiring leaf
    /// recorded before `loss` ends up with a gradient (zeros when the loss
    /// does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.value(loss).len();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {} elements",
                numel
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
        }
        for (idx, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[idx];
            if !node.requires_grad || !matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = g.unwrap_or_else(|| Tensor::zeros(node.value.shape()));
            match node.grad.as_mut() {
                Some(acc) => acc.add_assign(&g)?,
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let r = kernels::conv2d_backward(
                    g,
                    self.value(input),
                    self.value(weight),
                    stride,
                    padding,
                    [needs(input), needs(weight), bias.is_some_and(needs)],
                )?;
                accumulate(grads, input, r.input)?;
                accumulate(grads, weight, r.weight)?;
                if let Some(b) = bias {
                    accumulate(grads, b, r.bias.map(|t| reshape_like(t, self.shape(b))))?;
                }
            }
            &Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let r = kernels::conv_transpose2d_backward(
                    g,
                    self.value(input),
                    self.value(weight),
                    stride,
                    padding,
                    [needs(input), needs(weight), bias.is_some_and(needs)],
                )?;
                accumulate(grads, input, r.input)?;
                accumulate(grads, weight, r.weight)?;
                if let Some(b) = bias {
                    accumulate(grads, b, r.bias.map(|t| reshape_like(t, self.shape(b))))?;
                }
            }
            &Op::LeakyRelu { input, slope } => {
                let gi = kernels::leaky_relu_backward(g, self.value(input), slope);
                accumulate(grads, input, Some(gi))?;
            }
            Op::Concat { parts } => {
                let channels: Vec<usize> = parts.iter().map(|&p| self.shape(p).c).collect();
                for (&p, gp) in parts.iter().zip(kernels::split_channels(g, &channels)) {
                    if needs(p) {
                        accumulate(grads, p, Some(gp))?;
                    }
                }
            }
            &Op::Upsample2x { input } => {
                let gi = kernels::bilinear_upsample2x_backward(g, self.shape(input));
                accumulate(grads, input, Some(gi))?;
            }
            &Op::AvgPool { input, factor } => {
                let gi = kernels::avgpool_downsample_backward(g, factor, self.shape(input));
                accumulate(grads, input, Some(gi))?;
            }
            &Op::Add { a, b } => {
                if needs(a) {
                    accumulate(grads, a, Some(g.clone()))?;
                }
                if needs(b) {
                    accumulate(grads, b, Some(g.clone()))?;
                }
            }
            &Op::Sub { a, b } => {
                if needs(a) {
                    accumulate(grads, a, Some(g.clone()))?;
                }
                if needs(b) {
                    accumulate(grads, b, Some(g.map(|v| -v)))?;
                }
            }
            &Op::Mul { a, b } => {
                if needs(a) {
                    accumulate(grads, a, Some(g.zip_map(self.value(b), "mul", |x, y| x * y)?))?;
                }
                if needs(b) {
                    accumulate(grads, b, Some(g.zip_map(self.value(a), "mul", |x, y| x * y)?))?;
                }
            }
            &Op::Scale { input, factor } => {
                accumulate(grads, input, Some(g.map(|v| v * factor)))?;
            }
            &Op::Abs { input } => {
                let gi = g.zip_map(self.value(input), "abs", |gv, x| {
                    if x > T::zero() {
                        gv
                    } else if x < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })?;
                accumulate(grads, input, Some(gi))?;
            }
            &Op::MeanChannels { input } => {
                let s = self.shape(input);
                let inv = T::one() / T::lit(s.c as f64);
                let gi = Tensor::from_fn(s, |n, _, y, x| g.at(n, 0, y, x) * inv);
                accumulate(grads, input, Some(gi))?;
            }
            &Op::Sum { input } => {
                let gv = g.data()[0];
                accumulate(grads, input, Some(Tensor::full(self.shape(input), gv)))?;
            }
            Op::WeightedSum { terms } => {
                let gv = g.data()[0];
                for &(v, w) in terms {
                    if needs(v) {
                        accumulate(grads, v, Some(Tensor::scalar(gv * w)))?;
                    }
                }
            }
            Op::Correlation { f1, f2, cfg } => {
                let (g1, g2) = stereo::correlation_backward(
                    g,
                    self.value(*f1),
                    self.value(*f2),
                    cfg,
                    [needs(*f1), needs(*f2)],
                )?;
                accumulate(grads, *f1, g1)?;
                accumulate(grads, *f2, g2)?;
            }
            &Op::Warp { image, disparity } => {
                let (gi, gd) = stereo::warp_backward(
                    g,
                    self.value(image),
                    self.value(disparity),
                    [needs(image), needs(disparity)],
                )?;
                accumulate(grads, image, gi)?;
                accumulate(grads, disparity, gd)?;
            }
            Op::SmoothL1 { pred, target, mask } => {
                let gi = loss::masked_smooth_l1_backward(g.data()[0], self.value(*pred), target, mask);
                accumulate(grads, *pred, Some(gi))?;
            }
        }
        Ok(())
    }
}

fn reshape_like<T: Scalar>(t: Tensor<T>, shape: Shape) -> Tensor<T> {
    Tensor::from_vec(shape, t.into_vec()).expect("bias gradient has one entry per channel")
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Option<Tensor<T>>) -> Result<()> {
    let Some(g) = g else { return Ok(()) };
    match grads[v.0].as_mut() {
        Some(acc) => acc.add_assign(&g),
        None => {
            grads[v.0] = Some(g);
            Ok(())
        }
    }
}
