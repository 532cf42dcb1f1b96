//! The encoder-decoder with skip connections.
//!
//! Level `i` (0 = full resolution) maps its input `x` to an output at the same
//! resolution:
//!
//! ```text
//! skip  = act(norm(conv1x1(x)))                       -> skip_channels
//! d     = act(norm(conv3x3/2(x)))                     -> down_channels, half size
//! d     = act(norm(conv3x3(d)))
//! d     = level(i + 1, d)                             (absent at the deepest level)
//! y     = norm(concat(skip, upsample2x(d)))
//! y     = act(norm(conv3x3(y)))                       -> up_channels
//! y     = act(norm(conv1x1(y)))
//! ```
//!
//! The head is a biased 1x1 convolution to `out_channels` followed by a sigmoid.
//! Convolutions feeding a normalisation carry no bias since the mean
//! subtraction cancels it.

use crate::error::{Error, Result};

use super::graph::{Gradients, NodeId, Tape};
use super::params::{ParamDecl, ParamKind};
use super::{NetworkSpec, ParameterStore, Real, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvUnit {
    pub weight: usize,
    pub bias: Option<usize>,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormUnit {
    pub scale: usize,
    pub shift: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Level {
    skip: (ConvUnit, NormUnit),
    down: (ConvUnit, NormUnit),
    down2: (ConvUnit, NormUnit),
    merge_norm: NormUnit,
    up: (ConvUnit, NormUnit),
    up_pointwise: (ConvUnit, NormUnit),
}

#[derive(Debug, Clone)]
pub(crate) struct Blueprint {
    levels: Vec<Level>,
    head: ConvUnit,
    slope: f64,
}

struct Builder {
    decls: Vec<ParamDecl>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, kind: ParamKind) -> usize {
        self.decls.push(ParamDecl { name, shape, kind });
        self.decls.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, bias: bool) -> ConvUnit {
        let weight = self.add(
            format!("{name}.weight"),
            vec![cout, cin, kernel, kernel],
            ParamKind::ConvWeight { fan_in: cin * kernel * kernel },
        );
        let bias = bias.then(|| self.add(format!("{name}.bias"), vec![cout], ParamKind::Bias));
        ConvUnit { weight, bias, kernel, stride }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormUnit {
        let scale = self.add(format!("{name}.scale"), vec![c], ParamKind::NormScale);
        let shift = self.add(format!("{name}.shift"), vec![c], ParamKind::NormShift);
        NormUnit { scale, shift }
    }

    fn conv_norm(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize) -> (ConvUnit, NormUnit) {
        let conv = self.conv(&format!("{name}.conv"), cin, cout, kernel, stride, false);
        (conv, self.norm(&format!("{name}.norm"), cout))
    }
}

/// Parameter layout and wiring for `spec`, in store order.
pub(crate) fn blueprint(spec: &NetworkSpec) -> Result<(Blueprint, Vec<ParamDecl>)> {
    spec.validate()?;
    let mut b = Builder { decls: Vec::new() };
    let mut levels = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        let cin = if i == 0 { spec.out_channels } else { spec.down_channels };
        let deeper = if i + 1 == spec.depth { spec.down_channels } else { spec.up_channels };
        let p = format!("level{i}");
        let skip = b.conv_norm(&format!("{p}.skip"), cin, spec.skip_channels, spec.skip_kernel, 1);
        let down = b.conv_norm(&format!("{p}.down"), cin, spec.down_channels, spec.conv_kernel, 2);
        let down2 = b.conv_norm(&format!("{p}.down2"), spec.down_channels, spec.down_channels, spec.conv_kernel, 1);
        let merge_norm = b.norm(&format!("{p}.merge.norm"), spec.skip_channels + deeper);
        let up = b.conv_norm(&format!("{p}.up"), spec.skip_channels + deeper, spec.up_channels, spec.conv_kernel, 1);
        let up_pointwise = b.conv_norm(&format!("{p}.up1x1"), spec.up_channels, spec.up_channels, 1, 1);
        levels.push(Level { skip, down, down2, merge_norm, up, up_pointwise });
    }
    let head = b.conv("head", spec.up_channels, spec.out_channels, 1, 1, true);
    Ok((Blueprint { levels, head, slope: spec.leaky_slope }, b.decls))
}

fn check_store<T: Real>(store: &ParameterStore<T>, decls: &[ParamDecl]) -> Result<()> {
    if store.len() != decls.len() {
        return Err(Error::DimensionMismatch(format!(
            "parameter store has {} tensors, architecture needs {}",
            store.len(),
            decls.len()
        )));
    }
    for (p, d) in store.iter().zip(decls) {
        if p.name != d.name || p.tensor.shape() != d.shape.as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "parameter {} {:?} does not match {} {:?}",
                p.name,
                p.tensor.shape(),
                d.name,
                d.shape
            )));
        }
    }
    Ok(())
}

impl Blueprint {
    fn block<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId, (conv, norm): (ConvUnit, NormUnit)) -> NodeId {
        let y = tape.conv(x, conv.weight, conv.bias, conv.kernel, conv.stride);
        let y = tape.norm(y, norm.scale, norm.shift);
        tape.leaky_relu(y, self.slope)
    }

    fn level<T: Real>(&self, tape: &mut Tape<'_, T>, i: usize, x: NodeId) -> NodeId {
        let lv = &self.levels[i];
        let skip = self.block(tape, x, lv.skip);
        let mut d = self.block(tape, x, lv.down);
        d = self.block(tape, d, lv.down2);
        if i + 1 < self.levels.len() {
            d = self.level(tape, i + 1, d);
        }
        let d = tape.upsample2x(d);
        let y = tape.concat(skip, d);
        let y = tape.norm(y, lv.merge_norm.scale, lv.merge_norm.shift);
        let y = self.block(tape, y, lv.up);
        self.block(tape, y, lv.up_pointwise)
    }

    fn run<'p, T: Real>(&self, params: &'p ParameterStore<T>, input: Tensor<T>) -> (Tape<'p, T>, NodeId) {
        let mut tape = Tape::new(params);
        let x = tape.input(input);
        let y = self.level(&mut tape, 0, x);
        let y = tape.conv(y, self.head.weight, self.head.bias, 1, 1);
        let out = tape.sigmoid(y);
        (tape, out)
    }
}

fn check_input<T: Real>(input: &Tensor<T>, spec: &NetworkSpec) -> Result<()> {
    let m = spec.size_multiple();
    match input.shape() {
        &[c, h, w] if c == spec.out_channels && h % m == 0 && w % m == 0 => Ok(()),
        s => Err(Error::DimensionMismatch(format!(
            "input shape {s:?} needs {} channels and spatial dims divisible by {m}",
            spec.out_channels
        ))),
    }
}

/// Evaluates the network. Output has the input's shape with values in `(0, 1)`.
pub fn forward<T: Real>(params: &ParameterStore<T>, input: &Tensor<T>, spec: &NetworkSpec) -> Result<Tensor<T>> {
    let (bp, decls) = blueprint(spec)?;
    check_store(params, &decls)?;
    check_input(input, spec)?;
    let (tape, out) = bp.run(params, input.clone());
    Ok(tape.into_value(out))
}

/// Result of one forward and backward pass.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub loss: f64,
    pub output: Tensor<T>,
    pub grads: Gradients<T>,
}

/// Runs the network, evaluates `loss_fn` on its output and back-propagates.
///
/// `loss_fn` returns the loss value and its gradient with respect to the
/// network output. A non-finite loss is reported as an error.
pub fn backward<T, F>(
    params: &ParameterStore<T>,
    input: &Tensor<T>,
    spec: &NetworkSpec,
    loss_fn: F,
) -> Result<Backward<T>>
where
    T: Real,
    F: FnOnce(&Tensor<T>) -> (f64, Tensor<T>),
{
    let (bp, decls) = blueprint(spec)?;
    check_store(params, &decls)?;
    check_input(input, spec)?;
    let (tape, out) = bp.run(params, input.clone());
    let (loss, d_out) = loss_fn(tape.value(out));
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss ({loss})")));
    }
    if d_out.shape() != tape.value(out).shape() {
        return Err(Error::DimensionMismatch("loss gradient shape differs from the output".into()));
    }
    let grads = tape.backward(out, d_out.into_data());
    Ok(Backward { loss, output: tape.into_value(out), grads })
}
