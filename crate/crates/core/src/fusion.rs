//! The fusion pipeline: gain estimation, network optimisation against the
//! gain-weighted reconstruction loss, minimum-loss selection and channel averaging.
//!
//! For `n` output channels `X^c` the loss is
//!
//! ```text
//! L = sum_c sum_p (x1(p) - b1(p) X^c(p))^2 + (x2(p) - b2(p) X^c(p))^2
//! ```
//!
//! i.e. both sources are replicated into every channel.

use crate::error::{Error, Result};
use crate::fmt::format_sig;
use crate::gains::{estimate_gains, GainPair, DEFAULT_GAIN_WINDOW};
use crate::image::{check_same_dims, crop, pad_reflect_to_multiple, Image};
use crate::net::{self, AdamConfig, AdamState, NetworkSpec, Real, Tensor};

/// Mixed into the fusion seed to derive the seed of the network input noise.
pub const INPUT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Output channels `n`; the network input has the same count.
    pub channels: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub gain_window: usize,
    /// Only iterations that are multiples of this are considered for the best snapshot.
    pub snapshot_stride: usize,
    /// Architecture; its `out_channels` is overridden by `channels`.
    pub network: NetworkSpec,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            channels: 10,
            iterations: 2000,
            lr: 0.01,
            seed: 0,
            gain_window: DEFAULT_GAIN_WINDOW,
            snapshot_stride: 1,
            network: NetworkSpec::new(10),
        }
    }
}

impl FusionConfig {
    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec { out_channels: self.channels, ..self.network.clone() }
    }

    pub fn input_seed(&self) -> u64 {
        self.seed ^ INPUT_SEED_SALT
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.channels == 0 {
            return bad("channels must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.gain_window == 0 || self.gain_window.is_multiple_of(2) {
            return bad("gain window must be odd and positive");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot stride must be at least 1");
        }
        self.network_spec().validate()
    }
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub fused: Image,
    pub best_loss: f64,
    pub best_iteration: usize,
    pub loss_curve: Vec<f64>,
    pub gains: GainPair,
    pub config: FusionConfig,
}

impl FusionResult {
    /// Loss curve as CSV: header `iteration,loss`, 17 significant digits.
    pub fn loss_csv(&self) -> String {
        loss_curve_csv(&self.loss_curve)
    }
}

pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", format_sig(*l, 17)));
    }
    s
}

/// Sources and gains laid out on the (possibly padded) network grid, with a
/// mask selecting the original pixels.
struct Objective {
    width: usize,
    x1: Vec<f64>,
    x2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    active: Vec<bool>,
}

impl Objective {
    fn new(x1: &Image, x2: &Image, gains: &GainPair, width: usize, height: usize) -> Self {
        let mut o = Objective {
            width,
            x1: vec![0.0; width * height],
            x2: vec![0.0; width * height],
            b1: vec![0.0; width * height],
            b2: vec![0.0; width * height],
            active: vec![false; width * height],
        };
        for y in 0..x1.height() {
            for x in 0..x1.width() {
                let (src, dst) = (y * x1.width() + x, y * width + x);
                o.x1[dst] = x1.pixels()[src];
                o.x2[dst] = x2.pixels()[src];
                o.b1[dst] = gains.beta1[src];
                o.b2[dst] = gains.beta2[src];
                o.active[dst] = true;
            }
        }
        o
    }

    fn check<T: Real>(&self, output: &Tensor<T>) -> Result<()> {
        match output.shape() {
            &[_, h, w] if w == self.width && h * w == self.active.len() => Ok(()),
            s => Err(Error::DimensionMismatch(format!(
                "output {s:?} vs {}x{} sources",
                self.width,
                self.active.len() / self.width
            ))),
        }
    }

    fn value<T: Real>(&self, output: &Tensor<T>) -> f64 {
        let hw = self.active.len();
        let mut loss = 0.0;
        for plane in output.data().chunks(hw) {
            for (p, &v) in plane.iter().enumerate() {
                if self.active[p] {
                    let v = v.as_f64();
                    let r1 = self.x1[p] - self.b1[p] * v;
                    let r2 = self.x2[p] - self.b2[p] * v;
                    loss += r1 * r1 + r2 * r2;
                }
            }
        }
        loss
    }

    fn value_and_grad<T: Real>(&self, output: &Tensor<T>) -> (f64, Tensor<T>) {
        let hw = self.active.len();
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(output.len());
        for plane in output.data().chunks(hw) {
            for (p, &v) in plane.iter().enumerate() {
                if self.active[p] {
                    let v = v.as_f64();
                    let r1 = self.x1[p] - self.b1[p] * v;
                    let r2 = self.x2[p] - self.b2[p] * v;
                    loss += r1 * r1 + r2 * r2;
                    grad.push(T::of(-2.0 * (self.b1[p] * r1 + self.b2[p] * r2)));
                } else {
                    grad.push(T::zero());
                }
            }
        }
        (loss, Tensor::from_parts(output.shape().to_vec(), grad))
    }
}

/// Sum of squared reconstruction residuals of both sources over every output channel.
pub fn fusion_loss<T: Real>(output: &Tensor<T>, x1: &Image, x2: &Image, gains: &GainPair) -> Result<f64> {
    check_same_dims(x1, x2, "fusion sources")?;
    if gains.width != x1.width() || gains.height != x1.height() {
        return Err(Error::DimensionMismatch("gain maps differ from the sources".into()));
    }
    let obj = Objective::new(x1, x2, gains, x1.width(), x1.height());
    obj.check(output)?;
    Ok(obj.value(output))
}

/// Mean over channels, clamped to `[0, 1]`.
///
/// Deviations are accumulated about the first channel, so identical channels
/// average to exactly their common value.
pub fn average_channels<T: Real>(output: &Tensor<T>) -> Image {
    let (c, h, w) = output.dims3();
    let base = output.channel(0);
    let mut acc = vec![0.0f64; h * w];
    for ch in 1..c {
        for ((a, v), b) in acc.iter_mut().zip(output.channel(ch)).zip(base) {
            *a += v.as_f64() - b.as_f64();
        }
    }
    let n = c as f64;
    Image::from_fn(w, h, |x, y| base[y * w + x].as_f64() + acc[y * w + x] / n)
}

/// Fuses two equally sized sources with the default 32-bit network.
pub fn run_fusion(x1: &Image, x2: &Image, cfg: &FusionConfig) -> Result<FusionResult> {
    run_fusion_with::<f32>(x1, x2, cfg, |_, _| {})
}

/// Fuses two sources in precision `T`, calling `observe(iteration, loss)` after
/// every loss evaluation.
pub fn run_fusion_with<T: Real>(
    x1: &Image,
    x2: &Image,
    cfg: &FusionConfig,
    mut observe: impl FnMut(usize, f64),
) -> Result<FusionResult> {
    check_same_dims(x1, x2, "fusion sources")?;
    cfg.validate()?;
    let spec = cfg.network_spec();
    let gains = estimate_gains(x1, x2, cfg.gain_window)?;

    let m = spec.size_multiple();
    let (w, h) = (x1.width().div_ceil(m) * m, x1.height().div_ceil(m) * m);
    if (w, h) != x1.dims() {
        // Reject extents that cannot be reflected, as the padding step would.
        pad_reflect_to_multiple(x1, m)?;
    }
    let objective = Objective::new(x1, x2, &gains, w, h);

    let mut params = net::init_params::<T>(&spec, cfg.seed)?;
    let input = net::make_input::<T>(cfg.input_seed(), h, w, cfg.channels, &spec)?;
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params);

    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, usize, Tensor<T>)> = None;
    for t in 0..cfg.iterations {
        let mut seen = f64::NAN;
        let step = net::backward(&params, &input, &spec, |out| {
            let (l, g) = objective.value_and_grad(out);
            seen = l;
            (l, g)
        });
        let step = match step {
            Ok(s) => s,
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { iteration: t, seed: cfg.seed, loss: seen }),
            Err(e) => return Err(e),
        };
        let loss = step.loss;
        curve.push(loss);
        observe(t, loss);
        if t % cfg.snapshot_stride == 0 && best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, t, step.output));
        }
        if t + 1 < cfg.iterations {
            adam.step(&mut params, &step.grads).map_err(|_| Error::Diverged { iteration: t, seed: cfg.seed, loss })?;
        }
    }
    let (best_loss, best_iteration, snapshot) = best.expect("iteration 0 is always a candidate");
    let fused =
        crop(&average_channels(&snapshot), crate::image::CropRecord { width: x1.width(), height: x1.height() })?;
    Ok(FusionResult { fused, best_loss, best_iteration, loss_curve: curve, gains, config: cfg.clone() })
}
