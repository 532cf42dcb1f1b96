//! Parameter storage, initialisation, the network input and checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{NetworkSpec, Real, Tensor};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered network weights. Iteration order is fixed by the architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    pub params: Vec<Param<T>>,
    /// Seed used by [`init_params`]; `None` for loaded checkpoints.
    pub seed: Option<u64>,
}

impl<T: Real> ParameterStore<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            params: self.params.iter().map(|p| Param { name: p.name.clone(), tensor: p.tensor.cast() }).collect(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParamKind {
    ConvWeight { fan_in: usize },
    Bias,
    NormScale,
    NormShift,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

pub(crate) fn param_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

/// Draws convolution weights uniformly from `[-sqrt(1/fan_in), sqrt(1/fan_in)]`;
/// biases and normalisation shifts start at 0, normalisation scales at 1.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<ParameterStore<T>> {
    let (_, decls) = super::model::blueprint(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = decls
        .into_iter()
        .map(|d| {
            let len = d.shape.iter().product();
            let data: Vec<T> = match d.kind {
                ParamKind::ConvWeight { fan_in } => {
                    let b = param_bound(fan_in);
                    (0..len).map(|_| T::of(rng.gen_range(-b..=b))).collect()
                }
                ParamKind::Bias | ParamKind::NormShift => vec![T::zero(); len],
                ParamKind::NormScale => vec![T::one(); len],
            };
            Param { name: d.name, tensor: Tensor::from_parts(d.shape, data) }
        })
        .collect();
    Ok(ParameterStore { params, seed: Some(seed) })
}

/// Upper end of the uniform distribution of the network input.
pub const INPUT_NOISE_SCALE: f64 = 0.1;

/// The fixed random network input, shape `(channels, height, width)`, uniform on `[0, 0.1]`.
pub fn make_input<T: Real>(
    seed: u64,
    height: usize,
    width: usize,
    channels: usize,
    spec: &NetworkSpec,
) -> Result<Tensor<T>> {
    let m = spec.size_multiple();
    if height == 0 || width == 0 || channels == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!(
            "input {channels}x{height}x{width} must be non-empty with spatial dims divisible by {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * height * width).map(|_| T::of(rng.gen_range(0.0..=INPUT_NOISE_SCALE))).collect();
    Ok(Tensor::from_parts(vec![channels, height, width], data))
}

/// Serialises the store as a flat sequence of records: `u32` name length,
/// name bytes, `u32` rank, `u32` dims, then `f32` values, all little-endian.
pub fn save_checkpoint<T: Real>(store: &ParameterStore<T>) -> Vec<u8> {
    let mut out = Vec::new();
    for p in &store.params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.tensor.shape().len() as u32).to_le_bytes());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(Error::Truncated { expected: self.pos + n, found: self.bytes.len() })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<T: Real>(bytes: &[u8]) -> Result<ParameterStore<T>> {
    let mut r = ByteReader { bytes, pos: 0 };
    let mut params = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::MalformedHeader("checkpoint name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r
            .take(len * 4)?
            .chunks_exact(4)
            .map(|c| T::of(f64::from(f32::from_le_bytes(c.try_into().unwrap()))))
            .collect();
        params.push(Param { name, tensor: Tensor::new(shape, data)? });
    }
    Ok(ParameterStore { params, seed: None })
}
