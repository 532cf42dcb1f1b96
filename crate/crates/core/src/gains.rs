//! Per-pixel sensor gains from a sliding-window principal component analysis.
//!
//! Each source is modelled as `x_i = beta_i * x_0 + noise`. Around every pixel the
//! non-centred second moment of the intensity pairs `(x1, x2)` is formed and its
//! dominant eigenvector, oriented non-negatively and normalised to unit length,
//! gives `(beta1, beta2)` at that pixel.

use crate::error::{Error, Result};
use crate::image::{check_same_dims, reflect_index, Image};

pub const DEFAULT_GAIN_WINDOW: usize = 7;

/// Frobenius norm below which a moment matrix carries no direction.
const DEGENERATE_NORM: f64 = 1e-12;

/// The equal-weight direction used when a window is uninformative.
pub const FALLBACK_GAIN: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Per-pixel gain maps for two sources.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair {
    pub width: usize,
    pub height: usize,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub window: usize,
}

impl GainPair {
    /// Gain maps as images; unit norm keeps both in `[0, 1]`.
    pub fn to_images(&self) -> (Image, Image) {
        let as_image = |v: &[f64]| Image::from_fn(self.width, self.height, |x, y| v[y * self.width + x]);
        (as_image(&self.beta1), as_image(&self.beta2))
    }
}

/// Unit eigenvector of the larger eigenvalue of `[[m11, m12], [m12, m22]]`.
///
/// Returns `None` for a numerically zero matrix and for a multiple of the
/// identity, where no direction dominates. The result is oriented so that its
/// components are non-negative whenever `m12 >= 0`, and swapping `m11` with
/// `m22` swaps the two components bit-for-bit.
pub fn dominant_eigvec2(m11: f64, m12: f64, m22: f64) -> Option<(f64, f64)> {
    let norm = ((m11 * m11 + m22 * m22) + 2.0 * m12 * m12).sqrt();
    if !(norm >= DEGENERATE_NORM) {
        return None;
    }
    let half_diff = 0.5 * (m11 - m22);
    let radius = (half_diff * half_diff + m12 * m12).sqrt();
    // (m12, lambda - m11) and (lambda - m22, m12) are both eigenvectors; take the
    // one whose large component comes from the smaller diagonal entry.
    let (v1, v2) = if m11 <= m22 { (m12, radius - half_diff) } else { (radius + half_diff, m12) };
    let len = (v1 * v1 + v2 * v2).sqrt();
    if !(len > DEGENERATE_NORM * norm) {
        return None;
    }
    let (mut v1, mut v2) = (v1 / len, v2 / len);
    if v1 + v2 < 0.0 {
        v1 = -v1;
        v2 = -v2;
    }
    Some((v1, v2))
}

/// Estimates `(beta1, beta2)` for every pixel from `window x window`
/// neighbourhoods, reflected at the borders.
pub fn estimate_gains(x1: &Image, x2: &Image, window: usize) -> Result<GainPair> {
    check_same_dims(x1, x2, "gain estimation sources")?;
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("gain window must be odd and positive, got {window}")));
    }
    let (w, h) = x1.dims();
    let r = (window / 2) as isize;
    let k = (window * window) as f64;

    let xs: Vec<Vec<usize>> = (0..w as isize).map(|x| (x - r..=x + r).map(|i| reflect_index(i, w)).collect()).collect();
    let ys: Vec<Vec<usize>> = (0..h as isize).map(|y| (y - r..=y + r).map(|i| reflect_index(i, h)).collect()).collect();

    let (p1, p2) = (x1.pixels(), x2.pixels());
    let mut beta1 = Vec::with_capacity(w * h);
    let mut beta2 = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
            for &yy in &ys[y] {
                let row = yy * w;
                for &xx in &xs[x] {
                    let (a, b) = (p1[row + xx], p2[row + xx]);
                    s11 += a * a;
                    s12 += a * b;
                    s22 += b * b;
                }
            }
            let (b1, b2) = dominant_eigvec2(s11 / k, s12 / k, s22 / k).unwrap_or((FALLBACK_GAIN, FALLBACK_GAIN));
            beta1.push(b1);
            beta2.push(b2);
        }
    }
    Ok(GainPair { width: w, height: h, beta1, beta2, window })
}
