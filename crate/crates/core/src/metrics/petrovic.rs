//! Edge-information preservation, Q^{AB/F}.
//!
//! Sobel gradients give an edge strength and orientation at every pixel. For
//! each source the agreement of strength and orientation with the fused image
//! is passed through two sigmoids, and the products are averaged with the
//! source edge strengths as weights.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::image::{check_same_dims, Image};

pub const GAMMA_G: f64 = 0.9994;
pub const KAPPA_G: f64 = -15.0;
pub const SIGMA_G: f64 = 0.5;
pub const GAMMA_A: f64 = 0.9879;
pub const KAPPA_A: f64 = -22.0;
pub const SIGMA_A: f64 = 0.8;

/// Preservation score when strength and orientation agree perfectly.
pub fn perfect_preservation() -> f64 {
    strength_preservation(1.0) * orientation_preservation(1.0)
}

#[inline]
fn strength_preservation(g: f64) -> f64 {
    GAMMA_G / (1.0 + (KAPPA_G * (g - SIGMA_G)).exp())
}

#[inline]
fn orientation_preservation(a: f64) -> f64 {
    GAMMA_A / (1.0 + (KAPPA_A * (a - SIGMA_A)).exp())
}

/// Per-pixel Sobel strength and orientation in `(-pi/2, pi/2]`.
pub(crate) struct EdgeField {
    pub strength: Vec<f64>,
    pub angle: Vec<f64>,
}

pub(crate) fn sobel(img: &Image) -> EdgeField {
    let (w, h) = img.dims();
    let mut strength = Vec::with_capacity(w * h);
    let mut angle = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_reflect(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            strength.push((sx * sx + sy * sy).sqrt());
            angle.push(if sx == 0.0 { FRAC_PI_2 } else { (sy / sx).atan() });
        }
    }
    EdgeField { strength, angle }
}

#[inline]
fn preservation(gs: f64, as_: f64, gf: f64, af: f64) -> f64 {
    let g = if gs == 0.0 && gf == 0.0 { 0.0 } else { gs.min(gf) / gs.max(gf) };
    let a = 1.0 - (as_ - af).abs() / FRAC_PI_2;
    strength_preservation(g) * orientation_preservation(a)
}

/// Q^{AB/F} and a flag set when neither source has any edge (the score is then 0).
pub fn petrovic_qabf_flagged(a: &Image, b: &Image, f: &Image) -> Result<(f64, bool)> {
    check_same_dims(a, b, "Q^AB/F sources")?;
    check_same_dims(a, f, "Q^AB/F fused image")?;
    if a.width() < 3 || a.height() < 3 {
        return Err(Error::InvalidArgument("Q^AB/F needs images of at least 3x3".into()));
    }
    let (ea, eb, ef) = (sobel(a), sobel(b), sobel(f));
    let (mut num, mut den) = (0.0, 0.0);
    for p in 0..a.len() {
        let (wa, wb) = (ea.strength[p], eb.strength[p]);
        let qa = preservation(wa, ea.angle[p], ef.strength[p], ef.angle[p]);
        let qb = preservation(wb, eb.angle[p], ef.strength[p], ef.angle[p]);
        num += qa * wa + qb * wb;
        den += wa + wb;
    }
    if den == 0.0 {
        return Ok((0.0, true));
    }
    Ok((num / den, false))
}

pub fn petrovic_qabf(a: &Image, b: &Image, f: &Image) -> Result<f64> {
    petrovic_qabf_flagged(a, b, f).map(|(v, _)| v)
}
