//! Window-based indices built on the universal quality index: Piella's
//! saliency-weighted index and Cvejic's covariance-weighted index.

use crate::error::{Error, Result};
use crate::image::{check_same_dims, Image};

use super::uiqi::{covariance, mean, PairStats};

/// Side of the square sliding window (step 1).
pub const WINDOW: usize = 8;

/// Sample moments of the sources and the fused image over one window.
struct WindowMoments {
    af: PairStats,
    bf: PairStats,
}

/// How one window's two per-source indices are weighted.
#[derive(Clone, Copy)]
enum Weighting {
    /// `var_a / (var_a + var_b)`.
    Saliency,
    /// `cov_af / (cov_af + cov_bf)`, clamped to `[0, 1]`.
    Covariance,
}

fn weights(m: &WindowMoments, mode: Weighting) -> (f64, f64) {
    let (sa, sb) = match mode {
        Weighting::Saliency => (m.af.var_x, m.bf.var_x),
        Weighting::Covariance => (m.af.cov, m.bf.cov),
    };
    let s = sa + sb;
    if s == 0.0 {
        return (0.5, 0.5);
    }
    ((sa / s).clamp(0.0, 1.0), (sb / s).clamp(0.0, 1.0))
}

fn windowed_index(a: &Image, b: &Image, f: &Image, mode: Weighting, what: &str) -> Result<f64> {
    check_same_dims(a, b, what)?;
    check_same_dims(a, f, what)?;
    let (w, h) = a.dims();
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidArgument(format!("{what} needs images of at least {WINDOW}x{WINDOW}")));
    }
    let n = WINDOW * WINDOW;
    let (mut wa, mut wb, mut wf) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - WINDOW {
        for x0 in 0..=w - WINDOW {
            for dy in 0..WINDOW {
                let row = (y0 + dy) * w + x0;
                let dst = dy * WINDOW..(dy + 1) * WINDOW;
                wa[dst.clone()].copy_from_slice(&a.pixels()[row..row + WINDOW]);
                wb[dst.clone()].copy_from_slice(&b.pixels()[row..row + WINDOW]);
                wf[dst].copy_from_slice(&f.pixels()[row..row + WINDOW]);
            }
            let (ma, mb, mf) = (mean(&wa), mean(&wb), mean(&wf));
            let var_f = covariance(&wf, mf, &wf, mf);
            let m = WindowMoments {
                af: PairStats {
                    mean_x: ma,
                    mean_y: mf,
                    var_x: covariance(&wa, ma, &wa, ma),
                    var_y: var_f,
                    cov: covariance(&wa, ma, &wf, mf),
                },
                bf: PairStats {
                    mean_x: mb,
                    mean_y: mf,
                    var_x: covariance(&wb, mb, &wb, mb),
                    var_y: var_f,
                    cov: covariance(&wb, mb, &wf, mf),
                },
            };
            let (la, lb) = weights(&m, mode);
            let qa = m.af.q0(|| wa == wf);
            let qb = m.bf.q0(|| wb == wf);
            total += la * qa + lb * qb;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Piella's fusion quality index over 8x8 windows.
pub fn piella_q(a: &Image, b: &Image, f: &Image) -> Result<f64> {
    windowed_index(a, b, f, Weighting::Saliency, "Piella index")
}

/// Cvejic's fusion quality index over 8x8 windows.
pub fn cvejic_q(a: &Image, b: &Image, f: &Image) -> Result<f64> {
    windowed_index(a, b, f, Weighting::Covariance, "Cvejic index")
}
