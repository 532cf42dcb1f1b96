//! Fusion mutual information `I(A;F) + I(B;F)` in bits over 8-bit histograms.

use crate::error::Result;
use crate::image::{check_same_dims, quantize8, Image, QuantizedImage};

const BINS: usize = QuantizedImage::LEVELS;

/// Mutual information of two equally sized quantized images, in bits.
pub fn mutual_information(x: &QuantizedImage, y: &QuantizedImage) -> f64 {
    assert_eq!(x.codes.len(), y.codes.len());
    let n = x.codes.len() as f64;
    let mut joint = vec![0u64; BINS * BINS];
    let (mut hx, mut hy) = ([0u64; BINS], [0u64; BINS]);
    for (&a, &b) in x.codes.iter().zip(&y.codes) {
        joint[a as usize * BINS + b as usize] += 1;
        hx[a as usize] += 1;
        hy[b as usize] += 1;
    }
    let mut mi = 0.0;
    for (i, row) in joint.chunks(BINS).enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (hx[i] as f64 * hy[j] as f64)).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Shannon entropy of the 8-bit histogram, in bits.
pub fn entropy(img: &Image) -> f64 {
    let q = quantize8(img);
    let n = q.codes.len() as f64;
    let mut h = [0u64; BINS];
    q.codes.iter().for_each(|&c| h[c as usize] += 1);
    h.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n * (n / c as f64).log2()).sum()
}

pub fn mutual_information_metric(a: &Image, b: &Image, f: &Image) -> Result<f64> {
    check_same_dims(a, b, "MI sources")?;
    check_same_dims(a, f, "MI fused image")?;
    let qf = quantize8(f);
    Ok(mutual_information(&quantize8(a), &qf) + mutual_information(&quantize8(b), &qf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_codes_identity_coupling() {
        let a = Image::new(2, 2, vec![0.0, 0.2, 0.6, 1.0]).unwrap();
        let b = Image::filled(2, 2, 0.5);
        assert_eq!(mutual_information_metric(&a, &b, &a).unwrap(), 2.0);
        assert_eq!(entropy(&a), 2.0);
        assert_eq!(mutual_information_metric(&b, &a, &a).unwrap(), 2.0);
    }

    #[test]
    fn constant_triple_is_zero() {
        let c = Image::filled(4, 3, 0.7);
        assert_eq!(mutual_information_metric(&c, &c, &c).unwrap(), 0.0);
    }

    #[test]
    fn self_information_is_entropy() {
        let a = Image::from_fn(16, 16, |x, y| ((x * 3 + y * 5) % 8) as f64 / 7.0);
        let q = quantize8(&a);
        assert!((mutual_information(&q, &q) - entropy(&a)).abs() < 1e-14);
        assert!((entropy(&a) - 3.0).abs() < 1e-14);
    }
}
