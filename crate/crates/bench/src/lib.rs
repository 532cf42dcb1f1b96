//! Fixtures shared by the benchmarks in `benches/`.

use dipfuse::Image;

/// Deterministic smooth-plus-edges test image.
pub fn textured(width: usize, height: usize, phase: f64) -> Image {
    Image::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        let smooth = 0.5 + 0.3 * (6.0 * u + phase).sin() * (4.0 * v - phase).cos();
        let edge = if (x / 16 + y / 16) % 2 == 0 { 0.1 } else { -0.1 };
        smooth + edge
    })
}
