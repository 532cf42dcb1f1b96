//! The universal image quality index on a single window.

/// Sample statistics of a pair of equally long windows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairStats {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl PairStats {
    /// Index value; `identical` is consulted only when the denominator vanishes.
    pub fn q0(&self, identical: impl FnOnce() -> bool) -> f64 {
        let den = (self.var_x + self.var_y) * (self.mean_x * self.mean_x + self.mean_y * self.mean_y);
        if den == 0.0 {
            return if identical() { 1.0 } else { 0.0 };
        }
        4.0 * self.cov * self.mean_x * self.mean_y / den
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased (n - 1) covariance about the given means.
pub(crate) fn covariance(x: &[f64], mx: f64, y: &[f64], my: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

pub(crate) fn pair_stats(x: &[f64], y: &[f64]) -> PairStats {
    let (mean_x, mean_y) = (mean(x), mean(y));
    PairStats {
        mean_x,
        mean_y,
        var_x: covariance(x, mean_x, x, mean_x),
        var_y: covariance(y, mean_y, y, mean_y),
        cov: covariance(x, mean_x, y, mean_y),
    }
}

/// `4 cov mx my / ((vx + vy)(mx^2 + my^2))` with sample statistics.
///
/// A zero denominator yields 1 for identical windows and 0 otherwise.
pub fn uiqi_window(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "uiqi windows must have equal length");
    assert!(x.len() >= 2, "uiqi windows need at least two samples");
    pair_stats(x, y).q0(|| x == y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_windows() {
        let x = [0.1, 0.5, 0.3, 0.9];
        assert!((uiqi_window(&x, &x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn anti_correlated_window() {
        // y = -x + 2 mean(x): same mean and variance, covariance = -var.
        let x = [0.2, 0.4, 0.6, 0.8];
        let y = [0.8, 0.6, 0.4, 0.2];
        // mean 0.5 for both, so the luminance term is 1 and the index is -1.
        assert!((uiqi_window(&x, &y) + 1.0).abs() < 1e-14);

        let x = [0.1, 0.2, 0.3, 0.6];
        let mx = 0.3;
        let y: Vec<f64> = x.iter().map(|v| -v + 2.0 * mx).collect();
        // var = ((0.2)^2 + 0.1^2 + 0 + 0.3^2)/3 = 0.14/3, cov = -var; my = mx
        // q0 = 4 (-var) mx^2 / (2 var * 2 mx^2) = -1
        assert!((uiqi_window(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn luminance_and_contrast_terms() {
        // y = 2x: cov = 2 vx, vy = 4 vx, my = 2 mx
        // q0 = 4*2vx*mx*2mx / (5vx * 5mx^2) = 16/25
        let x = [0.1, 0.2, 0.3, 0.4];
        let y = [0.2, 0.4, 0.6, 0.8];
        assert!((uiqi_window(&x, &y) - 0.64).abs() < 1e-14);
    }

    #[test]
    fn degenerate_conventions() {
        assert_eq!(uiqi_window(&[0.4; 4], &[0.4; 4]), 1.0);
        assert_eq!(uiqi_window(&[0.0; 4], &[0.0; 4]), 1.0);
        assert_eq!(uiqi_window(&[0.4; 4], &[0.3; 4]), 0.0);
        assert_eq!(uiqi_window(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
    }
}
