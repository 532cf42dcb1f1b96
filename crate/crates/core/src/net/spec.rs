use crate::error::{Error, Result};

/// Shape of the encoder-decoder.
///
/// The defaults are five levels of 128-channel convolutions with 4-channel
/// skip branches, 3x3 kernels, 1x1 skip convolutions and LeakyReLU(0.2).
/// Input and output both have `out_channels` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub depth: usize,
    pub down_channels: usize,
    pub up_channels: usize,
    pub skip_channels: usize,
    pub conv_kernel: usize,
    pub skip_kernel: usize,
    pub leaky_slope: f64,
    pub out_channels: usize,
}

impl NetworkSpec {
    pub fn new(out_channels: usize) -> Self {
        NetworkSpec {
            depth: 5,
            down_channels: 128,
            up_channels: 128,
            skip_channels: 4,
            conv_kernel: 3,
            skip_kernel: 1,
            leaky_slope: 0.2,
            out_channels,
        }
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.depth == 0 || self.depth > 16 {
            return bad(format!("network depth {} out of range", self.depth));
        }
        for (name, v) in [
            ("down_channels", self.down_channels),
            ("up_channels", self.up_channels),
            ("skip_channels", self.skip_channels),
            ("out_channels", self.out_channels),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, k) in [("conv_kernel", self.conv_kernel), ("skip_kernel", self.skip_kernel)] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope > 0.0) {
            return bad(format!("leaky slope {} must be positive", self.leaky_slope));
        }
        Ok(())
    }
}
