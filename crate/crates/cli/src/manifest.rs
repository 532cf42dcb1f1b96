//! The JSON record written next to every run's outputs.

use std::path::{Path, PathBuf};

use dipfuse::FusionConfig;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
    pub version: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `f.pgm` -> `f.pgm.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn config_json(cfg: &FusionConfig) -> Value {
    let net = cfg.network_spec();
    json!({
        "channels": cfg.channels,
        "iterations": cfg.iterations,
        "lr": cfg.lr,
        "seed": cfg.seed,
        "gain_window": cfg.gain_window,
        "snapshot_stride": cfg.snapshot_stride,
        "network": {
            "depth": net.depth,
            "down_channels": net.down_channels,
            "up_channels": net.up_channels,
            "skip_channels": net.skip_channels,
            "conv_kernel": net.conv_kernel,
            "skip_kernel": net.skip_kernel,
            "leaky_slope": net.leaky_slope,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn path_suffix() {
        assert_eq!(manifest_path(Path::new("out/f.pgm")), PathBuf::from("out/f.pgm.manifest.json"));
    }
}
