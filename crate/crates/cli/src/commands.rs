use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dipfuse::gains::estimate_gains;
use dipfuse::image::{load_image, resize_bilinear, write_image_file};
use dipfuse::{evaluate_all, run_fusion, BitDepth, FusionConfig, Image, ImageFormat};

use crate::args::{Cli, Command, Depth, FuseArgs, GainsArgs, MetricsArgs, Resize};
use crate::error::CliError;
use crate::manifest::{config_json, manifest_path, sha256_hex, InputDigest, RunManifest};
use crate::sweep;

pub(crate) fn dispatch(cli: Cli, argv: &[OsString]) -> Result<(), CliError> {
    let started = Instant::now();
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match cli.command {
        Command::Fuse(a) => fuse(a, command, started),
        Command::Gains(a) => gains(a, command, started),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep::run(a, command, started),
    }
}

/// A decoded source and the digest of its file bytes.
pub(crate) struct Source {
    pub image: Image,
    pub digest: InputDigest,
}

pub(crate) fn load_source(path: &Path) -> Result<Source, CliError> {
    let input_err = |source| CliError::Input { path: path.display().to_string(), source };
    let format = ImageFormat::from_path(path).map_err(input_err)?;
    let bytes = std::fs::read(path).map_err(|e| input_err(e.into()))?;
    let image = load_image(&bytes, format).map_err(input_err)?;
    let digest = InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) };
    Ok(Source { image, digest })
}

pub(crate) fn two_sources(paths: &[PathBuf], resize: Option<Resize>) -> Result<(Source, Source), CliError> {
    let [a, b] = paths else {
        return Err(CliError::Usage(format!("--src must be given exactly twice, got {}", paths.len())));
    };
    let (mut a, mut b) = (load_source(a)?, load_source(b)?);
    if let Some(r) = resize {
        a.image = resize_bilinear(&a.image, r.width, r.height)?;
        b.image = resize_bilinear(&b.image, r.width, r.height)?;
    }
    Ok((a, b))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_image(path: &Path, img: &Image, depth: BitDepth) -> Result<(), CliError> {
    write_image_file(path, img, depth).map_err(|source| match source {
        dipfuse::Error::Io(e) => CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        source => CliError::Input { path: path.display().to_string(), source },
    })
}

fn fuse(a: FuseArgs, command: Vec<String>, started: Instant) -> Result<(), CliError> {
    let depth = match a.bit_depth {
        Depth::Eight => BitDepth::Eight,
        Depth::Sixteen => BitDepth::Sixteen,
    };
    // Fail on an unusable output path before spending time on the optimization.
    let out_format = ImageFormat::from_path(&a.out).map_err(|e| CliError::Usage(e.to_string()))?;
    if out_format == ImageFormat::Png && depth == BitDepth::Sixteen {
        return Err(CliError::Usage("16-bit output requires a .pgm file".into()));
    }
    let (s1, s2) = two_sources(&a.src, a.resize)?;
    let cfg = FusionConfig {
        channels: a.channels,
        iterations: a.iters,
        lr: a.lr,
        seed: a.seed,
        gain_window: a.gain_window,
        ..FusionConfig::default()
    };
    let result = run_fusion(&s1.image, &s2.image, &cfg)?;

    write_image(&a.out, &result.fused, depth)?;
    let mut outputs = vec![a.out.display().to_string()];
    if let Some(csv) = &a.loss_csv {
        write_file(csv, result.loss_csv())?;
        outputs.push(csv.display().to_string());
    }
    let manifest = RunManifest {
        command,
        config: config_json(&cfg),
        inputs: vec![s1.digest, s2.digest],
        outputs,
        duration_s: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_file(&manifest_path(&a.out), manifest.to_json())
}

fn gains(a: GainsArgs, command: Vec<String>, started: Instant) -> Result<(), CliError> {
    let (s1, s2) = two_sources(&a.src, None)?;
    let g = estimate_gains(&s1.image, &s2.image, a.gain_window)?;
    let (b1, b2) = g.to_images();
    let prefix = a.out_prefix.as_os_str();
    let with_suffix = |s: &str| {
        let mut p = prefix.to_owned();
        p.push(s);
        PathBuf::from(p)
    };
    let (p1, p2) = (with_suffix("_b1.pgm"), with_suffix("_b2.pgm"));
    write_image(&p1, &b1, BitDepth::Eight)?;
    write_image(&p2, &b2, BitDepth::Eight)?;
    let manifest = RunManifest {
        command,
        config: serde_json::json!({ "gain_window": a.gain_window }),
        inputs: vec![s1.digest, s2.digest],
        outputs: vec![p1.display().to_string(), p2.display().to_string()],
        duration_s: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_file(&with_suffix(".manifest.json"), manifest.to_json())
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let (s1, s2) = two_sources(&a.src, None)?;
    let fused = load_source(&a.fused)?;
    let mut report = evaluate_all(&s1.image, &s2.image, &fused.image)?;
    report.files.a = s1.digest.path;
    report.files.b = s2.digest.path;
    report.files.fused = fused.digest.path;
    let mut json = report.to_json();
    json.push('\n');
    if a.json.as_os_str() == "-" {
        print!("{json}");
        Ok(())
    } else {
        write_file(&a.json, json)
    }
}
