//! Channel-count sweep: every (pair, channels) combination is fused and scored,
//! then averaged per channel count.
//!
//! Runs are independent and own their network, so `jobs > 1` only changes
//! wall-clock time; rows are always emitted in pair order, then channel order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dipfuse::fmt::format_sig;
use dipfuse::{evaluate_all, run_fusion, FusionConfig, Image, MetricReport};
use rayon::prelude::*;

use crate::args::{Resize, SweepArgs};
use crate::commands::two_sources;
use crate::error::CliError;
use crate::manifest::{config_json, manifest_path, RunManifest};

pub const CSV_HEADER: &str = "pair,channels,pe,mi,q,cv,best_loss,seconds";

/// Label written to the `pair` column of the average rows.
pub const MEAN_LABEL: &str = "mean";

#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub label: String,
    pub a: PathBuf,
    pub b: PathBuf,
}

/// Parses a pair list. Blank lines and `#` comments are skipped; relative
/// paths are taken relative to `base`.
pub fn parse_pairs(text: &str, base: &Path) -> Result<Vec<PairEntry>, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = fields[..] else {
            return Err(CliError::Usage(format!("pair list line {}: expected two paths, got {}", n + 1, fields.len())));
        };
        let (a, b) = (base.join(a), base.join(b));
        let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        pairs.push(PairEntry { label: format!("{}+{}", stem(&a), stem(&b)), a, b });
    }
    if pairs.is_empty() {
        return Err(CliError::Usage("pair list is empty".into()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub best_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunRow {
    pub pair: String,
    pub channels: usize,
    pub outcome: Result<RunOutcome, String>,
}

/// Per-channel average over the successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub channels: usize,
    pub runs: usize,
    pub pe: f64,
    pub mi: f64,
    pub q: f64,
    pub cv: f64,
    pub best_loss: f64,
    pub seconds: f64,
}

/// A pair ready to fuse, or the reason it could not be loaded.
pub type LoadedPair = (String, Result<(Image, Image), String>);

fn fuse_and_score(a: &Image, b: &Image, cfg: &FusionConfig) -> Result<RunOutcome, String> {
    let started = Instant::now();
    let result = run_fusion(a, b, cfg).map_err(|e| e.to_string())?;
    let report = evaluate_all(a, b, &result.fused).map_err(|e| e.to_string())?;
    Ok(RunOutcome { report, best_loss: result.best_loss, seconds: started.elapsed().as_secs_f64() })
}

/// Runs every pair at every channel count on up to `jobs` worker threads.
pub fn sweep_images(pairs: &[LoadedPair], channels: &[usize], template: &FusionConfig, jobs: usize) -> Vec<RunRow> {
    let work: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| channels.iter().map(move |&c| (p, c))).collect();
    let run_one = |&(p, c): &(usize, usize)| {
        let (label, images) = &pairs[p];
        let cfg = FusionConfig { channels: c, ..template.clone() };
        let outcome = match images {
            Ok((a, b)) => fuse_and_score(a, b, &cfg),
            Err(e) => Err(e.clone()),
        };
        RunRow { pair: label.clone(), channels: c, outcome }
    };
    if jobs <= 1 {
        return work.iter().map(run_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("worker pool");
    pool.install(|| work.par_iter().map(run_one).collect())
}

pub fn channel_means(rows: &[RunRow], channels: &[usize]) -> Vec<MeanRow> {
    channels
        .iter()
        .map(|&c| {
            let ok: Vec<&RunOutcome> =
                rows.iter().filter(|r| r.channels == c).filter_map(|r| r.outcome.as_ref().ok()).collect();
            let mean = |f: &dyn Fn(&RunOutcome) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64
                }
            };
            MeanRow {
                channels: c,
                runs: ok.len(),
                pe: mean(&|o| o.report.pe),
                mi: mean(&|o| o.report.mi),
                q: mean(&|o| o.report.q),
                cv: mean(&|o| o.report.cv),
                best_loss: mean(&|o| o.best_loss),
                seconds: mean(&|o| o.seconds),
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with one row per run followed by one `mean` row per channel count.
///
/// Failed runs keep their pair and channel columns and carry `error: <reason>`
/// in the `pe` column. `seconds` is left empty unless `timing` is set.
pub fn to_csv(rows: &[RunRow], means: &[MeanRow], timing: bool) -> String {
    let num = |x: f64| format_sig(x, 17);
    let secs = |x: f64| if timing { format_sig(x, 6) } else { String::new() };
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let pair = csv_field(&r.pair);
        match &r.outcome {
            Ok(o) => {
                let m = &o.report;
                out.push_str(&format!(
                    "{pair},{},{},{},{},{},{},{}\n",
                    r.channels,
                    num(m.pe),
                    num(m.mi),
                    num(m.q),
                    num(m.cv),
                    num(o.best_loss),
                    secs(o.seconds)
                ));
            }
            Err(e) => {
                out.push_str(&format!("{pair},{},{},,,,,\n", r.channels, csv_field(&format!("error: {e}"))));
            }
        }
    }
    for m in means {
        if m.runs == 0 {
            out.push_str(&format!("{MEAN_LABEL},{},,,,,,\n", m.channels));
        } else {
            out.push_str(&format!(
                "{MEAN_LABEL},{},{},{},{},{},{},{}\n",
                m.channels,
                num(m.pe),
                num(m.mi),
                num(m.q),
                num(m.cv),
                num(m.best_loss),
                secs(m.seconds)
            ));
        }
    }
    out
}

fn load_pair(
    entry: &PairEntry,
    resize: Option<Resize>,
) -> Result<((Image, Image), Vec<crate::manifest::InputDigest>), String> {
    let (a, b) = two_sources(&[entry.a.clone(), entry.b.clone()], resize).map_err(|e| e.to_string())?;
    if !a.image.same_dims(&b.image) {
        return Err(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.image.width(),
            a.image.height(),
            b.image.width(),
            b.image.height()
        ));
    }
    Ok(((a.image, b.image), vec![a.digest, b.digest]))
}

pub(crate) fn run(args: SweepArgs, command: Vec<String>, started: Instant) -> Result<(), CliError> {
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let template = FusionConfig {
        iterations: args.iters,
        lr: args.lr,
        seed: args.seed,
        gain_window: args.gain_window,
        ..FusionConfig::default()
    };
    for &c in &args.channels {
        FusionConfig { channels: c, ..template.clone() }.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&args.pairs)
        .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.pairs.display()))))?;
    let base = args.pairs.parent().unwrap_or(Path::new(""));
    let entries = parse_pairs(&text, base)?;

    let mut inputs = Vec::new();
    let loaded: Vec<LoadedPair> = entries
        .iter()
        .map(|e| {
            let images = load_pair(e, args.resize).map(|(images, digests)| {
                inputs.extend(digests);
                images
            });
            (e.label.clone(), images)
        })
        .collect();

    let rows = sweep_images(&loaded, &args.channels, &template, args.jobs);
    for r in &rows {
        if let Err(e) = &r.outcome {
            eprintln!("dipfuse: {} with {} channels failed: {e}", r.pair, r.channels);
        }
    }
    let means = channel_means(&rows, &args.channels);
    std::fs::write(&args.out, to_csv(&rows, &means, args.timing))?;

    let manifest = RunManifest {
        command,
        config: config_json(&template),
        inputs,
        outputs: vec![args.out.display().to_string()],
        duration_s: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(manifest_path(&args.out), manifest.to_json())?;

    if rows.iter().any(|r| r.outcome.is_ok()) {
        Ok(())
    } else {
        Err(CliError::SweepFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dipfuse::metrics::ReportFiles;

    fn ok_row(pair: &str, channels: usize, pe: f64) -> RunRow {
        let report =
            MetricReport { pe, mi: 1.0, q: 0.5, cv: 0.25, pe_degenerate: false, files: ReportFiles::default() };
        RunRow { pair: pair.into(), channels, outcome: Ok(RunOutcome { report, best_loss: 2.0, seconds: 1.0 }) }
    }

    #[test]
    fn pair_list_parsing() {
        let text = "# sources\na.pgm  b.pgm\n\n/abs/c.png\td.png # trailing\n";
        let pairs = parse_pairs(text, Path::new("dir")).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].a, PathBuf::from("dir/a.pgm"));
        assert_eq!(pairs[0].label, "a+b");
        assert_eq!(pairs[1].a, PathBuf::from("/abs/c.png"));
        assert!(parse_pairs("a.pgm\n", Path::new("")).is_err());
        assert!(parse_pairs("# nothing\n", Path::new("")).is_err());
    }

    #[test]
    fn means_skip_failures() {
        let rows = vec![
            ok_row("p", 1, 0.25),
            ok_row("q", 1, 0.75),
            RunRow { pair: "r".into(), channels: 1, outcome: Err("boom".into()) },
            RunRow { pair: "r".into(), channels: 2, outcome: Err("boom".into()) },
        ];
        let means = channel_means(&rows, &[1, 2]);
        assert_eq!(means[0].runs, 2);
        assert_eq!(means[0].pe, 0.5);
        assert_eq!(means[1].runs, 0);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            ok_row("a+b", 1, 0.5),
            RunRow { pair: "x,y".into(), channels: 1, outcome: Err("bad \"file\"".into()) },
        ];
        let means = channel_means(&rows, &[1]);
        let csv = to_csv(&rows, &means, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "a+b,1,0.5,1,0.5,0.25,2,");
        assert_eq!(lines[2], "\"x,y\",1,\"error: bad \"\"file\"\"\",,,,,");
        assert_eq!(lines[3], "mean,1,0.5,1,0.5,0.25,2,");
        assert!(to_csv(&rows, &means, true).lines().nth(1).unwrap().ends_with(",2,1"));
    }
}
