use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dipfuse::image::{write_image_file, BitDepth};
use dipfuse::Image;

fn dipfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipfuse")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, img: &Image) -> PathBuf {
    let p = dir.join(name);
    write_image_file(&p, img, BitDepth::Eight).unwrap();
    p
}

fn pattern(w: usize, h: usize, phase: usize) -> Image {
    Image::from_fn(w, h, |x, y| ((x * 5 + y * 3 + phase) % 17) as f64 / 16.0)
}

fn blob(w: usize, h: usize, cx: f64, cy: f64) -> Image {
    Image::from_fn(w, h, |x, y| 0.1 + 0.7 * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / 20.0).exp())
}

#[test]
fn fuse_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &blob(20, 18, 6.0, 8.0));
    let b = write(dir.path(), "b.pgm", &blob(20, 18, 13.0, 9.0));
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("f{run}.pgm"));
        let csv = dir.path().join(format!("loss{run}.csv"));
        let o = dipfuse(&[
            "fuse",
            "--src",
            s(&a),
            "--src",
            s(&b),
            "--out",
            s(&out),
            "--channels",
            "2",
            "--iters",
            "3",
            "--seed",
            "42",
            "--loss-csv",
            s(&csv),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read_to_string(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = &outputs[0].1;
    assert!(csv.starts_with("iteration,loss\n0,"));
    assert_eq!(csv.lines().count(), 4);
    assert!(outputs[0].0.starts_with(b"P5\n20 18\n255\n"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f0.pgm.manifest.json")).unwrap()).unwrap();
    for key in ["command", "config", "inputs", "outputs", "duration_s", "version"] {
        assert!(manifest.get(key).is_some(), "missing {key}");
    }
    assert_eq!(manifest["config"]["channels"], 2);
    assert_eq!(manifest["config"]["seed"], 42);
    let digest = dipfuse_cli::manifest::sha256_hex(&std::fs::read(&a).unwrap());
    assert_eq!(manifest["inputs"][0]["sha256"], digest.as_str());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn fuse_sixteen_bit_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &blob(16, 16, 5.0, 5.0));
    let out = dir.path().join("f.pgm");
    let o = dipfuse(&[
        "fuse",
        "--src",
        s(&a),
        "--src",
        s(&a),
        "--out",
        s(&out),
        "--channels",
        "1",
        "--iters",
        "1",
        "--bit-depth",
        "16",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read(&out).unwrap().starts_with(b"P5\n16 16\n65535\n"));
}

#[test]
fn fuse_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &pattern(8, 8, 0));
    let out = dir.path().join("f.pgm");

    let o = dipfuse(&["fuse", "--src", s(&a), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("usage"));

    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&a), "--out", s(&out), "--channels", "zero"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&a), "--out", s(&out), "--channels", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&a), "--out", s(&out), "--resize", "12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn fuse_dimension_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &pattern(16, 16, 0));
    let b = write(dir.path(), "b.pgm", &pattern(16, 12, 1));
    let out = dir.path().join("f.pgm");
    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&b), "--out", s(&out), "--iters", "1"]);
    assert_eq!(o.status.code(), Some(4));

    let o = dipfuse(&[
        "fuse",
        "--src",
        s(&a),
        "--src",
        s(&b),
        "--out",
        s(&out),
        "--iters",
        "1",
        "--channels",
        "1",
        "--resize",
        "16x16",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let missing = dir.path().join("nope.pgm");
    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let garbage = dir.path().join("garbage.pgm");
    std::fs::write(&garbage, b"P5\n4 4\n255\n\x01\x02").unwrap();
    let o = dipfuse(&["fuse", "--src", s(&a), "--src", s(&garbage), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gains_maps_are_constant_for_identical_sources_and_swap() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &pattern(9, 7, 0));
    let b = write(dir.path(), "b.pgm", &pattern(9, 7, 4));
    let prefix = dir.path().join("same");
    let o = dipfuse(&["gains", "--src", s(&a), "--src", s(&a), "--out-prefix", s(&prefix)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in ["_b1.pgm", "_b2.pgm"] {
        let bytes = std::fs::read(dir.path().join(format!("same{suffix}"))).unwrap();
        let header = b"P5\n9 7\n255\n";
        assert!(bytes.starts_with(header));
        assert!(bytes[header.len()..].iter().all(|&v| v == 180));
    }

    let fwd = dir.path().join("fwd");
    let rev = dir.path().join("rev");
    assert!(dipfuse(&["gains", "--src", s(&a), "--src", s(&b), "--out-prefix", s(&fwd), "--gain-window", "3"])
        .status
        .success());
    assert!(dipfuse(&["gains", "--src", s(&b), "--src", s(&a), "--out-prefix", s(&rev), "--gain-window", "3"])
        .status
        .success());
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("fwd_b1.pgm"), read("rev_b2.pgm"));
    assert_eq!(read("fwd_b2.pgm"), read("rev_b1.pgm"));

    let c = write(dir.path(), "c.pgm", &pattern(7, 9, 0));
    let o = dipfuse(&["gains", "--src", s(&a), "--src", s(&c), "--out-prefix", s(&fwd)]);
    assert_eq!(o.status.code(), Some(4));
    let o = dipfuse(&["gains", "--src", s(&a), "--src", s(&a), "--out-prefix", s(&fwd), "--gain-window", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_identities_and_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &pattern(24, 20, 0));
    let o = dipfuse(&["metrics", "--fused", s(&a), "--src", s(&a), "--src", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["q"].as_f64(), Some(1.0));
    assert_eq!(v["cv"].as_f64(), Some(1.0));
    assert!((v["pe"].as_f64().unwrap() - 0.9748).abs() < 1e-4);

    let b = write(dir.path(), "b.pgm", &pattern(24, 20, 7));
    let f = write(dir.path(), "f.pgm", &blob(24, 20, 10.0, 10.0));
    let ab = dir.path().join("ab.json");
    let ba = dir.path().join("ba.json");
    assert!(dipfuse(&["metrics", "--fused", s(&f), "--src", s(&a), "--src", s(&b), "--json", s(&ab)]).status.success());
    assert!(dipfuse(&["metrics", "--fused", s(&f), "--src", s(&b), "--src", s(&a), "--json", s(&ba)]).status.success());
    let load = |p: &Path| serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(p).unwrap()).unwrap();
    let (x, y) = (load(&ab), load(&ba));
    for k in ["pe", "mi", "q", "cv"] {
        assert_eq!(x[k], y[k], "{k}");
    }

    let missing = dir.path().join("missing.pgm");
    let o = dipfuse(&["metrics", "--fused", s(&missing), "--src", s(&a), "--src", s(&b)]);
    assert_eq!(o.status.code(), Some(3));
    let small = write(dir.path(), "small.pgm", &pattern(8, 8, 0));
    let o = dipfuse(&["metrics", "--fused", s(&small), "--src", s(&a), "--src", s(&b)]);
    assert_eq!(o.status.code(), Some(4));
}

fn sweep_setup(dir: &Path, pairs: usize) -> PathBuf {
    let mut list = String::from("# test pairs\n");
    for i in 0..pairs {
        let a = write(dir, &format!("a{i}.pgm"), &blob(16, 16, 4.0 + i as f64, 6.0));
        let b = write(dir, &format!("b{i}.pgm"), &blob(16, 16, 10.0, 9.0 - i as f64));
        list.push_str(&format!(
            "{} {}\n",
            a.file_name().unwrap().to_str().unwrap(),
            b.file_name().unwrap().to_str().unwrap()
        ));
    }
    let p = dir.join("pairs.txt");
    std::fs::write(&p, list).unwrap();
    p
}

#[test]
fn sweep_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let one = sweep_setup(dir.path(), 1);
    let out = dir.path().join("one.csv");
    let o = dipfuse(&["sweep", "--pairs", s(&one), "--channels", "1", "--iters", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "pair,channels,pe,mi,q,cv,best_loss,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("a0+b0,1,"));
    assert!(lines[2].starts_with("mean,1,"));
    assert!(dir.path().join("one.csv.manifest.json").exists());

    let three = sweep_setup(dir.path(), 3);
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = dipfuse(&[
            "sweep",
            "--pairs",
            s(&three),
            "--channels",
            "1,10",
            "--iters",
            "2",
            "--seed",
            "5",
            "--out",
            s(&out),
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let first = run("s1.csv", "1");
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 1 + 6 + 2);
    let channels: Vec<&str> = lines[1..7].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(channels, ["1", "10", "1", "10", "1", "10"]);
    assert_eq!(lines.iter().filter(|l| l.starts_with("mean,")).count(), 2);
    assert_eq!(first, run("s2.csv", "1"));
    assert_eq!(first, run("s3.csv", "3"));
}

#[test]
fn sweep_failures() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.pgm", &pattern(16, 16, 0));
    let b = write(dir.path(), "b.pgm", &pattern(16, 8, 0));
    let list = dir.path().join("bad.txt");
    std::fs::write(&list, "a.pgm b.pgm\na.pgm missing.pgm\n").unwrap();
    let out = dir.path().join("bad.csv");
    let o = dipfuse(&["sweep", "--pairs", s(&list), "--channels", "1", "--iters", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(5));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("a+b,1,error: "));
    assert!(lines[2].starts_with("a+missing,1,error: "));
    assert_eq!(lines[3], "mean,1,,,,,,");

    std::fs::write(&list, format!("{} {}\na.pgm missing.pgm\n", s(&a), s(&a))).unwrap();
    let o = dipfuse(&["sweep", "--pairs", s(&list), "--channels", "1", "--iters", "1", "--out", s(&out)]);
    assert!(o.status.success());
    let _ = b;

    let o = dipfuse(&["sweep", "--pairs", s(&dir.path().join("none.txt")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let o = dipfuse(&["sweep", "--pairs", s(&list), "--channels", "1,x", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
