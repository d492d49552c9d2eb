use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unwarp_core::geom::{write_grid, ForegroundMask, Grid2D, RasterImage};

fn unwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unwarp"))
        .args(args)
        .env_remove("UNWARP_WORKERS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize, difficulty: &str, seed: u64) -> PathBuf {
    let out = dir.join(format!("suite_{difficulty}_{seed}"));
    let r = unwarp(&["--seed", &seed.to_string(), "generate", "--n", &n.to_string(), "--difficulty", difficulty, "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Row label to column name to value.
fn read_tsv(p: &Path) -> HashMap<String, HashMap<String, f64>> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let vals = header[1..].iter().zip(&f[1..]).map(|(h, v)| (h.to_string(), v.parse().unwrap())).collect();
            (f[0].to_string(), vals)
        })
        .collect()
}

#[test]
fn generate_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = generate(&t.path().join("a"), 2, "+fine", 11);
    let b = generate(&t.path().join("b"), 2, "+fine", 11);
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.iter().any(|(p, _)| p.ends_with("gt.dmap")));
    assert_eq!(fa, fb);
    let c = generate(&t.path().join("c"), 2, "+fine", 12);
    assert_ne!(fa, files(&c));
}

#[test]
fn unknown_difficulty_is_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let r = unwarp(&["generate", "--n", "1", "--difficulty", "+wobbly", "--out", s(t.path())]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn rectify_identity_and_oracle() {
    let t = tempfile::tempdir().unwrap();
    let suite = generate(t.path(), 2, "+smooth", 3);
    for flag in ["--identity", "--oracle"] {
        let out = t.path().join(flag.trim_start_matches('-'));
        let r = unwarp(&["rectify", "--input", s(&suite), "--out", s(&out), flag]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        for id in ["sample_000", "sample_001"] {
            let img = RasterImage::load_png(out.join(id).join("rectified.png")).unwrap();
            assert_eq!((img.height(), img.width()), RasterImage::load_png(suite.join(id).join("distorted.png")).map(|i| (i.height(), i.width())).unwrap());
            assert!(out.join(id).join("final.dmap").is_file());
            assert!(fs::read_to_string(out.join(id).join("trace.txt")).unwrap().contains("n_opt="));
        }
    }
}

#[test]
fn missing_grid_file_fails_one_image_only() {
    let t = tempfile::tempdir().unwrap();
    let suite = generate(t.path(), 2, "affine-only", 4);
    let grids = t.path().join("grids");
    fs::create_dir_all(grids.join("sample_000")).unwrap();
    let e = Grid2D::canonical(45, 31).unwrap();
    write_grid(grids.join("sample_000").join("L.dmap"), &e).unwrap();
    write_grid(grids.join("sample_000").join("C.dmap"), &e).unwrap();
    let out = t.path().join("out");
    let r = unwarp(&["rectify", "--input", s(&suite), "--out", s(&out), "--grids", s(&grids), "--policy", "fixed:0"]);
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("sample_000").join("rectified.png").is_file());
    assert!(!out.join("sample_001").join("rectified.png").exists());
    let failures = fs::read_to_string(out.join("failures.tsv")).unwrap();
    assert!(failures.contains("sample_001"));
    assert!(!failures.contains("sample_000"));
}

fn page_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let suite = generate(dir, 1, "affine-only", 9);
    let flat = suite.join("sample_000").join("flat.png");
    let page = RasterImage::load_png(&flat).unwrap();
    let (h, w) = (page.height(), page.width());
    let (top, left) = (h / 8, w / 8);
    let mask = ForegroundMask::from_fn(h, w, |i, j| i >= top && i < h - top && j >= left && j < w - left).unwrap();
    let mask_path = dir.join("mask.png");
    mask.save_png(&mask_path).unwrap();
    // Same page with the background replaced by a shifted stripe pattern.
    let corrupted = RasterImage::from_fn(h, w, |i, j| {
        if mask.get(i, j) {
            page.get(i, j, 0)
        } else if ((i + 2 * j) / 5) % 2 == 0 {
            0.1
        } else {
            0.9
        }
    })
    .unwrap();
    let corrupted_path = dir.join("corrupted.png");
    corrupted.save_png(&corrupted_path).unwrap();
    (flat, mask_path, corrupted_path, suite.join("sample_000").join("layout.txt"))
}

#[test]
fn evaluate_identity_and_background_corruption() {
    let t = tempfile::tempdir().unwrap();
    let (flat, mask, corrupted, _) = page_fixture(t.path());
    let tsv = t.path().join("m.tsv");
    let r = unwarp(&[
        "evaluate", "--rectified", s(&flat), s(&corrupted), "--gt", s(&flat), s(&flat), "--masks", s(&mask), s(&mask), "--tsv", s(&tsv),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_tsv(&tsv);
    let id = &rows["flat"];
    assert!((id["MSSIM"] - 1.0).abs() < 1e-9);
    assert!(id["LD"].abs() < 1e-9 && id["AD"].abs() < 1e-9 && id["AD-M"].abs() < 1e-9);
    let bad = &rows["corrupted"];
    assert!(bad["AD"] > id["AD"] + 1e-6, "AD {} should move", bad["AD"]);
    assert_eq!(bad["AD-M"], id["AD-M"]);
    assert_eq!(bad["MSSIM-M"], id["MSSIM-M"]);
    assert!(bad["MSSIM"] < 1.0);
}

#[test]
fn evaluate_with_ocr_and_layout() {
    let t = tempfile::tempdir().unwrap();
    let (flat, _, _, layout) = page_fixture(t.path());
    let tsv = t.path().join("m.tsv");
    let r = unwarp(&["evaluate", "--rectified", s(&flat), "--gt", s(&flat), "--layouts", s(&layout), "--ocr", "glyph", "--tsv", s(&tsv)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let row = &read_tsv(&tsv)["flat"];
    assert_eq!((row["ED"], row["CER"], row["AED"], row["ACER"]), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn evaluate_usage_errors() {
    let t = tempfile::tempdir().unwrap();
    let (flat, mask, corrupted, _) = page_fixture(t.path());
    let missing = t.path().join("nowhere").join("layout.txt");
    let r = unwarp(&["evaluate", "--rectified", s(&flat), "--gt", s(&flat), "--layouts", s(&missing), "--ocr", "glyph"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("layout.txt"));
    let r = unwarp(&["evaluate", "--rectified", s(&flat), s(&corrupted), "--gt", s(&flat)]);
    assert_eq!(r.status.code(), Some(2));
    let r = unwarp(&["evaluate", "--rectified", s(&flat), s(&corrupted), "--gt", s(&flat), s(&flat), "--masks", s(&mask)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stop_analysis_rows() {
    let t = tempfile::tempdir().unwrap();
    let suite = generate(t.path(), 2, "+fine", 21);
    let tsv = t.path().join("stop.tsv");
    let r = unwarp(&["--set", "max_iterations=2", "stop-analysis", "--suite", s(&suite), "--oracle", "--tsv", s(&tsv)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_tsv(&tsv);
    let mut labels: Vec<&String> = rows.keys().collect();
    labels.sort();
    assert_eq!(labels, ["IS:0", "IS:1", "IS:2", "IS:A"]);
    assert!(rows["IS:1"]["AD"] < rows["IS:0"]["AD"]);
    assert!(rows["IS:A"]["n"] <= 2.0);

    let r = unwarp(&["--set", "max_iterations=0", "stop-analysis", "--suite", s(&suite), "--oracle", "--tsv", s(&tsv)]);
    assert!(r.status.success());
    let rows = read_tsv(&tsv);
    assert_eq!(rows.keys().collect::<Vec<_>>(), ["IS:0"]);
}

#[test]
fn dump_config_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a.cfg");
    let b = t.path().join("b.cfg");
    let r = unwarp(&["--set", "tau=0.9", "--set", "policy=fixed:3", "--seed", "42", "dump-config", "--out", s(&a)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let r = unwarp(&["--config", s(&a), "dump-config", "--out", s(&b)]);
    assert!(r.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.contains("tau=0.9") || text.contains("tau = 0.9"));

    let r = unwarp(&["--set", "no_such_key=1", "dump-config"]);
    assert_eq!(r.status.code(), Some(2));
}
