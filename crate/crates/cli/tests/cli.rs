use std::process::{Command, Output};

use serde_json::Value;

fn fastescape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastescape")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn constants_lists_every_field() {
    let out = fastescape(&["constants", "--alpha", "1", "--beta", "0"]);
    assert!(out.status.success());
    let v = json(&out);
    for key in ["N", "K", "K0", "r0", "R1", "R2", "R3", "R4", "R5", "R6", "r", "c0", "c1", "xStar", "areaBound"] {
        assert!(v[key].is_number(), "{key}");
    }
    assert_eq!(v["rho"].as_array().unwrap().len(), 10);
    assert_eq!(v["config"]["samples"], 4096);
}

#[test]
fn coefficient_spelling_matches_sine_family() {
    let a = json(&fastescape(&["constants", "--poly", "-0.5,0,0.5", "--c1", "759.018469431979"]));
    let b = json(&fastescape(&["constants", "--alpha", "1"]));
    assert_eq!(a["areaBound"], b["areaBound"]);
}

#[test]
fn invalid_grid_side_names_the_field() {
    let out = fastescape(&["constants", "--poly", "-0.5,0,0.5", "--r", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("r = 0.5"), "{err}");
}

#[test]
fn classify_reports_first_failing_level() {
    let v = json(&fastescape(&["classify", "--alpha", "1", "--z0", "0,1.5707963267948966", "--depth", "1"]));
    assert_eq!(v["status"], "FailedAtDepth");
    assert_eq!(v["failDepth"], 0);
    let v = json(&fastescape(&["classify", "--alpha", "1", "--z0", "30,0", "--depth", "3"]));
    assert_eq!(v["status"], "CertifiedToDepth");
    assert_eq!(v["margins"].as_array().unwrap().len(), 4);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "alpha=1\nbeta=0\nseed=7\nsamples=50\ndepth=1\n").unwrap();
    let p = path.to_str().unwrap();
    let v = json(&fastescape(&["--config", p, "density", "--square", "203,3", "--depth", "2"]));
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["samples"], 50);
    assert_eq!(v["depth"], 2);
    assert_eq!(v["pass"], true);
}

#[test]
fn density_rejects_squares_left_of_x_star() {
    let out = fastescape(&["density", "--alpha", "1", "--square", "10,0", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn census_writes_one_csv_row_per_square() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let out = fastescape(&[
        "census", "--alpha", "1", "--xmax", "26", "--depth", "1", "--samples", "8", "--csv", csv.to_str().unwrap(),
    ]);
    let v = json(&out);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("m,n,certifiedFraction,indeterminateFraction"));
    assert_eq!(text.lines().count() as u64, v["squares"].as_u64().unwrap() + 1);
    assert!(v["totalUpper"].as_f64().unwrap() >= v["truncatedArea"].as_f64().unwrap());
    assert_eq!(out.status.success(), v["totalUpper"].as_f64().unwrap() < v["paperBound"].as_f64().unwrap());
}

#[test]
fn lemmas_subset() {
    let out = fastescape(&["lemmas", "--alpha", "1", "--which", "pp,estp1", "--trials", "10"]);
    assert!(out.status.success());
    let v = json(&out);
    let names: Vec<&str> = v["reports"].as_array().unwrap().iter().map(|r| r["lemma"].as_str().unwrap()).collect();
    assert_eq!(names, ["pp", "estp1"]);
    assert!(fastescape(&["lemmas", "--alpha", "1", "--which", "nope"]).status.code() == Some(2));
}

#[test]
fn render_writes_ppm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strip.ppm");
    let v = json(&fastescape(&[
        "render", "--alpha", "1", "--window=-8,8,0,6.283185307179586", "--size", "40x16", "--depth", "2", "--out",
        out.to_str().unwrap(),
    ]));
    let bytes = std::fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P6\n40 16\n255\n"));
    assert_eq!(bytes.len(), 13 + 40 * 16 * 3);
    assert!(v["whitePixels"].as_u64().unwrap() > 0);
}
