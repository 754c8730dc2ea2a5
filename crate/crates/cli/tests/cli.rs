use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coreg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coreg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn synth(dir: &Path, spec: &str, format: &str) {
    std::fs::write(dir.join("spec.json"), spec).unwrap();
    let out = coreg(dir, &["synth", "--spec", "spec.json", "--out", "s", "--format", format]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const SHIFT_SPEC: &str = r#"{"size": 96, "seed": 5, "model": {"kind": "shift", "a": [2.0], "b": [1.0]},
    "noise_sigma_px": 0.2, "outlier_fraction": 0.25, "tiepoint_count": 100}"#;

#[test]
fn synth_then_align_with_imported_tiepoints() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), SHIFT_SPEC, "tif");
    for f in ["base.tif", "warp.tif", "truth.json", "tiepoints.txt"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let out = coreg(
        dir.path(),
        &[
            "align", "--base", "s/base.tif", "--warp", "s/warp.tif", "--tiepoints", "s/tiepoints.txt",
            "--model", "shift", "--interp", "nearest", "--seed", "9", "--threshold", "1.5", "--out", "o",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/model.json")).unwrap()).unwrap();
    assert_eq!(model["kind"], "shift");
    assert!((model["a"][0].as_f64().unwrap() - 2.0).abs() < 0.1);
    assert!((model["b"][0].as_f64().unwrap() - 1.0).abs() < 0.1);

    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 9);
    assert_eq!(run["ransac"]["inlier_threshold_px"], 1.5);
    assert_eq!(run["tiepoint_source"], "imported:tiepoints");
    assert!(run["interpolation"].as_array().unwrap().iter().all(|b| b["method"] == "nearest"));
    assert!(dir.path().join("o/aligned.tif").exists());
}

#[test]
fn align_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), SHIFT_SPEC, "json");

    let missing = coreg(dir.path(), &["align", "--base", "nope.json", "--warp", "s/warp.json", "--out", "o"]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    let far = coreg(
        dir.path(),
        &["align", "--base", "s/base.json", "--warp", "s/warp.json", "--aoi", "0,0,10,10", "--out", "o"],
    );
    assert_eq!(code(&far), 3);

    let usage = coreg(dir.path(), &["align", "--base", "s/base.json"]);
    assert_eq!(code(&usage), 3);

    // Scattered matches with a tiny threshold leave no consensus.
    let mut text = String::from("murat-tiepoints v1 96 96 96 96 10\n");
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 90.0 + 1.0
    };
    for _ in 0..30 {
        text.push_str(&format!("{} {} {} {} 1\n", next(), next(), next(), next()));
    }
    std::fs::write(dir.path().join("bad.txt"), text).unwrap();
    let failed = coreg(
        dir.path(),
        &[
            "align", "--base", "s/base.json", "--warp", "s/warp.json", "--tiepoints", "bad.txt", "--threshold", "0.01",
            "--out", "o",
        ],
    );
    assert_eq!(code(&failed), 2, "{}", String::from_utf8_lossy(&failed.stderr));
}

#[test]
fn stack_and_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), SHIFT_SPEC, "json");
    let jobs = r#"[
        {"scene_id": "m1", "base": "s/base.json", "warp": "s/warp.json", "out": "j1", "model": "shift"},
        {"scene_id": "m2", "base": "s/base.json", "warp": "s/warp.json", "out": "j2", "tiepoints": "s/tiepoints.txt"},
        {"scene_id": "m3", "base": "s/base.json", "warp": "absent.json", "out": "j3"}
    ]"#;
    std::fs::write(dir.path().join("jobs.json"), jobs).unwrap();
    let out = coreg(dir.path(), &["stack", "--jobs", "jobs.json", "--workers", "2", "--out", "rep.json"]);
    // One job fails, so the run reports a partial failure.
    assert_eq!(code(&out), 2);
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("Image"));
    assert!(lines[1].starts_with("m1") && lines[2].starts_with("m2") && lines[3].starts_with("m3"));
    assert!(lines[4].starts_with("Avg") && lines[5].starts_with("Std Dev"));

    let text = coreg(dir.path(), &["report", "--input", "rep.json"]);
    assert_eq!(code(&text), 0);
    assert_eq!(String::from_utf8(text.stdout).unwrap(), table);

    let csv = coreg(dir.path(), &["report", "--input", "rep.json", "--format", "csv", "--out", "rep.csv"]);
    assert_eq!(code(&csv), 0);
    let csv = std::fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    assert!(csv.starts_with("image,rmse_before,rmse_after,inliers,model,error\n"));
    assert_eq!(csv.lines().count(), 6);

    // A hand-edited report whose aggregates disagree with its rows.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    doc["after"]["mean"] = serde_json::json!(123.0);
    std::fs::write(dir.path().join("tampered.json"), doc.to_string()).unwrap();
    assert_eq!(code(&coreg(dir.path(), &["report", "--input", "tampered.json"])), 3);
}

#[test]
fn pair_writes_month_plan() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = core_fixture("manifest_24.json");
    let months = core_fixture("planet_24.json");
    let args = |cloud: &str| {
        vec![
            "pair".to_string(),
            "--manifest".into(),
            manifest.display().to_string(),
            "--planet-months".into(),
            months.display().to_string(),
            "--max-cloud".into(),
            cloud.into(),
            "--out".into(),
            "plan.json".into(),
        ]
    };
    let run = |a: Vec<String>| coreg(dir.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());

    let out = run(args("0.4"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 24);
    let plan: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan.len(), 24);
    assert!(plan.contains_key("2018-01") && plan.contains_key("2019-12"));

    assert_eq!(code(&run(args("1.5"))), 3);

    // An AOI far from every footprint leaves all slots empty.
    let mut far = args("1.0");
    far.push("--aoi=-9e6,-9e6,-8e6,-8e6".into());
    let out = run(far);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().lines().all(|l| l.ends_with("-  -")));
}
