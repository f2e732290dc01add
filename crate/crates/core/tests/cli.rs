use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cave"))
        .args(args)
        .output()
        .expect("spawn cave")
}

fn ok(args: &[&str]) -> Output {
    let out = cave(args);
    assert!(
        out.status.success(),
        "cave {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn synth_config(dir: &Path, size: usize) -> PathBuf {
    write_json(
        &dir.join("synth.json"),
        &json!({
            "template": {"size": [size, size], "n_frames": 6, "artifact_level": 0.3},
            "n_series": 6,
            "split_ratios": [0.5, 0.17, 0.33],
            "seed": 11
        }),
    )
}

fn train_config(dir: &Path) -> PathBuf {
    write_json(
        &dir.join("train.json"),
        &json!({
            "model": {"base_channels": 2, "depth": 2, "temporal_module": "CONV_GRU"},
            "lr": 1e-3,
            "max_epochs": 2,
            "seed": 3
        }),
    )
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_config(tmp.path(), 32);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["manifest.json", "run_meta.json"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        // run_meta records the argv, which differs only in the output path
        if f == "run_meta.json" {
            let mut vx: Value = serde_json::from_slice(&x).unwrap();
            let mut vy: Value = serde_json::from_slice(&y).unwrap();
            vx["args"] = Value::Null;
            vy["args"] = Value::Null;
            assert_eq!(vx, vy);
            assert_eq!(vx["seed"], 11);
        } else {
            assert_eq!(x, y, "{f} differs");
        }
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let total: usize = ["train", "val", "test"].iter().map(|k| manifest[k].as_array().unwrap().len()).sum();
    assert_eq!(total, 6);
    let first = manifest["train"][0].as_str().unwrap();
    assert_eq!(
        fs::read(a.join(first).join("frame_0000.png")).unwrap(),
        fs::read(b.join(first).join("frame_0000.png")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_config(tmp.path(), 32);
    let out = tmp.path().join("d");
    ok(&["--seed", "99", "synth", "--config", s(&cfg), "--out", s(&out)]);
    let meta: Value = serde_json::from_slice(&fs::read(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 99);
    assert_eq!(meta["config"]["seed"], 99);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // usage errors
    assert_eq!(cave(&["--bogus"]).status.code(), Some(1));
    assert_eq!(cave(&["synth"]).status.code(), Some(1));
    assert_eq!(cave(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cave(&["--help"]).status.code(), Some(0));
    // missing inputs and bad configs are validation errors
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        cave(&["synth", "--config", s(&missing), "--out", s(tmp.path())]).status.code(),
        Some(1)
    );
    let bad = write_json(&tmp.path().join("bad.json"), &json!({"split_ratios": [0.9, 0.9, 0.9]}));
    assert_eq!(
        cave(&["synth", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]).status.code(),
        Some(1)
    );
    let garbled = tmp.path().join("garbled.json");
    fs::write(&garbled, "{not json").unwrap();
    assert_eq!(
        cave(&["train", "--manifest", s(&garbled), "--out", s(&tmp.path().join("y"))]).status.code(),
        Some(1)
    );
    // a corrupt checkpoint is invalid input
    let ckpt = tmp.path().join("c.ckpt");
    fs::write(&ckpt, b"CAVECKPT").unwrap();
    let series = tmp.path().join("series");
    fs::create_dir(&series).unwrap();
    assert_eq!(
        cave(&["segment", "--ckpt", s(&ckpt), "--in", s(&series), "--out", s(&tmp.path().join("m.png"))])
            .status
            .code(),
        Some(1)
    );
    // failing to write output is a runtime failure
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"").unwrap();
    assert_eq!(
        cave(&["synth", "--config", s(&synth_config(tmp.path(), 32)), "--out", s(&blocker.join("out"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn eval_with_ground_truth_masks_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_config(tmp.path(), 32);
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let manifest: Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let preds = tmp.path().join("preds");
    fs::create_dir(&preds).unwrap();
    for entry in manifest["test"].as_array().unwrap() {
        let dir = data.join(entry.as_str().unwrap());
        let meta: Value = serde_json::from_slice(&fs::read(dir.join("meta.json")).unwrap()).unwrap();
        let id = meta["series_id"].as_str().unwrap();
        fs::copy(dir.join("mask.png"), preds.join(format!("{id}.png"))).unwrap();
    }
    let report_dir = tmp.path().join("report");
    let methods = format!("oracle=masks:{},oracle2=masks:{}", s(&preds), s(&preds));
    ok(&[
        "eval",
        "--manifest",
        s(&data.join("manifest.json")),
        "--methods",
        &methods,
        "--out",
        s(&report_dir),
    ]);
    let report: Value = serde_json::from_slice(&fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    for method in report["methods"].as_array().unwrap() {
        for m in ["acc", "sens", "spec", "a_dice", "v_dice", "m_dice", "vessel_dice"] {
            assert_eq!(method["stats"][m]["mean"], 1.0, "{m}");
            assert_eq!(method["stats"][m]["std"], 0.0, "{m}");
        }
    }
    for t in report["pairwise"].as_array().unwrap() {
        assert_eq!(t["p_value"], 1.0);
    }
    let table = fs::read_to_string(report_dir.join("table.txt")).unwrap();
    for col in ["Acc", "Sens", "Spec", "Dice", "A-Dice", "V-Dice", "M-Dice"] {
        assert!(table.contains(col), "{col} missing from table");
    }
    let maps = fs::read_dir(report_dir.join("errmaps")).unwrap().count();
    assert_eq!(maps, 2 * 3 * manifest["test"].as_array().unwrap().len());
    // rerun: JSON outputs are byte-identical
    let again = tmp.path().join("report2");
    ok(&[
        "eval",
        "--manifest",
        s(&data.join("manifest.json")),
        "--methods",
        &methods,
        "--out",
        s(&again),
        "--no-errmaps",
    ]);
    assert_eq!(
        fs::read(report_dir.join("report.json")).unwrap(),
        fs::read(again.join("report.json")).unwrap()
    );
}

#[test]
fn train_segment_baseline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&synth_config(tmp.path(), 64)), "--out", s(&data)]);
    let manifest = data.join("manifest.json");
    let tcfg = train_config(tmp.path());
    let (r1, r2) = (tmp.path().join("run1"), tmp.path().join("run2"));
    ok(&["train", "--manifest", s(&manifest), "--config", s(&tcfg), "--out", s(&r1)]);
    ok(&["train", "--manifest", s(&manifest), "--config", s(&tcfg), "--out", s(&r2)]);
    let log = fs::read_to_string(r1.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert_eq!(log, fs::read_to_string(r2.join("log.jsonl")).unwrap());
    assert_eq!(
        fs::read(r1.join("checkpoint.best")).unwrap(),
        fs::read(r2.join("checkpoint.best")).unwrap()
    );

    let m: Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    let series = data.join(m["test"][0].as_str().unwrap());
    let mask = tmp.path().join("out/mask.png");
    ok(&["segment", "--ckpt", s(&r1.join("checkpoint.best")), "--in", s(&series), "--out", s(&mask)]);
    let img = image::open(&mask).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
    assert!(tmp.path().join("out/run_meta.json").exists());

    // the CAVE checkpoint is rejected where a U-Net is required
    let code = cave(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--methods",
        &format!("unet:{}", s(&r1.join("checkpoint.best"))),
        "--out",
        s(&tmp.path().join("rep")),
    ])
    .status
    .code();
    assert_eq!(code, Some(1));

    let params = tmp.path().join("params.json");
    ok(&["baseline", "calibrate", "--manifest", s(&manifest), "--out", s(&params), "--steps", "4"]);
    let p: Value = serde_json::from_slice(&fs::read(&params).unwrap()).unwrap();
    let thr = p["frangi"]["threshold"].as_f64().unwrap();
    assert!([0.2, 0.4, 0.6, 0.8].iter().any(|c| (c - thr).abs() < 1e-12), "{thr}");
    let fk = tmp.path().join("fk/mask.png");
    ok(&["baseline", "frangi-kmeans", "--in", s(&series), "--out", s(&fk), "--params", s(&params)]);
    assert!(fk.exists());

    let rep = tmp.path().join("rep2");
    let methods = format!("cave:{},frangi-kmeans:{}", s(&r1.join("checkpoint.best")), s(&params));
    ok(&["eval", "--manifest", s(&manifest), "--methods", &methods, "--out", s(&rep), "--no-errmaps"]);
    let report: Value = serde_json::from_slice(&fs::read(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
}

#[test]
fn preprocess_resamples_series_and_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&synth_config(tmp.path(), 32)), "--out", s(&data)]);
    let m: Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let series = data.join(m["train"][0].as_str().unwrap());
    let cfg = write_json(&tmp.path().join("pre.json"), &json!({"target_size": [16, 16], "target_fps": 1.0}));
    let out = tmp.path().join("pre");
    ok(&[
        "preprocess",
        "--in",
        s(&series),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--mask",
        s(&series.join("mask.png")),
    ]);
    let loaded = cave::data::load_series(&out).unwrap();
    assert_eq!((loaded.height(), loaded.width()), (16, 16));
    let mask = cave::data::load_mask(out.join("mask.png")).unwrap();
    assert_eq!(mask.dim(), (16, 16));
    assert!(out.join("run_meta.json").exists());
}
