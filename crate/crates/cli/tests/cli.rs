//! End-to-end runs of the `pansharp` binary.

use std::path::Path;
use std::process::{Command, Output};

fn pansharp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pansharp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stdout:\n{}\nstderr:\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_data(dir: &Path, scenes: &str, seed: &str) {
    ok(pansharp(&["gen-data", "--out", s(dir), "--scenes", scenes, "--seed", seed, "--ms-size", "16,16", "--objects", "1"]));
}

fn train(data: &Path, ckpt: &Path, variant: &str) -> Output {
    ok(pansharp(&[
        "train", "--data", s(&data.join("manifest.json")), "--out", s(ckpt), "--iters", "4", "--variant", variant, "--seed",
        "3", "--crop", "8", "--checkpoint-every", "3",
    ]))
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_data(a.path(), "1", "7");
    gen_data(b.path(), "1", "7");
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn every_run_prints_its_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenes": 2, "scene": {"objects": 0, "ms_height": 8, "ms_width": 8}}"#).unwrap();
    let out = dir.path().join("data");
    let o = ok(pansharp(&["gen-data", "--config", s(&cfg), "--out", s(&out), "--scenes", "1"]));
    let line = stdout(&o).lines().next().unwrap().to_string();
    let json: serde_json::Value = serde_json::from_str(line.strip_prefix("gen-data config: ").unwrap()).unwrap();
    assert_eq!(json["scenes"], 1);
    assert_eq!(json["scene"]["objects"], 0);
    assert_eq!(json["scene"]["ms_width"], 8);
    assert_eq!(json["scene"]["max_object_shift"], 4);
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    assert_eq!(code(&pansharp(&["gen-data", "--bogus"])), 1);
    assert_eq!(code(&pansharp(&["no-such-command"])), 1);
    assert_eq!(code(&pansharp(&["gen-data", "--scenes", "1"])), 1);
    assert_eq!(code(&pansharp(&["gen-data", "--out", "/tmp/x", "--ms-size", "16"])), 1);
    assert_eq!(code(&pansharp(&["gen-data", "--out", "/tmp/x", "--max-shift", "9"])), 1);
    assert_eq!(code(&pansharp(&["gradcheck", "--module", "everything"])), 1);
    assert_eq!(code(&pansharp(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenes": 1, "colour": "red"}"#).unwrap();
    assert_eq!(code(&pansharp(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())])), 2);
    let junk = dir.path().join("junk.sipr");
    std::fs::write(&junk, b"SIPR\x01").unwrap();
    let ppm = dir.path().join("x.ppm");
    assert_eq!(code(&pansharp(&["export-ppm", "--in", s(&junk), "--out", s(&ppm)])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&pansharp(&["train", "--data", s(&missing), "--out", s(&dir.path().join("c"))])), 2);
}

#[test]
fn eval_of_identical_rasters_hits_the_ideal_values() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), "1", "2");
    let ms = dir.path().join("scene_0000_ms.sipr");
    let report = dir.path().join("report.jsonl");
    ok(pansharp(&["eval", "--candidate", s(&ms), "--reference", s(&ms), "--out", s(&report)]));
    let text = std::fs::read_to_string(&report).unwrap();
    let image: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(image["kind"], "image");
    assert_eq!(image["psnr"], 99.0);
    assert_eq!(image["ergas"], 0.0);
    assert!((image["scc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("name,protocol,scc,ergas,psnr,scc_f,qnr,jqm_variant,"));
}

#[test]
fn train_sharpen_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, "2", "5");
    let ckpt = dir.path().join("model.ckpt");
    let o = train(&data, &ckpt, "full");
    assert!(stdout(&o).starts_with("train config: "));
    let log = std::fs::read_to_string(dir.path().join("model.ckpt.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    // A second identical run reproduces checkpoint and log byte for byte.
    let again = dir.path().join("again.ckpt");
    train(&data, &again, "full");
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(log, std::fs::read_to_string(dir.path().join("again.ckpt.loss.csv")).unwrap());

    let (ps, aligned, offsets) = (dir.path().join("ps.sipr"), dir.path().join("aligned.sipr"), dir.path().join("off.sipr"));
    ok(pansharp(&[
        "sharpen", "--ckpt", s(&ckpt), "--pan", s(&data.join("scene_0000_pan.sipr")), "--ms",
        s(&data.join("scene_0000_ms.sipr")), "--out", s(&ps), "--dump-aligned-ms", s(&aligned), "--dump-pwopm-argmax",
        s(&offsets),
    ]));
    let header = |p: &Path| {
        let b = std::fs::read(p).unwrap();
        let word = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        (word(4), word(8), word(12))
    };
    assert_eq!(header(&ps), (64, 64, 3));
    assert_eq!(header(&aligned), (16, 16, 3));
    assert_eq!(header(&offsets), (16, 16, 2));

    let report = dir.path().join("eval.jsonl");
    ok(pansharp(&["eval", "--ckpt", s(&ckpt), "--data", s(&data.join("manifest.json")), "--out", s(&report)]));
    let lines: Vec<serde_json::Value> =
        std::fs::read_to_string(&report).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2 * 2 + 2);
    assert_eq!(lines[0]["name"], "scene_0000");
    assert!(lines.iter().all(|l| l["residual_misalignment_px"].is_number()));
    assert_eq!(lines[5]["kind"], "aggregate");

    let ppm = dir.path().join("ps.ppm");
    ok(pansharp(&["export-ppm", "--in", s(&ps), "--out", s(&ppm)]));
    assert_eq!(std::fs::read(&ppm).unwrap().len(), "P6\n64 64\n255\n".len() + 64 * 64 * 3);
}

#[test]
fn resuming_a_finished_run_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, "1", "6");
    let ckpt = dir.path().join("m.ckpt");
    train(&data, &ckpt, "full");
    let before = std::fs::read(&ckpt).unwrap();
    let o = ok(pansharp(&["train", "--data", s(&data.join("manifest.json")), "--out", s(&ckpt), "--resume", s(&ckpt)]));
    assert!(stdout(&o).contains("\"total_iters\":4"));
    assert_eq!(std::fs::read(&ckpt).unwrap(), before);
}

#[test]
fn no_fam_models_refuse_alignment_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, "1", "8");
    let ckpt = dir.path().join("nofam.ckpt");
    train(&data, &ckpt, "no_fam");
    let o = pansharp(&[
        "sharpen", "--ckpt", s(&ckpt), "--pan", s(&data.join("scene_0000_pan.sipr")), "--ms",
        s(&data.join("scene_0000_ms.sipr")), "--out", s(&dir.path().join("ps.sipr")), "--dump-aligned-ms",
        s(&dir.path().join("a.sipr")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_reports_each_op_and_passes() {
    let o = ok(pansharp(&["gradcheck", "--module", "losses", "--seed", "1"]));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("losses/sis_fam") && l.ends_with("ok")));
    assert!(out.contains("checks passed on seeds 1"));
}
