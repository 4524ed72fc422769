use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn semsplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsplat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("running the CLI")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn query_prints_the_ranked_label() {
    let ckpt = golden().join("scene.ckpt");
    let ds = golden();
    let out = stdout(&semsplat(&["query", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "tea"]));
    let first = out.lines().next().unwrap();
    assert!(first.starts_with("query 'tea' → coffee machine (relevancy 0."), "{out}");

    let out = stdout(&semsplat(&["query", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "car"]));
    assert_eq!(out.trim(), "query 'car' → no label above threshold 0.5");

    let o = semsplat(&["query", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "teapot"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [encoder_unavailable]"));
}

#[test]
fn render_and_mask_are_pngs() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = golden().join("scene.ckpt");
    let png = tmp.path().join("view.png");
    stdout(&semsplat(&[
        "render", "--checkpoint", s(&ckpt), "--dataset", s(&golden()), "--frame", "2", "--out", s(&png),
    ]));
    let bytes = std::fs::read(&png).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");

    let mask = tmp.path().join("mask.png");
    stdout(&semsplat(&[
        "query", "--checkpoint", s(&ckpt), "--dataset", s(&golden()), "apple", "--out", s(&mask),
    ]));
    assert_eq!(&std::fs::read(&mask).unwrap()[..8], b"\x89PNG\r\n\x1a\n");

    let o = semsplat(&[
        "render", "--checkpoint", s(&ckpt), "--dataset", s(&golden()), "--frame", "99", "--out", s(&png),
    ]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [invalid_parameter]"));
}

#[test]
fn synth_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("data");
    stdout(&semsplat(&["synth", "--out", s(&ds), "--iterations", "60"]));
    let ckpt = tmp.path().join("scene.ckpt");
    let log = tmp.path().join("log.jsonl");
    let config = ds.join("train.json");
    let out = stdout(&semsplat(&[
        "train", "--dataset", s(&ds), "--config", s(&config), "--checkpoint", s(&ckpt), "--out", s(&log),
    ]));
    assert!(out.contains("wrote"), "{out}");
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 60);
    assert_eq!(lines[59]["iteration"], 60);

    let report = tmp.path().join("report.json");
    let out = stdout(&semsplat(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "--out", s(&report)]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["frames"], 10);
    assert!(v["psnr"].as_f64().unwrap() > 5.0);
    assert_eq!(v, serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&report).unwrap()).unwrap());

    std::fs::copy(
        golden().parent().unwrap().join("corrupt/dictionary_duplicate.json"),
        ds.join("dictionary.json"),
    )
    .unwrap();
    let o = semsplat(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&ds)]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [duplicate_label]"));
}
