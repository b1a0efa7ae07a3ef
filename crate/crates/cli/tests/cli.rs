use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bannerforge_core::pipeline::BannerManifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bannerforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn validate_demo_is_clean() {
    let o = run(&[
        "validate",
        "--annotations",
        s(&demo().join("annotations")),
        "--library",
        s(&demo().join("library.json")),
    ]);
    let v = stdout_json(&o);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["files"], 12);
}

#[test]
fn layout_is_no_worse_than_oracle() {
    let problem = demo().join("layout_problem.json");
    let ga = stdout_json(&run(&["layout", "--problem", s(&problem), "--seed", "1"]));
    let oracle = stdout_json(&run(&["oracle", "--problem", s(&problem), "--steps", "16"]));
    let (g, b) = (
        ga["best_energy"].as_f64().unwrap(),
        oracle["best_energy"].as_f64().unwrap(),
    );
    assert!(g <= b * 1.02, "{g} vs {b}");

    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "layout",
        "--problem",
        s(&problem),
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(csv.starts_with("generation,best_energy,mean_energy\n"));
    assert_eq!(csv.lines().count(), 152);
}

#[test]
fn errors_are_categorised() {
    let o = run(&["validate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bogus"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, br#"{"image_id": "x", "width": "wide", "height": 10}"#).unwrap();
    let o = run(&["validate", "--annotations", s(&bad)]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        err.starts_with("data error:") && err.contains("bad.json") && err.contains("width"),
        "{err}"
    );

    let o = run(&["pipeline", "--config", s(&dir.path().join("missing.json"))]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("io error:"));
    assert_eq!(o.status.code(), Some(4));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, br#"{"paths": {"annotations": "a"}}"#).unwrap();
    let o = run(&["pipeline", "--config", s(&cfg)]);
    assert!(
        String::from_utf8_lossy(&o.stderr).starts_with("config error:"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compose_reproduces_a_pipeline_banner() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run(&[
        "pipeline",
        "--config",
        s(&demo().join("pipeline.json")),
        "--out",
        s(&out)
    ])
    .status
    .success());
    let m: BannerManifest =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let b = &m.banners[0];
    let layout = dir.path().join("layout.json");
    fs::write(&layout, serde_json::to_vec(&b.layout).unwrap()).unwrap();
    let options = dir.path().join("options.json");
    fs::write(&options, serde_json::to_vec(&b.provenance.options).unwrap()).unwrap();
    let png = dir.path().join("again.png");
    let id = &b.source_image_id;
    let o = run(&[
        "compose",
        "--image",
        s(&demo().join(format!("images/{id}.png"))),
        "--annotation",
        s(&demo().join(format!("annotations/{id}.json"))),
        "--layout",
        s(&layout),
        "--logo",
        s(&demo().join(&b.provenance.logo_path)),
        "--callout",
        &b.provenance.callout,
        "--options",
        s(&options),
        "--out",
        s(&png),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(&png).unwrap(),
        fs::read(out.join(&b.output)).unwrap()
    );
}

#[test]
fn synth_to_evaluation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(&["synth", "--out", s(d), "--n", "600", "--seed", "4"])
        .status
        .success());

    // re-extracting from the written annotations reproduces the generated matrix
    let again = d.join("again.csv");
    let o = run(&[
        "features",
        "--annotations",
        s(&d.join("annotations")),
        "--schema",
        s(&d.join("schema.json")),
        "--out",
        s(&again),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(&again).unwrap(),
        fs::read(d.join("features.csv")).unwrap()
    );

    let model = d.join("model.json");
    let (features, labels, schema) = (
        d.join("features.csv"),
        d.join("labels.csv"),
        d.join("schema.json"),
    );
    let common = [
        "--features",
        s(&features),
        "--labels",
        s(&labels),
        "--schema",
        s(&schema),
    ];
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--kind", "lr", "--out", s(&model)]);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut args = vec!["evaluate", "--model", s(&model)];
    args.extend(common);
    args.extend(["--split", "0.75", "--seed", "4"]);
    let report = stdout_json(&run(&args));
    assert!(report["auc"].as_f64().unwrap() > 0.8, "{report}");
    assert_eq!(report["n_test"], 150);

    let o = run(&[
        "rank",
        "--model",
        s(&model),
        "--features",
        s(&d.join("features.csv")),
        "--schema",
        s(&d.join("schema.json")),
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    let scores: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 600);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let cal = stdout_json(&run(&["calibrate", "--records", s(&d.join("records.csv"))]));
    assert!(cal["weights"]["w_overlap"].as_f64().unwrap() > 1.0);
}
