use std::path::Path;
use std::process::{Command, Output};

fn twoman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = twoman(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_shape(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let cols = lines.next().unwrap().split(',').count();
    (lines.count(), cols)
}

#[test]
fn gen_embed_and_twoman_on_swiss_roll() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen",
        "--kind",
        "swiss-roll",
        "--n",
        "300",
        "--seed",
        "4",
        "--noise",
        "0.5",
        "--out-dir",
        p(&data),
    ]);
    assert_eq!(csv_shape(&data.join("x.csv")), (300, 3));
    assert_eq!(csv_shape(&data.join("z.csv")), (300, 2));
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 4);

    let le = dir.path().join("le");
    ok(&[
        "embed",
        "--input",
        p(&data.join("x.csv")),
        "--knn",
        "8",
        "--k",
        "3",
        "--scaling",
        "classic",
        "--out-dir",
        p(&le),
    ]);
    assert_eq!(csv_shape(&le.join("coords.csv")), (300, 3));

    let kp = dir.path().join("kpca");
    ok(&[
        "embed",
        "--input",
        p(&data.join("x.csv")),
        "--method",
        "kernel-pca",
        "--out-dir",
        p(&kp),
    ]);
    assert_eq!(csv_shape(&kp.join("coords.csv")), (300, 2));

    let tm = dir.path().join("tm");
    ok(&[
        "twoman",
        "--x",
        p(&data.join("x.csv")),
        "--y",
        p(&data.join("y.csv")),
        "--knn",
        "8",
        "--route",
        "svd",
        "--scaling",
        "classic",
        "--seed",
        "4",
        "--out-dir",
        p(&tm),
    ]);
    assert_eq!(csv_shape(&tm.join("coords_x.csv")).0, 300);
    assert!(tm.join("embedding.json").exists());
    assert!(tm.join("decomposition").join("decomposition.json").exists());
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "gen",
            "--kind",
            "linear",
            "--n",
            "50",
            "--seed",
            "9",
            "--out-dir",
            p(d),
        ]);
    }
    for f in ["x.csv", "y.csv", "z.csv", "m_map.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_then_report_rebuilds_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"generator":{"kind":"swiss_roll","n":300,"t_range":[4.71238898038469,9.42477796076938],
            "height_range":[0,20],"noise_x":[1,1,1],"noise_y":[1,1,1],"seed":0},
            "seeds":[0,1],"methods":["two_manifold","le"],"metrics":["procrustes"],"embedding":{"k_nn":6}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&["sweep", "--config", p(&cfg), "--out-dir", p(&out)]);
    assert!(stdout.contains("win-rate"));
    assert_eq!(csv_shape(&out.join("metrics.csv")), (4, 4));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();

    std::fs::remove_file(out.join("summary.json")).unwrap();
    ok(&["report", "--input", p(&out.join("metrics.csv"))]);
    assert_eq!(
        std::fs::read_to_string(out.join("summary.json")).unwrap(),
        summary
    );

    let single = dir.path().join("single");
    ok(&[
        "sweep",
        "--config",
        p(&cfg),
        "--seed",
        "7",
        "--out-dir",
        p(&single),
    ]);
    assert_eq!(csv_shape(&single.join("metrics.csv")).0, 2);
}

#[test]
fn dyn_writes_horizon_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("loop");
    ok(&[
        "gen",
        "--kind",
        "loop",
        "--n",
        "260",
        "--seed",
        "1",
        "--out-dir",
        p(&data),
    ]);
    let proto = dir.path().join("protocol.json");
    std::fs::write(
        &proto,
        r#"{"future_len":5,"past_len":5,"k":3,"train_len":200,"horizon":4,"ridge_lambda":1e-4}"#,
    )
    .unwrap();
    let out = dir.path().join("dyn");
    let stdout = ok(&[
        "dyn",
        "--series",
        p(&data.join("observations.csv")),
        "--targets",
        p(&data.join("positions.csv")),
        "--config",
        p(&proto),
        "--knn",
        "10",
        "--models",
        "graph,linear",
        "--out-dir",
        p(&out),
    ]);
    assert!(stdout.contains("graph") && stdout.contains("linear"));
    let text = std::fs::read_to_string(out.join("horizon_rmse.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "horizon,graph,linear");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"generator":{"kind":"linear","n":50},"seeds":[0],"methods":["magic"],"metrics":["procrustes"]}"#)
        .unwrap();
    let out = twoman(&["sweep", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).contains("panicked"));

    let out = twoman(&[
        "embed",
        "--input",
        p(&dir.path().join("missing.csv")),
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(!out.status.success());

    let out = twoman(&[
        "twoman",
        "--x",
        "a.csv",
        "--y",
        "b.csv",
        "--route",
        "qr",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(!out.status.success());
}
