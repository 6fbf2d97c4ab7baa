use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn engage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engage"))
        .args(args)
        .env_remove("ENGAGE_DATA_DIR")
        .output()
        .expect("spawn engage")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let out = dir.join("data");
    let mut args = vec![
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--videos-per-class",
        "5",
    ];
    if !extra.contains(&"--frames") {
        args.extend(["--frames", "90"]);
    }
    args.extend_from_slice(extra);
    ok(&engage(&args));
    out.join("manifest.toml").to_str().unwrap().to_string()
}

/// Small backbone so frame-mode training finishes in seconds.
fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!("tcn_levels = 2\ntcn_hidden = 8\ntcn_kernel = 2\nbatch_size = 8\nepochs = 3\npatience = 1\n{extra}"),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_train_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let config = small_config(dir.path(), "");
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    ok(&engage(&[
        "train",
        "--manifest",
        &manifest,
        "--out",
        run_s,
        "--config",
        &config,
    ]));
    for f in ["config.toml", "history.csv", "summary.json", "checkpoint"] {
        assert!(run.join(f).exists(), "{f} missing");
    }

    let out = engage(&["eval", "--run", run_s]);
    ok(&out);
    assert!(run.join("eval-test/report.json").exists());
    assert!(run.join("eval-test/confusion.txt").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));

    let out = engage(&[
        "predict",
        "--run",
        run_s,
        "--manifest",
        &manifest,
        "--split",
        "test",
    ]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("video_id,prediction,p0,p1,p2,p3"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = engage(&["train", "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(engage(&["train", "--bogus"]).status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    for cmd in [
        "synth",
        "features",
        "train",
        "predict",
        "eval",
        "rank-features",
    ] {
        let out = engage(&[cmd, "--help"]);
        ok(&out);
        assert!(
            String::from_utf8_lossy(&out.stdout).contains("[default:"),
            "{cmd}"
        );
    }
    let out = engage(&["train", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[default: 0.001]"));
    assert!(text.contains("[default: frame-ordinal]"));
    ok(&engage(&["--help"]));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = engage(&[
        "train",
        "--manifest",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Ordinal labels cannot drive a regression run.
    let manifest = synth(dir.path(), &[]);
    let config = small_config(dir.path(), "");
    let out = engage(&[
        "train",
        "--manifest",
        &manifest,
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--config",
        &config,
        "--mode",
        "clip-regress",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let config = small_config(dir.path(), "");
    let out = engage(&[
        "train",
        "--manifest",
        &manifest,
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--config",
        &config,
        "--patience",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let config = small_config(dir.path(), "");
    let out = engage(&[
        "train",
        "--manifest",
        &manifest,
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--config",
        &config,
        "--lr",
        "1e6",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let config = small_config(dir.path(), "seed = 11\nmodel = \"tcn\"\n");
    let run = dir.path().join("run");
    ok(&engage(&[
        "train",
        "--manifest",
        &manifest,
        "--out",
        run.to_str().unwrap(),
        "--config",
        &config,
        "--epochs",
        "2",
    ]));
    let saved: toml::Table = fs::read_to_string(run.join("config.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(saved["epochs"].as_integer(), Some(2));
    assert_eq!(saved["patience"].as_integer(), Some(1));
    assert_eq!(saved["seed"].as_integer(), Some(11));
    assert_eq!(saved["learning_rate"].as_float(), Some(1e-3));
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let ma = synth(&a, &["--seed", "3"]);
    let mb = synth(&b, &["--seed", "3"]);
    assert_eq!(
        fs::read(a.join("data/frames/syn_l2_0001.csv")).unwrap(),
        fs::read(b.join("data/frames/syn_l2_0001.csv")).unwrap()
    );
    let config = small_config(dir.path(), "");
    for (m, d) in [(&ma, &a), (&mb, &b)] {
        ok(&engage(&[
            "train",
            "--manifest",
            m,
            "--out",
            d.join("run").to_str().unwrap(),
            "--config",
            &config,
        ]));
    }
    assert_eq!(
        history_without_timing(&a.join("run")),
        history_without_timing(&b.join("run"))
    );
}

fn history_without_timing(run: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(run.join("history.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let skip = rows[0].iter().position(|&h| h == "wall_seconds").unwrap();
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn features_and_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--frames", "300"]);
    let table = dir.path().join("clips.csv");
    ok(&engage(&[
        "features",
        "--manifest",
        &manifest,
        "--out",
        table.to_str().unwrap(),
    ]));
    let rows = fs::read_to_string(&table).unwrap().lines().count();
    assert_eq!(rows, 1 + 20);

    let out = dir.path().join("imp");
    ok(&engage(&[
        "rank-features",
        "--table",
        table.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trees",
        "50",
    ]));
    for f in ["importance.csv", "importance.json", "importance.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
