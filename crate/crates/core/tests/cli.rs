use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn toy_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy.csv")
}

fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy.cfg"))
        .unwrap()
        .replace(
            "dataset.path = toy.csv",
            &format!("dataset.path = {}", toy_csv().display()),
        )
        .replace("train.epochs = 3", "train.epochs = 2");
    let path = dir.join("toy.cfg");
    fs::write(&path, format!("{text}{extra}")).unwrap();
    path
}

fn ficots(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ficots"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn train(cwd: &Path, cfg: &Path, out: &Path) -> Output {
    let o = ficots(cwd, &["train", "--config", s(cfg), "--out", s(out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path().join("cwd");
    fs::create_dir(&cwd).unwrap();
    let cfg = toy_config(tmp.path(), "");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));

    let o = train(&cwd, &cfg, &a);
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["epochs"], 2);
    assert_eq!(listing(&a), ["checkpoint.fcck", "history.txt", "manifest.txt"]);
    assert!(listing(&cwd).is_empty());
    assert!(!tmp.path().join("runs").exists());

    train(&cwd, &cfg, &b);
    for f in ["checkpoint.fcck", "history.txt", "manifest.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let history = fs::read_to_string(a.join("history.txt")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("1,"));

    // the manifest alone reproduces the run
    train(&cwd, &a.join("manifest.txt"), &c);
    assert_eq!(
        fs::read(a.join("checkpoint.fcck")).unwrap(),
        fs::read(c.join("checkpoint.fcck")).unwrap()
    );
    assert_eq!(history, fs::read_to_string(c.join("history.txt")).unwrap());
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    train(tmp.path(), &cfg, &tmp.path().join("a"));
    let o = ficots(
        tmp.path(),
        &[
            "train",
            "--config",
            s(&cfg),
            "--out",
            s(&tmp.path().join("b")),
            "--seed",
            "99",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let manifest = fs::read_to_string(tmp.path().join("b/manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 99"));
    assert_ne!(
        fs::read(tmp.path().join("a/history.txt")).unwrap(),
        fs::read(tmp.path().join("b/history.txt")).unwrap()
    );
}

#[test]
fn invalid_configs_fail_with_one_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    let bad = tmp.path().join("bad.cfg");
    fs::write(
        &bad,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("patch_len = 8", "patch_len = 40"),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = ficots(tmp.path(), &["train", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_line(&o);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("patch_len"));
    assert!(!out.exists());

    fs::write(&bad, "dataset.path = x.csv\ndataset.key = ETTh1\nmodel.colour = red\n").unwrap();
    let o = ficots(tmp.path(), &["train", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("model.colour"));

    let o = ficots(tmp.path(), &["train", "--config", s(&tmp.path().join("missing.cfg"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn eval_reports_metrics_and_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    let run = tmp.path().join("run");
    train(tmp.path(), &cfg, &run);
    let ckpt = run.join("checkpoint.fcck");

    let o = ficots(tmp.path(), &["eval", "--checkpoint", s(&ckpt), "--out", s(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let m: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(m["space"], "normalized");
    let n_windows = m["n_windows"].as_u64().unwrap() as usize;
    assert!(n_windows > 0 && m["mse"].as_f64().unwrap() >= 0.0 && m["mae"].as_f64().is_some());

    let csv = fs::read_to_string(run.join("predictions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("window_start,step,variable,pred,truth"));
    assert_eq!(lines.count(), n_windows * 4 * 2);

    let o = ficots(
        tmp.path(),
        &["eval", "--checkpoint", s(&ckpt), "--out", s(&run), "--raw-space"],
    );
    let raw: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(raw["space"], "raw");
    assert_ne!(raw["mse"], m["mse"]);
}

#[test]
fn eval_rejects_bad_checkpoints_and_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    let run = tmp.path().join("run");
    train(tmp.path(), &cfg, &run);

    let mut bytes = fs::read(run.join("checkpoint.fcck")).unwrap();
    bytes[4..6].copy_from_slice(&99u16.to_le_bytes());
    let v99 = tmp.path().join("v99.fcck");
    fs::write(&v99, bytes).unwrap();
    let o = ficots(tmp.path(), &["eval", "--checkpoint", s(&v99), "--out", s(&run)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("99"));

    let three = tmp.path().join("three.csv");
    let widened: String = fs::read_to_string(toy_csv())
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                format!("{l},ch2\n")
            } else {
                format!("{l},0.5\n")
            }
        })
        .collect();
    fs::write(&three, widened).unwrap();
    let o = ficots(
        tmp.path(),
        &[
            "eval",
            "--checkpoint",
            s(&run.join("checkpoint.fcck")),
            "--data",
            s(&three),
            "--out",
            s(&run),
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("3 variables"));
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    let o = ficots(tmp.path(), &["gradcheck", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let last: Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert!(last["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert!(last["worst_param"].is_string());
    assert!(stdout.lines().any(|l| l.contains("\"param\":\"patch.weight\"")));

    let o = ficots(tmp.path(), &["gradcheck", "--config", s(&cfg), "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_line(&o)["error"], "numeric");
    assert!(listing(tmp.path()) == ["toy.cfg"]);
}

#[test]
fn dumps_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), "");
    let ett = tmp.path().join("ett.cfg");
    fs::write(
        &ett,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("dataset.key = synthetic", "dataset.key = ETTh1"),
    )
    .unwrap();
    let run = tmp.path().join("run");
    train(tmp.path(), &ett, &run);
    let ckpt = run.join("checkpoint.fcck");

    let dump = |what: &str, dir: &Path| {
        let o = ficots(tmp.path(), &["dump", "--checkpoint", s(&ckpt), what, "--out", s(dir)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (d1, d2) = (tmp.path().join("d1"), tmp.path().join("d2"));
    for d in [&d1, &d2] {
        dump("prompts", d);
        dump("embeddings", d);
    }
    for f in ["prompts.txt", "embeddings.csv"] {
        assert_eq!(fs::read(d1.join(f)).unwrap(), fs::read(d2.join(f)).unwrap());
    }
    let prompts = fs::read_to_string(d1.join("prompts.txt")).unwrap();
    assert!(prompts.lines().count() > 0);
    assert!(prompts.lines().all(|l| l.contains("Forecast the next")));
    let header = fs::read_to_string(d1.join("embeddings.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 3 + 8);

    let o = ficots(tmp.path(), &["dump", "--checkpoint", s(&ckpt), "weights"]);
    assert_eq!(o.status.code(), Some(2));
}
