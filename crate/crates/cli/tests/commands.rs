use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn percept(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_percept"))
        .args(args)
        .current_dir(root())
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn synth(kind: &str, count: usize, size: usize, seed: u64, out: &Path) {
    let o = percept(&[
        "synth", "--kind", kind, "--count", &count.to_string(), "--size", &size.to_string(),
        "--seed", &seed.to_string(), "--out-dir", s(out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_identical_and_mismatched() {
    let t = tempfile::tempdir().unwrap();
    synth("gratings", 2, 24, 1, t.path());
    let a = t.path().join("gratings_00000.png");
    let b = t.path().join("gratings_00001.png");
    let o = percept(&["compare", s(&a), s(&a)]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("psnr_db\tinf\n"), "{out}");
    assert!(out.contains("ssim\t1\n"));
    assert!(out.contains("mse\t0\n"));
    // 24x24 holds only one scale of an 11x11 window.
    assert!(out.contains("ms_ssim\tn/a\n"));

    let again = percept(&["compare", s(&a), s(&b)]);
    assert_eq!(stdout(&again), stdout(&percept(&["compare", s(&a), s(&b)])));

    let small = tempfile::tempdir().unwrap();
    synth("gratings", 1, 16, 1, small.path());
    let o = percept(&["compare", s(&a), s(&small.path().join("gratings_00000.png"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension mismatch"));
}

#[test]
fn grad_check_passes_fails_on_corruption_and_repeats() {
    let a = percept(&["grad-check", "--config", "configs/grad_check.json"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    for line in stdout(&a).lines().filter(|l| l.contains("worst_rel_err")) {
        let v: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!(v < 1e-5, "{line}");
    }
    let b = percept(&["grad-check", "--config", "configs/grad_check.json"]);
    assert_eq!(a.stdout, b.stdout);

    let bad = percept(&["grad-check", "--corrupt", "ssim/24x24"]);
    assert_eq!(code(&bad), 1);
    let out = stdout(&bad);
    assert!(out.lines().any(|l| l.starts_with("ssim/24x24") && l.ends_with("FAIL")), "{out}");
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ssim/24x24"));
    assert_eq!(code(&percept(&["grad-check", "--corrupt", "no-such-check"])), 2);
}

#[test]
fn toy_training_is_fast_decreasing_and_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let start = std::time::Instant::now();
    let o = percept(&["train", "--config", "configs/toy_ae.json", "--out-dir", s(&a)]);
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert!(summary["final_train_loss"].as_f64() < summary["initial_train_loss"].as_f64());
    let report = fs::read_to_string(a.join("train_report.csv")).unwrap();
    let epochs = summary["stop_epoch"].as_u64().unwrap() as usize;
    assert_eq!(report.lines().count(), epochs + 2);
    for e in 0..=epochs {
        assert!(a.join(format!("grids/epoch_{e:03}.png")).is_file());
    }

    percept(&["train", "--config", "configs/toy_ae.json", "--out-dir", s(&b)]);
    for f in ["checkpoint.json", "train_report.csv", "summary.json", "grids/epoch_001.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_configs_are_usage_errors_and_write_nothing() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("out");
    let missing = write_config(
        t.path(),
        "missing.json",
        &format!(
            r#"{{"out_dir": "{}", "data": {{"source": "dir", "path": "/no/such/dir"}},
               "model": {{"type": "autoencoder", "layers": [{{"kind": "dense", "in_dim": 4, "out_dim": 4}}]}},
               "loss": {{"kind": "mse"}},
               "training": {{"optimizer": {{"kind": {{"type": "sgd", "lr": 0.1}}}}}}}}"#,
            s(&out)
        ),
    );
    let o = percept(&["train", "--config", s(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/dir"));
    assert!(!out.exists());

    let unknown = write_config(t.path(), "unknown.json", r#"{"seed": 1, "learning_rate": 3}"#);
    let o = percept(&["grad-check", "--config", s(&unknown)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert_eq!(code(&percept(&["train"])), 2);
}

fn elvae_checkpoint(dir: &Path) -> PathBuf {
    let out = dir.join("vae");
    let o = percept(&["train", "--config", "configs/toy_elvae.json", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("checkpoint.json")
}

#[test]
fn sampling_counts_determinism_and_kind_errors() {
    let t = tempfile::tempdir().unwrap();
    let ck = elvae_checkpoint(t.path());
    let (a, b) = (t.path().join("s1"), t.path().join("s2"));
    for d in [&a, &b] {
        let o = percept(&["sample", "--checkpoint", s(&ck), "-n", "4", "--seed", "3", "--out-dir", s(d)]);
        assert_eq!(code(&o), 0);
    }
    let names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 4);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap());
    }

    let none = t.path().join("none");
    let o = percept(&["sample", "--checkpoint", s(&ck), "-n", "0", "--out-dir", s(&none)]);
    assert_eq!(code(&o), 0);
    assert!(!none.exists() || fs::read_dir(&none).unwrap().next().is_none());

    let ae = t.path().join("ae");
    percept(&["train", "--config", "configs/toy_ae.json", "--out-dir", s(&ae)]);
    let o = percept(&[
        "sample", "--checkpoint", s(&ae.join("checkpoint.json")), "-n", "2", "--out-dir", s(&none),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("EL-VAE"));
}

fn gaussian(count: usize, shift: f64, seed: u64) -> String {
    format!(r#"{{"source": "gaussian", "count": {count}, "dim": 4, "shift": {shift}, "seed": {seed}}}"#)
}

#[test]
fn select_c_picks_the_reference_distribution() {
    let t = tempfile::tempdir().unwrap();
    let cfg = |labels: (f64, f64), out: &str| {
        format!(
            r#"{{"seed": 2, "out_dir": "{}", "select": {{"reference": {},
                "candidates": [{{"c": {}, "samples": {}}}, {{"c": {}, "samples": {}}}]}}}}"#,
            s(&t.path().join(out)),
            gaussian(150, 0.0, 1),
            labels.0,
            gaussian(150, 0.0, 2),
            labels.1,
            gaussian(150, 1.5, 3),
        )
    };
    let a = write_config(t.path(), "a.json", &cfg((1000.0, 1.0), "a"));
    let o = percept(&["select-c", "--config", s(&a)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("chosen C = 1000\n"), "{}", stdout(&o));
    let again = percept(&["select-c", "--config", s(&a)]);
    assert_eq!(o.stdout, again.stdout);

    let b = write_config(t.path(), "b.json", &cfg((1.0, 1000.0), "b"));
    let o = percept(&["select-c", "--config", s(&b)]);
    assert!(stdout(&o).contains("chosen C = 1\n"));
    let chosen = fs::read_to_string(t.path().join("b/chosen.csv")).unwrap();
    assert!(chosen.starts_with("chosen_c,bandwidth\n1,"));

    let one = write_config(
        t.path(),
        "one.json",
        &format!(
            r#"{{"select": {{"reference": {}, "candidates": [{{"c": 1, "samples": {}}}]}}}}"#,
            gaussian(10, 0.0, 1),
            gaussian(10, 0.0, 2)
        ),
    );
    assert_eq!(code(&percept(&["select-c", "--config", s(&one)])), 2);
}

#[test]
fn sr_eval_reports_and_model_wiring() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let o = percept(&["sr-eval", "--hr-dir", "assets/sr_standin", "--out-dir", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(a.join("sr_report.csv")).unwrap();
    let methods: std::collections::BTreeSet<_> =
        csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(methods.into_iter().collect::<Vec<_>>(), ["bicubic"]);
    assert_eq!(csv.lines().count(), 6);
    percept(&["sr-eval", "--hr-dir", "assets/sr_standin", "--out-dir", s(&b)]);
    for f in ["sr_report.csv", "sr_report.md"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }

    let sr = t.path().join("sr");
    let o = percept(&["train", "--config", "configs/toy_sr.json", "--out-dir", s(&sr)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = t.path().join("c");
    let o = percept(&[
        "sr-eval", "--config", "configs/sr_eval.json", "--checkpoint", s(&sr.join("checkpoint.json")),
        "--out-dir", s(&c),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(c.join("sr_report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.split(',').nth(1) == Some("model")));
    assert!(fs::read_to_string(c.join("sr_report.md")).unwrap().contains("| model |"));

    let wrong = percept(&[
        "sr-eval", "--hr-dir", "assets/sr_standin", "--scale", "2", "--checkpoint",
        s(&sr.join("checkpoint.json")), "--out-dir", s(&c),
    ]);
    assert_eq!(code(&wrong), 2);
    let empty = t.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&percept(&["sr-eval", "--hr-dir", s(&empty), "--out-dir", s(&c)])), 2);
}

#[test]
fn encode_rows_columns_and_empty_dataset() {
    let t = tempfile::tempdir().unwrap();
    // A 32-unit dense bottleneck over 8x8 images.
    let ae = write_config(
        t.path(),
        "ae.json",
        &format!(
            r#"{{"seed": 1, "out_dir": "{}", "pixel_range": "signed",
               "data": {{"source": "synthetic", "kind": "discs", "count": 40, "size": 8}},
               "model": {{"type": "autoencoder", "layers": [
                  {{"kind": "dense", "in_dim": 64, "out_dim": 32}}, {{"kind": "activation", "function": "relu"}},
                  {{"kind": "dense", "in_dim": 32, "out_dim": 64}}, {{"kind": "activation", "function": "tanh"}}]}},
               "loss": {{"kind": "mse"}},
               "training": {{"optimizer": {{"kind": {{"type": "adam", "lr": 0.01}}, "batch_size": 8}},
                             "stop": {{"max_epochs": 2}}}}}}"#,
            s(&t.path().join("ae"))
        ),
    );
    assert_eq!(code(&percept(&["train", "--config", s(&ae)])), 0);
    let ck = t.path().join("ae/checkpoint.json");
    let data = t.path().join("imgs");
    synth("discs", 10, 8, 5, &data);
    let (a, b) = (t.path().join("a.csv"), t.path().join("b.csv"));
    for out in [&a, &b] {
        let o = percept(&["encode", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let mut rd = csv::Reader::from_path(&a).unwrap();
    assert_eq!(rd.headers().unwrap().len(), 33);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort_unstable();
    assert_eq!(names, sorted);

    let empty = t.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let e = t.path().join("e.csv");
    assert_eq!(code(&percept(&["encode", "--checkpoint", s(&ck), "--data", s(&empty), "--out", s(&e)])), 0);
    let text = fs::read_to_string(&e).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("name,f0,"));

    let big = t.path().join("big");
    synth("discs", 2, 16, 5, &big);
    let o = percept(&["encode", "--checkpoint", s(&ck), "--data", s(&big), "--out", s(&t.path().join("x.csv"))]);
    assert_eq!(code(&o), 1);
}
