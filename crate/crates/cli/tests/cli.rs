use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use interflow::flowio::read_flo;
use interflow::metrics::MetricsReport;

const TINY: &str = r#"
seed = 3
[network]
width_divisor = 16
width = 64
height = 32
[augment]
out_width = 64
out_height = 32
[data]
synthetic_seed = 5
[data.synthetic]
width = 64
height = 32
length = 12
sequences = 3
max_speed = 2.0
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_interflow"));
    c.env_remove("INTERFLOW_DATA_ROOT").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_synthetic_is_deterministic_and_guards_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.toml");
    std::fs::write(&cfg, "[synthetic]\nsequences = 3\nlength = 5\n").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-synthetic", "--config", s(&cfg), "--seed", "7", "--out", s(d)]);
    }
    assert_eq!(files(&a), files(&b));
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 3);

    let again = run(&["gen-synthetic", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(again.status.code(), Some(3));
    ok(&["gen-synthetic", "--config", s(&cfg), "--out", s(&a), "--force"]);
}

#[test]
fn zero_motion_corpus_has_flat_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.toml");
    std::fs::write(
        &cfg,
        "[synthetic]\nsequences = 2\nlength = 4\nfixed_velocity = [0.0, 0.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("still");
    ok(&["gen-synthetic", "--config", s(&cfg), "--out", s(&out)]);
    for (path, _) in files(&out).into_iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "flo")) {
        let f = read_flo(out.join(path)).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    }
}

#[test]
fn unknown_keys_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "learning_rate = 1.0\n[schedule.optimizer]\nlr = 2.0\n");
    let out = run(&["pretrain", "--config", s(&cfg), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning_rate") && err.contains("schedule.optimizer.lr"), "{err}");
}

#[test]
fn unavailable_device_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let out = run(&["pretrain", "--config", s(&cfg), "--device", "cuda", "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
}

fn metrics_lines(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn pretrain_resume_finetune_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "");
    let pre = tmp.path().join("pre");
    ok(&["pretrain", "--config", s(&cfg), "--epochs", "1", "--out", s(&pre)]);
    assert!(pre.join("final.ckpt").is_file() && pre.join("config.toml").is_file());
    let first = metrics_lines(&pre);
    assert_eq!(first.iter().filter(|l| l.contains("\"epoch\"")).count(), 1);

    // the snapshot alone reproduces the metrics log
    let rerun = tmp.path().join("rerun");
    ok(&["pretrain", "--config", s(&pre.join("config.toml")), "--out", s(&rerun)]);
    assert_eq!(metrics_lines(&rerun), first);

    // resuming continues the epoch numbering
    ok(&[
        "pretrain",
        "--config",
        s(&cfg),
        "--epochs",
        "2",
        "--resume",
        s(&pre.join("final.ckpt")),
        "--out",
        s(&pre),
    ]);
    let resumed = metrics_lines(&pre);
    assert!(resumed.iter().any(|l| l.contains("\"epoch\":1")), "{resumed:?}");

    let ft = tmp.path().join("ft");
    ok(&[
        "finetune",
        "--config",
        s(&cfg),
        "--epochs",
        "1",
        "--init",
        s(&pre.join("final.ckpt")),
        "--out",
        s(&ft),
    ]);
    let flow_ckpt = ft.join("final.ckpt");

    // head mismatch
    let bad = run(&[
        "eval-flow",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&pre.join("final.ckpt")),
        "--out",
        s(&tmp.path().join("bad")),
    ]);
    assert_eq!(bad.status.code(), Some(3));

    let ev = tmp.path().join("ev");
    ok(&["eval-flow", "--config", s(&cfg), "--checkpoint", s(&flow_ckpt), "--out", s(&ev)]);
    let text = std::fs::read_to_string(ev.join("flow_report.toml")).unwrap();
    let report = MetricsReport::from_kv(&text).unwrap();
    assert_eq!(report.to_kv().unwrap(), text);
    assert!(report.overall().unwrap().epe.unwrap().is_finite());

    let ei = tmp.path().join("ei");
    ok(&["eval-interp", "--config", s(&cfg), "--checkpoint", s(&pre.join("final.ckpt")), "--out", s(&ei)]);
    let text = std::fs::read_to_string(ei.join("interp_report.toml")).unwrap();
    assert_eq!(MetricsReport::from_kv(&text).unwrap().to_kv().unwrap(), text);

    // inference on frames written by gen-synthetic
    let corpus = tmp.path().join("corpus");
    let gen = tmp.path().join("gen.toml");
    std::fs::write(&gen, "[synthetic]\nsequences = 1\nlength = 5\n").unwrap();
    ok(&["gen-synthetic", "--config", s(&gen), "--out", s(&corpus)]);
    let frames: Vec<String> = (0..5)
        .map(|t| s(&corpus.join(format!("synthetic_000/frames/{t:06}.png"))).to_string())
        .collect();
    let frame_args = |n: usize| frames[..n].iter().map(String::as_str).collect::<Vec<_>>();

    let interp_out = tmp.path().join("center");
    let pre_ckpt = pre.join("final.ckpt");
    let mut args = vec!["infer", "--checkpoint", s(&pre_ckpt), "--out", s(&interp_out)];
    let three = [args.clone(), frame_args(3)].concat();
    assert_eq!(run(&three).status.code(), Some(2));
    args.extend(frame_args(4));
    ok(&args);
    assert!(interp_out.join("center.png").is_file());

    for (n, want) in [(5, 4), (2, 1)] {
        let out = tmp.path().join(format!("flow{n}"));
        let mut args = vec!["infer", "--checkpoint", s(&flow_ckpt), "--out", s(&out)];
        args.extend(frame_args(n));
        ok(&args);
        let flo = files(&out)
            .into_iter()
            .filter(|(p, _)| p.extension().is_some_and(|e| e == "flo"))
            .count();
        assert_eq!(flo, want);
    }
}

#[test]
fn sweep_writes_one_row_per_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "[sweep]\nrepeats = 1\n");
    let scratch = tmp.path().join("scratch");
    ok(&["scratch", "--config", s(&cfg), "--epochs", "1", "--out", s(&scratch)]);
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&scratch.join("final.ckpt")),
        "--sizes",
        "2,4,100000",
        "--epochs",
        "1",
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].ends_with("dropped"));
    assert!(out.join("sweep.svg").is_file());
}

#[test]
fn diverging_training_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "[schedule.optimizer]\ninitial_lr = 1e30\n");
    let out = run(&["scratch", "--config", s(&cfg), "--epochs", "3", "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}
