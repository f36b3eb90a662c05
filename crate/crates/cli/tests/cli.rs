use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = "\
seed = 2
data.frames_per_cell = 2
data.height = 16
data.width = 24
model.channels = 4
model.partition_rows = 2
model.partition_cols = 4
train.steps = 2
train.lr = 0.001
";

fn gla(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gla"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("RUST_LOG", "warn")
        .env("GLA_THREADS", "1")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn workspace(config: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let path = root.join("config.txt");
    fs::write(&path, config).unwrap();
    let data = root.join("data");
    let out = gla(&[&"gen-data", &"--config", &path, &"--out", &data]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    Workspace {
        _dir: dir,
        config: path,
        data,
        root,
    }
}

/// One step per arm, with enough frames for a nonempty test split.
fn suite_config() -> String {
    CONFIG.replace("train.steps = 2", "train.steps = 1").replace("frames_per_cell = 2", "frames_per_cell = 5")
}

fn csv_models(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("results.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[test]
fn help_succeeds_and_bad_usage_fails() {
    assert_eq!(code(&gla(&[&"--help"])), 0);
    assert_eq!(code(&gla(&[&"frobnicate"])), 1);
    assert_eq!(code(&gla(&[&"train", &"--config"])), 1);
}

#[test]
fn invalid_config_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "seed = 1\ntrain.lr = -1\n").unwrap();
    let out = gla(&[&"gen-data", &"--config", &cfg, &"--out", &dir.path().join("d")]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn unknown_suite_exits_one_and_missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nowhere");
    assert_eq!(code(&gla(&[&"ablate", &"--suite", &"bogus", &"--config", &cfg, &"--data", &missing, &"--out", &out])), 1);
    assert_eq!(code(&gla(&[&"train", &"--config", &cfg, &"--data", &missing, &"--out", &out])), 2);
}

#[test]
fn train_eval_export_pipeline() {
    let ws = workspace(CONFIG);
    let ckpt = ws.root.join("ckpt");
    let out = gla(&[&"train", &"--config", &ws.config, &"--data", &ws.data, &"--out", &ckpt]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(ckpt.join("train_log.csv")).unwrap().lines().count(), 3);

    let eval = ws.root.join("eval");
    assert_eq!(code(&gla(&[&"eval", &"--ckpt", &ckpt, &"--data", &ws.data, &"--out", &eval])), 0);
    for f in ["detections.txt", "results.txt", "results.csv"] {
        assert!(eval.join(f).is_file(), "{f}");
    }

    let attn = ws.root.join("attn");
    assert_eq!(code(&gla(&[&"export-attn", &"--ckpt", &ckpt, &"--data", &ws.data, &"--frames", &"1", &"--out", &attn])), 0);
    let mut files: Vec<String> = fs::read_dir(&attn)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files.len(), 6, "{files:?}");
    assert!(files.iter().all(|f| f.ends_with("_1.ppm")));

    let bad = gla(&[&"export-attn", &"--ckpt", &ckpt, &"--data", &ws.data, &"--frames", &"1,999", &"--out", &attn]);
    assert_ne!(code(&bad), 0);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("999"));
}

#[test]
fn partition_suite_has_four_arms() {
    let ws = workspace(&suite_config());
    let out = ws.root.join("sweep");
    let run = gla(&[&"ablate", &"--suite", &"partitions", &"--config", &ws.config, &"--data", &ws.data, &"--out", &out]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(csv_models(&out).len(), 4);
}

#[test]
fn attention_mode_suite_is_reproducible() {
    let ws = workspace(&suite_config());
    let run = |name: &str| {
        let out = ws.root.join(name);
        let r = gla(&[&"ablate", &"--suite", &"attention-mode", &"--config", &ws.config, &"--data", &ws.data, &"--out", &out]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(csv_models(&a).len(), 3);
    for f in ["results.csv", "results.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
