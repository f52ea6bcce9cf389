#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn sflab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sflab"))
}

/// A run small enough for every subcommand to finish in seconds. 32x32 is
/// the only extent `gen-data` accepts.
pub const TINY_CONFIG: &str = r#"
seed = 3

[dataset]
source = "synthetic"
items = 80
height = 32
width = 32
classes = 4

[model]
variants = ["sf", "c88"]

[train]
epochs = 1
batch_size = 16

[attack]
steps = 2
limit = 16
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    sflab().args(args).output().expect("spawn sflab")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "sflab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every subcommand, as arguments placed after `--config <c> --out <o>`.
/// `detect apply` reads the detector written by `detect train` into the
/// same output directory.
pub fn subcommands() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("train", vec!["train"]),
        ("attack", vec!["attack"]),
        ("attack-frequency", vec!["attack", "--domain", "frequency"]),
        ("transfer", vec!["transfer"]),
        ("mix-interp", vec!["mix", "--kind", "interp"]),
        ("mix-subst", vec!["mix", "--kind", "subst"]),
        ("probe", vec!["probe"]),
        ("reconstruct", vec!["reconstruct"]),
        ("detect-train", vec!["detect", "train"]),
        ("detect-apply", vec!["detect", "apply"]),
        ("gen-data", vec!["gen-data"]),
    ]
}

/// Runs one entry of [`subcommands`] against `config`, writing into `out`.
pub fn run_subcommand(words: &[&str], config: &Path, out: &Path) -> Output {
    let config = config.to_str().unwrap();
    let out_s = out.to_str().unwrap();
    let mut args: Vec<String> = words.iter().map(|s| s.to_string()).collect();
    args.extend(["--config", config, "--out", out_s].map(String::from));
    if words == ["detect", "apply"] {
        let detector = out.join("detector-sf.json");
        args.extend(["--detector".to_string(), detector.to_str().unwrap().to_string()]);
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&refs)
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
