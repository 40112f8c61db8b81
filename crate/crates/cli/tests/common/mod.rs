#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A config small enough to run every command in well under a second.
pub const SMALL_CONFIG: &str = r#"
plan_id = "small"
output_dir = "out"
seeds = [0, 1, 2]
workers = 2

[base_task]
n_train = 256
n_test = 128

[followup_task]
n_train = 256
n_test = 128

[base_training]
pass_budget = 200

[training]
pass_budget = 101
sam = true

[probe]
n_per_axis = 9
"#;

pub fn flatlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("FLATLAB_OUTPUT_ROOT")
        .output()
        .expect("spawn flatlab")
}

pub fn flatlab_ok(dir: &Path, args: &[&str]) -> String {
    let out = flatlab(dir, args);
    assert!(
        out.status.success(),
        "flatlab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Every file under `root`, relative path and contents, sorted by path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
