#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small sensors and a short search keep CLI runs under a second.
pub const SMALL_CONFIG: &str = r#"
budget = 120
starts = 2
max_source_points = 4000

[scene.lidar]
beams = 32
columns = 512

[scene.radar]
density = 100
frames = 2

[scene.camera]
width = 160
height = 120
"#;

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let mut table: toml::Table = SMALL_CONFIG.parse().unwrap();
    table.extend(extra.parse::<toml::Table>().unwrap());
    fs::write(&path, toml::to_string(&table).unwrap()).unwrap();
    path
}

pub fn loopcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopcal")).args(args).output().expect("spawning loopcal")
}

pub fn loopcal_ok(args: &[&str]) {
    let out = loopcal(args);
    assert!(out.status.success(), "loopcal {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

/// Relative path to contents of every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
