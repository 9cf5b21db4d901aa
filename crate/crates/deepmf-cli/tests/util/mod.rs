//! Helpers for driving the compiled binary in tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

pub fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_deepmf")
}

/// Fresh scratch directory under the system temp dir.
pub fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("deepmf-cli-{}-{tag}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).expect("clear scratch");
    }
    std::fs::create_dir_all(&dir).expect("create scratch");
    dir
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(binary())
        .args(args)
        .env_remove("DEEPMF_OUT")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Byte-compares every file in two directories, skipping the timing sidecar.
pub fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |dir: &Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .expect("readable dir")
            .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
            .filter(|n| n != "timing.json")
            .collect();
        names.sort();
        names
    };
    let names_a = list(a);
    assert_eq!(names_a, list(b), "directories hold different files");
    for name in names_a {
        let bytes_a = std::fs::read(a.join(&name)).expect("readable");
        let bytes_b = std::fs::read(b.join(&name)).expect("readable");
        assert_eq!(bytes_a, bytes_b, "{name} differs between reruns");
    }
}
