#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use xcheck_core::QuestionCase;

pub fn run_ok(args: &[&str]) -> String {
    let mut log = Vec::new();
    let mut full = vec!["xcheck"];
    full.extend_from_slice(args);
    if let Err(e) = xcheck_cli::run(full, &mut log) {
        panic!("xcheck {args:?} failed: {e}");
    }
    String::from_utf8(log).unwrap()
}

pub fn run_err(args: &[&str]) -> xcheck_cli::CliError {
    let mut full = vec!["xcheck"];
    full.extend_from_slice(args);
    xcheck_cli::run(full, &mut Vec::new()).expect_err("command should fail")
}

pub fn binary(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_xcheck"))
        .args(args)
        .output()
        .unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub struct Dir(pub tempfile::TempDir);

impl Dir {
    pub fn new() -> Self {
        Self(tempfile::tempdir().unwrap())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    pub fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

/// Writes a synthetic world with `n` questions and returns its path.
pub fn synth_file(dir: &Dir, name: &str, n: usize, seed: u64) -> String {
    let out = dir.s(name);
    run_ok(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", &out]);
    out
}

pub fn write_cases(dir: &Dir, name: &str, cases: &[QuestionCase]) -> String {
    let path = dir.path(name);
    xcheck_io::store_cases(cases, &path).unwrap();
    path.to_str().unwrap().to_string()
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}
