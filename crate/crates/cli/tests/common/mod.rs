#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

pub fn neurofuzz<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_neurofuzz"))
        .args(args)
        .output()
        .expect("spawn neurofuzz")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs and asserts exit status 0, returning stdout.
pub fn ok<I, S>(args: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let o = neurofuzz(args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    stdout(&o)
}

/// Profiles the toy model over the shipped profiling set into `dir`.
pub fn toy_profile(dir: &Path) -> String {
    let out = dir.join("toy.nfpf").to_string_lossy().into_owned();
    ok([
        "profile",
        "--model",
        &fixture("lenet_toy"),
        "--data",
        &fixture("profile_data"),
        "--out",
        &out,
    ]);
    out
}

/// Value following `key ` on the first line that starts with it.
pub fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key:?} in output:\n{text}"))
        .split_whitespace()
        .next()
        .unwrap()
        .to_string()
}
