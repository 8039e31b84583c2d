//! Helpers for driving the `eprsim` binary from tests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn eprsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprsim"))
        .args(args)
        .output()
        .expect("eprsim runs")
}

/// Runs `eprsim` and panics with its stderr unless it exits 0.
pub fn eprsim_ok(args: &[&str]) -> Output {
    let out = eprsim(args);
    assert!(
        out.status.success(),
        "eprsim {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// CSV table with `#` comments skipped; cells stay as text.
#[derive(Debug)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Self {
        let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().expect("header").split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect()
    }

    pub fn text(&self, row: usize, col: &str) -> &str {
        let i = self.index()[col];
        &self.rows[row][i]
    }

    pub fn num(&self, row: usize, col: &str) -> f64 {
        let t = self.text(row, col);
        t.parse().unwrap_or_else(|_| panic!("column {col} row {row}: `{t}` is not a number"))
    }

    pub fn column(&self, col: &str) -> Vec<f64> {
        (0..self.rows.len()).map(|r| self.num(r, col)).collect()
    }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("valid JSON")
}

/// `(value, sigma)` of a serialized measurement.
pub fn measurement(v: &serde_json::Value) -> (f64, f64) {
    (
        v["value"].as_f64().expect("value"),
        v["sigma"].as_f64().expect("sigma"),
    )
}

/// The built-in table1-demo document with `edit` applied, written to `dir`.
pub fn edited_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> std::path::PathBuf {
    let (_, text) = eprsim_cli::config::BUILTIN
        .iter()
        .find(|(n, _)| *n == "table1-demo.json")
        .expect("built-in config");
    let mut doc: serde_json::Value = serde_json::from_str(text).unwrap();
    edit(&mut doc);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}
