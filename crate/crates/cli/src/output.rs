//! Persistence: append-only CSV files and the JSON run manifest.

use std::fs::OpenOptions;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::config::StudyConfig;
use crate::sweep::ResultRow;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Appends records, writing the header only when the file is new or empty.
pub fn append_csv<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: String,
    config: &'a StudyConfig,
    rows: usize,
    failed_rows: usize,
    threshold_failures: &'a [String],
    files: [&'static str; 2],
}

pub fn write_manifest(
    dir: &Path,
    cfg: &StudyConfig,
    rows: &[ResultRow],
    threshold_failures: &[String],
) -> anyhow::Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        config: cfg,
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.ok()).count(),
        threshold_failures,
        files: [RESULTS_FILE, TIMINGS_FILE],
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Rec {
        a: f64,
        b: Option<bool>,
    }

    #[test]
    fn append_writes_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        append_csv(&p, &[Rec { a: 1.0, b: None }]).unwrap();
        append_csv(&p, &[Rec { a: 2.5, b: Some(true) }]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "a,b\n1.0,\n2.5,true\n");
        let back: Vec<Rec> = csv::Reader::from_path(&p).unwrap().deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(back[1], Rec { a: 2.5, b: Some(true) });
    }
}
