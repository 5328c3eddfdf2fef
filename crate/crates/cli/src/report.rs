//! Report records, the run manifest, and their on-disk forms.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use jumpsmooth::smoothness::Status;
use serde::Serialize;

/// One executed check. Reports hold no timings, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub check: String,
    pub kind: String,
    pub inputs_digest: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub checks: usize,
    pub passed: usize,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub manifest: Manifest,
    pub records: Vec<Record>,
}

/// Plot data emitted by a check, written as `<check>.<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `report.csv` body: one row per record, details as `key=value;...`.
    pub fn records_csv(&self) -> csv::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "check",
            "kind",
            "inputs_digest",
            "value",
            "stderr",
            "bound",
            "pass",
            "status",
            "details",
            "error",
        ])?;
        for r in &self.records {
            let num = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
            let details = r.details.iter().map(|(k, v)| format!("{k}={v:?}")).collect::<Vec<_>>().join(";");
            let status = r.status.map(|s| format!("{s:?}").to_lowercase()).unwrap_or_default();
            w.write_record([
                r.check.as_str(),
                r.kind.as_str(),
                r.inputs_digest.as_str(),
                &num(r.value),
                &num(r.stderr),
                &num(r.bound),
                if r.pass { "true" } else { "false" },
                &status,
                &details,
                r.error.as_deref().unwrap_or(""),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is UTF-8"))
    }

    pub fn manifest_csv(&self) -> csv::Result<String> {
        let m = &self.manifest;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "value"])?;
        for (k, v) in [
            ("config_sha256", m.config_sha256.clone()),
            ("version", m.version.clone()),
            ("seed", m.seed.to_string()),
            ("checks", m.checks.to_string()),
            ("passed", m.passed.to_string()),
            ("all_pass", m.all_pass.to_string()),
        ] {
            w.write_record([k, v.as_str()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is UTF-8"))
    }
}

impl Table {
    pub fn to_csv(&self) -> csv::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is UTF-8"))
    }
}

/// Write the report and every table under `dir`; returns the written paths.
pub fn write_all(
    dir: &Path,
    format: Format,
    report: &Report,
    tables: &[(String, Table)],
) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(PathBuf, String)> = match format {
        Format::Json => vec![(dir.join("report.json"), report.to_json())],
        Format::Csv => {
            vec![(dir.join("report.csv"), report.records_csv()?), (dir.join("manifest.csv"), report.manifest_csv()?)]
        }
    };
    for (check, t) in tables {
        files.push((dir.join(format!("{check}.{}.csv", t.name)), t.to_csv()?));
    }
    for (path, body) in &files {
        fs::File::create(path)?.write_all(body.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
