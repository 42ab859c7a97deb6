//! Benchmark reports: one row per (scene, mixture, algorithm, material).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_DECIMALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scene: String,
    pub mixture: String,
    pub algo: String,
    pub material: String,
    pub mean_abundance: f64,
    pub rmse: f64,
}

impl ReportRow {
    /// Values as they appear once printed with four decimals.
    pub fn rounded(&self) -> ReportRow {
        ReportRow {
            mean_abundance: round4(self.mean_abundance),
            rmse: round4(self.rmse),
            ..self.clone()
        }
    }
}

/// Numeric ids sort numerically, anything else lexically after them.
fn compare_mixtures(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>().ok(), b.parse::<u64>().ok()) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn fmt4(v: f64) -> String {
    format!("{:.*}", REPORT_DECIMALS, v)
}

/// Serialises `f64` fields rounded to four decimals in JSON.
mod four_decimals {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round4(*v))
    }
}

#[derive(Serialize)]
struct JsonRow<'a> {
    scene: &'a str,
    mixture: &'a str,
    algo: &'a str,
    material: &'a str,
    #[serde(with = "four_decimals")]
    mean_abundance: f64,
    #[serde(with = "four_decimals")]
    rmse: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    seed: u64,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stamp: Option<&'a str>,
    failures: &'a [String],
    rows: Vec<JsonRow<'a>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub seed: u64,
    pub config_hash: String,
    /// Optional wall-clock stamp; absent by default so reruns are byte-identical.
    pub stamp: Option<String>,
    pub rows: Vec<ReportRow>,
    /// Sub-runs that failed, as `scene/mixture/algo: message`.
    pub failures: Vec<String>,
}

impl Report {
    /// Sort rows by (scene, mixture, algorithm), keeping material order.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.scene
                .cmp(&b.scene)
                .then_with(|| compare_mixtures(&a.mixture, &b.mixture))
                .then_with(|| a.algo.cmp(&b.algo))
        });
        self.failures.sort();
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,mixture,algo,material,mean_abundance,rmse\n");
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &self.rows {
            writer
                .write_record([
                    r.scene.as_str(),
                    &r.mixture,
                    &r.algo,
                    &r.material,
                    &fmt4(r.mean_abundance),
                    &fmt4(r.rmse),
                ])
                .expect("in-memory csv write");
        }
        out.push_str(std::str::from_utf8(&writer.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn to_json(&self) -> String {
        let report = JsonReport {
            seed: self.seed,
            config_hash: &self.config_hash,
            stamp: self.stamp.as_deref(),
            failures: &self.failures,
            rows: self
                .rows
                .iter()
                .map(|r| JsonRow {
                    scene: &r.scene,
                    mixture: &r.mixture,
                    algo: &r.algo,
                    material: &r.material,
                    mean_abundance: r.mean_abundance,
                    rmse: r.rmse,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&report).expect("report serialises");
        s.push('\n');
        s
    }

    /// Write `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        fs::write(&csv_path, self.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        fs::write(&json_path, self.to_json()).map_err(|e| Error::io(&json_path, e))?;
        Ok(())
    }
}

pub fn write_report(report: &Report, stem: &Path) -> Result<()> {
    report.write(stem)
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("report CSV: {e}"))))
        .collect()
}

/// Rows of a JSON report (as written by [`Report::to_json`]).
pub fn parse_report_json(text: &str) -> Result<Vec<ReportRow>> {
    #[derive(Deserialize)]
    struct Rows {
        rows: Vec<ReportRow>,
    }
    serde_json::from_str::<Rows>(text)
        .map(|r| r.rows)
        .map_err(|e| Error::Format(format!("report JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mixture: &str, algo: &str, material: &str, mean: f64, rmse: f64) -> ReportRow {
        ReportRow {
            scene: "scene1".into(),
            mixture: mixture.into(),
            algo: algo.into(),
            material: material.into(),
            mean_abundance: mean,
            rmse,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(Report::default().to_csv(), "scene,mixture,algo,material,mean_abundance,rmse\n");
    }

    #[test]
    fn four_decimal_formatting() {
        let report = Report {
            rows: vec![row("1", "fcls", "magenta", 0.595_12, 0.080_31)],
            ..Report::default()
        };
        let csv = report.to_csv();
        assert!(csv.ends_with("scene1,1,fcls,magenta,0.5951,0.0803\n"), "{csv}");
        assert!(report.to_json().contains("\"rmse\": 0.0803"));
    }

    #[test]
    fn csv_and_json_agree() {
        let report = Report {
            seed: 7,
            config_hash: "abc".into(),
            rows: vec![
                row("1", "fcls", "magenta", 0.333_333, 0.012_345),
                row("1", "fcls", "cyan", 0.666_667, 0.012_345),
            ],
            ..Report::default()
        };
        let from_csv = parse_report_csv(&report.to_csv()).unwrap();
        let from_json = parse_report_json(&report.to_json()).unwrap();
        assert_eq!(from_csv, from_json);
        let rounded: Vec<ReportRow> = report.rows.iter().map(ReportRow::rounded).collect();
        assert_eq!(from_csv, rounded);
    }

    #[test]
    fn sorting_is_numeric_then_lexical() {
        let mut report = Report {
            rows: vec![
                row("10", "fcls", "a", 0.0, 0.0),
                row("2", "hapke", "a", 0.0, 0.0),
                row("A", "fcls", "a", 0.0, 0.0),
                row("2", "fcls", "a", 0.0, 0.0),
            ],
            ..Report::default()
        };
        report.sort();
        let order: Vec<(&str, &str)> = report.rows.iter().map(|r| (r.mixture.as_str(), r.algo.as_str())).collect();
        assert_eq!(order, [("2", "fcls"), ("2", "hapke"), ("10", "fcls"), ("A", "fcls")]);
    }
}
