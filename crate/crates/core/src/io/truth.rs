//! Ground-truth abundance tables: CSV with `mixture_id,material,fraction`.

use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums within this of one are accepted exactly.
pub const TABLE_SUM_TOL: f64 = 1e-6;
/// Row sums within this of one are accepted with a warning and renormalised
/// (tables printed with two-decimal percentages).
pub const TABLE_ROUNDING_TOL: f64 = 1e-3;

/// Abundance rows keyed by mixture id, all over the same material list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthTable {
    pub materials: Vec<String>,
    pub mixtures: Vec<(String, Vec<f64>)>,
    /// Rows accepted only after renormalising a rounding error.
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Record {
    mixture_id: String,
    material: String,
    fraction: String,
}

impl TruthTable {
    pub fn ids(&self) -> Vec<&str> {
        self.mixtures.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.mixtures
            .iter()
            .find(|(m, _)| m == id)
            .map(|(_, f)| f.as_slice())
    }

    /// Parse and log any rounding warnings.
    pub fn parse(text: &str) -> Result<Self> {
        let table = Self::parse_silent(text)?;
        for w in &table.warnings {
            warn!("{w}");
        }
        Ok(table)
    }

    /// Parse, keeping rounding warnings in [`TruthTable::warnings`] only.
    pub fn parse_silent(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut records = Vec::new();
        for rec in reader.deserialize::<Record>() {
            records.push(rec.map_err(|e| Error::Format(format!("ground-truth CSV: {e}")))?);
        }

        let mut percent = records.iter().any(|r| r.fraction.ends_with('%'));
        let mut values = Vec::with_capacity(records.len());
        for r in &records {
            let v: f64 = r
                .fraction
                .trim_end_matches('%')
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("fraction '{}' is not a number", r.fraction)))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Format(format!(
                    "mixture {} material {}: negative or non-finite fraction {v}",
                    r.mixture_id, r.material
                )));
            }
            values.push(v);
        }
        // bare numbers above one mean the table is in percent
        percent |= values.iter().any(|&v| v > 1.0);

        let mut table = TruthTable::default();
        for r in &records {
            if !table.materials.contains(&r.material) {
                table.materials.push(r.material.clone());
            }
        }
        let n = table.materials.len();
        for (r, &v) in records.iter().zip(&values) {
            let k = table.materials.iter().position(|m| *m == r.material).unwrap();
            let row = match table.mixtures.iter_mut().find(|(id, _)| *id == r.mixture_id) {
                Some((_, row)) => row,
                None => {
                    table.mixtures.push((r.mixture_id.clone(), vec![0.0; n]));
                    &mut table.mixtures.last_mut().unwrap().1
                }
            };
            row[k] += if percent { v / 100.0 } else { v };
        }
        let mut warnings = Vec::new();
        for (id, row) in &mut table.mixtures {
            let sum: f64 = row.iter().sum();
            let off = (sum - 1.0).abs();
            if off > TABLE_ROUNDING_TOL {
                return Err(Error::Format(format!("mixture {id} fractions sum to {sum}")));
            }
            if off > TABLE_SUM_TOL {
                warnings.push(format!("mixture {id} sums to {sum:.6}; renormalised (table rounding)"));
            }
            if off > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        table.warnings = warnings;
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fractions (not percent), one line per nonzero-or-zero entry.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for (id, row) in &self.mixtures {
            for (material, v) in self.materials.iter().zip(row) {
                writer
                    .serialize(Record {
                        mixture_id: id.clone(),
                        material: material.clone(),
                        fraction: format!("{v}"),
                    })
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

pub fn read_ground_truth(path: &Path) -> Result<TruthTable> {
    TruthTable::read(path)
}
