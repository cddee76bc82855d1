use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, EvalError, Mislabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub label: String,
    /// `None` when the class had no queries.
    pub recall: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub per_class: Vec<ClassRecall>,
    pub mislabels: Vec<Mislabel>,
    pub timings_us: BTreeMap<String, u64>,
}

pub fn report(m: &ConfusionMatrix, timings: &BTreeMap<String, u64>) -> Result<Report, EvalError> {
    let accuracy = m.accuracy()?;
    let (correct, total) = m.accuracy_ratio();
    let per_class = m
        .classes()
        .iter()
        .enumerate()
        .map(|(r, label)| {
            let (hit, support) = m.row_recall(r);
            ClassRecall {
                label: label.clone(),
                recall: (support > 0).then(|| hit as f64 / support as f64),
                support,
            }
        })
        .collect();
    Ok(Report {
        accuracy,
        correct,
        total,
        per_class,
        mislabels: m.mislabels(),
        timings_us: timings.clone(),
    })
}

/// Writes `confusion.csv` and `report.json` into `dir`.
pub fn write_report(
    m: &ConfusionMatrix,
    timings: &BTreeMap<String, u64>,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), EvalError> {
    let dir = dir.as_ref();
    let r = report(m, timings)?;
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("confusion.csv");
    let json_path = dir.join("report.json");
    fs::write(&csv_path, m.to_csv())?;
    let json = serde_json::to_string_pretty(&r).expect("report is plain data");
    fs::write(&json_path, json + "\n")?;
    Ok((csv_path, json_path))
}
