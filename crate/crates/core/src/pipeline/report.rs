use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::ransac::RobustFitResult;

/// One image of a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackRow {
    pub scene_id: String,
    pub rmse_before: Option<f64>,
    pub rmse_after: Option<f64>,
    pub inliers: Option<usize>,
    pub model_kind: Option<ModelKind>,
    /// Set when the job failed; such rows carry no statistics.
    pub error: Option<String>,
}

impl StackRow {
    pub fn success(scene_id: impl Into<String>, fit: &RobustFitResult) -> Self {
        Self {
            scene_id: scene_id.into(),
            rmse_before: Some(fit.report.rmse_before),
            rmse_after: Some(fit.report.rmse_after),
            inliers: Some(fit.report.inlier_count),
            model_kind: Some(fit.model.kind()),
            error: None,
        }
    }

    pub fn failure(scene_id: impl Into<String>, err: &Error) -> Self {
        Self {
            scene_id: scene_id.into(),
            rmse_before: None,
            rmse_after: None,
            inliers: None,
            model_kind: None,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.rmse_before.is_some() && self.rmse_after.is_some()
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_dev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std_dev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub rows: Vec<StackRow>,
    pub before: Option<Summary>,
    pub after: Option<Summary>,
    pub succeeded: usize,
    pub failed: usize,
}

impl StackReport {
    pub fn from_rows(rows: Vec<StackRow>) -> Self {
        let ok: Vec<&StackRow> = rows.iter().filter(|r| r.is_ok()).collect();
        let before: Vec<f64> = ok.iter().filter_map(|r| r.rmse_before).collect();
        let after: Vec<f64> = ok.iter().filter_map(|r| r.rmse_after).collect();
        Self {
            before: Summary::of(&before),
            after: Summary::of(&after),
            succeeded: ok.len(),
            failed: rows.len() - ok.len(),
            rows,
        }
    }

    /// Aggregates agree with a recomputation from the rows.
    pub fn is_consistent(&self) -> bool {
        *self == Self::from_rows(self.rows.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
        if !report.is_consistent() {
            return Err(Error::invalid("report aggregates disagree with its rows").in_file(path));
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::from(e).in_file(path))
    }

    /// Fixed-width table with `Avg` and `Std Dev` footer rows, three
    /// decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.scene_id.chars().count())
            .chain([7])
            .max()
            .unwrap_or(7);
        let num = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>11}  {:>10}  {:>7}  Model", "Image", "RMSE Before", "RMSE After", "Inliers");
        for r in &self.rows {
            match &r.error {
                Some(e) => {
                    let _ = writeln!(out, "{:<width$}  error: {e}", r.scene_id);
                }
                None => {
                    let inliers = r.inliers.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
                    let kind = r.model_kind.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        out,
                        "{:<width$}  {:>11}  {:>10}  {:>7}  {kind}",
                        r.scene_id,
                        num(r.rmse_before),
                        num(r.rmse_after),
                        inliers
                    );
                }
            }
        }
        for (label, pick) in [("Avg", 0), ("Std Dev", 1)] {
            let get = |s: Option<Summary>| s.map(|s| if pick == 0 { s.mean } else { s.std_dev });
            let _ = writeln!(out, "{label:<width$}  {:>11}  {:>10}", num(get(self.before)), num(get(self.after)));
        }
        out
    }

    /// Same layout as CSV with full-precision numbers.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["image", "rmse_before", "rmse_after", "inliers", "model", "error"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scene_id.clone(),
                opt(r.rmse_before),
                opt(r.rmse_after),
                r.inliers.map(|n| n.to_string()).unwrap_or_default(),
                r.model_kind.map(|k| k.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let b = self.before;
        let a = self.after;
        w.write_record(["Avg".into(), opt(b.map(|s| s.mean)), opt(a.map(|s| s.mean)), String::new(), String::new(), String::new()])
            .map_err(csv_err)?;
        w.write_record([
            "Std Dev".into(),
            opt(b.map(|s| s.std_dev)),
            opt(a.map(|s| s.std_dev)),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}
