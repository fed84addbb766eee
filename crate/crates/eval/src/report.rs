//! Per-split and aggregate evaluation reports, serializable as JSON plus a
//! plot-friendly CSV (split index, srcc, plcc).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{plcc, srcc};
use crate::{EvalError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub srcc: f64,
    pub plcc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub srcc: f64,
    pub plcc: f64,
    pub n: usize,
    pub per_split: Vec<SplitResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,srcc,plcc\n");
        for s in &self.per_split {
            out.push_str(&format!("{},{},{}\n", s.split, s.srcc, s.plcc));
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json())?;
        std::fs::write(csv_path, self.to_csv())?;
        Ok(())
    }
}

/// Evaluates a predictor over test splits: per-split SRCC/PLCC on the test
/// ids and their arithmetic means.
pub fn evaluate<F>(
    mut predict: F,
    mos: &[f64],
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<EvalReport>
where
    F: FnMut(usize) -> Result<f64>,
{
    if splits.is_empty() {
        return Err(EvalError::BadInput("no splits".into()));
    }
    let mut per_split = Vec::with_capacity(splits.len());
    let mut total_n = 0;
    for (i, (_, test)) in splits.iter().enumerate() {
        if test.is_empty() {
            return Err(EvalError::BadInput(format!("split {i} has no test items")));
        }
        let mut pred = Vec::with_capacity(test.len());
        let mut truth = Vec::with_capacity(test.len());
        for &id in test {
            pred.push(predict(id)?);
            truth.push(mos[id]);
        }
        per_split.push(SplitResult {
            split: i,
            srcc: srcc(&pred, &truth)?,
            plcc: plcc(&pred, &truth)?,
            n: test.len(),
        });
        total_n += test.len();
    }
    let k = per_split.len() as f64;
    Ok(EvalReport {
        srcc: per_split.iter().map(|s| s.srcc).sum::<f64>() / k,
        plcc: per_split.iter().map(|s| s.plcc).sum::<f64>() / k,
        n: total_n,
        per_split,
    })
}
