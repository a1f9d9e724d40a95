use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Contract(format!("{} predictions for {} ratings", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::Contract("metric over an empty set".into()));
    }
    Ok(())
}

pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check(preds, truths)?;
    Ok(preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check(preds, truths)?;
    let mse = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64;
    Ok(mse.sqrt())
}

/// Error metrics of one prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    /// Whether predictions were clamped to the rating range.
    pub clamped: bool,
    /// Predictions that fell outside the rating range before clamping.
    pub out_of_range: usize,
    /// Scored pairs whose user had no other rated item.
    pub cold_users: usize,
    /// Scored pairs whose item had no other rater.
    pub cold_items: usize,
    pub config_fingerprint: String,
    pub checkpoint_hash: Option<String>,
}

impl MetricsReport {
    /// Panics if `mae > rmse` beyond rounding; that would mean a broken metric.
    pub fn from_predictions(split: &str, preds: &[f64], truths: &[f64]) -> Result<Self> {
        let mae = mae(preds, truths)?;
        let rmse = rmse(preds, truths)?;
        assert!(
            mae <= rmse * (1.0 + 4.0 * f64::EPSILON),
            "MAE {mae} exceeds RMSE {rmse} on split {split}"
        );
        Ok(Self {
            split: split.to_string(),
            mae,
            rmse,
            n: preds.len(),
            clamped: false,
            out_of_range: 0,
            cold_users: 0,
            cold_items: 0,
            config_fingerprint: String::new(),
            checkpoint_hash: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split       {}", self.split);
        let _ = writeln!(s, "n           {}", self.n);
        let _ = writeln!(s, "MAE         {:.6}", self.mae);
        let _ = writeln!(s, "RMSE        {:.6}", self.rmse);
        let _ = writeln!(s, "clamped     {} ({} out of range)", self.clamped, self.out_of_range);
        let _ = writeln!(s, "cold users  {}", self.cold_users);
        let _ = writeln!(s, "cold items  {}", self.cold_items);
        let _ = writeln!(s, "config      {}", self.config_fingerprint);
        if let Some(h) = &self.checkpoint_hash {
            let _ = writeln!(s, "checkpoint  {h}");
        }
        s
    }
}
