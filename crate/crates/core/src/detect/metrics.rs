use serde::{Deserialize, Serialize};

use super::{DetectError, DetectResult};

/// Confusion counts with ictal as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> DetectResult<Self> {
        if truth.len() != predicted.len() {
            return Err(DetectError::Dimension(format!(
                "{} labels, {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        Ok(c)
    }

    pub fn sensitivity(&self) -> Option<f64> {
        let n = self.tp + self.fn_;
        (n > 0).then(|| self.tp as f64 / n as f64)
    }

    pub fn specificity(&self) -> Option<f64> {
        let n = self.tn + self.fp;
        (n > 0).then(|| self.tn as f64 / n as f64)
    }
}

/// Geometric mean of sensitivity and specificity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmean {
    pub value: f64,
    /// Set when a class was absent from the test set; `value` is then 0.
    pub undefined: bool,
}

pub fn gmean(c: &ConfusionCounts) -> Gmean {
    match (c.sensitivity(), c.specificity()) {
        (Some(se), Some(sp)) => Gmean {
            value: (se * sp).sqrt(),
            undefined: false,
        },
        _ => Gmean {
            value: 0.0,
            undefined: true,
        },
    }
}

/// Geometric mean of non-negative values; `(0, true)` when any is zero.
pub fn geometric_mean(values: &[f64]) -> DetectResult<(f64, bool)> {
    if values.is_empty() {
        return Err(DetectError::Empty("no values to aggregate".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DetectError::Numerical(
            "aggregate needs finite non-negative values".into(),
        ));
    }
    if values.contains(&0.0) {
        return Ok((0.0, true));
    }
    // Equal inputs must come back exactly, which the log-mean does not
    // guarantee.
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], false));
    }
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    Ok((mean_log.exp(), false))
}

/// Per-arm totals over the included patients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub baseline: f64,
    pub synthetic: f64,
    /// `synthetic - baseline`.
    pub difference: f64,
    /// Some included gmean was zero, forcing its arm's total to zero.
    pub zero_flag: bool,
}

/// Totals over `(baseline, synthetic)` pairs of the included patients.
pub fn aggregate(pairs: &[(f64, f64)]) -> DetectResult<Totals> {
    let base: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let synth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (b, zb) = geometric_mean(&base)?;
    let (s, zs) = geometric_mean(&synth)?;
    Ok(Totals {
        baseline: b,
        synthetic: s,
        difference: s - b,
        zero_flag: zb || zs,
    })
}
