use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DetectError, DetectResult};

/// Largest sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

/// Fewest non-zero differences the test accepts.
pub const MIN_NONZERO: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Rank sum of the positive differences.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    /// Two-sided.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `|d|`, plus the sizes of tie groups.
fn ranks(abs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut r = vec![0.0; abs.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (r, ties)
}

/// Two-sided p of `w_plus` from the exact null distribution of the given
/// ranks, enumerating all 2^n sign patterns by dynamic programming over
/// doubled (hence integer) ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; total + 1];
    ways[0] = 1.0;
    for &d in &doubled {
        for s in (d..=total).rev() {
            ways[s] += ways[s - d];
        }
    }
    let all: f64 = ways.iter().sum();
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = ways[..=w].iter().sum::<f64>() / all;
    let upper: f64 = ways[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zeros are dropped; tied magnitudes share their average rank. Up to
/// [`EXACT_MAX_N`] non-zero differences use the exact distribution, beyond
/// that the normal approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> DetectResult<WilcoxonResult> {
    signed_rank(differences, None)
}

/// [`wilcoxon_signed_rank`] with the p-value method forced, for comparing
/// the exact and approximate branches on the same data.
pub fn wilcoxon_with_method(
    differences: &[f64],
    method: WilcoxonMethod,
) -> DetectResult<WilcoxonResult> {
    signed_rank(differences, Some(method))
}

fn signed_rank(differences: &[f64], force: Option<WilcoxonMethod>) -> DetectResult<WilcoxonResult> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(DetectError::Numerical("non-finite difference".into()));
    }
    let nz: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            n: 0,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    if nz.len() < MIN_NONZERO {
        return Err(DetectError::Empty(format!(
            "{} non-zero differences, the test needs at least {MIN_NONZERO}",
            nz.len()
        )));
    }
    let n = nz.len();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (r, ties) = ranks(&abs);
    let w_plus: f64 = nz
        .iter()
        .zip(&r)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);

    let exact = match force {
        Some(m) => m == WilcoxonMethod::Exact,
        None => n <= EXACT_MAX_N,
    };
    let (p_value, method) = if exact {
        (exact_p(&r, w_plus), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
        let z = (((w_plus - mean).abs() - 0.5) / var.sqrt()).max(0.0);
        let normal = Normal::standard();
        ((2.0 * normal.sf(z)).min(1.0), WilcoxonMethod::Normal)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        n,
        p_value,
        method,
    })
}
