use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, Totals};
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use super::{DetectError, DetectResult};

/// Patients whose gmean falls below this in both arms are left out of the
/// totals and the significance test.
pub const EXCLUSION_FLOOR: f64 = 0.30;

/// One patient's outcome; gmeans are fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientResult {
    pub patient: u32,
    pub baseline: f64,
    pub synthetic: f64,
    /// `synthetic - baseline`.
    pub difference: f64,
    pub repeats: usize,
    pub baseline_std: f64,
    pub synthetic_std: f64,
    /// Repeats whose gmean was undefined (a class missing from the test set).
    pub undefined_repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPatient {
    pub patient: u32,
    pub reason: String,
}

/// Counts of differences in fixed-width bins, in percentage points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: f64,
    /// Lower edge of the first bin.
    pub start: f64,
    /// Bin `i` covers `[start + i·width, start + (i+1)·width)`.
    pub counts: Vec<u32>,
}

impl Histogram {
    pub fn new(values: &[f64], width: f64) -> Self {
        if values.is_empty() {
            return Self {
                width,
                start: 0.0,
                counts: Vec::new(),
            };
        }
        let bin = |v: f64| (v / width).floor() as i64;
        let lo = values.iter().map(|&v| bin(v)).min().expect("non-empty");
        let hi = values.iter().map(|&v| bin(v)).max().expect("non-empty");
        let mut counts = vec![0u32; (hi - lo + 1) as usize];
        for &v in values {
            counts[(bin(v) - lo) as usize] += 1;
        }
        Self {
            width,
            start: lo as f64 * width,
            counts,
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start,bin_end,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.start + i as f64 * self.width;
            writeln!(w, "{lo},{},{c}", lo + self.width)?;
        }
        Ok(())
    }

    /// Bar chart with a dashed line at zero.
    pub fn to_svg(&self) -> String {
        let (bar, height, pad) = (16.0, 200.0, 30.0);
        let n = self.counts.len().max(1) as f64;
        let peak = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let w = 2.0 * pad + n * bar;
        let h = height + 2.0 * pad;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        for (i, &c) in self.counts.iter().enumerate() {
            let bh = height * c as f64 / peak;
            let x = pad + i as f64 * bar;
            let lo = self.start + i as f64 * self.width;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{}" height="{bh}" fill="steelblue"><title>[{lo}, {}): {c}</title></rect>"#,
                pad + height - bh,
                bar - 1.0,
                lo + self.width
            );
        }
        if !self.counts.is_empty() {
            let zero = pad + (-self.start / self.width) * bar;
            let _ = writeln!(
                s,
                r#"<line x1="{zero}" y1="{pad}" x2="{zero}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#,
                pad + height
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="12">difference (synthetic - baseline), % per bin</text>"#,
            h - 8.0
        );
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<PatientResult>,
    pub exclusion_floor: f64,
    pub excluded: Vec<u32>,
    pub skipped: Vec<SkippedPatient>,
    /// `None` when every patient was excluded or skipped.
    pub totals: Option<Totals>,
    pub wilcoxon: Option<WilcoxonResult>,
    /// Why `wilcoxon` is absent.
    pub wilcoxon_note: Option<String>,
    /// Differences of the included patients, 1-point bins.
    pub histogram: Histogram,
}

fn round_pp(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

impl ExperimentReport {
    /// Applies the exclusion rule and derives totals, the significance test
    /// and the histogram from `rows`.
    pub fn assemble(
        mut rows: Vec<PatientResult>,
        skipped: Vec<SkippedPatient>,
        exclusion_floor: f64,
    ) -> DetectResult<Self> {
        rows.sort_by_key(|r| r.patient);
        let excluded: Vec<u32> = rows
            .iter()
            .filter(|r| r.baseline < exclusion_floor && r.synthetic < exclusion_floor)
            .map(|r| r.patient)
            .collect();
        let included: Vec<&PatientResult> = rows
            .iter()
            .filter(|r| !excluded.contains(&r.patient))
            .collect();
        let totals = if included.is_empty() {
            None
        } else {
            Some(aggregate(
                &included
                    .iter()
                    .map(|r| (r.baseline, r.synthetic))
                    .collect::<Vec<_>>(),
            )?)
        };
        let diffs: Vec<f64> = included.iter().map(|r| r.difference * 100.0).collect();
        let (wilcoxon, wilcoxon_note) = match wilcoxon_signed_rank(&diffs) {
            Ok(w) => (Some(w), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(Self {
            histogram: Histogram::new(&diffs, 1.0),
            rows,
            exclusion_floor,
            excluded,
            skipped,
            totals,
            wilcoxon,
            wilcoxon_note,
        })
    }

    pub fn included(&self) -> impl Iterator<Item = &PatientResult> {
        self.rows
            .iter()
            .filter(|r| !self.excluded.contains(&r.patient))
    }

    /// Rebuilds the derived fields from the rows and demands exact equality.
    pub fn check_consistency(&self) -> DetectResult<()> {
        for r in &self.rows {
            if (r.synthetic - r.baseline - r.difference).abs() > 1e-12 {
                return Err(DetectError::Inconsistent(format!(
                    "patient {} difference {} != {} - {}",
                    r.patient, r.difference, r.synthetic, r.baseline
                )));
            }
        }
        let again = Self::assemble(
            self.rows.clone(),
            self.skipped.clone(),
            self.exclusion_floor,
        )?;
        if again != *self {
            return Err(DetectError::Inconsistent(
                "totals, exclusions or histogram do not follow from the rows".into(),
            ));
        }
        Ok(())
    }

    /// Per-patient table in percent, excluded patients included.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "patient,baseline,synthetic,difference")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.patient,
                round_pp(r.baseline),
                round_pp(r.synthetic),
                round_pp(r.difference)
            )?;
        }
        if let Some(t) = &self.totals {
            writeln!(
                w,
                "TOTAL,{},{},{}",
                round_pp(t.baseline),
                round_pp(t.synthetic),
                round_pp(t.difference)
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> DetectResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| DetectError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> DetectResult<Self> {
        serde_json::from_str(s).map_err(|e| DetectError::Format(e.to_string()))
    }
}

/// The published per-patient table, one row per patient, in percent.
pub const PUBLISHED_TABLE_CSV: &str = include_str!("../../fixtures/published_table.csv");

#[derive(Debug, Deserialize)]
struct TableRow {
    patient: u32,
    baseline: f64,
    synthetic: f64,
    difference: f64,
}

/// Reads a `patient,baseline,synthetic,difference` table in percent. The
/// difference column is kept as printed rather than recomputed.
pub fn read_table<R: Read>(r: R) -> DetectResult<Vec<PatientResult>> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<TableRow>() {
        let t = rec.map_err(|e| DetectError::Format(e.to_string()))?;
        if ![t.baseline, t.synthetic, t.difference]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(DetectError::Format(format!(
                "patient {} has non-finite values",
                t.patient
            )));
        }
        rows.push(PatientResult {
            patient: t.patient,
            baseline: t.baseline / 100.0,
            synthetic: t.synthetic / 100.0,
            difference: t.difference / 100.0,
            repeats: 0,
            baseline_std: 0.0,
            synthetic_std: 0.0,
            undefined_repeats: 0,
        });
    }
    if rows.is_empty() {
        return Err(DetectError::Format("table has no rows".into()));
    }
    Ok(rows)
}

/// Published aggregate values the table must reproduce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedClaims {
    pub baseline_total: f64,
    pub synthetic_total: f64,
    pub difference: f64,
    pub improved: usize,
    pub degraded: usize,
    /// Threshold for "improved"/"degraded", percentage points.
    pub change_threshold: f64,
    pub p_value: f64,
}

impl Default for PublishedClaims {
    fn default() -> Self {
        Self {
            baseline_total: 74.57,
            synthetic_total: 75.78,
            difference: 1.21,
            improved: 20,
            degraded: 4,
            change_threshold: 1.0,
            p_value: 0.0098,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Percentage points.
    pub totals: f64,
    /// Percentage points.
    pub difference: f64,
    pub p_value: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            totals: 0.15,
            difference: 0.1,
            p_value: 0.003,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The five table checks: both totals, their difference, the improved and
/// degraded counts, and the significance level. Exclusions follow
/// [`EXCLUSION_FLOOR`].
pub fn verify_table(
    rows: Vec<PatientResult>,
    claims: &PublishedClaims,
    tol: &Tolerances,
) -> DetectResult<Vec<Check>> {
    let report = ExperimentReport::assemble(rows, Vec::new(), EXCLUSION_FLOOR)?;
    let totals = report
        .totals
        .ok_or_else(|| DetectError::Empty("every patient was excluded".into()))?;
    let within = |name, got: f64, want: f64, tol: f64| Check {
        name,
        passed: (got - want).abs() <= tol,
        detail: format!("{got:.4} vs {want} (tolerance {tol})"),
    };
    let diffs: Vec<f64> = report.included().map(|r| r.difference * 100.0).collect();
    let up = diffs
        .iter()
        .filter(|&&d| d > claims.change_threshold)
        .count();
    let down = diffs
        .iter()
        .filter(|&&d| d < -claims.change_threshold)
        .count();
    let n = diffs.len();
    let wilcoxon = match &report.wilcoxon {
        Some(w) => within("wilcoxon", w.p_value, claims.p_value, tol.p_value),
        None => Check {
            name: "wilcoxon",
            passed: false,
            detail: report.wilcoxon_note.clone().unwrap_or_default(),
        },
    };
    Ok(vec![
        within(
            "baseline-total",
            totals.baseline * 100.0,
            claims.baseline_total,
            tol.totals,
        ),
        within(
            "synthetic-total",
            totals.synthetic * 100.0,
            claims.synthetic_total,
            tol.totals,
        ),
        within(
            "total-difference",
            totals.difference * 100.0,
            claims.difference,
            tol.difference,
        ),
        Check {
            name: "improved-degraded",
            passed: up == claims.improved && down == claims.degraded,
            detail: format!(
                "{up} of {n} above +{t}%, {down} below -{t}% (expected {} and {})",
                claims.improved,
                claims.degraded,
                t = claims.change_threshold
            ),
        },
        wilcoxon,
    ])
}
