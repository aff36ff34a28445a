use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RandomForest, TrainingSet};
use super::metrics::{gmean, ConfusionCounts};
use super::report::{ExperimentReport, PatientResult, SkippedPatient, EXCLUSION_FLOOR};
use super::{DetectError, DetectResult};
use crate::data::{build_eval_sets, segment, Dataset, EegSample, Label, Purpose, TRAIN_PER_CLASS};
use crate::features::{FeatureExtractor, FEATURE_COUNT};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub repeats: usize,
    /// Windows per class in each detector training set.
    pub per_class: usize,
    pub seed: u64,
    pub exclusion_floor: f64,
    /// Forest settings; its seed is replaced per repeat and arm.
    pub forest: ForestConfig,
    /// Worker threads across patients; results do not depend on it.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            repeats: 15,
            per_class: TRAIN_PER_CLASS,
            seed: 0,
            exclusion_floor: EXCLUSION_FLOOR,
            forest: ForestConfig::default(),
            jobs: 1,
        }
    }
}

/// Gmeans of one repeat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepeatOutcome {
    pub baseline: f64,
    pub synthetic: f64,
    pub undefined: bool,
}

/// Memoises features by window content and identity; synthetic windows share
/// identity fields with their inputs, so content is part of the key.
#[derive(Default)]
struct FeatureCache {
    extractor: FeatureExtractor,
    map: HashMap<u64, Vec<f64>>,
}

impl FeatureCache {
    fn key(s: &EegSample) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &s.values {
            v.to_bits().hash(&mut h);
        }
        (
            s.patient_id,
            s.recording_id,
            s.window_start.to_bits(),
            s.label.code(),
            s.origin.code(),
        )
            .hash(&mut h);
        h.finish()
    }

    fn matrix(&mut self, samples: &[EegSample]) -> DetectResult<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len() * FEATURE_COUNT);
        for s in samples {
            let k = Self::key(s);
            if !self.map.contains_key(&k) {
                let f = self.extractor.extract(s)?;
                self.map.insert(k, f.values);
            }
            out.extend_from_slice(&self.map[&k]);
        }
        Ok(out)
    }
}

fn labels(samples: &[EegSample]) -> Vec<bool> {
    samples.iter().map(|s| s.label == Label::Ictal).collect()
}

fn arm_gmean(
    cache: &mut FeatureCache,
    train: &[EegSample],
    test_x: &[f64],
    test_y: &[bool],
    forest: &ForestConfig,
) -> DetectResult<(f64, bool)> {
    let x = cache.matrix(train)?;
    let y = labels(train);
    let f = RandomForest::fit(TrainingSet::new(&x, &y, FEATURE_COUNT)?, forest)?;
    let predicted = test_x
        .chunks_exact(FEATURE_COUNT)
        .map(|row| f.predict(row))
        .collect::<DetectResult<Vec<bool>>>()?;
    let g = gmean(&ConfusionCounts::from_predictions(test_y, &predicted)?);
    Ok((g.value, g.undefined))
}

/// All repeats of both arms for one target patient.
pub fn evaluate_patient(
    dataset: &Dataset,
    patient: u32,
    synthetic_pool: &[EegSample],
    cfg: &ExperimentConfig,
) -> DetectResult<Vec<RepeatOutcome>> {
    let record = dataset.patient(patient)?;
    let test_windows = segment(record, Purpose::Test);
    let train_interictal = segment(record, Purpose::DetectorTrain).interictal;
    let cross: Vec<EegSample> = dataset
        .patients
        .iter()
        .filter(|p| p.id != patient)
        .flat_map(|p| segment(p, Purpose::DetectorTrain).ictal)
        .collect();
    let mut cache = FeatureCache::default();
    let patient_seed = seed::derive(cfg.seed, u64::from(patient));
    (0..cfg.repeats)
        .map(|r| {
            let rs = seed::derive(patient_seed, r as u64);
            let sets = build_eval_sets(
                &test_windows,
                &train_interictal,
                synthetic_pool,
                &cross,
                cfg.per_class,
                seed::derive_str(rs, "sets"),
            )?;
            let test_x = cache.matrix(&sets.test)?;
            let test_y = labels(&sets.test);
            let forest = |arm: &str| ForestConfig {
                seed: seed::derive_str(rs, arm),
                ..cfg.forest.clone()
            };
            let (baseline, ub) = arm_gmean(
                &mut cache,
                &sets.baseline_train,
                &test_x,
                &test_y,
                &forest("baseline"),
            )?;
            let (synthetic, us) = arm_gmean(
                &mut cache,
                &sets.target_train,
                &test_x,
                &test_y,
                &forest("synthetic"),
            )?;
            info!("patient {patient} repeat {r}: baseline {baseline:.4} synthetic {synthetic:.4}");
            Ok(RepeatOutcome {
                baseline,
                synthetic,
                undefined: ub || us,
            })
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summarises repeats by the arithmetic mean of gmeans and their sample
/// standard deviation.
pub fn summarise(patient: u32, outcomes: &[RepeatOutcome]) -> PatientResult {
    let b: Vec<f64> = outcomes.iter().map(|o| o.baseline).collect();
    let s: Vec<f64> = outcomes.iter().map(|o| o.synthetic).collect();
    let (baseline, baseline_std) = mean_std(&b);
    let (synthetic, synthetic_std) = mean_std(&s);
    PatientResult {
        patient,
        baseline,
        synthetic,
        difference: synthetic - baseline,
        repeats: outcomes.len(),
        baseline_std,
        synthetic_std,
        undefined_repeats: outcomes.iter().filter(|o| o.undefined).count(),
    }
}

/// Runs both detector arms for every patient of `dataset` against the
/// synthetic pool generated for it. Patients without a pool or whose sets
/// cannot be built are skipped and listed in the report.
pub fn run_experiment(
    dataset: &Dataset,
    synthetic: &BTreeMap<u32, Vec<EegSample>>,
    cfg: &ExperimentConfig,
) -> DetectResult<ExperimentReport> {
    if cfg.repeats == 0 || cfg.per_class == 0 {
        return Err(DetectError::Config(
            "repeats and per-class size must be positive".into(),
        ));
    }
    let ids = dataset.patient_ids();
    let run = |&id: &u32| -> Result<PatientResult, SkippedPatient> {
        let skip = |reason: String| SkippedPatient {
            patient: id,
            reason,
        };
        let pool = synthetic
            .get(&id)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| skip("no synthetic pool".into()))?;
        let outcomes = evaluate_patient(dataset, id, pool, cfg).map_err(|e| skip(e.to_string()))?;
        Ok(summarise(id, &outcomes))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| DetectError::Config(e.to_string()))?;
    let results: Vec<Result<PatientResult, SkippedPatient>> =
        pool.install(|| ids.par_iter().map(run).collect());
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(s) => skipped.push(s),
        }
    }
    ExperimentReport::assemble(rows, skipped, cfg.exclusion_floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let o = [
            RepeatOutcome {
                baseline: 0.5,
                synthetic: 0.6,
                undefined: false,
            },
            RepeatOutcome {
                baseline: 0.7,
                synthetic: 0.6,
                undefined: true,
            },
        ];
        let r = summarise(3, &o);
        assert!((r.baseline - 0.6).abs() < 1e-15);
        assert_eq!(r.synthetic, 0.6);
        assert!((r.baseline_std - 0.2f64.hypot(0.0) / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.synthetic_std, 0.0);
        assert_eq!(r.undefined_repeats, 1);
    }
}
