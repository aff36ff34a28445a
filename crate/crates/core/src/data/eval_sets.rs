use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{windows_overlap, DataError, DataResult, EegSample, Segmented};
use crate::seed;

/// Samples per class in each detector training set.
pub const TRAIN_PER_CLASS: usize = 2000;

/// Training and test sets for one target patient and one repeat.
#[derive(Clone, Debug)]
pub struct EvalSets {
    /// Synthetic ictal + real target inter-ictal.
    pub target_train: Vec<EegSample>,
    /// Cross-patient real ictal + the same inter-ictal windows.
    pub baseline_train: Vec<EegSample>,
    /// All non-overlapping target ictal windows and twice as many
    /// inter-ictal windows.
    pub test: Vec<EegSample>,
    pub warnings: Vec<String>,
}

fn draw<R: Rng>(
    pool: &[EegSample],
    n: usize,
    what: &str,
    rng: &mut R,
    warnings: &mut Vec<String>,
) -> DataResult<Vec<EegSample>> {
    if pool.is_empty() {
        return Err(DataError::Invalid(format!("empty {what} pool")));
    }
    if pool.len() >= n {
        return Ok(index::sample(rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect());
    }
    let msg = format!(
        "{what} pool has {} windows, drawing {n} with replacement",
        pool.len()
    );
    warn!("{msg}");
    warnings.push(msg);
    Ok((0..n)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect())
}

/// Builds the target/baseline training sets and the shared test set.
///
/// `target_test` holds the target's non-overlapping windows;
/// `target_train_interictal` its overlapping inter-ictal windows. Training
/// inter-ictal windows never share time with a test window.
pub fn build_eval_sets(
    target_test: &Segmented,
    target_train_interictal: &[EegSample],
    synthetic_pool: &[EegSample],
    cross_patient_ictal: &[EegSample],
    per_class: usize,
    seed: u64,
) -> DataResult<EvalSets> {
    if target_test.ictal.is_empty() {
        return Err(DataError::Invalid(
            "target has no ictal test windows; experiment skipped".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut warnings = Vec::new();

    let n_ictal = target_test.ictal.len();
    let mut inter: Vec<&EegSample> = target_test.interictal.iter().collect();
    inter.shuffle(&mut rng);
    if inter.len() < 2 * n_ictal {
        let msg = format!(
            "only {} inter-ictal test windows for {n_ictal} ictal; ratio below 2:1",
            inter.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    inter.truncate(2 * n_ictal);
    let mut test: Vec<EegSample> = target_test.ictal.clone();
    test.extend(inter.iter().map(|&w| w.clone()));

    let train_pool: Vec<EegSample> = target_train_interictal
        .iter()
        .filter(|w| !test.iter().any(|t| windows_overlap(w, t)))
        .cloned()
        .collect();
    let interictal = draw(
        &train_pool,
        per_class,
        "target inter-ictal",
        &mut rng,
        &mut warnings,
    )?;
    let synthetic = draw(
        synthetic_pool,
        per_class,
        "synthetic ictal",
        &mut rng,
        &mut warnings,
    )?;
    let cross = draw(
        cross_patient_ictal,
        per_class,
        "cross-patient ictal",
        &mut rng,
        &mut warnings,
    )?;

    let mut target_train = synthetic;
    target_train.extend(interictal.iter().cloned());
    let mut baseline_train = cross;
    baseline_train.extend(interictal);
    Ok(EvalSets {
        target_train,
        baseline_train,
        test,
        warnings,
    })
}
