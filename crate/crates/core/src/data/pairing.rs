use log::warn;
use rand::Rng;

use super::{
    segment, DataError, DataResult, Dataset, EegSample, PairedExample, Purpose, Segmented,
};
use crate::seed;

/// Pairs every ictal window of each listed patient with an inter-ictal
/// window of the same patient drawn uniformly with replacement.
///
/// Patients lacking either class are skipped with a warning, returned
/// alongside the pairs.
pub fn pair(
    dataset: &Dataset,
    patients: &[u32],
    seed: u64,
) -> DataResult<(Vec<PairedExample>, Vec<String>)> {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for &pid in patients {
        let seg = segment(dataset.patient(pid)?, Purpose::GanTrain);
        warnings.extend(seg.warnings.iter().cloned());
        match pair_windows(&seg, seed::derive(seed, pid as u64)) {
            Some(p) => pairs.extend(p),
            None => {
                let msg = format!(
                    "patient {pid} excluded from pairing: {} ictal, {} inter-ictal windows",
                    seg.ictal.len(),
                    seg.interictal.len()
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok((pairs, warnings))
}

fn pair_windows(seg: &Segmented, seed: u64) -> Option<Vec<PairedExample>> {
    if seg.ictal.is_empty() || seg.interictal.is_empty() {
        return None;
    }
    let mut rng = seed::rng(seed);
    Some(
        seg.ictal
            .iter()
            .map(|target| PairedExample {
                input: seg.interictal[rng.random_range(0..seg.interictal.len())].clone(),
                target: target.clone(),
            })
            .collect(),
    )
}

/// Leave-one-patient-out split for one target.
#[derive(Clone, Debug)]
pub struct LopoSplit {
    pub target: u32,
    /// Pairs from every other patient.
    pub train: Vec<PairedExample>,
    /// All windows of the target patient.
    pub holdout: Vec<EegSample>,
    pub warnings: Vec<String>,
}

pub fn lopo_split(dataset: &Dataset, target: u32, seed: u64) -> DataResult<LopoSplit> {
    let tp = dataset.patient(target)?;
    let others: Vec<u32> = dataset
        .patient_ids()
        .into_iter()
        .filter(|&p| p != target)
        .collect();
    let (train, mut warnings) = pair(dataset, &others, seed)?;
    if train.is_empty() {
        return Err(DataError::Invalid(format!(
            "no training pairs outside patient {target}"
        )));
    }
    let seg = segment(tp, Purpose::GanTrain);
    warnings.extend(seg.warnings);
    let mut holdout = seg.ictal;
    holdout.extend(seg.interictal);
    Ok(LopoSplit {
        target,
        train,
        holdout,
        warnings,
    })
}
