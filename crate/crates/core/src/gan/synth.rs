use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::arch::{ArchitectureConfig, FULL_LENGTH};
use super::networks::{Generator, GeneratorWeights};
use super::{GanError, GanResult};
use crate::data::{EegSample, Label, Origin};
use crate::seed;
use crate::tensor::{Real, Tensor};

/// Network input for a window: both channels flattened channel-major to
/// `1 × 2048`, block-averaged down to the architecture's length when it is
/// scaled.
pub fn to_signal<T: Real>(sample: &EegSample, arch: &ArchitectureConfig) -> GanResult<Tensor<T>> {
    if sample.values.len() != FULL_LENGTH {
        return Err(GanError::Dimension(format!(
            "sample has {} values, expected {FULL_LENGTH}",
            sample.values.len()
        )));
    }
    let len = arch.length();
    let factor = FULL_LENGTH / len;
    let v: Vec<f64> = sample
        .values
        .chunks_exact(factor)
        .map(|c| c.iter().map(|&x| f64::from(x)).sum::<f64>() / factor as f64)
        .collect();
    Ok(Tensor::from_f64(&[1, len], &v)?)
}

/// Inverse of [`to_signal`]: values at full length, repeating points when the
/// architecture is length-scaled.
pub fn from_signal<T: Real>(signal: &Tensor<T>) -> GanResult<Vec<f32>> {
    let len = signal.len();
    if len == 0 || FULL_LENGTH % len != 0 {
        return Err(GanError::Dimension(format!(
            "signal of {len} points does not divide {FULL_LENGTH}"
        )));
    }
    let factor = FULL_LENGTH / len;
    Ok(signal
        .data()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v.to_f64_lossy() as f32, factor))
        .collect())
}

/// Synthetic ictal window for one inter-ictal input and one noise draw.
/// Identity fields are copied from the input.
pub fn generate(
    g: &GeneratorWeights<f32>,
    interictal: &EegSample,
    noise: &Tensor<f32>,
) -> GanResult<EegSample> {
    let x = to_signal(interictal, &g.arch)?;
    let y = g.run(&x, noise)?;
    Ok(EegSample {
        values: from_signal(&y)?,
        label: Label::Ictal,
        origin: Origin::Synthetic,
        ..interictal.clone()
    })
}

/// `count` synthetic ictal windows from `pool`: inputs are drawn without
/// replacement when the pool is large enough and with replacement otherwise;
/// every window gets its own noise stream seeded by `(seed, index)`.
pub fn synthesize_set(
    g: &GeneratorWeights<f32>,
    pool: &[EegSample],
    count: usize,
    seed: u64,
) -> GanResult<Vec<EegSample>> {
    if pool.is_empty() {
        return Err(GanError::EmptyData("inter-ictal pool".into()));
    }
    if count == 0 {
        return Err(GanError::Config(
            "synthetic count must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng_for(seed, "synth-inputs");
    let picks: Vec<usize> = if count <= pool.len() {
        sample(&mut rng, pool.len(), count).into_vec()
    } else {
        (0..count)
            .map(|_| rng.random_range(0..pool.len()))
            .collect()
    };
    let shape = g.noise_shape();
    let n: usize = shape.iter().product();
    let noise_seed = seed::derive_str(seed, "synth-noise");
    picks
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut r = seed::rng(seed::derive(noise_seed, i as u64));
            let z: Vec<f32> = (0..n).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
            generate(g, &pool[p], &Tensor::new(shape.clone(), z)?)
        })
        .collect()
}
