//! Conditional least-squares GAN mapping inter-ictal windows to ictal ones.
//!
//! The generator is a 1-D U-net: eight convolution/max-pool blocks encode a
//! `2048 × 1` input to an `8 × 1024` latent code, Gaussian noise of the same
//! shape is appended along the length axis, and eight decoder blocks climb
//! back to `2048 × 1` through a `tanh` head. Seven decoder maps receive
//! `w · e` from the mirrored encoder map, with one learned `w` per level.
//! The discriminator reuses the encoder shape with virtual batch
//! normalisation and ends in a dense layer and a sigmoid. All convolution and
//! dense weights are spectrally normalised and unbiased.
//!
//! Losses, with `D` the sigmoid score:
//!
//! ```text
//! L_D = mean (D(y) - 1)² + mean D(G(x))²
//! L_G = mean (D(G(x)) - 1)² + λ · mean |G(x) - y|
//! ```

mod arch;
mod networks;
mod synth;
mod train;

pub use arch::{ArchitectureConfig, MapShape, ENCODER_CHANNELS, FULL_LENGTH};
pub use networks::{
    Discriminator, DiscriminatorWeights, Generator, GeneratorTrace, GeneratorWeights, Network,
};
pub use synth::{from_signal, generate, synthesize_set, to_signal};
pub use train::{
    adversarial_step, GanTrainConfig, LogRow, StepLosses, Trainer, TrainingData, LOG_HEADER,
};

use thiserror::Error;

use crate::tensor::checkpoint::CheckpointError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("no data: {0}")]
    EmptyData(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type GanResult<T> = std::result::Result<T, GanError>;

/// Default weight of the L1 term.
pub const LAMBDA: f64 = 100.0;

/// `mean (r - 1)² + mean f²` over discriminator scores.
pub fn d_loss(real_scores: &[f64], fake_scores: &[f64]) -> GanResult<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(GanError::EmptyData("discriminator scores".into()));
    }
    let r = real_scores
        .iter()
        .map(|s| (s - 1.0) * (s - 1.0))
        .sum::<f64>()
        / real_scores.len() as f64;
    let f = fake_scores.iter().map(|s| s * s).sum::<f64>() / fake_scores.len() as f64;
    Ok(r + f)
}

/// `mean (f - 1)² + λ · mean |generated - reference|`.
pub fn g_loss(
    fake_scores: &[f64],
    generated: &[f64],
    reference: &[f64],
    lambda: f64,
) -> GanResult<f64> {
    if fake_scores.is_empty() || generated.is_empty() {
        return Err(GanError::EmptyData("generator scores".into()));
    }
    if generated.len() != reference.len() {
        return Err(GanError::Dimension(format!(
            "generated has {} values, reference {}",
            generated.len(),
            reference.len()
        )));
    }
    let adv = fake_scores
        .iter()
        .map(|s| (s - 1.0) * (s - 1.0))
        .sum::<f64>()
        / fake_scores.len() as f64;
    let l1 = generated
        .iter()
        .zip(reference)
        .map(|(g, r)| (g - r).abs())
        .sum::<f64>()
        / generated.len() as f64;
    Ok(adv + lambda * l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(d_loss(&[1.0; 4], &[0.0; 4]).unwrap(), 0.0);
        assert_eq!(d_loss(&[0.0; 4], &[1.0; 4]).unwrap(), 2.0);
        assert_eq!(d_loss(&[0.5; 4], &[0.5; 4]).unwrap(), 0.5);
        let y = [0.3, -0.2, 0.1];
        assert_eq!(g_loss(&[1.0; 2], &y, &y, LAMBDA).unwrap(), 0.0);
        assert_eq!(g_loss(&[0.0; 2], &y, &y, LAMBDA).unwrap(), 1.0);
        let g = [0.01, 0.01];
        assert!((g_loss(&[1.0], &g, &[0.0, 0.0], LAMBDA).unwrap() - 1.0).abs() < 1e-12);
        assert!(d_loss(&[], &[1.0]).is_err());
        assert!(g_loss(&[1.0], &[0.0], &[0.0, 1.0], 1.0).is_err());
    }
}
