//! The 108-feature extractor: per electrode, wavelet-domain sample,
//! permutation and histogram entropies plus Welch band powers.
//!
//! Canonical order per electrode (54 values):
//!
//! 1. sample entropy of details 6 and 7 at `k` = 0.20, 0.35 (4)
//! 2. permutation entropy of details 3..7 at orders 3, 5, 7 (15)
//! 3. Shannon, Rényi and Tsallis entropy of details 3..7 and the raw
//!    signal (18)
//! 4. total power (1)
//! 5. absolute and relative power in the eight bands of [`BANDS`] (16)
//!
//! Electrode F7T3 comes first, then F8T4.

mod dwt;
mod entropy;
mod spectral;

use std::io::Write;
use std::sync::OnceLock;

use thiserror::Error;

pub use dwt::{dwt, idwt, WaveletDecomposition, DB4};
pub use entropy::{
    distribution_entropies, histogram_probabilities, permutation_entropy, sample_entropy,
    sample_entropy_brute_force, sample_entropy_cap, std_dev, DistributionEntropies, SampleEntropy,
    HISTOGRAM_BINS,
};
pub use spectral::{band_power, Band, Psd, Welch, BANDS, OVERLAP, SEGMENT};

use crate::data::{EegSample, CHANNELS, CHANNEL_NAMES, SAMPLE_RATE};

pub const DWT_LEVELS: usize = 7;
pub const EMBEDDING_DIM: usize = 2;
pub const SAMPEN_LEVELS: [usize; 2] = [6, 7];
pub const SAMPEN_K: [f64; 2] = [0.2, 0.35];
pub const PERMEN_LEVELS: [usize; 5] = [3, 4, 5, 6, 7];
pub const PERMEN_ORDERS: [usize; 3] = [3, 5, 7];
pub const FEATURES_PER_ELECTRODE: usize = 54;
pub const FEATURE_COUNT: usize = FEATURES_PER_ELECTRODE * CHANNELS;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type FeatureResult<T> = std::result::Result<T, FeatureError>;

/// What the wavelet-level sample entropy runs on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleEntropyInput {
    /// The detail coefficient vector itself (16 and 8 points).
    #[default]
    Coefficients,
    /// The subband signal reconstructed from that level alone.
    ReconstructedSubband,
}

fn electrode_names(electrode: &str) -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURES_PER_ELECTRODE);
    for level in SAMPEN_LEVELS {
        for k in SAMPEN_K {
            names.push(format!("{electrode}_sampen_d{level}_k{k:.2}"));
        }
    }
    for level in PERMEN_LEVELS {
        for n in PERMEN_ORDERS {
            names.push(format!("{electrode}_permen_d{level}_n{n}"));
        }
    }
    let sources: Vec<String> = PERMEN_LEVELS
        .iter()
        .map(|l| format!("d{l}"))
        .chain(std::iter::once("raw".to_string()))
        .collect();
    for src in &sources {
        for kind in ["shannon", "renyi", "tsallis"] {
            names.push(format!("{electrode}_{kind}_{src}"));
        }
    }
    names.push(format!("{electrode}_power_total"));
    for band in BANDS {
        names.push(format!("{electrode}_power_abs_{}", band.name));
        names.push(format!("{electrode}_power_rel_{}", band.name));
    }
    names
}

/// The 108 feature names in canonical order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        CHANNEL_NAMES
            .iter()
            .flat_map(|e| electrode_names(e))
            .collect()
    })
}

/// Feature values in the order of [`feature_names`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Constituent computations that fell back to a cap or default.
    pub warnings: u32,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Reusable extractor (holds the FFT plan).
pub struct FeatureExtractor {
    welch: Welch,
    pub sampen_input: SampleEntropyInput,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(SampleEntropyInput::default())
    }
}

impl FeatureExtractor {
    pub fn new(sampen_input: SampleEntropyInput) -> Self {
        Self {
            welch: Welch::new(SAMPLE_RATE as f64),
            sampen_input,
        }
    }

    fn electrode(&self, x: &[f64], out: &mut Vec<f64>, warnings: &mut u32) -> FeatureResult<()> {
        let dec = dwt(x, DWT_LEVELS)?;
        for level in SAMPEN_LEVELS {
            let series = match self.sampen_input {
                SampleEntropyInput::Coefficients => dec.detail(level).to_vec(),
                SampleEntropyInput::ReconstructedSubband => {
                    let mut only = WaveletDecomposition {
                        details: dec.details.iter().map(|d| vec![0.0; d.len()]).collect(),
                        approximation: vec![0.0; dec.approximation.len()],
                    };
                    only.details[level - 1] = dec.detail(level).to_vec();
                    idwt(&only)?
                }
            };
            let sd = std_dev(&series);
            for k in SAMPEN_K {
                let s = sample_entropy(&series, EMBEDDING_DIM, k * sd);
                *warnings += s.capped as u32;
                out.push(s.value);
            }
        }
        for level in PERMEN_LEVELS {
            for n in PERMEN_ORDERS {
                match permutation_entropy(dec.detail(level), n) {
                    Some(v) => out.push(v),
                    None => {
                        *warnings += 1;
                        out.push(0.0);
                    }
                }
            }
        }
        for src in PERMEN_LEVELS
            .iter()
            .map(|&l| dec.detail(l))
            .chain(std::iter::once(x))
        {
            let e = distribution_entropies(src);
            out.extend([e.shannon, e.renyi, e.tsallis]);
        }
        let psd = self.welch.psd(x)?;
        out.push(psd.integrate(0.0, psd.nyquist())?);
        for band in BANDS {
            let (abs, rel) = band_power(&psd, (band.lo, band.hi))?;
            out.extend([abs, rel]);
        }
        Ok(())
    }

    /// Extracts the 108 features of one window. Pure: metadata is ignored.
    pub fn extract(&self, sample: &EegSample) -> FeatureResult<FeatureVector> {
        let points = sample.points();
        if sample.values.len() != CHANNELS * points || points % (1 << DWT_LEVELS) != 0 {
            return Err(FeatureError::Dimension(format!(
                "sample of {} values cannot be split into {CHANNELS} channels of 2^{DWT_LEVELS}-divisible length",
                sample.values.len()
            )));
        }
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        let mut warnings = 0;
        for c in 0..CHANNELS {
            let x: Vec<f64> = sample.channel(c).iter().map(|&v| v as f64).collect();
            self.electrode(&x, &mut values, &mut warnings)?;
        }
        debug_assert_eq!(values.len(), FEATURE_COUNT);
        Ok(FeatureVector { values, warnings })
    }
}

pub fn extract_features(sample: &EegSample) -> FeatureResult<FeatureVector> {
    FeatureExtractor::default().extract(sample)
}

/// Writes a feature matrix with a header of metadata columns then the 108
/// feature names. Floats use the shortest round-trip representation.
pub fn write_feature_csv<W: Write>(
    mut w: W,
    rows: &[(&EegSample, &FeatureVector)],
) -> FeatureResult<()> {
    write!(w, "patient,recording,window_start,label,origin")?;
    for n in feature_names() {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (s, f) in rows {
        write!(
            w,
            "{},{},{},{},{}",
            s.patient_id,
            s.recording_id,
            s.window_start,
            s.label,
            s.origin.as_str()
        )?;
        for v in &f.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Origin, WINDOW_POINTS};

    fn sample(values: Vec<f32>) -> EegSample {
        EegSample {
            values,
            label: Label::Interictal,
            origin: Origin::Real,
            patient_id: 1,
            recording_id: 1,
            window_start: 0.0,
            scale: 1.0,
        }
    }

    #[test]
    fn names_are_unique_and_counted() {
        let names = feature_names();
        assert_eq!(names.len(), 108);
        let mut sorted = names.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 108);
        assert_eq!(names[0], "F7T3_sampen_d6_k0.20");
        assert_eq!(names[54], "F8T4_sampen_d6_k0.20");
        assert_eq!(names[53], "F7T3_power_rel_b12-13");
    }

    #[test]
    fn constant_sample_has_zero_entropies_and_power() {
        let f = extract_features(&sample(vec![0.5; 2 * WINDOW_POINTS])).unwrap();
        for (name, v) in feature_names().iter().zip(&f.values) {
            assert!(v.is_finite(), "{name}");
            if name.contains("en_")
                || name.contains("shannon")
                || name.contains("renyi")
                || name.contains("tsallis")
            {
                assert_eq!(*v, 0.0, "{name}");
            }
            if name.contains("power") {
                assert!(v.abs() < 1e-12, "{name} = {v}");
            }
        }
    }

    #[test]
    fn metadata_does_not_change_features() {
        let vals: Vec<f32> = (0..2 * WINDOW_POINTS)
            .map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0)
            .collect();
        let a = sample(vals.clone());
        let mut b = sample(vals);
        b.patient_id = 99;
        b.window_start = 123.0;
        b.label = Label::Ictal;
        assert_eq!(extract_features(&a).unwrap(), extract_features(&b).unwrap());
    }
}
