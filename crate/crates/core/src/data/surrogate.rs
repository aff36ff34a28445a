use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{
    Dataset, Interval, Label, PatientRecord, Recording, CHANNELS, CHANNEL_NAMES, SAMPLE_RATE,
};
use crate::seed;

/// Parameters of the synthetic EEG model.
///
/// Background is `1/f^β` noise plus a 10 Hz alpha rhythm. Seizures add an
/// amplitude-modulated sinusoid at a per-patient frequency in the
/// delta/theta range, `burst_amplitude` times the background RMS.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub seed: u64,
    pub patients: usize,
    pub recordings_per_patient: usize,
    pub recording_seconds: u32,
    pub seizures_per_recording: usize,
    /// Inclusive bounds on seizure length in whole seconds.
    pub seizure_seconds: (u32, u32),
    /// Bounds of the per-patient ictal rhythm in Hz.
    pub ictal_frequency: (f64, f64),
    pub burst_amplitude: f64,
    pub background_exponent: f64,
    /// Alpha amplitude relative to the background RMS.
    pub alpha_amplitude: f64,
    /// Background RMS in µV.
    pub background_uv: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            patients: 4,
            recordings_per_patient: 1,
            recording_seconds: 3600,
            seizures_per_recording: 4,
            seizure_seconds: (40, 90),
            ictal_frequency: (0.5, 7.0),
            burst_amplitude: 4.0,
            background_exponent: 1.0,
            alpha_amplitude: 0.5,
            background_uv: 20.0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.ictal_frequency;
        if !(0.5..=7.0).contains(&lo) || !(0.5..=7.0).contains(&hi) || lo > hi {
            return Err(format!(
                "ictal frequency range [{lo}, {hi}] must lie within [0.5, 7] Hz"
            ));
        }
        let (a, b) = self.seizure_seconds;
        if a < 4 || a > b {
            return Err(format!("seizure length range [{a}, {b}] s is invalid"));
        }
        if self.patients == 0 || self.recordings_per_patient == 0 {
            return Err("need at least one patient and one recording".into());
        }
        let slot = self.recording_seconds as usize / self.seizures_per_recording.max(1);
        if self.seizures_per_recording > 0 && slot < b as usize + 10 {
            return Err(format!(
                "{} seizures of up to {b} s do not fit in {} s",
                self.seizures_per_recording, self.recording_seconds
            ));
        }
        if !(self.burst_amplitude > 0.0 && self.background_uv > 0.0) {
            return Err("amplitudes must be positive".into());
        }
        Ok(())
    }
}

/// Unit-RMS `1/f^β` noise shaped in the frequency domain.
fn coloured_noise<R: Rng>(
    n: usize,
    beta: f64,
    rng: &mut R,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = SAMPLE_RATE as f64 / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *c *= if bin == 0 {
            0.0
        } else {
            (bin as f64 * df).powf(-beta / 2.0)
        };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.into_iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

pub fn surrogate_generate(cfg: &SurrogateConfig) -> Dataset {
    let mut planner = FftPlanner::new();
    let fs = SAMPLE_RATE as f64;
    let n = cfg.recording_seconds as usize * SAMPLE_RATE as usize;
    let mut patients = Vec::with_capacity(cfg.patients);
    for p in 0..cfg.patients {
        let pid = p as u32 + 1;
        let mut rng = seed::rng_for(cfg.seed, &format!("surrogate/patient/{pid}"));
        let freq = rng.random_range(cfg.ictal_frequency.0..=cfg.ictal_frequency.1);
        let mut recordings = Vec::with_capacity(cfg.recordings_per_patient);
        for r in 0..cfg.recordings_per_patient {
            let mut channels = Vec::with_capacity(CHANNELS);
            for _ in 0..CHANNELS {
                let mut bg = coloured_noise(n, cfg.background_exponent, &mut rng, &mut planner);
                let (af, ap, mp) = (
                    rng.random_range(9.5..10.5),
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.0..2.0 * PI),
                );
                for (i, v) in bg.iter_mut().enumerate() {
                    let t = i as f64 / fs;
                    let env = 1.0 + 0.5 * (2.0 * PI * 0.05 * t + mp).sin();
                    *v += cfg.alpha_amplitude * env * (2.0 * PI * af * t + ap).sin();
                }
                channels.push(bg);
            }

            let mut intervals = Vec::new();
            let k = cfg.seizures_per_recording;
            if k > 0 {
                let slot = cfg.recording_seconds / k as u32;
                for s in 0..k as u32 {
                    let dur = rng.random_range(cfg.seizure_seconds.0..=cfg.seizure_seconds.1);
                    let start = s * slot + rng.random_range(5..=slot - dur - 5);
                    intervals.push(Interval {
                        start: start as f64,
                        end: (start + dur) as f64,
                        label: Label::Ictal,
                    });
                    let f = freq * rng.random_range(0.95..1.05);
                    let mod_f = rng.random_range(0.1..0.4);
                    let mod_p = rng.random_range(0.0..2.0 * PI);
                    for ch in channels.iter_mut() {
                        let phase = rng.random_range(0.0..2.0 * PI);
                        let gain = cfg.burst_amplitude * rng.random_range(0.8..1.2);
                        let (a, b) = (
                            start as usize * SAMPLE_RATE as usize,
                            (start + dur) as usize * SAMPLE_RATE as usize,
                        );
                        for (i, v) in ch[a..b].iter_mut().enumerate() {
                            let t = i as f64 / fs;
                            let env = 0.75 + 0.25 * (2.0 * PI * mod_f * t + mod_p).sin();
                            *v += gain * env * (2.0 * PI * f * t + phase).sin();
                        }
                    }
                }
            }
            recordings.push(Recording {
                id: r as u32 + 1,
                sample_rate: SAMPLE_RATE,
                channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
                channels: channels
                    .into_iter()
                    .map(|c| {
                        c.into_iter()
                            .map(|v| (v * cfg.background_uv) as f32)
                            .collect()
                    })
                    .collect(),
                intervals,
            });
        }
        patients.push(PatientRecord {
            id: pid,
            recordings,
        });
    }
    let mut ds = Dataset {
        patients,
        ..Default::default()
    };
    for (k, v) in [
        ("generator", "surrogate".to_string()),
        ("seed", cfg.seed.to_string()),
        ("patients", cfg.patients.to_string()),
        ("recording_seconds", cfg.recording_seconds.to_string()),
        (
            "seizures_per_recording",
            cfg.seizures_per_recording.to_string(),
        ),
        ("burst_amplitude", cfg.burst_amplitude.to_string()),
        ("background_exponent", cfg.background_exponent.to_string()),
    ] {
        ds.provenance.insert(k.to_string(), v);
    }
    ds
}
