//! Welch power spectral density and band integration.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::{FeatureError, FeatureResult};

pub const SEGMENT: usize = 256;
pub const OVERLAP: usize = 128;

/// Named frequency band in Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

pub const BANDS: [Band; 8] = [
    Band {
        name: "delta",
        lo: 0.5,
        hi: 4.0,
    },
    Band {
        name: "theta",
        lo: 4.0,
        hi: 8.0,
    },
    Band {
        name: "alpha",
        lo: 8.0,
        hi: 12.0,
    },
    Band {
        name: "beta",
        lo: 13.0,
        hi: 30.0,
    },
    Band {
        name: "gamma",
        lo: 30.0,
        hi: 45.0,
    },
    Band {
        name: "b0-0.1",
        lo: 0.0,
        hi: 0.1,
    },
    Band {
        name: "b0.1-0.5",
        lo: 0.1,
        hi: 0.5,
    },
    Band {
        name: "b12-13",
        lo: 12.0,
        hi: 13.0,
    },
];

/// One-sided power spectral density on the grid `k · fs / SEGMENT`.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub df: f64,
    pub density: Vec<f64>,
}

impl Psd {
    pub fn nyquist(&self) -> f64 {
        self.df * (self.density.len() - 1) as f64
    }

    /// `∫ P(f) df` over `[lo, hi]` with `P` linear between grid points.
    pub fn integrate(&self, lo: f64, hi: f64) -> FeatureResult<f64> {
        let top = self.nyquist();
        if !(lo >= 0.0 && hi <= top + 1e-12 && lo <= hi) {
            return Err(FeatureError::Parameter(format!(
                "band [{lo}, {hi}] Hz outside [0, {top}]"
            )));
        }
        let p = &self.density;
        let at = |f: f64| -> f64 {
            let x = f / self.df;
            let k = (x.floor() as usize).min(p.len() - 2);
            let t = x - k as f64;
            p[k] * (1.0 - t) + p[k + 1] * t
        };
        let mut total = 0.0;
        let mut f = lo;
        while f < hi {
            let next = (((f / self.df).floor() + 1.0) * self.df).min(hi);
            total += 0.5 * (at(f) + at(next)) * (next - f);
            f = next;
        }
        Ok(total)
    }
}

/// Welch estimator: 256-point periodic Hamming segments, 50 % overlap,
/// per-segment mean removal, density scaling.
pub struct Welch {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    fs: f64,
}

impl Welch {
    pub fn new(fs: f64) -> Self {
        let window: Vec<f64> = (0..SEGMENT)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / SEGMENT as f64).cos())
            .collect();
        let norm = fs * window.iter().map(|w| w * w).sum::<f64>();
        Self {
            fft: FftPlanner::new().plan_fft_forward(SEGMENT),
            window,
            norm,
            fs,
        }
    }

    pub fn psd(&self, x: &[f64]) -> FeatureResult<Psd> {
        if x.len() < SEGMENT {
            return Err(FeatureError::Dimension(format!(
                "signal of {} points is shorter than a {SEGMENT}-point segment",
                x.len()
            )));
        }
        let bins = SEGMENT / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); SEGMENT];
        let mut count = 0;
        let mut start = 0;
        while start + SEGMENT <= x.len() {
            let seg = &x[start..start + SEGMENT];
            let mean = seg.iter().sum::<f64>() / SEGMENT as f64;
            for (b, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *b = Complex::new((v - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr();
            }
            count += 1;
            start += SEGMENT - OVERLAP;
        }
        let scale = 1.0 / (self.norm * count as f64);
        let density = acc
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let one_sided = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                a * scale * one_sided
            })
            .collect();
        Ok(Psd {
            df: self.fs / SEGMENT as f64,
            density,
        })
    }
}

/// Absolute and relative power of `band`.
pub fn band_power(psd: &Psd, band: (f64, f64)) -> FeatureResult<(f64, f64)> {
    let abs = psd.integrate(band.0, band.1)?;
    let total = psd.integrate(0.0, psd.nyquist())?;
    let rel = if total > 0.0 {
        (abs / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok((abs, rel))
}
