//! Periodised orthogonal discrete wavelet transform (Daubechies, 4 vanishing
//! moments, 8 taps).

use super::{FeatureError, FeatureResult};

/// Scaling filter `h`; `Σh = √2`, `Σh² = 1`.
#[allow(clippy::excessive_precision)]
pub const DB4: [f64; 8] = [
    0.230_377_813_308_896_500_863_3,
    0.714_846_570_552_915_647_089_9,
    0.630_880_767_929_858_907_881_7,
    -0.027_983_769_416_859_854_211_41,
    -0.187_034_811_719_093_084_079_6,
    0.030_841_381_835_560_763_627_22,
    0.032_883_011_666_885_199_735_41,
    -0.010_597_401_785_069_032_104_88,
];

/// Wavelet filter `g[n] = (-1)^n h[L-1-n]`.
fn highpass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (n, gn) in g.iter_mut().enumerate() {
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        *gn = s * DB4[7 - n];
    }
    g
}

/// Detail vectors `d1..dJ` (finest first) and the level-`J` approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletDecomposition {
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
}

impl WaveletDecomposition {
    /// Detail coefficients at `level` (1-based).
    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn energy(&self) -> f64 {
        self.details
            .iter()
            .flatten()
            .chain(&self.approximation)
            .map(|v| v * v)
            .sum()
    }
}

fn analysis_step(x: &[f64], g: &[f64; 8]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for t in 0..8 {
            let v = x[(2 * k + t) % n];
            sa += DB4[t] * v;
            sd += g[t] * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], g: &[f64; 8]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for t in 0..8 {
            x[(2 * k + t) % n] += DB4[t] * a[k] + g[t] * d[k];
        }
    }
    x
}

/// `levels`-deep decomposition. The length must be divisible by `2^levels`.
pub fn dwt(signal: &[f64], levels: usize) -> FeatureResult<WaveletDecomposition> {
    let n = signal.len();
    if levels == 0 || n == 0 || n % (1usize << levels) != 0 {
        return Err(FeatureError::Dimension(format!(
            "length {n} is not divisible by 2^{levels}"
        )));
    }
    let g = highpass();
    let mut details = Vec::with_capacity(levels);
    let mut a = signal.to_vec();
    for _ in 0..levels {
        let (na, d) = analysis_step(&a, &g);
        details.push(d);
        a = na;
    }
    Ok(WaveletDecomposition {
        details,
        approximation: a,
    })
}

pub fn idwt(dec: &WaveletDecomposition) -> FeatureResult<Vec<f64>> {
    let g = highpass();
    let mut a = dec.approximation.clone();
    for d in dec.details.iter().rev() {
        if d.len() != a.len() {
            return Err(FeatureError::Dimension(format!(
                "detail length {} does not match approximation length {}",
                d.len(),
                a.len()
            )));
        }
        a = synthesis_step(&a, d, &g);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_is_orthonormal_with_four_vanishing_moments() {
        let s: f64 = DB4.iter().sum();
        assert!((s - 2f64.sqrt()).abs() < 1e-14);
        for shift in 0..4 {
            let c: f64 = (0..8 - 2 * shift)
                .map(|n| DB4[n] * DB4[n + 2 * shift])
                .sum();
            let expect = if shift == 0 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-14, "shift {shift}: {c}");
        }
        let g = highpass();
        for p in 0..4 {
            let m: f64 = (0..8).map(|n| g[n] * (n as f64).powi(p)).sum();
            assert!(m.abs() < 1e-10, "moment {p}: {m}");
        }
    }

    #[test]
    fn constant_signal_has_no_detail() {
        let x = vec![3.0; 1024];
        let dec = dwt(&x, 7).unwrap();
        for d in &dec.details {
            assert!(d.iter().all(|v| v.abs() < 1e-12));
        }
        assert!((dec.energy() - 9.0 * 1024.0).abs() < 1e-8);
        assert_eq!(dec.approximation.len(), 8);
    }

    #[test]
    fn lengths_halve() {
        let dec = dwt(&vec![1.0; 1024], 7).unwrap();
        let lens: Vec<usize> = dec.details.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![512, 256, 128, 64, 32, 16, 8]);
        assert!(dwt(&vec![1.0; 1000], 7).is_err());
    }

    #[test]
    fn reconstructs_a_ramp() {
        let x: Vec<f64> = (0..256).map(|i| (i as f64).sqrt()).collect();
        let back = idwt(&dwt(&x, 5).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
