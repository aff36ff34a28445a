//! Sample, permutation and histogram entropies.

/// Result of a sample-entropy evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleEntropy {
    pub value: f64,
    /// Template pairs matching at length `m + 1`.
    pub a: u64,
    /// Template pairs matching at length `m`.
    pub b: u64,
    /// Set when the value is the degenerate cap (or the series is too short).
    pub capped: bool,
}

/// `-ln(2 / ((N-m-1)(N-m)))`, the largest finite sample entropy for `N`
/// points.
pub fn sample_entropy_cap(n: usize, m: usize) -> f64 {
    if n < m + 2 {
        return 0.0;
    }
    -(2.0 / (((n - m - 1) * (n - m)) as f64)).ln()
}

fn finish(a: u64, b: u64, n: usize, m: usize) -> SampleEntropy {
    if a == 0 || b == 0 {
        SampleEntropy {
            value: sample_entropy_cap(n, m),
            a,
            b,
            capped: true,
        }
    } else {
        SampleEntropy {
            value: -(a as f64 / b as f64).ln(),
            a,
            b,
            capped: false,
        }
    }
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Sample entropy with Chebyshev tolerance `r` (strict `< r`).
///
/// Both counts use the `N - m` templates starting at `0..N-m`, excluding
/// self-matches. A zero tolerance means a constant series and yields 0.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> SampleEntropy {
    let n = x.len();
    if n < m + 2 {
        return SampleEntropy {
            value: 0.0,
            a: 0,
            b: 0,
            capped: true,
        };
    }
    if r <= 0.0 {
        return SampleEntropy {
            value: 0.0,
            a: 0,
            b: 0,
            capped: false,
        };
    }
    let templates = n - m;
    let (mut a, mut b) = (0u64, 0u64);
    // For each lag d, runs of consecutive close points give the matches.
    for d in 1..templates {
        let mut run = 0usize;
        // positions i with i + d < templates; we need closeness up to i + m.
        let last = templates - d;
        for k in 0..last + m {
            if (x[k] - x[k + d]).abs() < r {
                run += 1;
            } else {
                run = 0;
            }
            if k + 1 >= m && run >= m {
                let i = k + 1 - m;
                if i < last {
                    b += 1;
                }
            }
            if k >= m && run > m {
                let i = k - m;
                if i < last {
                    a += 1;
                }
            }
        }
    }
    finish(a, b, n, m)
}

/// Direct O(N² m) template scan; reference for [`sample_entropy`].
pub fn sample_entropy_brute_force(x: &[f64], m: usize, r: f64) -> SampleEntropy {
    let n = x.len();
    if n < m + 2 {
        return SampleEntropy {
            value: 0.0,
            a: 0,
            b: 0,
            capped: true,
        };
    }
    if r <= 0.0 {
        return SampleEntropy {
            value: 0.0,
            a: 0,
            b: 0,
            capped: false,
        };
    }
    let templates = n - m;
    let matches =
        |i: usize, j: usize, len: usize| (0..len).all(|k| (x[i + k] - x[j + k]).abs() < r);
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            if matches(i, j, m) {
                b += 1;
                if matches(i, j, m + 1) {
                    a += 1;
                }
            }
        }
    }
    finish(a, b, n, m)
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Lehmer index of the stable argsort of `w`.
fn pattern_index(w: &[f64], order: &mut Vec<usize>) -> usize {
    order.clear();
    order.extend(0..w.len());
    order.sort_by(|&i, &j| w[i].total_cmp(&w[j]).then(i.cmp(&j)));
    let n = order.len();
    let mut idx = 0;
    for i in 0..n {
        let smaller = order[i + 1..].iter().filter(|&&v| v < order[i]).count();
        idx = idx * (n - i) + smaller;
    }
    idx
}

/// Normalised permutation entropy of order `n`, delay 1, in `[0, 1]`.
/// Returns `None` when the series is shorter than `n`.
pub fn permutation_entropy(x: &[f64], n: usize) -> Option<f64> {
    if n < 2 || x.len() < n {
        return None;
    }
    let mut counts = vec![0u32; factorial(n)];
    let mut order = Vec::with_capacity(n);
    let windows = x.len() - n + 1;
    for w in x.windows(n) {
        counts[pattern_index(w, &mut order)] += 1;
    }
    let total = windows as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Some((h / (factorial(n) as f64).ln()).max(0.0))
}

/// Shannon, Rényi (order 2) and Tsallis (order 2) entropies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionEntropies {
    pub shannon: f64,
    pub renyi: f64,
    pub tsallis: f64,
}

pub const HISTOGRAM_BINS: usize = 10;

/// Bin probabilities of a 10-bin equal-width histogram over the series
/// range; the maximum falls in the last bin.
pub fn histogram_probabilities(x: &[f64]) -> Vec<f64> {
    let mut counts = [0usize; HISTOGRAM_BINS];
    if x.is_empty() {
        return vec![0.0; HISTOGRAM_BINS];
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    for &v in x {
        let b = if width > 0.0 {
            (((v - lo) / width * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    counts.iter().map(|&c| c as f64 / x.len() as f64).collect()
}

pub fn distribution_entropies(x: &[f64]) -> DistributionEntropies {
    let p = histogram_probabilities(x);
    let shannon = p
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.ln())
        .sum::<f64>();
    let sq: f64 = p.iter().map(|q| q * q).sum();
    if sq == 0.0 {
        return DistributionEntropies {
            shannon: 0.0,
            renyi: 0.0,
            tsallis: 0.0,
        };
    }
    DistributionEntropies {
        shannon: shannon.max(0.0),
        renyi: (-sq.ln()).max(0.0),
        tsallis: (1.0 - sq).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_sample_entropy() {
        let s = sample_entropy(&[2.0; 50], 2, 0.2 * std_dev(&[2.0; 50]));
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn alternating_series_counts_by_hand() {
        // ±1 alternating, N = 10, m = 2: the 8 templates split into two
        // classes of 4; matches need equal phase.
        let x: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = 0.2 * std_dev(&x);
        let s = sample_entropy(&x, 2, r);
        assert_eq!(s.b, 2 * 6);
        assert_eq!(s.a, 2 * 6);
        assert_eq!(s.value, 0.0);
        assert_eq!(s, sample_entropy_brute_force(&x, 2, r));
    }

    #[test]
    fn no_matches_gives_cap() {
        let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let s = sample_entropy(&x, 2, 0.5);
        assert!(s.capped);
        assert!((s.value - sample_entropy_cap(20, 2)).abs() < 1e-15);
    }

    #[test]
    fn permutation_entropy_of_monotone_and_single_pattern() {
        let inc: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(permutation_entropy(&inc, 3), Some(0.0));
        assert_eq!(permutation_entropy(&[1.0, 3.0, 2.0], 3), Some(0.0));
        assert_eq!(permutation_entropy(&[1.0, 2.0], 3), None);
    }

    #[test]
    fn ties_break_by_index() {
        let mut order = Vec::new();
        assert_eq!(pattern_index(&[5.0, 5.0, 5.0], &mut order), 0);
        assert_eq!(pattern_index(&[1.0, 2.0, 3.0], &mut order), 0);
        assert_eq!(pattern_index(&[3.0, 2.0, 1.0], &mut order), 5);
    }

    #[test]
    fn distribution_entropies_closed_forms() {
        let c = distribution_entropies(&[4.0; 30]);
        assert_eq!((c.shannon, c.renyi, c.tsallis), (0.0, 0.0, 0.0));
        let u: Vec<f64> = (0..100).map(|i| (i / 10) as f64 + 0.5).collect();
        let e = distribution_entropies(&u);
        assert!((e.shannon - 10f64.ln()).abs() < 1e-12);
        assert!((e.renyi - 10f64.ln()).abs() < 1e-12);
        assert!((e.tsallis - 0.9).abs() < 1e-12);
    }
}
