//! Spectral normalisation (power iteration) and virtual batch normalisation
//! state.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{dim_err, real, Real, Tensor, TensorError, TensorResult};

/// Lower bound on the singular value estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Persistent power-iteration vectors for one weight, viewed as a
/// `rows × (numel / rows)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralNormState<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    /// Total power iterations performed so far.
    pub iterations: u64,
}

fn normalize_in_place<T: Real>(x: &mut [T]) -> bool {
    let n = x.iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
    if !(n > real(1e-30)) || !n.is_finite() {
        return false;
    }
    for v in x.iter_mut() {
        *v /= n;
    }
    true
}

impl<T: Real> SpectralNormState<T> {
    /// Random unit `u`, then one power iteration against `weight`.
    pub fn new<R: Rng + ?Sized>(weight: &Tensor<T>, rng: &mut R) -> Self {
        let (rows, cols) = weight.rows_cols();
        let mut u: Vec<T> = (0..rows)
            .map(|_| real(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        if !normalize_in_place(&mut u) {
            u = vec![T::zero(); rows];
            u[0] = T::one();
        }
        let mut state = Self {
            u,
            v: vec![T::zero(); cols],
            iterations: 0,
        };
        state.iterate(weight, 1);
        state
    }

    pub fn check_shape(&self, weight: &Tensor<T>) -> TensorResult<()> {
        let (rows, cols) = weight.rows_cols();
        if rows != self.u.len() || cols != self.v.len() {
            return Err(dim_err(
                "spectral_normalize",
                format!(
                    "state is {}x{}, weight is {rows}x{cols}",
                    self.u.len(),
                    self.v.len()
                ),
            ));
        }
        Ok(())
    }

    /// Runs `iters` rounds of `v ← Wᵀu/‖Wᵀu‖`, `u ← Wv/‖Wv‖`. A zero
    /// direction leaves the previous vector in place.
    pub fn iterate(&mut self, weight: &Tensor<T>, iters: usize) {
        let (rows, cols) = weight.rows_cols();
        let w = weight.data();
        for _ in 0..iters {
            let mut v = vec![T::zero(); cols];
            for (r, &ur) in self.u.iter().enumerate() {
                super::kernels::axpy(ur, &w[r * cols..(r + 1) * cols], &mut v);
            }
            if normalize_in_place(&mut v) {
                self.v = v;
            }
            let mut u: Vec<T> = (0..rows)
                .map(|r| super::kernels::dot(&w[r * cols..(r + 1) * cols], &self.v))
                .collect();
            if normalize_in_place(&mut u) {
                self.u = u;
            }
            self.iterations += 1;
        }
    }

    /// `σ̂ = uᵀ W v`, clamped to at least [`SIGMA_FLOOR`].
    pub fn sigma(&self, weight: &Tensor<T>) -> T {
        let (rows, cols) = weight.rows_cols();
        let w = weight.data();
        let mut s = T::zero();
        for r in 0..rows {
            s += self.u[r] * super::kernels::dot(&w[r * cols..(r + 1) * cols], &self.v);
        }
        s.max(real(SIGMA_FLOOR))
    }
}

/// Power-iterates `state` against `weight` and returns `weight / σ̂`.
pub fn spectral_normalize<T: Real>(
    weight: &Tensor<T>,
    state: &mut SpectralNormState<T>,
    iters: usize,
) -> TensorResult<Tensor<T>> {
    if iters == 0 {
        return Err(TensorError::Config(
            "spectral normalisation needs at least one power iteration".into(),
        ));
    }
    state.check_shape(weight)?;
    state.iterate(weight, iters);
    let sigma = state.sigma(weight);
    let data = weight.data().iter().map(|&w| w / sigma).collect();
    Tensor::new(weight.shape().to_vec(), data)
}

/// Reference statistics of one normalised layer.
#[derive(Clone, Debug, PartialEq)]
pub struct VbnLayerStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> VbnLayerStats<T> {
    /// Pooled per-channel mean and (population) variance over a batch of
    /// `channels × length` activations.
    pub fn from_batch(batch: &[&Tensor<T>]) -> TensorResult<Self> {
        let first = batch
            .first()
            .ok_or_else(|| TensorError::State("empty reference batch".into()))?;
        let shape = first.shape().to_vec();
        if shape.len() != 2 {
            return Err(dim_err("virtual_batch_norm", "expected channels x length"));
        }
        let (c, l) = (shape[0], shape[1]);
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for t in batch {
            if t.shape() != shape.as_slice() {
                return Err(dim_err("virtual_batch_norm", "ragged reference batch"));
            }
            for ch in 0..c {
                for &v in &t.data()[ch * l..(ch + 1) * l] {
                    let v = v.to_f64_lossy();
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
        }
        let n = (batch.len() * l) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0))
            .collect::<Vec<_>>();
        Ok(Self {
            mean: mean.into_iter().map(real).collect(),
            var: var.into_iter().map(real).collect(),
        })
    }
}

/// Frozen reference statistics for every virtual-batch-normalised layer.
#[derive(Clone, Debug, PartialEq)]
pub struct VbnState<T> {
    layers: Vec<Option<VbnLayerStats<T>>>,
    /// Number of examples in the reference batch.
    pub reference_size: usize,
    frozen: bool,
    pub eps: T,
}

impl<T: Real> VbnState<T> {
    pub fn new(layer_count: usize) -> Self {
        Self {
            layers: vec![None; layer_count],
            reference_size: 0,
            frozen: false,
            eps: real(1e-5),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_layer(&mut self, idx: usize, stats: VbnLayerStats<T>) -> TensorResult<()> {
        if self.frozen {
            return Err(TensorError::State(
                "virtual batch norm reference is frozen".into(),
            ));
        }
        let slot = self
            .layers
            .get_mut(idx)
            .ok_or_else(|| TensorError::State(format!("no normalised layer {idx}")))?;
        *slot = Some(stats);
        Ok(())
    }

    /// Freezes the reference. Every layer must have statistics.
    pub fn freeze(&mut self, reference_size: usize) -> TensorResult<()> {
        if self.frozen {
            return Err(TensorError::State("reference already frozen".into()));
        }
        if reference_size == 0 {
            return Err(TensorError::State("empty reference batch".into()));
        }
        if let Some(i) = self.layers.iter().position(Option::is_none) {
            return Err(TensorError::State(format!(
                "layer {i} has no reference statistics"
            )));
        }
        self.reference_size = reference_size;
        self.frozen = true;
        Ok(())
    }

    /// Statistics for layer `idx`; errors unless the reference is frozen.
    pub fn layer(&self, idx: usize) -> TensorResult<&VbnLayerStats<T>> {
        if !self.frozen {
            return Err(TensorError::State(
                "virtual batch norm used before the reference batch was frozen".into(),
            ));
        }
        self.layers[idx]
            .as_ref()
            .ok_or_else(|| TensorError::State(format!("no statistics for layer {idx}")))
    }

    /// Raw access for checkpointing.
    pub fn layers(&self) -> &[Option<VbnLayerStats<T>>] {
        &self.layers
    }

    /// Restores a frozen state from checkpointed statistics.
    pub fn restore(layers: Vec<VbnLayerStats<T>>, reference_size: usize, eps: T) -> Self {
        Self {
            layers: layers.into_iter().map(Some).collect(),
            reference_size,
            frozen: reference_size > 0,
            eps,
        }
    }
}
