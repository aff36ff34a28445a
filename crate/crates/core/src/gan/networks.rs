//! Generator and discriminator parameter sets and their forward passes.

use rand::Rng;
use rand_distr::StandardNormal;

use super::arch::{ArchitectureConfig, MapShape};
use super::{GanError, GanResult};
use crate::seed;
use crate::tensor::{
    real, ParamSet, Real, SpectralNormState, Tape, Tensor, Var, VbnLayerStats, VbnState,
};

/// A trainable network: named parameters plus whatever normalisation state
/// turns them into the weights actually used by the forward pass.
pub trait Network<T: Real> {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;

    /// Advances persistent normalisation state by `iters` power iterations.
    fn refresh(&mut self, _iters: usize) {}

    /// Effective weights from the bound parameters, in parameter order.
    fn effective(&self, tape: &mut Tape<T>, bound: &[Var]) -> GanResult<Vec<Var>> {
        let _ = tape;
        Ok(bound.to_vec())
    }
}

pub trait Generator<T: Real>: Network<T> {
    /// Shape of the noise tensor consumed by one forward pass.
    fn noise_shape(&self) -> Vec<usize>;
    fn forward(&self, tape: &mut Tape<T>, w: &[Var], x: Var, noise: Var) -> GanResult<Var>;
}

pub trait Discriminator<T: Real>: Network<T> {
    /// Freezes any reference statistics from real examples. A no-op once
    /// frozen.
    fn prepare_reference(&mut self, _real: &[&Tensor<T>]) -> GanResult<()> {
        Ok(())
    }
    /// Score of one example, shape `[1]`.
    fn forward(&self, tape: &mut Tape<T>, w: &[Var], x: Var) -> GanResult<Var>;
}

fn gaussian<T: Real>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_f64(shape, &v).expect("shape matches")
}

/// Effective weights: `w / σ̂` for parameters with a spectral-norm state.
fn normalized<T: Real>(
    tape: &mut Tape<T>,
    bound: &[Var],
    sn: &[Option<SpectralNormState<T>>],
) -> GanResult<Vec<Var>> {
    bound
        .iter()
        .zip(sn)
        .map(|(&v, s)| match s {
            Some(s) => Ok(tape.spectral_norm(v, s)?),
            None => Ok(v),
        })
        .collect()
}

fn refresh_states<T: Real>(
    params: &ParamSet<T>,
    sn: &mut [Option<SpectralNormState<T>>],
    iters: usize,
) {
    for (i, s) in sn.iter_mut().enumerate() {
        if let Some(s) = s {
            s.iterate(params.at(i), iters);
        }
    }
}

fn check_shape<T: Real>(tape: &Tape<T>, v: Var, want: MapShape, what: &str) -> GanResult<()> {
    let got = tape.value(v).shape();
    if got != [want.1, want.0] {
        return Err(GanError::Dimension(format!(
            "{what}: expected {} channels x {} points, got {got:?}",
            want.1, want.0
        )));
    }
    Ok(())
}

const ENC: usize = 0;
const DEC: usize = 8;
const SKIP: usize = 16;

/// θ_G: eight encoder convolutions, eight decoder blocks and seven skip
/// weights, plus the spectral-norm state of every convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorWeights<T> {
    pub arch: ArchitectureConfig,
    pub params: ParamSet<T>,
    pub sn: Vec<Option<SpectralNormState<T>>>,
}

/// Every intermediate map of one generator pass, channels × length.
#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    /// Outputs of encoder blocks 1..8 (the last is the latent code).
    pub encoder: Vec<Var>,
    /// Decoder entry (latent ⧺ noise) then the output of blocks 1..8.
    pub decoder: Vec<Var>,
    pub output: Var,
}

impl<T: Real> GeneratorWeights<T> {
    /// He-scaled Gaussian convolutions, unit skip weights.
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> GanResult<Self> {
        arch.validate()?;
        let mut rng = seed::rng_for(seed, "generator-init");
        let k = arch.kernel;
        let enc = arch.encoder_shapes();
        let mut params = ParamSet::new();
        for i in 0..8 {
            let (cin, cout) = (enc[i].1, enc[i + 1].1);
            let std = (2.0 / (cin * k) as f64).sqrt();
            params.insert(
                format!("enc{i}.w"),
                gaussian(&mut rng, &[cout, cin, k], std),
            )?;
        }
        for b in 0..8 {
            let (cin, cout) = arch.decoder_block(b);
            let std = (2.0 / (cin * k) as f64).sqrt();
            let shape = if b == 0 {
                [cout, cin, k]
            } else {
                [cin, cout, k]
            };
            params.insert(format!("dec{b}.w"), gaussian(&mut rng, &shape, std))?;
        }
        for s in 0..7 {
            let n = arch.skip_len(s);
            params.insert(format!("skip{s}"), Tensor::full(&[n], T::one()))?;
        }
        let sn = (0..params.len())
            .map(|i| (i < SKIP).then(|| SpectralNormState::new(params.at(i), &mut rng)))
            .collect();
        Ok(Self {
            arch: arch.clone(),
            params,
            sn,
        })
    }

    /// Full forward pass keeping every intermediate map.
    pub fn trace(
        &self,
        tape: &mut Tape<T>,
        w: &[Var],
        x: Var,
        noise: Var,
    ) -> GanResult<GeneratorTrace> {
        let arch = &self.arch;
        let slope = real::<T>(arch.leaky_slope);
        let enc_shapes = arch.encoder_shapes();
        let dec_shapes = arch.decoder_shapes();
        check_shape(tape, x, enc_shapes[0], "generator input")?;
        check_shape(tape, noise, arch.latent_shape(), "noise")?;
        let mut encoder = Vec::with_capacity(8);
        let mut h = x;
        for i in 0..8 {
            h = tape.conv1d(h, w[ENC + i], 1, 1)?;
            h = tape.leaky_relu(h, slope)?;
            h = tape.maxpool1d(h)?;
            encoder.push(h);
        }
        let entry = tape.concat(h, noise, 1)?;
        let mut decoder = vec![entry];
        let mut d = tape.conv1d(entry, w[DEC], 1, 1)?;
        d = tape.leaky_relu(d, slope)?;
        d = tape.apply_skip(encoder[6], d, w[SKIP])?;
        decoder.push(d);
        for b in 1..8 {
            d = tape.transposed_conv1d(d, w[DEC + b], 2, 1)?;
            if b < 7 {
                d = tape.leaky_relu(d, slope)?;
                d = tape.apply_skip(encoder[6 - b], d, w[SKIP + b])?;
            } else {
                d = tape.tanh(d)?;
            }
            decoder.push(d);
        }
        for (v, s) in decoder.iter().zip(&dec_shapes) {
            check_shape(tape, *v, *s, "decoder map")?;
        }
        Ok(GeneratorTrace {
            encoder,
            decoder,
            output: d,
        })
    }

    /// Encoder pass only: the latent code and the stored skip maps.
    pub fn encode(&self, x: &Tensor<T>) -> GanResult<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let w = self.effective(&mut tape, &bound)?;
        let xv = tape.constant(x.clone());
        check_shape(&tape, xv, self.arch.encoder_shapes()[0], "generator input")?;
        let slope = real::<T>(self.arch.leaky_slope);
        let mut maps = Vec::with_capacity(8);
        let mut h = xv;
        for i in 0..8 {
            h = tape.conv1d(h, w[ENC + i], 1, 1)?;
            h = tape.leaky_relu(h, slope)?;
            h = tape.maxpool1d(h)?;
            maps.push(tape.value(h).clone());
        }
        let latent = maps.pop().expect("eight maps");
        Ok((latent, maps))
    }

    /// Output for one `1 × L` input and one noise draw, without gradients.
    pub fn run(&self, x: &Tensor<T>, noise: &Tensor<T>) -> GanResult<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let w = self.effective(&mut tape, &bound)?;
        let (xv, nv) = (tape.constant(x.clone()), tape.constant(noise.clone()));
        let out = Generator::forward(self, &mut tape, &w, xv, nv)?;
        Ok(tape.value(out).clone())
    }
}

impl<T: Real> Network<T> for GeneratorWeights<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
    fn refresh(&mut self, iters: usize) {
        refresh_states(&self.params, &mut self.sn, iters);
    }
    fn effective(&self, tape: &mut Tape<T>, bound: &[Var]) -> GanResult<Vec<Var>> {
        normalized(tape, bound, &self.sn)
    }
}

impl<T: Real> Generator<T> for GeneratorWeights<T> {
    fn noise_shape(&self) -> Vec<usize> {
        let (l, c) = self.arch.latent_shape();
        vec![c, l]
    }
    fn forward(&self, tape: &mut Tape<T>, w: &[Var], x: Var, noise: Var) -> GanResult<Var> {
        Ok(self.trace(tape, w, x, noise)?.output)
    }
}

const HEAD_W: usize = 24;
const HEAD_B: usize = 25;

/// θ_D: the encoder convolutions with virtual batch normalisation, a dense
/// head and a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorWeights<T> {
    pub arch: ArchitectureConfig,
    pub params: ParamSet<T>,
    pub sn: Vec<Option<SpectralNormState<T>>>,
    pub vbn: VbnState<T>,
}

impl<T: Real> DiscriminatorWeights<T> {
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> GanResult<Self> {
        arch.validate()?;
        let mut rng = seed::rng_for(seed, "discriminator-init");
        let k = arch.kernel;
        let enc = arch.encoder_shapes();
        let mut params = ParamSet::new();
        for i in 0..8 {
            let (cin, cout) = (enc[i].1, enc[i + 1].1);
            let std = (2.0 / (cin * k) as f64).sqrt();
            params.insert(
                format!("enc{i}.w"),
                gaussian(&mut rng, &[cout, cin, k], std),
            )?;
        }
        for i in 0..8 {
            let c = enc[i + 1].1;
            params.insert(format!("vbn{i}.gain"), Tensor::full(&[c], T::one()))?;
            params.insert(format!("vbn{i}.shift"), Tensor::zeros(&[c]))?;
        }
        let (l, c) = arch.latent_shape();
        let flat = l * c;
        let head = gaussian(&mut rng, &[1, flat], (1.0 / flat as f64).sqrt());
        debug_assert_eq!(params.len(), HEAD_W);
        params.insert("head.w", head)?;
        params.insert("head.b", Tensor::zeros(&[1]))?;
        let sn = (0..params.len())
            .map(|i| (i < 8 || i == HEAD_W).then(|| SpectralNormState::new(params.at(i), &mut rng)))
            .collect();
        Ok(Self {
            arch: arch.clone(),
            params,
            sn,
            vbn: VbnState::new(8),
        })
    }

    fn vbn_index(i: usize) -> (usize, usize) {
        (8 + 2 * i, 9 + 2 * i)
    }

    /// One encoder block: convolution, normalisation, activation, pooling.
    fn block(
        &self,
        tape: &mut Tape<T>,
        w: &[Var],
        h: Var,
        i: usize,
        stats: &VbnLayerStats<T>,
        reference_size: usize,
    ) -> GanResult<Var> {
        let (g, s) = Self::vbn_index(i);
        let h = tape.conv1d(h, w[i], 1, 1)?;
        let h = tape.virtual_batch_norm(h, w[g], w[s], stats, reference_size, self.vbn.eps)?;
        let h = tape.leaky_relu(h, real(self.arch.leaky_slope))?;
        Ok(tape.maxpool1d(h)?)
    }

    /// Builds the reference statistics layer by layer from `batch` and
    /// freezes them: layer `i` is measured on reference activations that
    /// were already normalised by layers `0..i`.
    pub fn freeze_reference(&mut self, batch: &[&Tensor<T>]) -> GanResult<()> {
        if batch.is_empty() {
            return Err(GanError::EmptyData("reference batch".into()));
        }
        let n = batch.len();
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let w = self.effective(&mut tape, &bound)?;
        let mut hs: Vec<Var> = batch.iter().map(|x| tape.constant((*x).clone())).collect();
        for i in 0..8 {
            let pre: Vec<Var> = hs
                .iter()
                .map(|&h| tape.conv1d(h, w[i], 1, 1))
                .collect::<Result<_, _>>()?;
            let stats = {
                let vals: Vec<&Tensor<T>> = pre.iter().map(|&v| tape.value(v)).collect();
                VbnLayerStats::from_batch(&vals)?
            };
            let (g, s) = Self::vbn_index(i);
            for (h, &c) in hs.iter_mut().zip(&pre) {
                let v = tape.virtual_batch_norm(c, w[g], w[s], &stats, n, self.vbn.eps)?;
                let v = tape.leaky_relu(v, real(self.arch.leaky_slope))?;
                *h = tape.maxpool1d(v)?;
            }
            self.vbn.set_layer(i, stats)?;
        }
        self.vbn.freeze(n)?;
        Ok(())
    }

    /// Score in (0, 1) for one `1 × L` input, without gradients.
    pub fn score(&self, x: &Tensor<T>) -> GanResult<T> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let w = self.effective(&mut tape, &bound)?;
        let xv = tape.constant(x.clone());
        let s = Discriminator::forward(self, &mut tape, &w, xv)?;
        Ok(tape.value(s).data()[0])
    }
}

impl<T: Real> Network<T> for DiscriminatorWeights<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
    fn refresh(&mut self, iters: usize) {
        refresh_states(&self.params, &mut self.sn, iters);
    }
    fn effective(&self, tape: &mut Tape<T>, bound: &[Var]) -> GanResult<Vec<Var>> {
        normalized(tape, bound, &self.sn)
    }
}

impl<T: Real> Discriminator<T> for DiscriminatorWeights<T> {
    fn prepare_reference(&mut self, real: &[&Tensor<T>]) -> GanResult<()> {
        if self.vbn.is_frozen() {
            return Ok(());
        }
        self.freeze_reference(real)
    }

    fn forward(&self, tape: &mut Tape<T>, w: &[Var], x: Var) -> GanResult<Var> {
        check_shape(
            tape,
            x,
            self.arch.encoder_shapes()[0],
            "discriminator input",
        )?;
        let n = self.vbn.reference_size;
        let mut h = x;
        for i in 0..8 {
            let stats = self.vbn.layer(i)?;
            h = self.block(tape, w, h, i, stats, n)?;
        }
        let len = tape.value(h).len();
        let flat = tape.reshape(h, &[len])?;
        let s = tape.dense(flat, w[HEAD_W], w[HEAD_B])?;
        Ok(tape.sigmoid(s)?)
    }
}
