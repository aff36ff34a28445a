//! Alternating discriminator/generator Adam updates, training log and
//! checkpoint/resume.

use std::io::Write;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::arch::ArchitectureConfig;
use super::networks::{Discriminator, DiscriminatorWeights, Generator, GeneratorWeights};
use super::synth::to_signal;
use super::{GanError, GanResult, LAMBDA};
use crate::data::PairedExample;
use crate::seed;
use crate::tensor::{
    real, Adam, AdamConfig, AdamState, Checkpoint, ParamSet, Real, SpectralNormState, Tape, Tensor,
    Var, VbnLayerStats, VbnState,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GanTrainConfig {
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub batch_size: usize,
    /// Step budget; one step is one D update followed by one G update.
    pub steps: u64,
    pub seed: u64,
    /// Power iterations per spectral-norm refresh.
    pub sn_iterations: usize,
    /// Checkpoint period in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            lambda: LAMBDA,
            beta1: 0.0,
            beta2: 0.9,
            lr_generator: 1e-4,
            lr_discriminator: 4e-4,
            batch_size: 100,
            steps: 2000,
            seed: 0,
            sn_iterations: 1,
            checkpoint_every: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> GanResult<()> {
        if !(self.lambda > 0.0) {
            return Err(GanError::Config(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        if self.batch_size < 2 {
            return Err(GanError::Config(format!(
                "minibatch size {} must be at least 2",
                self.batch_size
            )));
        }
        // A zero rate freezes that network.
        if !(self.lr_generator >= 0.0 && self.lr_discriminator >= 0.0) {
            return Err(GanError::Config(
                "learning rates must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(GanError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.sn_iterations == 0 {
            return Err(GanError::Config(
                "at least one power iteration is needed".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// Losses of one step. `l1_term` is the λ-weighted L1 part of `g_loss`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1_term: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub losses: StepLosses,
    /// Wall-clock time of the step; excluded from reproducibility checks.
    pub wall_ms: f64,
}

pub const LOG_HEADER: &str = "step,d_loss,g_loss,l1_term,wall_ms";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.step, self.losses.d_loss, self.losses.g_loss, self.losses.l1_term, self.wall_ms
        )
    }
}

fn grads_of<T: Real>(tape: &Tape<T>, loss: Var, vars: &[Var]) -> GanResult<Vec<Option<Tensor<T>>>> {
    let g = tape.backward(loss)?;
    Ok(vars.iter().map(|&v| g.get(v).cloned()).collect())
}

fn check_finite(v: f64, what: &str, step: u64) -> GanResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GanError::NonFinite {
            what: what.into(),
            step,
        })
    }
}

/// One discriminator update followed by one generator update on a
/// minibatch, each with its own noise draw.
///
/// Works for any [`Generator`]/[`Discriminator`] pair; `step` only labels
/// errors.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_step<T, G, D>(
    g: &mut G,
    d: &mut D,
    adam_g: &mut Adam<T>,
    adam_d: &mut Adam<T>,
    inputs: &[&Tensor<T>],
    targets: &[&Tensor<T>],
    noise_d: &[Tensor<T>],
    noise_g: &[Tensor<T>],
    lambda: f64,
    sn_iterations: usize,
    step: u64,
) -> GanResult<StepLosses>
where
    T: Real,
    G: Generator<T>,
    D: Discriminator<T>,
{
    let b = inputs.len();
    if b == 0 || targets.len() != b || noise_d.len() != b || noise_g.len() != b {
        return Err(GanError::EmptyData("minibatch".into()));
    }
    let inv_b = real::<T>(1.0 / b as f64);
    d.prepare_reference(targets)?;

    d.refresh(sn_iterations);
    let d_loss = {
        let mut tape = Tape::new();
        let gb = g.params().bind(&mut tape, false);
        let gw = g.effective(&mut tape, &gb)?;
        let db = d.params().bind(&mut tape, true);
        let dw = d.effective(&mut tape, &db)?;
        let mut terms = Vec::with_capacity(2 * b);
        for j in 0..b {
            let x = tape.constant(inputs[j].clone());
            let z = tape.constant(noise_d[j].clone());
            let y = tape.constant(targets[j].clone());
            let fake = g.forward(&mut tape, &gw, x, z)?;
            let rs = d.forward(&mut tape, &dw, y)?;
            let fs = d.forward(&mut tape, &dw, fake)?;
            let r = tape.add_scalar(rs, -T::one())?;
            terms.push(tape.square(r)?);
            terms.push(tape.square(fs)?);
        }
        let total = tape.add_n(&terms)?;
        let loss = tape.scale(total, inv_b)?;
        let value = check_finite(tape.scalar(loss).to_f64_lossy(), "discriminator loss", step)?;
        let grads = grads_of(&tape, loss, &db)?;
        adam_d.step(d.params_mut(), &grads)?;
        value
    };

    g.refresh(sn_iterations);
    let mut tape = Tape::new();
    let gb = g.params().bind(&mut tape, true);
    let gw = g.effective(&mut tape, &gb)?;
    let db = d.params().bind(&mut tape, false);
    let dw = d.effective(&mut tape, &db)?;
    let mut adv = Vec::with_capacity(b);
    let mut l1 = Vec::with_capacity(b);
    for j in 0..b {
        let x = tape.constant(inputs[j].clone());
        let z = tape.constant(noise_g[j].clone());
        let y = tape.constant(targets[j].clone());
        let fake = g.forward(&mut tape, &gw, x, z)?;
        let fs = d.forward(&mut tape, &dw, fake)?;
        let r = tape.add_scalar(fs, -T::one())?;
        adv.push(tape.square(r)?);
        let diff = tape.sub(fake, y)?;
        let a = tape.abs(diff)?;
        l1.push(tape.mean(a)?);
    }
    let adv = tape.add_n(&adv)?;
    let adv = tape.scale(adv, inv_b)?;
    let l1 = tape.add_n(&l1)?;
    let l1 = tape.scale(l1, real::<T>(lambda / b as f64))?;
    let loss = tape.add(adv, l1)?;
    let g_loss = check_finite(tape.scalar(loss).to_f64_lossy(), "generator loss", step)?;
    let l1_term = tape.scalar(l1).to_f64_lossy();
    let grads = grads_of(&tape, loss, &gb)?;
    adam_g.step(g.params_mut(), &grads)?;
    Ok(StepLosses {
        d_loss,
        g_loss,
        l1_term,
    })
}

/// Paired windows converted to network inputs and targets.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub inputs: Vec<Tensor<f32>>,
    pub targets: Vec<Tensor<f32>>,
}

impl TrainingData {
    pub fn from_pairs(pairs: &[PairedExample], arch: &ArchitectureConfig) -> GanResult<Self> {
        let inputs = pairs
            .iter()
            .map(|p| to_signal(&p.input, arch))
            .collect::<GanResult<_>>()?;
        let targets = pairs
            .iter()
            .map(|p| to_signal(&p.target, arch))
            .collect::<GanResult<_>>()?;
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// A training run: both networks, their optimisers and the step counter.
///
/// Minibatch `s` takes positions `s·B .. (s+1)·B` of an endless stream made
/// of per-epoch permutations seeded by `(seed, epoch)`, and draws its noise
/// from a stream seeded by `(seed, s)`. A run resumed from a checkpoint
/// therefore continues exactly as if it had never stopped.
pub struct Trainer {
    pub arch: ArchitectureConfig,
    pub config: GanTrainConfig,
    pub generator: GeneratorWeights<f32>,
    pub discriminator: DiscriminatorWeights<f32>,
    pub adam_g: Adam<f32>,
    pub adam_d: Adam<f32>,
    step: u64,
    pub log: Vec<LogRow>,
    epoch_cache: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(arch: &ArchitectureConfig, config: &GanTrainConfig) -> GanResult<Self> {
        config.validate()?;
        let generator = GeneratorWeights::init(arch, config.seed)?;
        let discriminator = DiscriminatorWeights::init(arch, config.seed)?;
        let adam_g = Adam::new(config.adam(config.lr_generator), &generator.params);
        let adam_d = Adam::new(config.adam(config.lr_discriminator), &discriminator.params);
        Ok(Self {
            arch: arch.clone(),
            config: config.clone(),
            generator,
            discriminator,
            adam_g,
            adam_d,
            step: 0,
            log: Vec::new(),
            epoch_cache: None,
        })
    }

    /// Completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    fn permutation(&mut self, epoch: u64, n: usize) -> &[usize] {
        if self
            .epoch_cache
            .as_ref()
            .is_none_or(|(e, p)| *e != epoch || p.len() != n)
        {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = seed::rng(seed::derive(
                seed::derive_str(self.config.seed, "epoch"),
                epoch,
            ));
            perm.shuffle(&mut rng);
            self.epoch_cache = Some((epoch, perm));
        }
        &self.epoch_cache.as_ref().expect("just filled").1
    }

    /// Dataset indices of minibatch `step`.
    pub fn batch_indices(&mut self, step: u64, n: usize) -> Vec<usize> {
        let b = self.config.batch_size as u64;
        (0..b)
            .map(|j| {
                let p = step * b + j;
                let (epoch, at) = (p / n as u64, (p % n as u64) as usize);
                self.permutation(epoch, n)[at]
            })
            .collect()
    }

    fn noise(&self, step: u64, count: usize) -> (Vec<Tensor<f32>>, Vec<Tensor<f32>>) {
        let shape = self.generator.noise_shape();
        let n: usize = shape.iter().product();
        let mut rng = seed::rng(seed::derive(
            seed::derive_str(self.config.seed, "noise"),
            step,
        ));
        let mut draw = || -> Vec<Tensor<f32>> {
            (0..count)
                .map(|_| {
                    let v: Vec<f32> = (0..n)
                        .map(|_| rng.sample::<f32, _>(StandardNormal))
                        .collect();
                    Tensor::new(shape.clone(), v).expect("noise shape")
                })
                .collect()
        };
        let a = draw();
        let b = draw();
        (a, b)
    }

    /// Runs the next step on `data` and appends it to the log.
    pub fn train_step(&mut self, data: &TrainingData) -> GanResult<LogRow> {
        if data.is_empty() {
            return Err(GanError::EmptyData("training pairs".into()));
        }
        if self.config.batch_size > data.len() {
            return Err(GanError::Config(format!(
                "minibatch size {} exceeds the {} training pairs",
                self.config.batch_size,
                data.len()
            )));
        }
        let started = Instant::now();
        let idx = self.batch_indices(self.step, data.len());
        let (noise_d, noise_g) = self.noise(self.step, idx.len());
        let inputs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &data.inputs[i]).collect();
        let targets: Vec<&Tensor<f32>> = idx.iter().map(|&i| &data.targets[i]).collect();
        let losses = adversarial_step(
            &mut self.generator,
            &mut self.discriminator,
            &mut self.adam_g,
            &mut self.adam_d,
            &inputs,
            &targets,
            &noise_d,
            &noise_g,
            self.config.lambda,
            self.config.sn_iterations,
            self.step + 1,
        )?;
        self.step += 1;
        let row = LogRow {
            step: self.step,
            losses,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.log.push(row);
        Ok(row)
    }

    /// Trains until `config.steps` steps are complete, calling `on_step`
    /// after every step (for logging and periodic checkpoints).
    pub fn train<F>(&mut self, data: &TrainingData, mut on_step: F) -> GanResult<()>
    where
        F: FnMut(&Trainer, &LogRow) -> GanResult<()>,
    {
        while self.step < self.config.steps {
            let row = self.train_step(data)?;
            if row.step % 100 == 0 {
                info!(
                    "step {}: d_loss {:.4}, g_loss {:.4}, l1 {:.4}",
                    row.step, row.losses.d_loss, row.losses.g_loss, row.losses.l1_term
                );
            }
            on_step(self, &row)?;
        }
        Ok(())
    }

    /// Writes the log as CSV with [`LOG_HEADER`].
    pub fn write_log<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{LOG_HEADER}")?;
        }
        for row in &self.log {
            writeln!(w, "{}", row.csv())?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        put_arch(&mut c, &self.arch);
        let cfg = &self.config;
        c.put_scalar("config/lambda", cfg.lambda);
        c.put_scalar("config/beta1", cfg.beta1);
        c.put_scalar("config/beta2", cfg.beta2);
        c.put_scalar("config/lr_generator", cfg.lr_generator);
        c.put_scalar("config/lr_discriminator", cfg.lr_discriminator);
        c.put_scalar("config/batch_size", cfg.batch_size as f64);
        c.put_scalar("config/steps", cfg.steps as f64);
        c.put_scalar("config/seed_hi", (cfg.seed >> 32) as f64);
        c.put_scalar("config/seed_lo", (cfg.seed & 0xFFFF_FFFF) as f64);
        c.put_scalar("config/sn_iterations", cfg.sn_iterations as f64);
        c.put_scalar("config/checkpoint_every", cfg.checkpoint_every as f64);
        c.put_scalar("step", self.step as f64);
        put_net(&mut c, "g", &self.generator.params, &self.generator.sn);
        put_net(
            &mut c,
            "d",
            &self.discriminator.params,
            &self.discriminator.sn,
        );
        put_vbn(&mut c, &self.discriminator.vbn);
        put_adam(&mut c, "adam_g", &self.generator.params, &self.adam_g);
        put_adam(&mut c, "adam_d", &self.discriminator.params, &self.adam_d);
        c
    }

    /// Restores a run; the log starts empty and continues at the stored step.
    pub fn from_checkpoint(c: &Checkpoint) -> GanResult<Self> {
        let arch = get_arch(c)?;
        let seed = ((c.get_scalar("config/seed_hi")? as u64) << 32)
            | c.get_scalar("config/seed_lo")? as u64;
        let config = GanTrainConfig {
            lambda: c.get_scalar("config/lambda")?,
            beta1: c.get_scalar("config/beta1")?,
            beta2: c.get_scalar("config/beta2")?,
            lr_generator: c.get_scalar("config/lr_generator")?,
            lr_discriminator: c.get_scalar("config/lr_discriminator")?,
            batch_size: c.get_scalar("config/batch_size")? as usize,
            steps: c.get_scalar("config/steps")? as u64,
            seed,
            sn_iterations: c.get_scalar("config/sn_iterations")? as usize,
            checkpoint_every: c.get_scalar("config/checkpoint_every")? as u64,
        };
        let mut t = Trainer::new(&arch, &config)?;
        get_net(c, "g", &mut t.generator.params, &mut t.generator.sn)?;
        get_net(c, "d", &mut t.discriminator.params, &mut t.discriminator.sn)?;
        t.discriminator.vbn = get_vbn(c)?;
        get_adam(c, "adam_g", &t.generator.params, &mut t.adam_g)?;
        get_adam(c, "adam_d", &t.discriminator.params, &mut t.adam_d)?;
        t.step = c.get_scalar("step")? as u64;
        Ok(t)
    }
}

fn put_arch(c: &mut Checkpoint, a: &ArchitectureConfig) {
    c.put_scalar("arch/input_length", a.input_length as f64);
    c.put_scalar("arch/kernel", a.kernel as f64);
    c.put_scalar("arch/leaky_slope", a.leaky_slope);
    c.put_scalar("arch/width_scale", a.width_scale);
    c.put_scalar("arch/length_scale", a.length_scale);
    c.put_scalar(
        "arch/per_channel_skips",
        f64::from(u8::from(a.per_channel_skips)),
    );
    let ch: Vec<f64> = a.encoder_channels.iter().map(|&v| v as f64).collect();
    c.put("arch/encoder_channels", &Tensor::<f64>::from_slice(&ch));
}

fn get_arch(c: &Checkpoint) -> GanResult<ArchitectureConfig> {
    let ch = c.get::<f64>("arch/encoder_channels")?;
    if ch.len() != 8 {
        return Err(GanError::Config(
            "checkpoint has a malformed channel schedule".into(),
        ));
    }
    let mut encoder_channels = [0usize; 8];
    for (d, &s) in encoder_channels.iter_mut().zip(ch.data()) {
        *d = s as usize;
    }
    let a = ArchitectureConfig {
        input_length: c.get_scalar("arch/input_length")? as usize,
        encoder_channels,
        kernel: c.get_scalar("arch/kernel")? as usize,
        leaky_slope: c.get_scalar("arch/leaky_slope")?,
        width_scale: c.get_scalar("arch/width_scale")?,
        length_scale: c.get_scalar("arch/length_scale")?,
        per_channel_skips: c.get_scalar("arch/per_channel_skips")? != 0.0,
    };
    a.validate()?;
    Ok(a)
}

fn put_net<T: Real>(
    c: &mut Checkpoint,
    prefix: &str,
    params: &ParamSet<T>,
    sn: &[Option<SpectralNormState<T>>],
) {
    for (i, (name, t)) in params.iter().enumerate() {
        c.put(format!("{prefix}/{name}"), t);
        if let Some(s) = &sn[i] {
            c.put(format!("{prefix}/sn/{name}/u"), &Tensor::from_slice(&s.u));
            c.put(format!("{prefix}/sn/{name}/v"), &Tensor::from_slice(&s.v));
            c.put_scalar(
                format!("{prefix}/sn/{name}/iterations"),
                s.iterations as f64,
            );
        }
    }
}

fn get_net<T: Real>(
    c: &Checkpoint,
    prefix: &str,
    params: &mut ParamSet<T>,
    sn: &mut [Option<SpectralNormState<T>>],
) -> GanResult<()> {
    for (i, state) in sn.iter_mut().enumerate().take(params.len()) {
        let name = params.name(i).to_string();
        let t = c.get::<T>(&format!("{prefix}/{name}"))?;
        if t.shape() != params.at(i).shape() {
            return Err(GanError::Dimension(format!(
                "checkpoint tensor {prefix}/{name} has shape {:?}, expected {:?}",
                t.shape(),
                params.at(i).shape()
            )));
        }
        *params.at_mut(i) = t;
        if let Some(s) = state {
            s.u = c.get::<T>(&format!("{prefix}/sn/{name}/u"))?.into_data();
            s.v = c.get::<T>(&format!("{prefix}/sn/{name}/v"))?.into_data();
            s.iterations = c.get_scalar(&format!("{prefix}/sn/{name}/iterations"))? as u64;
            s.check_shape(params.at(i))?;
        }
    }
    Ok(())
}

fn put_vbn<T: Real>(c: &mut Checkpoint, vbn: &VbnState<T>) {
    c.put_scalar("d/vbn/reference_size", vbn.reference_size as f64);
    c.put_scalar("d/vbn/eps", vbn.eps.to_f64_lossy());
    for (i, l) in vbn.layers().iter().enumerate() {
        if let Some(l) = l {
            c.put(format!("d/vbn/{i}/mean"), &Tensor::from_slice(&l.mean));
            c.put(format!("d/vbn/{i}/var"), &Tensor::from_slice(&l.var));
        }
    }
}

fn get_vbn<T: Real>(c: &Checkpoint) -> GanResult<VbnState<T>> {
    let n = c.get_scalar("d/vbn/reference_size")? as usize;
    let eps = real::<T>(c.get_scalar("d/vbn/eps")?);
    if n == 0 {
        let mut s = VbnState::new(8);
        s.eps = eps;
        return Ok(s);
    }
    let layers = (0..8)
        .map(|i| {
            Ok(VbnLayerStats {
                mean: c.get::<T>(&format!("d/vbn/{i}/mean"))?.into_data(),
                var: c.get::<T>(&format!("d/vbn/{i}/var"))?.into_data(),
            })
        })
        .collect::<GanResult<Vec<_>>>()?;
    Ok(VbnState::restore(layers, n, eps))
}

fn put_adam<T: Real>(c: &mut Checkpoint, prefix: &str, params: &ParamSet<T>, adam: &Adam<T>) {
    for (i, (name, _)) in params.iter().enumerate() {
        let s = &adam.states[i];
        c.put(format!("{prefix}/{name}/m"), &Tensor::from_slice(&s.m));
        c.put(format!("{prefix}/{name}/v"), &Tensor::from_slice(&s.v));
        c.put_scalar(format!("{prefix}/{name}/t"), s.t as f64);
    }
}

fn get_adam<T: Real>(
    c: &Checkpoint,
    prefix: &str,
    params: &ParamSet<T>,
    adam: &mut Adam<T>,
) -> GanResult<()> {
    for i in 0..params.len() {
        let name = params.name(i);
        let m = c.get::<T>(&format!("{prefix}/{name}/m"))?.into_data();
        let v = c.get::<T>(&format!("{prefix}/{name}/v"))?.into_data();
        if m.len() != params.at(i).len() || v.len() != m.len() {
            return Err(GanError::Dimension(format!(
                "optimiser state for {prefix}/{name}"
            )));
        }
        adam.states[i] = AdamState {
            m,
            v,
            t: c.get_scalar(&format!("{prefix}/{name}/t"))? as u64,
        };
    }
    Ok(())
}

impl GeneratorWeights<f32> {
    /// Loads the generator half of a training checkpoint.
    pub fn from_checkpoint(c: &Checkpoint) -> GanResult<Self> {
        let arch = get_arch(c)?;
        let mut g = GeneratorWeights::init(&arch, 0)?;
        get_net(c, "g", &mut g.params, &mut g.sn)?;
        Ok(g)
    }
}
