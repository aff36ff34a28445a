//! Test-only oracles: central finite differences and a Jacobi SVD.
#![allow(dead_code)]

use ictogen::gan::{
    ArchitectureConfig, Discriminator, DiscriminatorWeights, Generator, GeneratorWeights, Network,
};
use ictogen::seed;
use ictogen::tensor::{SpectralNormState, Tape, Tensor, Var, VbnLayerStats, VbnState};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn randn(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(shape.to_vec(), v).unwrap()
}

/// Relative error with a floor so that two tiny numbers compare as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        d / 1e-7
    } else {
        d / scale
    }
}

/// Compares reverse-mode gradients of `f(inputs)` with central differences.
///
/// `f` records a scalar loss on the tape from leaf handles. At most
/// `max_coords` coordinates per input are probed (evenly spaced). Returns the
/// worst relative error.
pub fn grad_check<F>(inputs: &[Tensor<f64>], f: F, h: f64, max_coords: usize) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.scalar(loss)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input);
        let n = input.len();
        let step = (n / max_coords.max(1)).max(1);
        for i in (0..n).step_by(step) {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let e = rel_err(analytic.data()[i], numeric);

            worst = worst.max(e);
        }
    }
    worst
}

/// Projects an arbitrary output onto a fixed random direction so that every
/// output coordinate contributes to a scalar loss.
pub fn project(tape: &mut Tape<f64>, out: Var, direction: &Tensor<f64>) -> Var {
    let r = tape.constant(direction.clone());
    let p = tape.mul(out, r).unwrap();
    tape.sum(p).unwrap()
}

/// Singular values of a dense `rows × cols` matrix by one-sided Jacobi
/// rotations, sorted descending.
pub fn singular_values(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    // Work on columns of A (cols vectors of length rows).
    let mut m: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..rows).map(|r| a[r * cols + c]).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = m[p].iter().map(|x| x * x).sum();
                let beta: f64 = m[q].iter().map(|x| x * x).sum();
                let gamma: f64 = m[p].iter().zip(&m[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() < 1e-300 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = m.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()).take(rows) {
                    (*x, *y) = (c * *x - s * *y, s * *x + c * *y);
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = m
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Worst relative error of the end-to-end generator loss gradient (two
/// examples, λ = 100) over every generator parameter tensor, skip weights
/// included, probing `coords` entries per tensor. The discriminator is held
/// fixed with a frozen reference batch; spectral-norm vectors stay constant.
pub fn g_loss_grad_error(arch: &ArchitectureConfig, seed_value: u64, coords: usize) -> f64 {
    let mut rng = seed::rng(seed_value);
    let g = GeneratorWeights::<f64>::init(arch, seed_value).unwrap();
    let mut d = DiscriminatorWeights::<f64>::init(arch, seed_value + 1).unwrap();
    let len = arch.length();
    let reference: Vec<Tensor<f64>> = (0..4).map(|_| randn(&mut rng, &[1, len], 0.3)).collect();
    d.freeze_reference(&reference.iter().collect::<Vec<_>>())
        .unwrap();
    let xs: Vec<Tensor<f64>> = (0..2).map(|_| randn(&mut rng, &[1, len], 0.3)).collect();
    // Targets sit at ±(0.6..0.9), away from the near-zero initial outputs,
    // so no |G(x) - y| term crosses its kink under perturbation.
    let ys: Vec<Tensor<f64>> = (0..2)
        .map(|_| {
            let v: Vec<f64> = (0..len)
                .map(|_| {
                    let m: f64 = rng.random_range(0.6..0.9);
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            Tensor::new(vec![1, len], v).unwrap()
        })
        .collect();
    let zs: Vec<Tensor<f64>> = (0..2)
        .map(|_| randn(&mut rng, &g.noise_shape(), 1.0))
        .collect();
    let inputs: Vec<Tensor<f64>> = g.params.iter().map(|(_, t)| t.clone()).collect();
    grad_check_salient(
        &inputs,
        |tape, vars| {
            let gw = g.effective(tape, vars).unwrap();
            let db = d.params.bind(tape, false);
            let dw = d.effective(tape, &db).unwrap();
            let mut terms = Vec::new();
            for j in 0..2 {
                let x = tape.constant(xs[j].clone());
                let z = tape.constant(zs[j].clone());
                let y = tape.constant(ys[j].clone());
                let fake = Generator::forward(&g, tape, &gw, x, z).unwrap();
                let s = Discriminator::forward(&d, tape, &dw, fake).unwrap();
                let r = tape.add_scalar(s, -1.0).unwrap();
                let sq = tape.square(r).unwrap();
                terms.push(tape.scale(sq, 0.5).unwrap());
                let diff = tape.sub(fake, y).unwrap();
                let a = tape.abs(diff).unwrap();
                let m = tape.mean(a).unwrap();
                terms.push(tape.scale(m, 100.0 / 2.0).unwrap());
            }
            tape.add_n(&terms).unwrap()
        },
        1e-6,
        coords,
        seed_value,
    )
}

/// Like [`grad_check`], for losses whose gradient is tiny in most
/// coordinates: per input it probes the `coords` coordinates with the largest
/// analytic gradient and one direction mixing the gradient with noise, so the
/// finite-difference signal stays far above round-off.
pub fn grad_check_salient<F>(
    inputs: &[Tensor<f64>],
    f: F,
    h: f64,
    coords: usize,
    seed_value: u64,
) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.scalar(loss)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let analytics: Vec<Tensor<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(k, t)| grads.get_or_zeros(vars[k], t))
        .collect();
    // Probes far below the largest gradient are dominated by round-off in
    // the loss, so the error is measured against a floor tied to that scale.
    let floor = 1e-3
        * analytics
            .iter()
            .flat_map(|g| g.data())
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let err = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(floor).max(1e-12);
    let mut rng = seed::rng(seed_value);
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = &analytics[k];
        let mut order: Vec<usize> = (0..input.len()).collect();
        order.sort_by(|&a, &b| {
            analytic.data()[b]
                .abs()
                .total_cmp(&analytic.data()[a].abs())
        });
        let probe = |dir: &Tensor<f64>| {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            for (i, d) in dir.data().iter().enumerate() {
                plus[k].data_mut()[i] += h * d;
                minus[k].data_mut()[i] -= h * d;
            }
            (eval(&plus) - eval(&minus)) / (2.0 * h)
        };
        for &i in order.iter().take(coords) {
            let mut e = Tensor::zeros(input.shape());
            e.data_mut()[i] = 1.0;
            worst = worst.max(err(analytic.data()[i], probe(&e)));
        }
        // Half gradient, half noise: a generic direction whose derivative is
        // still of the gradient's size.
        let gnorm = analytic
            .data()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let noise = randn(&mut rng, input.shape(), 1.0 / (input.len() as f64).sqrt());
        let mixed: Vec<f64> = analytic
            .data()
            .iter()
            .zip(noise.data())
            .map(|(g, r)| g / gnorm + r)
            .collect();
        let dir = Tensor::new(input.shape().to_vec(), mixed).unwrap();
        let norm = dir.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir = Tensor::new(
            input.shape().to_vec(),
            dir.data().iter().map(|v| v / norm).collect(),
        )
        .unwrap();
        let expected: f64 = analytic
            .data()
            .iter()
            .zip(dir.data())
            .map(|(a, d)| a * d)
            .sum();
        worst = worst.max(err(expected, probe(&dir)));
    }
    worst
}

pub fn gaussian(rng: &mut impl Rng, shape: &[usize], std: f32) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n)
            .map(|_| std * rng.sample::<f32, _>(StandardNormal))
            .collect(),
    )
    .unwrap()
}

/// Encoder and decoder `(length, channels)` maps, then the output shape.
pub type Shapes = (Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<usize>);

/// `(length, channels)` of every map recorded by one generator pass.
pub fn realized_shapes(arch: &ArchitectureConfig) -> Shapes {
    let g = GeneratorWeights::<f32>::init(arch, 1).unwrap();
    let mut rng = seed::rng(2);
    let x = gaussian(&mut rng, &[1, arch.length()], 0.2);
    let z = gaussian(&mut rng, &g.noise_shape(), 1.0);
    let mut tape = Tape::new();
    let bound = g.params.bind(&mut tape, false);
    let w = g.effective(&mut tape, &bound).unwrap();
    let (xv, zv) = (tape.constant(x.clone()), tape.constant(z));
    let t = g.trace(&mut tape, &w, xv, zv).unwrap();
    let shape = |v: Var| {
        let s = tape.value(v).shape();
        (s[1], s[0])
    };
    let mut enc = vec![(x.shape()[1], x.shape()[0])];
    enc.extend(t.encoder.iter().map(|&v| shape(v)));
    let dec = t.decoder.iter().map(|&v| shape(v)).collect();
    (enc, dec, tape.value(t.output).shape().to_vec())
}

/// Plain double loop over template pairs with the Chebyshev distance.
pub fn naive_sampen_counts(x: &[f64], m: usize, r: f64) -> (u64, u64) {
    let n = x.len();
    let templates = n - m;
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            let dm = (0..m)
                .map(|k| (x[i + k] - x[j + k]).abs())
                .fold(0.0, f64::max);
            if dm < r {
                b += 1;
                if (x[i + m] - x[j + m]).abs() < r {
                    a += 1;
                }
            }
        }
    }
    (a, b)
}

/// Worst finite-difference error of every tape operation the networks use,
/// each on small random inputs drawn from `seed_value`.
pub fn op_gradient_errors(seed_value: u64) -> Vec<(&'static str, f64)> {
    const H: f64 = 1e-6;
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::new();

    let x = randn(&mut rng, &[3, 16], 1.0);
    let w = randn(&mut rng, &[4, 3, 5], 0.5);
    let mut conv = 0.0f64;
    for (stride, dilation) in [(1, 1), (2, 1), (1, 2)] {
        let dir = randn(&mut rng, &[4, 16usize.div_ceil(stride)], 1.0);
        conv = conv.max(grad_check(
            &[x.clone(), w.clone()],
            |t, v| {
                let y = t.conv1d(v[0], v[1], stride, dilation).unwrap();
                project(t, y, &dir)
            },
            H,
            64,
        ));
    }
    out.push(("conv1d", conv));

    let x = randn(&mut rng, &[4, 8], 1.0);
    let w = randn(&mut rng, &[4, 2, 7], 0.5);
    let dir = randn(&mut rng, &[2, 16], 1.0);
    out.push((
        "transposed_conv1d",
        grad_check(
            &[x, w],
            |t, v| {
                let y = t.transposed_conv1d(v[0], v[1], 2, 1).unwrap();
                project(t, y, &dir)
            },
            H,
            64,
        ),
    ));

    let x = randn(&mut rng, &[3, 20], 1.0);
    let dir = randn(&mut rng, &[3, 10], 1.0);
    out.push((
        "maxpool1d",
        grad_check(
            &[x],
            |t, v| {
                let y = t.maxpool1d(v[0]).unwrap();
                project(t, y, &dir)
            },
            H,
            60,
        ),
    ));

    let x = randn(&mut rng, &[2, 12], 1.5);
    let dir = randn(&mut rng, &[2, 12], 1.0);
    type Unary = fn(&mut Tape<f64>, Var) -> Var;
    let unary: [(&'static str, Unary); 3] = [
        ("leaky_relu", |t, v| t.leaky_relu(v, 0.2).unwrap()),
        ("tanh", |t, v| t.tanh(v).unwrap()),
        ("sigmoid", |t, v| t.sigmoid(v).unwrap()),
    ];
    for (name, op) in unary {
        out.push((
            name,
            grad_check(
                std::slice::from_ref(&x),
                |t, v| {
                    let y = op(t, v[0]);
                    project(t, y, &dir)
                },
                H,
                24,
            ),
        ));
    }

    let x = randn(&mut rng, &[6], 1.0);
    let w = randn(&mut rng, &[3, 6], 1.0);
    let b = randn(&mut rng, &[3], 1.0);
    let dir = randn(&mut rng, &[3], 1.0);
    out.push((
        "dense",
        grad_check(
            &[x, w, b],
            |t, v| {
                let y = t.dense(v[0], v[1], v[2]).unwrap();
                project(t, y, &dir)
            },
            H,
            32,
        ),
    ));

    let a = randn(&mut rng, &[3, 4], 1.0);
    let b = randn(&mut rng, &[3, 2], 1.0);
    let dir = randn(&mut rng, &[3, 6], 1.0);
    out.push((
        "concat",
        grad_check(
            &[a, b],
            |t, v| {
                let y = t.concat(v[0], v[1], 1).unwrap();
                let sq = t.square(y).unwrap();
                project(t, sq, &dir)
            },
            H,
            16,
        ),
    ));

    let enc = randn(&mut rng, &[3, 8], 1.0);
    let dec = randn(&mut rng, &[3, 8], 1.0);
    let wc = randn(&mut rng, &[3], 1.0);
    let dir = randn(&mut rng, &[3, 8], 1.0);
    out.push((
        "apply_skip",
        grad_check(
            &[enc, dec, wc],
            |t, v| {
                let y = t.apply_skip(v[0], v[1], v[2]).unwrap();
                let y = t.tanh(y).unwrap();
                project(t, y, &dir)
            },
            H,
            24,
        ),
    ));

    let a = randn(&mut rng, &[10], 1.0);
    let b = randn(&mut rng, &[10], 1.0);
    out.push((
        "elementwise",
        grad_check(
            &[a, b],
            |t, v| {
                let d = t.sub(v[0], v[1]).unwrap();
                let ab = t.abs(d).unwrap();
                let m1 = t.mean(ab).unwrap();
                let sq = t.square(v[0]).unwrap();
                let prod = t.mul(sq, v[1]).unwrap();
                let m2 = t.mean(prod).unwrap();
                let off = t.add_scalar(m2, -1.0).unwrap();
                let s2 = t.scale(off, 3.0).unwrap();
                t.add_n(&[m1, s2, m1]).unwrap()
            },
            H,
            10,
        ),
    ));

    let w = randn(&mut rng, &[4, 2, 3], 1.0);
    let mut st = SpectralNormState::new(&w, &mut rng);
    st.iterate(&w, 3);
    let dir = randn(&mut rng, &[4, 2, 3], 1.0);
    out.push((
        "spectral_norm",
        grad_check(
            &[w],
            |t, v| {
                let y = t.spectral_norm(v[0], &st).unwrap();
                project(t, y, &dir)
            },
            H,
            24,
        ),
    ));

    let refs: Vec<Tensor<f64>> = (0..6).map(|_| randn(&mut rng, &[3, 8], 1.3)).collect();
    let mut vbn = VbnState::new(1);
    vbn.set_layer(
        0,
        VbnLayerStats::from_batch(&refs.iter().collect::<Vec<_>>()).unwrap(),
    )
    .unwrap();
    vbn.freeze(refs.len()).unwrap();
    let x = randn(&mut rng, &[3, 8], 1.0);
    let gain = randn(&mut rng, &[3], 1.0);
    let shift = randn(&mut rng, &[3], 1.0);
    let dir = randn(&mut rng, &[3, 8], 1.0);
    out.push((
        "virtual_batch_norm",
        grad_check(
            &[x, gain, shift],
            |t, v| {
                let stats = vbn.layer(0).unwrap();
                let y = t
                    .virtual_batch_norm(v[0], v[1], v[2], stats, vbn.reference_size, vbn.eps)
                    .unwrap();
                project(t, y, &dir)
            },
            H,
            24,
        ),
    ));
    out
}
