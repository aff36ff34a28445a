//! The recording tape and its backward pass.

use super::kernels::{self, ConvGeometry};
use super::norm::{SpectralNormState, VbnLayerStats};
use super::{dim_err, real, Real, Tensor, TensorError, TensorResult};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    TransposedConv1d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Tanh {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        da: usize,
        db: usize,
        inner: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    Offset {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Square {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    AddN {
        xs: Vec<Var>,
    },
    Reshape {
        x: Var,
    },
    Skip {
        enc: Var,
        dec: Var,
        w: Var,
    },
    SpectralNorm {
        w: Var,
        u: Vec<T>,
        v: Vec<T>,
        sigma: T,
    },
    Vbn {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<T>,
        mean: Vec<T>,
        sigma: Vec<T>,
        example_weight: T,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::TransposedConv1d { .. } => "transposed_conv1d",
            Op::MaxPool { .. } => "maxpool1d",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh { .. } => "tanh",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Dense { .. } => "dense",
            Op::Concat { .. } => "concat",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Offset { .. } => "offset",
            Op::Abs { .. } => "abs",
            Op::Square { .. } => "square",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::AddN { .. } => "add_n",
            Op::Reshape { .. } => "reshape",
            Op::Skip { .. } => "apply_skip",
            Op::SpectralNorm { .. } => "spectral_normalize",
            Op::Vbn { .. } => "virtual_batch_norm",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records operations in execution order, so every node's inputs precede it.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros shaped like `like` when `var` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorResult<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn two_d<T: Real>(op: &'static str, t: &Tensor<T>) -> TensorResult<(usize, usize)> {
    match t.shape() {
        [c, l] => Ok((*c, *l)),
        s => Err(dim_err(
            op,
            format!("expected channels x length, got {s:?}"),
        )),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: false,
        }
    }

    /// Debug verification mode: every produced value is checked for NaN/Inf.
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> TensorResult<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Stride-`stride` convolution with same-length zero padding, no bias.
    /// `x`: `C_in × L`, `w`: `C_out × C_in × K`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, dilation: usize) -> TensorResult<Var> {
        let k = *self.value(w).shape().last().unwrap_or(&1);
        let geom = ConvGeometry::same(k, stride, dilation)?;
        self.conv1d_with(x, w, geom)
    }

    pub fn conv1d_with(&mut self, x: Var, w: Var, geom: ConvGeometry) -> TensorResult<Var> {
        let (cin, lx) = two_d("conv1d", self.value(x))?;
        let (cout, wcin, k) = match self.value(w).shape() {
            [o, c, k] => (*o, *c, *k),
            s => return Err(dim_err("conv1d", format!("weight must be 3-D, got {s:?}"))),
        };
        if wcin != cin || k != geom.kernel {
            return Err(dim_err(
                "conv1d",
                format!("input has {cin} channels, weight expects {wcin} (kernel {k})"),
            ));
        }
        let ly = geom.output_len(lx)?;
        let y = kernels::conv_forward(
            self.value(x).data(),
            cin,
            lx,
            self.value(w).data(),
            cout,
            &geom,
            ly,
        );
        let out = Tensor::new(vec![cout, ly], y)?;
        self.push(out, Op::Conv1d { x, w, geom }, &[x, w])
    }

    /// Adjoint of the strided convolution: maps `C_in × M` to `C_out × stride·M`.
    /// `w`: `C_in × C_out × K`.
    pub fn transposed_conv1d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        dilation: usize,
    ) -> TensorResult<Var> {
        let k = *self.value(w).shape().last().unwrap_or(&1);
        let geom = ConvGeometry::same(k, stride, dilation)?;
        self.transposed_conv1d_with(x, w, geom)
    }

    pub fn transposed_conv1d_with(
        &mut self,
        x: Var,
        w: Var,
        geom: ConvGeometry,
    ) -> TensorResult<Var> {
        let (cin, m) = two_d("transposed_conv1d", self.value(x))?;
        let (wcin, cout, k) = match self.value(w).shape() {
            [i, o, k] => (*i, *o, *k),
            s => {
                return Err(dim_err(
                    "transposed_conv1d",
                    format!("weight must be 3-D, got {s:?}"),
                ))
            }
        };
        if wcin != cin || k != geom.kernel {
            return Err(dim_err(
                "transposed_conv1d",
                format!("input has {cin} channels, weight expects {wcin}"),
            ));
        }
        let lout = geom.transposed_output_len(m)?;
        let y = kernels::conv_backward_input(
            self.value(x).data(),
            cin,
            m,
            self.value(w).data(),
            cout,
            &geom,
            lout,
        );
        let out = Tensor::new(vec![cout, lout], y)?;
        self.push(out, Op::TransposedConv1d { x, w, geom }, &[x, w])
    }

    /// Non-overlapping max over pairs; ties go to the first index.
    pub fn maxpool1d(&mut self, x: Var) -> TensorResult<Var> {
        let (c, l) = two_d("maxpool1d", self.value(x))?;
        if l % 2 != 0 {
            return Err(dim_err("maxpool1d", format!("length {l} is odd")));
        }
        let half = l / 2;
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(c * half);
        let mut argmax = Vec::with_capacity(c * half);
        for ch in 0..c {
            for j in 0..half {
                let i0 = ch * l + 2 * j;
                let (a, b) = (xs[i0], xs[i0 + 1]);
                if a >= b || b.is_nan() {
                    out.push(a);
                    argmax.push(i0 as u32);
                } else {
                    out.push(b);
                    argmax.push(i0 as u32 + 1);
                }
            }
        }
        let out = Tensor::new(vec![c, half], out)?;
        self.push(out, Op::MaxPool { x, argmax }, &[x])
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> TensorResult<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        self.push(out, op, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> TensorResult<Var> {
        self.map(
            x,
            |v| if v > T::zero() { v } else { v * slope },
            Op::LeakyRelu { x, slope },
        )
    }

    pub fn tanh(&mut self, x: Var) -> TensorResult<Var> {
        self.map(x, |v| v.tanh(), Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> TensorResult<Var> {
        self.map(
            x,
            |v| {
                if v >= T::zero() {
                    T::one() / (T::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (T::one() + e)
                }
            },
            Op::Sigmoid { x },
        )
    }

    pub fn abs(&mut self, x: Var) -> TensorResult<Var> {
        self.map(x, |v| v.abs(), Op::Abs { x })
    }

    pub fn square(&mut self, x: Var) -> TensorResult<Var> {
        self.map(x, |v| v * v, Op::Square { x })
    }

    pub fn scale(&mut self, x: Var, c: T) -> TensorResult<Var> {
        self.map(x, |v| v * c, Op::Scale { x, c })
    }

    /// `x + c` element-wise.
    pub fn add_scalar(&mut self, x: Var, c: T) -> TensorResult<Var> {
        self.map(x, |v| v + c, Op::Offset { x })
    }

    /// Affine map of the flattened input: `W x + b`, `W`: `M × N`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> TensorResult<Var> {
        let n = self.value(x).len();
        let (m, wn) = match self.value(w).shape() {
            [m, n] => (*m, *n),
            s => return Err(dim_err("dense", format!("weight must be 2-D, got {s:?}"))),
        };
        if wn != n || self.value(b).len() != m {
            return Err(dim_err(
                "dense",
                format!("input {n}, weight {m}x{wn}, bias {}", self.value(b).len()),
            ));
        }
        let (xs, ws, bs) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let y = (0..m)
            .map(|r| kernels::dot(&ws[r * n..(r + 1) * n], xs) + bs[r])
            .collect();
        let out = Tensor::new(vec![m], y)?;
        self.push(out, Op::Dense { x, w, b }, &[x, w, b])
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> TensorResult<Var> {
        let (sa, sb) = (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(dim_err("concat", format!("{sa:?} and {sb:?} along {axis}")));
        }
        for (i, (x, y)) in sa.iter().zip(&sb).enumerate() {
            if i != axis && x != y {
                return Err(dim_err("concat", format!("{sa:?} and {sb:?} along {axis}")));
            }
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let (da, db) = (sa[axis], sb[axis]);
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(xa.len() + xb.len());
        for o in 0..outer {
            data.extend_from_slice(&xa[o * da * inner..(o + 1) * da * inner]);
            data.extend_from_slice(&xb[o * db * inner..(o + 1) * db * inner]);
        }
        let mut shape = sa;
        shape[axis] = da + db;
        let out = Tensor::new(shape, data)?;
        self.push(
            out,
            Op::Concat {
                a,
                b,
                outer,
                da,
                db,
                inner,
            },
            &[a, b],
        )
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> TensorResult<Var> {
        same_shape(name, self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push(out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn sum(&mut self, x: Var) -> TensorResult<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> TensorResult<Var> {
        let t = self.value(x);
        let s: T = t.data().iter().copied().sum();
        let m = s / real::<T>(t.len() as f64);
        self.push(Tensor::scalar(m), Op::Mean { x }, &[x])
    }

    /// Sum of equally shaped values.
    pub fn add_n(&mut self, xs: &[Var]) -> TensorResult<Var> {
        let first = *xs.first().ok_or_else(|| dim_err("add_n", "no operands"))?;
        let mut acc = self.value(first).clone();
        for &v in &xs[1..] {
            same_shape("add_n", &acc, self.value(v))?;
            for (a, &b) in acc.data_mut().iter_mut().zip(self.value(v).data()) {
                *a += b;
            }
        }
        self.push(acc, Op::AddN { xs: xs.to_vec() }, xs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> TensorResult<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape { x }, &[x])
    }

    /// Weighted skip connection: `decoder + weight · encoder`. `weight` holds
    /// either one scalar or one value per channel.
    pub fn apply_skip(&mut self, encoder: Var, decoder: Var, weight: Var) -> TensorResult<Var> {
        same_shape("apply_skip", self.value(encoder), self.value(decoder))?;
        let (c, l) = two_d("apply_skip", self.value(encoder))?;
        let wlen = self.value(weight).len();
        if wlen != 1 && wlen != c {
            return Err(dim_err(
                "apply_skip",
                format!("skip weight has {wlen} values for {c} channels"),
            ));
        }
        let ws = self.value(weight).data().to_vec();
        let mut out = self.value(decoder).clone();
        let enc = self.value(encoder).data();
        for ch in 0..c {
            let w = if wlen == 1 { ws[0] } else { ws[ch] };
            kernels::axpy(
                w,
                &enc[ch * l..(ch + 1) * l],
                &mut out.data_mut()[ch * l..(ch + 1) * l],
            );
        }
        self.push(
            out,
            Op::Skip {
                enc: encoder,
                dec: decoder,
                w: weight,
            },
            &[encoder, decoder, weight],
        )
    }

    /// `w / σ̂` with `σ̂ = uᵀ W v` taken from `state` (no power iteration; the
    /// caller advances the state). `u` and `v` are treated as constants.
    pub fn spectral_norm(&mut self, w: Var, state: &SpectralNormState<T>) -> TensorResult<Var> {
        let wt = self.value(w);
        state.check_shape(wt)?;
        let sigma = state.sigma(wt);
        let data = wt.data().iter().map(|&x| x / sigma).collect();
        let out = Tensor::new(wt.shape().to_vec(), data)?;
        self.push(
            out,
            Op::SpectralNorm {
                w,
                u: state.u.clone(),
                v: state.v.clone(),
                sigma,
            },
            &[w],
        )
    }

    /// Virtual batch normalisation of one `C × L` example: statistics mix the
    /// frozen reference (weight `N/(N+1)`) with the example itself (weight
    /// `1/(N+1)`), then the per-channel `gain` and `shift` are applied.
    pub fn virtual_batch_norm(
        &mut self,
        x: Var,
        gain: Var,
        shift: Var,
        reference: &VbnLayerStats<T>,
        reference_size: usize,
        eps: T,
    ) -> TensorResult<Var> {
        let (c, l) = two_d("virtual_batch_norm", self.value(x))?;
        if reference.mean.len() != c || self.value(gain).len() != c || self.value(shift).len() != c
        {
            return Err(dim_err(
                "virtual_batch_norm",
                format!("{c} channels vs reference {}", reference.mean.len()),
            ));
        }
        if reference_size == 0 {
            return Err(TensorError::State("empty reference batch".into()));
        }
        let n = real::<T>(reference_size as f64);
        let ew = T::one() / (n + T::one());
        let rw = n * ew;
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(gain).data(), self.value(shift).data());
        let lt = real::<T>(l as f64);
        let mut xhat = Vec::with_capacity(c * l);
        let mut means = Vec::with_capacity(c);
        let mut sigmas = Vec::with_capacity(c);
        let mut out = Vec::with_capacity(c * l);
        for ch in 0..c {
            let row = &xs[ch * l..(ch + 1) * l];
            let ex_mean = row.iter().copied().sum::<T>() / lt;
            let ex_m2 = row.iter().map(|&v| v * v).sum::<T>() / lt;
            let ref_mean = reference.mean[ch];
            let ref_m2 = reference.var[ch] + ref_mean * ref_mean;
            let mean = rw * ref_mean + ew * ex_mean;
            let m2 = rw * ref_m2 + ew * ex_m2;
            let var = (m2 - mean * mean).max(T::zero());
            let sigma = (var + eps).sqrt();
            for &v in row {
                let h = (v - mean) / sigma;
                xhat.push(h);
                out.push(gs[ch] * h + bs[ch]);
            }
            means.push(mean);
            sigmas.push(sigma);
        }
        let out = Tensor::new(vec![c, l], out)?;
        self.push(
            out,
            Op::Vbn {
                x,
                gain,
                shift,
                xhat,
                mean: means,
                sigma: sigmas,
                example_weight: ew,
            },
            &[x, gain, shift],
        )
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// when a value is used more than once.
    pub fn backward(&self, loss: Var) -> TensorResult<Gradients<T>> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients {
                grads: (0..self.nodes.len()).map(|_| None).collect(),
            });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &gy, &mut grads);
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, g) in grads.into_iter().enumerate() {
            let node = &self.nodes[i];
            out.push(match (g, &node.op) {
                (Some(g), Op::Leaf) => Some(Tensor::new(node.value.shape().to_vec(), g)?),
                _ => None,
            });
        }
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop_node(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w, geom } => {
                let (cin, lx) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let (cout, ly) = (node.value.shape()[0], node.value.shape()[1]);
                if self.wants(*x) {
                    let gx = kernels::conv_backward_input(
                        gy,
                        cout,
                        ly,
                        self.value(*w).data(),
                        cin,
                        geom,
                        lx,
                    );
                    self.accumulate(grads, *x, gx);
                }
                if self.wants(*w) {
                    let gw = kernels::conv_backward_weight(
                        gy,
                        cout,
                        ly,
                        self.value(*x).data(),
                        cin,
                        lx,
                        geom,
                    );
                    self.accumulate(grads, *w, gw);
                }
            }
            Op::TransposedConv1d { x, w, geom } => {
                let (cin, m) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let (cout, lout) = (node.value.shape()[0], node.value.shape()[1]);
                if self.wants(*x) {
                    let gx =
                        kernels::conv_forward(gy, cout, lout, self.value(*w).data(), cin, geom, m);
                    self.accumulate(grads, *x, gx);
                }
                if self.wants(*w) {
                    let gw = kernels::conv_backward_weight(
                        self.value(*x).data(),
                        cin,
                        m,
                        gy,
                        cout,
                        lout,
                        geom,
                    );
                    self.accumulate(grads, *w, gw);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![T::zero(); self.value(*x).len()];
                for (&src, &g) in argmax.iter().zip(gy) {
                    gx[src as usize] += g;
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LeakyRelu { x, slope } => {
                let xs = self.value(*x).data();
                let gx = xs
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { g * *slope })
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::Tanh { x } => {
                let gx = y
                    .iter()
                    .zip(gy)
                    .map(|(&t, &g)| g * (T::one() - t * t))
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::Sigmoid { x } => {
                let gx = y
                    .iter()
                    .zip(gy)
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::Dense { x, w, b } => {
                let xs = self.value(*x).data();
                let ws = self.value(*w).data();
                let n = xs.len();
                if self.wants(*x) {
                    let mut gx = vec![T::zero(); n];
                    for (r, &g) in gy.iter().enumerate() {
                        kernels::axpy(g, &ws[r * n..(r + 1) * n], &mut gx);
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.wants(*w) {
                    let mut gw = vec![T::zero(); ws.len()];
                    for (r, &g) in gy.iter().enumerate() {
                        kernels::axpy(g, xs, &mut gw[r * n..(r + 1) * n]);
                    }
                    self.accumulate(grads, *w, gw);
                }
                self.accumulate(grads, *b, gy.to_vec());
            }
            Op::Concat {
                a,
                b,
                outer,
                da,
                db,
                inner,
            } => {
                let (sa, sb) = (da * inner, db * inner);
                let mut ga = Vec::with_capacity(outer * sa);
                let mut gb = Vec::with_capacity(outer * sb);
                for o in 0..*outer {
                    let base = o * (sa + sb);
                    ga.extend_from_slice(&gy[base..base + sa]);
                    gb.extend_from_slice(&gy[base + sa..base + sa + sb]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, gy.to_vec());
                self.accumulate(grads, *b, gy.to_vec());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, gy.to_vec());
                self.accumulate(grads, *b, gy.iter().map(|&g| -g).collect());
            }
            Op::Mul { a, b } => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    self.accumulate(grads, *a, gy.iter().zip(xb).map(|(&g, &v)| g * v).collect());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, gy.iter().zip(xa).map(|(&g, &v)| g * v).collect());
                }
            }
            Op::Scale { x, c } => {
                self.accumulate(grads, *x, gy.iter().map(|&g| g * *c).collect());
            }
            Op::Offset { x } | Op::Reshape { x } => {
                self.accumulate(grads, *x, gy.to_vec());
            }
            Op::Abs { x } => {
                let xs = self.value(*x).data();
                let gx = xs
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| {
                        if v > T::zero() {
                            g
                        } else if v < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::Square { x } => {
                let xs = self.value(*x).data();
                let two = real::<T>(2.0);
                self.accumulate(
                    grads,
                    *x,
                    xs.iter().zip(gy).map(|(&v, &g)| two * v * g).collect(),
                );
            }
            Op::Sum { x } => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gy[0]; n]);
            }
            Op::Mean { x } => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gy[0] / real::<T>(n as f64); n]);
            }
            Op::AddN { xs } => {
                for &v in xs {
                    self.accumulate(grads, v, gy.to_vec());
                }
            }
            Op::Skip { enc, dec, w } => {
                let e = self.value(*enc);
                let (c, l) = (e.shape()[0], e.shape()[1]);
                let ws = self.value(*w).data();
                let per_channel = ws.len() != 1;
                self.accumulate(grads, *dec, gy.to_vec());
                if self.wants(*enc) {
                    let mut ge = Vec::with_capacity(c * l);
                    for ch in 0..c {
                        let wv = if per_channel { ws[ch] } else { ws[0] };
                        ge.extend(gy[ch * l..(ch + 1) * l].iter().map(|&g| g * wv));
                    }
                    self.accumulate(grads, *enc, ge);
                }
                if self.wants(*w) {
                    let ed = e.data();
                    let gw = if per_channel {
                        (0..c)
                            .map(|ch| {
                                kernels::dot(&ed[ch * l..(ch + 1) * l], &gy[ch * l..(ch + 1) * l])
                            })
                            .collect()
                    } else {
                        vec![kernels::dot(ed, gy)]
                    };
                    self.accumulate(grads, *w, gw);
                }
            }
            Op::SpectralNorm { w, u, v, sigma } => {
                // d(W/σ)/dW with σ = uᵀWv: G/σ − (⟨G, W⟩/σ²) u vᵀ
                let ws = self.value(*w).data();
                let proj = kernels::dot(gy, ws) / (*sigma * *sigma);
                let cols = v.len();
                let mut gw = Vec::with_capacity(ws.len());
                for (r, &ur) in u.iter().enumerate() {
                    for (cidx, &vc) in v.iter().enumerate() {
                        let i = r * cols + cidx;
                        gw.push(gy[i] / *sigma - proj * ur * vc);
                    }
                }
                self.accumulate(grads, *w, gw);
            }
            Op::Vbn {
                x,
                gain,
                shift,
                xhat,
                mean,
                sigma,
                example_weight,
            } => {
                let xt = self.value(*x);
                let (c, l) = (xt.shape()[0], xt.shape()[1]);
                let xs = xt.data();
                let gs = self.value(*gain).data();
                let lt = real::<T>(l as f64);
                let two = real::<T>(2.0);
                let mut ggain = vec![T::zero(); c];
                let mut gshift = vec![T::zero(); c];
                let mut gx = Vec::with_capacity(c * l);
                for ch in 0..c {
                    let rows = ch * l..(ch + 1) * l;
                    let (g_row, h_row, x_row) = (&gy[rows.clone()], &xhat[rows.clone()], &xs[rows]);
                    ggain[ch] = kernels::dot(g_row, h_row);
                    gshift[ch] = g_row.iter().copied().sum();
                    let (mu, sd) = (mean[ch], sigma[ch]);
                    // dL/dx̂ = gain · dL/dy
                    let s1 = gs[ch] * gshift[ch];
                    let s2 = gs[ch]
                        * g_row
                            .iter()
                            .zip(x_row)
                            .fold(T::zero(), |a, (&g, &v)| a + g * (v - mu));
                    let d_mean = -s1 / sd + s2 * mu / (sd * sd * sd);
                    let d_m2 = -s2 / (two * sd * sd * sd);
                    let a = *example_weight / lt;
                    for (&g, &v) in g_row.iter().zip(x_row) {
                        gx.push(gs[ch] * g / sd + d_mean * a + d_m2 * two * a * v);
                    }
                }
                if self.wants(*x) {
                    self.accumulate(grads, *x, gx);
                }
                self.accumulate(grads, *gain, ggain);
                self.accumulate(grads, *shift, gshift);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[1., 2., 3.]));
        let w = tape.constant(t(&[1, 1, 3], &[0., 1., 0.]));
        let y = tape.conv1d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[1., 2., 3.]);
    }

    #[test]
    fn box_filter_with_zero_padding() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 4], &[1., 1., 1., 1.]));
        let w = tape.constant(t(&[1, 1, 3], &[1., 1., 1.]));
        let y = tape.conv1d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[2., 3., 3., 2.]);
    }

    #[test]
    fn conv_channel_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 4], &[0.; 8]));
        let w = tape.constant(t(&[1, 1, 3], &[1., 1., 1.]));
        assert!(matches!(
            tape.conv1d(x, w, 1, 1),
            Err(TensorError::Dimension { .. })
        ));
    }

    #[test]
    fn unit_kernel_transposed_conv_upsamples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1., 0.]));
        let w = tape.constant(t(&[1, 1, 1], &[1.]));
        let y = tape.transposed_conv1d(x, w, 2, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 4]);
        assert_eq!(tape.value(y).data(), &[1., 0., 0., 0.]);
    }

    #[test]
    fn maxpool_values_and_tie_break() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1, 4], &[1., 3., 2., 2.]));
        let y = tape.maxpool1d(x).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 2.]);

        let mut tape = Tape::new();
        let x = tape.param(t(&[1, 2], &[5., 5.]));
        let y = tape.maxpool1d(x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(tape.value(y).data(), &[5.]);
        assert_eq!(g.get(x).unwrap().data(), &[1., 0.]);

        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[1., 2., 3.]));
        assert!(tape.maxpool1d(x).is_err());
    }

    #[test]
    fn activations_at_reference_points() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[-1.]));
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert!((tape.scalar(y) + 0.2).abs() < 1e-15);
        let z = tape.constant(t(&[1], &[0.]));
        let th = tape.tanh(z).unwrap();
        let sg = tape.sigmoid(z).unwrap();
        assert_eq!(tape.scalar(th), 0.0);
        assert_eq!(tape.scalar(sg), 0.5);
    }

    #[test]
    fn dense_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[1., 2., 3.]));
        let w = tape.constant(t(&[1, 3], &[1., 1., 1.]));
        let b = tape.constant(t(&[1], &[0.]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[6.]);

        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let zb = tape.constant(t(&[3], &[0., 0., 0.]));
        let y = tape.dense(x, eye, zb).unwrap();
        assert_eq!(tape.value(y).data(), &[1., 2., 3.]);
        assert!(tape.dense(x, w, zb).is_err());
    }

    #[test]
    fn concat_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1., 2.]));
        let b = tape.constant(t(&[1], &[3.]));
        let c = tape.concat(a, b, 0).unwrap();
        assert_eq!(tape.value(c).data(), &[1., 2., 3.]);

        let latent = tape.constant(Tensor::zeros(&[1024, 8]));
        let noise = tape.constant(Tensor::zeros(&[1024, 8]));
        let joined = tape.concat(latent, noise, 1).unwrap();
        assert_eq!(tape.value(joined).shape(), &[1024, 16]);

        let bad = tape.constant(Tensor::zeros(&[512, 8]));
        assert!(tape.concat(latent, bad, 1).is_err());
    }

    #[test]
    fn skip_examples() {
        let mut tape = Tape::new();
        let e = tape.constant(t(&[1, 2], &[3., 4.]));
        let d = tape.constant(t(&[1, 2], &[1., 1.]));
        let w0 = tape.constant(t(&[1], &[0.]));
        let out = tape.apply_skip(e, d, w0).unwrap();
        assert_eq!(tape.value(out).data(), &[1., 1.]);
        let zero = tape.constant(t(&[1, 2], &[0., 0.]));
        let w1 = tape.constant(t(&[1], &[1.]));
        let out = tape.apply_skip(e, zero, w1).unwrap();
        assert_eq!(tape.value(out).data(), &[3., 4.]);
        let short = tape.constant(t(&[1, 1], &[0.]));
        assert!(tape.apply_skip(e, short, w1).is_err());
    }

    #[test]
    fn backward_basics() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[3.]));
        let g = tape.backward(x).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.]);

        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1., -2., 0.5]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2., -4., 1.]);

        assert!(matches!(
            tape.backward(sq),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn reuse_accumulates_gradients() {
        // f = sum(2x) + sum(x²) : a tensor used along two paths
        let x0 = t(&[2], &[0.5, -1.5]);
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let a = tape.scale(x, 2.0).unwrap();
        let sa = tape.sum(a).unwrap();
        let b = tape.square(x).unwrap();
        let sb = tape.sum(b).unwrap();
        let loss = tape.add(sa, sb).unwrap();
        let both = tape.backward(loss).unwrap().get(x).unwrap().clone();
        let ga = tape.backward(sa).unwrap().get(x).unwrap().clone();
        let gb = tape.backward(sb).unwrap().get(x).unwrap().clone();
        for i in 0..2 {
            assert_eq!(both.data()[i], ga.data()[i] + gb.data()[i]);
        }
    }

    #[test]
    fn finite_checks_flag_nan() {
        let mut tape = Tape::new().with_finite_checks(true);
        let x = tape.constant(t(&[1], &[f64::INFINITY]));
        let z = tape.constant(t(&[1], &[0.]));
        assert!(matches!(tape.mul(x, z), Err(TensorError::NonFinite { .. })));
    }
}
