//! Adam with bias correction.

use super::{ParamSet, Real, Tensor, TensorError, TensorResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// β1 = 0, β2 = 0.9, ε = 1e-8.
    pub fn gan(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Moments for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    /// One update of `param` against `grad`. The gradient must be finite.
    pub fn step(&mut self, param: &mut [T], grad: &[T], cfg: &AdamConfig) -> TensorResult<()> {
        if param.len() != grad.len() || param.len() != self.m.len() {
            return Err(super::dim_err(
                "adam_step",
                format!(
                    "param {}, grad {}, state {}",
                    param.len(),
                    grad.len(),
                    self.m.len()
                ),
            ));
        }
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..param.len() {
            let g = grad[i].to_f64_lossy();
            let m = b1 * self.m[i].to_f64_lossy() + (1.0 - b1) * g;
            let v = b2 * self.v[i].to_f64_lossy() + (1.0 - b2) * g * g;
            self.m[i] = T::from_f64_lossy(m);
            self.v[i] = T::from_f64_lossy(v);
            let update = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
            param[i] = T::from_f64_lossy(param[i].to_f64_lossy() - update);
        }
        Ok(())
    }
}

/// Adam over a whole [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            states: params
                .iter()
                .map(|(_, t)| AdamState::new(t.len()))
                .collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    /// Applies one step. `grads[i]` belongs to parameter `i`; `None` means a
    /// zero gradient. Nothing is modified if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &[Option<Tensor<T>>],
    ) -> TensorResult<()> {
        if grads.len() != params.len() || self.states.len() != params.len() {
            return Err(super::dim_err(
                "adam_step",
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(TensorError::NonFiniteGradient {
                        param: params.name(i).to_string(),
                    });
                }
            }
        }
        for (i, g) in grads.iter().enumerate() {
            let len = params.at(i).len();
            let zeros;
            let gd = match g {
                Some(g) => g.data(),
                None => {
                    zeros = vec![T::zero(); len];
                    &zeros
                }
            };
            self.states[i].step(params.at_mut(i).data_mut(), gd, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::gan(1e-3);
        for g in [0.37f64, -5.0, 1e-3] {
            let mut st = AdamState::new(1);
            let mut p = [1.0f64];
            st.step(&mut p, &[g], &cfg).unwrap();
            let expected = 1.0 - 1e-3 * g.signum() * g.abs() / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!((p[0] - (1.0 - 1e-3 * g.signum())).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_leaves_param_but_counts_step() {
        let mut st = AdamState::new(2);
        let mut p = [0.5f64, -0.25];
        st.step(&mut p, &[0.0, 0.0], &AdamConfig::gan(1e-4))
            .unwrap();
        assert_eq!(p, [0.5, -0.25]);
        assert_eq!(st.t, 1);
    }

    /// Hand-rolled recurrence on f(w) = w², gradient 2w, from w = 1.
    #[test]
    fn three_steps_on_a_quadratic_match_the_recurrence() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        };
        let mut st = AdamState::new(1);
        let mut p = [1.0f64];
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * w;
            m = 0.5 * m + 0.5 * g;
            v = 0.9 * v + 0.1 * g * g;
            let mh = m / (1.0 - 0.5f64.powi(t));
            let vh = v / (1.0 - 0.9f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            let grad = [2.0 * p[0]];
            st.step(&mut p, &grad, &cfg).unwrap();
            assert!((p[0] - w).abs() < 1e-10, "step {t}: {} vs {w}", p[0]);
        }
        assert_eq!(st.t, 3);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("d.enc0.w", Tensor::zeros(&[2])).unwrap();
        let mut adam = Adam::new(AdamConfig::gan(1e-4), &ps);
        let bad = Tensor::new(vec![2], vec![f32::NAN, 0.0]).unwrap();
        match adam.step(&mut ps, &[Some(bad)]) {
            Err(TensorError::NonFiniteGradient { param }) => assert_eq!(param, "d.enc0.w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.steps_taken(), 0);
    }
}
