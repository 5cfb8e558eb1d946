use crate::model::ModelParams;

use super::{GradientBundle, TrainConfig};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias-corrected moments and decoupled weight decay.
///
/// Each step applies `θ ← θ - lr·m̂/(√v̂ + ε) - lr·wd·θ`.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    frozen: Vec<&'static str>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Adam {
        Adam {
            lr,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
            frozen: Vec::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Adam {
        Adam::new(cfg.lr, cfg.weight_decay)
    }

    /// Excludes the named tensors from every update.
    pub fn freeze(mut self, names: &[&'static str]) -> Adam {
        self.frozen.extend_from_slice(names);
        self
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &GradientBundle) {
        let grads = grads.tensors();
        let mut tensors = params.tensors_mut();
        if self.m.is_empty() {
            self.m = tensors.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (k, ((name, theta), (_, g))) in tensors.iter_mut().zip(&grads).enumerate() {
            if self.frozen.contains(name) {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..theta.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                let decay = self.lr * self.weight_decay * theta[i];
                theta[i] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON) + decay;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Reaction, Solver, SolverConfig};
    use crate::model::ModelConfig;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_params() -> ModelParams {
        let cfg = ModelConfig::new(
            1,
            1,
            Reaction::Fisher,
            SolverConfig::new(Solver::Euler, 1.0, 1.0).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ModelParams::init(&cfg, 1, 1, &mut rng).unwrap()
    }

    fn grads_of(params: &ModelParams, value: f64) -> GradientBundle {
        let mut g = params.zeros_like();
        for (_, t) in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v = value);
        }
        GradientBundle::new(g)
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = tiny_params();
        let before = p.clone();
        let g = grads_of(&p, 0.0);
        let mut adam = Adam::new(0.01, 0.0);
        adam.step(&mut p, &g);
        adam.step(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny_params();
        let before = p.clone();
        let mut adam = Adam::new(0.05, 0.0);
        adam.step(&mut p, &grads_of(&before, 3.0));
        for ((_, a), (_, b)) in p.tensors().iter().zip(before.tensors()) {
            assert_abs_diff_eq!(a[0] - b[0], -0.05, epsilon = 1e-6);
        }
    }

    #[test]
    fn frozen_tensors_stay_put() {
        let mut p = tiny_params();
        let before = p.clone();
        let mut adam = Adam::new(0.05, 0.1).freeze(&["alpha", "beta"]);
        adam.step(&mut p, &grads_of(&before, 1.0));
        assert_eq!(p.coeffs, before.coeffs);
        assert_ne!(p.enc_w1, before.enc_w1);
    }
}
