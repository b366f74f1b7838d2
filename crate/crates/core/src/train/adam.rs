use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates of one parameter block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update of `params` at step `t >= 1`.
pub fn adam_step(params: &mut [f64], grads: &[f64], moments: &mut Moments, t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let t = t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (((w, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

/// Adam state over a list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, block_sizes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            cfg,
            t: 0,
            moments: block_sizes.into_iter().map(Moments::zeros).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) {
        self.t += 1;
        for ((p, g), m) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            adam_step(p, g, m, self.t, &self.cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = [0.3, -1.2];
        let mut m = Moments::zeros(2);
        for t in 1..5 {
            adam_step(&mut w, &[0.0, 0.0], &mut m, t, &AdamConfig::default());
        }
        assert_eq!(w, [0.3, -1.2]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        // Scalar simulation of the moment recursions, independent of adam_step.
        let cfg = AdamConfig::default();
        let g = -0.37;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut last_step = 0.0;
        for t in 1..=5000 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - libm::pow(cfg.beta1, t as f64));
            let vh = v / (1.0 - libm::pow(cfg.beta2, t as f64));
            last_step = cfg.learning_rate * mh / (libm::sqrt(vh) + cfg.eps);
        }
        assert!((last_step - cfg.learning_rate * g.signum()).abs() < 1e-9);

        let mut w = [0.0];
        let mut mo = Moments::zeros(1);
        let mut prev = 0.0;
        for t in 1..=5000 {
            adam_step(&mut w, &[g], &mut mo, t, &cfg);
            if t == 5000 {
                assert!(((prev - w[0]) - last_step).abs() < 1e-12);
            }
            prev = w[0];
        }
    }

    #[test]
    fn opposite_gradients_move_symmetrically() {
        let mut w = [1.0, 1.0];
        let mut m = Moments::zeros(2);
        for t in 1..20 {
            adam_step(&mut w, &[0.4, -0.4], &mut m, t, &AdamConfig::default());
        }
        assert!(((w[0] - 1.0) + (w[1] - 1.0)).abs() < 1e-15);
        assert!(w[0] < 1.0);
    }

    #[test]
    fn zero_betas_give_sign_sgd() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-300,
        };
        let mut w = [0.0, 0.0, 0.0];
        let mut m = Moments::zeros(3);
        adam_step(&mut w, &[2.5, -1e-3, 0.0], &mut m, 1, &cfg);
        assert!((w[0] + 0.1).abs() < 1e-15);
        assert!((w[1] - 0.1).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }
}
