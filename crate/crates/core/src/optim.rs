//! Adam and a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::linalg::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed list of parameter slots.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(slot_sizes: &[usize], cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    /// Advance the shared step counter; call once before updating the slots
    /// of one optimization step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn update(&mut self, slot: usize, params: &mut [T], grads: &[T], lr: f64) {
        let (b1, b2) = (T::lit(self.cfg.beta1), T::lit(self.cfg.beta2));
        let bc1 = T::one() - b1.powi(self.t);
        let bc2 = T::one() - b2.powi(self.t);
        let lr = T::lit(lr);
        let eps = T::lit(self.cfg.eps);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Multiplies the learning rate by `factor` once `patience` consecutive steps
/// fail to improve on the best loss by the relative `threshold`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    num_bad: usize,
    decays: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            num_bad: 0,
            decays: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> usize {
        self.decays
    }

    /// Record a loss; returns true if the learning rate was decayed.
    pub fn observe(&mut self, loss: f64) -> bool {
        if self.best.is_infinite() || loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.num_bad = 0;
            return false;
        }
        self.num_bad += 1;
        if self.num_bad >= self.patience {
            self.lr *= self.factor;
            self.num_bad = 0;
            self.decays += 1;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        let mut adam = Adam::<f64>::new(&[3], AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        adam.begin_step();
        adam.update(0, &mut p, &[0.3, -4.0, 1e-3], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 1.99).abs() < 1e-6);
        assert!((p[2] - 0.49).abs() < 1e-4);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut adam = Adam::<f64>::new(&[2], AdamConfig::default());
        let mut p = vec![3.0, -1.0];
        for _ in 0..3000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            adam.begin_step();
            adam.update(0, &mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn plateau_decays_to_floor_after_31_decays() {
        let mut s = PlateauScheduler::new(0.01, 0.8, 3, 1e-4);
        s.observe(1.0);
        let mut steps = 0;
        while s.lr() > 1e-5 {
            s.observe(1.0);
            steps += 1;
        }
        assert_eq!(s.decays(), 31);
        assert_eq!(steps, 31 * 3);
        assert!((s.lr() - 0.01 * 0.8f64.powi(31)).abs() < 1e-18);
        assert!(0.01 * 0.8f64.powi(30) > 1e-5);
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = PlateauScheduler::new(0.1, 0.5, 3, 1e-4);
        s.observe(1.0);
        s.observe(1.0);
        s.observe(1.0);
        s.observe(0.5);
        s.observe(0.5);
        s.observe(0.5);
        assert_eq!(s.decays(), 0);
        assert!(s.observe(0.49999));
        assert_eq!(s.lr(), 0.05);
    }
}
