use serde::{Deserialize, Serialize};

use super::network::Parameterized;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are laid out in the visiting order of
/// the [`Parameterized`] they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameterized + ?Sized>(config: AdamConfig, params: &mut P) -> Self {
        let mut sizes = Vec::new();
        params.visit_params(&mut |_, _, v, _| sizes.push(v.len()));
        Self {
            config,
            step: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update from the gradients currently stored in `params`.
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step<P: Parameterized + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        let mut bad = None;
        let mut count = 0;
        params.visit_params(&mut |name, _, v, g| {
            count += 1;
            if bad.is_none() && g.iter().any(|x| !x.is_finite()) {
                bad = Some(name.to_string());
            }
            if v.len() != g.len() {
                bad = Some(format!("{name} (gradient length)"));
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if count != self.first_moment.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, parameters have {count}",
                self.first_moment.len()
            )));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let mut idx = 0;
        let (ms, vs) = (&mut self.first_moment, &mut self.second_moment);
        let mut shape_err = None;
        params.visit_params(&mut |name, _, value, grad| {
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            idx += 1;
            if m.len() != value.len() {
                shape_err.get_or_insert_with(|| name.to_string());
                return;
            }
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        match shape_err {
            Some(name) => Err(Error::shape(format!("optimizer state does not match {name}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{BufferVisitor, ParamVisitor};

    struct Scalar {
        value: Vec<f64>,
        grad: Vec<f64>,
    }

    impl Parameterized for Scalar {
        fn visit_params(&mut self, f: &mut ParamVisitor) {
            f("w", &[1], &mut self.value, &mut self.grad);
        }
        fn visit_buffers(&mut self, _f: &mut BufferVisitor) {}
    }

    fn scalar(w: f64) -> Scalar {
        Scalar {
            value: vec![w],
            grad: vec![0.0],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.75);
        let mut adam = AdamState::new(AdamConfig::default(), &mut p);
        for _ in 0..5 {
            adam.step(&mut p).unwrap();
        }
        assert_eq!(p.value[0], 0.75);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let mut p = scalar(1.0);
            p.grad[0] = g;
            let cfg = AdamConfig::default();
            let mut adam = AdamState::new(cfg, &mut p);
            adam.step(&mut p).unwrap();
            let moved = p.value[0] - 1.0;
            assert!((moved + cfg.learning_rate * g.signum()).abs() < 1e-9, "moved {moved}");
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &mut p);
        p.grad[0] = f64::NAN;
        assert!(adam.step(&mut p).is_err());
        assert_eq!(p.value[0], 1.0);
        assert_eq!(adam.step, 0);
        assert!(adam.first_moment[0][0] == 0.0);
    }

    #[test]
    fn quadratic_bowl_decreases_monotonically() {
        // f(w) = w², ∂f/∂w = 2w
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &mut p);
        let mut trajectory = vec![1.0];
        for _ in 0..500 {
            p.grad[0] = 2.0 * p.value[0];
            adam.step(&mut p).unwrap();
            trajectory.push(p.value[0] * p.value[0]);
        }
        for w in trajectory.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(adam.second_moment[0][0] >= 0.0);
    }
}
