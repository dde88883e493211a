//! Parameter-update rules with deterministic state. Updates operate on flat
//! `f64` slices; callers flatten model parameters in a fixed order (see
//! [`crate::encoder::EncoderModel::params_to_vec`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam state: step counter plus first/second moments, one
/// entry per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// `learning_rate` may be zero (a zero-rate run leaves parameters
    /// untouched, which some replay tests rely on) but not negative.
    pub fn new(learning_rate: f64, param_count: usize) -> Result<AdamState> {
        if !(learning_rate >= 0.0) {
            return Err(Error::Spec(format!(
                "learning rate must be non-negative, got {learning_rate}"
            )));
        }
        Ok(AdamState {
            learning_rate,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.m.len()
    }
}

/// One bias-corrected Adam update:
///
/// ```text
/// m <- b1 m + (1-b1) g        m_hat = m / (1 - b1^t)
/// v <- b2 v + (1-b2) g^2      v_hat = v / (1 - b2^t)
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// ```
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.param_count() || grads.len() != state.param_count() {
        return Err(Error::Shape(format!(
            "adam_step: state holds {} parameters, got {} params / {} grads",
            state.param_count(),
            params.len(),
            grads.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Gradient(format!(
            "gradient entry {i} is {}",
            grads[i]
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Plain gradient step theta <- theta - lr * g.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "sgd_step: {} params vs {} grads",
            params.len(),
            grads.len()
        )));
    }
    if !(lr >= 0.0) {
        return Err(Error::Spec(format!(
            "learning rate must be non-negative, got {lr}"
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut state = AdamState::new(0.1, 3).unwrap();
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        adam_step(&mut state, &mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_approaches_lr() {
        // bias-corrected first step: |delta| = lr * |g| / (|g| + eps) ~ lr
        let lr = 0.01;
        for g in [5.0, -0.5, 2000.0] {
            let mut state = AdamState::new(lr, 1).unwrap();
            let mut params = vec![0.0];
            adam_step(&mut state, &mut params, &[g]).unwrap();
            let mag = params[0].abs();
            assert!((mag - lr).abs() < 1e-6 * lr, "g={g}, step={mag}");
            assert_eq!(params[0].signum(), -g.signum());
        }
    }

    /// Hand-rolled reference Adam loop, written independently of `adam_step`.
    fn reference_trajectory(theta0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        let mut theta = theta0;
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * theta; // gradient of theta^2
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
            out.push(theta);
        }
        out
    }

    #[test]
    fn five_step_trajectory_matches_reference_loop() {
        let lr = 0.05;
        let mut state = AdamState::new(lr, 1).unwrap();
        let mut params = vec![1.0];
        let expect = reference_trajectory(1.0, lr, 5);
        for e in expect {
            let g = 2.0 * params[0];
            adam_step(&mut state, &mut params, &[g]).unwrap();
            assert!((params[0] - e).abs() < 1e-12, "{} vs {e}", params[0]);
        }
    }

    #[test]
    fn step_magnitude_bounded_by_lr_for_constant_gradients() {
        // gradient scale cancels: at any t the per-step move is at most lr
        let lr = 0.2;
        for scale in [1e-6, 1.0, 1e6] {
            let mut state = AdamState::new(lr, 1).unwrap();
            let mut params = vec![0.0];
            for t in 1..=150 {
                let before = params[0];
                adam_step(&mut state, &mut params, &[scale]).unwrap();
                let delta = (params[0] - before).abs();
                if t >= 100 {
                    assert!(delta <= lr * (1.0 + 1e-6), "scale {scale}: |delta|={delta}");
                }
            }
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut state = AdamState::new(0.03, 4).unwrap();
            let mut params = vec![0.4, -0.2, 1.0, 0.0];
            for k in 0..20 {
                let grads: Vec<f64> =
                    params.iter().map(|p| p * 0.5 + k as f64 * 0.01).collect();
                adam_step(&mut state, &mut params, &grads).unwrap();
            }
            (params, state)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn adam_rejects_shape_mismatch_and_non_finite() {
        let mut state = AdamState::new(0.1, 2).unwrap();
        let mut params = vec![0.0; 2];
        assert!(matches!(
            adam_step(&mut state, &mut params, &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            adam_step(&mut state, &mut params, &[f64::NAN, 0.0]),
            Err(Error::Gradient(_))
        ));
    }

    #[test]
    fn sgd_examples() {
        let mut params = vec![1.0, 2.0];
        sgd_step(&mut params, &[1.0, 1.0], 0.5).unwrap();
        assert_eq!(params, vec![0.5, 1.5]);

        let mut params = vec![0.3, -0.9];
        let before = params.clone();
        sgd_step(&mut params, &[4.0, -2.0], 0.0).unwrap();
        assert_eq!(params, before);

        let mut rng = crate::numerics::SeededRng::new(3);
        let mut params: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
        let grads: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
        let lr = 0.07;
        let expect: Vec<f64> = params.iter().zip(&grads).map(|(p, g)| p - lr * g).collect();
        sgd_step(&mut params, &grads, lr).unwrap();
        assert_eq!(params, expect);
    }

    #[test]
    fn sgd_rejects_shape_mismatch() {
        let mut params = vec![0.0];
        assert!(matches!(
            sgd_step(&mut params, &[1.0, 2.0], 0.1),
            Err(Error::Shape(_))
        ));
    }
}
