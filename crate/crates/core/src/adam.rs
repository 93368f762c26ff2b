use crate::error::{check_len, Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Adam moment estimates and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        OptimState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam gradients", params.len(), grads.len())?;
        check_len("adam moments", self.first_moment.len(), params.len())?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`OptimState::step`].
pub fn adam_step(params: &[f64], grads: &[f64], opt: &OptimState) -> Result<(Vec<f64>, OptimState)> {
    let mut p = params.to_vec();
    let mut o = opt.clone();
    o.step(&mut p, grads)?;
    Ok((p, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let (p, o) = adam_step(&[0.5, -1.0], &[0.0, 0.0], &OptimState::new(2, 0.1)).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(o.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (p, _) = adam_step(&[0.0], &[0.5], &OptimState::new(1, 0.1)).unwrap();
        // m̂ = g, v̂ = g², Δ = −lr · g / (|g| + ε)
        let want = -0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn three_steps_match_scalar_recurrence() {
        let grads = [0.5, -0.2, 0.1];
        let (lr, b1, b2, eps) = (0.1, 0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut x) = (0.0, 0.0, 1.0);
        let mut expected = Vec::new();
        for (k, g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(k as i32 + 1));
            let vh = v / (1.0 - b2.powi(k as i32 + 1));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }
        let mut opt = OptimState::new(1, lr);
        let mut p = [1.0];
        for (g, want) in grads.iter().zip(expected) {
            opt.step(&mut p, &[*g]).unwrap();
            assert!((p[0] - want).abs() < 1e-15);
        }
        assert_eq!(opt.step_count, 3);
    }

    #[test]
    fn non_finite_gradient_reports_index() {
        let mut opt = OptimState::new(3, 0.1);
        let mut p = [0.0; 3];
        let err = opt.step(&mut p, &[0.0, 1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { index: 2 });
        assert_eq!(opt.step_count, 0);
        assert_eq!(p, [0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(adam_step(&[0.0, 0.0], &[1.0], &OptimState::new(2, 0.1)).is_err());
    }

    proptest! {
        #[test]
        fn first_update_sign_depends_only_on_gradient_sign(
            grads in prop::collection::vec(-10.0f64..10.0, 1..8),
            scale in 0.01f64..100.0,
        ) {
            let n = grads.len();
            let (a, _) = adam_step(&vec![0.0; n], &grads, &OptimState::new(n, 0.01)).unwrap();
            let scaled: Vec<f64> = grads.iter().map(|g| g * scale).collect();
            let (b, _) = adam_step(&vec![0.0; n], &scaled, &OptimState::new(n, 0.01)).unwrap();
            for i in 0..n {
                prop_assert_eq!(a[i].signum() * (a[i] != 0.0) as i32 as f64,
                                -grads[i].signum() * (grads[i] != 0.0) as i32 as f64);
                prop_assert_eq!(a[i] > 0.0, b[i] > 0.0);
                prop_assert_eq!(a[i] < 0.0, b[i] < 0.0);
            }
        }
    }
}
