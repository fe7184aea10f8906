use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam optimiser state over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::usage(format!(
                "adam state holds {} parameters but got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = vec![0.3, -1.0, 2.0];
        let mut st = AdamState::new(3, 0.003);
        st.step(&mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, vec![0.3, -1.0, 2.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = [1.0];
            let mut st = AdamState::new(1, 0.003);
            st.step(&mut p, &[g]).unwrap();
            // m̂ = g, v̂ = g², so the step is lr·|g|/(|g|+ε).
            let want = 0.003 * g.abs() / (g.abs() + 1e-8);
            assert!(((1.0 - p[0]).abs() - want).abs() < 1e-15);
            assert_eq!((1.0 - p[0]).signum(), g.signum());
            assert!(st.second_moment()[0] >= 0.0);
        }
    }

    #[test]
    fn step_is_pure_given_cloned_state() {
        let st = AdamState::new(2, 0.01);
        let (mut a, mut b) = ([0.5, 0.1], [0.5, 0.1]);
        let (mut s1, mut s2) = (st.clone(), st);
        s1.step(&mut a, &[0.2, -0.3]).unwrap();
        s2.step(&mut b, &[0.2, -0.3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(s1, s2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::new(2, 0.01);
        assert!(st.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
