//! Adaptive-moment optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optimizer state: first/second moment accumulators aligned with a fixed
/// parameter ordering, plus a strictly increasing step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[&[usize]]) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(lr: f64, params: &[Tensor]) -> AdamState {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        AdamState::new(lr, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. On a non-finite gradient the call fails and
    /// the state (and parameters) are left untouched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} accumulators",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "param {} has shape {:?}, grad {:?}, accumulator {:?}",
                        i,
                        p.shape(),
                        g.shape(),
                        self.m[i].shape()
                    ),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("adam_step: gradient {}", i),
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i].data();
            let mut m = self.m[i].data().to_vec();
            let mut v = self.v[i].data().to_vec();
            let mut p = params[i].data().to_vec();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            let shape = params[i].shape().to_vec();
            self.m[i] = Tensor::from_vec_unchecked(shape.clone(), m);
            self.v[i] = Tensor::from_vec_unchecked(shape.clone(), v);
            params[i] = Tensor::from_vec_unchecked(shape, p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut params = vec![Tensor::full(&[3], 2.5)];
        let grads = vec![Tensor::zeros(&[3])];
        let mut st = AdamState::for_params(0.01, &params);
        st.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].data(), &[2.5; 3][..]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn constant_gradient_update_approaches_learning_rate() {
        let mut params = vec![Tensor::zeros(&[1])];
        let grads = vec![Tensor::full(&[1], 0.37)];
        let mut st = AdamState::for_params(1e-3, &params);
        let mut prev = 0.0;
        for _ in 0..500 {
            prev = params[0].data()[0];
            st.step(&mut params, &grads).unwrap();
        }
        let delta = (params[0].data()[0] - prev).abs();
        assert!((delta - 1e-3).abs() < 1e-5, "step magnitude {delta}");
    }

    #[test]
    fn deterministic_given_cloned_state() {
        let params0 = vec![Tensor::full(&[4], 1.0)];
        let grads = vec![Tensor::from_vec(vec![4], vec![0.1, -0.2, 0.3, -0.4]).unwrap()];
        let mut st1 = AdamState::for_params(0.01, &params0);
        let mut st2 = st1.clone();
        let mut p1 = params0.clone();
        let mut p2 = params0.clone();
        st1.step(&mut p1, &grads).unwrap();
        st2.step(&mut p2, &grads).unwrap();
        assert_eq!(p1[0].data(), p2[0].data());
    }

    #[test]
    fn nan_gradient_fails_without_touching_state() {
        let mut params = vec![Tensor::full(&[2], 1.0)];
        let bad = Tensor::from_vec_unchecked(vec![2], vec![f64::NAN, 0.0]);
        let mut st = AdamState::for_params(0.01, &params);
        let before = params.clone();
        assert!(st.step(&mut params, &[bad]).is_err());
        assert_eq!(params[0].data(), before[0].data());
        assert_eq!(st.step_count(), 0);
    }
}
