//! Adam optimizer over flat lists of tensors.

use crate::tensor::{Result, Tensor, TensorError};
use serde::{Deserialize, Serialize};

/// Bias-corrected Adam state. Moment buffers are allocated lazily on the
/// first step so the state can be created before parameter shapes are known.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: format!("{} params vs {} grads", params.len(), grads.len()),
            });
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second_moment = self.first_moment.clone();
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) || !p.same_shape(&self.first_moment[i]) {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "param {} is {}, grad {}, moment {}",
                        i,
                        p.shape_str(),
                        g.shape_str(),
                        self.first_moment[i].shape_str()
                    ),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap()];
        let before = params.clone();
        let grads = vec![Tensor::zeros(1, 3)];
        let mut adam = AdamState::new(0.01);
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // at t=1 the bias corrections cancel: update = lr * g / (|g| + eps')
        let mut params = vec![Tensor::from_vec(1, 2, vec![0.0, 0.0]).unwrap()];
        let grads = vec![Tensor::from_vec(1, 2, vec![3.0, -0.2]).unwrap()];
        let mut adam = AdamState::new(0.05);
        adam.step(&mut params, &grads).unwrap();
        assert!((params[0].data()[0] - (-0.05)).abs() < 1e-6);
        assert!((params[0].data()[1] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut params = vec![Tensor::scalar(3.0)];
        let mut adam = AdamState::new(0.05);
        for _ in 0..500 {
            let w = params[0].data()[0];
            let grads = vec![Tensor::scalar(2.0 * w)];
            adam.step(&mut params, &grads).unwrap();
        }
        assert!(params[0].data()[0].abs() < 1e-2);
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut params = vec![Tensor::zeros(2, 2)];
        let grads = vec![Tensor::zeros(2, 3)];
        let mut adam = AdamState::new(0.01);
        assert!(adam.step(&mut params, &grads).is_err());
    }
}
