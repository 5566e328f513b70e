use serde::{Deserialize, Serialize};

use super::network::Tensor;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &[Tensor]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor {
            rows: 1,
            cols: 2,
            data: vec![1.0, -1.0],
        }];
        let grads = vec![Tensor {
            rows: 1,
            cols: 2,
            data: vec![0.5, -3.0],
        }];
        let mut adam = Adam::new(0.001, &params);
        adam.update(&mut params, &grads);
        // With bias correction the first step is lr * g / (|g| + eps).
        assert!((params[0].data[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((params[0].data[1] - (-1.0 + 0.001)).abs() < 1e-9);
        assert_eq!(adam.first_moment[0].len(), 2);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut params = vec![Tensor {
            rows: 1,
            cols: 1,
            data: vec![5.0],
        }];
        let mut adam = Adam::new(0.1, &params);
        for _ in 0..500 {
            let g = Tensor {
                rows: 1,
                cols: 1,
                data: vec![2.0 * (params[0].data[0] - 2.0)],
            };
            adam.update(&mut params, &[g]);
        }
        assert!((params[0].data[0] - 2.0).abs() < 1e-2);
    }
}
