//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Optimizer state: one pair of moment arrays per parameter tensor, in
/// the order the parameters are passed to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One Adam update over all parameters. A tensor with no accumulated
    /// gradient is treated as having a zero gradient. Gradients are
    /// consumed (reset) by the update.
    pub fn step<'a, S, I>(&mut self, params: I) -> Result<()>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, &'a mut Tensor)>,
    {
        self.step_count += 1;
        let t = self.step_count;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);

        for (idx, (name, p)) in params.into_iter().enumerate() {
            let name = name.as_ref();
            let n = p.values().len();
            if idx == self.first_moment.len() {
                self.first_moment.push(vec![0.0; n]);
                self.second_moment.push(vec![0.0; n]);
            } else if idx > self.first_moment.len() || self.first_moment[idx].len() != n {
                return Err(Error::Contract(format!(
                    "optimizer state does not match parameter {name}"
                )));
            }
            let m = &mut self.first_moment[idx];
            let v = &mut self.second_moment[idx];

            // Borrow the gradient slice out before mutating values.
            let grad: Option<Vec<f64>> = p.grad().map(|g| g.to_vec());
            if let Some(g) = &grad {
                if g.iter().any(|x| x.is_nan()) {
                    return Err(Error::TrainingDivergence(format!(
                        "NaN gradient in parameter {name}"
                    )));
                }
            }
            let vals = p.values_mut();
            for i in 0..n {
                let gi = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                vals[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
