//! Full-batch Adam ascent with a monotonicity guard.
//!
//! Each proposed step is evaluated; a step that lowers the objective is
//! rejected and retried with half the step size and fresh moment
//! estimates, so the objective trace never decreases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Smallest step size tried before the ascent gives up on a point.
const MIN_STEP: f64 = 1e-12;

/// Maximizes `f` from `x` for at most `steps` accepted or rejected
/// proposals. `f(x, grad)` returns the objective and writes its gradient.
/// Returns the objective after every accepted step, starting with the
/// initial value.
pub fn maximize<F>(x: &mut [f64], config: &AdamConfig, steps: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut value = f(x, &mut grad);
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite objective {value} at start"
        )));
    }
    let mut trace = vec![value];
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut m_new = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut cand_grad = vec![0.0; n];
    let mut t = 0i32;
    let mut lr = config.step_size;
    for _ in 0..steps {
        if n == 0 || grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let tt = t + 1;
        let c1 = 1.0 - config.beta1.powi(tt);
        let c2 = 1.0 - config.beta2.powi(tt);
        for i in 0..n {
            m_new[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v_new[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            let step = (m_new[i] / c1) / ((v_new[i] / c2).sqrt() + config.epsilon);
            cand[i] = x[i] + lr * step;
        }
        let cv = f(&cand, &mut cand_grad);
        if cv.is_finite() && cv >= value {
            x.copy_from_slice(&cand);
            std::mem::swap(&mut grad, &mut cand_grad);
            std::mem::swap(&mut m, &mut m_new);
            std::mem::swap(&mut v, &mut v_new);
            value = cv;
            t = tt;
            trace.push(value);
            lr = (lr * 1.2).min(config.step_size);
        } else {
            // momentum may point downhill; restart from the gradient
            lr *= 0.5;
            m.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            t = 0;
            if lr < MIN_STEP {
                break;
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_maximum() {
        let mut x = vec![3.0, -2.0];
        let cfg = AdamConfig {
            step_size: 0.1,
            ..AdamConfig::default()
        };
        let trace = maximize(&mut x, &cfg, 2000, |x, g| {
            g[0] = -2.0 * (x[0] - 1.0);
            g[1] = -4.0 * (x[1] + 0.5);
            -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2)
        })
        .unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4,
            "{x:?}"
        );
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rejects_nonfinite_start() {
        let mut x = vec![0.0];
        assert!(maximize(&mut x, &AdamConfig::default(), 10, |_, _| f64::NAN).is_err());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut x = vec![0.5];
        let trace = maximize(&mut x, &AdamConfig::default(), 10, |_, g| {
            g[0] = 0.0;
            1.0
        })
        .unwrap();
        assert_eq!(x, vec![0.5]);
        assert_eq!(trace, vec![1.0]);
    }
}
