use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step count and per-tensor moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct RAdamState<T> {
    pub config: RAdamConfig,
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> RAdamState<T> {
    /// Zero moments shaped like `shapes`.
    pub fn new(config: RAdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// Length of the approximated simple moving average, `ρ_∞`.
    pub fn rho_inf(&self) -> f64 {
        2.0 / (1.0 - self.config.beta2) - 1.0
    }

    /// `ρ_t` for step `t`.
    pub fn rho(&self, t: u64) -> f64 {
        let b2t = self.config.beta2.powi(t as i32);
        self.rho_inf() - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// Applies one update in place; returns the rectification factor used, if any.
    pub fn step(
        &mut self,
        params: &mut [&mut Matrix<T>],
        grads: &[Matrix<T>],
    ) -> Result<Option<f64>> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::dim(
                "radam_step",
                (params.len(), self.m.len()),
                (grads.len(), 1),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::dim("radam_step", p.shape(), g.shape()));
            }
        }
        let RAdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step;
        let bias1 = 1.0 - beta1.powi(t as i32);
        let bias2 = 1.0 - beta2.powi(t as i32);
        let rho_inf = self.rho_inf();
        let rho_t = self.rho(t);
        let rect = (rho_t > 4.0).then(|| {
            (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt()
        });

        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let (bias1, bias2) = (T::lit(bias1), T::lit(bias2));
        let lr = T::lit(lr);
        let eps = T::lit(eps);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (i, theta) in p.as_mut_slice().iter_mut().enumerate() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / bias1;
                match rect {
                    Some(r) => {
                        let v_hat = (v[i] / bias2).sqrt();
                        *theta -= lr * T::lit(r) * m_hat / (v_hat + eps);
                    }
                    None => *theta -= lr * m_hat,
                }
            }
        }
        Ok(rect)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix<f64> {
        Matrix::filled(1, 1, v)
    }

    #[test]
    fn first_step_is_unrectified() {
        let mut state = RAdamState::<f64>::new(RAdamConfig::default(), [(1, 1)]);
        assert!((state.rho(1) - 1.0).abs() < 1e-9);
        let mut theta = scalar(1.0);
        let rect = state.step(&mut [&mut theta], &[scalar(1.0)]).unwrap();
        assert!(rect.is_none());
        assert!((theta.get(0, 0) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn rectification_begins_after_threshold() {
        let state = RAdamState::<f64>::new(RAdamConfig::default(), [(1, 1)]);
        let first = (1..100).find(|&t| state.rho(t) > 4.0).unwrap();
        assert_eq!(first, 5);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = RAdamState::<f64>::new(RAdamConfig::default(), [(2, 2)]);
        let start = Matrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        let mut p = start.clone();
        for _ in 0..50 {
            state.step(&mut [&mut p], &[Matrix::zeros(2, 2)]).unwrap();
        }
        assert_eq!(p, start);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = RAdamState::<f64>::new(RAdamConfig::default(), [(2, 1)]);
        let mut p = Matrix::zeros(2, 1);
        assert!(matches!(
            state.step(&mut [&mut p], &[Matrix::zeros(1, 2)]),
            Err(Error::Dimension { .. })
        ));
        assert!(state.step(&mut [&mut p], &[]).is_err());
        assert_eq!(state.step, 0);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut state = RAdamState::<f64>::new(RAdamConfig::default(), [(3, 1)]);
        let mut p = Matrix::zeros(3, 1);
        for t in 0..20 {
            let g = Matrix::from_fn(3, 1, |i, _| ((t * 3 + i) as f64).sin());
            state.step(&mut [&mut p], &[g]).unwrap();
        }
        assert!(state.v[0].as_slice().iter().all(|&v| v >= 0.0));
    }
}
