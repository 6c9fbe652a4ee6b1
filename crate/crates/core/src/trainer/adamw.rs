use pansharp_tensor::Tensor;

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Adam with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates, one pair per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        OptimizerState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

impl AdamW {
    /// One update: `θ ← θ·(1 − lr·wd)`, then `θ ← θ − lr·m̂ / (√v̂ + ε)`.
    pub fn step(
        &self,
        params: &mut ParamStore,
        grads: &[Tensor],
        state: &mut OptimizerState,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
            return Err(Error::Config("gradient/optimizer state count mismatch".into()));
        }
        state.step += 1;
        let t = i32::try_from(state.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let shrink = 1.0 - lr * weight_decay;
        for (((theta, g), m), v) in params.tensors_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
            if theta.shape() != g.shape() || m.shape() != g.shape() || v.shape() != g.shape() {
                return Err(Error::Config(format!(
                    "gradient shape {} does not match parameter {}",
                    g.shape(),
                    theta.shape()
                )));
            }
            let moments = m.data_mut().iter_mut().zip(v.data_mut());
            for ((th, &gi), (mi, vi)) in theta.data_mut().iter_mut().zip(g.data()).zip(moments) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *th = *th * shrink - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pansharp_tensor::Shape;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(Shape::vector(values.len()), values.to_vec()).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = store(&[1.5, -2.0]);
        let mut st = OptimizerState::new(&p);
        let g = vec![Tensor::zeros(Shape::vector(2))];
        AdamW::default().step(&mut p, &g, &mut st, 0.1, 0.01, ).unwrap();
        let f = 1.0 - 0.1 * 0.01;
        assert_eq!(p.by_name("w").unwrap().data(), &[1.5 * f, -2.0 * f]);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut p = store(&[0.0, 0.0]);
        let mut st = OptimizerState::new(&p);
        let g = vec![Tensor::new(Shape::vector(2), vec![3.0, -0.5]).unwrap()];
        let opt = AdamW::default();
        let mut prev = p.by_name("w").unwrap().clone();
        for _ in 0..50 {
            opt.step(&mut p, &g, &mut st, 1e-3, 0.0).unwrap();
            let now = p.by_name("w").unwrap().clone();
            let d0 = now.data()[0] - prev.data()[0];
            let d1 = now.data()[1] - prev.data()[1];
            assert!(d0 < 0.0 && d1 > 0.0);
            assert!((d0.abs() - 1e-3).abs() < 1e-8 && (d1.abs() - 1e-3).abs() < 1e-8);
            prev = now;
        }
    }
}
