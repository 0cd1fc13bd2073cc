use crate::autodiff::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments exist for every parameter in the
/// store; only the ids passed to [`Adam::step`] are touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig, store: &ParamStore<S>) -> Self {
        let zeros: Vec<_> = store
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub(crate) fn from_parts(
        config: AdamConfig,
        step: u64,
        m: Vec<Tensor<S>>,
        v: Vec<Tensor<S>>,
    ) -> Self {
        Adam { config, step, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<S>], &[Tensor<S>]) {
        (&self.m, &self.v)
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore<S>,
        grads: &ParamGrads<S>,
        ids: &[ParamId],
    ) -> Result<()> {
        if self.m.len() != store.len() || grads.len() != store.len() {
            return Err(Error::Invalid(format!(
                "optimizer state for {} params, store has {}, grads {}",
                self.m.len(),
                store.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1: S = lit(1.0 - beta1.powi(t));
        let bc2: S = lit(1.0 - beta2.powi(t));
        let (b1, b2, lr, eps): (S, S, S, S) = (lit(beta1), lit(beta2), lit(lr), lit(eps));
        let one = S::one();
        for &id in ids {
            let Some(g) = grads.get(id) else { continue };
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            if !p.same_shape(g) || !p.same_shape(m) {
                return Err(Error::dim("adam", p.shape(), g.shape()));
            }
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                md[k] = b1 * md[k] + (one - b1) * gk;
                vd[k] = b2 * vd[k] + (one - b2) * gk * gk;
                let m_hat = md[k] / bc1;
                let v_hat = vd[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> (ParamStore<f64>, ParamId) {
        let mut store = ParamStore::new();
        let id = store
            .add("w", Tensor::row_vector(values).unwrap())
            .unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut store, id) = store_with(&[0.3, -1.2, 4.0]);
        let before = store.get(id).clone();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let mut grads = ParamGrads::new(1);
        grads.accumulate(id, &Tensor::zeros(1, 3)).unwrap();
        for _ in 0..5 {
            adam.step(&mut store, &grads, &[id]).unwrap();
        }
        assert_eq!(store.get(id), &before);
    }

    #[test]
    fn constant_gradient_update_approaches_lr() {
        let (mut store, id) = store_with(&[0.0, 0.0]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg, &store);
        let mut grads = ParamGrads::new(1);
        grads
            .accumulate(id, &Tensor::row_vector(&[0.7, -3.0]).unwrap())
            .unwrap();
        let mut prev = store.get(id).clone();
        for _ in 0..2000 {
            adam.step(&mut store, &grads, &[id]).unwrap();
            let now = store.get(id).clone();
            let delta: Vec<f64> = now
                .data()
                .iter()
                .zip(prev.data())
                .map(|(a, b)| (a - b).abs())
                .collect();
            prev = now;
            // With bias correction, m̂ = g and v̂ = g² exactly, so every
            // step moves lr·|g|/(|g|+ε).
            for (d, g) in delta.iter().zip([0.7f64, 3.0]) {
                let expected = cfg.lr * g / (g + cfg.eps);
                assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
            }
        }
    }

    #[test]
    fn step_counter_increments_once_per_call() {
        let (mut store, id) = store_with(&[1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let grads = ParamGrads::new(1);
        for i in 1..=4 {
            adam.step(&mut store, &grads, &[id]).unwrap();
            assert_eq!(adam.step_count(), i);
        }
    }
}
