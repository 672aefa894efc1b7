use ndarray::Array2;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed subset of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    ids: Vec<ParamId>,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore, ids: Vec<ParamId>) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", config.lr)));
        }
        let m = ids
            .iter()
            .map(|&id| Array2::zeros(store.get(id).dim()))
            .collect::<Vec<_>>();
        Ok(Self {
            config,
            v: m.clone(),
            m,
            ids,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// One update. Parameters without a gradient entry are treated as
    /// having a zero gradient. Non-finite gradients abort before any
    /// parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for &id in &self.ids {
            if let Some(g) = grads.get(id) {
                if g.dim() != store.get(id).dim() {
                    return Err(Error::shape("adam", store.get(id).dim(), g.dim()));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {}", store.name(id))));
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (k, &id) in self.ids.iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            match grads.get(id) {
                Some(g) => {
                    ndarray::Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, &g| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                    });
                }
                None => {
                    *m *= beta1;
                    *v *= beta2;
                }
            }
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Array2::from_elem((2, 3), 0.5));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = store();
        let mut opt = Adam::new(AdamConfig::with_lr(1e-2), &s, vec![id]).unwrap();
        let mut g = Gradients::new(1);
        g.accumulate(id, &Array2::zeros((2, 3)));
        opt.step(&mut s, &g).unwrap();
        assert!(s.get(id).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = store();
        let lr = 1e-3;
        let mut opt = Adam::new(AdamConfig::with_lr(lr), &s, vec![id]).unwrap();
        let mut g = Gradients::new(1);
        g.accumulate(id, &Array2::from_elem((2, 3), 3.7));
        opt.step(&mut s, &g).unwrap();
        // m̂ = g, v̂ = g², step = lr * g / (|g| + eps)
        let expected = 0.5 - lr * 3.7 / (3.7 + 1e-8);
        for &v in s.get(id) {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let (mut s, id) = store();
        let mut opt = Adam::new(AdamConfig::with_lr(1e-3), &s, vec![id]).unwrap();
        let mut g = Gradients::new(1);
        let mut bad = Array2::zeros((2, 3));
        bad[[1, 2]] = f64::NAN;
        g.accumulate(id, &bad);
        let err = opt.step(&mut s, &g).unwrap_err();
        assert!(err.to_string().contains('w'), "{err}");
        assert!(s.get(id).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identical_runs_match() {
        let run = || {
            let (mut s, id) = store();
            let mut opt = Adam::new(AdamConfig::with_lr(1e-2), &s, vec![id]).unwrap();
            for k in 0..5 {
                let mut g = Gradients::new(1);
                g.accumulate(id, &Array2::from_elem((2, 3), k as f64 - 2.0));
                opt.step(&mut s, &g).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_lr() {
        let (s, id) = store();
        assert!(Adam::new(AdamConfig::with_lr(0.0), &s, vec![id]).is_err());
    }
}
