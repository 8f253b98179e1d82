use ndarray::{Array2, Zip};

use crate::error::{AutodiffError, Result};
use crate::params::ParamSet;

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
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<_> = params.values().map(|p| Array2::zeros(p.dim())).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Array2<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Array2<f64>] {
        &self.v
    }

    /// Restores moments and step count, e.g. from a checkpoint.
    pub fn restore(&mut self, m: Vec<Array2<f64>>, v: Vec<Array2<f64>>, step: u64) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(AutodiffError::MissingGradient("adam moments".into()));
        }
        for (i, (a, b)) in m.iter().zip(&self.m).enumerate() {
            if a.dim() != b.dim() {
                let (r, c) = b.dim();
                let (ar, ac) = a.dim();
                return Err(AutodiffError::ParamShape {
                    name: format!("adam.m[{i}]"),
                    expected: [r, c],
                    got: [ar, ac],
                });
            }
        }
        self.m = m;
        self.v = v;
        self.step = step;
        Ok(())
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        for a in self.m.iter_mut().chain(self.v.iter_mut()) {
            a.fill(0.0);
        }
        self.step = 0;
    }

    /// One bias-corrected Adam update. `grads` must hold one gradient per
    /// entry of `params`, in entry order.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Array2<f64>]) -> Result<()> {
        if grads.len() != params.len() {
            let missing = params
                .entries()
                .get(grads.len())
                .map(|(n, _)| params.label(n))
                .unwrap_or_else(|| params.name().to_string());
            return Err(AutodiffError::MissingGradient(missing));
        }
        for ((name, p), g) in params.entries().iter().zip(grads) {
            if p.dim() != g.dim() {
                let (r, c) = p.dim();
                let (gr, gc) = g.dim();
                return Err(AutodiffError::ParamShape {
                    name: params.label(name),
                    expected: [r, c],
                    got: [gr, gc],
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Convenience wrapper matching the usual `step(params, grads, state)` shape.
pub fn adam_step(params: &mut ParamSet, grads: &[Array2<f64>], state: &mut AdamState) -> Result<()> {
    state.update(params, grads)
}
