//! SGD with classical momentum and L2 weight decay, plus the step-decay
//! learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rescale the gradient when its global L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: 0.9,
            weight_decay: 5e-4,
            clip_norm: None,
        }
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: SgdConfig, params: &[Tensor<T>]) -> Self {
        OptimizerState {
            config,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// `g' = g + wd·θ; v ← m·v + g'; θ ← θ − lr·v` for every tensor.
    ///
    /// Nothing is modified when a gradient is non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::dim(
                "sgd_step",
                &[params.len(), self.velocity.len()],
                &[grads.len()],
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.velocity[i].shape() {
                return Err(Error::dim("sgd_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("gradient of parameter tensor {i}"),
                });
            }
        }
        let mut scale = T::one();
        if let Some(max) = self.config.clip_norm {
            let sq: f64 = grads
                .iter()
                .flat_map(|g| g.data().iter())
                .map(|v| v.as_f64() * v.as_f64())
                .sum();
            let norm = Float::sqrt(sq);
            if norm > max {
                scale = T::of(max / norm);
            }
        }
        let m = T::of(self.config.momentum);
        let wd = T::of(self.config.weight_decay);
        let lr = T::of(lr);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut().iter_mut()) {
                let gd = gv * scale + wd * *pv;
                *vv = m * *vv + gd;
                *pv = *pv - lr * *vv;
            }
        }
        Ok(())
    }
}

/// `base_lr · factor^⌊epoch / every⌋`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSchedule {
    pub base_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            base_lr: 0.001,
            decay_every: 20,
            decay_factor: 0.1,
        }
    }
}

impl StepSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let k = epoch.checked_div(self.decay_every).unwrap_or(0);
        // Repeated multiplication keeps 0.001·0.1·0.1 == 1e-5 exactly.
        (0..k).fold(self.base_lr, |lr, _| lr * self.decay_factor)
    }
}
