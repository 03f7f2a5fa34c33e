use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::params::{Gradients, ModelParams};
use crate::tensor::Tensor;
use crate::{Error, Real, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// AdaDelta with running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDelta<T> {
    rho: T,
    eps: T,
    sq_grad: Vec<Tensor<T>>,
    sq_delta: Vec<Tensor<T>>,
    steps: usize,
    skipped: usize,
}

impl<T: Real> AdaDelta<T> {
    pub fn new(params: &ModelParams<T>, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("AdaDelta rho must lie in (0, 1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("AdaDelta epsilon must be positive, got {eps}")));
        }
        Ok(AdaDelta {
            rho: T::of(rho),
            eps: T::of(eps),
            sq_grad: params.zeros_like(),
            sq_delta: params.zeros_like(),
            steps: 0,
            skipped: 0,
        })
    }

    pub fn with_defaults(params: &ModelParams<T>) -> Self {
        Self::new(params, DEFAULT_RHO, DEFAULT_EPS).expect("default constants are valid")
    }

    /// Applied updates so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Updates refused because of non-finite gradients.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn accumulators(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.sq_grad, &self.sq_delta)
    }

    /// Updates `params` in place. Returns `false`, leaving everything
    /// untouched, when some gradient is not finite.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>) -> Result<bool> {
        if grads.iter().count() != self.sq_grad.len() {
            return Err(Error::Contract("gradient count does not match the optimizer state".into()));
        }
        if !grads.is_finite() {
            self.skipped += 1;
            return Ok(false);
        }
        let (rho, eps) = (self.rho, self.eps);
        let keep = T::one() - rho;
        let ids: Vec<_> = params.ids().collect();
        for (((id, g), eg), ed) in ids
            .into_iter()
            .zip(grads.iter())
            .zip(&mut self.sq_grad)
            .zip(&mut self.sq_delta)
        {
            let x = params.get_mut(id);
            if x.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "adadelta_step",
                    left: x.shape(),
                    right: g.shape(),
                });
            }
            for (((xi, &gi), egi), edi) in x
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(eg.data_mut())
                .zip(ed.data_mut())
            {
                *egi = rho * *egi + keep * gi * gi;
                let delta = -Float::sqrt(*edi + eps) / Float::sqrt(*egi + eps) * gi;
                *edi = rho * *edi + keep * delta * delta;
                *xi = *xi + delta;
            }
        }
        self.steps += 1;
        Ok(true)
    }
}
