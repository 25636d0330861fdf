use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamStore, Tensor};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// AdaDelta accumulators: running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    pub sq_grad: Vec<Tensor>,
    pub sq_update: Vec<Tensor>,
}

impl AdaDelta {
    pub fn new(params: &ParamStore, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("AdaDelta rho must lie in (0, 1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("AdaDelta eps must be positive, got {eps}")));
        }
        Ok(AdaDelta {
            rho,
            eps,
            sq_grad: params.zeros_like(),
            sq_update: params.zeros_like(),
        })
    }

    /// Applies one update in place:
    ///
    /// ```text
    /// E[g²]  ← ρ E[g²] + (1-ρ) g²
    /// Δ      = -(√(E[Δ²] + ε) / √(E[g²] + ε)) g
    /// E[Δ²]  ← ρ E[Δ²] + (1-ρ) Δ²
    /// θ      ← θ + Δ
    /// ```
    pub fn update(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.tensors().len() != params.len() || self.sq_grad.len() != params.len() {
            return Err(Error::dim(
                "adadelta",
                (params.len(), 1),
                (grads.tensors().len(), self.sq_grad.len()),
            ));
        }
        let (rho, eps) = (self.rho, self.eps);
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id);
            let theta = params.get_mut(id);
            if g.shape() != theta.shape() || self.sq_grad[id.index()].shape() != theta.shape() {
                return Err(Error::dim("adadelta", theta.shape(), g.shape()));
            }
            let eg = self.sq_grad[id.index()].data_mut();
            let ex = self.sq_update[id.index()].data_mut();
            for (((t, &g), eg), ex) in theta.data_mut().iter_mut().zip(g.data()).zip(eg).zip(ex) {
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let delta = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
                *ex = rho * *ex + (1.0 - rho) * delta * delta;
                *t += delta;
            }
        }
        Ok(())
    }
}
