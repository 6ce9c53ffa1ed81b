use crate::error::{Error, Result};
use crate::linalg::{all_finite, dot, trace_sigma_h_sigma_t};
use crate::schemes::TamedCoefficients;
use crate::sde::lyapunov::Lyapunov;
use crate::sde::model::SdeModel;

/// `L V(t, x) = ⟨∇V(x), b(t,x)⟩ + ½ tr[σ V''(x) σᵀ]`.
pub fn diffusion_operator(
    model: &dyn SdeModel,
    lyap: &dyn Lyapunov,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let d = model.dim_state();
    let m = model.dim_noise();
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    if !all_finite(x) {
        return Err(Error::DomainViolation { x: x.to_vec() });
    }
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * m];
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    model.drift(t, x, &mut b);
    model.diffusion(t, x, &mut sigma);
    lyap.gradient(x, &mut grad);
    lyap.hessian(x, &mut hess);
    let val = dot(&grad, &b) + 0.5 * trace_sigma_h_sigma_t(&sigma, &hess, d, m);
    if val.is_finite() {
        Ok(val)
    } else {
        Err(Error::DomainViolation { x: x.to_vec() })
    }
}

/// `L^h V`: the same formula with the tamed pair `(b^h, σ^h)` at step `h`.
pub fn tamed_diffusion_operator(
    tamed: &TamedCoefficients,
    lyap: &dyn Lyapunov,
    t: f64,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    diffusion_operator(&tamed.at_step(h), lyap, t, x)
}
