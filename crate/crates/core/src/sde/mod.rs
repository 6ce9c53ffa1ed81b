pub mod builtin;
pub mod lyapunov;
pub mod model;
pub mod operator;

pub use lyapunov::{Lyapunov, LyapunovClass, LyapunovParams, NormPower, WeightedPoly};
pub use model::{eval_diffusion, eval_drift, FnModel, GrowthProfile, SdeModel};
pub use operator::{diffusion_operator, tamed_diffusion_operator};
