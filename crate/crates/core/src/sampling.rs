//! Deterministic point clouds for the sampled `∀x` checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Where to sample: a ball of radius `radius` plus a small cluster around the
/// origin, optionally restricted to the nonnegative orthant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    pub radius: f64,
    pub n_ball: usize,
    pub origin_radius: f64,
    pub n_origin: usize,
    pub nonnegative: bool,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            radius: 10.0,
            n_ball: 10_000,
            origin_radius: 1e-3,
            n_origin: 100,
            nonnegative: false,
            seed: 0x5eed_0f5a_3b1e,
        }
    }
}

impl SampleSpec {
    pub fn with_counts(mut self, n_ball: usize, n_origin: usize) -> Self {
        self.n_ball = n_ball;
        self.n_origin = n_origin;
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    /// Caps the radius at the projection ball `h^{-r}`.
    pub fn within_projection(mut self, h: f64, r: f64) -> Self {
        self.radius = self.radius.min(h.powf(-r));
        self
    }

    pub fn nonnegative(mut self) -> Self {
        self.nonnegative = true;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The origin, then `n_origin` points in the small ball, then `n_ball`
    /// points uniform in the large ball. Same spec and `d`, same points.
    pub fn points(&self, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (d as u64).wrapping_mul(0x9e37_79b9));
        let mut out = Vec::with_capacity(1 + self.n_origin + self.n_ball);
        out.push(vec![0.0; d]);
        for _ in 0..self.n_origin {
            out.push(self.uniform_in_ball(&mut rng, d, self.origin_radius));
        }
        for _ in 0..self.n_ball {
            out.push(self.uniform_in_ball(&mut rng, d, self.radius));
        }
        out
    }

    fn uniform_in_ball(&self, rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::linalg::norm(&dir);
        let u: f64 = rng.random();
        let rad = radius * u.powf(1.0 / d as f64);
        for v in dir.iter_mut() {
            *v = if n > 0.0 { *v / n * rad } else { 0.0 };
            if self.nonnegative {
                *v = v.abs();
            }
        }
        dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    #[test]
    fn points_stay_in_ball_and_repeat() {
        let spec = SampleSpec::default().with_counts(1000, 10).with_radius(3.0);
        let a = spec.points(3);
        assert_eq!(a.len(), 1011);
        assert!(a.iter().all(|x| norm(x) <= 3.0 + 1e-12));
        assert!(a[1..11].iter().all(|x| norm(x) <= 1e-3));
        assert_eq!(a, spec.points(3));
    }

    #[test]
    fn nonnegative_orthant() {
        let spec = SampleSpec::default().with_counts(200, 5).nonnegative();
        assert!(spec.points(2).iter().flatten().all(|v| *v >= 0.0));
    }
}
