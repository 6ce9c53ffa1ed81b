use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Master seed from which every path derives its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
}

const INIT_DOMAIN: u64 = 0x1f1e_57a7_e000_0000;

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        RngSpec { master_seed }
    }

    /// Stream for the Brownian increments of `path`.
    pub fn path_rng(&self, path: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path);
        rng
    }

    /// Separate stream for sampling the initial state of `path`, so that
    /// switching the initial distribution leaves the increments unchanged.
    pub fn init_rng(&self, path: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed ^ INIT_DOMAIN);
        rng.set_stream(path);
        rng
    }
}

/// Fills `out` with independent standard normals times `scale`, in order.
pub fn fill_normals(rng: &mut ChaCha12Rng, scale: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}
