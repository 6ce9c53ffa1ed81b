use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::montecarlo::rng::fill_normals;

/// Brownian increments on the fine grid `T/2^L`, and their aggregation to
/// coarser dyadic grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianLattice {
    pub t_end: f64,
    pub h_fine: f64,
    pub n_fine: usize,
    pub m: usize,
}

impl BrownianLattice {
    pub fn new(t_end: f64, h_fine: f64, m: usize) -> Result<Self> {
        let q = t_end / h_fine;
        let n = q.round();
        if !(h_fine > 0.0) || n < 1.0 || (q - n).abs() > 1e-9 * q {
            return Err(Error::config(format!(
                "T/h_ref must be a positive integer: T = {t_end}, h_ref = {h_fine}"
            )));
        }
        Ok(BrownianLattice {
            t_end,
            h_fine,
            n_fine: n as usize,
            m,
        })
    }

    /// Fine increments, row-major `n_fine × m`, drawn step by step.
    pub fn draw(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.n_fine * self.m];
        fill_normals(rng, self.h_fine.sqrt(), &mut out);
        out
    }

    /// Number of fine steps per step of size `h`; `h` must be `2^j h_fine`.
    pub fn factor(&self, h: f64) -> Result<usize> {
        let q = h / self.h_fine;
        let n = q.round();
        let dyadic = n >= 1.0 && (q - n).abs() <= 1e-9 * q && (n as u64).is_power_of_two();
        if !dyadic || !self.n_fine.is_multiple_of(n as usize) {
            return Err(Error::config(format!(
                "level h = {h} is not a dyadic multiple of h_ref = {}",
                self.h_fine
            )));
        }
        Ok(n as usize)
    }

    /// Sums each run of `factor` consecutive fine increments, left to right.
    pub fn coarsen(&self, fine: &[f64], factor: usize) -> Vec<f64> {
        let m = self.m;
        let n_coarse = self.n_fine / factor;
        let mut out = vec![0.0; n_coarse * m];
        for k in 0..n_coarse {
            for j in 0..m {
                let mut acc = fine[(k * factor) * m + j];
                for s in 1..factor {
                    acc += fine[(k * factor + s) * m + j];
                }
                out[k * m + j] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::RngSpec;

    #[test]
    fn coarse_sums_are_exact_fixed_order_sums() {
        let lat = BrownianLattice::new(1.0, 1.0 / 64.0, 2).unwrap();
        let fine = lat.draw(&mut RngSpec::new(1).path_rng(0));
        let c = lat.coarsen(&fine, 8);
        assert_eq!(c.len(), 16);
        for k in 0..8 {
            let mut acc = fine[k * 8 * 2 + 1];
            for s in 1..8 {
                acc += fine[(k * 8 + s) * 2 + 1];
            }
            assert_eq!(c[k * 2 + 1].to_bits(), acc.to_bits());
        }
        assert_eq!(lat.coarsen(&fine, 1), fine);
    }

    #[test]
    fn non_dyadic_level_rejected() {
        let lat = BrownianLattice::new(1.0, 1.0 / 64.0, 1).unwrap();
        assert!(lat.factor(3.0 / 64.0).is_err());
        assert!(lat.factor(0.1).is_err());
        assert_eq!(lat.factor(1.0 / 16.0).unwrap(), 4);
    }
}
