//! Small dense helpers. State dimensions here are tiny (1 to 3), so plain
//! slices with row-major matrices are all that is needed.

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Hilbert-Schmidt (Frobenius) norm of a row-major matrix.
pub fn hs_norm(m: &[f64]) -> f64 {
    norm(m)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `tr[σ H σᵀ]` for `σ` (d×m) and symmetric `H` (d×d), both row-major.
pub fn trace_sigma_h_sigma_t(sigma: &[f64], hess: &[f64], d: usize, m: usize) -> f64 {
    let mut acc = 0.0;
    for s in 0..m {
        for i in 0..d {
            let si = sigma[i * m + s];
            if si == 0.0 {
                continue;
            }
            for j in 0..d {
                acc += si * hess[i * d + j] * sigma[j * m + s];
            }
        }
    }
    acc
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
