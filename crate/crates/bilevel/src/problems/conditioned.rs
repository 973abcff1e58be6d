//! Seeded random matrices with a controlled condition number.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problems::test_rng;

/// Random `rows x cols` matrix with condition number at most `max_cond`.
///
/// Assembled as `U Σ Vᵀ` from a seeded random orthogonal pair (QR factors of
/// Gaussian matrices) and a singular-value ladder linearly spaced in
/// `[1/max_cond, 1]`, so the spectral norm is 1 and the condition number hits
/// `max_cond` exactly when `min(rows, cols) > 1`.
pub fn make_conditioned_matrix(
    seed: u64,
    rows: usize,
    cols: usize,
    max_cond: f64,
) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidConfig(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if !(max_cond >= 1.0) {
        return Err(Error::InvalidConfig(format!("max_cond must be >= 1, got {max_cond}")));
    }
    let mut rng = test_rng(seed);
    let u = random_orthogonal(&mut rng, rows);
    let v = random_orthogonal(&mut rng, cols);
    let k = rows.min(cols);
    let lo = 1.0 / max_cond;
    let mut sigma = DMatrix::zeros(rows, cols);
    for i in 0..k {
        let t = if k == 1 { 1.0 } else { i as f64 / (k - 1) as f64 };
        sigma[(i, i)] = lo + t * (1.0 - lo);
    }
    Ok(&u * sigma * v.transpose())
}

fn random_orthogonal(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    use rand::Rng;
    let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample(rand_distr::StandardNormal));
    gauss.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(m: &DMatrix<f64>) -> f64 {
        let sv = m.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(f64::MIN, f64::max);
        let min = sv.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    #[test]
    fn condition_number_within_bound() {
        let h = make_conditioned_matrix(42, 20, 20, 10.0).unwrap();
        let c = cond(&h);
        assert!((1.0..=10.0 + 1e-9).contains(&c), "cond = {c}");
    }

    #[test]
    fn unit_max_cond_gives_equal_singular_values() {
        let h = make_conditioned_matrix(1, 8, 8, 1.0).unwrap();
        let sv = h.clone().svd(false, false).singular_values;
        for s in sv.iter() {
            assert!((s - 1.0).abs() < 1e-12, "singular value {s}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_conditioned_matrix(7, 12, 5, 10.0).unwrap();
        let b = make_conditioned_matrix(7, 12, 5, 10.0).unwrap();
        assert_eq!(a, b);
        let c = make_conditioned_matrix(8, 12, 5, 10.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(make_conditioned_matrix(1, 0, 4, 10.0).is_err());
        assert!(make_conditioned_matrix(1, 4, 0, 10.0).is_err());
        assert!(make_conditioned_matrix(1, 4, 4, 0.5).is_err());
    }
}
