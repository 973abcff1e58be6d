//! Small dense-vector helpers used throughout the crate.
//!
//! All reductions run in index order so repeated evaluations are
//! bit-reproducible.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `out = a + s * b`
pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&ai, &bi)| ai + s * bi).collect()
}

/// `a += s * b` in place.
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for i in 0..a.len() {
        a[i] += s * b[i];
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&ai, &bi)| ai - bi).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|&ai| s * ai).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Indices and values of non-finite entries, for error reports.
pub fn non_finite_coords(a: &[f64]) -> Vec<(usize, f64)> {
    a.iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, &v)| (i, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norms() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(norm_sq(&[3.0, 4.0]), 25.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn add_scaled_matches_axpy() {
        let a = vec![1.0, -2.0, 0.5];
        let b = vec![2.0, 1.0, -1.0];
        let out = add_scaled(&a, 0.25, &b);
        let mut a2 = a.clone();
        axpy(&mut a2, 0.25, &b);
        assert_eq!(out, a2);
    }

    #[test]
    fn finds_non_finite() {
        let v = vec![1.0, f64::NAN, 3.0, f64::INFINITY];
        let bad = non_finite_coords(&v);
        assert_eq!(bad.len(), 2);
        assert_eq!(bad[0].0, 1);
        assert_eq!(bad[1].0, 3);
        assert!(!all_finite(&v));
    }
}
