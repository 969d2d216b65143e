//! Small dense vector and matrix helpers on `f64` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `y = W x` for a row-major `rows x cols` matrix.
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    (0..rows).map(|i| dot(&w[i * cols..(i + 1) * cols], x)).collect()
}

/// `y = W^T x` for a row-major `rows x cols` matrix.
pub fn matvec_t(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    for i in 0..rows {
        let xi = x[i];
        for (yj, wij) in y.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *yj += wij * xi;
        }
    }
    y
}

/// Largest singular value by power iteration on `W^T W`.
///
/// Iterates until the Rayleigh residual `||W^T W v - s^2 v||` falls below
/// `tol * s^2` or `max_iter` is reached. The start vector is all ones plus a
/// ramp, so the result is deterministic. The returned value is the norm of
/// `W v` for the final unit `v`, which never exceeds the true spectral norm.
pub fn spectral_norm(w: &[f64], rows: usize, cols: usize, tol: f64, max_iter: usize) -> f64 {
    if rows == 0 || cols == 0 || w.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + j as f64 / cols as f64).collect();
    normalize(&mut v);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let wv = matvec(w, rows, cols, &v);
        let mut u = matvec_t(w, rows, cols, &wv);
        let lambda = dot(&u, &v);
        let residual: f64 = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        sigma = norm(&wv);
        if norm(&u) == 0.0 {
            break;
        }
        if residual <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        normalize(&mut u);
        v = u;
    }
    sigma
}

/// Upper bound on the spectral norm: the power-iteration estimate inflated by
/// its Rayleigh residual, capped by the Frobenius norm.
pub fn spectral_norm_upper(w: &[f64], rows: usize, cols: usize) -> f64 {
    let est = spectral_norm(w, rows, cols, 1e-8, 10_000);
    let frob = norm(w);
    // The power iterate approaches sigma_max from below; a relative slack of
    // 1e-6 covers the residual tolerance. Frobenius is always a valid cap.
    (est * (1.0 + 1e-6)).min(frob).max(est)
}

pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let w = [2.0, 0.0, 0.0, 0.0, -3.0, 0.0];
        assert!((spectral_norm(&w, 2, 3, 1e-12, 1000) - 3.0).abs() < 1e-9);
        assert!((spectral_norm_upper(&w, 2, 3) - 3.0).abs() < 1e-5);
    }

    #[test]
    fn spectral_norm_matches_closed_form_2x2() {
        // [[1, 2], [3, 4]]: sigma_max^2 is the largest eigenvalue of W^T W = [[10, 14], [14, 20]].
        let w = [1.0, 2.0, 3.0, 4.0];
        let expected = ((30.0 + (30.0f64 * 30.0 - 4.0 * 4.0).sqrt()) / 2.0).sqrt();
        assert!((spectral_norm(&w, 2, 2, 1e-14, 10_000) - expected).abs() < 1e-9);
    }

    #[test]
    fn transpose_product_agrees_with_dot() {
        let w = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let x = [0.3, -0.7];
        let y = [1.0, 2.0, -1.0];
        let lhs = dot(&matvec(&w, 2, 3, &y), &x);
        let rhs = dot(&y, &matvec_t(&w, 2, 3, &x));
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
