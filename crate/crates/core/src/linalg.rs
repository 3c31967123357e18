//! Small dense Hermitian helpers.
//!
//! Hermitian `M x M` matrices are mapped to real vectors of length `M^2`
//! in an orthonormal basis for the inner product `Re tr(X Y)`: the `M`
//! diagonal entries come first, then `sqrt(2) Re X_ij`, `sqrt(2) Im X_ij`
//! for every pair `i < j` in row-major order. Dot products of these vectors
//! equal trace inner products of the matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::SQRT_2;

pub type CMat = DMatrix<Complex64>;

pub(crate) fn herm_dim(m: usize) -> usize {
    m * m
}

pub(crate) fn herm_to_vec(x: &CMat, out: &mut [f64]) {
    let m = x.nrows();
    debug_assert_eq!(out.len(), m * m);
    for i in 0..m {
        out[i] = x[(i, i)].re;
    }
    let mut p = m;
    for i in 0..m {
        for j in i + 1..m {
            // Average both triangles so slightly non-Hermitian input maps to
            // its Hermitian part.
            let v = 0.5 * (x[(i, j)] + x[(j, i)].conj());
            out[p] = SQRT_2 * v.re;
            out[p + 1] = SQRT_2 * v.im;
            p += 2;
        }
    }
}

pub(crate) fn vec_to_herm(v: &[f64], m: usize) -> CMat {
    debug_assert_eq!(v.len(), m * m);
    let mut x = CMat::zeros(m, m);
    for i in 0..m {
        x[(i, i)] = Complex64::new(v[i], 0.0);
    }
    let mut p = m;
    for i in 0..m {
        for j in i + 1..m {
            let c = Complex64::new(v[p], v[p + 1]) / SQRT_2;
            x[(i, j)] = c;
            x[(j, i)] = c.conj();
            p += 2;
        }
    }
    x
}

/// Parameter vector of the rank-one matrix `h h^H`.
pub(crate) fn outer_vec(h: &[Complex64]) -> Vec<f64> {
    let m = h.len();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i] = h[i].norm_sqr();
    }
    let mut p = m;
    for i in 0..m {
        for j in i + 1..m {
            let c = h[i] * h[j].conj();
            out[p] = SQRT_2 * c.re;
            out[p + 1] = SQRT_2 * c.im;
            p += 2;
        }
    }
    out
}

/// `h^H X h` as a complex number; the imaginary part is rounding noise for
/// Hermitian `X`.
pub(crate) fn quad_form(h: &[Complex64], x: &CMat) -> Complex64 {
    let m = h.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..m {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..m {
            row += x[(i, j)] * h[j];
        }
        acc += h[i].conj() * row;
    }
    acc
}

pub(crate) fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()) * Complex64::new(0.5, 0.0)
}

pub(crate) fn trace_re(x: &CMat) -> f64 {
    (0..x.nrows()).map(|i| x[(i, i)].re).sum()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn hermitian_eigenvalues(x: &CMat) -> DVector<f64> {
    let mut ev = hermitian_part(x).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub(crate) fn hermitian_top_eigenpair(x: &CMat) -> (f64, Vec<Complex64>) {
    let eig = hermitian_part(x).symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// Projects a Hermitian matrix onto the PSD cone by clipping negative
/// eigenvalues.
pub(crate) fn psd_projection(x: &CMat) -> CMat {
    let eig = hermitian_part(x).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return hermitian_part(x);
    }
    let m = x.nrows();
    let mut out = CMat::zeros(m, m);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > 0.0 {
            let u = eig.eigenvectors.column(i);
            out += u * u.adjoint() * Complex64::new(v, 0.0);
        }
    }
    hermitian_part(&out)
}

pub(crate) fn identity(m: usize, scale: f64) -> CMat {
    CMat::from_diagonal_element(m, m, Complex64::new(scale, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_herm(m: usize) -> CMat {
        let mut x = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let v = Complex64::new((i * 7 + j * 3) as f64 * 0.1 - 0.4, (i as f64 - j as f64) * 0.3);
                x[(i, j)] = v;
            }
        }
        hermitian_part(&x)
    }

    #[test]
    fn vec_roundtrip_and_inner_product() {
        let m = 4;
        let x = sample_herm(m);
        let y = sample_herm(m) * Complex64::new(0.5, 0.0) + identity(m, 1.0);
        let mut vx = vec![0.0; m * m];
        let mut vy = vec![0.0; m * m];
        herm_to_vec(&x, &mut vx);
        herm_to_vec(&y, &mut vy);
        let back = vec_to_herm(&vx, m);
        assert!((back - &x).norm() < 1e-14);
        let dot: f64 = vx.iter().zip(&vy).map(|(a, b)| a * b).sum();
        assert!((dot - (&x * &y).trace().re).abs() < 1e-12);
    }

    #[test]
    fn outer_vec_gives_quadratic_form() {
        let h = vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2), Complex64::new(0.0, -1.0)];
        let x = sample_herm(3);
        let mut vx = vec![0.0; 9];
        herm_to_vec(&x, &mut vx);
        let dot: f64 = outer_vec(&h).iter().zip(&vx).map(|(a, b)| a * b).sum();
        let q = quad_form(&h, &x);
        assert!((dot - q.re).abs() < 1e-12);
        assert!(q.im.abs() < 1e-12);
    }

    #[test]
    fn projection_clips_negative_part() {
        let x = sample_herm(3);
        let p = psd_projection(&x);
        assert!(hermitian_eigenvalues(&p)[0] >= -1e-12);
    }
}
