//! Small complex/Hermitian linear-algebra helpers shared across modules.
//!
//! Everything here wraps `nalgebra` dense routines; matrices are modest
//! (tens of rows), so dense eigendecompositions and Cholesky factors are
//! the right tool.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// (A + A^H) / 2.
pub fn hermitize(a: &CMat) -> CMat {
    let ah = a.adjoint();
    (a + ah).map(|z| z * 0.5)
}

/// (A + A^T) / 2.
pub fn symmetrize(a: &RMat) -> RMat {
    (a + a.transpose()).map(|x| x * 0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(lambda, v)` with `a = v diag(lambda) v^H` and orthonormal
/// columns in `v`.
pub fn herm_eigen(a: &CMat) -> (RVec, CMat) {
    let se = nalgebra::SymmetricEigen::new(hermitize(a));
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = RVec::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &RMat) -> (RVec, RMat) {
    let se = nalgebra::SymmetricEigen::new(symmetrize(a));
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = RVec::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig_herm(a: &CMat) -> f64 {
    herm_eigen(a).0[0]
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eig_sym(a: &RMat) -> f64 {
    sym_eigen(a).0[0]
}

/// PSD square root via eigendecomposition; negative eigenvalues are
/// clamped to zero so a numerically indefinite input still yields a
/// valid factor.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eigen(a);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = Complex64::new(vals[i].max(0.0).sqrt(), 0.0);
    }
    &vecs * d * vecs.adjoint()
}

/// Inverse of a Hermitian positive-definite matrix (Cholesky).
pub fn inv_hermitian_pd(a: &CMat) -> Option<CMat> {
    nalgebra::Cholesky::new(hermitize(a)).map(|c| c.inverse())
}

/// ln det of a Hermitian positive-definite matrix (Cholesky).
pub fn ln_det_hermitian_pd(a: &CMat) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(hermitize(a))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Real symmetric embedding `[X_R, -X_I; X_I, X_R]` of a Hermitian matrix.
///
/// The embedding is PSD iff the complex matrix is, with every eigenvalue
/// doubled in multiplicity.
pub fn embed_hermitian(a: &CMat) -> RMat {
    let m = a.nrows();
    let mut out = RMat::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + m, j + m)] = z.re;
            out[(i, j + m)] = -z.im;
            out[(i + m, j)] = z.im;
        }
    }
    out
}

pub fn frob_c(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frob_r(a: &RMat) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative Frobenius distance `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_frob_r(a: &RMat, b: &RMat) -> f64 {
    let denom = frob_r(a).max(frob_r(b)).max(1e-300);
    frob_r(&(a - b)) / denom
}

pub fn rel_frob_c(a: &CMat, b: &CMat) -> f64 {
    let denom = frob_c(a).max(frob_c(b)).max(1e-300);
    frob_c(&(a - b)) / denom
}

/// Random Hermitian PSD matrix `g g^H / dim`, scaled; used by tests and
/// the verification suites.
pub fn random_hermitian_psd<R: rand::Rng>(rng: &mut R, dim: usize, scale: f64) -> CMat {
    let g = CMat::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let mut out = &g * g.adjoint();
    out.scale_mut(scale / dim as f64);
    out
}

/// Random complex vector with entries uniform in the unit square.
pub fn random_cvec<R: rand::Rng>(rng: &mut R, dim: usize) -> CVec {
    CVec::from_fn(dim, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embed_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian_psd(&mut rng, 4, 2.0);
        let (vals_c, _) = herm_eigen(&a);
        let (vals_r, _) = sym_eigen(&embed_hermitian(&a));
        // each complex eigenvalue appears twice in the embedding
        for i in 0..4 {
            assert!((vals_r[2 * i] - vals_c[i]).abs() < 1e-10);
            assert!((vals_r[2 * i + 1] - vals_c[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_hermitian_psd(&mut rng, 5, 1.0);
        let s = psd_sqrt(&a);
        assert!(rel_frob_c(&(&s * &s), &a) < 1e-10);
    }

    #[test]
    fn ln_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = random_hermitian_psd(&mut rng, 4, 1.0);
        for i in 0..4 {
            a[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let (vals, _) = herm_eigen(&a);
        let want: f64 = vals.iter().map(|v| v.ln()).sum();
        let got = ln_det_hermitian_pd(&a).unwrap();
        assert!((got - want).abs() < 1e-9);
    }
}
