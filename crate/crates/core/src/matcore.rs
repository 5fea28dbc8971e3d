//! Dense complex-matrix kernels shared by every design algorithm.
//!
//! All routines work on [`CMatrix`] (`nalgebra::DMatrix<Complex64>`) and are
//! pure. Hermitian inputs are checked against a relative tolerance and then
//! symmetrized before decomposition so roundoff asymmetry from products such
//! as `H H*` never leaks into eigenvectors. Rank cuts and PSD clamps are
//! relative to the largest eigen/singular value.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, the carrier for channels, beamformers and covariances.
pub type CMatrix = DMatrix<Complex64>;

/// Relative asymmetry accepted before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Relative eigenvalue cut for PSD clamping and inverse roots.
pub const EIG_REL_TOL: f64 = 1e-12;
/// Relative singular-value cut for range computations.
pub const RANK_REL_TOL: f64 = 1e-12;
/// Eigenvalues closer than this (relative to the largest) form a cluster.
const CLUSTER_REL_GAP: f64 = 1e-10;
/// Smallest component magnitude that fixes an eigenvector's phase.
const PHASE_PIVOT_TOL: f64 = 1e-9;

#[inline]
pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Squared Frobenius norm.
pub fn frob2(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real diagonal matrix from a slice of reals.
pub fn diag_real(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| real(v)),
    ))
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Relative Hermitian defect `||M - M*||_F / ||M||_F` (0 for the zero matrix).
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

/// Checks Hermitian symmetry within [`HERMITIAN_TOL`] and returns `(M + M*)/2`.
pub fn symmetrize(m: &CMatrix) -> Result<CMatrix> {
    check_square(m)?;
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    Ok((m + m.adjoint()).scale(0.5))
}

/// Eigendecomposition of a Hermitian matrix with a deterministic layout.
///
/// Eigenvalues come back in descending order. Within a cluster (gap below
/// `1e-10 * lambda_max`) the order of the underlying decomposition is kept.
/// Each eigenvector is rotated so that its first component of magnitude above
/// `1e-9` is real and nonnegative.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    let sym = symmetrize(m)?;
    let n = sym.nrows();
    let eig = sym.symmetric_eigen();
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let lmax = raw.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let gap = CLUSTER_REL_GAP * lmax;
    // Re-sort clusters by original index.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end - 1]] - raw[order[end]] < gap {
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(raw[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(pivot) = col.iter().find(|z| z.norm() > PHASE_PIVOT_TOL) {
            let rot = pivot.conj() / pivot.norm();
            col *= rot;
        }
        vectors.set_column(dst, &col);
    }
    Ok(HermitianEigen { values, vectors })
}

/// Principal square root (and optionally inverse square root) of a Hermitian PSD matrix.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    pub base: CMatrix,
    pub sqrt: CMatrix,
    pub inv_sqrt: Option<CMatrix>,
    /// Eigenvalues of `base`, descending, after clamping.
    pub eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl HermitianFactor {
    /// `base^{-1}` assembled from the stored decomposition.
    pub fn inverse(&self) -> Option<CMatrix> {
        self.inv_sqrt.as_ref()?;
        let inv: Vec<f64> = self.eigenvalues.iter().map(|l| 1.0 / l).collect();
        Some(spectral(&self.eigenvectors, &inv))
    }
}

/// `V diag(f) V*`.
fn spectral(vectors: &CMatrix, values: &[f64]) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let out = scaled * vectors.adjoint();
    (&out + out.adjoint()).scale(0.5)
}

pub fn hermitian_sqrt(m: &CMatrix, need_inverse: bool) -> Result<HermitianFactor> {
    let eig = hermitian_eigen(m)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let mut clamped = Vec::with_capacity(eig.values.len());
    for &l in &eig.values {
        if l < -EIG_REL_TOL * lmax || (lmax == 0.0 && l < 0.0) {
            return Err(Error::NotPsd(l));
        }
        clamped.push(l.max(0.0));
    }
    let cut = EIG_REL_TOL * lmax;
    let invertible = lmax > 0.0 && clamped.iter().all(|&l| l > cut);
    if need_inverse && !invertible {
        return Err(Error::SingularForInverse);
    }
    let roots: Vec<f64> = clamped.iter().map(|l| l.sqrt()).collect();
    let sqrt = spectral(&eig.vectors, &roots);
    let inv_sqrt = invertible.then(|| {
        let inv: Vec<f64> = roots.iter().map(|r| 1.0 / r).collect();
        spectral(&eig.vectors, &inv)
    });
    Ok(HermitianFactor {
        base: m.clone(),
        sqrt,
        inv_sqrt,
        eigenvalues: clamped,
        eigenvectors: eig.vectors,
    })
}

/// The `k` leading eigenvectors (as columns) and their eigenvalues, descending.
pub fn top_eigvecs(m: &CMatrix, k: usize) -> Result<(CMatrix, Vec<f64>)> {
    check_square(m)?;
    let dim = m.nrows();
    if k == 0 || k > dim {
        return Err(Error::KOutOfRange { k, dim });
    }
    let eig = hermitian_eigen(m)?;
    let vecs = eig.vectors.columns(0, k).into_owned();
    Ok((vecs, eig.values[..k].to_vec()))
}

/// Singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

pub fn nuclear_norm(m: &CMatrix) -> f64 {
    singular_values(m).iter().sum()
}

/// Orthonormal basis of the range of `x`, with rank cut at `1e-12 * sigma_max`.
pub fn range_basis(x: &CMatrix) -> Result<CMatrix> {
    let svd = x.clone().svd(true, false);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > RANK_REL_TOL * smax)
        .map(|(i, _)| i)
        .collect();
    Ok(u.select_columns(keep.iter()))
}

/// Orthogonal projector onto the range of `x`.
pub fn orth_projector(x: &CMatrix) -> Result<CMatrix> {
    let q = range_basis(x)?;
    let p = &q * q.adjoint();
    Ok((&p + p.adjoint()).scale(0.5))
}

/// Unitary `T` maximizing `Re tr(M T)`: with `M = U S V*`, `T = V U*`.
pub fn procrustes_unitary(m: &CMatrix) -> Result<CMatrix> {
    check_square(m)?;
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(v_t.adjoint() * u.adjoint())
}

/// Inverse of a Hermitian positive definite matrix, or `None` when its
/// smallest eigenvalue is at most `rel_tol` times the largest.
pub fn hpd_inverse(m: &CMatrix, rel_tol: f64) -> Option<CMatrix> {
    let eig = hermitian_eigen(m).ok()?;
    let lmax = *eig.values.first()?;
    let lmin = *eig.values.last()?;
    if lmax <= 0.0 || lmin <= rel_tol * lmax {
        return None;
    }
    let inv: Vec<f64> = eig.values.iter().map(|l| 1.0 / l).collect();
    Some(spectral(&eig.vectors, &inv))
}

/// Smallest over largest singular value, 0 for the zero matrix.
pub fn column_rank_ratio(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 || m.ncols() > m.nrows() {
        return 0.0;
    }
    s.last().copied().unwrap_or(0.0) / smax
}

/// Least-squares solve `min ||A X - B||_F` for full-column-rank `A`.
///
/// Fails with [`Error::RankDeficientAnalog`] when `sigma_min <= rel_tol * sigma_max`.
pub fn least_squares(a: &CMatrix, b: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "least squares: {} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().fold(0.0f64, |x, &y| x.max(y));
    let smin = s.iter().fold(f64::INFINITY, |x, &y| x.min(y));
    if a.ncols() > a.nrows() || smax == 0.0 || smin <= rel_tol * smax {
        let ratio = if smax > 0.0 && a.ncols() <= a.nrows() {
            smin / smax
        } else {
            0.0
        };
        return Err(Error::RankDeficientAnalog(ratio));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeff = u.adjoint() * b;
    for (i, &si) in s.iter().enumerate() {
        coeff.row_mut(i).scale_mut(1.0 / si);
    }
    Ok(v_t.adjoint() * coeff)
}

/// Column `j` of `m` as an owned `n x 1` matrix.
pub fn column(m: &CMatrix, j: usize) -> CMatrix {
    m.columns(j, 1).into_owned()
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Convenience constructor from row-major complex entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_row_slice(rows, cols, entries)
}

/// Real-valued column vector as a matrix.
pub fn real_column(values: &[f64]) -> CMatrix {
    CMatrix::from_iterator(values.len(), 1, values.iter().map(|&v| real(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix as random_matrix, haar_unitary as random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_of_diagonal() {
        let f = hermitian_sqrt(&diag_real(&[4.0, 9.0]), true).unwrap();
        assert!(max_abs_diff(&f.sqrt, &diag_real(&[2.0, 3.0])) < 1e-14);
        let inv = f.inv_sqrt.unwrap();
        assert!(max_abs_diff(&inv, &diag_real(&[0.5, 1.0 / 3.0])) < 1e-14);
    }

    #[test]
    fn sqrt_of_identity() {
        let f = hermitian_sqrt(&identity(3), true).unwrap();
        assert!(max_abs_diff(&f.sqrt, &identity(3)) < 1e-14);
        assert!(max_abs_diff(f.inv_sqrt.as_ref().unwrap(), &identity(3)) < 1e-14);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_matrix(4, 4, &mut rng);
            let m = &x * x.adjoint();
            let f = hermitian_sqrt(&m, true).unwrap();
            assert!((&f.sqrt * &f.sqrt - &m).norm() <= 1e-10 * m.norm());
            let inv = f.inv_sqrt.as_ref().unwrap();
            assert!((inv * &m * inv - identity(4)).norm() <= 1e-8);
            let minv = f.inverse().unwrap();
            assert!((&minv * &m - identity(4)).norm() <= 1e-8);
        }
    }

    #[test]
    fn sqrt_error_paths() {
        let asym = from_rows(2, 2, &[real(1.0), real(1.0), real(0.0), real(1.0)]);
        assert!(matches!(
            hermitian_sqrt(&asym, false),
            Err(Error::NotHermitian(_))
        ));
        assert!(matches!(
            hermitian_sqrt(&diag_real(&[1.0, -0.5]), false),
            Err(Error::NotPsd(_))
        ));
        assert!(matches!(
            hermitian_sqrt(&diag_real(&[1.0, 0.0]), true),
            Err(Error::SingularForInverse)
        ));
        let f = hermitian_sqrt(&diag_real(&[1.0, 0.0]), false).unwrap();
        assert!(f.inv_sqrt.is_none());
        // tiny negative eigenvalue within tolerance is clamped
        let f = hermitian_sqrt(&diag_real(&[1.0, -1e-14]), false).unwrap();
        assert_eq!(f.eigenvalues[1], 0.0);
    }

    #[test]
    fn top_eigvecs_of_diagonal() {
        let (v, l) = top_eigvecs(&diag_real(&[1.0, 5.0, 3.0]), 2).unwrap();
        assert_eq!(l.len(), 2);
        assert!((l[0] - 5.0).abs() < 1e-14 && (l[1] - 3.0).abs() < 1e-14);
        let expected = from_rows(
            3,
            2,
            &[
                real(0.0),
                real(0.0),
                real(1.0),
                real(0.0),
                real(0.0),
                real(1.0),
            ],
        );
        assert!(max_abs_diff(&v, &expected) < 1e-14);
    }

    #[test]
    fn top_eigvecs_degenerate_uses_convention() {
        let (v, l) = top_eigvecs(&identity(2), 1).unwrap();
        assert_eq!(l, vec![1.0]);
        assert!(max_abs_diff(&v, &real_column(&[1.0, 0.0])) < 1e-14);
    }

    #[test]
    fn top_eigvecs_residual_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(6, 6, &mut rng);
        let m = (&x + x.adjoint()).scale(0.5);
        let (v, l) = top_eigvecs(&m, 3).unwrap();
        let resid = &m * &v - &v * diag_real(&l);
        assert!(resid.norm() <= 1e-9);
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..3 {
            let pivot = v
                .column(j)
                .iter()
                .find(|z| z.norm() > 1e-9)
                .copied()
                .unwrap();
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
        let (v2, l2) = top_eigvecs(&m, 3).unwrap();
        assert_eq!(v, v2);
        assert_eq!(l, l2);
    }

    #[test]
    fn top_eigvecs_errors() {
        assert!(matches!(
            top_eigvecs(&identity(2), 0),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(matches!(
            top_eigvecs(&identity(2), 3),
            Err(Error::KOutOfRange { .. })
        ));
        let asym = from_rows(2, 2, &[real(1.0), real(2.0), real(0.0), real(1.0)]);
        assert!(matches!(top_eigvecs(&asym, 1), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn projector_examples() {
        let p = orth_projector(&real_column(&[1.0, 0.0])).unwrap();
        assert!(max_abs_diff(&p, &diag_real(&[1.0, 0.0])) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(3, 3, &mut rng);
        assert!(max_abs_diff(&orth_projector(&x).unwrap(), &identity(3)) < 1e-12);

        // duplicated column: rank one projector onto it
        let c = random_matrix(4, 1, &mut rng);
        let mut twice = CMatrix::zeros(4, 2);
        twice.set_column(0, &c.column(0));
        twice.set_column(1, &c.column(0));
        let p = orth_projector(&twice).unwrap();
        let outer = &c * c.adjoint() / real(frob2(&c));
        assert!(max_abs_diff(&p, &outer) < 1e-12);

        assert!(matches!(
            orth_projector(&CMatrix::zeros(3, 2)),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn projector_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random_matrix(6, 2, &mut rng);
            let p = orth_projector(&x).unwrap();
            assert!((&p - p.adjoint()).norm() < 1e-12);
            assert!((&p * &p - &p).norm() < 1e-10);
            assert!((&p * &x - &x).norm() < 1e-10 * x.norm());
        }
    }

    #[test]
    fn procrustes_examples() {
        assert!(max_abs_diff(&procrustes_unitary(&identity(2)).unwrap(), &identity(2)) < 1e-14);
        let m = diag_real(&[2.0, -3.0]);
        let t = procrustes_unitary(&m).unwrap();
        assert!(max_abs_diff(&t, &diag_real(&[1.0, -1.0])) < 1e-14);
        assert!(((&m * &t).trace().re - 5.0).abs() < 1e-12);
        assert!(matches!(
            procrustes_unitary(&CMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn procrustes_beats_random_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_matrix(3, 3, &mut rng);
        let t = procrustes_unitary(&m).unwrap();
        assert!((&t * t.adjoint() - identity(3)).norm() < 1e-10);
        let best = (&m * &t).trace().re;
        let nuc = nuclear_norm(&m);
        assert!((best - nuc).abs() <= 1e-9 * nuc);
        for _ in 0..10_000 {
            let r = random_unitary(3, &mut rng);
            assert!((&m * &r).trace().re <= best + 1e-12);
        }
    }

    #[test]
    fn least_squares_rank_check() {
        let a = from_rows(
            3,
            2,
            &[
                real(1.0),
                real(1.0),
                real(1.0),
                real(1.0),
                real(0.0),
                real(0.0),
            ],
        );
        let b = real_column(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            least_squares(&a, &b, 1e-10),
            Err(Error::RankDeficientAnalog(_))
        ));
    }
}
