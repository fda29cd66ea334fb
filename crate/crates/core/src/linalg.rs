//! Dense complex linear algebra helpers on top of `nalgebra`.
//!
//! Everything here works on small matrices (the weight size N is typically
//! 2 or 3), so clarity wins over blocking or in-place tricks. The one piece
//! of policy in this module is the numerical-rank rule used by every
//! nullspace computation in the crate, see [`nullspace`].

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, QR, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Relative gap a singular-value drop must reach before it can decide a rank.
pub const MIN_RANK_GAP: f64 = 10.0;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| c64(x, 0.0)))
}

/// Frobenius norm.
pub fn norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(A + A*) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// `‖A − A*‖_F`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    norm(&(a - a.adjoint()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors, in `values` order.
    pub vectors: CMat,
}

pub fn hermitian_eigen(a: &CMat) -> HermitianEigen {
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Square root and inverse square root of a Hermitian positive definite matrix.
pub fn pd_sqrt_pair(a: &CMat) -> Result<(CMat, CMat)> {
    let eig = hermitian_eigen(a);
    let top = eig.values.last().copied().unwrap_or(0.0);
    let bottom = eig.values.first().copied().unwrap_or(0.0);
    if !(bottom > 0.0) || !(bottom > top * 1e-15) {
        return Err(Error::Degenerate(format!(
            "matrix is not positive definite (eigenvalues in [{bottom:e}, {top:e}])"
        )));
    }
    let u = &eig.vectors;
    let diag = |f: fn(f64) -> f64| {
        CMat::from_diagonal(&DVector::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|&l| c64(f(l), 0.0)),
        ))
    };
    let sqrt = u * diag(f64::sqrt) * u.adjoint();
    let inv_sqrt = u * diag(|l| 1.0 / l.sqrt()) * u.adjoint();
    Ok((hermitian_part(&sqrt), hermitian_part(&inv_sqrt)))
}

/// Smallest and largest eigenvalue of the Hermitian part of `a`.
pub fn hermitian_extremes(a: &CMat) -> (f64, f64) {
    let v = hermitian_eigen(a).values;
    (v[0], v[v.len() - 1])
}

/// Eigenvalues and (unit) eigenvectors of a general complex matrix, via the
/// Schur form. Used to audit diagonalizability, not on any hot path.
pub fn general_eigen(a: &CMat) -> (Vec<Complex64>, CMat) {
    let n = a.nrows();
    let (q, t) = Schur::new(a.clone()).unpack();
    let lambdas: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let mut vectors = CMat::zeros(n, n);
    for k in 0..n {
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        y[k] = c64(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in (j + 1)..=k {
                acc += t[(j, l)] * y[l];
            }
            let mut denom = t[(j, j)] - lambdas[k];
            if denom.norm() < 1e-14 * scale {
                denom = c64(1e-14 * scale, 0.0);
            }
            y[j] = -acc / denom;
        }
        let v = &q * DVector::from_vec(y);
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        vectors.set_column(k, &v.unscale(vn));
    }
    (lambdas, vectors)
}

/// Builds the real matrix of a real-linear map `Mat_N(C) → C^m`.
///
/// Unknown `T` is realified as `2N²` coordinates: real parts of the entries
/// in row-major order followed by the imaginary parts. The map output is
/// realified the same way (real parts, then imaginary parts).
pub fn realify<F>(n: usize, map: F) -> DMatrix<f64>
where
    F: Fn(&CMat) -> Vec<Complex64>,
{
    let unknowns = 2 * n * n;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(unknowns);
    for idx in 0..unknowns {
        let entry = idx % (n * n);
        let mut t = CMat::zeros(n, n);
        t[(entry / n, entry % n)] = if idx < n * n {
            c64(1.0, 0.0)
        } else {
            c64(0.0, 1.0)
        };
        let image = map(&t);
        let mut col: Vec<f64> = image.iter().map(|z| z.re).collect();
        col.extend(image.iter().map(|z| z.im));
        columns.push(col);
    }
    let rows = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, unknowns, |r, c| columns[c][r])
}

/// Inverse of the unknown realification used by [`realify`].
pub fn unrealify(v: &DVector<f64>, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| c64(v[i * n + j], v[n * n + i * n + j]))
}

pub fn realify_matrix(t: &CMat) -> DVector<f64> {
    let n = t.nrows();
    DVector::from_fn(2 * n * n, |idx, _| {
        let e = idx % (n * n);
        let z = t[(e / n, e % n)];
        if idx < n * n {
            z.re
        } else {
            z.im
        }
    })
}

/// Outcome of a numerical-rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Largest relative gap in the singular spectrum.
    Gap,
    /// No usable gap; singular values below `eps·σ_max` were counted as zero.
    Threshold,
}

#[derive(Debug, Clone)]
pub struct Nullspace {
    /// Orthonormal basis (columns of V for the discarded singular values).
    pub basis: Vec<DVector<f64>>,
    /// All singular values, descending. Always `ncols` long.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `σ_rank / σ_{rank+1}` at the chosen cut, when the cut is interior.
    pub gap: Option<f64>,
    pub rule: RankRule,
}

/// Numerical nullspace of a real matrix.
///
/// The rank is placed at the largest relative singular-value gap among the
/// cuts whose discarded part lies below `sqrt(eps)·σ_max`, provided that gap
/// is at least [`MIN_RANK_GAP`]. Otherwise singular values below `eps·σ_max`
/// are treated as zero.
pub fn nullspace(a: &DMatrix<f64>, eps: f64) -> Nullspace {
    nullspace_with_scale(a, eps, 0.0)
}

/// As [`nullspace`], measuring singular values against `max(σ_max, scale)`.
/// Needed when the whole system may vanish, so that `σ_max` itself is noise.
pub fn nullspace_with_scale(a: &DMatrix<f64>, eps: f64, scale: f64) -> Nullspace {
    let cols = a.ncols();
    if cols == 0 {
        return Nullspace {
            basis: vec![],
            singular_values: vec![],
            rank: 0,
            gap: None,
            rule: RankRule::Threshold,
        };
    }
    // Reduce tall systems to a square triangle first; pad short ones with zero rows
    // so the SVD delivers a full right singular basis.
    let square = if a.nrows() >= cols {
        QR::new(a.clone()).unpack_r()
    } else {
        let mut padded = DMatrix::<f64>::zeros(cols, cols);
        padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
        padded
    };
    let svd = SVD::new(square, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let smax = s[0].max(scale);
    let (rank, gap, rule) = if smax <= 0.0 {
        (0, None, RankRule::Gap)
    } else {
        let gate = eps.sqrt() * smax;
        // Ratios between values at roundoff level carry no information.
        let floor = f64::EPSILON * cols as f64 * smax;
        let mut best: Option<(usize, f64)> = None;
        for r in 1..cols {
            if s[r] > gate || s[r - 1] <= floor {
                continue;
            }
            let g = s[r - 1] / s[r].max(floor);
            if g >= MIN_RANK_GAP && best.is_none_or(|(_, bg)| g > bg) {
                best = Some((r, g));
            }
        }
        match best {
            Some((r, g)) => (r, Some(g), RankRule::Gap),
            None => {
                let r = s.iter().filter(|&&x| x > eps * smax).count();
                let g = (r < cols && r > 0).then(|| s[r - 1] / s[r].max(floor));
                (r, g, RankRule::Threshold)
            }
        }
    };
    let basis = order[rank..]
        .iter()
        .map(|&i| v_t.row(i).transpose())
        .collect();
    Nullspace {
        basis,
        singular_values: s,
        rank,
        gap,
        rule,
    }
}

/// Orthogonal projection of `x` onto the real span of an orthonormal family
/// (inner product `Re tr(XY*)`); returns the residual norm.
pub fn span_residual(x: &CMat, basis: &[CMat]) -> f64 {
    let mut r = x.clone();
    for b in basis {
        let coef: f64 = x.iter().zip(b.iter()).map(|(p, q)| (p * q.conj()).re).sum();
        r -= b.scale(coef);
    }
    norm(&r)
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Norm of everything outside the diagonal blocks of the given sizes.
pub fn off_block_norm(a: &CMat, sizes: &[usize]) -> f64 {
    let mut owner = Vec::with_capacity(a.nrows());
    for (b, &s) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat_n(b, s));
    }
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if owner[i] != owner[j] {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

pub fn check_square(a: &CMat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_finds_exact_kernel() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let ns = nullspace(&a, 1e-9);
        assert_eq!(ns.rank, 2);
        assert_eq!(ns.basis.len(), 1);
        assert!((ns.basis[0][2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nullspace_of_zero_is_everything() {
        let ns = nullspace(&DMatrix::zeros(4, 3), 1e-9);
        assert_eq!(ns.basis.len(), 3);
    }

    #[test]
    fn nullspace_prefers_the_largest_gap() {
        // 1, 0.5, 1e-6 are genuine; 1e-13 is noise
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1e-6, 1e-13]));
        let ns = nullspace(&a, 1e-9);
        assert_eq!(ns.rank, 3);
        assert_eq!(ns.rule, RankRule::Gap);
        assert!((ns.gap.unwrap() - 1e7).abs() < 1.0);
    }

    #[test]
    fn realify_roundtrip() {
        let t = CMat::from_fn(2, 2, |i, j| c64(i as f64 + 1.0, j as f64 - 0.5));
        assert_eq!(unrealify(&realify_matrix(&t), 2), t);
        // The identity map realifies to the identity matrix.
        let id = realify(2, |x| (0..4).map(|e| x[(e / 2, e % 2)]).collect());
        assert_eq!(id, DMatrix::identity(8, 8));
    }

    #[test]
    fn general_eigen_of_triangular() {
        let a = from_real(2, 2, &[1.0, 1.0, 0.0, 3.0]);
        let (l, v) = general_eigen(&a);
        for k in 0..2 {
            let r = &a * v.column(k) - v.column(k) * l[k];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn pd_sqrt_rejects_indefinite() {
        assert!(pd_sqrt_pair(&from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        let (s, si) = pd_sqrt_pair(&from_real(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!(norm(&(&s * &si - identity(2))) < 1e-12);
    }
}
