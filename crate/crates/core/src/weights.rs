//! Closed-form matrix weights.
//!
//! A weight is an expression tree over scalar classical densities: an atom is
//! a scalar density times a matrix polynomial envelope, and atoms combine by
//! direct sums, constant conjugations `M W M*` and entrywise assembly. Keeping
//! the tree (instead of a callable) lets moments be computed from exact scalar
//! formulas.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};
use crate::quadrature;

/// Scalar classical densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarWeightKind {
    /// `x^α (1−x)^β` on (0,1).
    Jacobi01 { alpha: f64, beta: f64 },
    /// `x^α e^{−x}` on (0,∞).
    Laguerre { alpha: f64 },
    /// `e^{−x²}` on (−∞,∞).
    Hermite,
    /// `(2/x) e^{−(log x)²/2}` on (0,∞).
    #[serde(rename = "lognormal")]
    LogNormal,
    /// `(1/x) e^{−(log x)²/2} sin(2π log x)` on (0,∞). Signed, so it may only
    /// appear as an entry of an entrywise weight.
    SinePerturbation,
}

impl ScalarWeightKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Jacobi01 { alpha, beta } if !(alpha > -1.0 && beta > -1.0) => {
                Err(Error::InvalidArgument(format!(
                    "Jacobi exponents must exceed -1, got alpha={alpha}, beta={beta}"
                )))
            }
            Self::Laguerre { alpha } if !(alpha > -1.0) => Err(Error::InvalidArgument(format!(
                "Laguerre exponent must exceed -1, got {alpha}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Self::Jacobi01 { .. } => Support::new(0.0, 1.0),
            Self::Hermite => Support::new(f64::NEG_INFINITY, f64::INFINITY),
            Self::Laguerre { .. } | Self::LogNormal | Self::SinePerturbation => {
                Support::new(0.0, f64::INFINITY)
            }
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, Self::SinePerturbation)
    }

    /// Density value; the caller guarantees `x` is inside the support.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Jacobi01 { alpha, beta } => x.powf(alpha) * (1.0 - x).powf(beta),
            Self::Laguerre { alpha } => x.powf(alpha) * (-x).exp(),
            Self::Hermite => (-x * x).exp(),
            Self::LogNormal => {
                let l = x.ln();
                2.0 / x * (-0.5 * l * l).exp()
            }
            Self::SinePerturbation => {
                let l = x.ln();
                (-0.5 * l * l).exp() / x * (2.0 * std::f64::consts::PI * l).sin()
            }
        }
    }
}

/// Open interval `(a, b)`, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub a: f64,
    pub b: f64,
}

impl Support {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn is_bounded(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }
}

/// `C_0 + C_1 x + … + C_d x^d` with complex matrix coefficients of a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    coeffs: Vec<CMat>,
}

impl MatrixPolynomial {
    /// Trailing zero coefficients are dropped (a zero polynomial keeps `C_0`).
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let first = coeffs.first().ok_or_else(|| {
            Error::InvalidArgument("matrix polynomial needs at least one coefficient".into())
        })?;
        let shape = first.shape();
        if coeffs.iter().any(|c| c.shape() != shape) {
            return Err(Error::InvalidArgument(
                "matrix polynomial coefficients differ in shape".into(),
            ));
        }
        let mut p = Self { coeffs };
        p.trim();
        Ok(p)
    }

    pub fn constant(c: CMat) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::constant(CMat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(CMat::identity(n, n))
    }

    /// `c · x^k`.
    pub fn monomial(c: CMat, k: usize) -> Self {
        let mut coeffs = vec![CMat::zeros(c.nrows(), c.ncols()); k];
        coeffs.push(c);
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1
            && self
                .coeffs
                .last()
                .is_some_and(|c| c.iter().all(|z| z.norm() == 0.0))
        {
            self.coeffs.pop();
        }
    }

    pub fn rows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    /// Coefficient of `x^j`, zero beyond the degree.
    pub fn coeff(&self, j: usize) -> CMat {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.rows(), self.cols()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.iter().all(|z| z.norm() == 0.0))
    }

    pub fn eval(&self, x: f64) -> CMat {
        let xc = c64(x, 0.0);
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * xc + c;
        }
        acc
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.check_shape(o)?;
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::new((0..n).map(|j| self.coeff(j) + o.coeff(j)).collect())
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.check_shape(o)?;
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::new((0..n).map(|j| self.coeff(j) - o.coeff(j)).collect())
    }

    pub fn scale(&self, s: num_complex::Complex64) -> Self {
        let mut p = Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        };
        p.trim();
        p
    }

    /// Product `self · o` (matrix order preserved).
    pub fn mul(&self, o: &Self) -> Result<Self> {
        if self.cols() != o.rows() {
            return Err(Error::InvalidArgument(format!(
                "cannot multiply {}x{} by {}x{} matrix polynomials",
                self.rows(),
                self.cols(),
                o.rows(),
                o.cols()
            )));
        }
        let mut coeffs =
            vec![CMat::zeros(self.rows(), o.cols()); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self::new(coeffs)
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul(&self, m: &CMat) -> Self {
        let mut p = Self {
            coeffs: self.coeffs.iter().map(|c| m * c).collect(),
        };
        p.trim();
        p
    }

    /// Right multiplication by a constant matrix.
    pub fn right_mul(&self, m: &CMat) -> Self {
        let mut p = Self {
            coeffs: self.coeffs.iter().map(|c| c * m).collect(),
        };
        p.trim();
        p
    }

    /// `k`-th derivative.
    pub fn derivative(&self, k: usize) -> Self {
        if k > self.degree() {
            return Self::zero(self.rows(), self.cols());
        }
        let coeffs = (k..self.coeffs.len())
            .map(|j| {
                let factor: f64 = ((j - k + 1)..=j).map(|t| t as f64).product();
                &self.coeffs[j] * c64(factor, 0.0)
            })
            .collect();
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    /// Largest entrywise distance between coefficient lists.
    pub fn max_coeff_diff(&self, o: &Self) -> f64 {
        let n = self.coeffs.len().max(o.coeffs.len());
        (0..n)
            .map(|j| linalg::max_abs(&(self.coeff(j) - o.coeff(j))))
            .fold(0.0, f64::max)
    }

    fn check_shape(&self, o: &Self) -> Result<()> {
        if self.rows() != o.rows() || self.cols() != o.cols() {
            return Err(Error::InvalidArgument(
                "matrix polynomial shapes differ".into(),
            ));
        }
        Ok(())
    }
}

/// One term of an entrywise weight entry: `coefficient · s(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryTerm {
    pub scalar: ScalarWeightKind,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightExpr {
    /// `s(x) · E(x)`.
    Atom {
        kind: ScalarWeightKind,
        envelope: MatrixPolynomial,
    },
    /// Block-diagonal direct sum.
    Sum(Vec<WeightExpr>),
    /// `M W(x) M*`. `M` is square and nonsingular for a genuine equivalence;
    /// a full-row-rank rectangular `M` extracts a compressed block.
    Conjugated {
        inner: Box<WeightExpr>,
        matrix: CMat,
    },
    /// `W_ij(x) = Σ c · s(x)` over the listed terms.
    Entrywise(Vec<Vec<Vec<EntryTerm>>>),
}

impl WeightExpr {
    pub fn size(&self) -> usize {
        match self {
            Self::Atom { envelope, .. } => envelope.rows(),
            Self::Sum(terms) => terms.iter().map(Self::size).sum(),
            Self::Conjugated { matrix, .. } => matrix.nrows(),
            Self::Entrywise(grid) => grid.len(),
        }
    }

    /// Largest envelope degree anywhere in the tree.
    pub fn envelope_degree(&self) -> usize {
        match self {
            Self::Atom { envelope, .. } => envelope.degree(),
            Self::Sum(terms) => terms.iter().map(Self::envelope_degree).max().unwrap_or(0),
            Self::Conjugated { inner, .. } => inner.envelope_degree(),
            Self::Entrywise(_) => 0,
        }
    }

    /// Visits every scalar kind in the tree.
    pub fn for_each_kind(&self, f: &mut impl FnMut(&ScalarWeightKind)) {
        match self {
            Self::Atom { kind, .. } => f(kind),
            Self::Sum(terms) => terms.iter().for_each(|t| t.for_each_kind(f)),
            Self::Conjugated { inner, .. } => inner.for_each_kind(f),
            Self::Entrywise(grid) => grid.iter().flatten().flatten().for_each(|t| f(&t.scalar)),
        }
    }

    /// Unsymmetrized evaluation.
    fn eval_raw(&self, x: f64) -> CMat {
        match self {
            Self::Atom { kind, envelope } => envelope.eval(x) * c64(kind.eval(x), 0.0),
            Self::Sum(terms) => {
                linalg::block_diag(&terms.iter().map(|t| t.eval_raw(x)).collect::<Vec<_>>())
            }
            Self::Conjugated { inner, matrix } => matrix * inner.eval_raw(x) * matrix.adjoint(),
            Self::Entrywise(grid) => {
                let n = grid.len();
                CMat::from_fn(n, n, |i, j| {
                    c64(
                        grid[i][j]
                            .iter()
                            .map(|t| t.coefficient * t.scalar.eval(x))
                            .sum(),
                        0.0,
                    )
                })
            }
        }
    }

    fn check(&self) -> Result<Support> {
        match self {
            Self::Atom { kind, envelope } => {
                kind.validate()?;
                if kind.is_signed() {
                    return Err(Error::InvalidArgument(
                        "signed scalar densities are only allowed inside entrywise weights".into(),
                    ));
                }
                if envelope.rows() != envelope.cols() || envelope.rows() == 0 {
                    return Err(Error::InvalidArgument(
                        "envelope must be a nonempty square matrix polynomial".into(),
                    ));
                }
                Ok(kind.support())
            }
            Self::Sum(terms) => {
                let first = terms
                    .first()
                    .ok_or_else(|| {
                        Error::InvalidArgument("direct sum needs at least one term".into())
                    })?
                    .check()?;
                for t in &terms[1..] {
                    if t.check()? != first {
                        return Err(Error::InvalidArgument(
                            "direct-sum terms have different supports".into(),
                        ));
                    }
                }
                Ok(first)
            }
            Self::Conjugated { inner, matrix } => {
                let s = inner.check()?;
                if matrix.ncols() != inner.size()
                    || matrix.nrows() == 0
                    || matrix.nrows() > matrix.ncols()
                {
                    return Err(Error::InvalidArgument(format!(
                        "conjugating matrix is {}x{} but the inner weight has size {}",
                        matrix.nrows(),
                        matrix.ncols(),
                        inner.size()
                    )));
                }
                let sv = linalg::singular_values(matrix);
                if sv.last().copied().unwrap_or(0.0) <= 1e-13 * sv[0] {
                    return Err(Error::InvalidArgument(
                        "conjugating matrix is rank deficient".into(),
                    ));
                }
                Ok(s)
            }
            Self::Entrywise(grid) => {
                let n = grid.len();
                if n == 0 || grid.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidArgument(
                        "entrywise weight needs a square grid".into(),
                    ));
                }
                let mut support: Option<Support> = None;
                for t in grid.iter().flatten().flatten() {
                    t.scalar.validate()?;
                    let s = t.scalar.support();
                    match support {
                        None => support = Some(s),
                        Some(prev) if prev != s => {
                            return Err(Error::InvalidArgument(
                                "entrywise terms have different supports".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                support
                    .ok_or_else(|| Error::InvalidArgument("entrywise weight has no terms".into()))
            }
        }
    }
}

/// A closed-form matrix weight on its support interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWeight {
    expr: WeightExpr,
    support: Support,
}

impl MatrixWeight {
    /// Checks parameters, shapes and support consistency.
    pub fn new(expr: WeightExpr) -> Result<Self> {
        let support = expr.check()?;
        Ok(Self { expr, support })
    }

    pub fn atom(kind: ScalarWeightKind, envelope: MatrixPolynomial) -> Result<Self> {
        Self::new(WeightExpr::Atom { kind, envelope })
    }

    /// A scalar (1×1) weight.
    pub fn scalar(kind: ScalarWeightKind) -> Result<Self> {
        Self::atom(kind, MatrixPolynomial::identity(1))
    }

    pub fn expr(&self) -> &WeightExpr {
        &self.expr
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn size(&self) -> usize {
        self.expr.size()
    }

    /// `W(x)`, symmetrized as `(A + A*)/2`.
    pub fn eval(&self, x: f64) -> Result<CMat> {
        if !self.support.contains(x) {
            return Err(Error::Domain(format!(
                "x = {x} is outside the support ({}, {})",
                self.support.a, self.support.b
            )));
        }
        Ok(linalg::hermitian_part(&self.expr.eval_raw(x)))
    }

    /// Like [`MatrixWeight::eval`], but also accepts finite endpoints of the
    /// support, where the closed form extends continuously.
    pub fn eval_closure(&self, x: f64) -> Result<CMat> {
        let endpoint = (x == self.support.a || x == self.support.b) && x.is_finite();
        if endpoint {
            let w = linalg::hermitian_part(&self.expr.eval_raw(x));
            if w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok(w);
            }
            return Err(Error::Domain(format!(
                "the weight is not finite at the endpoint x = {x}"
            )));
        }
        self.eval(x)
    }

    fn eval_unsymmetrized(&self, x: f64) -> CMat {
        self.expr.eval_raw(x)
    }

    /// Keeps only the rows of a (possibly rectangular) compression `M W M*`.
    pub(crate) fn compress(&self, m: &CMat) -> Result<Self> {
        Self::new(WeightExpr::Conjugated {
            inner: Box::new(self.expr.clone()),
            matrix: m.clone(),
        })
    }
}

/// Condition number above which a conjugating matrix is treated as singular.
pub const MAX_CONJUGATION_CONDITION: f64 = 1e12;

/// `M W M*` for square nonsingular `M`.
pub fn conjugate_weight(w: &MatrixWeight, m: &CMat) -> Result<MatrixWeight> {
    linalg::check_square(m, "conjugating matrix")?;
    if m.nrows() != w.size() {
        return Err(Error::InvalidArgument(format!(
            "matrix size {} does not match weight size {}",
            m.nrows(),
            w.size()
        )));
    }
    let cond = linalg::condition_number(m);
    if cond > MAX_CONJUGATION_CONDITION {
        return Err(Error::InvalidArgument(format!(
            "conjugating matrix is singular at tolerance (condition {cond:e})"
        )));
    }
    w.compress(m)
}

/// Block-diagonal direct sum; a single weight is returned unchanged.
pub fn direct_sum(ws: &[MatrixWeight]) -> Result<MatrixWeight> {
    match ws {
        [] => Err(Error::InvalidArgument("direct sum of an empty list".into())),
        [w] => Ok(w.clone()),
        _ => {
            if ws.iter().any(|w| w.support != ws[0].support) {
                return Err(Error::InvalidArgument(
                    "direct sum of weights with different supports".into(),
                ));
            }
            MatrixWeight::new(WeightExpr::Sum(ws.iter().map(|w| w.expr.clone()).collect()))
        }
    }
}

/// Finite set of interior points standing in for "almost every x".
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    points: Vec<f64>,
}

impl SampleGrid {
    /// Sorts and deduplicates; every point must lie inside `support`.
    pub fn new(mut points: Vec<f64>, support: Support) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("sample grid is empty".into()));
        }
        if let Some(&x) = points.iter().find(|&&x| !support.contains(x)) {
            return Err(Error::Domain(format!(
                "sample point {x} is outside the support"
            )));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(Self { points })
    }

    /// Chebyshev points of the first kind on a bounded interval.
    pub fn chebyshev(a: f64, b: f64, m: usize) -> Self {
        let mut points: Vec<f64> = (1..=m)
            .map(|i| {
                let t = ((2 * i - 1) as f64 * std::f64::consts::PI / (2 * m) as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * t
            })
            .collect();
        points.sort_by(f64::total_cmp);
        Self { points }
    }

    /// Chebyshev points on bounded supports; Gauss–Laguerre nodes on a
    /// half-line and Gauss–Hermite nodes on the real line.
    pub fn for_support(support: Support, m: usize) -> Self {
        let m = m.max(1);
        if support.is_bounded() {
            return Self::chebyshev(support.a, support.b, m);
        }
        let mut points: Vec<f64> = if support.a.is_finite() {
            quadrature::gauss_laguerre(m, 0.0)
                .nodes
                .iter()
                .map(|t| support.a + t)
                .collect()
        } else if support.b.is_finite() {
            quadrature::gauss_laguerre(m, 0.0)
                .nodes
                .iter()
                .map(|t| support.b - t)
                .collect()
        } else {
            quadrature::gauss_hermite(m).nodes
        };
        points.retain(|&x| support.contains(x));
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub points: usize,
    /// Smallest eigenvalue of `W(x)/‖W(x)‖` over the grid.
    pub min_relative_eigenvalue: f64,
    pub min_eigenvalue: f64,
    /// Largest `‖W(x) − W(x)*‖ / ‖W(x)‖` before symmetrization.
    pub hermitian_residual: f64,
    /// Points where `W(x)` is singular at tolerance.
    pub singular_points: usize,
    /// Points where `W(x)` has a clearly negative eigenvalue.
    pub indefinite_points: usize,
}

impl ValidationReport {
    /// Hermitian, positive semidefinite everywhere and definite at most points.
    pub fn is_valid(&self, eps: f64) -> bool {
        self.hermitian_residual <= eps
            && self.indefinite_points == 0
            && 2 * self.singular_points < self.points
    }
}

pub fn validate_weight(w: &MatrixWeight, grid: &SampleGrid, eps: f64) -> ValidationReport {
    let mut report = ValidationReport {
        points: grid.len(),
        min_relative_eigenvalue: f64::INFINITY,
        min_eigenvalue: f64::INFINITY,
        hermitian_residual: 0.0,
        singular_points: 0,
        indefinite_points: 0,
    };
    for &x in grid.points() {
        let raw = w.eval_unsymmetrized(x);
        let scale = linalg::norm(&raw);
        if scale == 0.0 {
            report.singular_points += 1;
            report.min_relative_eigenvalue = report.min_relative_eigenvalue.min(0.0);
            report.min_eigenvalue = report.min_eigenvalue.min(0.0);
            continue;
        }
        report.hermitian_residual = report
            .hermitian_residual
            .max(linalg::hermitian_defect(&raw) / scale);
        let (lo, _) = linalg::hermitian_extremes(&raw);
        report.min_eigenvalue = report.min_eigenvalue.min(lo);
        report.min_relative_eigenvalue = report.min_relative_eigenvalue.min(lo / scale);
        if lo < -eps * scale {
            report.indefinite_points += 1;
        } else if lo <= eps * scale {
            report.singular_points += 1;
        }
    }
    report
}

/// Ready-made weights used by the command line tool, the tests and the docs.
pub mod catalog {
    use super::*;

    fn poly(n: usize, coeffs: &[&[f64]]) -> MatrixPolynomial {
        MatrixPolynomial::new(coeffs.iter().map(|c| linalg::from_real(n, n, c)).collect())
            .expect("valid literal")
    }

    fn uniform() -> ScalarWeightKind {
        ScalarWeightKind::Jacobi01 {
            alpha: 0.0,
            beta: 0.0,
        }
    }

    /// `diag(x², x)` on (0,1).
    pub fn diag_x2_x() -> MatrixWeight {
        MatrixWeight::atom(
            uniform(),
            poly(
                2,
                &[
                    &[0.0, 0.0, 0.0, 0.0],
                    &[0.0, 0.0, 0.0, 1.0],
                    &[1.0, 0.0, 0.0, 0.0],
                ],
            ),
        )
        .expect("valid literal")
    }

    /// `[[x²+x, x],[x, x]] = M diag(x², x) M*` with `M = [[1,1],[0,1]]`.
    pub fn conjugated_diag_x2_x() -> MatrixWeight {
        MatrixWeight::atom(
            uniform(),
            poly(
                2,
                &[
                    &[0.0, 0.0, 0.0, 0.0],
                    &[1.0, 1.0, 1.0, 1.0],
                    &[1.0, 0.0, 0.0, 0.0],
                ],
            ),
        )
        .expect("valid literal")
    }

    /// `x^α(1−x)^α (F_0 + x F_1)` with `F_0 = [[1,1],[1,1]]`, `F_1 = [[0,−2],[−2,0]]`.
    pub fn jacobi_pair(alpha: f64) -> Result<MatrixWeight> {
        MatrixWeight::atom(
            ScalarWeightKind::Jacobi01 { alpha, beta: alpha },
            poly(2, &[&[1.0, 1.0, 1.0, 1.0], &[0.0, -2.0, -2.0, 0.0]]),
        )
    }

    /// `x^α(1−x)^{α+1} ⊕ x^{α+1}(1−x)^α`, the diagonal form of [`jacobi_pair`].
    pub fn jacobi_pair_diagonal(alpha: f64) -> Result<MatrixWeight> {
        direct_sum(&[
            MatrixWeight::scalar(ScalarWeightKind::Jacobi01 {
                alpha,
                beta: alpha + 1.0,
            })?,
            MatrixWeight::scalar(ScalarWeightKind::Jacobi01 {
                alpha: alpha + 1.0,
                beta: alpha,
            })?,
        ])
    }

    /// `[[2w, f],[f, w]]` with `w` log-normal and `f` the sine perturbation.
    /// Its moments are those of `diag(2w, w)`. Pointwise it equals
    /// `g(x)([[4,0],[0,2]] + s(x) J)`, so `M = [[1, √2],[1, −√2]]` already
    /// diagonalizes it: a two-term pencil with a definite member always reduces.
    pub fn lognormal_sine() -> MatrixWeight {
        let t = |scalar, coefficient| {
            vec![EntryTerm {
                scalar,
                coefficient,
            }]
        };
        MatrixWeight::new(WeightExpr::Entrywise(vec![
            vec![
                t(ScalarWeightKind::LogNormal, 2.0),
                t(ScalarWeightKind::SinePerturbation, 1.0),
            ],
            vec![
                t(ScalarWeightKind::SinePerturbation, 1.0),
                t(ScalarWeightKind::LogNormal, 1.0),
            ],
        ]))
        .expect("valid literal")
    }

    /// `w·I` with `w` log-normal; shares its monic polynomials with [`lognormal_sine`].
    pub fn lognormal_scalar() -> MatrixWeight {
        MatrixWeight::atom(ScalarWeightKind::LogNormal, MatrixPolynomial::identity(2))
            .expect("valid literal")
    }

    /// `[[1+x², x],[x, 1]]` on (0,1): a generic irreducible weight.
    pub fn uniform_irreducible() -> MatrixWeight {
        MatrixWeight::atom(
            uniform(),
            poly(
                2,
                &[
                    &[1.0, 0.0, 0.0, 1.0],
                    &[0.0, 1.0, 1.0, 0.0],
                    &[1.0, 0.0, 0.0, 0.0],
                ],
            ),
        )
        .expect("valid literal")
    }
}

// ---------------------------------------------------------------------------
// JSON

pub mod json {
    use super::*;

    pub type MatrixJson = Vec<Vec<[f64; 2]>>;

    pub fn matrix_to_json(m: &CMat) -> MatrixJson {
        (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| [m[(i, j)].re, m[(i, j)].im])
                    .collect()
            })
            .collect()
    }

    pub fn matrix_from_json(rows: &MatrixJson) -> Result<CMat> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Parse(
                "matrix must be a nonempty rectangular array of [re, im] pairs".into(),
            ));
        }
        Ok(CMat::from_fn(r, c, |i, j| {
            c64(rows[i][j][0], rows[i][j][1])
        }))
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(untagged)]
    pub enum Bound {
        Num(f64),
        Sentinel(String),
    }

    impl Bound {
        pub fn value(&self) -> Result<f64> {
            match self {
                Bound::Num(x) => Ok(*x),
                Bound::Sentinel(s) if s == "inf" => Ok(f64::INFINITY),
                Bound::Sentinel(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
                Bound::Sentinel(s) => Err(Error::Parse(format!("unknown support bound {s:?}"))),
            }
        }

        pub fn from_value(x: f64) -> Self {
            if x == f64::INFINITY {
                Bound::Sentinel("inf".into())
            } else if x == f64::NEG_INFINITY {
                Bound::Sentinel("-inf".into())
            } else {
                Bound::Num(x)
            }
        }
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
    pub enum ExprJson {
        Atom {
            scalar: ScalarWeightKind,
            envelope: Vec<MatrixJson>,
        },
        Sum {
            terms: Vec<ExprJson>,
        },
        Conjugated {
            inner: Box<ExprJson>,
            matrix: MatrixJson,
        },
        Entrywise {
            entries: Vec<Vec<Vec<EntryTerm>>>,
        },
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct WeightFile {
        pub size: usize,
        pub support: [Bound; 2],
        pub expr: ExprJson,
    }

    pub fn expr_to_json(e: &WeightExpr) -> ExprJson {
        match e {
            WeightExpr::Atom { kind, envelope } => ExprJson::Atom {
                scalar: *kind,
                envelope: envelope.coeffs().iter().map(matrix_to_json).collect(),
            },
            WeightExpr::Sum(terms) => ExprJson::Sum {
                terms: terms.iter().map(expr_to_json).collect(),
            },
            WeightExpr::Conjugated { inner, matrix } => ExprJson::Conjugated {
                inner: Box::new(expr_to_json(inner)),
                matrix: matrix_to_json(matrix),
            },
            WeightExpr::Entrywise(grid) => ExprJson::Entrywise {
                entries: grid.clone(),
            },
        }
    }

    pub fn expr_from_json(e: &ExprJson) -> Result<WeightExpr> {
        Ok(match e {
            ExprJson::Atom { scalar, envelope } => WeightExpr::Atom {
                kind: *scalar,
                envelope: MatrixPolynomial::new(
                    envelope
                        .iter()
                        .map(matrix_from_json)
                        .collect::<Result<_>>()?,
                )?,
            },
            ExprJson::Sum { terms } => {
                WeightExpr::Sum(terms.iter().map(expr_from_json).collect::<Result<_>>()?)
            }
            ExprJson::Conjugated { inner, matrix } => WeightExpr::Conjugated {
                inner: Box::new(expr_from_json(inner)?),
                matrix: matrix_from_json(matrix)?,
            },
            ExprJson::Entrywise { entries } => WeightExpr::Entrywise(entries.clone()),
        })
    }
}

impl MatrixWeight {
    /// Parses a weight definition document.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: json::WeightFile = serde_json::from_str(text)?;
        let w = Self::new(json::expr_from_json(&file.expr)?)?;
        if w.size() != file.size {
            return Err(Error::Parse(format!(
                "declared size {} but expression has size {}",
                file.size,
                w.size()
            )));
        }
        let (a, b) = (file.support[0].value()?, file.support[1].value()?);
        if Support::new(a, b) != w.support {
            return Err(Error::Parse(format!(
                "declared support ({a}, {b}) differs from the support ({}, {}) implied by the scalar densities",
                w.support.a, w.support.b
            )));
        }
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        let file = json::WeightFile {
            size: self.size(),
            support: [
                json::Bound::from_value(self.support.a),
                json::Bound::from_value(self.support.b),
            ],
            expr: json::expr_to_json(&self.expr),
        };
        serde_json::to_string_pretty(&file).expect("weights always serialize")
    }
}

/// Stacks `W(x_i)` for a list of points; convenience for callers that need all samples.
pub fn sample(w: &MatrixWeight, grid: &SampleGrid) -> Vec<CMat> {
    grid.points()
        .iter()
        .map(|&x| w.eval(x).expect("grid lies inside the support"))
        .collect()
}

/// Eigenvalues of a sampled 2×2 or larger weight, ascending; used by reports.
pub fn eigenvalues_at(w: &MatrixWeight, x: f64) -> Result<DVector<f64>> {
    let e = linalg::hermitian_eigen(&w.eval(x)?);
    Ok(DVector::from_vec(e.values))
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;
    use crate::linalg::{from_real, norm};
    use proptest::prelude::*;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        norm(&(a - b)) <= tol * (1.0 + norm(b))
    }

    #[test]
    fn eval_conjugated_diag_at_half() {
        let w = conjugated_diag_x2_x();
        assert!(close(
            &w.eval(0.5).unwrap(),
            &from_real(2, 2, &[0.75, 0.5, 0.5, 0.5]),
            1e-15
        ));
    }

    #[test]
    fn jacobi_pair_alpha_zero_is_identity_at_symmetry_point() {
        let w = jacobi_pair(0.0).unwrap();
        assert!(close(&w.eval(0.5).unwrap(), &CMat::identity(2, 2), 1e-15));
    }

    #[test]
    fn eval_outside_support_is_domain_error() {
        assert!(matches!(diag_x2_x().eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(diag_x2_x().eval(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn conjugating_diagonal_form_gives_dense_form() {
        let m = from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let w = conjugate_weight(&diag_x2_x(), &m).unwrap();
        let target = conjugated_diag_x2_x();
        for x in SampleGrid::chebyshev(0.0, 1.0, 16).points() {
            assert!(close(
                &w.eval(*x).unwrap(),
                &target.eval(*x).unwrap(),
                1e-14
            ));
        }
    }

    #[test]
    fn conjugate_identity_and_round_trip() {
        let w = jacobi_pair(1.0).unwrap();
        let m = from_real(2, 2, &[2.0, -1.0, 0.5, 3.0]);
        let same = conjugate_weight(&w, &CMat::identity(2, 2)).unwrap();
        let back = conjugate_weight(
            &conjugate_weight(&w, &m).unwrap(),
            &m.clone().try_inverse().unwrap(),
        )
        .unwrap();
        for &x in SampleGrid::chebyshev(0.0, 1.0, 16).points() {
            let wx = w.eval(x).unwrap();
            assert_eq!(same.eval(x).unwrap(), wx);
            assert!(norm(&(back.eval(x).unwrap() - &wx)) <= 1e-12 * norm(&wx));
        }
    }

    #[test]
    fn conjugate_rejects_singular() {
        let m = from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            conjugate_weight(&diag_x2_x(), &m),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn direct_sum_of_jacobi_pieces_matches_diagonal_form() {
        let w = jacobi_pair_diagonal(1.0).unwrap();
        let x = 0.3;
        let expect = from_real(
            2,
            2,
            &[x * (1.0 - x) * (1.0 - x), 0.0, 0.0, x * x * (1.0 - x)],
        );
        assert!(close(&w.eval(x).unwrap(), &expect, 1e-15));
    }

    #[test]
    fn direct_sum_edge_cases() {
        let w = diag_x2_x();
        assert_eq!(direct_sum(std::slice::from_ref(&w)).unwrap(), w);
        let one = MatrixWeight::scalar(ScalarWeightKind::Jacobi01 {
            alpha: 1.0,
            beta: 0.0,
        })
        .unwrap();
        let s = direct_sum(&[one, w.clone()]).unwrap();
        assert_eq!(s.size(), 3);
        for &x in SampleGrid::chebyshev(0.0, 1.0, 8).points() {
            let v = s.eval(x).unwrap();
            assert_eq!(linalg::off_block_norm(&v, &[1, 2]), 0.0);
        }
        let other = MatrixWeight::scalar(ScalarWeightKind::Hermite).unwrap();
        assert!(matches!(
            direct_sum(&[other, w]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn validation_of_fixtures() {
        let grid = SampleGrid::chebyshev(0.0, 1.0, 64);
        let r = validate_weight(&conjugated_diag_x2_x(), &grid, 1e-9);
        assert!(r.min_eigenvalue > 0.0 && r.singular_points == 0 && r.is_valid(1e-9));
        // eigenvalues of [[x²+x, x],[x, x]] computed directly: (t ± sqrt(t² − 4d))/2
        for &x in grid.points() {
            let (t, d) = (x * x + 2.0 * x, x * x * x);
            let lo = 0.5 * (t - (t * t - 4.0 * d).sqrt());
            let got = eigenvalues_at(&conjugated_diag_x2_x(), x).unwrap()[0];
            assert!((got - lo).abs() <= 1e-12 * t);
        }
        assert_eq!(
            validate_weight(&diag_x2_x(), &grid, 1e-9).singular_points,
            0
        );
        let w = lognormal_sine();
        let g = SampleGrid::for_support(w.support(), 64);
        let r = validate_weight(&w, &g, 1e-9);
        assert!(r.min_eigenvalue > 0.0 && r.is_valid(1e-9), "{r:?}");
    }

    #[test]
    fn signed_atom_rejected_and_parameters_checked() {
        assert!(MatrixWeight::scalar(ScalarWeightKind::SinePerturbation).is_err());
        assert!(MatrixWeight::scalar(ScalarWeightKind::Jacobi01 {
            alpha: -1.0,
            beta: 0.0
        })
        .is_err());
        assert!(MatrixWeight::scalar(ScalarWeightKind::Laguerre { alpha: -2.0 }).is_err());
    }

    #[test]
    fn grids_are_sorted_interior_and_distinct() {
        for w in [
            diag_x2_x(),
            lognormal_scalar(),
            MatrixWeight::scalar(ScalarWeightKind::Hermite).unwrap(),
        ] {
            let g = SampleGrid::for_support(w.support(), 64);
            assert_eq!(g.len(), 64);
            assert!(g.points().windows(2).all(|p| p[0] < p[1]));
            assert!(g.points().iter().all(|&x| w.support().contains(x)));
        }
    }

    #[test]
    fn json_round_trip_and_rejection() {
        for w in [
            conjugated_diag_x2_x(),
            lognormal_sine(),
            jacobi_pair_diagonal(1.0).unwrap(),
        ] {
            assert_eq!(MatrixWeight::from_json(&w.to_json()).unwrap(), w);
        }
        let bad = r#"{"size":1,"support":[0,1],"expr":{"kind":"atom","scalar":{"type":"hermite"},"envelope":[[[[1,0]]]],"extra":1}}"#;
        assert!(matches!(MatrixWeight::from_json(bad), Err(Error::Parse(_))));
        let wrong_support = r#"{"size":1,"support":[0,1],"expr":{"kind":"atom","scalar":{"type":"hermite"},"envelope":[[[[1,0]]]]}}"#;
        assert!(matches!(
            MatrixWeight::from_json(wrong_support),
            Err(Error::Parse(_))
        ));
        let ok = r#"{"size":1,"support":["-inf","inf"],"expr":{"kind":"atom","scalar":{"type":"hermite"},"envelope":[[[[1,0]]]]}}"#;
        assert!(MatrixWeight::from_json(ok).is_ok());
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = MatrixPolynomial::new(vec![
            from_real(1, 1, &[1.0]),
            from_real(1, 1, &[2.0]),
            from_real(1, 1, &[3.0]),
        ])
        .unwrap();
        assert_eq!(
            p.derivative(1).coeffs(),
            &[from_real(1, 1, &[2.0]), from_real(1, 1, &[6.0])]
        );
        assert_eq!(p.derivative(3).degree(), 0);
        assert!(p.derivative(3).is_zero());
        let q = p.mul(&p).unwrap();
        assert!((q.eval(0.7)[(0, 0)].re - p.eval(0.7)[(0, 0)].re.powi(2)).abs() < 1e-14);
        assert_eq!(p.sub(&p).unwrap().degree(), 0);
    }

    fn matrix_strategy(n: usize) -> impl Strategy<Value = CMat> {
        proptest::collection::vec(-2.0..2.0f64, 2 * n * n)
            .prop_map(move |v| CMat::from_fn(n, n, |i, j| c64(v[i * n + j], v[n * n + i * n + j])))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conjugation_is_pointwise(m in matrix_strategy(2), x in 0.01..0.99f64) {
            prop_assume!(linalg::condition_number(&m) < 1e6);
            let w = jacobi_pair(0.5).unwrap();
            let c = conjugate_weight(&w, &m).unwrap();
            let expect = &m * w.eval(x).unwrap() * m.adjoint();
            prop_assert!(norm(&(c.eval(x).unwrap() - &expect)) <= 1e-12 * norm(&expect));
            prop_assert_eq!(linalg::hermitian_defect(&c.eval(x).unwrap()), 0.0);
        }

        #[test]
        fn conjugation_composes(m in matrix_strategy(2), m2 in matrix_strategy(2), x in 0.01..0.99f64) {
            prop_assume!(linalg::condition_number(&m) < 1e4 && linalg::condition_number(&m2) < 1e4);
            let w = conjugated_diag_x2_x();
            let twice = conjugate_weight(&conjugate_weight(&w, &m).unwrap(), &m2).unwrap();
            let once = conjugate_weight(&w, &(&m2 * &m)).unwrap();
            let a = twice.eval(x).unwrap();
            prop_assert!(norm(&(a.clone() - once.eval(x).unwrap())) <= 1e-12 * norm(&a));
        }

        #[test]
        fn sum_is_block_assembly(x in 0.01..0.99f64) {
            let a = diag_x2_x();
            let b = jacobi_pair(1.0).unwrap();
            let s = direct_sum(&[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(s.eval(x).unwrap(), linalg::block_diag(&[a.eval(x).unwrap(), b.eval(x).unwrap()]));
        }
    }
}
