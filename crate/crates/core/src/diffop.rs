//! Right-acting matrix differential operators `D = Σ ∂^i F_i(x)`, acting on
//! matrix polynomials by `Q D = Σ Q^{(i)} F_i`.
//!
//! Membership and symmetry checks run on the extended-precision coefficients
//! of the monic polynomials; on (0,1) the rounded monomial coefficients lose
//! all accuracy in inner products long before degree 20.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commutant::{commutant_from_moments, order_zero_elements, CommutantBasis};
use crate::error::{Error, Result};
use crate::hp::{self, HpMatrix};
use crate::linalg::{self, c64, CMat};
use crate::moments::MomentSequence;
use crate::mop::{inner_product_extended, MopSequence};
use crate::weights::{json, MatrixPolynomial};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDiffOperator {
    coefficients: Vec<MatrixPolynomial>,
}

impl MatrixDiffOperator {
    /// `coefficients[i]` multiplies `∂^i`. All must share one shape.
    pub fn new(coefficients: Vec<MatrixPolynomial>) -> Result<Self> {
        let first = coefficients
            .first()
            .ok_or_else(|| Error::InvalidArgument("operator has no coefficients".into()))?;
        let (r, c) = (first.rows(), first.cols());
        if coefficients.iter().any(|f| f.rows() != r || f.cols() != c) {
            return Err(Error::InvalidArgument(
                "operator coefficients have different shapes".into(),
            ));
        }
        let mut coefficients = coefficients;
        while coefficients.len() > 1 && coefficients.last().is_some_and(MatrixPolynomial::is_zero) {
            coefficients.pop();
        }
        Ok(Self { coefficients })
    }

    /// Order zero: right multiplication by `c`.
    pub fn constant(c: CMat) -> Self {
        Self {
            coefficients: vec![MatrixPolynomial::constant(c)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(linalg::identity(n))
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[MatrixPolynomial] {
        &self.coefficients
    }

    pub fn rows(&self) -> usize {
        self.coefficients[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.coefficients[0].cols()
    }

    /// `deg F_i ≤ i` for every `i`, the shape of operators that can have the
    /// monic polynomials as eigenfunctions.
    pub fn is_degree_bounded(&self) -> bool {
        self.coefficients
            .iter()
            .enumerate()
            .all(|(i, f)| f.is_zero() || f.degree() <= i)
    }

    pub fn scale(&self, z: num_complex::Complex64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|f| f.scale(z)).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        if self.rows() != o.rows() || self.cols() != o.cols() {
            return Err(Error::InvalidArgument("operator shapes differ".into()));
        }
        let s = self.order().max(o.order());
        let get = |d: &Self, i: usize| {
            d.coefficients
                .get(i)
                .cloned()
                .unwrap_or(MatrixPolynomial::zero(d.rows(), d.cols()))
        };
        Self::new(
            (0..=s)
                .map(|i| get(self, i).add(&get(o, i)))
                .collect::<Result<_>>()?,
        )
    }

    /// Largest coefficient distance to another operator.
    pub fn max_coeff_diff(&self, o: &Self) -> f64 {
        let s = self.order().max(o.order());
        let get = |d: &Self, i: usize| {
            d.coefficients
                .get(i)
                .cloned()
                .unwrap_or(MatrixPolynomial::zero(d.rows(), d.cols()))
        };
        (0..=s)
            .map(|i| get(self, i).max_coeff_diff(&get(o, i)))
            .fold(0.0, f64::max)
    }
}

/// `Q D = Σ Q^{(i)} F_i`.
pub fn apply(d: &MatrixDiffOperator, q: &MatrixPolynomial) -> Result<MatrixPolynomial> {
    if q.cols() != d.rows() {
        return Err(Error::InvalidArgument(format!(
            "polynomial with {} columns cannot be acted on by a {}x{} operator",
            q.cols(),
            d.rows(),
            d.cols()
        )));
    }
    let mut acc = MatrixPolynomial::zero(q.rows(), d.cols());
    for (i, f) in d.coefficients.iter().enumerate() {
        acc = acc.add(&q.derivative(i).mul(f)?)?;
    }
    Ok(acc)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// The operator `Q ↦ (Q d1) d2`, so that a written product `d1 d2` acts
/// left factor first. With `d1 = Σ ∂^i F_i`, `d2 = Σ ∂^j G_j` the coefficient
/// of `∂^m` is `Σ_{i+k=m} Σ_{j≥k} C(j,k) F_i^{(j−k)} G_j` (Leibniz).
pub fn compose(d1: &MatrixDiffOperator, d2: &MatrixDiffOperator) -> Result<MatrixDiffOperator> {
    if d1.cols() != d2.rows() {
        return Err(Error::InvalidArgument(format!(
            "cannot compose a {}x{} operator with a {}x{} one",
            d1.rows(),
            d1.cols(),
            d2.rows(),
            d2.cols()
        )));
    }
    let s = d1.order() + d2.order();
    let mut out = vec![MatrixPolynomial::zero(d1.rows(), d2.cols()); s + 1];
    for (i, f) in d1.coefficients.iter().enumerate() {
        for (j, g) in d2.coefficients.iter().enumerate() {
            for k in 0..=j {
                let term = f.derivative(j - k).mul(g)?.scale(c64(binomial(j, k), 0.0));
                out[i + k] = out[i + k].add(&term)?;
            }
        }
    }
    MatrixDiffOperator::new(out)
}

// ---------------------------------------------------------------------------
// Extended-precision action on the monic polynomials

fn hp_coeffs(p: &MatrixPolynomial) -> Vec<HpMatrix> {
    p.coeffs().iter().map(HpMatrix::from_cmat).collect()
}

/// `P D` for extended-precision coefficients `p`.
fn apply_extended(d: &MatrixDiffOperator, p: &[HpMatrix]) -> Vec<HpMatrix> {
    let rows = p[0].rows;
    let mut out: Vec<HpMatrix> = Vec::new();
    for (i, f) in d.coefficients.iter().enumerate() {
        if f.is_zero() || i >= p.len() {
            continue;
        }
        let fc = hp_coeffs(f);
        for j in i..p.len() {
            let factor: f64 = ((j - i + 1)..=j).map(|t| t as f64).product();
            let dj = p[j].scale(&hp::float(factor));
            for (l, fl) in fc.iter().enumerate() {
                let idx = j - i + l;
                while out.len() <= idx {
                    out.push(HpMatrix::zeros(rows, d.cols()));
                }
                out[idx] = out[idx].add(&dj.mul(fl));
            }
        }
    }
    if out.is_empty() {
        out.push(HpMatrix::zeros(rows, d.cols()));
    }
    out
}

fn coeff_norm(p: &[HpMatrix]) -> f64 {
    p.iter().map(|c| c.norm_f64().powi(2)).sum::<f64>().sqrt()
}

/// Eigenvalue matrices `Γ_n` with `P_n D = Γ_n Q_n`.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueRecord {
    #[serde(serialize_with = "ser_matrices")]
    pub gammas: Vec<CMat>,
    /// `‖P_n D − Γ_n Q_n‖ / max(‖P_n D‖, ‖Γ_n‖)` in coefficient norm.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Every residual is within tolerance (up to degree `n_max` only).
    pub member: bool,
}

fn ser_matrices<S: serde::Serializer>(v: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
    v.iter()
        .map(json::matrix_to_json)
        .collect::<Vec<_>>()
        .serialize(s)
}

/// `Γ_n` read off the leading coefficient of `P_n D`, for `n ≤ n_max`.
pub fn eigenvalue_matrices(
    d: &MatrixDiffOperator,
    seq: &MopSequence,
    eps: f64,
) -> Result<EigenvalueRecord> {
    eigenvalue_matrices_between(d, seq, seq, eps)
}

/// `P_n D = Γ_n Q_n` with `P_n`, `Q_n` the monic polynomials of two weights;
/// the off-diagonal entries of an operator on a direct sum.
pub fn eigenvalue_matrices_between(
    d: &MatrixDiffOperator,
    left: &MopSequence,
    right: &MopSequence,
    eps: f64,
) -> Result<EigenvalueRecord> {
    if !d.is_degree_bounded() {
        return Err(Error::InvalidArgument(
            "operator has a coefficient F_i of degree above i".into(),
        ));
    }
    if d.rows() != left.size() || d.cols() != right.size() {
        return Err(Error::InvalidArgument(format!(
            "a {}x{} operator does not act between sizes {} and {}",
            d.rows(),
            d.cols(),
            left.size(),
            right.size()
        )));
    }
    let n_max = left.n_max().min(right.n_max());
    let mut gammas = Vec::with_capacity(n_max + 1);
    let mut residuals = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let pd = apply_extended(d, left.extended_poly(n));
        let gamma = pd
            .get(n)
            .cloned()
            .unwrap_or_else(|| HpMatrix::zeros(d.rows(), d.cols()));
        let q = right.extended_poly(n);
        let len = pd.len().max(q.len());
        let diff: Vec<HpMatrix> = (0..len)
            .map(|j| {
                let a = pd
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| HpMatrix::zeros(d.rows(), d.cols()));
                match q.get(j) {
                    Some(qj) => a.sub(&gamma.mul(qj)),
                    None => a,
                }
            })
            .collect();
        let scale = coeff_norm(&pd).max(gamma.norm_f64());
        residuals.push(if scale > 0.0 {
            coeff_norm(&diff) / scale
        } else {
            0.0
        });
        gammas.push(gamma.to_cmat());
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(EigenvalueRecord {
        gammas,
        residuals,
        max_residual,
        member: max_residual <= eps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    /// Max over `n, m` of `‖(P_nD, P_m) − (P_n, P_mD)‖` over the Cauchy–Schwarz scale.
    pub max_residual: f64,
    pub symmetric: bool,
}

/// `(P_n D, P_m) = (P_n, P_m D)` for all `n, m ≤ n_max`.
pub fn is_symmetric(
    d: &MatrixDiffOperator,
    seq: &MopSequence,
    mom: &MomentSequence,
    eps: f64,
) -> Result<SymmetryReport> {
    if d.rows() != seq.size() || d.cols() != seq.size() {
        return Err(Error::InvalidArgument(
            "operator and polynomials have different sizes".into(),
        ));
    }
    let ext = mom.extended();
    let n_max = seq.n_max();
    let images: Vec<Vec<HpMatrix>> = (0..=n_max)
        .map(|n| apply_extended(d, seq.extended_poly(n)))
        .collect();
    let top = images.iter().map(Vec::len).max().unwrap_or(1) - 1 + n_max;
    if top > mom.max_order() {
        return Err(Error::OutOfRange {
            required: top,
            available: mom.max_order(),
        });
    }
    let wnorm = |p: &[HpMatrix]| inner_product_extended(p, p, &ext).norm_f64().sqrt();
    let pn: Vec<f64> = (0..=n_max).map(|n| wnorm(seq.extended_poly(n))).collect();
    let dn: Vec<f64> = images.iter().map(|p| wnorm(p)).collect();
    let mut worst: f64 = 0.0;
    for n in 0..=n_max {
        for m in 0..=n_max {
            let lhs = inner_product_extended(&images[n], seq.extended_poly(m), &ext);
            let rhs = inner_product_extended(seq.extended_poly(n), &images[m], &ext);
            let scale = dn[n] * pn[m] + pn[n] * dn[m];
            if scale > 0.0 {
                worst = worst.max(lhs.sub(&rhs).norm_f64() / scale);
            }
        }
    }
    Ok(SymmetryReport {
        max_residual: worst,
        symmetric: worst <= eps,
    })
}

// ---------------------------------------------------------------------------
// Order zero

#[derive(Debug, Clone)]
pub struct OrderZeroReport {
    /// Constants commuting with every `P_n` (complex dimension via `dim()`).
    pub basis: CommutantBasis,
    pub non_scalar: bool,
    /// Verdict of the moment route, compared only on bounded supports.
    pub moments_reducible: Option<bool>,
}

impl OrderZeroReport {
    /// On bounded supports a non-scalar order-zero operator exists exactly
    /// when the weight reduces; `None` elsewhere.
    pub fn agrees_with_reducibility(&self) -> Option<bool> {
        self.moments_reducible.map(|r| r == self.non_scalar)
    }
}

/// Order-zero operators in the algebra: the commutant of the monic polynomials.
pub fn order_zero(seq: &MopSequence, mom: &MomentSequence, eps: f64) -> OrderZeroReport {
    let basis = order_zero_elements(seq, eps);
    let non_scalar = !basis.is_trivial();
    let moments_reducible = mom
        .is_bounded()
        .then(|| !commutant_from_moments(mom, eps).is_trivial());
    OrderZeroReport {
        basis,
        non_scalar,
        moments_reducible,
    }
}

/// Unitary `M` with `M P_n M⁻¹` block diagonal for every stored `P_n`.
#[derive(Debug, Clone)]
pub struct PolynomialSplit {
    pub m: CMat,
    pub block_sizes: Vec<usize>,
    /// Max over `n` of the off-block mass of `M P_n M⁻¹` relative to its norm.
    pub residual: f64,
}

/// Splits the sequence `P_n` when its commutant is non-scalar. Expects the
/// sequence of a normalized weight (`S_0 = I`).
pub fn polynomial_sequence_reducible(
    seq: &MopSequence,
    eps: f64,
) -> Result<Option<PolynomialSplit>> {
    let n = seq.size();
    if linalg::norm(&(seq.norm(0) - linalg::identity(n))) > eps.sqrt() {
        return Err(Error::InvalidArgument(
            "the sequence must be normalized to S_0 = I first".into(),
        ));
    }
    let basis = order_zero_elements(seq, eps);
    if basis.is_trivial() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..crate::decompose::UNITARY_RETRIES {
        let coeffs: Vec<f64> = (0..basis.real_dim())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let h = linalg::hermitian_part(&basis.combine(&coeffs));
        let eig = linalg::hermitian_eigen(&h);
        let spread = eig.values[n - 1] - eig.values[0];
        if spread <= eps * linalg::norm(&h) {
            continue;
        }
        let mut sizes = vec![1usize];
        for w in eig.values.windows(2) {
            if w[1] - w[0] <= eps * spread {
                *sizes.last_mut().expect("nonempty") += 1;
            } else {
                sizes.push(1);
            }
        }
        let u = eig.vectors;
        let m = u.adjoint();
        let mut residual: f64 = 0.0;
        for p in seq.polys() {
            for c in p.coeffs() {
                let t = &m * c * &u;
                let s = linalg::norm(&t);
                if s > 0.0 {
                    residual = residual.max(linalg::off_block_norm(&t, &sizes) / s);
                }
            }
        }
        if residual <= eps.sqrt() {
            return Ok(Some(PolynomialSplit {
                m,
                block_sizes: sizes,
                residual,
            }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Operator files

/// A coefficient entry: a number, a `[re, im]` pair or a real expression in
/// the file's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Num(f64),
    Pair([f64; 2]),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    order: usize,
    /// `coefficients[i][j]` is the coefficient of `x^j` in `F_i`.
    coefficients: Vec<Vec<Vec<Vec<Entry>>>>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

impl MatrixDiffOperator {
    /// Parses an operator file; `overrides` replace parameter values.
    pub fn from_json(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut file: OperatorFile = serde_json::from_str(text)?;
        file.parameters
            .extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        if file.coefficients.len() != file.order + 1 {
            return Err(Error::Parse(format!(
                "order {} needs {} coefficients, found {}",
                file.order,
                file.order + 1,
                file.coefficients.len()
            )));
        }
        let entry = |e: &Entry| -> Result<num_complex::Complex64> {
            Ok(match e {
                Entry::Num(x) => c64(*x, 0.0),
                Entry::Pair([re, im]) => c64(*re, *im),
                Entry::Expr(s) => c64(expr::evaluate(s, &file.parameters)?, 0.0),
            })
        };
        let mut polys = Vec::with_capacity(file.coefficients.len());
        for f in &file.coefficients {
            let mut mats = Vec::with_capacity(f.len());
            for rows in f {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Parse(
                        "coefficient matrices must be nonempty and rectangular".into(),
                    ));
                }
                let vals = rows
                    .iter()
                    .flatten()
                    .map(entry)
                    .collect::<Result<Vec<_>>>()?;
                mats.push(CMat::from_row_iterator(r, c, vals));
            }
            if mats.is_empty() {
                return Err(Error::Parse("empty coefficient polynomial".into()));
            }
            polys.push(MatrixPolynomial::new(mats)?);
        }
        Self::new(polys)
    }

    /// Numeric form of the operator (expressions already evaluated).
    pub fn to_json(&self) -> String {
        let coefficients = self
            .coefficients
            .iter()
            .map(|f| {
                f.coeffs()
                    .iter()
                    .map(|m| {
                        (0..m.nrows())
                            .map(|i| {
                                (0..m.ncols())
                                    .map(|j| Entry::Pair([m[(i, j)].re, m[(i, j)].im]))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let file = OperatorFile {
            order: self.order(),
            coefficients,
            parameters: BTreeMap::new(),
        };
        serde_json::to_string_pretty(&file).expect("operators serialize")
    }
}

/// Recursive-descent evaluation of real arithmetic expressions with named
/// parameters: `+ - * / ^`, parentheses and unary signs.
pub mod expr {
    use std::collections::BTreeMap;

    use crate::error::{Error, Result};

    struct Parser<'a> {
        src: &'a [u8],
        pos: usize,
        vars: &'a BTreeMap<String, f64>,
    }

    impl Parser<'_> {
        fn err(&self, msg: &str) -> Error {
            Error::Parse(format!(
                "{msg} at offset {} in {:?}",
                self.pos,
                String::from_utf8_lossy(self.src)
            ))
        }

        fn skip_ws(&mut self) {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.src.get(self.pos).copied()
        }

        fn sum(&mut self) -> Result<f64> {
            let mut acc = self.product()?;
            while let Some(op @ (b'+' | b'-')) = self.peek() {
                self.pos += 1;
                let rhs = self.product()?;
                acc = if op == b'+' { acc + rhs } else { acc - rhs };
            }
            Ok(acc)
        }

        fn product(&mut self) -> Result<f64> {
            let mut acc = self.unary()?;
            while let Some(op @ (b'*' | b'/')) = self.peek() {
                self.pos += 1;
                let rhs = self.unary()?;
                acc = if op == b'*' { acc * rhs } else { acc / rhs };
            }
            Ok(acc)
        }

        fn unary(&mut self) -> Result<f64> {
            match self.peek() {
                Some(b'-') => {
                    self.pos += 1;
                    Ok(-self.unary()?)
                }
                Some(b'+') => {
                    self.pos += 1;
                    self.unary()
                }
                _ => self.power(),
            }
        }

        fn power(&mut self) -> Result<f64> {
            let base = self.atom()?;
            if self.peek() == Some(b'^') {
                self.pos += 1;
                return Ok(base.powf(self.unary()?));
            }
            Ok(base)
        }

        fn atom(&mut self) -> Result<f64> {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    let v = self.sum()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(v)
                }
                Some(c) if c.is_ascii_digit() || c == b'.' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                    {
                        self.pos += 1;
                    }
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                        let save = self.pos;
                        self.pos += 1;
                        if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                            self.pos += 1;
                        }
                        let digits = self.pos;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                        if self.pos == digits {
                            self.pos = save;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                    text.parse().map_err(|_| self.err("malformed number"))
                }
                Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric()
                            || self.src[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                    self.vars
                        .get(name)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("unknown parameter {name:?}")))
                }
                _ => Err(self.err("expected a number, parameter or '('")),
            }
        }
    }

    pub fn evaluate(text: &str, vars: &BTreeMap<String, f64>) -> Result<f64> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            vars,
        };
        let v = p.sum()?;
        if p.peek().is_some() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Operators of the Jacobi-type example

/// Operators attached to `x^α(1−x)^{α+1} ⊕ x^{α+1}(1−x)^α`.
pub mod jacobi {
    use super::*;

    fn p(coeffs: &[&[f64]], n: usize, m: usize) -> MatrixPolynomial {
        MatrixPolynomial::new(coeffs.iter().map(|c| linalg::from_real(n, m, c)).collect())
            .expect("valid literal")
    }

    fn scalar(coeffs: &[&[f64]]) -> MatrixDiffOperator {
        MatrixDiffOperator::new(
            coeffs
                .iter()
                .map(|c| {
                    p(
                        &c.iter().map(std::slice::from_ref).collect::<Vec<_>>(),
                        1,
                        1,
                    )
                })
                .collect(),
        )
        .expect("valid literal")
    }

    /// `∂² x(1−x) + ∂(X − xU) + V` on the diagonal weight.
    pub fn symmetric_operator(alpha: f64, u: f64) -> MatrixDiffOperator {
        let (a1, u1) = (alpha + 1.0, 1.0 + u);
        let v = a1 * u1;
        MatrixDiffOperator::new(vec![
            p(&[&[-v, v, v, -v]], 2, 2),
            p(
                &[
                    &[a1, -u1, 0.0, alpha + 2.0],
                    &[-(2.0 * alpha + 3.0), u1, u1, -(2.0 * alpha + 3.0)],
                ],
                2,
                2,
            ),
            p(
                &[&[0.0; 4], &[1.0, 0.0, 0.0, 1.0], &[-1.0, 0.0, 0.0, -1.0]],
                2,
                2,
            ),
        ])
        .expect("valid literal")
    }

    /// `∂(1−x) − (α+1)`.
    pub fn lowering_factor(alpha: f64) -> MatrixDiffOperator {
        scalar(&[&[-(alpha + 1.0)], &[1.0, -1.0]])
    }

    /// `∂x + (α+1)`.
    pub fn raising_factor(alpha: f64) -> MatrixDiffOperator {
        scalar(&[&[alpha + 1.0], &[0.0, 1.0]])
    }

    /// `∂² x(1−x) + ∂(α + 1 + shift − (2α+3)x) − (α+1)²`.
    pub fn second_order(alpha: f64, shift: f64) -> MatrixDiffOperator {
        scalar(&[
            &[-(alpha + 1.0).powi(2)],
            &[alpha + 1.0 + shift, -(2.0 * alpha + 3.0)],
            &[0.0, 1.0, -1.0],
        ])
    }

    /// `−∂(1−x) + (α+1)`, mapping `p_n` to `(n+α+1) q_n`.
    pub fn intertwiner(alpha: f64) -> MatrixDiffOperator {
        scalar(&[&[alpha + 1.0], &[-1.0, 1.0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real;
    use crate::moments::matrix_moments;
    use crate::mop::monic_sequence;
    use crate::weights::{catalog, MatrixWeight, ScalarWeightKind};
    use proptest::prelude::*;

    fn mops(w: &MatrixWeight, n: usize) -> (MomentSequence, MopSequence) {
        let mom = matrix_moments(w, 2 * n + 3).unwrap();
        let seq = monic_sequence(&mom, n).unwrap();
        (mom, seq)
    }

    fn jacobi_scalar(alpha: f64, beta: f64) -> MatrixWeight {
        MatrixWeight::scalar(ScalarWeightKind::Jacobi01 { alpha, beta }).unwrap()
    }

    fn poly(coeffs: &[f64]) -> MatrixPolynomial {
        MatrixPolynomial::new(coeffs.iter().map(|&c| from_real(1, 1, &[c])).collect()).unwrap()
    }

    #[test]
    fn order_zero_action_is_right_multiplication() {
        let f0 = from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = MatrixDiffOperator::constant(f0.clone());
        assert_eq!(
            apply(&d, &MatrixPolynomial::identity(2)).unwrap(),
            MatrixPolynomial::constant(f0)
        );
        let one = poly(&[1.0]);
        assert_eq!(
            apply(&jacobi::intertwiner(1.0), &one).unwrap(),
            poly(&[2.0])
        );
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let d = MatrixDiffOperator::identity(2);
        assert!(apply(&d, &poly(&[1.0])).is_err());
        assert!(compose(&d, &MatrixDiffOperator::identity(3)).is_err());
    }

    #[test]
    fn darboux_pair_compositions() {
        let a = 1.0;
        let (lo, hi) = (jacobi::lowering_factor(a), jacobi::raising_factor(a));
        assert!(
            compose(&lo, &hi)
                .unwrap()
                .max_coeff_diff(&jacobi::second_order(a, 0.0))
                == 0.0
        );
        assert!(
            compose(&hi, &lo)
                .unwrap()
                .max_coeff_diff(&jacobi::second_order(a, 1.0))
                == 0.0
        );
        let id = MatrixDiffOperator::identity(1);
        assert_eq!(compose(&lo, &id).unwrap(), lo);
        assert_eq!(compose(&id, &lo).unwrap(), lo);
    }

    #[test]
    fn symmetric_operator_eigenvalues_match_closed_form() {
        let (alpha, u) = (1.0, 0.5);
        let (mom, seq) = mops(&catalog::jacobi_pair_diagonal(alpha).unwrap(), 8);
        let d = jacobi::symmetric_operator(alpha, u);
        let rec = eigenvalue_matrices(&d, &seq, 1e-9).unwrap();
        assert!(rec.member, "residual {}", rec.max_residual);
        for (n, g) in rec.gammas.iter().enumerate() {
            let n = n as f64;
            let diag = -n * (n + 2.0 * alpha + 2.0) - (alpha + 1.0) * (1.0 + u);
            let off = (1.0 + u) * (n + alpha + 1.0);
            let want = from_real(2, 2, &[diag, off, off, diag]);
            assert!(linalg::max_abs(&(g - want)) < 1e-9 * (1.0 + n * n));
        }
        assert!(is_symmetric(&d, &seq, &mom, 1e-9).unwrap().symmetric);
        assert!(
            !is_symmetric(&d.scale(c64(0.0, 1.0)), &seq, &mom, 1e-9)
                .unwrap()
                .symmetric
        );
    }

    #[test]
    fn trivial_operators_have_trivial_eigenvalues() {
        let (_, seq) = mops(&catalog::diag_x2_x(), 5);
        let zero = MatrixDiffOperator::constant(CMat::zeros(2, 2));
        assert!(eigenvalue_matrices(&zero, &seq, 1e-9)
            .unwrap()
            .gammas
            .iter()
            .all(|g| linalg::max_abs(g) == 0.0));
        let c = MatrixDiffOperator::identity(2).scale(c64(2.5, 0.0));
        for g in eigenvalue_matrices(&c, &seq, 1e-9).unwrap().gammas {
            assert!(linalg::max_abs(&(g - linalg::identity(2).scale(2.5))) < 1e-14);
        }
    }

    #[test]
    fn unbounded_degree_operator_is_rejected() {
        let (_, seq) = mops(&catalog::diag_x2_x(), 3);
        let d = MatrixDiffOperator::new(vec![MatrixPolynomial::monomial(linalg::identity(2), 1)])
            .unwrap();
        assert!(matches!(
            eigenvalue_matrices(&d, &seq, 1e-9),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn intertwiner_maps_p_to_q() {
        let alpha = 1.0;
        let (_, p) = mops(&jacobi_scalar(alpha, alpha + 1.0), 8);
        let (_, q) = mops(&jacobi_scalar(alpha + 1.0, alpha), 8);
        let d = jacobi::intertwiner(alpha);
        for n in 0..=8 {
            let lhs = apply(&d, p.poly(n)).unwrap();
            let rhs = q.poly(n).scale(c64(n as f64 + alpha + 1.0, 0.0));
            let scale = rhs.coeffs().iter().map(linalg::max_abs).fold(1.0, f64::max);
            assert!(lhs.max_coeff_diff(&rhs) < 1e-10 * scale, "n = {n}");
        }
        let rec = eigenvalue_matrices_between(&d, &p, &q, 1e-9).unwrap();
        assert!(rec.member);
    }

    #[test]
    fn block_entries_are_members_of_their_blocks() {
        let (alpha, u) = (1.0, 0.0);
        let (_, p) = mops(&jacobi_scalar(alpha, alpha + 1.0), 8);
        let (_, q) = mops(&jacobi_scalar(alpha + 1.0, alpha), 8);
        let d = jacobi::symmetric_operator(alpha, u);
        let entry = |i: usize, j: usize| {
            MatrixDiffOperator::new(
                d.coefficients()
                    .iter()
                    .map(|f| {
                        MatrixPolynomial::new(
                            f.coeffs()
                                .iter()
                                .map(|c| from_real(1, 1, &[c[(i, j)].re]))
                                .collect(),
                        )
                        .unwrap()
                    })
                    .collect(),
            )
            .unwrap()
        };
        assert!(eigenvalue_matrices(&entry(0, 0), &p, 1e-9).unwrap().member);
        assert!(eigenvalue_matrices(&entry(1, 1), &q, 1e-9).unwrap().member);
        assert!(
            eigenvalue_matrices_between(&entry(0, 1), &p, &q, 1e-9)
                .unwrap()
                .member
        );
        assert!(
            eigenvalue_matrices_between(&entry(1, 0), &q, &p, 1e-9)
                .unwrap()
                .member
        );
        // The other pairing fails: the (1,2) entry does not map p_n to multiples of p_n.
        assert!(!eigenvalue_matrices(&entry(0, 1), &p, 1e-9).unwrap().member);
    }

    #[test]
    fn symmetric_eigenvalues_times_norms_are_hermitian() {
        let (_, seq) = mops(&catalog::jacobi_pair_diagonal(1.0).unwrap(), 8);
        let rec = eigenvalue_matrices(&jacobi::symmetric_operator(1.0, 0.3), &seq, 1e-9).unwrap();
        for (n, g) in rec.gammas.iter().enumerate() {
            let gs = g * seq.norm(n);
            assert!(linalg::hermitian_defect(&gs) <= 1e-9 * linalg::norm(&gs));
        }
    }

    #[test]
    fn order_zero_detection() {
        let (mom, seq) = mops(&catalog::jacobi_pair_diagonal(1.0).unwrap(), 8);
        let r = order_zero(&seq, &mom, 1e-9);
        assert_eq!(r.basis.dim(), 2);
        assert!(r.non_scalar);
        assert_eq!(r.agrees_with_reducibility(), Some(true));
        let (mom, seq) = mops(&catalog::uniform_irreducible(), 8);
        let r = order_zero(&seq, &mom, 1e-9);
        assert_eq!(r.basis.dim(), 1);
        assert_eq!(r.agrees_with_reducibility(), Some(true));
    }

    #[test]
    fn hermitian_commutant_element_is_symmetric_order_zero_operator() {
        let mom = matrix_moments(&catalog::conjugated_diag_x2_x(), 15).unwrap();
        let (norm_mom, _) = crate::decompose::normalize(&mom).unwrap();
        let seq = monic_sequence(&norm_mom, 7).unwrap();
        let basis = commutant_from_moments(&norm_mom, 1e-9);
        for t in &basis.basis {
            let d = MatrixDiffOperator::constant(t.clone());
            assert!(is_symmetric(&d, &seq, &norm_mom, 1e-9).unwrap().symmetric);
        }
    }

    #[test]
    fn lognormal_polynomials_split_although_the_weight_moments_do_not_decide() {
        let mom = matrix_moments(&catalog::lognormal_sine(), 17).unwrap();
        let (norm_mom, _) = crate::decompose::normalize(&mom).unwrap();
        let seq = monic_sequence(&norm_mom, 8).unwrap();
        assert_eq!(order_zero_elements(&seq, 1e-9).dim(), 4);
        let split = polynomial_sequence_reducible(&seq, 1e-9)
            .unwrap()
            .expect("split");
        assert_eq!(split.block_sizes, vec![1, 1]);
    }

    #[test]
    fn polynomial_splits_follow_the_commutant() {
        let mom = matrix_moments(&catalog::jacobi_pair_diagonal(1.0).unwrap(), 17).unwrap();
        let (norm_mom, _) = crate::decompose::normalize(&mom).unwrap();
        let seq = monic_sequence(&norm_mom, 8).unwrap();
        let split = polynomial_sequence_reducible(&seq, 1e-9)
            .unwrap()
            .expect("split");
        assert_eq!(split.block_sizes, vec![1, 1]);
        let mom = matrix_moments(&catalog::uniform_irreducible(), 17).unwrap();
        let (norm_mom, _) = crate::decompose::normalize(&mom).unwrap();
        let seq = monic_sequence(&norm_mom, 8).unwrap();
        assert!(polynomial_sequence_reducible(&seq, 1e-9).unwrap().is_none());
        let raw = monic_sequence(&mom, 8).unwrap();
        assert!(polynomial_sequence_reducible(&raw, 1e-9).is_err());
    }

    #[test]
    fn operator_file_with_parameters() {
        let text = r#"{
            "order": 1,
            "coefficients": [[[["alpha + 1"]]], [[[-1]], [[1.0]]]],
            "parameters": {"alpha": 1}
        }"#;
        let d = MatrixDiffOperator::from_json(text, &BTreeMap::new()).unwrap();
        assert_eq!(d, jacobi::intertwiner(1.0));
        let over = BTreeMap::from([("alpha".to_string(), 2.0)]);
        assert_eq!(
            MatrixDiffOperator::from_json(text, &over).unwrap(),
            jacobi::intertwiner(2.0)
        );
        let back = MatrixDiffOperator::from_json(&d.to_json(), &BTreeMap::new()).unwrap();
        assert_eq!(back, d);
        assert!(MatrixDiffOperator::from_json(
            r#"{"order": 2, "coefficients": [[[[1]]]]}"#,
            &BTreeMap::new()
        )
        .is_err());
    }

    #[test]
    fn expression_grammar() {
        let vars = BTreeMap::from([("alpha".to_string(), 1.5), ("u".to_string(), -0.5)]);
        let e = |s: &str| expr::evaluate(s, &vars).unwrap();
        assert_eq!(e("-(1+u)*(alpha+1)"), -1.25);
        assert_eq!(e("2*alpha+3"), 6.0);
        assert_eq!(e("1/2 - -u"), 0.0);
        assert_eq!(e("2^3^0"), 2.0);
        assert_eq!(e("1e-1*10"), 1.0);
        assert!(expr::evaluate("alpha +", &vars).is_err());
        assert!(expr::evaluate("beta", &vars).is_err());
        assert!(expr::evaluate("(1", &vars).is_err());
    }

    fn arb_poly(
        rows: usize,
        cols: usize,
        max_deg: usize,
    ) -> impl Strategy<Value = MatrixPolynomial> {
        proptest::collection::vec(
            proptest::collection::vec(-3i32..=3, rows * cols),
            1..=max_deg + 1,
        )
        .prop_map(move |cs| {
            MatrixPolynomial::new(
                cs.iter()
                    .map(|c| {
                        linalg::from_real(
                            rows,
                            cols,
                            &c.iter().map(|&v| v as f64).collect::<Vec<_>>(),
                        )
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    fn arb_op(n: usize) -> impl Strategy<Value = MatrixDiffOperator> {
        proptest::collection::vec(arb_poly(n, n, 2), 1..=3)
            .prop_map(|f| MatrixDiffOperator::new(f).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn composition_matches_successive_application(d1 in arb_op(2), d2 in arb_op(2), q in arb_poly(2, 2, 4)) {
            let lhs = apply(&compose(&d1, &d2).unwrap(), &q).unwrap();
            let rhs = apply(&d2, &apply(&d1, &q).unwrap()).unwrap();
            prop_assert_eq!(lhs.max_coeff_diff(&rhs), 0.0);
        }

        #[test]
        fn composition_is_associative(a in arb_op(2), b in arb_op(2), c in arb_op(2)) {
            let l = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            let r = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(l.max_coeff_diff(&r), 0.0);
        }

        #[test]
        fn apply_is_linear(d1 in arb_op(2), d2 in arb_op(2), p in arb_poly(2, 2, 3), q in arb_poly(2, 2, 3)) {
            let sum = apply(&d1, &p.add(&q).unwrap()).unwrap();
            let parts = apply(&d1, &p).unwrap().add(&apply(&d1, &q).unwrap()).unwrap();
            prop_assert_eq!(sum.max_coeff_diff(&parts), 0.0);
            let ops = apply(&d1.add(&d2).unwrap(), &p).unwrap();
            let split = apply(&d1, &p).unwrap().add(&apply(&d2, &p).unwrap()).unwrap();
            prop_assert_eq!(ops.max_coeff_diff(&split), 0.0);
        }

        #[test]
        fn degree_bounded_operators_keep_degree(d in arb_op(2), n in 0usize..6) {
            prop_assume!(d.is_degree_bounded());
            let q = MatrixPolynomial::monomial(linalg::identity(2), n);
            let image = apply(&d, &q).unwrap();
            prop_assert!(image.is_zero() || image.degree() <= n);
        }
    }
}
