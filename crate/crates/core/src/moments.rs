//! Matrix moments `M_n = ∫ xⁿ W(x) dx`.
//!
//! Closed-form moments are evaluated from exact scalar formulas at extended
//! precision and rounded to `f64`; the extended values travel with the
//! sequence so that orthogonalization downstream does not inherit the
//! cancellation of the block Hankel system. Quadrature moments are plain
//! `f64` and serve as an independent numerical cross-check.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hp::{self, HpComplex, HpMatrix, PREC};
use crate::linalg::{self, CMat};
use crate::quadrature;
use crate::weights::{json, MatrixWeight, ScalarWeightKind, Support, WeightExpr};

/// Largest admissible scalar moment magnitude.
pub const MOMENT_CEILING: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Quadrature {
        nodes: usize,
    },
    /// Read from a file; only the `f64` values are known.
    External,
}

#[derive(Debug, Clone)]
pub struct MomentSequence {
    moments: Vec<CMat>,
    extended: Option<Vec<HpMatrix>>,
    support: Support,
    provenance: Provenance,
}

impl MomentSequence {
    /// Wraps raw `f64` moments (symmetrized to Hermitian).
    pub fn new(moments: Vec<CMat>, support: Support, provenance: Provenance) -> Result<Self> {
        let first = moments
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty moment sequence".into()))?;
        let n = first.nrows();
        if moments.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::InvalidArgument(
                "moments must be square matrices of one size".into(),
            ));
        }
        let moments = moments.iter().map(linalg::hermitian_part).collect();
        Ok(Self {
            moments,
            extended: None,
            support,
            provenance,
        })
    }

    fn from_extended(
        extended: Vec<HpMatrix>,
        support: Support,
        provenance: Provenance,
        keep: bool,
    ) -> Self {
        let extended: Vec<HpMatrix> = extended.iter().map(hermitian_part_hp).collect();
        let moments = extended.iter().map(HpMatrix::to_cmat).collect();
        Self {
            moments,
            extended: keep.then_some(extended),
            support,
            provenance,
        }
    }

    pub fn size(&self) -> usize {
        self.moments[0].nrows()
    }

    /// Number of stored moments `K + 1`.
    pub fn count(&self) -> usize {
        self.moments.len()
    }

    /// Highest stored order `K`.
    pub fn max_order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn moments(&self) -> &[CMat] {
        &self.moments
    }

    pub fn moment(&self, k: usize) -> &CMat {
        &self.moments[k]
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_bounded(&self) -> bool {
        self.support.is_bounded()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Extended-precision moments; exact conversions of the `f64` values when
    /// no extended shadow was computed.
    pub fn extended(&self) -> Vec<HpMatrix> {
        match &self.extended {
            Some(e) => e.clone(),
            None => self.moments.iter().map(HpMatrix::from_cmat).collect(),
        }
    }

    pub fn has_extended(&self) -> bool {
        self.extended.is_some()
    }

    /// Relative accuracy of the stored data.
    pub fn data_roundoff(&self) -> f64 {
        if self.extended.is_some() {
            hp::unit_roundoff()
        } else {
            f64::EPSILON / 2.0
        }
    }

    /// Moments of `M W M*` (`M` may be rectangular with full row rank).
    pub fn conjugate(&self, m: &CMat) -> Result<Self> {
        if m.ncols() != self.size() {
            return Err(Error::InvalidArgument(format!(
                "matrix with {} columns cannot act on moments of size {}",
                m.ncols(),
                self.size()
            )));
        }
        let hm = HpMatrix::from_cmat(m);
        let hma = hm.adjoint();
        let ext: Vec<HpMatrix> = self
            .extended()
            .iter()
            .map(|mk| hm.mul(mk).mul(&hma))
            .collect();
        Ok(Self::from_extended(
            ext,
            self.support,
            self.provenance,
            self.extended.is_some(),
        ))
    }

    /// Moments of `λ W`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let l = hp::float(lambda);
        let ext = self.extended().iter().map(|m| m.scale(&l)).collect();
        Self::from_extended(ext, self.support, self.provenance, self.extended.is_some())
    }

    /// First `count` moments.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.clamp(1, self.count());
        Self {
            moments: self.moments[..count].to_vec(),
            extended: self.extended.as_ref().map(|e| e[..count].to_vec()),
            support: self.support,
            provenance: self.provenance,
        }
    }

    /// `M_0 ≻ 0` and, up to the highest order the data can resolve, a
    /// positive definite block Hankel matrix `(M_{i+j})`.
    pub fn check_nondegenerate(&self) -> Result<()> {
        let (lo, hi) = linalg::hermitian_extremes(&self.moments[0]);
        if !(hi > 0.0) || lo <= 1e-14 * hi {
            return Err(Error::Degenerate(format!(
                "M_0 is not positive definite (eigenvalues {lo:e} .. {hi:e})"
            )));
        }
        let order = self.max_order() / 2;
        let n = self.size();
        let dim = (order + 1) * n;
        let ext = self.extended();
        // Cholesky of the diagonally scaled Hankel matrix at extended precision.
        let mut h: Vec<Vec<HpComplex>> = (0..dim)
            .map(|r| {
                (0..dim)
                    .map(|c| ext[r / n + c / n].get(r % n, c % n).clone())
                    .collect()
            })
            .collect();
        let diag: Vec<Float> = (0..dim).map(|i| h[i][i].re.clone().sqrt()).collect();
        for r in 0..dim {
            for c in 0..dim {
                let s = Float::with_val(PREC, &diag[r] * &diag[c]);
                h[r][c] = HpComplex {
                    re: Float::with_val(PREC, &h[r][c].re / &s),
                    im: Float::with_val(PREC, &h[r][c].im / &s),
                };
            }
        }
        let floor = 64.0 * self.data_roundoff() * dim as f64;
        for k in 0..dim {
            let pivot = h[k][k].re.to_f64();
            if pivot <= floor {
                if self.extended.is_none() && pivot > -floor {
                    // Beyond what f64 data can resolve; nothing more can be certified.
                    return Ok(());
                }
                return Err(Error::Degenerate(format!(
                    "block Hankel matrix is not positive definite at order {} (pivot {pivot:e})",
                    k / n
                )));
            }
            let p = h[k][k].re.clone().sqrt();
            for r in k..dim {
                h[r][k] = HpComplex {
                    re: Float::with_val(PREC, &h[r][k].re / &p),
                    im: Float::with_val(PREC, &h[r][k].im / &p),
                };
            }
            for c in (k + 1)..dim {
                let lck = h[c][k].conj();
                for r in c..dim {
                    let upd = h[r][k].mul(&lck);
                    h[r][c] = h[r][c].sub(&upd);
                }
            }
        }
        Ok(())
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        self.moments
            .iter()
            .map(|m| linalg::hermitian_defect(m) / linalg::norm(m).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

fn hermitian_part_hp(m: &HpMatrix) -> HpMatrix {
    let half = hp::float(0.5);
    m.add(&m.adjoint()).scale(&half)
}

/// Scalar moments `m_k = ∫ x^k s(x) dx`, `k = 0..count−1`, at extended precision.
pub fn scalar_moments_extended(kind: ScalarWeightKind, count: usize) -> Result<Vec<Float>> {
    kind.validate()?;
    let f = hp::float;
    let mut out = Vec::with_capacity(count);
    match kind {
        ScalarWeightKind::Jacobi01 { alpha, beta } => {
            let (a, b) = (f(alpha), f(beta));
            let ga = Float::with_val(PREC, &a + 1u32).gamma();
            let gb = Float::with_val(PREC, &b + 1u32).gamma();
            let gab = Float::with_val(PREC, Float::with_val(PREC, &a + &b) + 2u32).gamma();
            let mut m = ga * gb / gab;
            for k in 0..count {
                out.push(m.clone());
                let num = Float::with_val(PREC, &a + (k as u32 + 1));
                let den = Float::with_val(PREC, Float::with_val(PREC, &a + &b) + (k as u32 + 2));
                m = m * num / den;
            }
        }
        ScalarWeightKind::Laguerre { alpha } => {
            let a = f(alpha);
            let mut m = Float::with_val(PREC, &a + 1u32).gamma();
            for k in 0..count {
                out.push(m.clone());
                m *= Float::with_val(PREC, &a + (k as u32 + 1));
            }
        }
        ScalarWeightKind::Hermite => {
            let mut even = Float::with_val(PREC, rug::float::Constant::Pi).sqrt();
            for k in 0..count {
                if k % 2 == 0 {
                    out.push(even.clone());
                    even *= f(k as f64 / 2.0 + 0.5);
                } else {
                    out.push(f(0.0));
                }
            }
        }
        ScalarWeightKind::LogNormal => {
            let two_pi = Float::with_val(PREC, rug::float::Constant::Pi) * 2u32;
            let c = two_pi.sqrt() * 2u32;
            for k in 0..count {
                let e = Float::with_val(PREC, (k * k) as f64 / 2.0).exp();
                let m = Float::with_val(PREC, &c * &e);
                if m.to_f64() > MOMENT_CEILING {
                    return Err(Error::Overflow { k });
                }
                out.push(m);
            }
        }
        ScalarWeightKind::SinePerturbation => out.resize(count, f(0.0)),
    }
    Ok(out)
}

/// Scalar moments rounded to `f64`.
pub fn scalar_moments(kind: ScalarWeightKind, count: usize) -> Result<Vec<f64>> {
    Ok(scalar_moments_extended(kind, count)?
        .iter()
        .map(Float::to_f64)
        .collect())
}

/// Scalar moments by Gaussian quadrature with `nodes` points.
pub fn scalar_moments_quadrature(
    kind: ScalarWeightKind,
    count: usize,
    nodes: usize,
) -> Result<Vec<f64>> {
    kind.validate()?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(count);
    match kind {
        ScalarWeightKind::Jacobi01 { alpha, beta } => {
            let integer = |v: f64| v >= 0.0 && v.fract() == 0.0;
            if integer(alpha) && integer(beta) {
                let r = quadrature::gauss_legendre01(nodes);
                for k in 0..count {
                    out.push(r.integrate(|x| x.powf(k as f64 + alpha) * (1.0 - x).powf(beta)));
                }
            } else {
                let r = quadrature::gauss_jacobi01(nodes, alpha, beta);
                for k in 0..count {
                    out.push(r.integrate(|x| x.powi(k as i32)));
                }
            }
        }
        ScalarWeightKind::Laguerre { alpha } => {
            let r = quadrature::gauss_laguerre(nodes, alpha);
            for k in 0..count {
                out.push(r.integrate(|x| x.powi(k as i32)));
            }
        }
        ScalarWeightKind::Hermite => {
            let r = quadrature::gauss_hermite(nodes);
            for k in 0..count {
                out.push(r.integrate_paired(|x| x.powi(k as i32)));
            }
        }
        ScalarWeightKind::LogNormal | ScalarWeightKind::SinePerturbation => {
            // With log x = t + k: ∫ x^k s(x) dx = e^{k²/2} ∫ e^{−t²/2} h(t) dt, where
            // h = 2 for the log-normal density and h = sin(2πt) for the perturbation
            // (integer k makes the shift invisible to the sine).
            let r = quadrature::gauss_hermite_prob(nodes);
            let base = if kind == ScalarWeightKind::LogNormal {
                r.integrate_paired(|_| 2.0)
            } else {
                r.integrate_paired(|t| (two_pi * t).sin())
            };
            for k in 0..count {
                let scale = ((k * k) as f64 / 2.0).exp();
                let m = scale * base;
                if scale * 2.0 * two_pi.sqrt() > MOMENT_CEILING {
                    return Err(Error::Overflow { k });
                }
                out.push(m);
            }
        }
    }
    Ok(out)
}

fn uses_log_substitution(w: &WeightExpr) -> bool {
    let mut any = false;
    w.for_each_kind(&mut |k| {
        any |= matches!(
            k,
            ScalarWeightKind::LogNormal | ScalarWeightKind::SinePerturbation
        )
    });
    any
}

/// Assembles matrix moments from scalar moments by linearity.
fn assemble(
    expr: &WeightExpr,
    count: usize,
    scalar: &mut dyn FnMut(ScalarWeightKind, usize) -> Result<Vec<Float>>,
) -> Result<Vec<HpMatrix>> {
    match expr {
        WeightExpr::Atom { kind, envelope } => {
            let d = envelope.degree();
            let m = scalar(*kind, count + d)?;
            let coeffs: Vec<HpMatrix> = envelope.coeffs().iter().map(HpMatrix::from_cmat).collect();
            Ok((0..count)
                .map(|n| {
                    let mut acc = HpMatrix::zeros(envelope.rows(), envelope.cols());
                    for (j, c) in coeffs.iter().enumerate() {
                        acc = acc.add(&c.scale(&m[n + j]));
                    }
                    acc
                })
                .collect())
        }
        WeightExpr::Sum(terms) => {
            let parts: Vec<Vec<HpMatrix>> = terms
                .iter()
                .map(|t| assemble(t, count, scalar))
                .collect::<Result<_>>()?;
            let size: usize = parts.iter().map(|p| p[0].rows).sum();
            Ok((0..count)
                .map(|n| {
                    let mut out = HpMatrix::zeros(size, size);
                    let mut off = 0;
                    for p in &parts {
                        let b = &p[n];
                        for i in 0..b.rows {
                            for j in 0..b.cols {
                                out.set(off + i, off + j, b.get(i, j).clone());
                            }
                        }
                        off += b.rows;
                    }
                    out
                })
                .collect())
        }
        WeightExpr::Conjugated { inner, matrix } => {
            let m = HpMatrix::from_cmat(matrix);
            let ma = m.adjoint();
            Ok(assemble(inner, count, scalar)?
                .iter()
                .map(|x| m.mul(x).mul(&ma))
                .collect())
        }
        WeightExpr::Entrywise(grid) => {
            let n = grid.len();
            let mut out = vec![HpMatrix::zeros(n, n); count];
            for (i, row) in grid.iter().enumerate() {
                for (j, terms) in row.iter().enumerate() {
                    for t in terms {
                        let m = scalar(t.scalar, count)?;
                        let c = hp::float(t.coefficient);
                        for (k, mk) in m.iter().enumerate() {
                            let v = out[k]
                                .get(i, j)
                                .add(&HpComplex::real(Float::with_val(PREC, mk * &c)));
                            out[k].set(i, j, v);
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Closed-form matrix moments `M_0..M_{count−1}`.
pub fn matrix_moments(w: &MatrixWeight, count: usize) -> Result<MomentSequence> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "at least one moment is required".into(),
        ));
    }
    let ext = assemble(w.expr(), count, &mut scalar_moments_extended)?;
    let seq = MomentSequence::from_extended(ext, w.support(), Provenance::ClosedForm, true);
    seq.check_nondegenerate()?;
    Ok(seq)
}

/// Matrix moments by Gaussian quadrature: Gauss–Legendre or Gauss–Jacobi on
/// (0,1), Gauss–Laguerre and Gauss–Hermite on unbounded supports, and
/// Gauss–Hermite after a logarithmic substitution for log-normal type densities.
pub fn quadrature_moments(w: &MatrixWeight, count: usize, nodes: usize) -> Result<MomentSequence> {
    if count == 0 || nodes == 0 {
        return Err(Error::InvalidArgument(
            "moment count and node count must be positive".into(),
        ));
    }
    let needed = count + w.expr().envelope_degree();
    if !uses_log_substitution(w.expr()) && nodes < needed {
        return Err(Error::InvalidArgument(format!(
            "{nodes} nodes cannot integrate degree {} exactly; need at least {needed}",
            needed - 1
        )));
    }
    let mut scalar = |kind: ScalarWeightKind, c: usize| -> Result<Vec<Float>> {
        Ok(scalar_moments_quadrature(kind, c, nodes)?
            .into_iter()
            .map(hp::float)
            .collect())
    };
    let ext = assemble(w.expr(), count, &mut scalar)?;
    if ext.iter().any(|m| !m.norm_f64().is_finite()) {
        return Err(Error::Domain(
            "quadrature produced non-finite moments".into(),
        ));
    }
    Ok(MomentSequence::from_extended(
        ext,
        w.support(),
        Provenance::Quadrature { nodes },
        false,
    ))
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentFile {
    size: usize,
    support: [json::Bound; 2],
    provenance: Provenance,
    moments: Vec<json::MatrixJson>,
}

impl MomentSequence {
    pub fn to_json(&self) -> String {
        let f = MomentFile {
            size: self.size(),
            support: [
                json::Bound::from_value(self.support.a),
                json::Bound::from_value(self.support.b),
            ],
            provenance: self.provenance,
            moments: self.moments.iter().map(json::matrix_to_json).collect(),
        };
        serde_json::to_string_pretty(&f).expect("moments always serialize")
    }

    /// Reads a moment file; only the `f64` data survives, so the sequence is
    /// marked as external.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: MomentFile = serde_json::from_str(text)?;
        let moments = f
            .moments
            .iter()
            .map(json::matrix_from_json)
            .collect::<Result<Vec<_>>>()?;
        if moments.iter().any(|m| m.nrows() != f.size) {
            return Err(Error::Parse(format!(
                "moment matrices do not match declared size {}",
                f.size
            )));
        }
        let support = Support::new(f.support[0].value()?, f.support[1].value()?);
        let provenance = match f.provenance {
            Provenance::ClosedForm => Provenance::External,
            p => p,
        };
        Self::new(moments, support, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, from_real, norm};
    use crate::weights::{catalog, conjugate_weight, MatrixPolynomial};
    use proptest::prelude::*;

    #[test]
    fn uniform_scalar_moments() {
        let m = scalar_moments(
            ScalarWeightKind::Jacobi01 {
                alpha: 0.0,
                beta: 0.0,
            },
            3,
        )
        .unwrap();
        assert_eq!(m, vec![1.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn jacobi_moments_match_beta_function() {
        let m = scalar_moments(
            ScalarWeightKind::Jacobi01 {
                alpha: 1.5,
                beta: 0.5,
            },
            10,
        )
        .unwrap();
        for (k, v) in m.iter().enumerate() {
            let b = quadrature::beta(2.5 + k as f64, 1.5);
            assert!((v - b).abs() <= 1e-15 * b);
        }
    }

    #[test]
    fn laguerre_and_hermite_moments() {
        let l = scalar_moments(ScalarWeightKind::Laguerre { alpha: 0.0 }, 6).unwrap();
        assert_eq!(l, vec![1.0, 1.0, 2.0, 6.0, 24.0, 120.0]);
        let h = scalar_moments(ScalarWeightKind::Hermite, 5).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        assert_eq!(h[1], 0.0);
        assert!((h[2] - sp / 2.0).abs() < 1e-15 && (h[4] - 0.75 * sp).abs() < 1e-15);
    }

    #[test]
    fn sine_perturbation_moments_vanish() {
        assert!(scalar_moments(ScalarWeightKind::SinePerturbation, 30)
            .unwrap()
            .iter()
            .all(|&m| m == 0.0));
    }

    #[test]
    fn lognormal_moment_against_quadrature_oracle() {
        let m = scalar_moments(ScalarWeightKind::LogNormal, 2).unwrap();
        // Independent oracle: trapezoid rule for ∫ e^{s} · 2 e^{−s²/2} ds on a wide window.
        let h = 1e-3;
        let oracle: f64 = (-20_000..=22_000)
            .map(|i| {
                let s = i as f64 * h;
                2.0 * (s - 0.5 * s * s).exp() * h
            })
            .sum();
        assert!((m[1] - oracle).abs() < 1e-12 * oracle);
        let expect = 2.0 * (2.0 * std::f64::consts::PI).sqrt() * 0.5f64.exp();
        assert!((m[1] - expect).abs() < 1e-14 * expect);
    }

    #[test]
    fn lognormal_overflow_reports_k() {
        assert!(scalar_moments(ScalarWeightKind::LogNormal, 38).is_ok());
        assert!(matches!(
            scalar_moments(ScalarWeightKind::LogNormal, 39),
            Err(Error::Overflow { k: 38 })
        ));
    }

    #[test]
    fn conjugated_diag_first_moment() {
        let s = matrix_moments(&catalog::conjugated_diag_x2_x(), 4).unwrap();
        // ∫ [[x²+x, x],[x, x]] dx on (0,1)
        let m0 = from_real(2, 2, &[5.0 / 6.0, 0.5, 0.5, 0.5]);
        assert!(norm(&(s.moment(0) - m0)) < 1e-15);
        let d = matrix_moments(&catalog::diag_x2_x(), 2).unwrap();
        assert!(norm(&(d.moment(0) - from_real(2, 2, &[1.0 / 3.0, 0.0, 0.0, 0.5]))) < 1e-15);
    }

    #[test]
    fn quadrature_agrees_with_closed_form_on_polynomial_weight() {
        let w = catalog::conjugated_diag_x2_x();
        let a = matrix_moments(&w, 20).unwrap();
        let b = quadrature_moments(&w, 20, 32).unwrap();
        for k in 0..20 {
            assert!(
                norm(&(a.moment(k) - b.moment(k))) <= 1e-13 * norm(a.moment(k)),
                "k={k}"
            );
        }
    }

    #[test]
    fn quadrature_agreement_for_k_up_to_40_on_bounded_supports() {
        for w in [
            catalog::jacobi_pair(0.5).unwrap(),
            catalog::jacobi_pair_diagonal(1.0).unwrap(),
            catalog::uniform_irreducible(),
        ] {
            let a = matrix_moments(&w, 41).unwrap();
            let b = quadrature_moments(&w, 41, 48).unwrap();
            for k in 0..=40 {
                assert!(
                    norm(&(a.moment(k) - b.moment(k))) <= 1e-10 * norm(a.moment(k)),
                    "k={k}"
                );
            }
        }
    }

    #[test]
    fn sine_entry_quadrature_is_exactly_zero() {
        let m = scalar_moments_quadrature(ScalarWeightKind::SinePerturbation, 10, 80).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let w = catalog::lognormal_sine();
        let q = quadrature_moments(&w, 10, 80).unwrap();
        for k in 0..10 {
            assert_eq!(q.moment(k)[(0, 1)], c64(0.0, 0.0));
        }
    }

    #[test]
    fn zero_envelope_gives_zero_moments() {
        let w = MatrixWeight::atom(
            ScalarWeightKind::Jacobi01 {
                alpha: 0.0,
                beta: 0.0,
            },
            MatrixPolynomial::zero(2, 2),
        )
        .unwrap();
        let q = quadrature_moments(&w, 5, 8).unwrap();
        assert!(q.moments().iter().all(|m| norm(m) == 0.0));
        assert!(matches!(matrix_moments(&w, 5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rank_deficient_weight_is_degenerate() {
        // [[1,1],[1,1]] · uniform is singular everywhere.
        let w = MatrixWeight::atom(
            ScalarWeightKind::Jacobi01 {
                alpha: 0.0,
                beta: 0.0,
            },
            MatrixPolynomial::constant(from_real(2, 2, &[1.0, 1.0, 1.0, 1.0])),
        )
        .unwrap();
        assert!(matches!(matrix_moments(&w, 6), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hankel_of_closed_forms_is_positive_definite_to_full_order() {
        for w in [
            catalog::conjugated_diag_x2_x(),
            catalog::jacobi_pair(1.0).unwrap(),
            catalog::lognormal_sine(),
        ] {
            let count = if w.support().is_bounded() { 43 } else { 38 };
            let m = matrix_moments(&w, count).unwrap();
            assert!(m.max_hermitian_defect() == 0.0);
        }
    }

    #[test]
    fn json_round_trip_keeps_values() {
        let m = matrix_moments(&catalog::jacobi_pair(1.0).unwrap(), 6).unwrap();
        let back = MomentSequence::from_json(&m.to_json()).unwrap();
        assert_eq!(back.moments(), m.moments());
        assert_eq!(back.provenance(), Provenance::External);
        assert!(!back.has_extended());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn moments_are_conjugation_equivariant(v in proptest::collection::vec(-2.0..2.0f64, 8)) {
            let m = CMat::from_fn(2, 2, |i, j| c64(v[2 * i + j], v[4 + 2 * i + j]));
            prop_assume!(linalg::condition_number(&m) < 1e6);
            let w = catalog::jacobi_pair(0.5).unwrap();
            let direct = matrix_moments(&conjugate_weight(&w, &m).unwrap(), 10).unwrap();
            let pushed = matrix_moments(&w, 10).unwrap().conjugate(&m).unwrap();
            for k in 0..10 {
                let e = norm(&(direct.moment(k) - pushed.moment(k)));
                prop_assert!(e <= 1e-12 * norm(direct.moment(k)));
                prop_assert_eq!(linalg::hermitian_defect(direct.moment(k)), 0.0);
            }
            prop_assert!(linalg::hermitian_extremes(direct.moment(0)).0 > 0.0);
        }
    }
}
