//! Monic matrix orthogonal polynomials and their three-term recursion.
//!
//! The inner product is `(P, Q) = Σ P_i M_{i+j} Q_j*`. Polynomials are built
//! degree by degree with block Gram–Schmidt against all previous ones, at
//! extended precision; a per-degree cancellation estimate decides whether the
//! precision of the moment data supports the result.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hp::{self, HpMatrix};
use crate::linalg::{self, CMat};
use crate::moments::MomentSequence;
use crate::weights::{json, MatrixPolynomial};
use crate::DEFAULT_EPS;

/// Monic polynomials `P_0..P_{n_max}` with norms and recursion coefficients.
#[derive(Debug, Clone)]
pub struct MopSequence {
    polys: Vec<MatrixPolynomial>,
    norms: Vec<CMat>,
    /// `A_n` for `n = 1..=n_max`, stored at index `n − 1`.
    a: Vec<CMat>,
    /// `B_n` for `n = 0..n_max`, stored at index `n`.
    b: Vec<CMat>,
    extended: Vec<Vec<HpMatrix>>,
    conditioning: Vec<f64>,
}

impl MopSequence {
    pub fn size(&self) -> usize {
        self.norms[0].nrows()
    }

    pub fn n_max(&self) -> usize {
        self.polys.len() - 1
    }

    pub fn poly(&self, n: usize) -> &MatrixPolynomial {
        &self.polys[n]
    }

    pub fn polys(&self) -> &[MatrixPolynomial] {
        &self.polys
    }

    /// Extended-precision coefficients of `P_n`.
    pub fn extended_poly(&self, n: usize) -> &[HpMatrix] {
        &self.extended[n]
    }

    /// `S_n = (P_n, P_n)`.
    pub fn norm(&self, n: usize) -> &CMat {
        &self.norms[n]
    }

    /// `A_n = S_n S_{n−1}⁻¹`, defined for `1 ≤ n ≤ n_max`.
    pub fn a(&self, n: usize) -> Option<&CMat> {
        n.checked_sub(1).and_then(|i| self.a.get(i))
    }

    /// `B_n`, defined for `0 ≤ n < n_max`.
    pub fn b(&self, n: usize) -> Option<&CMat> {
        self.b.get(n)
    }

    /// Cancellation estimate `Σ‖P_i‖‖M_{i+j}‖‖P_j‖ / ‖S_n‖` per degree.
    pub fn conditioning(&self) -> &[f64] {
        &self.conditioning
    }

    /// Sequence truncated to degree `n_max`.
    pub fn truncated(&self, n_max: usize) -> Self {
        let k = n_max.min(self.n_max());
        Self {
            polys: self.polys[..=k].to_vec(),
            norms: self.norms[..=k].to_vec(),
            a: self.a[..k].to_vec(),
            b: self.b[..k].to_vec(),
            extended: self.extended[..=k].to_vec(),
            conditioning: self.conditioning[..=k].to_vec(),
        }
    }
}

/// `Σ_i Σ_j P_i M_{i+j} Q_j*` at extended precision.
pub(crate) fn inner_product_extended(
    p: &[HpMatrix],
    q: &[HpMatrix],
    moments: &[HpMatrix],
) -> HpMatrix {
    let mut acc = HpMatrix::zeros(p[0].rows, q[0].rows);
    for (j, qj) in q.iter().enumerate() {
        let qa = qj.adjoint();
        for (i, pi) in p.iter().enumerate() {
            acc = acc.add(&pi.mul(&moments[i + j]).mul(&qa));
        }
    }
    acc
}

/// `(P, Q)` computed from the moments.
pub fn inner_product(
    p: &MatrixPolynomial,
    q: &MatrixPolynomial,
    mom: &MomentSequence,
) -> Result<CMat> {
    let required = p.degree() + q.degree();
    if required > mom.max_order() {
        return Err(Error::OutOfRange {
            required,
            available: mom.max_order(),
        });
    }
    if p.cols() != mom.size() || q.cols() != mom.size() {
        return Err(Error::InvalidArgument(format!(
            "polynomials with {} and {} columns cannot pair with moments of size {}",
            p.cols(),
            q.cols(),
            mom.size()
        )));
    }
    let ext = mom.extended();
    let conv = |m: &MatrixPolynomial| {
        m.coeffs()
            .iter()
            .map(HpMatrix::from_cmat)
            .collect::<Vec<_>>()
    };
    Ok(inner_product_extended(&conv(p), &conv(q), &ext).to_cmat())
}

fn shift(p: &[HpMatrix]) -> Vec<HpMatrix> {
    let mut out = vec![HpMatrix::zeros(p[0].rows, p[0].cols)];
    out.extend(p.iter().cloned());
    out
}

/// Monic orthogonal polynomials up to degree `n_max`, default tolerance.
pub fn monic_sequence(mom: &MomentSequence, n_max: usize) -> Result<MopSequence> {
    monic_sequence_with_tol(mom, n_max, DEFAULT_EPS)
}

/// Monic orthogonal polynomials up to degree `n_max`.
///
/// Fails with a conditioning error at the first degree whose cancellation
/// estimate times the relative accuracy of the moments exceeds `eps`.
pub fn monic_sequence_with_tol(
    mom: &MomentSequence,
    n_max: usize,
    eps: f64,
) -> Result<MopSequence> {
    if 2 * n_max > mom.max_order() {
        return Err(Error::OutOfRange {
            required: 2 * n_max,
            available: mom.max_order(),
        });
    }
    let n = mom.size();
    let ext = mom.extended();
    let moment_norms: Vec<f64> = mom.moments().iter().map(linalg::norm).collect();
    let u = mom.data_roundoff();

    // g[k][i] = Σ_j M_{i+j} P_{k,j}*, so that (Q, P_k) = Σ_i Q_i g[k][i].
    let apply = |pk: &[HpMatrix]| -> Vec<HpMatrix> {
        let adj: Vec<HpMatrix> = pk.iter().map(HpMatrix::adjoint).collect();
        (0..=n_max)
            .map(|i| {
                let mut acc = HpMatrix::zeros(n, n);
                for (j, pj) in adj.iter().enumerate() {
                    acc = acc.add(&ext[i + j].mul(pj));
                }
                acc
            })
            .collect()
    };
    let pair = |q: &[HpMatrix], g: &[HpMatrix]| -> HpMatrix {
        let mut acc = HpMatrix::zeros(n, n);
        for (i, qi) in q.iter().enumerate() {
            acc = acc.add(&qi.mul(&g[i]));
        }
        acc
    };
    let half = hp::float(0.5);
    let herm = |m: &HpMatrix| m.add(&m.adjoint()).scale(&half);

    let mut polys_hp: Vec<Vec<HpMatrix>> = vec![vec![HpMatrix::identity(n)]];
    let mut gs: Vec<Vec<HpMatrix>> = vec![apply(&polys_hp[0])];
    let mut norms_hp: Vec<HpMatrix> = vec![herm(&ext[0])];
    let mut inv_norms: Vec<HpMatrix> = Vec::new();
    let mut conditioning = vec![1.0];

    let check_norm = |s: &CMat, degree: usize| -> Result<()> {
        let (lo, hi) = linalg::hermitian_extremes(s);
        if !(hi > 0.0) || lo <= 1e-14 * hi {
            return Err(Error::Degenerate(format!(
                "norm matrix S_{degree} is not positive definite (eigenvalues {lo:e} .. {hi:e})"
            )));
        }
        Ok(())
    };
    check_norm(&norms_hp[0].to_cmat(), 0)?;
    inv_norms.push(
        norms_hp[0]
            .inverse()
            .ok_or_else(|| Error::Degenerate("M_0 is singular".into()))?,
    );

    for deg in 1..=n_max {
        let mut q = shift(&polys_hp[deg - 1]);
        for k in 0..deg {
            let c = pair(&q, &gs[k]).mul(&inv_norms[k]);
            for (i, pki) in polys_hp[k].iter().enumerate() {
                q[i] = q[i].sub(&c.mul(pki));
            }
        }
        let g = apply(&q);
        let s = herm(&pair(&q, &g));
        let s64 = s.to_cmat();

        let coeff_norms: Vec<f64> = q.iter().map(HpMatrix::norm_f64).collect();
        let mut bound = 0.0;
        for (i, ni) in coeff_norms.iter().enumerate() {
            for (j, nj) in coeff_norms.iter().enumerate() {
                bound += ni * moment_norms[i + j] * nj;
            }
        }
        let kappa = bound / linalg::norm(&s64);
        if kappa * u > eps {
            return Err(Error::Conditioning {
                degree: deg,
                estimate: kappa,
            });
        }
        check_norm(&s64, deg)?;
        conditioning.push(kappa);
        inv_norms.push(
            s.inverse()
                .ok_or_else(|| Error::Degenerate(format!("S_{deg} is singular")))?,
        );
        polys_hp.push(q);
        gs.push(g);
        norms_hp.push(s);
    }

    let a: Vec<CMat> = (1..=n_max)
        .map(|k| norms_hp[k].mul(&inv_norms[k - 1]).to_cmat())
        .collect();
    let b: Vec<CMat> = (0..n_max)
        .map(|k| {
            let sub_k = if k == 0 {
                HpMatrix::zeros(n, n)
            } else {
                polys_hp[k][k - 1].clone()
            };
            sub_k.sub(&polys_hp[k + 1][k]).to_cmat()
        })
        .collect();
    let polys = polys_hp
        .iter()
        .map(|p| MatrixPolynomial::new(p.iter().map(HpMatrix::to_cmat).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MopSequence {
        polys,
        norms: norms_hp.iter().map(HpMatrix::to_cmat).collect(),
        a,
        b,
        extended: polys_hp,
        conditioning,
    })
}

/// Recursion coefficients with the residual of `A_n P_{n−1} + B_n P_n + P_{n+1} = x P_n`.
#[derive(Debug, Clone)]
pub struct Recursion {
    /// `A_1..A_{n_max−1}`.
    pub a: Vec<CMat>,
    /// `B_0..B_{n_max−1}`.
    pub b: Vec<CMat>,
    /// Largest coefficientwise residual relative to `‖x P_n‖`.
    pub residual: f64,
}

pub fn recursion_coefficients(seq: &MopSequence) -> Result<Recursion> {
    let n_max = seq.n_max();
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "recursion needs n_max ≥ 2, got {n_max}"
        )));
    }
    let mut residual: f64 = 0.0;
    for k in 0..n_max {
        let lhs_b = HpMatrix::from_cmat(seq.b(k).expect("B_k stored"));
        let x_pk = shift(&seq.extended[k]);
        let mut diff: Vec<HpMatrix> = seq.extended[k + 1].clone();
        for (i, c) in seq.extended[k].iter().enumerate() {
            diff[i] = diff[i].add(&lhs_b.mul(c));
        }
        if k >= 1 {
            let a = HpMatrix::from_cmat(seq.a(k).expect("A_k stored"));
            for (i, c) in seq.extended[k - 1].iter().enumerate() {
                diff[i] = diff[i].add(&a.mul(c));
            }
        }
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (d, xp) in diff.iter().zip(&x_pk) {
            num = num.max(d.sub(xp).norm_f64());
            den = den.max(xp.norm_f64());
        }
        residual = residual.max(num / den);
    }
    Ok(Recursion {
        a: seq.a[..n_max - 1].to_vec(),
        b: seq.b.clone(),
        residual,
    })
}

/// `P_n(x)` by Horner's rule at extended precision.
pub fn eval_mop(seq: &MopSequence, n: usize, x: f64) -> Result<CMat> {
    if n > seq.n_max() {
        return Err(Error::OutOfRange {
            required: n,
            available: seq.n_max(),
        });
    }
    let xf = hp::float(x);
    let coeffs = &seq.extended[n];
    let mut acc = coeffs.last().unwrap().clone();
    for c in coeffs.iter().rev().skip(1) {
        acc = acc.scale(&xf).add(c);
    }
    Ok(acc.to_cmat())
}

/// Largest `‖(P_n, P_m)‖ / sqrt(‖S_n‖‖S_m‖)` over `n ≠ m`.
pub fn orthogonality_residual(seq: &MopSequence, mom: &MomentSequence) -> f64 {
    let ext = mom.extended();
    let mut worst: f64 = 0.0;
    for n in 0..=seq.n_max() {
        for m in 0..n {
            if n + m > mom.max_order() {
                continue;
            }
            let v = inner_product_extended(&seq.extended[n], &seq.extended[m], &ext).norm_f64();
            worst =
                worst.max(v / (linalg::norm(&seq.norms[n]) * linalg::norm(&seq.norms[m])).sqrt());
        }
    }
    worst
}

/// `(max_n ‖S_n − A_n S_{n−1}‖/‖S_n‖, max_n ‖B_n S_n − (B_n S_n)*‖/‖S_n‖)`.
pub fn recursion_invariants(seq: &MopSequence) -> (f64, f64) {
    let mut norm_res: f64 = 0.0;
    let mut herm_res: f64 = 0.0;
    for n in 0..=seq.n_max() {
        let sn = &seq.norms[n];
        let scale = linalg::norm(sn);
        if let Some(a) = seq.a(n) {
            norm_res = norm_res.max(linalg::norm(&(sn - a * &seq.norms[n - 1])) / scale);
        }
        if let Some(b) = seq.b(n) {
            herm_res = herm_res.max(linalg::hermitian_defect(&(b * sn)) / scale);
        }
    }
    (norm_res, herm_res)
}

#[derive(Serialize)]
struct MopJson {
    size: usize,
    n_max: usize,
    polynomials: Vec<Vec<json::MatrixJson>>,
    norms: Vec<json::MatrixJson>,
    a: Vec<json::MatrixJson>,
    b: Vec<json::MatrixJson>,
    conditioning: Vec<f64>,
}

impl MopSequence {
    pub fn to_json(&self) -> String {
        let m = |v: &[CMat]| v.iter().map(json::matrix_to_json).collect::<Vec<_>>();
        serde_json::to_string_pretty(&MopJson {
            size: self.size(),
            n_max: self.n_max(),
            polynomials: self.polys.iter().map(|p| m(p.coeffs())).collect(),
            norms: m(&self.norms),
            a: m(&self.a),
            b: m(&self.b),
            conditioning: self.conditioning.clone(),
        })
        .expect("sequences always serialize")
    }
}
