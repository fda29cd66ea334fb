//! The real commutant space `{T : T W(x) = W(x) T*}` and its cross-checks.
//!
//! Four routes lead to (a candidate for) the same space:
//! pointwise samples of the weight, the moments, the monic orthogonal
//! polynomials together with `M_0`, and the three-term recursion
//! coefficients. The first three are real-linear conditions and are solved
//! over 2N² real unknowns; the recursion route is an ordinary (complex)
//! commutant, so its size is reported as a complex dimension.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RankRule};
use crate::moments::{matrix_moments, quadrature_moments, MomentSequence};
use crate::mop::{monic_sequence_with_tol, MopSequence};
use crate::weights::{MatrixWeight, SampleGrid};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Samples,
    Moments,
    Mops,
    Recursion,
    /// Constant matrices commuting with every monic polynomial.
    OrderZero,
}

impl Route {
    /// Complex-linear routes carry bases closed under multiplication by `i`.
    pub fn is_complex(self) -> bool {
        matches!(self, Route::Recursion | Route::OrderZero)
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Samples => "samples",
            Route::Moments => "moments",
            Route::Mops => "mop",
            Route::Recursion => "recursion",
            Route::OrderZero => "order-zero",
        }
    }
}

/// Real basis of a commutant space, orthonormal for `Re tr(X Y*)`.
#[derive(Debug, Clone)]
pub struct CommutantBasis {
    pub size: usize,
    pub basis: Vec<CMat>,
    pub route: Route,
    pub tolerance: f64,
    pub gap: Option<f64>,
    pub rule: RankRule,
    pub singular_values: Vec<f64>,
    /// Largest `‖C(T)‖ / ‖C‖₂` over basis elements, `C` the stacked constraint map.
    pub max_residual: f64,
    /// Positive definite `G` with `T G = G T*` for every element, when known.
    pub metric: Option<CMat>,
}

impl CommutantBasis {
    /// Dimension over ℝ of the returned space.
    pub fn real_dim(&self) -> usize {
        self.basis.len()
    }

    /// Dimension over ℂ for complex routes, over ℝ otherwise.
    pub fn dim(&self) -> usize {
        if self.route.is_complex() {
            self.basis.len() / 2
        } else {
            self.basis.len()
        }
    }

    /// Only scalar multiples of the identity.
    pub fn is_trivial(&self) -> bool {
        self.dim() <= 1
    }

    /// Distance from `t/‖t‖` to the span.
    pub fn span_residual(&self, t: &CMat) -> f64 {
        let n = linalg::norm(t);
        if n == 0.0 {
            return 0.0;
        }
        linalg::span_residual(&t.unscale(n), &self.basis)
    }

    /// `Σ c_i T_i`.
    pub fn combine(&self, coeffs: &[f64]) -> CMat {
        let mut t = CMat::zeros(self.size, self.size);
        for (c, b) in coeffs.iter().zip(&self.basis) {
            t += b.scale(*c);
        }
        t
    }
}

/// Solves the stacked realified system given by `blocks(T)`.
fn solve(
    size: usize,
    route: Route,
    eps: f64,
    metric: Option<CMat>,
    blocks: impl Fn(&CMat) -> Vec<Complex64>,
) -> CommutantBasis {
    let a = linalg::realify(size, &blocks);
    let ns = linalg::nullspace(&a, eps);
    let smax = ns
        .singular_values
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    let max_residual = ns
        .basis
        .iter()
        .map(|v| (&a * v).norm() / smax)
        .fold(0.0, f64::max);
    CommutantBasis {
        size,
        basis: ns
            .basis
            .iter()
            .map(|v| linalg::unrealify(v, size))
            .collect(),
        route,
        tolerance: eps,
        gap: ns.gap,
        rule: ns.rule,
        singular_values: ns.singular_values,
        max_residual,
        metric,
    }
}

fn push_entries(out: &mut Vec<Complex64>, m: &CMat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

/// `T X − X T*` stacked over the given (pre-normalized) Hermitian matrices.
fn star_constraints(mats: &[CMat]) -> impl Fn(&CMat) -> Vec<Complex64> + '_ {
    move |t| {
        let ta = t.adjoint();
        let mut out = Vec::new();
        for x in mats {
            push_entries(&mut out, &(t * x - x * &ta));
        }
        out
    }
}

fn normalized(mats: impl IntoIterator<Item = CMat>) -> Vec<CMat> {
    mats.into_iter()
        .filter_map(|m| {
            let n = linalg::norm(&m);
            (n > 0.0).then(|| m.unscale(n))
        })
        .collect()
}

/// From samples `W(x_i)`: the ground-truth route for closed-form weights.
pub fn commutant_from_samples(
    w: &MatrixWeight,
    grid: &SampleGrid,
    eps: f64,
) -> Result<CommutantBasis> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sample grid is empty".into()));
    }
    let samples = normalized(
        grid.points()
            .iter()
            .map(|&x| w.eval(x))
            .collect::<Result<Vec<_>>>()?,
    );
    let mut metric = CMat::zeros(w.size(), w.size());
    for s in &samples {
        metric += s;
    }
    Ok(solve(
        w.size(),
        Route::Samples,
        eps,
        Some(metric),
        star_constraints(&samples),
    ))
}

/// From `T M_k = M_k T*` for all stored moments. A characterization only on
/// bounded supports; elsewhere it may return a strictly larger space.
pub fn commutant_from_moments(mom: &MomentSequence, eps: f64) -> CommutantBasis {
    let mats = normalized(mom.moments().iter().cloned());
    solve(
        mom.size(),
        Route::Moments,
        eps,
        Some(mom.moment(0).clone()),
        star_constraints(&mats),
    )
}

/// Coefficients `C` of `P_1..P_{n_max}` below the (identity) leading term.
fn polynomial_coefficients(seq: &MopSequence) -> Vec<CMat> {
    let mut out = Vec::new();
    for n in 1..=seq.n_max() {
        for j in 0..n {
            out.push(seq.poly(n).coeff(j));
        }
    }
    normalized(out)
}

fn commuting_constraints(mats: &[CMat]) -> impl Fn(&CMat) -> Vec<Complex64> + '_ {
    move |t| {
        let mut out = Vec::new();
        for c in mats {
            push_entries(&mut out, &(t * c - c * t));
        }
        out
    }
}

/// From `T M_0 = M_0 T*` and `T P_n = P_n T` for every stored polynomial.
pub fn commutant_from_mops(seq: &MopSequence, mom: &MomentSequence, eps: f64) -> CommutantBasis {
    let m0 = normalized([mom.moment(0).clone()]);
    let coeffs = polynomial_coefficients(seq);
    solve(
        seq.size(),
        Route::Mops,
        eps,
        Some(mom.moment(0).clone()),
        move |t| {
            let mut out = star_constraints(&m0)(t);
            out.extend(commuting_constraints(&coeffs)(t));
            out
        },
    )
}

/// Ordinary commutant of the recursion coefficients `{A_n, B_n}`.
pub fn commutant_from_recursion(seq: &MopSequence, eps: f64) -> CommutantBasis {
    let mut mats = Vec::new();
    for n in 0..=seq.n_max() {
        if let Some(a) = seq.a(n) {
            mats.push(a.clone());
        }
        if let Some(b) = seq.b(n) {
            mats.push(b.clone());
        }
    }
    let mats = normalized(mats);
    solve(
        seq.size(),
        Route::Recursion,
        eps,
        None,
        commuting_constraints(&mats),
    )
}

/// Constant matrices commuting with every `P_n`, `n ≤ n_max`.
pub fn order_zero_elements(seq: &MopSequence, eps: f64) -> CommutantBasis {
    let coeffs = polynomial_coefficients(seq);
    solve(
        seq.size(),
        Route::OrderZero,
        eps,
        None,
        commuting_constraints(&coeffs),
    )
}

// ---------------------------------------------------------------------------
// Cross-check

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisConfig {
    pub n_max: usize,
    /// Number of moments `K + 1`.
    pub moment_count: usize,
    pub samples: usize,
    pub eps: f64,
    pub seed: u64,
    /// Use quadrature moments with this many nodes instead of closed forms.
    pub quadrature_nodes: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self::with_degree(20)
    }
}

impl AnalysisConfig {
    /// Defaults for a given maximal polynomial degree: `K = 2 n_max + 2`.
    pub fn with_degree(n_max: usize) -> Self {
        Self {
            n_max,
            moment_count: 2 * n_max + 3,
            samples: 64,
            eps: crate::DEFAULT_EPS,
            seed: 0,
            quadrature_nodes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.moment_count < 2 * self.n_max + 1 {
            return Err(Error::InvalidArgument(format!(
                "K = {} is below 2·n_max = {}",
                self.moment_count.saturating_sub(1),
                2 * self.n_max
            )));
        }
        if self.samples < 8 {
            return Err(Error::InvalidArgument(format!(
                "at least 8 samples are required, got {}",
                self.samples
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1e-3), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Moments and polynomials for a weight, shrinking `K` and `n_max` when the
/// moments overflow (log-normal type densities). Returns the notes produced.
pub fn moments_and_mops(
    w: &MatrixWeight,
    cfg: &AnalysisConfig,
) -> Result<(MomentSequence, MopSequence, Vec<String>)> {
    let mut notes = Vec::new();
    let compute = |count: usize| match cfg.quadrature_nodes {
        Some(nodes) => quadrature_moments(w, count, nodes),
        None => matrix_moments(w, count),
    };
    let mom = match compute(cfg.moment_count) {
        Ok(m) => m,
        Err(Error::Overflow { k }) if k >= 3 => {
            notes.push(format!(
                "moments overflow at k = {k}; using K = {} instead of {}",
                k - 1,
                cfg.moment_count - 1
            ));
            compute(k)?
        }
        Err(e) => return Err(e),
    };
    let n_max = cfg.n_max.min(mom.max_order() / 2);
    if n_max < cfg.n_max {
        notes.push(format!(
            "polynomial degree limited to {n_max} by the available moments"
        ));
    }
    let seq = monic_sequence_with_tol(&mom, n_max, cfg.eps)?;
    Ok((mom, seq, notes))
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteReport {
    pub route: Route,
    /// Real dimension for real-linear routes, complex dimension otherwise.
    pub dim: Option<usize>,
    pub reducible: Option<bool>,
    pub gap: Option<f64>,
    pub singular_values: Vec<f64>,
    pub error: Option<String>,
}

impl RouteReport {
    fn from_basis(b: &CommutantBasis) -> Self {
        Self {
            route: b.route,
            dim: Some(b.dim()),
            reducible: Some(!b.is_trivial()),
            gap: b.gap,
            singular_values: b.singular_values.clone(),
            error: None,
        }
    }

    fn failed(route: Route, e: &Error) -> Self {
        Self {
            route,
            dim: None,
            reducible: None,
            gap: None,
            singular_values: vec![],
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub bounded: bool,
    pub routes: Vec<RouteReport>,
    /// Verdicts and real-linear dimensions agree across the routes that ran.
    pub agree: bool,
    /// Unbounded support and the moment-based routes see a larger commutant
    /// than the samples: the moments do not determine the weight.
    pub indeterminate_support: bool,
    pub notes: Vec<String>,
}

impl ConsistencyReport {
    pub fn route(&self, r: Route) -> Option<&RouteReport> {
        self.routes.iter().find(|x| x.route == r)
    }
}

/// Runs every route and compares them. On bounded supports disagreement is
/// an [`Error::Inconsistent`]; on unbounded supports it is reported as a
/// moment-indeterminacy finding.
pub fn cross_check(w: &MatrixWeight, cfg: &AnalysisConfig) -> Result<ConsistencyReport> {
    let grid = SampleGrid::for_support(w.support(), cfg.samples);
    let bounded = w.support().is_bounded();
    let mut routes = vec![RouteReport::from_basis(&commutant_from_samples(
        w, &grid, cfg.eps,
    )?)];
    let mut notes = Vec::new();
    match moments_and_mops(w, cfg) {
        Ok((mom, seq, n)) => {
            notes.extend(n);
            routes.push(RouteReport::from_basis(&commutant_from_moments(
                &mom, cfg.eps,
            )));
            routes.push(RouteReport::from_basis(&commutant_from_mops(
                &seq, &mom, cfg.eps,
            )));
            routes.push(RouteReport::from_basis(&commutant_from_recursion(
                &seq, cfg.eps,
            )));
        }
        Err(e) => {
            notes.push(format!("moment-based routes unavailable: {e}"));
            for r in [Route::Moments, Route::Mops, Route::Recursion] {
                routes.push(RouteReport::failed(r, &e));
            }
        }
    }
    let samples = &routes[0];
    let ran: Vec<&RouteReport> = routes.iter().filter(|r| r.dim.is_some()).collect();
    let verdicts_agree = ran.iter().all(|r| r.reducible == samples.reducible);
    let dims_agree = ran
        .iter()
        .filter(|r| !r.route.is_complex())
        .all(|r| r.dim == samples.dim);
    let agree = verdicts_agree && dims_agree;
    let indeterminate_support = !bounded && !agree;
    if indeterminate_support {
        notes.push("moment-based routes disagree with the samples: indeterminate support".into());
    }
    if bounded && !agree {
        let summary: Vec<String> = ran
            .iter()
            .map(|r| format!("{}: dim {}", r.route.name(), r.dim.unwrap_or(0)))
            .collect();
        return Err(Error::Inconsistent(format!(
            "commutant routes disagree on bounded support ({})",
            summary.join(", ")
        )));
    }
    Ok(ConsistencyReport {
        bounded,
        routes,
        agree,
        indeterminate_support,
        notes,
    })
}
