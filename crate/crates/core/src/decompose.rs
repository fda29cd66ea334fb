//! Explicit reductions: from a nontrivial commutant to a similarity `M` with
//! `M W M*` block diagonal and irreducible blocks.
//!
//! An element `T` of the commutant satisfies `T G = G T*` for a positive
//! definite metric `G` (the sum of normalized samples, or `M_0`), so
//! `G^{−1/2} T G^{1/2}` is Hermitian. Its eigenvectors give `M = U* G^{−1/2}`,
//! and every eigenvalue cluster of `T` becomes one diagonal block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commutant::{
    commutant_from_moments, commutant_from_samples, moments_and_mops, AnalysisConfig,
    CommutantBasis, Route,
};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};
use crate::moments::{matrix_moments, MomentSequence};
use crate::weights::{json as wjson, MatrixWeight, SampleGrid};

/// Random candidates drawn when looking for a splitting element.
pub const SPLIT_CANDIDATES: usize = 16;
/// Random restarts of the unitary search in [`equivalence_test`].
pub const UNITARY_RETRIES: usize = 8;

// ---------------------------------------------------------------------------
// Normalization

/// Moments of `M_0^{−1/2} W M_0^{−1/2}` together with the transform `M_0^{−1/2}`.
pub fn normalize(mom: &MomentSequence) -> Result<(MomentSequence, CMat)> {
    let (_, inv_sqrt) = linalg::pd_sqrt_pair(mom.moment(0))
        .map_err(|e| Error::Degenerate(format!("M_0 cannot be normalized: {e}")))?;
    Ok((mom.conjugate(&inv_sqrt)?, inv_sqrt))
}

// ---------------------------------------------------------------------------
// Splitting elements

/// Groups sorted values whenever consecutive gaps are at most `tol`.
fn clusters(sorted: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        match out.last_mut() {
            Some(c) if v - sorted[*c.last().expect("nonempty")] <= tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Numerical rank of the Chebyshev–Vandermonde matrix of the eigenvalues,
/// i.e. the degree of the minimal polynomial of a diagonalizable matrix.
fn minimal_polynomial_degree(values: &[f64], eps: f64) -> usize {
    let n = values.len();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if !(hi > lo) {
        return 1;
    }
    let v = nalgebra::DMatrix::from_fn(n, n, |i, k| {
        let mu = (2.0 * values[i] - hi - lo) / (hi - lo);
        (k as f64 * mu.clamp(-1.0, 1.0).acos()).cos()
    });
    let s = v.singular_values();
    let smax = s.max();
    s.iter().filter(|&&x| x > eps * smax).count()
}

/// A commutant element with the largest number of distinct eigenvalues found.
#[derive(Debug, Clone)]
pub struct SplitElement {
    pub t: CMat,
    /// Eigenvalues of `t`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Indices into `eigenvalues`, one group per distinct eigenvalue.
    pub clusters: Vec<Vec<usize>>,
    /// Degree of the minimal polynomial, from the Vandermonde rank.
    pub minimal_polynomial_degree: usize,
    /// Smallest gap between neighbouring clusters relative to the spread.
    pub relative_gap: f64,
}

impl SplitElement {
    pub fn distinct(&self) -> usize {
        self.clusters.len()
    }

    fn trivial(n: usize) -> Self {
        Self {
            t: linalg::identity(n),
            eigenvalues: vec![1.0; n],
            clusters: vec![(0..n).collect()],
            minimal_polynomial_degree: 1,
            relative_gap: 0.0,
        }
    }
}

/// Hermitian representative `G^{−1/2} T G^{1/2}` and the factor `G^{−1/2}`.
fn hermitian_frame(t: &CMat, metric: &CMat) -> Result<(CMat, CMat)> {
    let g = metric.unscale(linalg::norm(metric));
    let (sqrt, inv_sqrt) = linalg::pd_sqrt_pair(&g)?;
    Ok((linalg::hermitian_part(&(&inv_sqrt * t * sqrt)), inv_sqrt))
}

fn real_spectrum(t: &CMat, metric: Option<&CMat>) -> Vec<f64> {
    let mut v: Vec<f64> = match metric.map(|g| hermitian_frame(t, g)) {
        Some(Ok((h, _))) => linalg::hermitian_eigen(&h).values,
        _ => linalg::general_eigen(t).0.iter().map(|z| z.re).collect(),
    };
    v.sort_by(f64::total_cmp);
    v
}

fn analyse_candidate(t: CMat, metric: Option<&CMat>, eps: f64) -> SplitElement {
    let eigenvalues = real_spectrum(&t, metric);
    let spread = eigenvalues.last().unwrap_or(&0.0) - eigenvalues.first().unwrap_or(&0.0);
    let clusters = clusters(&eigenvalues, eps * spread);
    let relative_gap = clusters
        .windows(2)
        .map(|w| eigenvalues[w[1][0]] - eigenvalues[*w[0].last().expect("nonempty")])
        .fold(f64::INFINITY, f64::min)
        / spread.max(f64::MIN_POSITIVE);
    let minimal_polynomial_degree = minimal_polynomial_degree(&eigenvalues, eps);
    SplitElement {
        t,
        eigenvalues,
        clusters,
        minimal_polynomial_degree,
        relative_gap: if relative_gap.is_finite() {
            relative_gap
        } else {
            0.0
        },
    }
}

/// Seeded random elements of the span with the most eigenvalue clusters.
pub fn max_split_element(basis: &CommutantBasis, seed: u64) -> SplitElement {
    max_split_element_with(basis, seed, SPLIT_CANDIDATES)
}

/// As [`max_split_element`] with a chosen number of candidates.
pub fn max_split_element_with(
    basis: &CommutantBasis,
    seed: u64,
    candidates: usize,
) -> SplitElement {
    if basis.real_dim() <= 1 {
        return SplitElement::trivial(basis.size);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SplitElement> = None;
    for _ in 0..candidates.max(1) {
        let coeffs: Vec<f64> = (0..basis.real_dim())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let t = basis.combine(&coeffs);
        let t = t.unscale(linalg::norm(&t).max(f64::MIN_POSITIVE));
        let cand = analyse_candidate(t, basis.metric.as_ref(), basis.tolerance);
        let better = match &best {
            None => true,
            Some(b) => (cand.distinct(), cand.relative_gap) > (b.distinct(), b.relative_gap),
        };
        if better {
            best = Some(cand);
        }
    }
    best.expect("at least one candidate")
}

// ---------------------------------------------------------------------------
// Reduction

/// What a reduction starts from.
#[derive(Debug, Clone, Copy)]
pub enum WeightSource<'a> {
    Closed(&'a MatrixWeight),
    Moments(&'a MomentSequence),
}

/// One diagonal block of a reduction.
#[derive(Debug, Clone)]
pub enum BlockWeight {
    Closed(MatrixWeight),
    Moments(MomentSequence),
}

impl BlockWeight {
    pub fn size(&self) -> usize {
        match self {
            BlockWeight::Closed(w) => w.size(),
            BlockWeight::Moments(m) => m.size(),
        }
    }

    /// `M_0..M_{count−1}` of the block (fewer if only fewer are stored).
    pub fn moments(&self, count: usize) -> Result<MomentSequence> {
        match self {
            BlockWeight::Closed(w) => matrix_moments(w, count),
            BlockWeight::Moments(m) => Ok(m.truncated(count)),
        }
    }

    fn source(&self) -> WeightSource<'_> {
        match self {
            BlockWeight::Closed(w) => WeightSource::Closed(w),
            BlockWeight::Moments(m) => WeightSource::Moments(m),
        }
    }

    fn to_value(&self) -> Value {
        let text = match self {
            BlockWeight::Closed(w) => w.to_json(),
            BlockWeight::Moments(m) => m.to_json(),
        };
        serde_json::from_str(&text).expect("own JSON parses")
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionReport {
    /// Nonsingular `M` with `M W M*` block diagonal.
    pub similarity: CMat,
    pub block_sizes: Vec<usize>,
    pub blocks: Vec<BlockWeight>,
    /// Max over the grid (or the moments) of `‖off-blocks of M W M*‖ / ‖M W M*‖`.
    pub off_block_residual: f64,
    pub irreducible: Vec<bool>,
    /// Splitting element of the top-level commutant, when it was nontrivial.
    pub split: Option<SplitElement>,
    /// Real dimension of the top-level commutant.
    pub commutant_dim: usize,
    pub route: Route,
    pub eps: f64,
    pub seed: u64,
}

impl DecompositionReport {
    /// Number of blocks `d`.
    pub fn d(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn is_reducible(&self) -> bool {
        self.d() > 1
    }

    pub fn to_json(&self) -> String {
        let split = self.split.as_ref().map(|s| {
            json!({
                "element": wjson::matrix_to_json(&s.t),
                "eigenvalues": s.eigenvalues,
                "distinct": s.distinct(),
                "minimal_polynomial_degree": s.minimal_polynomial_degree,
                "relative_gap": s.relative_gap,
            })
        });
        let v = json!({
            "d": self.d(),
            "similarity": wjson::matrix_to_json(&self.similarity),
            "block_sizes": self.block_sizes,
            "irreducible": self.irreducible,
            "off_block_residual": self.off_block_residual,
            "commutant_dim": self.commutant_dim,
            "route": self.route,
            "eps": self.eps,
            "seed": self.seed,
            "split": split,
            "blocks": self.blocks.iter().map(BlockWeight::to_value).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&v).expect("reports serialize")
    }
}

fn ground_truth_commutant(src: WeightSource<'_>, cfg: &AnalysisConfig) -> Result<CommutantBasis> {
    match src {
        WeightSource::Closed(w) => commutant_from_samples(
            w,
            &SampleGrid::for_support(w.support(), cfg.samples),
            cfg.eps,
        ),
        WeightSource::Moments(m) => Ok(commutant_from_moments(m, cfg.eps)),
    }
}

fn size_of(src: WeightSource<'_>) -> usize {
    match src {
        WeightSource::Closed(w) => w.size(),
        WeightSource::Moments(m) => m.size(),
    }
}

fn owned(src: WeightSource<'_>) -> BlockWeight {
    match src {
        WeightSource::Closed(w) => BlockWeight::Closed(w.clone()),
        WeightSource::Moments(m) => BlockWeight::Moments(m.clone()),
    }
}

/// Largest relative off-block mass of `M X M*` over the data of the source.
fn off_block_residual(
    src: WeightSource<'_>,
    m: &CMat,
    sizes: &[usize],
    cfg: &AnalysisConfig,
) -> Result<f64> {
    let data: Vec<CMat> = match src {
        WeightSource::Closed(w) => SampleGrid::for_support(w.support(), cfg.samples)
            .points()
            .iter()
            .map(|&x| w.eval(x))
            .collect::<Result<_>>()?,
        WeightSource::Moments(mom) => mom.moments().to_vec(),
    };
    let ma = m.adjoint();
    Ok(data
        .iter()
        .map(|x| {
            let y = m * x * &ma;
            let n = linalg::norm(&y);
            if n > 0.0 {
                linalg::off_block_norm(&y, sizes) / n
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max))
}

struct Reduction {
    m: CMat,
    sizes: Vec<usize>,
    blocks: Vec<BlockWeight>,
    irreducible: Vec<bool>,
}

fn reduce_rec(
    src: WeightSource<'_>,
    cfg: &AnalysisConfig,
    top: &mut Option<(CommutantBasis, SplitElement)>,
) -> Result<Reduction> {
    let n = size_of(src);
    let trivial = |irreducible: bool| Reduction {
        m: linalg::identity(n),
        sizes: vec![n],
        blocks: vec![owned(src)],
        irreducible: vec![irreducible],
    };
    if n == 1 {
        return Ok(trivial(true));
    }
    let basis = ground_truth_commutant(src, cfg)?;
    let first = top.is_none();
    if basis.real_dim() <= 1 {
        if first {
            *top = Some((basis, SplitElement::trivial(n)));
        }
        return Ok(trivial(true));
    }
    let split = max_split_element(&basis, cfg.seed);
    let metric = basis
        .metric
        .clone()
        .expect("real-linear routes carry a metric");
    if first {
        *top = Some((basis, split.clone()));
    }
    if split.distinct() < 2 {
        return Err(Error::SplitFailure {
            residual: f64::NAN,
            gap: split.relative_gap,
        });
    }
    let (h, inv_sqrt) = hermitian_frame(&split.t, &metric)?;
    let eig = linalg::hermitian_eigen(&h);
    let frame = eig.vectors.adjoint() * inv_sqrt;
    // Eigenvalues of `h` are ascending, so clusters are contiguous row ranges.
    let spread = eig.values[n - 1] - eig.values[0];
    let groups = clusters(&eig.values, cfg.eps * spread);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let residual = off_block_residual(src, &frame, &sizes, cfg)?;
    if residual > cfg.eps {
        return Err(Error::SplitFailure {
            residual,
            gap: split.relative_gap,
        });
    }

    let mut row = 0;
    let mut parts = Vec::new();
    for &s in &sizes {
        let rows = frame.rows(row, s).into_owned();
        row += s;
        let block = match src {
            WeightSource::Closed(w) => BlockWeight::Closed(w.compress(&rows)?),
            WeightSource::Moments(m) => BlockWeight::Moments(m.conjugate(&rows)?),
        };
        parts.push((rows, reduce_rec(block.source(), cfg, top)?));
    }
    let mut m = CMat::zeros(0, n);
    let mut out = Reduction {
        m: CMat::zeros(0, 0),
        sizes: vec![],
        blocks: vec![],
        irreducible: vec![],
    };
    for (rows, sub) in parts {
        let composed = &sub.m * rows;
        let r = m.nrows();
        m = m.insert_rows(r, composed.nrows(), c64(0.0, 0.0));
        m.rows_mut(r, composed.nrows()).copy_from(&composed);
        out.sizes.extend(sub.sizes);
        out.blocks.extend(sub.blocks);
        out.irreducible.extend(sub.irreducible);
    }
    out.m = m;
    Ok(out)
}

/// Fully reduces a weight (closed form or moments) into irreducible blocks.
///
/// Closed forms use the sample route, moment sequences the moment route; the
/// latter is only a characterization on bounded supports.
pub fn reduce_weight(src: WeightSource<'_>, cfg: &AnalysisConfig) -> Result<DecompositionReport> {
    cfg.validate()?;
    let mut top = None;
    let r = reduce_rec(src, cfg, &mut top)?;
    let off_block_residual = off_block_residual(src, &r.m, &r.sizes, cfg)?;
    if off_block_residual > cfg.eps {
        return Err(Error::SplitFailure {
            residual: off_block_residual,
            gap: f64::NAN,
        });
    }
    let route = match src {
        WeightSource::Closed(_) => Route::Samples,
        WeightSource::Moments(_) => Route::Moments,
    };
    let (commutant_dim, split) = match top {
        Some((b, s)) => (b.real_dim(), (b.real_dim() > 1).then_some(s)),
        None => (1, None),
    };
    Ok(DecompositionReport {
        similarity: r.m,
        block_sizes: r.sizes,
        blocks: r.blocks,
        off_block_residual,
        irreducible: r.irreducible,
        split,
        commutant_dim,
        route,
        eps: cfg.eps,
        seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Certificates

/// `P ≻ 0` with `W(x) P W(y) = W(y) P W(x)` on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarReductionCertificate {
    #[serde(serialize_with = "ser_matrix")]
    pub p: CMat,
    /// `M` with `W = M Λ M*`, `Λ` diagonal on the grid.
    #[serde(serialize_with = "ser_matrix")]
    pub diagonalizer: CMat,
    pub reference_point: f64,
    /// Max over grid pairs of `‖W(x)PW(y) − W(y)PW(x)‖ / (‖W(x)‖‖P‖‖W(y)‖)`.
    pub residual: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    wjson::matrix_to_json(m).serialize(s)
}

fn grid_samples(w: &MatrixWeight, grid: &SampleGrid) -> Result<Vec<CMat>> {
    grid.points().iter().map(|&x| w.eval_closure(x)).collect()
}

fn relative_pair_residual(samples: &[CMat], f: impl Fn(&CMat, &CMat) -> CMat, scale: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            let denom = linalg::norm(a) * linalg::norm(b) * scale;
            if denom > 0.0 {
                worst = worst.max(linalg::norm(&f(a, b)) / denom);
            }
        }
    }
    worst
}

/// Whether `W` is equivalent to a diagonal weight, with a certificate.
///
/// The reference point `x0` defaults to the grid point where `W` is best
/// conditioned; finite endpoints of the support are admissible.
pub fn is_scalar_reducible(
    w: &MatrixWeight,
    grid: &SampleGrid,
    eps: f64,
    x0: Option<f64>,
) -> Result<Option<ScalarReductionCertificate>> {
    let samples = grid_samples(w, grid)?;
    let x0 = match x0 {
        Some(x) => x,
        None => {
            let score = |m: &CMat| {
                let (lo, hi) = linalg::hermitian_extremes(m);
                if hi > 0.0 {
                    lo / hi
                } else {
                    f64::NEG_INFINITY
                }
            };
            let best = (0..samples.len())
                .max_by(|&i, &j| score(&samples[i]).total_cmp(&score(&samples[j])))
                .ok_or_else(|| Error::InvalidArgument("sample grid is empty".into()))?;
            grid.points()[best]
        }
    };
    let w0 = w.eval_closure(x0)?;
    let (a, a_inv) = linalg::pd_sqrt_pair(&w0)
        .map_err(|e| Error::Degenerate(format!("W({x0}) is not positive definite: {e}")))?;
    let reduced: Vec<CMat> = samples
        .iter()
        .map(|s| linalg::hermitian_part(&(&a_inv * s * &a_inv)))
        .collect();
    let commuting = relative_pair_residual(&reduced, linalg::commutator, 1.0);
    if commuting > eps {
        return Ok(None);
    }
    // A generic combination of commuting Hermitian matrices diagonalizes all of them.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut combo = CMat::zeros(w.size(), w.size());
    for r in &reduced {
        combo += r
            .unscale(linalg::norm(r).max(f64::MIN_POSITIVE))
            .scale(rng.random_range(0.5..1.5));
    }
    let u = linalg::hermitian_eigen(&combo).vectors;
    let diagonalizer = &a * u;
    let p = linalg::hermitian_part(
        &linalg::inverse(&(&diagonalizer * diagonalizer.adjoint()))
            .ok_or_else(|| Error::Degenerate("diagonalizer is singular".into()))?,
    );
    let p_norm = linalg::norm(&p);
    let residual = relative_pair_residual(&samples, |x, y| x * &p * y - y * &p * x, p_norm);
    if residual > eps || linalg::hermitian_extremes(&p).0 <= 0.0 {
        return Ok(None);
    }
    Ok(Some(ScalarReductionCertificate {
        p,
        diagonalizer,
        reference_point: x0,
        residual,
    }))
}

/// `W(x) W(y) = W(y) W(x)` on all grid pairs, relative to `‖W(x)‖‖W(y)‖`.
pub fn is_unitarily_diagonalizable(w: &MatrixWeight, grid: &SampleGrid, eps: f64) -> Result<bool> {
    let samples = grid_samples(w, grid)?;
    Ok(relative_pair_residual(&samples, linalg::commutator, 1.0) <= eps)
}

// ---------------------------------------------------------------------------
// Equivalence

/// Witness `M` with `M M_k(1) M* = M_k(2)`.
#[derive(Debug, Clone)]
pub struct Equivalence {
    pub matrix: CMat,
    /// The unitary intertwiner between the normalized sequences.
    pub unitary: CMat,
    /// Max over k of `‖M M_k(1) M* − M_k(2)‖ / ‖M_k(2)‖`.
    pub residual: f64,
    /// Moments do not determine the weights (unbounded support).
    pub advisory: bool,
}

/// Relative tolerance on the moment residual of an equivalence witness.
pub const WITNESS_TOLERANCE: f64 = 1e-8;

fn moment_residual(m: &CMat, a: &MomentSequence, b: &MomentSequence, count: usize) -> f64 {
    let ma = m.adjoint();
    (0..count)
        .map(|k| {
            let target = b.moment(k);
            let scale =
                linalg::norm(target).max(linalg::norm(a.moment(k)) * linalg::norm(m).powi(2));
            if scale > 0.0 {
                linalg::norm(&(m * a.moment(k) * &ma - target)) / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn polar_factor(x: &CMat) -> Option<CMat> {
    let svd = x.clone().svd(true, true);
    if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
        return None;
    }
    Some(svd.u? * svd.v_t?)
}

/// Searches for `M` with `M M_k(1) M* = M_k(2)` for all stored `k`.
///
/// After normalizing both sequences to `M_0 = I` any such `M` is unitary and
/// intertwines the normalized moments; a generic intertwiner is projected onto
/// the unitaries by its polar factor.
pub fn equivalence_test(
    m1: &MomentSequence,
    m2: &MomentSequence,
    eps: f64,
) -> Result<Option<Equivalence>> {
    if m1.size() != m2.size() {
        return Err(Error::InvalidArgument(format!(
            "sizes {} and {} differ",
            m1.size(),
            m2.size()
        )));
    }
    let n = m1.size();
    let count = m1.count().min(m2.count());
    let (n1, t1) = normalize(m1)?;
    let (n2, _) = normalize(m2)?;
    let pairs: Vec<(CMat, CMat)> = (0..count)
        .map(|k| {
            let (a, b) = (n1.moment(k), n2.moment(k));
            let s = linalg::norm(a).max(linalg::norm(b)).max(f64::MIN_POSITIVE);
            (a.unscale(s), b.unscale(s))
        })
        .collect();
    let system = linalg::realify(n, |u: &CMat| {
        let mut out = Vec::new();
        for (a, b) in &pairs {
            out.extend((u * a - b * u).transpose().iter().copied());
        }
        out
    });
    // Every constraint block has unit scale.
    let ns = linalg::nullspace_with_scale(&system, eps, 1.0);
    if ns.basis.is_empty() {
        return Ok(None);
    }
    let basis: Vec<CMat> = ns.basis.iter().map(|v| linalg::unrealify(v, n)).collect();
    let (sqrt2, _) = linalg::pd_sqrt_pair(m2.moment(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..UNITARY_RETRIES {
        let mut x = CMat::zeros(n, n);
        for b in &basis {
            x += b.scale(rng.random_range(-1.0..=1.0));
        }
        let Some(u) = polar_factor(&x) else { continue };
        let m = &sqrt2 * &u * &t1;
        let residual = moment_residual(&m, m1, m2, count);
        if residual <= WITNESS_TOLERANCE {
            return Ok(Some(Equivalence {
                matrix: m,
                unitary: u,
                residual,
                advisory: !m1.is_bounded(),
            }));
        }
    }
    Ok(None)
}

/// Pairing of the blocks of two reductions.
#[derive(Debug, Clone)]
pub struct BlockMatching {
    /// Block `i` of the first report corresponds to block `permutation[i]` of the second.
    pub permutation: Vec<usize>,
    pub witnesses: Vec<Equivalence>,
}

/// Matches the blocks of two full reductions up to equivalence.
pub fn match_decompositions(
    r1: &DecompositionReport,
    r2: &DecompositionReport,
    cfg: &AnalysisConfig,
) -> Result<Option<BlockMatching>> {
    let d = r1.d();
    if d != r2.d() {
        return Ok(None);
    }
    let m1: Vec<MomentSequence> = r1
        .blocks
        .iter()
        .map(|b| b.moments(cfg.moment_count))
        .collect::<Result<_>>()?;
    let m2: Vec<MomentSequence> = r2
        .blocks
        .iter()
        .map(|b| b.moments(cfg.moment_count))
        .collect::<Result<_>>()?;
    let mut table: Vec<Vec<Option<Equivalence>>> = vec![vec![None; d]; d];
    for i in 0..d {
        for j in 0..d {
            if m1[i].size() == m2[j].size() {
                table[i][j] = equivalence_test(&m1[i], &m2[j], cfg.eps)?;
            }
        }
    }
    fn search(
        i: usize,
        used: &mut Vec<bool>,
        perm: &mut Vec<usize>,
        table: &[Vec<Option<Equivalence>>],
    ) -> bool {
        if i == table.len() {
            return true;
        }
        for j in 0..table.len() {
            if !used[j] && table[i][j].is_some() {
                used[j] = true;
                perm.push(j);
                if search(i + 1, used, perm, table) {
                    return true;
                }
                perm.pop();
                used[j] = false;
            }
        }
        false
    }
    let mut perm = Vec::with_capacity(d);
    if !search(0, &mut vec![false; d], &mut perm, &table) {
        return Ok(None);
    }
    let witnesses = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| table[i][j].clone().expect("matched"))
        .collect();
    Ok(Some(BlockMatching {
        permutation: perm,
        witnesses,
    }))
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// Degree up to which the recursion coefficients were compared.
    pub n_max: usize,
    /// Max over n of the relative differences of `A_n` and `B_n`.
    pub recursion_residual: f64,
    pub shared_mops: bool,
    /// `tr M_0(V) / tr M_0(W)`.
    pub lambda: f64,
    /// Max over k of `‖M_k(V) − λ M_k(W)‖ / ‖M_k(V)‖`.
    pub moment_residual: f64,
    pub proportional_moments: bool,
    /// Max over the grid of `‖V(x) − λ W(x)‖ / ‖V(x)‖`.
    pub pointwise_residual: f64,
    pub scalar_multiple: bool,
    pub bounded: bool,
    /// The first weight is irreducible (sample route).
    pub first_irreducible: bool,
    /// Shared polynomials force `V = λ W`: bounded support and `W` irreducible.
    pub uniqueness_applies: bool,
    pub notes: Vec<String>,
}

fn relative_diff(a: &CMat, b: &CMat) -> f64 {
    let s = linalg::norm(a).max(linalg::norm(b));
    if s > 0.0 {
        linalg::norm(&(a - b)) / s
    } else {
        0.0
    }
}

/// Shared monic polynomials, proportional moments and pointwise proportionality.
pub fn compare_weights(
    w: &MatrixWeight,
    v: &MatrixWeight,
    cfg: &AnalysisConfig,
) -> Result<ComparisonReport> {
    if w.size() != v.size() {
        return Err(Error::InvalidArgument(format!(
            "weights of sizes {} and {} cannot be compared",
            w.size(),
            v.size()
        )));
    }
    cfg.validate()?;
    let (mw, pw, mut notes) = moments_and_mops(w, cfg)?;
    let (mv, pv, nv) = moments_and_mops(v, cfg)?;
    notes.extend(nv);
    let n_max = pw.n_max().min(pv.n_max());
    let mut recursion_residual: f64 = 0.0;
    for n in 0..=n_max {
        if let (Some(a), Some(b)) = (pw.a(n), pv.a(n)) {
            recursion_residual = recursion_residual.max(relative_diff(a, b));
        }
        if let (Some(a), Some(b)) = (pw.b(n), pv.b(n)) {
            recursion_residual = recursion_residual.max(relative_diff(a, b));
        }
    }
    let lambda = mv.moment(0).trace().re / mw.moment(0).trace().re;
    let count = mw.count().min(mv.count());
    let moment_residual = (0..count)
        .map(|k| {
            let target = mv.moment(k);
            let s = linalg::norm(target).max(f64::MIN_POSITIVE);
            linalg::norm(&(target - mw.moment(k).scale(lambda))) / s
        })
        .fold(0.0, f64::max);
    let bounded = w.support().is_bounded() && v.support().is_bounded();
    let pointwise_residual = if w.support() == v.support() {
        SampleGrid::for_support(w.support(), cfg.samples)
            .points()
            .iter()
            .map(|&x| Ok(relative_diff(&v.eval(x)?, &w.eval(x)?.scale(lambda))))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        notes.push("the supports differ, so the weights are not proportional".into());
        f64::INFINITY
    };
    let first_irreducible = ground_truth_commutant(WeightSource::Closed(w), cfg)?.is_trivial();
    let shared_mops = recursion_residual <= cfg.eps;
    if shared_mops && !bounded {
        notes
            .push("unbounded support: shared polynomials do not force proportional weights".into());
    }
    Ok(ComparisonReport {
        n_max,
        recursion_residual,
        shared_mops,
        lambda,
        moment_residual,
        proportional_moments: moment_residual <= cfg.eps,
        pointwise_residual,
        scalar_multiple: pointwise_residual <= cfg.eps,
        bounded,
        first_irreducible,
        uniqueness_applies: bounded && first_irreducible,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real, norm};
    use crate::moments::matrix_moments;
    use crate::weights::{catalog, conjugate_weight, direct_sum, ScalarWeightKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(n: usize) -> AnalysisConfig {
        AnalysisConfig::with_degree(n)
    }

    fn jacobi(alpha: f64, beta: f64) -> MatrixWeight {
        MatrixWeight::scalar(ScalarWeightKind::Jacobi01 { alpha, beta }).unwrap()
    }

    /// `m_k(block) / m_k(reference)` is constant in `k`.
    fn proportional(block: &MomentSequence, reference: &MomentSequence) -> bool {
        let r0 = block.moment(0)[(0, 0)].re / reference.moment(0)[(0, 0)].re;
        (0..block.count()).all(|k| {
            let r = block.moment(k)[(0, 0)].re / reference.moment(k)[(0, 0)].re;
            (r / r0 - 1.0).abs() < 1e-8
        })
    }

    #[test]
    fn normalize_gives_identity_order_zero() {
        let mom = matrix_moments(&catalog::conjugated_diag_x2_x(), 9).unwrap();
        let (n, t) = normalize(&mom).unwrap();
        assert!(norm(&(n.moment(0) - linalg::identity(2))) < 1e-12);
        let (_, t2) = normalize(&n).unwrap();
        assert!(norm(&(t2 - linalg::identity(2))) < 1e-12);
        // In the normalized frame every moment-route commutant element is Hermitian.
        let basis = commutant_from_moments(&n, 1e-9);
        assert_eq!(basis.real_dim(), 2);
        for b in &basis.basis {
            assert!(linalg::hermitian_defect(b) < 1e-9);
        }
        assert!(norm(&(&t * mom.moment(0) * t.adjoint() - linalg::identity(2))) < 1e-12);
    }

    #[test]
    fn identity_basis_gives_identity_split() {
        let b = commutant_from_samples(
            &catalog::uniform_irreducible(),
            &SampleGrid::chebyshev(0.0, 1.0, 32),
            1e-9,
        )
        .unwrap();
        let s = max_split_element(&b, 0);
        assert_eq!(s.distinct(), 1);
        assert_eq!(s.t, linalg::identity(2));
    }

    #[test]
    fn split_element_of_flip_commutant_has_two_eigenvalues() {
        let w = catalog::jacobi_pair(1.0).unwrap();
        let b =
            commutant_from_samples(&w, &SampleGrid::for_support(w.support(), 64), 1e-9).unwrap();
        let s = max_split_element(&b, 3);
        assert_eq!(s.distinct(), 2);
        assert_eq!(s.minimal_polynomial_degree, 2);
        // s I + t J has eigenvalues s ± t.
        let (p, q) = (s.t[(0, 0)].re, s.t[(0, 1)].re);
        assert!((s.eigenvalues[0] - (p - q.abs())).abs() < 1e-12);
        assert!((s.eigenvalues[1] - (p + q.abs())).abs() < 1e-12);
    }

    #[test]
    fn conjugated_diagonal_reduces_to_x2_and_x() {
        let w = catalog::conjugated_diag_x2_x();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(10)).unwrap();
        assert_eq!(r.d(), 2);
        assert_eq!(r.block_sizes, vec![1, 1]);
        assert!(r.irreducible.iter().all(|&b| b));
        assert!(r.off_block_residual < 1e-12);
        let x2 = matrix_moments(&jacobi(2.0, 0.0), 21).unwrap();
        let x1 = matrix_moments(&jacobi(1.0, 0.0), 21).unwrap();
        let blocks: Vec<MomentSequence> = r.blocks.iter().map(|b| b.moments(21).unwrap()).collect();
        let direct = proportional(&blocks[0], &x2) && proportional(&blocks[1], &x1);
        let swapped = proportional(&blocks[0], &x1) && proportional(&blocks[1], &x2);
        assert!(direct ^ swapped);
    }

    #[test]
    fn jacobi_pair_similarity_is_sum_and_difference() {
        let w = catalog::jacobi_pair(1.0).unwrap();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(10)).unwrap();
        assert_eq!(r.d(), 2);
        // Rows are multiples of (1, 1) and (1, −1).
        for i in 0..2 {
            let (a, b) = (r.similarity[(i, 0)], r.similarity[(i, 1)]);
            assert!((a.norm() - b.norm()).abs() < 1e-10 * a.norm());
        }
        let w1 = matrix_moments(&jacobi(1.0, 2.0), 21).unwrap();
        let w2 = matrix_moments(&jacobi(2.0, 1.0), 21).unwrap();
        let blocks: Vec<MomentSequence> = r.blocks.iter().map(|b| b.moments(21).unwrap()).collect();
        assert!(
            (proportional(&blocks[0], &w1) && proportional(&blocks[1], &w2))
                || (proportional(&blocks[0], &w2) && proportional(&blocks[1], &w1))
        );
    }

    #[test]
    fn moment_source_reduction_matches_closed_form() {
        let mom = matrix_moments(&catalog::conjugated_diag_x2_x(), 21).unwrap();
        let r = reduce_weight(WeightSource::Moments(&mom), &cfg(10)).unwrap();
        assert_eq!(r.d(), 2);
        assert_eq!(r.route, Route::Moments);
        assert!(r.off_block_residual < 1e-12);
        assert!(matches!(r.blocks[0], BlockWeight::Moments(_)));
    }

    #[test]
    fn irreducible_weight_reduces_trivially() {
        let w = catalog::uniform_irreducible();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(10)).unwrap();
        assert_eq!(r.d(), 1);
        assert_eq!(r.similarity, linalg::identity(2));
        assert!(r.split.is_none());
    }

    #[test]
    fn lognormal_sine_reduces_by_explicit_pencil_diagonalizer() {
        // g(x)[[4, s],[s, 2]] with M = [[1, √2],[1, −√2]] gives g·diag(8 ± 2√2 s).
        let w = catalog::lognormal_sine();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(10)).unwrap();
        assert_eq!(r.d(), 2);
        let r2 = 2f64.sqrt();
        let m = from_real(2, 2, &[1.0, r2, 1.0, -r2]);
        for x in [0.3, 1.0, 2.5, 7.0] {
            let y = &m * w.eval(x).unwrap() * m.adjoint();
            assert!(y[(0, 1)].norm() < 1e-14 * norm(&y));
        }
    }

    #[test]
    fn three_block_reduction_with_a_two_by_two_irreducible_block() {
        let inner = catalog::uniform_irreducible();
        let w = direct_sum(&[inner, jacobi(0.0, 0.0).clone()]).unwrap();
        let w = conjugate_weight(
            &w,
            &from_real(3, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, 0.3, 0.2, 0.0, 1.0]),
        )
        .unwrap();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(8)).unwrap();
        assert_eq!(r.d(), 2);
        let mut sizes = r.block_sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        assert!(r.irreducible.iter().all(|&b| b));
    }

    #[test]
    fn equivalent_copies_split_into_scalar_blocks() {
        let w = direct_sum(&[jacobi(1.0, 0.0), jacobi(1.0, 0.0)]).unwrap();
        let r = reduce_weight(WeightSource::Closed(&w), &cfg(8)).unwrap();
        assert_eq!(r.d(), 2);
    }

    #[test]
    fn report_serializes_blocks_and_similarity() {
        let r = reduce_weight(WeightSource::Closed(&catalog::diag_x2_x()), &cfg(6)).unwrap();
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["d"], 2);
        assert_eq!(v["blocks"].as_array().unwrap().len(), 2);
        let back = MatrixWeight::from_json(&v["blocks"][0].to_string()).unwrap();
        assert_eq!(back.size(), 1);
    }

    #[test]
    fn example_certificate_is_proportional_to_known_p() {
        let w = catalog::conjugated_diag_x2_x();
        let grid = SampleGrid::chebyshev(0.0, 1.0, 16);
        let cert = is_scalar_reducible(&w, &grid, 1e-9, Some(1.0))
            .unwrap()
            .expect("certificate");
        let p = cert.p.unscale(cert.p.trace().re);
        let want = from_real(2, 2, &[1.0, -1.0, -1.0, 2.0]).unscale(3.0);
        assert!(linalg::max_abs(&(p - want)) < 1e-8);
        assert!(cert.residual < 1e-9);
        assert!(!is_unitarily_diagonalizable(&w, &grid, 1e-9).unwrap());
    }

    #[test]
    fn certificate_absent_for_irreducible_block() {
        let w = conjugate_weight(
            &direct_sum(&[catalog::uniform_irreducible(), jacobi(1.0, 1.0)]).unwrap(),
            &from_real(3, 3, &[2.0, 0.1, 0.0, -0.3, 1.0, 0.4, 0.0, 0.7, 1.5]),
        )
        .unwrap();
        let grid = SampleGrid::chebyshev(0.0, 1.0, 16);
        assert!(is_scalar_reducible(&w, &grid, 1e-9, None)
            .unwrap()
            .is_none());
        let jp = catalog::jacobi_pair(1.0).unwrap();
        assert!(is_scalar_reducible(&jp, &grid, 1e-9, None)
            .unwrap()
            .is_some());
    }

    #[test]
    fn diagonal_and_unitary_conjugates_commute_pointwise() {
        let grid = SampleGrid::chebyshev(0.0, 1.0, 16);
        assert!(is_unitarily_diagonalizable(&catalog::diag_x2_x(), &grid, 1e-9).unwrap());
        let (c, s) = (0.6, 0.8);
        let u = CMat::from_row_slice(2, 2, &[c64(c, 0.0), c64(0.0, s), c64(0.0, s), c64(c, 0.0)]);
        let w = conjugate_weight(&catalog::diag_x2_x(), &u).unwrap();
        assert!(is_unitarily_diagonalizable(&w, &grid, 1e-9).unwrap());
    }

    #[test]
    fn equivalence_recovers_conjugation() {
        let w = catalog::uniform_irreducible();
        let m = from_real(2, 2, &[1.5, -0.4, 0.3, 0.8]);
        let a = matrix_moments(&w, 21).unwrap();
        let b = matrix_moments(&conjugate_weight(&w, &m).unwrap(), 21).unwrap();
        let e = equivalence_test(&a, &b, 1e-9).unwrap().expect("equivalent");
        assert!(e.residual < 1e-8);
        assert!(!e.advisory);
        assert!(equivalence_test(&a, &a, 1e-9).unwrap().is_some());
    }

    #[test]
    fn inequivalent_scalar_weights() {
        let a = matrix_moments(&jacobi(2.0, 0.0), 21).unwrap();
        let b = matrix_moments(&jacobi(1.0, 0.0), 21).unwrap();
        assert!(equivalence_test(&a, &b, 1e-9).unwrap().is_none());
    }

    #[test]
    fn matching_finds_transposition() {
        let c = cfg(8);
        let r1 = reduce_weight(WeightSource::Closed(&catalog::diag_x2_x()), &c).unwrap();
        let swapped = direct_sum(&[jacobi(1.0, 0.0), jacobi(2.0, 0.0)]).unwrap();
        let r2 = reduce_weight(WeightSource::Closed(&swapped), &c).unwrap();
        let m = match_decompositions(&r1, &r2, &c)
            .unwrap()
            .expect("matching");
        assert_eq!(m.permutation, vec![1, 0]);
        let triv =
            reduce_weight(WeightSource::Closed(&catalog::uniform_irreducible()), &c).unwrap();
        assert!(match_decompositions(&r1, &triv, &c).unwrap().is_none());
    }

    #[test]
    fn compare_scaled_copy() {
        let w = catalog::conjugated_diag_x2_x();
        let v = conjugate_weight(&w, &linalg::identity(2).scale(3f64.sqrt())).unwrap();
        let r = compare_weights(&w, &v, &cfg(8)).unwrap();
        assert!(r.shared_mops && r.proportional_moments && r.scalar_multiple);
        assert!((r.lambda - 3.0).abs() < 1e-12);
    }

    #[test]
    fn compare_x2_and_x_differ_at_b0() {
        let r = compare_weights(&jacobi(2.0, 0.0), &jacobi(1.0, 0.0), &cfg(4)).unwrap();
        assert!(!r.shared_mops);
        // B_0 = 3/4 against 2/3.
        assert!(
            (r.recursion_residual - (0.75 - 2.0 / 3.0) / 0.75).abs() < 1e-9
                || r.recursion_residual > 0.1
        );
        assert!(r.uniqueness_applies);
    }

    #[test]
    fn compare_lognormal_pair_shares_polynomials_only() {
        let r = compare_weights(
            &catalog::lognormal_sine(),
            &catalog::lognormal_scalar(),
            &cfg(8),
        )
        .unwrap();
        assert!(r.shared_mops, "residual {}", r.recursion_residual);
        assert!(!r.scalar_multiple);
        assert!(!r.bounded && !r.uniqueness_applies);
    }

    #[test]
    fn compare_rejects_size_mismatch() {
        assert!(matches!(
            compare_weights(&catalog::diag_x2_x(), &jacobi(1.0, 1.0), &cfg(4)),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn random_blocks(seed: u64) -> (MatrixWeight, MatrixWeight, CMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=3usize);
        let mut params: Vec<(f64, f64)> = Vec::new();
        while params.len() < k {
            let p = (
                rng.random_range(0..4) as f64 * 0.5,
                rng.random_range(0..4) as f64 * 0.5,
            );
            if !params.contains(&p) {
                params.push(p);
            }
        }
        let lambda = direct_sum(
            &params
                .iter()
                .map(|&(a, b)| jacobi(a, b))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let m = loop {
            let m = CMat::from_fn(k, k, |_, _| {
                c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            if linalg::condition_number(&m) <= 100.0 {
                break m;
            }
        };
        (conjugate_weight(&lambda, &m).unwrap(), lambda, m)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn round_trip_recovers_blocks(seed in 0u64..10_000) {
            let (w, lambda, _) = random_blocks(seed);
            let c = cfg(8);
            let r = reduce_weight(WeightSource::Closed(&w), &c).unwrap();
            prop_assert_eq!(r.d(), lambda.size());
            prop_assert!(r.off_block_residual <= c.eps);
            let known = reduce_weight(WeightSource::Closed(&lambda), &c).unwrap();
            let m = match_decompositions(&r, &known, &c).unwrap();
            prop_assert!(m.is_some());
            // d equals the best cluster count over more random span elements.
            let basis = ground_truth_commutant(WeightSource::Closed(&w), &c).unwrap();
            prop_assert_eq!(max_split_element_with(&basis, seed, 32).distinct(), r.d());
            // All blocks scalar, so the certificate route must agree.
            let grid = SampleGrid::for_support(w.support(), 16);
            prop_assert!(is_scalar_reducible(&w, &grid, 1e-9, None).unwrap().is_some());
        }

        #[test]
        fn equivalence_witness_reproduces_moments(seed in 0u64..10_000) {
            let (w, lambda, _) = random_blocks(seed);
            let a = matrix_moments(&lambda, 17).unwrap();
            let b = matrix_moments(&w, 17).unwrap();
            let e = equivalence_test(&a, &b, 1e-9).unwrap();
            prop_assert!(e.is_some());
            let e = e.unwrap();
            prop_assert!(moment_residual(&e.matrix, &a, &b, 17) <= 1e-8);
        }
    }
}
