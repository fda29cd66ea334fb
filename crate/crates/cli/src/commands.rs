//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use matweight::commutant::{
    commutant_from_moments, commutant_from_mops, commutant_from_recursion, commutant_from_samples,
    cross_check, moments_and_mops, AnalysisConfig, CommutantBasis, ConsistencyReport, Route,
};
use matweight::decompose::{
    compare_weights, equivalence_test, reduce_weight, DecompositionReport, WeightSource,
};
use matweight::diffop::{eigenvalue_matrices, is_symmetric, order_zero, MatrixDiffOperator};
use matweight::moments::MomentSequence;
use matweight::mop::{monic_sequence_with_tol, MopSequence};
use matweight::weights::{json::matrix_to_json, validate_weight, MatrixWeight, SampleGrid};
use serde::Serialize;
use serde_json::{json, Value};

use crate::fmt;
use crate::{DiffopCheck, Method, Options};

const INDETERMINATE_WARNING: &str = "WARNING: moment route disagrees — indeterminate support";

/// A weight given in closed form or only through its moments.
enum Input {
    Weight(MatrixWeight),
    Moments(MomentSequence),
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_input(path: &Path) -> Result<Input> {
    let text = read(path)?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let parsed = if value.get("moments").is_some() && value.get("expr").is_none() {
        MomentSequence::from_json(&text).map(Input::Moments)
    } else {
        MatrixWeight::from_json(&text).map(Input::Weight)
    };
    parsed
        .map_err(anyhow::Error::new)
        .with_context(|| format!("cannot parse {}", path.display()))
}

fn load_weight(path: &Path, cfg: &AnalysisConfig) -> Result<MatrixWeight> {
    match load_input(path)? {
        Input::Weight(w) => {
            check_valid(&w, cfg)?;
            Ok(w)
        }
        Input::Moments(_) => bail!(
            "{} holds moments, but this command needs a closed-form weight",
            path.display()
        ),
    }
}

fn check_valid(w: &MatrixWeight, cfg: &AnalysisConfig) -> Result<()> {
    let grid = SampleGrid::for_support(w.support(), cfg.samples);
    let v = validate_weight(w, &grid, cfg.eps);
    if !v.is_valid(cfg.eps) {
        bail!(
            "not a matrix weight: hermitian residual {}, {} indefinite and {} singular points out of {}",
            fmt::num(v.hermitian_residual),
            v.indefinite_points,
            v.singular_points,
            v.points
        );
    }
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn report_header(command: &str, opts: &Options, cfg: &AnalysisConfig) -> Value {
    json!({ "command": command, "method": opts.method, "config": cfg })
}

fn mops_for(mom: &MomentSequence, cfg: &AnalysisConfig) -> Result<MopSequence> {
    let n = cfg.n_max.min(mom.max_order() / 2);
    Ok(monic_sequence_with_tol(mom, n, cfg.eps)?)
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Serialize)]
struct RouteRow {
    route: Route,
    dim: Option<usize>,
    complex: bool,
    reducible: Option<bool>,
    gap: Option<f64>,
    error: Option<String>,
}

impl RouteRow {
    fn from_basis(b: &CommutantBasis) -> Self {
        Self {
            route: b.route,
            dim: Some(b.dim()),
            complex: b.route.is_complex(),
            reducible: Some(!b.is_trivial()),
            gap: b.gap,
            error: None,
        }
    }

    fn line(&self) -> String {
        let name = format!("{:<10}", self.route.name());
        match (self.dim, &self.error) {
            (Some(d), _) => {
                let field = if self.complex { "dim_C" } else { "dim_R" };
                let verdict = if self.reducible == Some(true) {
                    "reducible"
                } else {
                    "irreducible"
                };
                let gap = self
                    .gap
                    .map(|g| format!(", gap {}", fmt::num(g)))
                    .unwrap_or_default();
                format!("  {name} {field} = {d}  {verdict}{gap}")
            }
            (None, Some(e)) => format!("  {name} unavailable: {e}"),
            (None, None) => format!("  {name} not run"),
        }
    }
}

fn block_label(size: usize) -> String {
    if size == 1 {
        "scalar".into()
    } else {
        format!("{size}x{size}")
    }
}

fn verdict(r: &DecompositionReport) -> String {
    if r.is_reducible() {
        let labels: Vec<String> = r.block_sizes.iter().map(|&s| block_label(s)).collect();
        format!("REDUCIBLE, d={}, blocks: {}", r.d(), labels.join(", "))
    } else {
        "IRREDUCIBLE".into()
    }
}

fn selected_routes(
    w: &MatrixWeight,
    method: Method,
    cfg: &AnalysisConfig,
) -> Result<(Vec<RouteRow>, Vec<String>)> {
    if method == Method::Samples {
        let grid = SampleGrid::for_support(w.support(), cfg.samples);
        return Ok((
            vec![RouteRow::from_basis(&commutant_from_samples(
                w, &grid, cfg.eps,
            )?)],
            vec![],
        ));
    }
    let (mom, seq, notes) = moments_and_mops(w, cfg)?;
    let b = match method {
        Method::Moments => commutant_from_moments(&mom, cfg.eps),
        Method::Mop => commutant_from_mops(&seq, &mom, cfg.eps),
        _ => commutant_from_recursion(&seq, cfg.eps),
    };
    Ok((vec![RouteRow::from_basis(&b)], notes))
}

pub fn analyze(path: &Path, opts: &Options) -> Result<()> {
    let cfg = opts.config()?;
    let input = load_input(path)?;
    let mut report = report_header("analyze", opts, &cfg);
    let (rows, notes, consistency, decomposition): (
        Vec<RouteRow>,
        Vec<String>,
        Option<ConsistencyReport>,
        _,
    ) = match &input {
        Input::Weight(w) => {
            check_valid(w, &cfg)?;
            if opts.method == Method::All {
                let c = cross_check(w, &cfg)?;
                let rows = c
                    .routes
                    .iter()
                    .map(|r| RouteRow {
                        route: r.route,
                        dim: r.dim,
                        complex: r.route.is_complex(),
                        reducible: r.reducible,
                        gap: r.gap,
                        error: r.error.clone(),
                    })
                    .collect();
                let notes = c.notes.clone();
                (
                    rows,
                    notes,
                    Some(c),
                    reduce_weight(WeightSource::Closed(w), &cfg)?,
                )
            } else {
                let (rows, notes) = selected_routes(w, opts.method, &cfg)?;
                let source = if opts.method == Method::Samples {
                    reduce_weight(WeightSource::Closed(w), &cfg)?
                } else {
                    let (mom, _, _) = moments_and_mops(w, &cfg)?;
                    reduce_weight(WeightSource::Moments(&mom), &cfg)?
                };
                (rows, notes, None, source)
            }
        }
        Input::Moments(mom) => {
            if opts.method == Method::Samples {
                bail!(
                    "{} holds moments only; the sample route needs a closed-form weight",
                    path.display()
                );
            }
            let seq = mops_for(mom, &cfg)?;
            let all = [
                (Method::Moments, commutant_from_moments(mom, cfg.eps)),
                (Method::Mop, commutant_from_mops(&seq, mom, cfg.eps)),
                (Method::Recursion, commutant_from_recursion(&seq, cfg.eps)),
            ];
            let rows = all
                .iter()
                .filter(|(m, _)| opts.method == Method::All || *m == opts.method)
                .map(|(_, b)| RouteRow::from_basis(b))
                .collect();
            let mut notes = vec![];
            if !mom.is_bounded() {
                notes.push("moment data on an unbounded support: the moment routes only give necessary conditions".into());
            }
            (
                rows,
                notes,
                None,
                reduce_weight(WeightSource::Moments(mom), &cfg)?,
            )
        }
    };
    let indeterminate = consistency
        .as_ref()
        .is_some_and(|c| c.indeterminate_support);
    let mut line = verdict(&decomposition);
    if indeterminate {
        line = format!("{line} (sample route); {INDETERMINATE_WARNING}");
    }
    println!("{line}");
    println!("commutant dimensions:");
    for r in &rows {
        println!("{}", r.line());
    }
    println!(
        "off-block residual: {}",
        fmt::num(decomposition.off_block_residual)
    );
    if decomposition.is_reducible() {
        println!("similarity M: {}", fmt::matrix(&decomposition.similarity));
    }
    for n in &notes {
        println!("note: {n}");
    }
    if let Some(out) = &opts.out {
        report["verdict"] = json!(line);
        report["reducible"] = json!(decomposition.is_reducible());
        report["d"] = json!(decomposition.d());
        report["indeterminate_support"] = json!(indeterminate);
        report["routes"] = serde_json::to_value(&rows)?;
        report["consistency"] = serde_json::to_value(&consistency)?;
        report["decomposition"] = serde_json::from_str(&decomposition.to_json())?;
        report["notes"] = json!(notes);
        write_json(out, &report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reduce

pub fn reduce(path: &Path, opts: &Options) -> Result<()> {
    let cfg = opts.config()?;
    let Some(dir) = &opts.out else {
        bail!("reduce needs --out <directory>")
    };
    let input = load_input(path)?;
    let r = match &input {
        Input::Weight(w) => {
            check_valid(w, &cfg)?;
            reduce_weight(WeightSource::Closed(w), &cfg)?
        }
        Input::Moments(m) => reduce_weight(WeightSource::Moments(m), &cfg)?,
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut files = Vec::new();
    for (i, b) in r.blocks.iter().enumerate() {
        let text = match b {
            matweight::decompose::BlockWeight::Closed(w) => w.to_json(),
            matweight::decompose::BlockWeight::Moments(m) => m.to_json(),
        };
        let name = format!("block_{i}.json");
        fs::write(dir.join(&name), text).with_context(|| format!("cannot write {name}"))?;
        files.push(name);
    }
    write_json(
        &dir.join("similarity.json"),
        &json!(matrix_to_json(&r.similarity)),
    )?;
    let mut report = report_header("reduce", opts, &cfg);
    report["verdict"] = json!(verdict(&r));
    report["block_files"] = json!(files);
    report["decomposition"] = serde_json::from_str(&r.to_json())?;
    write_json(&dir.join("report.json"), &report)?;
    println!("{}", verdict(&r));
    println!("similarity M: {}", fmt::matrix(&r.similarity));
    println!("off-block residual: {}", fmt::num(r.off_block_residual));
    for (f, s) in files.iter().zip(&r.block_sizes) {
        println!("wrote {} ({})", dir.join(f).display(), block_label(*s));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mop

fn poly_line(seq: &MopSequence, n: usize) -> String {
    let terms: Vec<String> = seq
        .poly(n)
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| format!("x^{j} {}", fmt::matrix(c)))
        .collect();
    terms.join(" + ")
}

pub fn mop(path: &Path, n: usize, opts: &Options) -> Result<()> {
    let cfg = opts.config()?;
    if n > cfg.n_max {
        bail!("degree {n} is out of range: --max-degree is {}", cfg.n_max);
    }
    let (seq, notes) = match load_input(path)? {
        Input::Weight(w) => {
            check_valid(&w, &cfg)?;
            let (_, seq, notes) = moments_and_mops(&w, &cfg)?;
            (seq, notes)
        }
        Input::Moments(m) => (mops_for(&m, &cfg)?, vec![]),
    };
    if n > seq.n_max() {
        bail!(
            "degree {n} is out of range: only degrees up to {} are available",
            seq.n_max()
        );
    }
    for k in 0..=n {
        println!("n = {k}");
        println!("  P_{k} = {}", poly_line(&seq, k));
        if let Some(a) = seq.a(k) {
            println!("  A_{k} = {}", fmt::matrix(a));
        }
        if let Some(b) = seq.b(k) {
            println!("  B_{k} = {}", fmt::matrix(b));
        }
        println!("  S_{k} = {}", fmt::matrix(seq.norm(k)));
    }
    for note in &notes {
        println!("note: {note}");
    }
    if let Some(out) = &opts.out {
        let mut report = report_header("mop", opts, &cfg);
        report["degree"] = json!(n);
        report["sequence"] = serde_json::from_str(&seq.truncated(n).to_json())?;
        write_json(out, &report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diffop

pub fn diffop(
    weight: &Path,
    operator: &Path,
    check: DiffopCheck,
    params: &[(String, f64)],
    opts: &Options,
) -> Result<()> {
    let cfg = opts.config()?;
    let w = load_weight(weight, &cfg)?;
    let overrides: BTreeMap<String, f64> = params.iter().cloned().collect();
    let d = MatrixDiffOperator::from_json(&read(operator)?, &overrides)
        .map_err(anyhow::Error::new)
        .with_context(|| format!("cannot parse {}", operator.display()))?;
    if d.rows() != w.size() || d.cols() != w.size() {
        bail!(
            "operator is {}x{} but the weight has size {}",
            d.rows(),
            d.cols(),
            w.size()
        );
    }
    let (mom, seq, notes) = moments_and_mops(&w, &cfg)?;
    let mut report = report_header("diffop", opts, &cfg);
    match check {
        DiffopCheck::Verify => {
            let rec = eigenvalue_matrices(&d, &seq, cfg.eps)?;
            println!("{:>3}  {:<48} residual", "n", "Gamma_n");
            for (n, (g, r)) in rec.gammas.iter().zip(&rec.residuals).enumerate() {
                println!("{n:>3}  {:<48} {}", fmt::matrix(g), fmt::num(*r));
            }
            println!("max residual: {}", fmt::num(rec.max_residual));
            println!("eigenfunction of every P_n: {}", rec.member);
            report["gammas"] = json!(rec.gammas.iter().map(matrix_to_json).collect::<Vec<_>>());
            report["residuals"] = json!(rec.residuals);
            report["max_residual"] = json!(rec.max_residual);
            report["member"] = json!(rec.member);
        }
        DiffopCheck::Symmetric => {
            let s = is_symmetric(&d, &seq, &mom, cfg.eps)?;
            println!("{}", s.symmetric);
            println!("max residual: {}", fmt::num(s.max_residual));
            report["symmetric"] = json!(s.symmetric);
            report["max_residual"] = json!(s.max_residual);
        }
        DiffopCheck::Orderzero => {
            // Order zero concerns the weight only; the operator file is still parsed and size-checked.
            let z = order_zero(&seq, &mom, cfg.eps);
            if z.non_scalar {
                println!(
                    "non-scalar order-zero operator found (dim_C = {})",
                    z.basis.dim()
                );
            } else {
                println!("only scalar order-zero operators");
            }
            if let Some(agree) = z.agrees_with_reducibility() {
                println!("agrees with the moment-route verdict: {agree}");
            }
            report["non_scalar"] = json!(z.non_scalar);
            report["dim"] = json!(z.basis.dim());
            report["basis"] = json!(z.basis.basis.iter().map(matrix_to_json).collect::<Vec<_>>());
            report["agrees_with_reducibility"] = json!(z.agrees_with_reducibility());
        }
    }
    for note in &notes {
        println!("note: {note}");
    }
    if let Some(out) = &opts.out {
        report["notes"] = json!(notes);
        write_json(out, &report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

pub fn compare(first: &Path, second: &Path, opts: &Options) -> Result<()> {
    let cfg = opts.config()?;
    let w = load_weight(first, &cfg)?;
    let v = load_weight(second, &cfg)?;
    let c = compare_weights(&w, &v, &cfg)?;
    let support = if c.bounded {
        "bounded support"
    } else {
        "unbounded support"
    };
    let mut witness = None;
    let line = if c.scalar_multiple {
        format!("scalar multiple, λ={}", fmt::num(c.lambda))
    } else if c.shared_mops {
        format!("shared MOPs; NOT scalar multiple; {support}")
    } else {
        let (mw, _, _) = moments_and_mops(&w, &cfg)?;
        let (mv, _, _) = moments_and_mops(&v, &cfg)?;
        witness = equivalence_test(&mw, &mv, cfg.eps)?;
        if witness.is_some() {
            "equivalent, witness M′ emitted".to_string()
        } else {
            "NOT equivalent".to_string()
        }
    };
    println!("{line}");
    println!(
        "recursion residual (n <= {}): {}",
        c.n_max,
        fmt::num(c.recursion_residual)
    );
    println!(
        "moment ratio λ = {}, moment residual {}",
        fmt::num(c.lambda),
        fmt::num(c.moment_residual)
    );
    println!("pointwise residual: {}", fmt::num(c.pointwise_residual));
    if let Some(e) = &witness {
        println!("M′ = {}", fmt::matrix(&e.matrix));
        println!("witness residual: {}", fmt::num(e.residual));
    }
    for note in &c.notes {
        println!("note: {note}");
    }
    if let Some(out) = &opts.out {
        let mut report = report_header("compare", opts, &cfg);
        report["verdict"] = json!(line);
        report["comparison"] = serde_json::to_value(&c)?;
        report["witness"] = match &witness {
            Some(e) => json!({
                "matrix": matrix_to_json(&e.matrix),
                "unitary": matrix_to_json(&e.unitary),
                "residual": e.residual,
                "advisory": e.advisory,
            }),
            None => Value::Null,
        };
        write_json(out, &report)?;
    }
    Ok(())
}
