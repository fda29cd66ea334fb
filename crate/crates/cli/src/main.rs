//! `matweight`: reducibility analysis of matrix weights from the command line.
//!
//! Exit status is 0 on success, 1 for unusable input and 2 when the
//! computation contradicts itself (routes disagree on a bounded support, or a
//! block split leaves off-diagonal mass).

mod commands;
mod fmt;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use matweight::commutant::AnalysisConfig;
use matweight::Error;

#[derive(Parser)]
#[command(
    name = "matweight",
    version,
    about = "Reducibility of matrix weights and their orthogonal polynomials"
)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Options {
    /// Maximal degree of the monic orthogonal polynomials.
    #[arg(long, global = true, default_value_t = 20)]
    pub max_degree: usize,
    /// Highest moment order K (default 2·max-degree + 2).
    #[arg(long, global = true)]
    pub moments: Option<usize>,
    /// Number of sample points for the pointwise routes.
    #[arg(long, global = true, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = matweight::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Compute moments by Gaussian quadrature with this many nodes.
    #[arg(long, global = true)]
    pub quadrature_nodes: Option<usize>,
    /// Output file (analyze, mop, diffop, compare) or directory (reduce).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Method::All)]
    pub method: Method,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Samples,
    Moments,
    Mop,
    Recursion,
    All,
}

impl Options {
    pub fn config(&self) -> Result<AnalysisConfig, Error> {
        let mut cfg = AnalysisConfig::with_degree(self.max_degree);
        if let Some(k) = self.moments {
            cfg.moment_count = k + 1;
        }
        cfg.samples = self.samples;
        cfg.eps = self.eps;
        cfg.seed = self.seed;
        cfg.quadrature_nodes = self.quadrature_nodes;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Commutant dimensions by every route, verdict and decomposition summary.
    Analyze { weight: PathBuf },
    /// Write the irreducible blocks and the similarity matrix to --out.
    Reduce { weight: PathBuf },
    /// Monic orthogonal polynomials with A_n, B_n and S_n up to degree N.
    Mop {
        weight: PathBuf,
        #[arg(short = 'n', long = "degree")]
        n: usize,
    },
    /// Check a differential operator against the polynomials of a weight.
    Diffop {
        weight: PathBuf,
        operator: PathBuf,
        #[arg(value_enum)]
        check: DiffopCheck,
        /// Parameter override for the operator file, e.g. `u=0.5`.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
    /// Shared polynomials, scalar multiples and equivalence of two weights.
    Compare { first: PathBuf, second: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DiffopCheck {
    Verify,
    Symmetric,
    Orderzero,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {v:?}"))?;
    Ok((k.trim().to_string(), v))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Inconsistent(_) | Error::SplitFailure { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = &cli.opts;
    let result = match &cli.command {
        Command::Analyze { weight } => commands::analyze(weight, opts),
        Command::Reduce { weight } => commands::reduce(weight, opts),
        Command::Mop { weight, n } => commands::mop(weight, *n, opts),
        Command::Diffop {
            weight,
            operator,
            check,
            params,
        } => commands::diffop(weight, operator, *check, params, opts),
        Command::Compare { first, second } => commands::compare(first, second, opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inconsistencies_map_to_exit_code_two() {
        let code = |e: Error| exit_code(&anyhow::Error::new(e).context("while analyzing"));
        assert_eq!(code(Error::Inconsistent("routes disagree".into())), 2);
        assert_eq!(
            code(Error::SplitFailure {
                residual: 1e-3,
                gap: 0.0
            }),
            2
        );
        assert_eq!(code(Error::Parse("bad".into())), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("no such file")), 1);
    }

    #[test]
    fn moments_flag_sets_highest_order() {
        let opts = Cli::parse_from([
            "matweight",
            "--max-degree",
            "4",
            "--moments",
            "12",
            "mop",
            "w.json",
            "-n",
            "1",
        ])
        .opts;
        let cfg = opts.config().unwrap();
        assert_eq!(cfg.moment_count, 13);
        let opts = Cli::parse_from([
            "matweight",
            "--max-degree",
            "4",
            "--moments",
            "6",
            "mop",
            "w.json",
            "-n",
            "1",
        ])
        .opts;
        assert!(opts.config().is_err());
    }
}
