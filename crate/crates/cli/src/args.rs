use std::path::PathBuf;

use betalab::Coupling;
use clap::{Args, Parser, Subcommand};

/// Experiments with self-consistent β-map dynamics.
///
/// Every long flag can also be set in a `--config` file as `name = value`
/// (one per line, `#` starts a comment). Flags on the command line win over
/// the config file, which wins over built-in defaults.
#[derive(Debug, Parser)]
#[command(name = "betalab", version)]
pub struct Cli {
    /// Master seed for every random choice (pools, orbit starts).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Flat `key = value` file with defaults for the long flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orbit of 1 and Parry density data for one slope (JSON).
    Parry(ParryArgs),
    /// The map ψ^ε(β) on a β grid (CSV: beta,psi,method,n_iters).
    PsiCurve(PsiCurveArgs),
    /// Non-trivial fixed points of ψ^ε on an interval (JSON).
    FixedPoints(FixedPointArgs),
    /// Slopes β_k with β^k(β - 2) = 1 and their closed-form moments (CSV).
    BetaK(BetaKArgs),
    /// Self-consistent iteration of one density (CSV trace).
    Iterate(IterateArgs),
    /// Ensemble statistics over a random pool (CSV).
    Stability(StabilityArgs),
    /// Convergence verdicts over a range of ε (CSV).
    EpsSweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    /// Coupling function F: `identity`, or `x2`, `x4`, … for x^(2k).
    #[arg(long = "f", default_value = "identity", value_parser = parse_coupling)]
    pub coupling: Coupling,

    /// Coupling strength ε >= 0 (dimensionless).
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct ParryArgs {
    /// Slope β > 1.
    #[arg(long, required_unless_present = "beta_k", conflicts_with = "beta_k")]
    pub beta: Option<f64>,

    /// Use β_k and compare the series with the closed forms.
    #[arg(long)]
    pub beta_k: Option<u32>,

    /// Drop series terms with weight β^-n below this.
    #[arg(long, default_value_t = betalab::DEFAULT_TOL)]
    pub tol: f64,

    /// Also emit the normalized density as {"jumps", "heights"}.
    #[arg(long)]
    pub density: bool,
}

#[derive(Debug, Args)]
pub struct PsiCurveArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,

    /// Lower end of the β grid.
    #[arg(long, default_value_t = 2.0)]
    pub lo: f64,

    /// Upper end of the β grid (included).
    #[arg(long, default_value_t = 3.0)]
    pub hi: f64,

    /// Grid spacing Δ.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,

    /// Evaluate ψ from the Parry series (default).
    #[arg(long, conflicts_with = "ergodic")]
    pub parry: bool,

    /// Evaluate ψ from Birkhoff averages of `--n` iterates.
    #[arg(long)]
    pub ergodic: bool,

    /// Orbit length for `--ergodic`; accepts `1e8`.
    #[arg(long, default_value = "1000000", value_parser = parse_count)]
    pub n: u64,

    /// Parry series truncation.
    #[arg(long, default_value_t = betalab::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FixedPointArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,

    /// Lower end of the scanned β interval.
    #[arg(long, default_value_t = 2.001)]
    pub lo: f64,

    /// Upper end of the scanned β interval.
    #[arg(long, default_value_t = 2.5)]
    pub hi: f64,

    /// Scan step for sign changes of ψ(β) - β.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,

    /// Width at which bisection stops.
    #[arg(long, default_value_t = 1e-12)]
    pub bisect_tol: f64,

    /// Parry series truncation.
    #[arg(long, default_value_t = betalab::DEFAULT_TOL)]
    pub tol: f64,

    /// Also report the threshold ε₂*(β̄) above which ψ(β̄) > β̄.
    #[arg(long)]
    pub beta_bar: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BetaKArgs {
    /// Largest k to tabulate (rows k = 1..=k-max).
    #[arg(long, default_value_t = 20)]
    pub k_max: u32,

    /// Parry series truncation for the series columns.
    #[arg(long, default_value_t = betalab::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct IterateArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,

    /// Number of self-consistent steps.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,

    /// Inner jumps of the random initial density (seeded by --seed).
    #[arg(long, default_value_t = 10, conflicts_with = "init")]
    pub jumps: usize,

    /// Initial density JSON file ({"jumps", "heights"}) instead of a random one.
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Write the final density as JSON to this file.
    #[arg(long)]
    pub final_density: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Number of jump-count groups K₁.
    #[arg(long, default_value_t = 10)]
    pub k1: usize,

    /// Densities per group K₂.
    #[arg(long, default_value_t = 10)]
    pub k2: usize,

    /// Largest inner jump count M.
    #[arg(long, default_value_t = 10)]
    pub max_jumps: usize,

    /// Blend pool densities toward uniform until their variation is below this.
    #[arg(long)]
    pub near_uniform: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,

    #[command(flatten)]
    pub pool: PoolArgs,

    /// Number of steps T.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,

    /// Steps T̄ for the reference density (long run of the first pool member);
    /// fills the reference columns.
    #[arg(long)]
    pub ref_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Coupling function F: `identity`, or `x2`, `x4`, … for x^(2k).
    #[arg(long = "f", default_value = "identity", value_parser = parse_coupling)]
    pub coupling: Coupling,

    #[arg(long, default_value_t = 0.001)]
    pub eps_lo: f64,

    #[arg(long, default_value_t = 1.0)]
    pub eps_hi: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub eps_step: f64,

    #[command(flatten)]
    pub pool: PoolArgs,

    /// Steps per ensemble; must be at least t1.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,

    /// First step of the convergence window.
    #[arg(long, default_value_t = 150)]
    pub t0: usize,

    /// Last step of the convergence window.
    #[arg(long, default_value_t = 200)]
    pub t1: usize,

    /// Allowed deviation from the window midrange.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

fn parse_coupling(s: &str) -> Result<Coupling, String> {
    s.parse().map_err(|e: betalab::Error| e.to_string())
}

/// Non-negative integer, also written as a float such as `1e8`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= 9.007_199_254_740_992e15 => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got '{s}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e8"), Ok(100_000_000));
        assert_eq!(parse_count("42"), Ok(42));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
