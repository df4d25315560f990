//! The self-consistency map `ψ^ε(β) = 2 + ε F(1/E_μβ - 2)` and its fixed
//! points.
//!
//! A fixed point `β̄ = ψ^ε(β̄)` gives an absolutely continuous invariant
//! measure of the self-consistent system: the Parry measure of `T_β̄`.
//! `ψ^ε(m) = 2` at every integer `m >= 2`, so `β = 2` is always a fixed point
//! (Lebesgue measure) and `ψ^ε(β̄) > β̄` at some non-integer `β̄ ∈ (m, m+1)`
//! forces a further fixed point in that interval.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta_dynamics::{orbit_sum, parry_data};
use crate::error::{check_slope, Error, Result};
use crate::rng::{derive_seed, open_unit};

/// The coupling function `F`, with `F(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coupling {
    /// `F(x) = x`.
    Identity,
    /// `F(x) = x^(2k)` for the stored `k >= 1`.
    EvenPower(u32),
}

impl Coupling {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Coupling::Identity => x,
            Coupling::EvenPower(k) => x.powi(2 * k as i32),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Coupling::EvenPower(0) => {
                Err(Error::Parameter("even power coupling needs k >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Identity => f.write_str("identity"),
            Coupling::EvenPower(k) => write!(f, "x{}", 2 * k),
        }
    }
}

/// Parses `identity` (or `x`, `x1`) and `x<n>` / `x^<n>` for even `n >= 2`.
impl FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if matches!(s.as_str(), "identity" | "id" | "x" | "x1" | "x^1") {
            return Ok(Coupling::Identity);
        }
        let exponent = s
            .strip_prefix("x^")
            .or_else(|| s.strip_prefix('x'))
            .and_then(|rest| rest.parse::<u32>().ok());
        match exponent {
            Some(n) if n >= 2 && n % 2 == 0 => Ok(Coupling::EvenPower(n / 2)),
            _ => Err(Error::Parameter(format!(
                "unknown coupling '{s}', expected identity or x<even power>"
            ))),
        }
    }
}

/// Coupling strength and coupling function of the slope rule
/// `β(f) = 2 + ε F(1/E_f - 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistency {
    epsilon: f64,
    coupling: Coupling,
}

impl SelfConsistency {
    pub fn new(epsilon: f64, coupling: Coupling) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Parameter(format!(
                "epsilon must be finite and nonnegative, got {epsilon}"
            )));
        }
        coupling.validate()?;
        Ok(Self { epsilon, coupling })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn apply_f(&self, x: f64) -> f64 {
        self.coupling.apply(x)
    }

    /// `2 + ε F(1/e - 2)`.
    pub fn slope_for_expectation(&self, e: f64) -> f64 {
        2.0 + self.epsilon * self.coupling.apply(1.0 / e - 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PsiMethod {
    ParrySeries,
    ErgodicAverage { n_iters: u64, x0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiSample {
    pub beta: f64,
    pub psi: f64,
    pub method: PsiMethod,
}

/// `ψ^ε(β)` from the truncated Parry series.
pub fn psi(sc: &SelfConsistency, beta: f64, tol: f64) -> Result<PsiSample> {
    let e = parry_data(beta, tol)?.expected_value;
    Ok(PsiSample {
        beta,
        psi: sc.slope_for_expectation(e),
        method: PsiMethod::ParrySeries,
    })
}

/// Starting point of a Birkhoff orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrbitStart {
    Point(f64),
    /// Draw the start uniformly from `(0, 1)` with this seed.
    Seeded(u64),
}

impl OrbitStart {
    fn resolve(self) -> f64 {
        match self {
            OrbitStart::Point(x) => x,
            OrbitStart::Seeded(seed) => open_unit(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

/// Ergodic estimate `2 + ε F(N / Σ_{n<N} T_β^n(x0) - 2)`.
///
/// At integer β the floating-point orbit of almost every start collapses
/// to 0 within about `53 / log2 β` steps, so the estimate is meaningless
/// there; [`psi_curve`] substitutes the Parry series at integer grid points.
pub fn psi_ergodic(
    sc: &SelfConsistency,
    beta: f64,
    n_iters: u64,
    start: OrbitStart,
) -> Result<PsiSample> {
    check_slope(beta)?;
    if n_iters == 0 {
        return Err(Error::Parameter("n_iters must be at least 1".into()));
    }
    let x0 = start.resolve();
    let sum = orbit_sum(beta, x0, n_iters)?;
    if !(sum > 0.0) {
        return Err(Error::Estimation(sum));
    }
    Ok(PsiSample {
        beta,
        psi: sc.slope_for_expectation(sum / n_iters as f64),
        method: PsiMethod::ErgodicAverage { n_iters, x0 },
    })
}

/// How [`psi_curve`] evaluates `ψ^ε` at each grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveMethod {
    ParrySeries {
        tol: f64,
    },
    /// Each grid point gets its own start drawn from a seed derived from
    /// `seed` and the grid index.
    Ergodic {
        n_iters: u64,
        seed: u64,
    },
}

/// `lo, lo + step, …` up to and including `hi`.
pub fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Parameter(format!(
            "grid step must be positive, got {step}"
        )));
    }
    let intervals = ((hi - lo) / step + 1e-9).floor();
    if intervals > 1e9 {
        return Err(Error::Parameter(format!(
            "grid of {intervals} intervals is too large"
        )));
    }
    let n = intervals as usize;
    let mut points: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    let last = points[n];
    if hi - last > 1e-9 * step {
        points.push(hi);
    } else {
        points[n] = hi;
    }
    Ok(points)
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if lo > 1.0 && lo < hi {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "beta range must satisfy 1 < lo < hi, got [{lo}, {hi}]"
        )))
    }
}

/// Samples `ψ^ε` on the closed grid `[lo, hi]`, ordered by β.
pub fn psi_curve(
    sc: &SelfConsistency,
    lo: f64,
    hi: f64,
    step: f64,
    method: CurveMethod,
) -> Result<Vec<PsiSample>> {
    check_domain(lo, hi)?;
    let betas = grid(lo, hi, step)?;
    betas
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| match method {
            CurveMethod::ParrySeries { tol } => psi(sc, beta, tol),
            CurveMethod::Ergodic { .. } if beta.fract() == 0.0 => {
                psi(sc, beta, crate::beta_dynamics::DEFAULT_TOL)
            }
            CurveMethod::Ergodic { n_iters, seed } => psi_ergodic(
                sc,
                beta,
                n_iters,
                OrbitStart::Seeded(derive_seed(seed, i as u64)),
            ),
        })
        .collect()
}

/// Result of a sign-change scan of `ψ^ε(β) - β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointScan {
    /// Non-trivial fixed points, ascending.
    pub roots: Vec<f64>,
    /// Whether the Lebesgue fixed point `β = 2` lies in the scanned range.
    pub lebesgue_fixed_point: bool,
    pub scan_step: f64,
    /// Widest final bisection bracket.
    pub bracket_width: f64,
}

/// Scans `g(β) = ψ^ε(β) - β` on a grid for sign changes and refines each by
/// bisection. Crossings narrower than the scan step, or tangential ones,
/// can be missed.
pub fn find_fixed_points(
    sc: &SelfConsistency,
    lo: f64,
    hi: f64,
    scan_step: f64,
    bisect_tol: f64,
    tol: f64,
) -> Result<FixedPointScan> {
    check_domain(lo, hi)?;
    if !(bisect_tol > 0.0) {
        return Err(Error::Parameter(format!(
            "bisection tolerance must be positive, got {bisect_tol}"
        )));
    }
    let betas = grid(lo, hi, scan_step)?;
    let gap = |beta: f64| psi(sc, beta, tol).map(|s| s.psi - beta);
    let values: Vec<f64> = betas.par_iter().map(|&b| gap(b)).collect::<Result<_>>()?;

    let mut brackets = Vec::new();
    let mut exact = Vec::new();
    for i in 0..betas.len() {
        if values[i] == 0.0 {
            if betas[i] != 2.0 {
                exact.push(betas[i]);
            }
        } else if i + 1 < betas.len() && values[i] * values[i + 1] < 0.0 {
            brackets.push((betas[i], values[i], betas[i + 1]));
        }
    }

    let refined: Vec<(f64, f64)> = brackets
        .par_iter()
        .map(|&(a, ga, b)| bisect(&gap, a, ga, b, bisect_tol))
        .collect::<Result<_>>()?;

    let bracket_width = refined.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut roots: Vec<f64> = refined.into_iter().map(|r| r.0).chain(exact).collect();
    roots.sort_by(f64::total_cmp);
    Ok(FixedPointScan {
        roots,
        lebesgue_fixed_point: lo <= 2.0 && 2.0 <= hi,
        scan_step,
        bracket_width,
    })
}

/// Returns the bracket midpoint and the final bracket width.
fn bisect(
    g: &impl Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut g_lo: f64,
    mut hi: f64,
    width: f64,
) -> Result<(f64, f64)> {
    for _ in 0..200 {
        if hi - lo <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid)?;
        if g_mid == 0.0 {
            return Ok((mid, 0.0));
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), hi - lo))
}

/// `β^k (β - 2)` evaluated by repeated multiplication, which is bit-for-bit
/// the floating-point orbit `T_β^{k+1}(1) + 1` for `β ∈ (2, 3)`.
fn beta_k_product(beta: f64, k: u32) -> f64 {
    (0..k).fold(beta - 2.0, |x, _| x * beta)
}

/// The root `β_k > 2` of `β^k (β - 2) = 1`, by bisection on `[2, 3]`.
///
/// Returns the upper end of the final bracket, where the floating-point
/// product is at least 1, so the computed orbit of 1 lands on (or just
/// above) 0 at step `k + 1` instead of just below 1.
pub fn solve_beta_k(k: u32, tol: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (mut lo, mut hi) = (2.0f64, 3.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_k_product(mid, k) >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Closed-form Parry integrals at `β_k`, where the orbit of 1 is
/// `1, β_k - 2, β_k(β_k - 2), …, β_k^{k-1}(β_k - 2), 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaKMoments {
    pub k: u32,
    pub beta: f64,
    pub normalizer: f64,
    pub first_moment: f64,
    /// `|E_μβ_k - 1/2| / (β_k - 2)` to first order; grows without bound.
    pub c_k: f64,
}

pub fn beta_k_moments(k: u32) -> Result<BetaKMoments> {
    let beta = solve_beta_k(k, 1e-16)?;
    let eta = beta - 2.0;
    let kf = k as f64;
    let geometric = (beta.powi(k as i32) - 1.0) / (beta - 1.0);
    Ok(BetaKMoments {
        k,
        beta,
        normalizer: 1.0 + kf * eta / beta,
        first_moment: 0.5 * (1.0 + geometric * eta * eta / beta),
        c_k: ((geometric * eta - kf) / (2.0 * beta + 2.0 * kf * eta)).abs(),
    })
}

/// `ε₂* = (β̄ - 2) / F(1/E_μβ̄ - 2)`: for every `ε > ε₂*`, `ψ^ε(β̄) > β̄`.
pub fn epsilon_star_2(coupling: Coupling, beta_bar: f64, tol: f64) -> Result<f64> {
    coupling.validate()?;
    if !(beta_bar > 2.0) || !beta_bar.is_finite() {
        return Err(Error::Parameter(format!(
            "threshold needs beta_bar > 2, got {beta_bar}"
        )));
    }
    let e = parry_data(beta_bar, tol)?.expected_value;
    let f = coupling.apply(1.0 / e - 2.0);
    if !(f > 0.0) {
        return Err(Error::ThresholdUndefined(f, beta_bar));
    }
    Ok((beta_bar - 2.0) / f)
}
