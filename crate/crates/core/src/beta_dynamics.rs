//! The β-map `T_β(x) = βx mod 1`, the orbit of 1 and the Parry invariant
//! density `h_β = Σ β^{-n} 1_{[0, T_β^n(1))}`.
//!
//! The series is truncated at the first index `N` with `β^{-N} < tol`.
//! Floating-point orbits of 1 drift by about `log2 β` bits per step, but by
//! the time the drift matters the weights are below `1e-15`, so no extended
//! precision is used.

use serde::Serialize;

use crate::error::{check_slope, Error, Result};
use crate::step_density::{push_breakpoint, StepDensity, StepFunction};

/// Default series truncation: terms with weight below this are dropped.
pub const DEFAULT_TOL: f64 = 1e-14;

/// Orbit points below this are taken to be exactly 0, ending the orbit.
pub const ZERO_TOL: f64 = 1e-13;

pub fn beta_map(beta: f64, x: f64) -> Result<f64> {
    check_slope(beta)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(x));
    }
    Ok(step(beta, x))
}

/// `βx - ⌊βx⌋` without argument checks.
#[inline]
pub(crate) fn step(beta: f64, x: f64) -> f64 {
    let v = beta * x;
    v - v.floor()
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "tolerance must lie in (0, 1), got {tol}"
        )))
    }
}

/// `[1, T_β(1), T_β²(1), …]`, keeping index `n` while `β^{-n} >= tol`.
/// The orbit stops early at the first iterate that is zero (below
/// [`ZERO_TOL`]); that zero is not included.
pub fn orbit_of_one(beta: f64, tol: f64) -> Result<Vec<f64>> {
    check_slope(beta)?;
    check_tol(tol)?;
    let mut orbit = vec![1.0];
    let mut weight = 1.0;
    let mut x = 1.0;
    loop {
        weight /= beta;
        if weight < tol {
            break;
        }
        x = step(beta, x);
        if x < ZERO_TOL {
            break;
        }
        orbit.push(x);
    }
    Ok(orbit)
}

/// Truncated series data for the Parry density of `T_β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParryData {
    pub beta: f64,
    /// `T_β^n(1)` for the retained indices; `orbit[0] = 1`.
    pub orbit: Vec<f64>,
    /// `Σ T_β^n(1) / β^n`, the integral of the unnormalized density.
    pub normalizer: f64,
    /// `Σ (T_β^n(1))² / (2 β^n)`.
    pub first_moment: f64,
    /// `E_μβ = first_moment / normalizer`.
    pub expected_value: f64,
    /// Upper bound on the dropped tail of either series.
    pub truncation_bound: f64,
}

pub fn parry_data(beta: f64, tol: f64) -> Result<ParryData> {
    let orbit = orbit_of_one(beta, tol)?;
    let mut normalizer = 0.0;
    let mut first_moment = 0.0;
    let mut weight = 1.0;
    for &x in &orbit {
        normalizer += weight * x;
        first_moment += 0.5 * weight * x * x;
        weight /= beta;
    }
    // weight is now β^{-len}. If the orbit hit 0 the series is exact;
    // otherwise the tail is at most Σ_{k >= len} β^{-k} = β^{-(len-1)} / (β - 1).
    let truncation_bound = if weight < tol {
        weight * beta / (beta - 1.0)
    } else {
        0.0
    };
    Ok(ParryData {
        beta,
        normalizer,
        first_moment,
        expected_value: first_moment / normalizer,
        truncation_bound,
        orbit,
    })
}

/// The truncated Parry series as a normalized step density.
pub fn parry_density(beta: f64, tol: f64) -> Result<StepDensity> {
    let orbit = orbit_of_one(beta, tol)?;
    let mut weighted: Vec<(f64, f64)> = Vec::with_capacity(orbit.len());
    let mut weight = 1.0;
    for &x in &orbit {
        weighted.push((x, weight));
        weight /= beta;
    }
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Group orbit points that coincide up to the merge tolerance.
    let mut jumps = vec![0.0];
    let mut group_weights: Vec<f64> = Vec::with_capacity(weighted.len());
    for &(x, w) in &weighted {
        let before = jumps.len();
        push_breakpoint(&mut jumps, x);
        if jumps.len() > before {
            group_weights.push(w);
        } else {
            *group_weights.last_mut().expect("orbit points are positive") += w;
        }
    }
    debug_assert_eq!(*jumps.last().unwrap(), 1.0);

    // On [p_j, p_{j+1}) the density is the total weight of orbit points >= p_{j+1}.
    let mut heights = vec![0.0; group_weights.len()];
    let mut acc = 0.0;
    for j in (0..group_weights.len()).rev() {
        acc += group_weights[j];
        heights[j] = acc;
    }
    StepDensity::from_function_unchecked(StepFunction::from_parts_unchecked(jumps, heights))
        .normalize()
}

/// Birkhoff sum `Σ_{n<N} T_β^n(x0)`, accumulated with compensation.
pub fn orbit_sum(beta: f64, x0: f64, n_iters: u64) -> Result<f64> {
    check_slope(beta)?;
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain(x0));
    }
    let mut x = x0;
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for _ in 0..n_iters {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
        x = step(beta, x);
    }
    Ok(sum + carry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_map_examples() {
        assert_eq!(beta_map(2.0, 0.75).unwrap(), 0.5);
        assert_eq!(beta_map(2.0, 1.0).unwrap(), 0.0);
        assert!((beta_map(2.5, 0.9).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn beta_map_rejects_bad_arguments() {
        assert_eq!(beta_map(1.0, 0.5), Err(Error::Slope(1.0)));
        assert_eq!(beta_map(0.5, 0.5), Err(Error::Slope(0.5)));
        assert_eq!(beta_map(2.0, 1.5), Err(Error::Domain(1.5)));
        assert!(parry_data(0.9, DEFAULT_TOL).is_err());
    }

    #[test]
    fn orbit_terminates_at_integers() {
        assert_eq!(orbit_of_one(2.0, DEFAULT_TOL).unwrap(), vec![1.0]);
        assert_eq!(orbit_of_one(3.0, DEFAULT_TOL).unwrap(), vec![1.0]);
    }

    #[test]
    fn orbit_of_silver_ratio() {
        // β_1 = 1 + √2 solves β(β - 2) = 1, so T²(1) = 0.
        let beta = crate::psi::solve_beta_k(1, 1e-16).unwrap();
        assert!((beta - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        let orbit = orbit_of_one(beta, DEFAULT_TOL).unwrap();
        assert_eq!(orbit.len(), 2, "{orbit:?}");
        assert!((orbit[1] - (2f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn orbit_truncation_follows_tolerance() {
        let orbit = orbit_of_one(2.5, 1e-3).unwrap();
        // 2.5^-7 ≈ 1.6e-3 >= 1e-3 > 2.5^-8
        assert_eq!(orbit.len(), 8);
        assert!(orbit[1..].iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn parry_data_at_two() {
        let p = parry_data(2.0, DEFAULT_TOL).unwrap();
        assert_eq!(p.normalizer, 1.0);
        assert_eq!(p.first_moment, 0.5);
        assert_eq!(p.expected_value, 0.5);
        assert_eq!(p.truncation_bound, 0.0);
        assert_eq!(parry_data(3.0, DEFAULT_TOL).unwrap().expected_value, 0.5);
    }

    #[test]
    fn parry_data_at_first_beta_k() {
        let beta = crate::psi::solve_beta_k(1, 1e-16).unwrap();
        let p = parry_data(beta, DEFAULT_TOL).unwrap();
        let normalizer = 1.0 + (beta - 2.0) / beta;
        let moment = 0.5 * (1.0 + (beta - 2.0).powi(2) / beta);
        assert!((p.normalizer - normalizer).abs() < 1e-12);
        assert!((p.first_moment - moment).abs() < 1e-12);
    }

    #[test]
    fn parry_density_examples() {
        assert_eq!(
            parry_density(2.0, DEFAULT_TOL).unwrap(),
            StepDensity::uniform()
        );
        assert_eq!(
            parry_density(4.0, DEFAULT_TOL).unwrap(),
            StepDensity::uniform()
        );
        let h = parry_density(2.5, DEFAULT_TOL).unwrap();
        let p = parry_data(2.5, DEFAULT_TOL).unwrap();
        assert!((h.expectation() - p.expected_value).abs() < 1e-10);
        assert!((h.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn truncation_bound_dominates_tail() {
        for beta in [2.3, 2.7, 3.9] {
            let coarse = parry_data(beta, 1e-4).unwrap();
            let fine = parry_data(beta, 1e-15).unwrap();
            assert!((fine.normalizer - coarse.normalizer).abs() <= coarse.truncation_bound);
        }
    }

    #[test]
    fn expected_value_bracket_on_random_betas() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let beta: f64 = rng.gen_range(2.0..5.0);
            let e = parry_data(beta, DEFAULT_TOL).unwrap().expected_value;
            assert!(e >= (beta - 1.0) / (2.0 * beta), "beta {beta}");
            assert!(e < 0.5, "beta {beta}");
        }
        for m in 2..=5 {
            let beta = m as f64;
            assert!((parry_data(beta, DEFAULT_TOL).unwrap().expected_value - 0.5).abs() < 1e-14);
            assert_eq!(
                parry_density(beta, DEFAULT_TOL).unwrap(),
                StepDensity::uniform()
            );
        }
    }

    #[test]
    fn log_lipschitz_bound_near_two() {
        for j in 1..=8 {
            let eta = 10f64.powi(-j);
            let e = parry_data(2.0 + eta, DEFAULT_TOL).unwrap().expected_value;
            let bound = eta * (1.0 + eta.ln().abs());
            assert!((0.5 - e) <= bound, "j = {j}: {} > {bound}", 0.5 - e);
        }
    }

    #[test]
    fn birkhoff_average_matches_parry_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        for beta in [2.1, 2.5, 2.9] {
            let e = parry_data(beta, DEFAULT_TOL).unwrap().expected_value;
            for _ in 0..10 {
                let x0: f64 = rng.gen();
                let avg = orbit_sum(beta, x0, n).unwrap() / n as f64;
                assert!((avg - e).abs() <= 5e-3, "beta {beta}: {avg} vs {e}");
            }
        }
    }
}
