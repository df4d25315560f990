//! Piecewise-constant functions and probability densities on `[0, 1]`.
//!
//! A step function is stored as its breakpoints `jumps` (starting at exactly
//! `0.0` and ending at exactly `1.0`) together with one value per interval.
//! Values are right-continuous: the value attached to `[jumps[i], jumps[i+1])`
//! is returned for every point of that interval, and the last value is also
//! returned at `x = 1`.
//!
//! Binary operations between two step functions work on the merged breakpoint
//! partition, so distances and variations are computed exactly rather than on
//! a sampling grid.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Breakpoints closer than this are treated as one point.
pub const MERGE_TOL: f64 = 1e-13;

/// A signed piecewise-constant function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    jumps: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(jumps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_partition(&jumps)?;
        if values.len() + 1 != jumps.len() {
            return Err(Error::InvalidDensity(format!(
                "{} breakpoints need {} values, got {}",
                jumps.len(),
                jumps.len() - 1,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("non-finite value {v}")));
        }
        Ok(Self { jumps, values })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            jumps: vec![0.0, 1.0],
            values: vec![c],
        }
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(x));
        }
        Ok(self.value_at(x))
    }

    /// Right-continuous lookup without the domain check. Points outside
    /// `[0, 1]` are clamped to the first or last interval.
    pub(crate) fn value_at(&self, x: f64) -> f64 {
        self.values[self.interval_index(x)]
    }

    fn interval_index(&self, x: f64) -> usize {
        let idx = self.jumps.partition_point(|&j| j <= x);
        idx.saturating_sub(1).min(self.values.len() - 1)
    }

    pub fn integral(&self) -> f64 {
        self.intervals().map(|(a, b, v)| v * (b - a)).sum()
    }

    /// `∫ |f| dλ`.
    pub fn abs_integral(&self) -> f64 {
        self.intervals().map(|(a, b, v)| v.abs() * (b - a)).sum()
    }

    /// `∫ x f(x) dx`.
    pub fn first_moment(&self) -> f64 {
        self.intervals()
            .map(|(a, b, v)| 0.5 * v * (b * b - a * a))
            .sum()
    }

    /// Sum of absolute height changes at the interior breakpoints. The
    /// boundary values at 0 and 1 do not contribute.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            jumps: self.jumps.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Combines two step functions pointwise on their merged partition.
    pub fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let jumps = merge_partitions(&self.jumps, &other.jumps);
        let values = jumps
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                op(self.value_at(mid), other.value_at(mid))
            })
            .collect();
        Self { jumps, values }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// Iterates over `(left, right, value)` for every interval.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.jumps
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    /// Joins neighbouring intervals whose values are equal up to round-off.
    pub(crate) fn merge_equal_neighbours(&mut self) {
        if self.values.len() < 2 {
            return;
        }
        let mut jumps = Vec::with_capacity(self.jumps.len());
        let mut values = Vec::with_capacity(self.values.len());
        jumps.push(self.jumps[0]);
        let mut current = self.values[0];
        let mut current_len = self.jumps[1] - self.jumps[0];
        for i in 1..self.values.len() {
            let v = self.values[i];
            let len = self.jumps[i + 1] - self.jumps[i];
            if heights_equal(current, v) {
                let total = current_len + len;
                if current != v && total > 0.0 {
                    current = (current * current_len + v * len) / total;
                }
                current_len = total;
            } else {
                jumps.push(self.jumps[i]);
                values.push(current);
                current = v;
                current_len = len;
            }
        }
        jumps.push(1.0);
        values.push(current);
        self.jumps = jumps;
        self.values = values;
    }

    pub(crate) fn from_parts_unchecked(jumps: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert!(check_partition(&jumps).is_ok());
        debug_assert_eq!(jumps.len(), values.len() + 1);
        Self { jumps, values }
    }
}

fn heights_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs())
}

fn check_partition(jumps: &[f64]) -> Result<()> {
    if jumps.len() < 2 {
        return Err(Error::InvalidDensity(
            "need at least the two breakpoints 0 and 1".into(),
        ));
    }
    if jumps[0] != 0.0 || jumps[jumps.len() - 1] != 1.0 {
        return Err(Error::InvalidDensity(
            "breakpoints must start at 0 and end at 1".into(),
        ));
    }
    for w in jumps.windows(2) {
        if !(w[1] - w[0] > MERGE_TOL) {
            return Err(Error::InvalidDensity(format!(
                "breakpoints {} and {} are not strictly increasing",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Union of two partitions of `[0, 1]`, with points closer than
/// [`MERGE_TOL`] collapsed onto the earlier one.
pub(crate) fn merge_partitions(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i] <= b[j]);
        let v = if take_a {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        push_breakpoint(&mut out, v);
    }
    out
}

/// Appends `v` to a sorted breakpoint list unless it is within
/// [`MERGE_TOL`] of the last point. The right endpoint 1 always survives.
pub(crate) fn push_breakpoint(out: &mut Vec<f64>, v: f64) {
    let n = out.len();
    if n == 0 || v - out[n - 1] > MERGE_TOL {
        out.push(v);
    } else if v == 1.0 && n > 1 {
        out[n - 1] = 1.0;
    }
}

/// A nonnegative step function on `[0, 1]`, usually normalized to integral 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct StepDensity(StepFunction);

#[derive(Serialize, Deserialize)]
struct DensityRepr {
    jumps: Vec<f64>,
    heights: Vec<f64>,
}

impl TryFrom<DensityRepr> for StepDensity {
    type Error = Error;

    fn try_from(raw: DensityRepr) -> Result<Self> {
        StepDensity::new(raw.jumps, raw.heights)
    }
}

impl From<StepDensity> for DensityRepr {
    fn from(f: StepDensity) -> Self {
        DensityRepr {
            jumps: f.0.jumps,
            heights: f.0.values,
        }
    }
}

impl StepDensity {
    pub fn new(jumps: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        let inner = StepFunction::new(jumps, heights)?;
        if let Some(h) = inner.values.iter().find(|&&h| h < 0.0) {
            return Err(Error::InvalidDensity(format!("negative height {h}")));
        }
        Ok(Self(inner))
    }

    /// Lebesgue measure on `[0, 1]`.
    pub fn uniform() -> Self {
        Self(StepFunction::constant(1.0))
    }

    pub(crate) fn from_function_unchecked(f: StepFunction) -> Self {
        debug_assert!(f.values.iter().all(|&h| h >= 0.0));
        Self(f)
    }

    pub fn as_function(&self) -> &StepFunction {
        &self.0
    }

    pub fn jumps(&self) -> &[f64] {
        &self.0.jumps
    }

    pub fn heights(&self) -> &[f64] {
        &self.0.values
    }

    /// Number of breakpoints, including 0 and 1.
    pub fn jump_count(&self) -> usize {
        self.0.jumps.len()
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.0.evaluate(x)
    }

    pub(crate) fn value_at(&self, x: f64) -> f64 {
        self.0.value_at(x)
    }

    /// Exact integral `Σ y_i (x_{i+1} - x_i)`.
    pub fn integral(&self) -> f64 {
        self.0.integral()
    }

    /// First moment `Σ (y_i / 2)(x_{i+1}² - x_i²)`.
    ///
    /// The value is the mean of the density only when it integrates to 1;
    /// otherwise it is returned unscaled.
    pub fn expectation(&self) -> f64 {
        self.0.first_moment()
    }

    pub fn total_variation(&self) -> f64 {
        self.0.total_variation()
    }

    /// Divides every height by the integral.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.integral();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDensity(mass));
        }
        Ok(Self(self.0.scale(1.0 / mass)))
    }

    /// `∫ |f - g| dλ`, exact on the merged partition.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0.sub(&other.0).abs_integral()
    }

    /// Total variation of the signed step function `f - g`.
    pub fn variation_distance(&self, other: &Self) -> f64 {
        self.0.sub(&other.0).total_variation()
    }

    /// `a f + b g` on the merged partition, for `a, b >= 0`.
    pub fn linear_combination(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Parameter(format!(
                "coefficients must be finite and nonnegative, got {a} and {b}"
            )));
        }
        Ok(Self(f.0.zip_with(&g.0, |x, y| a * x + b * y)))
    }
}

/// Draws a random normalized step density with `inner_jumps` interior
/// breakpoints, deterministically from `seed`.
pub fn random_density(inner_jumps: usize, seed: u64) -> Result<StepDensity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_density_with(inner_jumps, &mut rng)
}

/// Same as [`random_density`] but draws from a caller-owned generator.
///
/// Interior breakpoints and raw heights are uniform on `(0, 1)`; heights
/// are then divided by the integral of the raw step function. A draw with
/// two breakpoints closer than [`MERGE_TOL`] is discarded and redrawn.
pub fn random_density_with<R: Rng + ?Sized>(
    inner_jumps: usize,
    rng: &mut R,
) -> Result<StepDensity> {
    if inner_jumps == 0 {
        return Err(Error::Parameter("inner_jumps must be at least 1".into()));
    }
    let jumps = loop {
        let mut inner: Vec<f64> = (0..inner_jumps).map(|_| open_unit(rng)).collect();
        inner.sort_by(f64::total_cmp);
        let mut jumps = Vec::with_capacity(inner_jumps + 2);
        jumps.push(0.0);
        jumps.extend(inner);
        jumps.push(1.0);
        if jumps.windows(2).all(|w| w[1] - w[0] > MERGE_TOL) {
            break jumps;
        }
    };
    let raw: Vec<f64> = (0..=inner_jumps).map(|_| open_unit(rng)).collect();
    let mass: f64 = jumps
        .windows(2)
        .zip(&raw)
        .map(|(w, y)| y * (w[1] - w[0]))
        .sum();
    let heights = raw.iter().map(|y| y / mass).collect();
    Ok(StepDensity(StepFunction::from_parts_unchecked(
        jumps, heights,
    )))
}
