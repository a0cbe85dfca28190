//! I.i.d. random external potential `V(x, omega)`.
//!
//! Values are derived counter-style: the draw at a site is a pure function of
//! `(master_seed, realization_index, site)`, so the field seen by a cube does
//! not depend on the region it was sampled over, the enumeration order, or the
//! number of workers. Two cubes sampled separately under the same realization
//! agree on every shared single-particle site.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ConfigPoint;

const PROB_TOLERANCE: f64 = 1e-12;

/// Shape of the single-site measure before scaling by the amplitude.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DisorderKind {
    /// Two values `low < high`; `high` is drawn with probability `q`.
    Bernoulli { low: f64, high: f64, q: f64 },
    FiniteDiscrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    pub amplitude: f64,
}

impl Default for DisorderSpec {
    /// Symmetric Bernoulli on `{0, 1}`.
    fn default() -> Self {
        Self::bernoulli(0.0, 1.0, 0.5, 1.0)
    }
}

impl DisorderSpec {
    pub fn bernoulli(low: f64, high: f64, q: f64, amplitude: f64) -> Self {
        Self { kind: DisorderKind::Bernoulli { low, high, q }, amplitude }
    }

    pub fn finite_discrete(values: Vec<f64>, probs: Vec<f64>, amplitude: f64) -> Self {
        Self { kind: DisorderKind::FiniteDiscrete { values, probs }, amplitude }
    }

    pub fn uniform(low: f64, high: f64, amplitude: f64) -> Self {
        Self { kind: DisorderKind::Uniform { low, high }, amplitude }
    }

    /// Structural checks required before sampling.
    ///
    /// Amplitude zero is accepted here (it is the clean reference operator),
    /// but [`validate_assumption_p`] reports it as a degenerate measure.
    pub fn check(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidDisorder(format!(
                "amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        match &self.kind {
            DisorderKind::Bernoulli { low, high, q } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidDisorder(format!(
                        "Bernoulli needs finite low < high, got {low}, {high}"
                    )));
                }
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::InvalidDisorder(format!(
                        "Bernoulli probability q must lie in (0, 1), got {q}"
                    )));
                }
            }
            DisorderKind::FiniteDiscrete { values, probs } => {
                if values.len() != probs.len() {
                    return Err(Error::InvalidDisorder(format!(
                        "{} values but {} probabilities",
                        values.len(),
                        probs.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDisorder("support values must be finite".into()));
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidDisorder("probabilities must lie in [0, 1]".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOLERANCE {
                    return Err(Error::InvalidDisorder(format!(
                        "probabilities sum to {total}, not 1"
                    )));
                }
                if self.support().len() < 2 {
                    return Err(Error::InvalidDisorder(
                        "support is concentrated in a single point".into(),
                    ));
                }
            }
            DisorderKind::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidDisorder(format!(
                        "Uniform needs finite low < high, got {low}, {high}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distinct unscaled atoms with positive mass (empty for `Uniform`).
    fn support(&self) -> Vec<f64> {
        let mut atoms: Vec<f64> = match &self.kind {
            DisorderKind::Bernoulli { low, high, .. } => vec![*low, *high],
            DisorderKind::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| *v)
                .collect(),
            DisorderKind::Uniform { .. } => Vec::new(),
        };
        atoms.sort_by(f64::total_cmp);
        atoms.dedup();
        atoms
    }

    /// Scaled `[min, max]` of the support.
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = match &self.kind {
            DisorderKind::Bernoulli { low, high, .. } | DisorderKind::Uniform { low, high } => (*low, *high),
            DisorderKind::FiniteDiscrete { .. } => {
                let s = self.support();
                (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0))
            }
        };
        (self.amplitude * lo, self.amplitude * hi)
    }

    /// `(low, high, q)` after scaling, for Bernoulli measures.
    pub fn bernoulli_parts(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            DisorderKind::Bernoulli { low, high, q } => Some((self.amplitude * low, self.amplitude * high, q)),
            _ => None,
        }
    }

    /// Inverse-CDF draw from a uniform variate `u` in `[0, 1)`.
    fn quantile(&self, u: f64) -> f64 {
        let raw = match &self.kind {
            DisorderKind::Bernoulli { low, high, q } => {
                if u < *q {
                    *high
                } else {
                    *low
                }
            }
            DisorderKind::FiniteDiscrete { values, probs } => {
                let mut acc = 0.0;
                let mut pick = *values.last().expect("checked nonempty");
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        pick = *v;
                        break;
                    }
                }
                pick
            }
            DisorderKind::Uniform { low, high } => low + (high - low) * u,
        };
        self.amplitude * raw
    }

    /// `V(site, omega)` for realization `(master_seed, realization_index)`.
    pub fn value_at(&self, master_seed: u64, realization_index: u64, site: &[i64]) -> f64 {
        self.quantile(site_uniform(master_seed, realization_index, site))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform variate in `[0, 1)` keyed by seed, realization and site.
pub(crate) fn site_uniform(master_seed: u64, realization_index: u64, site: &[i64]) -> f64 {
    let mut h = splitmix64(master_seed ^ 0x5851_f42d_4c95_7f2d);
    h = splitmix64(h ^ realization_index);
    h = splitmix64(h ^ site.len() as u64);
    for &c in site {
        h = splitmix64(h ^ c as u64);
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One sample of the field on a finite set of single-particle sites.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization {
    values: BTreeMap<Vec<i64>, f64>,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl DisorderRealization {
    /// Realization with explicitly chosen values, e.g. for exact enumeration.
    pub fn from_values(values: BTreeMap<Vec<i64>, f64>, master_seed: u64, realization_index: u64) -> Self {
        Self { values, master_seed, realization_index }
    }

    /// Zero potential on `region`.
    pub fn zero<'a>(region: impl IntoIterator<Item = &'a Vec<i64>>) -> Self {
        Self::from_values(region.into_iter().map(|s| (s.clone(), 0.0)).collect(), 0, 0)
    }

    pub fn value(&self, site: &[i64]) -> Result<f64> {
        self.values
            .get(site)
            .copied()
            .ok_or_else(|| Error::SiteOutsideRealization(site.to_vec()))
    }

    pub fn sites(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.values.keys()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &BTreeMap<Vec<i64>, f64> {
        &self.values
    }
}

/// Draws the field on `region` for realization `(master_seed, realization_index)`.
pub fn sample<'a>(
    spec: &DisorderSpec,
    region: impl IntoIterator<Item = &'a Vec<i64>>,
    master_seed: u64,
    realization_index: u64,
) -> Result<DisorderRealization> {
    spec.check()?;
    let values: BTreeMap<Vec<i64>, f64> = region
        .into_iter()
        .map(|s| (s.clone(), spec.value_at(master_seed, realization_index, s)))
        .collect();
    if values.is_empty() {
        return Err(Error::InvalidDisorder("sampling region is empty".into()));
    }
    Ok(DisorderRealization { values, master_seed, realization_index })
}

/// `sum_j V(x_j, omega)`; every particle reads the same single-particle field.
pub fn multi_particle_potential(real: &DisorderRealization, x: &ConfigPoint) -> Result<f64> {
    x.particles().map(|p| real.value(p)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Smallest `M` with the scaled support inside `[-M, M]`.
    pub bound: f64,
    pub support_points: Option<usize>,
    pub contains_zero: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Bounded, non-degenerate disorder check. Never fails; problems are listed.
pub fn validate_assumption_p(spec: &DisorderSpec) -> AssumptionReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    if let Err(e) = spec.check() {
        violations.push(e.to_string());
    }
    let (lo, hi) = spec.range();
    let bound = lo.abs().max(hi.abs());
    let support_points = match spec.kind {
        DisorderKind::Uniform { .. } => None,
        _ => Some(spec.support().len()),
    };
    if spec.amplitude == 0.0 {
        violations.push("amplitude 0 collapses the measure to the single point 0".into());
    }
    if !bound.is_finite() {
        violations.push("support is unbounded".into());
    }
    let contains_zero = match &spec.kind {
        DisorderKind::Uniform { .. } => lo <= 0.0 && 0.0 <= hi,
        _ => spec.support().iter().any(|v| v * spec.amplitude == 0.0),
    };
    if !contains_zero {
        warnings.push(format!("0 is not in the support [{lo}, {hi}]; the support is not translated"));
    }
    AssumptionReport {
        bound,
        support_points,
        contains_zero,
        violations,
        warnings,
        notes: vec!["moment condition holds for every eta > 0 since the support is bounded".into()],
    }
}
