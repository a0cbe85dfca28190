//! Probability that both cubes of a separable pair are singular at a common
//! energy of a compact interval, by Monte Carlo or by exact enumeration of
//! Bernoulli configurations.
//!
//! "Some energy in `I`" is probed on a uniform grid plus every finite-volume
//! eigenvalue of either cube inside `I`, so reported estimates are relative to
//! that probe set.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::disorder::{sample, DisorderRealization, DisorderSpec};
use crate::error::{Error, Result};
use crate::geometry::{is_separable_pair, ConfigPoint, Cube};
use crate::operator::{HamiltonianMatrix, InteractionSpec};
use crate::parallel::{map_indexed, Workers};
use crate::spectral::{eigensolve, CubeResolvent, DEFAULT_DENSE_LIMIT};

/// Largest single-particle site count accepted by exact enumeration.
pub const EXACT_SITE_LIMIT: usize = 20;

/// Two-sided 95% normal quantile.
pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MsaMode {
    MonteCarlo,
    ExactBernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MsaParams {
    /// Total particle number `N`.
    pub total_particles: usize,
    /// Particles in the cubes, `1 <= n <= N`.
    pub n: usize,
    pub d: usize,
    pub mass: f64,
    /// Reporting exponent; only enters the target bound.
    pub p: f64,
    pub coupling: f64,
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub grid_step: f64,
    pub radii: Vec<u32>,
    pub realizations: usize,
    pub mode: MsaMode,
    pub master_seed: u64,
    pub dense_limit: usize,
    pub workers: Workers,
}

impl Default for MsaParams {
    fn default() -> Self {
        Self {
            total_particles: 1,
            n: 1,
            d: 1,
            mass: 0.5,
            p: 7.0,
            coupling: 0.0,
            energy_lo: 0.0,
            energy_hi: 1.0,
            grid_step: 1e-3,
            radii: vec![8],
            realizations: 100,
            mode: MsaMode::MonteCarlo,
            master_seed: 0,
            dense_limit: DEFAULT_DENSE_LIMIT,
            workers: Workers::default(),
        }
    }
}

impl MsaParams {
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if self.n < 1 || self.n > self.total_particles || self.d < 1 {
            return fail(format!("need 1 <= n <= N and d >= 1, got n={}, N={}, d={}", self.n, self.total_particles, self.d));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return fail(format!("mass m must be > 0, got {}", self.mass));
        }
        if !(self.energy_lo.is_finite() && self.energy_hi.is_finite() && self.energy_lo <= self.energy_hi) {
            return fail(format!("need E_lo <= E_hi, got [{}, {}]", self.energy_lo, self.energy_hi));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return fail(format!("grid step must be > 0, got {}", self.grid_step));
        }
        if self.realizations < 1 {
            return fail("realizations must be >= 1".into());
        }
        if self.radii.is_empty() || self.radii.contains(&0) {
            return fail(format!("scale list must be nonempty with every L >= 1, got {:?}", self.radii));
        }
        if self.p <= 6.0 * (self.total_particles * self.d) as f64 {
            crate::note(&format!("p = {} does not satisfy p > 6Nd = {}", self.p, 6 * self.total_particles * self.d));
        }
        Ok(())
    }

    /// `L^{-2p 4^{N-n}}`.
    pub fn target(&self, radius: u32) -> f64 {
        let exponent = 2.0 * self.p * 4f64.powi((self.total_particles - self.n) as i32);
        f64::from(radius).powf(-exponent)
    }

    /// Uniform probe grid `E_lo + k step` over the interval.
    pub fn energy_grid(&self) -> Vec<f64> {
        let count = ((self.energy_hi - self.energy_lo) / self.grid_step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.energy_lo + k as f64 * self.grid_step).collect()
    }
}

/// `[L0, ceil(L0^a), ceil(ceil(L0^a)^a), ...]`.
///
/// Powers within a relative `1e-9` of an integer snap to it, so `4^1.5` gives 8.
pub fn scale_sequence(l0: u32, count: usize, alpha: f64) -> Result<Vec<u32>> {
    if l0 < 2 || count < 1 || !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "scale sequence needs L0 >= 2, count >= 1, alpha > 1; got {l0}, {count}, {alpha}"
        )));
    }
    let mut out = vec![l0];
    while out.len() < count {
        let prev = *out.last().expect("nonempty");
        let x = f64::from(prev).powf(alpha);
        let snapped = if (x - x.round()).abs() <= 1e-9 * x { x.round() } else { x.ceil() };
        if snapped > f64::from(u32::MAX) {
            return Err(Error::Domain(format!("scale {snapped} overflows")));
        }
        out.push((snapped as u32).max(prev + 1));
    }
    Ok(out)
}

/// Default pair at scale `L`: `u` at the origin, `v` shifted by `7 N L + 1`
/// along the first axis.
pub fn canonical_pair(n: usize, d: usize, radius: u32, total_particles: usize) -> (ConfigPoint, ConfigPoint) {
    let u = ConfigPoint::origin(n, d);
    let v = u.shifted(0, 7 * total_particles as i64 * i64::from(radius) + 1);
    (u, v)
}

/// Single-particle sites read by the two cubes.
pub fn pair_region(u: &ConfigPoint, v: &ConfigPoint, radius: u32) -> BTreeSet<Vec<i64>> {
    let mut sites = Cube::new(u.clone(), radius).rectangle().particle_projection();
    sites.extend(Cube::new(v.clone(), radius).rectangle().particle_projection());
    sites
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairOutcome {
    pub singular: bool,
    /// Size of the probe set (grid plus in-interval eigenvalues).
    pub energy_points: usize,
    /// First probe energy at which both cubes were singular.
    pub witness: Option<f64>,
}

fn check_pair(u: &ConfigPoint, v: &ConfigPoint, radius: u32, params: &MsaParams) -> Result<()> {
    if u.n() != params.n || u.d() != params.d {
        return Err(Error::DimensionMismatch {
            expected: format!("n={}, d={}", params.n, params.d),
            found: format!("n={}, d={}", u.n(), u.d()),
        });
    }
    if !is_separable_pair(u, v, radius, params.total_particles)? {
        return Err(Error::NonSeparablePair { u: u.coords().to_vec(), v: v.coords().to_vec(), radius });
    }
    Ok(())
}

/// Does some probe energy in `I` make both cubes singular under `real`?
pub fn pair_singular_event(
    u: &ConfigPoint,
    v: &ConfigPoint,
    radius: u32,
    params: &MsaParams,
    ispec: &InteractionSpec,
    real: &DisorderRealization,
) -> Result<PairOutcome> {
    check_pair(u, v, radius, params)?;
    pair_event_unchecked(u, v, radius, params, ispec, real, &params.energy_grid())
}

fn pair_event_unchecked(
    u: &ConfigPoint,
    v: &ConfigPoint,
    radius: u32,
    params: &MsaParams,
    ispec: &InteractionSpec,
    real: &DisorderRealization,
    grid: &[f64],
) -> Result<PairOutcome> {
    let resolvent = |center: &ConfigPoint| -> Result<CubeResolvent> {
        let cube = Cube::new(center.clone(), radius);
        let hm = HamiltonianMatrix::build(&cube.rectangle(), real, ispec, params.coupling)?;
        let spec = eigensolve(&hm, params.dense_limit)?;
        CubeResolvent::new(&cube, &hm, &spec, params.mass, params.total_particles)
    };
    let ru = resolvent(u)?;
    let rv = resolvent(v)?;
    let in_interval = |e: &&f64| (params.energy_lo..=params.energy_hi).contains(*e);
    let resonant: Vec<f64> = ru
        .eigenvalues()
        .iter()
        .filter(in_interval)
        .chain(rv.eigenvalues().iter().filter(in_interval))
        .copied()
        .collect();
    let energy_points = grid.len() + resonant.len();
    let witness = resonant
        .iter()
        .chain(grid)
        .copied()
        .find(|&e| ru.is_singular(e) && rv.is_singular(e));
    Ok(PairOutcome { singular: witness.is_some(), energy_points, witness })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairEstimate {
    pub radius: u32,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub target: f64,
    pub samples_used: usize,
    pub energy_points_used: usize,
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        (center - half).clamp(0.0, 1.0).min(p),
        (center + half).clamp(0.0, 1.0).max(p),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactOutcome {
    pub probability: f64,
    /// Sum of all configuration weights; 1 up to rounding.
    pub total_mass: f64,
    pub configurations: usize,
    pub energy_points: usize,
}

/// Sums the Bernoulli weights of every potential configuration on the pair's
/// single-particle sites for which the pair event occurs.
pub fn exact_bernoulli_probability(
    u: &ConfigPoint,
    v: &ConfigPoint,
    radius: u32,
    params: &MsaParams,
    dspec: &DisorderSpec,
    ispec: &InteractionSpec,
) -> Result<ExactOutcome> {
    check_pair(u, v, radius, params)?;
    let (low, high, q) = dspec
        .bernoulli_parts()
        .ok_or_else(|| Error::InvalidDisorder("exact enumeration needs a Bernoulli measure".into()))?;
    dspec.check()?;
    let sites: Vec<Vec<i64>> = pair_region(u, v, radius).into_iter().collect();
    if sites.len() > EXACT_SITE_LIMIT {
        return Err(Error::EnumerationTooLarge { sites: sites.len(), limit: EXACT_SITE_LIMIT });
    }
    let configurations = 1usize << sites.len();
    let grid = params.energy_grid();
    let per_config = map_indexed(configurations, params.workers, |mask| {
        let mut values = BTreeMap::new();
        let mut weight = 1.0;
        for (bit, site) in sites.iter().enumerate() {
            let up = mask & (1 << bit) != 0;
            values.insert(site.clone(), if up { high } else { low });
            weight *= if up { q } else { 1.0 - q };
        }
        let real = DisorderRealization::from_values(values, params.master_seed, mask as u64);
        let outcome = pair_event_unchecked(u, v, radius, params, ispec, &real, &grid)?;
        Ok((weight, outcome))
    })?;
    let mut probability = 0.0;
    let mut total_mass = 0.0;
    let mut energy_points = 0;
    for (w, o) in &per_config {
        total_mass += w;
        energy_points += o.energy_points;
        if o.singular {
            probability += w;
        }
    }
    Ok(ExactOutcome { probability, total_mass, configurations, energy_points })
}

/// Pair-singularity probability for one pair at one scale.
pub fn estimate_pair_probability(
    u: &ConfigPoint,
    v: &ConfigPoint,
    radius: u32,
    params: &MsaParams,
    dspec: &DisorderSpec,
    ispec: &InteractionSpec,
) -> Result<PairEstimate> {
    params.check()?;
    let target = params.target(radius);
    match params.mode {
        MsaMode::ExactBernoulli => {
            let exact = exact_bernoulli_probability(u, v, radius, params, dspec, ispec)?;
            let p = exact.probability.clamp(0.0, 1.0);
            Ok(PairEstimate {
                radius,
                estimate: p,
                ci_low: p,
                ci_high: p,
                target,
                samples_used: exact.configurations,
                energy_points_used: exact.energy_points,
            })
        }
        MsaMode::MonteCarlo => {
            check_pair(u, v, radius, params)?;
            dspec.check()?;
            let region = pair_region(u, v, radius);
            let grid = params.energy_grid();
            let outcomes = map_indexed(params.realizations, params.workers, |r| {
                let real = sample(dspec, &region, params.master_seed, r as u64)?;
                pair_event_unchecked(u, v, radius, params, ispec, &real, &grid)
            })?;
            let hits = outcomes.iter().filter(|o| o.singular).count();
            let (ci_low, ci_high) = wilson_interval(hits, outcomes.len(), WILSON_Z95);
            Ok(PairEstimate {
                radius,
                estimate: hits as f64 / outcomes.len() as f64,
                ci_low,
                ci_high,
                target,
                samples_used: outcomes.len(),
                energy_points_used: outcomes.iter().map(|o| o.energy_points).sum(),
            })
        }
    }
}

/// One estimate per scale in `params.radii`, each on the canonical pair.
pub fn msa_report(params: &MsaParams, dspec: &DisorderSpec, ispec: &InteractionSpec) -> Result<Vec<PairEstimate>> {
    params.check()?;
    params
        .radii
        .iter()
        .map(|&radius| {
            let (u, v) = canonical_pair(params.n, params.d, radius, params.total_particles);
            estimate_pair_probability(&u, &v, radius, params, dspec, ispec)
        })
        .collect()
}
