//! Localization observables measured on finite-volume spectra: exponential
//! decay of eigenfunctions and the Hilbert-Schmidt moment
//! `sup_{|f| <= 1} || |X|^{s/2} f(H) P_I 1_K ||_HS^2`.

use faer::Mat;
use serde::Serialize;

use crate::disorder::{sample, DisorderSpec};
use crate::error::{Error, Result};
use crate::geometry::{sup_dist, ConfigPoint, Rectangle};
use crate::operator::{HamiltonianMatrix, InteractionSpec};
use crate::parallel::{map_indexed, Workers};
use crate::spectral::{eigensolve, Spectrum};

/// Shells whose maximum falls below this fraction of the peak are dropped
/// from the fit; dense eigenvectors carry absolute errors near `1e-16`.
pub const DEFAULT_SHELL_FLOOR: f64 = 1e-12;

pub const DEFAULT_VERTEX_LIMIT: usize = 20;

/// Eigenvalues closer than this are reported as a degenerate cluster.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted decay rate `c` in `|psi(x)| <= C exp(-c |x - center|)`.
    pub rate: f64,
    /// Intercept of the fitted line in `ln |psi|`.
    pub intercept: f64,
    pub r_squared: f64,
    pub shells_used: usize,
    pub center: ConfigPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayOptions {
    pub r_min: u32,
    /// Largest shell radius; `None` uses every shell inside the region.
    pub r_max: Option<u32>,
    /// Relative floor below which shells are ignored.
    pub floor: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { r_min: 0, r_max: None, floor: DEFAULT_SHELL_FLOOR }
    }
}

/// `(r, max_{|x - center| = r} |psi(x)|)` for every nonempty sup-norm shell.
pub fn shell_maxima(region: &Rectangle, psi: &[f64], center: &ConfigPoint) -> Result<Vec<(u32, f64)>> {
    if psi.len() != region.len() {
        return Err(Error::LengthMismatch { expected: region.len(), found: psi.len() });
    }
    if !region.contains(center) {
        return Err(Error::DimensionMismatch {
            expected: "a decay center inside the region".into(),
            found: format!("{center:?}"),
        });
    }
    let mut shells: Vec<Option<f64>> = Vec::new();
    for (i, v) in psi.iter().enumerate() {
        let r = sup_dist(&region.coords_of(i), center.coords()) as usize;
        if shells.len() <= r {
            shells.resize(r + 1, None);
        }
        let slot = &mut shells[r];
        *slot = Some(slot.map_or(v.abs(), |m: f64| m.max(v.abs())));
    }
    Ok(shells
        .into_iter()
        .enumerate()
        .filter_map(|(r, m)| m.map(|m| (r as u32, m)))
        .collect())
}

/// Position of `max |psi|`; first in site order on ties.
pub fn localization_center(region: &Rectangle, psi: &[f64]) -> ConfigPoint {
    let mut best = 0;
    for (i, v) in psi.iter().enumerate() {
        if v.abs() > psi[best].abs() {
            best = i;
        }
    }
    region.site(best)
}

/// Shell maxima inside the `[r_min, r_max]` window and above the relative floor.
pub fn usable_shells(
    region: &Rectangle,
    psi: &[f64],
    center: &ConfigPoint,
    options: &DecayOptions,
) -> Result<Vec<(u32, f64)>> {
    let shells = shell_maxima(region, psi, center)?;
    let peak = shells.iter().fold(0.0f64, |m, s| m.max(s.1));
    let cutoff = options.floor * peak;
    Ok(shells
        .into_iter()
        .filter(|(r, m)| {
            *r >= options.r_min && options.r_max.is_none_or(|hi| *r <= hi) && *m > cutoff && *m > 0.0
        })
        .collect())
}

/// Least-squares line through `(r, ln M_r)` over the usable shells.
pub fn decay_fit_vector(
    region: &Rectangle,
    psi: &[f64],
    center: Option<&ConfigPoint>,
    options: &DecayOptions,
) -> Result<DecayFit> {
    let center = center.cloned().unwrap_or_else(|| localization_center(region, psi));
    let points: Vec<(f64, f64)> = usable_shells(region, psi, &center, options)?
        .into_iter()
        .map(|(r, m)| (f64::from(r), m.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::TooFewShells { usable: points.len() });
    }
    let k = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { rate: -slope, intercept, r_squared, shells_used: points.len(), center })
}

/// Decay fit of eigenvector `index`; `center` defaults to its peak.
pub fn decay_fit(
    spec: &Spectrum,
    region: &Rectangle,
    index: usize,
    center: Option<&ConfigPoint>,
    options: &DecayOptions,
) -> Result<DecayFit> {
    if index >= spec.len() {
        return Err(Error::Domain(format!("eigenvector index {index} out of range 0..{}", spec.len())));
    }
    decay_fit_vector(region, spec.vector(index), center, options)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentMethod {
    ExactVertex,
    UpperBound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentResult {
    pub s: f64,
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub k_size: usize,
    /// Number of eigenvalues in the interval.
    pub multiplicity: usize,
    pub value: f64,
    pub method: MomentMethod,
    /// Adjacent in-interval eigenvalue pairs closer than [`DEGENERACY_TOLERANCE`].
    pub degenerate_pairs: usize,
    pub master_seed: u64,
    pub realization_index: u64,
}

/// `B_{kj} = <phi_k, phi_j> <chi_j, chi_k>` for the eigenvectors `selected`,
/// with `phi = |X - origin|^{s/2} psi` and `chi = 1_K psi`.
pub fn moment_matrix(
    spec: &Spectrum,
    region: &Rectangle,
    selected: &[usize],
    s: f64,
    k_rows: &[usize],
    origin: &ConfigPoint,
) -> Vec<Vec<f64>> {
    let n = spec.dim();
    let weight: Vec<f64> = (0..n)
        .map(|i| (sup_dist(&region.coords_of(i), origin.coords()) as f64).powf(s))
        .collect();
    let m = selected.len();
    let mut b = vec![vec![0.0; m]; m];
    for a in 0..m {
        let pa = spec.vector(selected[a]);
        for c in a..m {
            let pc = spec.vector(selected[c]);
            let weighted: f64 = (0..n).map(|x| weight[x] * pa[x] * pc[x]).sum();
            let restricted: f64 = k_rows.iter().map(|&x| pa[x] * pc[x]).sum();
            b[a][c] = weighted * restricted;
            b[c][a] = b[a][c];
        }
    }
    b
}

fn quadratic_form(b: &[Vec<f64>], signs: &[f64]) -> f64 {
    b.iter()
        .zip(signs)
        .map(|(row, ci)| ci * row.iter().zip(signs).map(|(v, cj)| v * cj).sum::<f64>())
        .sum()
}

/// `max_{c in {-1,1}^m} c^T B c` by Gray-code enumeration; `c_0 = +1` by symmetry.
pub fn max_vertex_form(b: &[Vec<f64>]) -> f64 {
    let m = b.len();
    if m == 0 {
        return 0.0;
    }
    let mut signs = vec![1.0; m];
    let mut bc: Vec<f64> = b.iter().map(|row| row.iter().sum()).collect();
    let mut q: f64 = bc.iter().sum();
    let mut best = q;
    let mut best_mask = 0u64;
    let mut mask = 0u64;
    for step in 1u64..(1u64 << (m - 1)) {
        let i = step.trailing_zeros() as usize + 1;
        let ci = signs[i];
        q += -4.0 * ci * bc[i] + 4.0 * b[i][i];
        for (k, row) in b.iter().enumerate() {
            bc[k] -= 2.0 * ci * row[i];
        }
        signs[i] = -ci;
        mask ^= 1 << i;
        if q > best {
            best = q;
            best_mask = mask;
        }
    }
    // recompute at the winner to drop accumulated rounding
    let winner: Vec<f64> = (0..m).map(|i| if best_mask & (1 << i) != 0 { -1.0 } else { 1.0 }).collect();
    quadratic_form(b, &winner)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentOptions {
    /// Point from which `|X|` is measured; `None` means the coordinate origin.
    pub origin: Option<ConfigPoint>,
    pub vertex_limit: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self { origin: None, vertex_limit: DEFAULT_VERTEX_LIMIT }
    }
}

/// Supremum over `|f| <= 1` of the squared HS norm, on one spectrum.
pub fn hs_moment(
    spec: &Spectrum,
    region: &Rectangle,
    interval: (f64, f64),
    s: f64,
    k_sites: &[ConfigPoint],
    options: &MomentOptions,
) -> Result<MomentResult> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("moment exponent s must be >= 0, got {s}")));
    }
    let mut k_rows = Vec::with_capacity(k_sites.len());
    for x in k_sites {
        k_rows.push(region.index_of(x).ok_or_else(|| Error::DimensionMismatch {
            expected: "K inside the region".into(),
            found: format!("{x:?}"),
        })?);
    }
    k_rows.sort_unstable();
    k_rows.dedup();
    let origin = options.origin.clone().unwrap_or_else(|| ConfigPoint::origin(region.n(), region.d()));
    let selected: Vec<usize> = spec.indices_in(interval.0, interval.1).collect();
    let degenerate_pairs = selected
        .windows(2)
        .filter(|w| spec.eigenvalues[w[1]] - spec.eigenvalues[w[0]] < DEGENERACY_TOLERANCE)
        .count();
    if degenerate_pairs > 0 {
        crate::note(&format!(
            "{degenerate_pairs} eigenvalue gaps below {DEGENERACY_TOLERANCE:e} in [{}, {}]; treated as distinct",
            interval.0, interval.1
        ));
    }
    let b = moment_matrix(spec, region, &selected, s, &k_rows, &origin);
    let (value, method) = if selected.len() <= options.vertex_limit {
        (max_vertex_form(&b), MomentMethod::ExactVertex)
    } else {
        (b.iter().flatten().map(|v| v.abs()).sum(), MomentMethod::UpperBound)
    };
    Ok(MomentResult {
        s,
        energy_lo: interval.0,
        energy_hi: interval.1,
        k_size: k_rows.len(),
        multiplicity: selected.len(),
        value,
        method,
        degenerate_pairs,
        master_seed: 0,
        realization_index: 0,
    })
}

/// Inputs of a disorder-averaged moment run.
#[derive(Clone, Debug)]
pub struct MomentTask {
    pub region: Rectangle,
    pub k_sites: Vec<ConfigPoint>,
    pub interval: (f64, f64),
    pub s: f64,
    pub coupling: f64,
    pub dense_limit: usize,
    pub options: MomentOptions,
    pub realizations: usize,
    pub master_seed: u64,
    pub workers: Workers,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragedMoment {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(R)`; zero for a single realization.
    pub std_error: f64,
    pub per_realization: Vec<MomentResult>,
}

/// Mean of [`hs_moment`] over independent realizations.
pub fn disorder_averaged_moment(
    task: &MomentTask,
    dspec: &DisorderSpec,
    ispec: &InteractionSpec,
) -> Result<AveragedMoment> {
    if task.realizations < 1 {
        return Err(Error::Domain("realizations must be >= 1".into()));
    }
    let projection = task.region.particle_projection();
    let per_realization = map_indexed(task.realizations, task.workers, |r| {
        let real = sample(dspec, &projection, task.master_seed, r as u64)?;
        let hm = HamiltonianMatrix::build(&task.region, &real, ispec, task.coupling)?;
        let spec = eigensolve(&hm, task.dense_limit)?;
        let mut res = hs_moment(&spec, &task.region, task.interval, task.s, &task.k_sites, &task.options)?;
        res.master_seed = task.master_seed;
        res.realization_index = r as u64;
        Ok(res)
    })?;
    let count = per_realization.len() as f64;
    let mean = per_realization.iter().map(|m| m.value).sum::<f64>() / count;
    let std_error = if per_realization.len() > 1 {
        let var = per_realization.iter().map(|m| (m.value - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    Ok(AveragedMoment { mean, std_error, per_realization })
}

/// `Q(x, y) = sum_{E_j in I} |psi_j(x)| |psi_j(y)|`.
pub fn eigenfunction_correlator(spec: &Spectrum, interval: (f64, f64)) -> Mat<f64> {
    let n = spec.dim();
    let selected: Vec<usize> = spec.indices_in(interval.0, interval.1).collect();
    let a = Mat::<f64>::from_fn(n, selected.len(), |x, j| spec.vector(selected[j])[x].abs());
    &a * a.transpose()
}
