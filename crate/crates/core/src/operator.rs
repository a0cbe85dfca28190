//! Finite-volume n-particle Hamiltonian `H = -Delta + V + h U` restricted to a
//! rectangle by plain truncation (simple boundary conditions).

use std::io::Write;

use faer::Mat;
use serde::Serialize;

use crate::disorder::DisorderRealization;
use crate::error::{Error, Result};
use crate::geometry::{sup_dist, ConfigPoint, Rectangle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum InteractionKind {
    SubExponential,
    /// Sub-exponential kernel cut to zero beyond the given distance.
    FiniteRange(u32),
}

/// Two-body kernel `U(x, y) = C exp(-c |x - y|^tau)`, optionally truncated.
///
/// For `d > 1` the two-body distance is the sup norm between particle positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InteractionSpec {
    pub strength: f64,
    pub decay: f64,
    pub tau: f64,
    pub kind: InteractionKind,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self { strength: 1.0, decay: 1.0, tau: 0.5, kind: InteractionKind::SubExponential }
    }
}

impl InteractionSpec {
    pub fn sub_exponential(strength: f64, decay: f64, tau: f64) -> Self {
        Self { strength, decay, tau, kind: InteractionKind::SubExponential }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return Err(Error::Domain(format!("interaction strength C must be > 0, got {}", self.strength)));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::Domain(format!("interaction decay c must be > 0, got {}", self.decay)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Domain(format!("interaction exponent tau must lie in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }

    /// Upper envelope `C exp(-c r^tau)`.
    pub fn envelope(&self, dist: i64) -> f64 {
        self.strength * (-self.decay * (dist as f64).powf(self.tau)).exp()
    }

    pub fn kernel(&self, dist: i64) -> f64 {
        match self.kind {
            InteractionKind::FiniteRange(r) if dist > i64::from(r) => 0.0,
            _ => self.envelope(dist),
        }
    }
}

/// `U(x) = sum_{i<j} U(x_i, x_j)`; zero for a single particle.
pub fn interaction_energy(spec: &InteractionSpec, x: &ConfigPoint) -> f64 {
    let mut total = 0.0;
    for i in 0..x.n() {
        for j in i + 1..x.n() {
            total += spec.kernel(sup_dist(x.particle(i), x.particle(j)));
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionBoundReport {
    pub max_ratio: f64,
    pub worst_distance: i64,
    pub radius: u32,
}

impl InteractionBoundReport {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

/// Checks `U(r) <= C exp(-c r^tau)` for `r = 0..=radius` using its own constants.
pub fn validate_interaction_bound(spec: &InteractionSpec, radius: u32) -> InteractionBoundReport {
    validate_interaction_bound_against(spec, spec, radius)
}

/// Same check, with the kernel and the bounding envelope taken from different specs.
pub fn validate_interaction_bound_against(
    kernel: &InteractionSpec,
    bound: &InteractionSpec,
    radius: u32,
) -> InteractionBoundReport {
    let mut max_ratio = 0.0;
    let mut worst_distance = 0;
    for r in 0..=i64::from(radius) {
        let ratio = kernel.kernel(r) / bound.envelope(r);
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_distance = r;
        }
    }
    InteractionBoundReport { max_ratio, worst_distance, radius }
}

/// Sparse symmetric Hamiltonian on a rectangle; rows follow the region's
/// lexicographic site order.
#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    region: Rectangle,
    diag: Vec<f64>,
    // off-diagonal CSR, columns sorted within each row
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub coupling: f64,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl HamiltonianMatrix {
    pub fn build(
        region: &Rectangle,
        real: &DisorderRealization,
        ispec: &InteractionSpec,
        coupling: f64,
    ) -> Result<Self> {
        let size = region.len();
        let dim = region.n() * region.d();
        let lo = region.lower();
        let hi = region.upper();
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (hi[k + 1] - lo[k + 1] + 1) as usize;
        }
        let kinetic = 2.0 * dim as f64;

        let mut diag = Vec::with_capacity(size);
        let mut row_ptr = Vec::with_capacity(size + 1);
        let mut cols = Vec::with_capacity(size * 2 * dim);
        row_ptr.push(0);
        for idx in 0..size {
            let x = region.site(idx);
            let mut potential = 0.0;
            for p in x.particles() {
                potential += real.value(p)?;
            }
            let u = if coupling != 0.0 { interaction_energy(ispec, &x) } else { 0.0 };
            diag.push(kinetic + potential + coupling * u);

            let c = x.coords();
            for k in 0..dim {
                if c[k] > lo[k] {
                    cols.push(idx - strides[k]);
                }
            }
            for k in (0..dim).rev() {
                if c[k] < hi[k] {
                    cols.push(idx + strides[k]);
                }
            }
            row_ptr.push(cols.len());
        }
        let vals = vec![-1.0; cols.len()];
        Ok(Self {
            region: region.clone(),
            diag,
            row_ptr,
            cols,
            vals,
            coupling,
            master_seed: real.master_seed,
            realization_index: real.realization_index,
        })
    }

    pub fn region(&self) -> &Rectangle {
        &self.region
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(column, value)` pairs of `row`, columns ascending.
    pub fn row_offdiag(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        self.row_offdiag(row).find(|(c, _)| *c == col).map_or(0.0, |(_, v)| v)
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::LengthMismatch { expected: self.size(), found: v.len() });
        }
        Ok((0..self.size())
            .map(|r| self.diag[r] * v[r] + self.row_offdiag(r).map(|(c, a)| a * v[c]).sum::<f64>())
            .collect())
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.size();
        let mut m = Mat::<f64>::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = self.diag[r];
            for (c, v) in self.row_offdiag(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `[min diag - max offdiag row sum, max diag + ...]`; contains the spectrum.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.size() {
            let radius: f64 = self.row_offdiag(r).map(|(_, v)| v.abs()).sum();
            lo = lo.min(self.diag[r] - radius);
            hi = hi.max(self.diag[r] + radius);
        }
        (lo, hi)
    }

    /// Coordinate-list dump, one `row col value` line per nonzero, rows and
    /// columns ascending, values at 17 significant digits.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in 0..self.size() {
            let mut entries: Vec<(usize, f64)> = self.row_offdiag(r).collect();
            entries.push((r, self.diag[r]));
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                writeln!(out, "{r} {c} {v:.16e}")?;
            }
        }
        Ok(())
    }
}
