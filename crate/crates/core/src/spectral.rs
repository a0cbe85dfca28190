//! Eigendecomposition, Green functions and the `(E, m, h)`-nonsingularity test.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConfigPoint, Cube};
use crate::operator::HamiltonianMatrix;

pub const DEFAULT_DENSE_LIMIT: usize = 4096;

/// Relative distance to the spectrum below which an energy is resonant.
pub const SPECTRAL_GAP_TOLERANCE: f64 = 1e-12;

/// Condition-number lower bound above which a direct solve is resonant.
pub const CONDITION_LIMIT: f64 = 1e14;

pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-8;

/// Full eigendecomposition of a finite-volume Hamiltonian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    // column-major, column j is the eigenvector of eigenvalues[j]
    vectors: Vec<f64>,
    size: usize,
    /// `max_j |H psi_j - E_j psi_j|_2`.
    pub residual_bound: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Dimension of each eigenvector (the region cardinality).
    pub fn dim(&self) -> usize {
        self.size
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.size..(j + 1) * self.size]
    }

    /// `max |E_j|`, the operator norm of a symmetric matrix.
    pub fn norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Distance from `energy` to the nearest eigenvalue.
    pub fn gap(&self, energy: f64) -> f64 {
        nearest_gap(&self.eigenvalues, energy)
    }

    /// Indices `j` with `E_j` in `[lo, hi]`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.eigenvalues.partition_point(|e| *e < lo);
        let end = self.eigenvalues.partition_point(|e| *e <= hi);
        start..end.max(start)
    }

    /// `max_{j,k} |<psi_j, psi_k> - delta_jk|`. Quadratic in memory traffic, cubic in time.
    pub fn orthonormality_deviation(&self) -> f64 {
        let n = self.size;
        let u = Mat::<f64>::from_fn(n, self.len(), |r, c| self.vectors[c * n + r]);
        let gram = u.transpose() * &u;
        let mut worst: f64 = 0.0;
        for c in 0..gram.ncols() {
            for r in 0..gram.nrows() {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((gram[(r, c)] - target).abs());
            }
        }
        worst
    }
}

fn nearest_gap(sorted: &[f64], energy: f64) -> f64 {
    let i = sorted.partition_point(|e| *e < energy);
    let mut gap = f64::INFINITY;
    if i < sorted.len() {
        gap = gap.min((sorted[i] - energy).abs());
    }
    if i > 0 {
        gap = gap.min((energy - sorted[i - 1]).abs());
    }
    gap
}

fn check_dense_limit(size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(Error::DenseLimitExceeded { size, limit });
    }
    Ok(())
}

/// Dense symmetric eigendecomposition.
pub fn eigensolve(hm: &HamiltonianMatrix, dense_limit: usize) -> Result<Spectrum> {
    let n = hm.size();
    check_dense_limit(n, dense_limit)?;
    let dense = hm.to_dense();
    let evd = dense.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues: Vec<f64> = (0..n).map(|j| s[j]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for j in 0..n {
        vectors.extend((0..n).map(|r| u[(r, j)]));
    }
    let mut spec = Spectrum { eigenvalues, vectors, size: n, residual_bound: 0.0 };
    spec.residual_bound = (0..n)
        .map(|j| {
            let psi = spec.vector(j);
            let h_psi = hm.apply(psi).expect("sizes agree");
            h_psi
                .iter()
                .zip(psi)
                .map(|(a, b)| (a - spec.eigenvalues[j] * b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    Ok(spec)
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(hm: &HamiltonianMatrix, dense_limit: usize) -> Result<Vec<f64>> {
    check_dense_limit(hm.size(), dense_limit)?;
    hm.to_dense()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenSolver)
}

/// LU factorization of `H - E`, reused across right-hand sides.
pub struct GreenSolver<'a> {
    hm: &'a HamiltonianMatrix,
    energy: f64,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    shifted_norm: f64,
}

impl<'a> GreenSolver<'a> {
    pub fn new(hm: &'a HamiltonianMatrix, energy: f64, dense_limit: usize) -> Result<Self> {
        check_dense_limit(hm.size(), dense_limit)?;
        let mut a = hm.to_dense();
        for i in 0..hm.size() {
            a[(i, i)] -= energy;
        }
        let shifted_norm = (0..hm.size())
            .map(|r| (0..hm.size()).map(|c| a[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = a.partial_piv_lu();
        Ok(Self { hm, energy, lu, shifted_norm })
    }

    /// Column `G(., y; E)` solving `(H - E) u = delta_y`.
    pub fn column(&self, y: usize) -> Result<Vec<f64>> {
        let n = self.hm.size();
        let mut rhs = Mat::<f64>::zeros(n, 1);
        rhs[(y, 0)] = 1.0;
        let sol = self.lu.solve(&rhs);
        let u: Vec<f64> = (0..n).map(|r| sol[(r, 0)]).collect();
        let resonant = |indicator: f64| Error::NearSpectrum { energy: self.energy, indicator };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(resonant(f64::INFINITY));
        }
        let u_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cond_lower = self.shifted_norm * u_max;
        if cond_lower > CONDITION_LIMIT {
            return Err(resonant(cond_lower));
        }
        let hu = self.hm.apply(&u)?;
        let residual = hu
            .iter()
            .zip(&u)
            .enumerate()
            .map(|(r, (a, b))| {
                let delta = if r == y { 1.0 } else { 0.0 };
                (a - self.energy * b - delta).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if residual > SOLVE_RESIDUAL_LIMIT {
            return Err(resonant(residual));
        }
        Ok(u)
    }
}

/// `G(x, y; E) = <delta_x, (H - E)^{-1} delta_y>`.
pub fn green(hm: &HamiltonianMatrix, energy: f64, x: &ConfigPoint, y: &ConfigPoint) -> Result<f64> {
    let region = hm.region();
    let missing = |p: &ConfigPoint| Error::DimensionMismatch {
        expected: "a site of the operator's region".into(),
        found: format!("{p:?}"),
    };
    let xi = region.index_of(x).ok_or_else(|| missing(x))?;
    let yi = region.index_of(y).ok_or_else(|| missing(y))?;
    let col = GreenSolver::new(hm, energy, DEFAULT_DENSE_LIMIT.max(hm.size()))?.column(yi)?;
    Ok(col[xi])
}

/// Mass `gamma(m, L, n) = m (1 + L^{-1/8})^{N - n + 1}`.
pub fn gamma(mass: f64, radius: u32, n: usize, total_particles: usize) -> Result<f64> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Domain(format!("mass m must be > 0, got {mass}")));
    }
    if radius < 1 {
        return Err(Error::Domain("gamma needs L >= 1".into()));
    }
    if n < 1 || n > total_particles {
        return Err(Error::Domain(format!("need 1 <= n <= N, got n={n}, N={total_particles}")));
    }
    let exponent = (total_particles - n + 1) as i32;
    Ok(mass * (1.0 + f64::from(radius).powf(-0.125)).powi(exponent))
}

/// `exp(-gamma(m, L, n) L)`. A radius-0 cube has `gamma L = 0`, threshold 1.
pub fn ns_threshold(mass: f64, radius: u32, n: usize, total_particles: usize) -> Result<f64> {
    if radius == 0 {
        gamma(mass, 1, n, total_particles)?;
        return Ok(1.0);
    }
    Ok((-gamma(mass, radius, n, total_particles)? * f64::from(radius)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NsVerdict {
    pub nonsingular: bool,
    pub max_boundary_green: f64,
    pub threshold: f64,
    /// `threshold - max_boundary_green`.
    pub margin: f64,
    /// Distance from the energy to the spectrum.
    pub spectral_gap: f64,
}

impl NsVerdict {
    fn resonant(threshold: f64, spectral_gap: f64) -> Self {
        Self {
            nonsingular: false,
            max_boundary_green: f64::INFINITY,
            threshold,
            margin: f64::NEG_INFINITY,
            spectral_gap,
        }
    }

    fn from_green(max_boundary_green: f64, threshold: f64, spectral_gap: f64) -> Self {
        Self {
            nonsingular: spectral_gap > 0.0 && max_boundary_green <= threshold,
            max_boundary_green,
            threshold,
            margin: threshold - max_boundary_green,
            spectral_gap,
        }
    }
}

fn cube_rows(cube: &Cube, hm: &HamiltonianMatrix) -> Result<(usize, Vec<usize>)> {
    let rect = cube.rectangle();
    if &rect != hm.region() {
        return Err(Error::DimensionMismatch {
            expected: format!("operator built on the cube around {:?} with radius {}", cube.center, cube.radius),
            found: "operator on a different region".into(),
        });
    }
    let center = rect.index_of(&cube.center).expect("center lies in its cube");
    Ok((center, rect.internal_boundary_indices()))
}

/// Classifies a cube at one energy by a direct solve.
pub fn classify_cube(
    cube: &Cube,
    hm: &HamiltonianMatrix,
    energy: f64,
    mass: f64,
    total_particles: usize,
) -> Result<NsVerdict> {
    let (center, boundary) = cube_rows(cube, hm)?;
    let threshold = ns_threshold(mass, cube.radius, cube.center.n(), total_particles)?;
    let limit = DEFAULT_DENSE_LIMIT.max(hm.size());
    let evals = eigenvalues(hm, limit)?;
    let gap = nearest_gap(&evals, energy);
    let norm = evals.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if gap < SPECTRAL_GAP_TOLERANCE * norm.max(1.0) {
        return Ok(NsVerdict::resonant(threshold, gap));
    }
    // G is symmetric, so one solve against delta_u yields every G(u, v).
    let col = match GreenSolver::new(hm, energy, limit)?.column(center) {
        Ok(c) => c,
        Err(Error::NearSpectrum { .. }) => return Ok(NsVerdict::resonant(threshold, gap)),
        Err(e) => return Err(e),
    };
    let max_g = boundary.iter().map(|&v| col[v].abs()).fold(0.0, f64::max);
    Ok(NsVerdict::from_green(max_g, threshold, gap))
}

/// Center-to-boundary resolvent of one cube, expanded in its eigenbasis so
/// that many energies can be classified after a single eigensolve:
/// `G(u, v; E) = sum_j psi_j(u) psi_j(v) / (E_j - E)`.
#[derive(Clone, Debug)]
pub struct CubeResolvent {
    eigenvalues: Vec<f64>,
    // weights[b * size + j] = psi_j(u) psi_j(v_b)
    weights: Vec<f64>,
    size: usize,
    boundary_len: usize,
    norm: f64,
    threshold: f64,
}

impl CubeResolvent {
    pub fn new(cube: &Cube, hm: &HamiltonianMatrix, spectrum: &Spectrum, mass: f64, total_particles: usize) -> Result<Self> {
        let (center, boundary) = cube_rows(cube, hm)?;
        let size = spectrum.len();
        let mut weights = Vec::with_capacity(boundary.len() * size);
        for &v in &boundary {
            weights.extend((0..size).map(|j| {
                let psi = spectrum.vector(j);
                psi[center] * psi[v]
            }));
        }
        Ok(Self {
            eigenvalues: spectrum.eigenvalues.clone(),
            weights,
            size,
            boundary_len: boundary.len(),
            norm: spectrum.norm(),
            threshold: ns_threshold(mass, cube.radius, cube.center.n(), total_particles)?,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn verdict(&self, energy: f64) -> NsVerdict {
        let gap = nearest_gap(&self.eigenvalues, energy);
        if gap < SPECTRAL_GAP_TOLERANCE * self.norm.max(1.0) {
            return NsVerdict::resonant(self.threshold, gap);
        }
        let inv: Vec<f64> = self.eigenvalues.iter().map(|e| 1.0 / (e - energy)).collect();
        let mut max_g: f64 = 0.0;
        for b in 0..self.boundary_len {
            let w = &self.weights[b * self.size..(b + 1) * self.size];
            let g: f64 = w.iter().zip(&inv).map(|(a, b)| a * b).sum();
            max_g = max_g.max(g.abs());
        }
        NsVerdict::from_green(max_g, self.threshold, gap)
    }

    pub fn is_singular(&self, energy: f64) -> bool {
        !self.verdict(energy).nonsingular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample, DisorderRealization, DisorderSpec};
    use crate::geometry::Rectangle;
    use crate::operator::InteractionSpec;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn free_chain(sites: usize) -> HamiltonianMatrix {
        let region = Rectangle::from_corners(1, 1, vec![0], vec![sites as i64 - 1]).unwrap();
        let real = DisorderRealization::zero(&region.particle_projection());
        HamiltonianMatrix::build(&region, &real, &InteractionSpec::default(), 0.0).unwrap()
    }

    fn random_op(seed: u64, idx: u64, n: usize, radius: u32, h: f64) -> (Cube, HamiltonianMatrix) {
        let cube = Cube::new(ConfigPoint::origin(n, 1), radius);
        let region = cube.rectangle();
        let real = sample(&DisorderSpec::uniform(-1.0, 1.0, 3.0), &region.particle_projection(), seed, idx).unwrap();
        let hm = HamiltonianMatrix::build(&region, &real, &InteractionSpec::default(), h).unwrap();
        (cube, hm)
    }

    #[test]
    fn path_graph_spectrum() {
        for sites in [1usize, 2, 3, 8, 51] {
            let spec = eigensolve(&free_chain(sites), DEFAULT_DENSE_LIMIT).unwrap();
            for (j, e) in spec.eigenvalues.iter().enumerate() {
                let exact = 2.0 - 2.0 * ((j + 1) as f64 * PI / (sites + 1) as f64).cos();
                assert!((e - exact).abs() < 1e-12);
            }
            assert!(spec.orthonormality_deviation() < 1e-10);
            assert!(spec.residual_bound <= 1e-8 * (1.0 + spec.norm()));
        }
    }

    #[test]
    fn scalar_cases() {
        let mut vals = BTreeMap::new();
        vals.insert(vec![0], 0.4);
        let real = DisorderRealization::from_values(vals, 0, 0);
        let cube = Cube::new(ConfigPoint::origin(1, 1), 0);
        let hm = HamiltonianMatrix::build(&cube.rectangle(), &real, &InteractionSpec::default(), 0.0).unwrap();
        let spec = eigensolve(&hm, 10).unwrap();
        assert_eq!(spec.eigenvalues, vec![2.4]);
        assert_eq!(spec.vector(0).iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![1.0]);
        let o = ConfigPoint::origin(1, 1);
        let g = green(&hm, 1.0, &o, &o).unwrap();
        assert!((g - 1.0 / 1.4).abs() < 1e-15);

        let v = classify_cube(&cube, &hm, 1.0, 0.5, 1).unwrap();
        assert!((v.max_boundary_green - 1.0 / 1.4).abs() < 1e-15);
        assert_eq!(v.threshold, 1.0);
        assert!(v.nonsingular);
        let v = classify_cube(&cube, &hm, 2.0, 0.5, 1).unwrap();
        assert!(!v.nonsingular, "|G| = 2.5 exceeds threshold 1");
    }

    #[test]
    fn free_three_site_inverse() {
        let hm = free_chain(3);
        let c = ConfigPoint::single(&[1]).unwrap();
        assert!((green(&hm, 0.0, &c, &c).unwrap() - 1.0).abs() < 1e-14);
        let l = ConfigPoint::single(&[0]).unwrap();
        assert!((green(&hm, 0.0, &l, &l).unwrap() - 0.75).abs() < 1e-14);
        let r = ConfigPoint::single(&[2]).unwrap();
        assert!((green(&hm, 0.0, &l, &r).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn green_at_eigenvalue_is_resonant() {
        let hm = free_chain(3);
        let c = ConfigPoint::single(&[1]).unwrap();
        assert!(matches!(green(&hm, 2.0, &c, &c), Err(Error::NearSpectrum { .. })));
    }

    #[test]
    fn dense_limit_enforced() {
        let hm = free_chain(11);
        assert!(matches!(eigensolve(&hm, 10), Err(Error::DenseLimitExceeded { size: 11, limit: 10 })));
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(2.0, 256, 2, 2).unwrap(), 3.0);
        assert_eq!(gamma(1.0, 256, 1, 2).unwrap(), 2.25);
        let big = gamma(1.0, 1 << 30, 3, 3).unwrap();
        assert!(big > 1.0 && big < 1.1);
        assert!(gamma(0.0, 4, 1, 1).is_err());
        assert!(gamma(1.0, 0, 1, 1).is_err());
        assert!(gamma(1.0, 4, 3, 2).is_err());
        assert!(gamma(1.0, 4, 0, 2).is_err());
    }

    #[test]
    fn two_particle_free_spectrum_is_tensor_sum() {
        let region = Rectangle::new(&[vec![0], vec![20]], &[3, 2]).unwrap();
        let real = DisorderRealization::zero(&region.particle_projection());
        let hm = HamiltonianMatrix::build(&region, &real, &InteractionSpec::default(), 0.0).unwrap();
        let got = eigensolve(&hm, DEFAULT_DENSE_LIMIT).unwrap().eigenvalues;
        let a: Vec<f64> = (1..=7).map(|j| 2.0 - 2.0 * (j as f64 * PI / 8.0).cos()).collect();
        let b: Vec<f64> = (1..=5).map(|j| 2.0 - 2.0 * (j as f64 * PI / 6.0).cos()).collect();
        let mut sum: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect();
        sum.sort_by(f64::total_cmp);
        for (g, s) in got.iter().zip(&sum) {
            assert!((g - s).abs() < 1e-10);
        }
    }

    #[test]
    fn green_symmetry_and_residual() {
        for seed in 0..10u64 {
            let (_, hm) = random_op(seed, 0, 2, 2, 0.5);
            let n = hm.size();
            let e = -0.37 + seed as f64 * 0.9;
            let solver = GreenSolver::new(&hm, e, DEFAULT_DENSE_LIMIT).unwrap();
            let x = (seed as usize * 7) % n;
            let y = (seed as usize * 13 + 3) % n;
            let gx = solver.column(x).unwrap();
            let gy = solver.column(y).unwrap();
            assert!((gy[x] - gx[y]).abs() < 1e-10);
        }
    }

    #[test]
    fn far_below_spectrum_is_nonsingular() {
        for radius in 1..=8u32 {
            let (cube, hm) = random_op(5, u64::from(radius), 1, radius, 0.0);
            let e = eigenvalues(&hm, 100).unwrap()[0] - 1e6;
            for m in [0.1, 0.5, 1.0] {
                let v = classify_cube(&cube, &hm, e, m, 1).unwrap();
                assert!(v.nonsingular, "L={radius} m={m}: {v:?}");
                assert!(v.spectral_gap > 0.0);
            }
        }
    }

    #[test]
    fn eigenvalue_energy_is_singular() {
        let (cube, hm) = random_op(3, 1, 2, 2, 1.0);
        let e = eigenvalues(&hm, 100).unwrap()[4];
        let v = classify_cube(&cube, &hm, e, 0.5, 2).unwrap();
        assert!(!v.nonsingular);
        assert_eq!(v.spectral_gap, 0.0);
        let spec = eigensolve(&hm, 100).unwrap();
        let r = CubeResolvent::new(&cube, &hm, &spec, 0.5, 2).unwrap();
        let v = r.verdict(spec.eigenvalues[4]);
        assert!(!v.nonsingular && v.spectral_gap == 0.0);
    }

    #[test]
    fn spectral_expansion_matches_direct_solve() {
        for seed in 0..6u64 {
            let (cube, hm) = random_op(seed, 9, 1 + (seed as usize % 2), 3, 0.3);
            let spec = eigensolve(&hm, DEFAULT_DENSE_LIMIT).unwrap();
            let sweep = CubeResolvent::new(&cube, &hm, &spec, 0.2, 2).unwrap();
            for k in 0..15 {
                let e = -1.0 + 0.77 * k as f64;
                let direct = classify_cube(&cube, &hm, e, 0.2, 2).unwrap();
                let fast = sweep.verdict(e);
                let scale = direct.max_boundary_green.max(1e-300);
                assert!((direct.max_boundary_green - fast.max_boundary_green).abs() <= 1e-9 * scale + 1e-15);
                if direct.margin.abs() > 1e-9 * scale {
                    assert_eq!(direct.nonsingular, fast.nonsingular);
                }
            }
        }
    }

    #[test]
    fn wrong_region_rejected() {
        let (_, hm) = random_op(1, 1, 1, 3, 0.0);
        let other = Cube::new(ConfigPoint::origin(1, 1), 2);
        assert!(classify_cube(&other, &hm, 0.0, 1.0, 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gamma_monotone(m in 0.01f64..5.0, l in 1u32..10_000, k in 0usize..4) {
                let total = 4;
                let n = total - k;
                let g = gamma(m, l, n, total).unwrap();
                prop_assert!(gamma(m, l + 1, n, total).unwrap() < g);
                prop_assert!(gamma(m * 1.01, l, n, total).unwrap() > g);
                if n > 1 {
                    prop_assert!(gamma(m, l, n - 1, total).unwrap() > g);
                }
            }

            #[test]
            fn verdict_coherence(seed in 0u64..1000, e in -2.0f64..14.0, m in 0.05f64..2.0) {
                let (cube, hm) = random_op(seed, 0, 1, 3, 0.0);
                let spec = eigensolve(&hm, 100).unwrap();
                let v = CubeResolvent::new(&cube, &hm, &spec, m, 1).unwrap().verdict(e);
                prop_assert!(!v.nonsingular || v.spectral_gap > 0.0);
                prop_assert_eq!(v.nonsingular, v.spectral_gap > 0.0 && v.max_boundary_green <= v.threshold);
            }
        }
    }
}
