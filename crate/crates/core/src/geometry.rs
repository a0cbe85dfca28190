//! Multi-particle lattice geometry.
//!
//! A configuration of `n` particles on `Z^d` is a point of `Z^{nd}`, stored as
//! `n` consecutive blocks of `d` coordinates. Cubes use the sup norm, lattice
//! adjacency uses the l1 norm.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// A point of the n-particle configuration lattice `Z^{nd}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct ConfigPoint {
    coords: Vec<i64>,
    n: usize,
    d: usize,
}

impl ConfigPoint {
    pub fn new(coords: Vec<i64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 || coords.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: format!("{} coordinates (n={n}, d={d}, both >= 1)", n * d),
                found: format!("{} coordinates", coords.len()),
            });
        }
        Ok(Self { coords, n, d })
    }

    /// Single-particle point (`n = 1`).
    pub fn single(site: &[i64]) -> Result<Self> {
        Self::new(site.to_vec(), 1, site.len())
    }

    pub fn origin(n: usize, d: usize) -> Self {
        assert!(n >= 1 && d >= 1, "origin needs n, d >= 1");
        Self { coords: vec![0; n * d], n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// Position of particle `j` (0-based) as a `d`-vector.
    pub fn particle(&self, j: usize) -> &[i64] {
        &self.coords[j * self.d..(j + 1) * self.d]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[i64]> {
        self.coords.chunks_exact(self.d)
    }

    /// Copy of `self` with coordinate `axis` shifted by `delta`.
    pub fn shifted(&self, axis: usize, delta: i64) -> Self {
        let mut out = self.clone();
        out.coords[axis] += delta;
        out
    }

    pub fn translated(&self, by: &[i64]) -> Result<Self> {
        self.check_len(by.len())?;
        let coords = self.coords.iter().zip(by).map(|(a, b)| a + b).collect();
        Ok(Self { coords, n: self.n, d: self.d })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: format!("n={}, d={}", self.n, self.d),
                found: format!("n={}, d={}", other.n, other.d),
            });
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} coordinates", self.coords.len()),
                found: format!("{len} coordinates"),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for ConfigPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

impl fmt::Display for ConfigPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .particles()
            .map(|p| {
                let c: Vec<String> = p.iter().map(i64::to_string).collect();
                c.join(" ")
            })
            .collect();
        write!(f, "({})", parts.join("; "))
    }
}

/// `max_i |x_i - y_i|` over all `nd` coordinates.
pub fn sup_norm(x: &ConfigPoint, y: &ConfigPoint) -> Result<i64> {
    x.check_same_shape(y)?;
    Ok(sup_dist(&x.coords, &y.coords))
}

/// `sum_i |x_i - y_i|` over all `nd` coordinates.
pub fn l1_norm(x: &ConfigPoint, y: &ConfigPoint) -> Result<i64> {
    x.check_same_shape(y)?;
    Ok(x.coords.iter().zip(&y.coords).map(|(a, b)| (a - b).abs()).sum())
}

pub(crate) fn sup_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).max().unwrap_or(0)
}

/// Product of single-particle cubes `C_{L_1}(u_1) x ... x C_{L_n}(u_n)`.
///
/// Sites are enumerated in lexicographic order of the full `nd`-tuple, which
/// is the row order of every operator built on the rectangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rectangle {
    n: usize,
    d: usize,
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
}

impl Rectangle {
    /// `centers` holds one `d`-vector per particle, `radii` one radius per particle.
    pub fn new(centers: &[Vec<i64>], radii: &[u32]) -> Result<Self> {
        let n = centers.len();
        if n == 0 || radii.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} radii for {n} particle centers (n >= 1)"),
                found: format!("{} radii", radii.len()),
            });
        }
        let d = centers[0].len();
        if d == 0 || centers.iter().any(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: format!("all particle centers of length d = {d} >= 1"),
                found: format!("{:?}", centers.iter().map(Vec::len).collect::<Vec<_>>()),
            });
        }
        let mut lo = Vec::with_capacity(n * d);
        let mut hi = Vec::with_capacity(n * d);
        for (c, &r) in centers.iter().zip(radii) {
            for &x in c {
                lo.push(x - i64::from(r));
                hi.push(x + i64::from(r));
            }
        }
        Ok(Self::from_bounds(n, d, lo, hi))
    }

    /// Axis-aligned box with inclusive corners `lo <= x <= hi` in `Z^{nd}`.
    /// Unlike [`Rectangle::new`] this allows even side lengths.
    pub fn from_corners(n: usize, d: usize, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if n == 0 || d == 0 || lo.len() != n * d || hi.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: format!("two corners of length {} (n={n}, d={d})", n * d),
                found: format!("lengths {} and {}", lo.len(), hi.len()),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Domain(format!("empty box: lower {lo:?} exceeds upper {hi:?}")));
        }
        Ok(Self::from_bounds(n, d, lo, hi))
    }

    fn from_bounds(n: usize, d: usize, lo: Vec<i64>, hi: Vec<i64>) -> Self {
        let dim = lo.len();
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (hi[k + 1] - lo[k + 1] + 1) as usize;
        }
        Self { n, d, lo, hi, strides }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Inclusive lower corner.
    pub fn lower(&self) -> &[i64] {
        &self.lo
    }

    /// Inclusive upper corner.
    pub fn upper(&self) -> &[i64] {
        &self.hi
    }

    pub fn len(&self) -> usize {
        self.strides[0] * (self.hi[0] - self.lo[0] + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &ConfigPoint) -> bool {
        x.n == self.n && x.d == self.d && self.contains_coords(&x.coords)
    }

    fn contains_coords(&self, c: &[i64]) -> bool {
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| l <= x && x <= h)
    }

    /// Row index of `x` in the lexicographic enumeration.
    pub fn index_of(&self, x: &ConfigPoint) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(self.index_of_coords(&x.coords))
    }

    pub(crate) fn index_of_coords(&self, c: &[i64]) -> usize {
        c.iter()
            .zip(&self.lo)
            .zip(&self.strides)
            .map(|((x, l), s)| (x - l) as usize * s)
            .sum()
    }

    pub(crate) fn coords_of(&self, mut idx: usize) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.lo.len());
        for (l, s) in self.lo.iter().zip(&self.strides) {
            out.push(l + (idx / s) as i64);
            idx %= s;
        }
        out
    }

    pub fn site(&self, idx: usize) -> ConfigPoint {
        ConfigPoint { coords: self.coords_of(idx), n: self.n, d: self.d }
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> Vec<ConfigPoint> {
        (0..self.len()).map(|i| self.site(i)).collect()
    }

    /// Sites at l1 distance 1 from the complement: some coordinate is extreme.
    pub fn internal_boundary(&self) -> BTreeSet<ConfigPoint> {
        self.internal_boundary_indices()
            .into_iter()
            .map(|i| self.site(i))
            .collect()
    }

    pub(crate) fn internal_boundary_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let c = self.coords_of(i);
                c.iter()
                    .zip(self.lo.iter().zip(&self.hi))
                    .any(|(x, (l, h))| x == l || x == h)
            })
            .collect()
    }

    /// Sites outside the rectangle at l1 distance 1 from it.
    pub fn external_boundary(&self) -> BTreeSet<ConfigPoint> {
        let mut out = BTreeSet::new();
        for i in self.internal_boundary_indices() {
            let c = self.coords_of(i);
            for k in 0..c.len() {
                for (edge, step) in [(self.lo[k], -1), (self.hi[k], 1)] {
                    if c[k] == edge {
                        let mut p = c.clone();
                        p[k] += step;
                        out.insert(ConfigPoint { coords: p, n: self.n, d: self.d });
                    }
                }
            }
        }
        out
    }

    /// Union of the single-particle cubes the rectangle projects onto, i.e.
    /// every `Z^d` site whose potential the restricted operator reads.
    pub fn particle_projection(&self) -> BTreeSet<Vec<i64>> {
        let mut out = BTreeSet::new();
        for j in 0..self.n {
            let lo = &self.lo[j * self.d..(j + 1) * self.d];
            let hi = &self.hi[j * self.d..(j + 1) * self.d];
            let single = Rectangle::from_bounds(1, self.d, lo.to_vec(), hi.to_vec());
            out.extend((0..single.len()).map(|i| single.coords_of(i)));
        }
        out
    }
}

/// Sup-norm ball `C^{(n)}_L(u)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cube {
    pub center: ConfigPoint,
    pub radius: u32,
}

impl Cube {
    pub fn new(center: ConfigPoint, radius: u32) -> Self {
        Self { center, radius }
    }

    pub fn rectangle(&self) -> Rectangle {
        let r = i64::from(self.radius);
        let lo = self.center.coords.iter().map(|x| x - r).collect();
        let hi = self.center.coords.iter().map(|x| x + r).collect();
        Rectangle::from_bounds(self.center.n, self.center.d, lo, hi)
    }

    /// `(2L+1)^{nd}`.
    pub fn cardinality(&self) -> usize {
        (2 * self.radius as usize + 1).pow(self.center.coords.len() as u32)
    }
}

/// Whether single-particle cubes of radius `radius` around `a` and `b` meet.
fn cubes_meet(a: &[i64], b: &[i64], radius: u32) -> bool {
    sup_dist(a, b) <= 2 * i64::from(radius)
}

/// Is the cube around `x` `J`-separable from the cube around `y`?
///
/// `j_set` lists 0-based particle indices. The single-particle cubes of the
/// particles in `J` must avoid those of the remaining particles of `x` and
/// all particles of `y`.
pub fn is_j_separable(x: &ConfigPoint, y: &ConfigPoint, radius: u32, j_set: &[usize]) -> Result<bool> {
    x.check_same_shape(y)?;
    if j_set.is_empty() || j_set.iter().any(|&j| j >= x.n) {
        return Err(Error::InvalidParticleSet { n: x.n });
    }
    let mask = j_set.iter().fold(0u64, |m, &j| m | (1 << j));
    Ok(j_separable_mask(x, y, radius, mask))
}

fn j_separable_mask(x: &ConfigPoint, y: &ConfigPoint, radius: u32, mask: u64) -> bool {
    let in_j = |j: usize| mask & (1 << j) != 0;
    (0..x.n).filter(|&j| in_j(j)).all(|j| {
        let xj = x.particle(j);
        let clear_of_rest = (0..x.n)
            .filter(|&k| !in_j(k))
            .all(|k| !cubes_meet(xj, x.particle(k), radius));
        clear_of_rest && y.particles().all(|yk| !cubes_meet(xj, yk, radius))
    })
}

/// Pair separability: `|x - y| > 7 N L` and one cube is `J`-separable from
/// the other for some nonempty `J`, the full index set included.
pub fn is_separable_pair(x: &ConfigPoint, y: &ConfigPoint, radius: u32, total_particles: usize) -> Result<bool> {
    let dist = sup_norm(x, y)?;
    if dist <= 7 * total_particles as i64 * i64::from(radius) {
        return Ok(false);
    }
    let full = (1u64 << x.n) - 1;
    Ok((1..=full).any(|mask| j_separable_mask(x, y, radius, mask) || j_separable_mask(y, x, radius, mask)))
}
