//! Quadrature discretization of the two field-mode continua and evaluation of
//! their coefficient fields.
//!
//! The kappa continuum is labelled by a frequency, a propagation direction, a
//! transverse polarization and a cos/sin symmetry index. The mu continuum is
//! labelled by a frequency, an absorptive voxel and a Cartesian component. Both
//! share one set of frequency nodes.
//!
//! Degeneracy weights follow the k-space measure: a kappa node at frequency
//! `w` with angular weight `u` carries `w^2 u`, a mu node carries the voxel
//! volume. Frequency weights multiply both.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::greens::{GreensError, ScatteringOperator};
use crate::medium::{MediumError, VoxelMedium};
use crate::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModeGridError {
    #[error("frequency window [{0}, {1}] must satisfy 0 < min < max")]
    InvalidWindow(f64, f64),
    #[error("frequency rule needs at least one panel and two nodes in total, got {panels} x {order}")]
    InvalidRule { panels: usize, order: usize },
    #[error("angular order must be at least 1")]
    InvalidAngularOrder,
    #[error("node index {index} out of range ({len} nodes)")]
    InvalidNode { index: usize, len: usize },
    #[error("scattering operator at omega = {operator} does not match grid node frequency {node}")]
    FrequencyMismatch { operator: f64, node: f64 },
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    Medium(#[from] MediumError),
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss-Legendre rule: `panels` equal panels of `order` nodes each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrequencyRule {
    pub panels: usize,
    pub order: usize,
}

impl FrequencyRule {
    pub fn node_count(&self) -> usize {
        self.panels * self.order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub window: (f64, f64),
    pub rule: FrequencyRule,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(window: (f64, f64), rule: FrequencyRule) -> Result<Self, ModeGridError> {
        let (lo, hi) = window;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(ModeGridError::InvalidWindow(lo, hi));
        }
        if rule.panels == 0 || rule.order == 0 || rule.node_count() < 2 {
            return Err(ModeGridError::InvalidRule { panels: rule.panels, order: rule.order });
        }
        let (x, w) = gauss_legendre(rule.order);
        let h = (hi - lo) / rule.panels as f64;
        let mut nodes = Vec::with_capacity(rule.node_count());
        let mut weights = Vec::with_capacity(rule.node_count());
        for p in 0..rule.panels {
            let a = lo + h * p as f64;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(a + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Ok(FrequencyGrid { window, rule, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Symmetry index of the real plane-wave basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Cos,
    Sin,
}

/// One angular/polarization/symmetry label of the kappa continuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaNode {
    pub direction: Vector3<f64>,
    pub polarization: Vector3<f64>,
    pub symmetry: Symmetry,
    pub angular_weight: f64,
}

/// Deterministic transverse frame: `e+ = n x e_min / |.|`, `e- = n x e+`, with
/// `e_min` the Cartesian axis of the smallest `|n_i|` (lowest index on ties).
pub fn polarization_frame(n: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let e_min = Vector3::ith(axis, 1.0);
    let ep = n.cross(&e_min).normalize();
    let em = n.cross(&ep);
    [ep, em]
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaGrid {
    pub freq: FrequencyGrid,
    pub angular_order: usize,
    directions: Vec<Vector3<f64>>,
    angular_weights: Vec<f64>,
    frames: Vec<[Vector3<f64>; 2]>,
}

impl KappaGrid {
    pub fn new(freq: FrequencyGrid, angular_order: usize) -> Result<Self, ModeGridError> {
        if angular_order == 0 {
            return Err(ModeGridError::InvalidAngularOrder);
        }
        let (ct, wt) = gauss_legendre(angular_order);
        let nphi = 2 * angular_order;
        let dphi = 2.0 * PI / nphi as f64;
        let mut directions = Vec::with_capacity(angular_order * nphi);
        let mut angular_weights = Vec::with_capacity(angular_order * nphi);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).sqrt();
            for j in 0..nphi {
                let phi = dphi * (j as f64 + 0.5);
                directions.push(Vector3::new(s * phi.cos(), s * phi.sin(), *c));
                angular_weights.push(w * dphi);
            }
        }
        let frames = directions.iter().map(polarization_frame).collect();
        Ok(KappaGrid { freq, angular_order, directions, angular_weights, frames })
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    pub fn angular_weights(&self) -> &[f64] {
        &self.angular_weights
    }

    /// Degeneracy nodes per frequency: directions x 2 polarizations x 2 symmetries.
    pub fn degeneracy_len(&self) -> usize {
        4 * self.directions.len()
    }

    /// Label of degeneracy index `d = (direction * 2 + polarization) * 2 + symmetry`.
    pub fn node(&self, d: usize) -> Result<KappaNode, ModeGridError> {
        if d >= self.degeneracy_len() {
            return Err(ModeGridError::InvalidNode { index: d, len: self.degeneracy_len() });
        }
        let a = d / 4;
        Ok(KappaNode {
            direction: self.directions[a],
            polarization: self.frames[a][(d / 2) % 2],
            symmetry: if d % 2 == 0 { Symmetry::Cos } else { Symmetry::Sin },
            angular_weight: self.angular_weights[a],
        })
    }

    /// `w_q^2 u_a` for degeneracy index `d` at frequency node `q`.
    pub fn degeneracy_weights(&self, q: usize) -> Vec<f64> {
        let w = self.freq.nodes[q];
        self.angular_weights.iter().flat_map(|u| [w * w * u; 4]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuGrid {
    pub freq: FrequencyGrid,
    voxels: Vec<usize>,
    centers: Vec<Point>,
    voxel_volume: f64,
}

impl MuGrid {
    /// Absorptive voxel indices into the medium, ascending.
    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_volume
    }

    /// Degeneracy nodes per frequency: absorptive voxels x 3 components.
    pub fn degeneracy_len(&self) -> usize {
        3 * self.voxels.len()
    }

    /// `(medium voxel, component)` of node `d = slot * 3 + j`.
    pub fn node(&self, d: usize) -> Result<(usize, usize), ModeGridError> {
        if d >= self.degeneracy_len() {
            return Err(ModeGridError::InvalidNode { index: d, len: self.degeneracy_len() });
        }
        Ok((self.voxels[d / 3], d % 3))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrids {
    pub kappa: KappaGrid,
    pub mu: MuGrid,
    /// Set when the medium has no absorptive voxel in the window.
    pub mu_empty: bool,
}

impl ModeGrids {
    pub fn frequencies(&self) -> &FrequencyGrid {
        &self.kappa.freq
    }
}

pub fn build_mode_grids(
    medium: &VoxelMedium,
    window: (f64, f64),
    rule: FrequencyRule,
    angular_order: usize,
) -> Result<ModeGrids, ModeGridError> {
    let freq = FrequencyGrid::new(window, rule)?;
    let kappa = KappaGrid::new(freq.clone(), angular_order)?;
    let voxels = medium.absorptive_voxels(&freq.nodes)?;
    if voxels.is_empty() && !medium.is_empty() {
        log::warn!("no absorptive voxels in [{}, {}]: the mu continuum is empty", window.0, window.1);
    }
    let centers = voxels.iter().map(|&v| medium.center(v)).collect();
    let mu_empty = voxels.is_empty();
    let mu = MuGrid { freq, voxels, centers, voxel_volume: medium.voxel_volume() };
    Ok(ModeGrids { kappa, mu, mu_empty })
}

/// Real transverse plane-wave mode `Phi_kappa(r)` at frequency `omega`.
pub fn phi_basis(node: &KappaNode, omega: f64, r: &Point) -> Vector3<f64> {
    let phase = omega * node.direction.dot(r);
    let s = match node.symmetry {
        Symmetry::Cos => phase.cos(),
        Symmetry::Sin => phase.sin(),
    };
    node.polarization * ((2.0 * PI).powf(-1.5) * s)
}

fn check_frequency(scat: &ScatteringOperator<'_>, node: f64) -> Result<(), ModeGridError> {
    let op = scat.omega();
    if (op - node).abs() > 1e-14 * node.abs() {
        return Err(ModeGridError::FrequencyMismatch { operator: op, node });
    }
    Ok(())
}

/// `-w^2 sqrt(2 w eps_i(x) / pi)` for every mu node at frequency `omega`.
fn m_prefactors(grid: &MuGrid, medium: &VoxelMedium, omega: f64) -> Result<Vec<f64>, ModeGridError> {
    grid.voxels
        .iter()
        .map(|&v| {
            let ei = medium.eps_imag(v, omega)?.max(0.0);
            Ok(-omega * omega * (2.0 * omega * ei / PI).sqrt())
        })
        .collect()
}

/// m-coefficient of mu node `d` at frequency node `q`, evaluated at `r`.
pub fn m_coefficient(
    scat: &ScatteringOperator<'_>,
    grid: &MuGrid,
    q: usize,
    d: usize,
    r: &Point,
) -> Result<Vector3<Complex64>, ModeGridError> {
    let omega = grid.freq.nodes[q];
    check_frequency(scat, omega)?;
    let (voxel, j) = grid.node(d)?;
    let ei = scat.medium().eps_imag(voxel, omega)?.max(0.0);
    if ei == 0.0 {
        return Ok(Vector3::zeros());
    }
    let g = scat.green_tensor(r, &scat.medium().center(voxel))?.tensor;
    let pref = -omega * omega * (2.0 * omega * ei / PI).sqrt();
    Ok(g.column(j) * Complex64::from(pref))
}

/// e-coefficient of kappa node `d` at frequency node `q`, evaluated at `r`.
pub fn e_coefficient(
    scat: &ScatteringOperator<'_>,
    grid: &KappaGrid,
    q: usize,
    d: usize,
    r: &Point,
) -> Result<Vector3<Complex64>, ModeGridError> {
    let omega = grid.freq.nodes[q];
    check_frequency(scat, omega)?;
    let node = grid.node(d)?;
    let mut acc = phi_basis(&node, omega, r).map(Complex64::from);
    if !scat.is_trivial() {
        let g = scat.to_voxels(r)?;
        for (a, (ga, w)) in g.iter().zip(scat.voxel_weights()).enumerate() {
            let phi = phi_basis(&node, omega, &scat.medium().center(a)).map(Complex64::from);
            acc += ga * phi * *w;
        }
    }
    Ok(acc * Complex64::from(omega))
}

/// Batched coefficient fields at one frequency node.
///
/// Holds `Phi` of every kappa node at every voxel center so that the
/// e-coefficients at many field points cost one small matrix product each.
pub struct NodeFields<'s, 'm> {
    scat: &'s ScatteringOperator<'m>,
    q: usize,
    omega: f64,
    /// `3 N_vox x N_kappa`, empty for a trivial operator.
    phi_voxels: DMatrix<Complex64>,
    m_pref: Vec<f64>,
}

impl<'s, 'm> NodeFields<'s, 'm> {
    pub fn new(scat: &'s ScatteringOperator<'m>, grids: &ModeGrids, q: usize) -> Result<Self, ModeGridError> {
        let len = grids.frequencies().len();
        if q >= len {
            return Err(ModeGridError::InvalidNode { index: q, len });
        }
        let omega = grids.frequencies().nodes[q];
        check_frequency(scat, omega)?;
        let medium = scat.medium();
        let nk = grids.kappa.degeneracy_len();
        let phi_voxels = if scat.is_trivial() {
            DMatrix::zeros(0, nk)
        } else {
            let mut m = DMatrix::zeros(3 * medium.len(), nk);
            for d in 0..nk {
                let node = grids.kappa.node(d)?;
                for (a, z) in medium.centers().iter().enumerate() {
                    let phi = phi_basis(&node, omega, z);
                    for i in 0..3 {
                        m[(3 * a + i, d)] = Complex64::from(phi[i]);
                    }
                }
            }
            m
        };
        let m_pref = m_prefactors(&grids.mu, medium, omega)?;
        Ok(NodeFields { scat, q, omega, phi_voxels, m_pref })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn node_index(&self) -> usize {
        self.q
    }

    /// e-coefficients of every kappa node at `r`, as a `3 x N_kappa` matrix.
    pub fn e_fields(&self, kappa: &KappaGrid, r: &Point) -> Result<DMatrix<Complex64>, ModeGridError> {
        let nk = kappa.degeneracy_len();
        let mut out = DMatrix::zeros(3, nk);
        for d in 0..nk {
            let phi = phi_basis(&kappa.node(d)?, self.omega, r);
            for i in 0..3 {
                out[(i, d)] = Complex64::from(phi[i]);
            }
        }
        if !self.scat.is_trivial() {
            out += self.scat.dressed_row(r)? * &self.phi_voxels;
        }
        Ok(out * Complex64::from(self.omega))
    }

    /// m-coefficients of every mu node at `r`, as a `3 x N_mu` matrix.
    pub fn m_fields(&self, mu: &MuGrid, r: &Point) -> Result<DMatrix<Complex64>, ModeGridError> {
        let mut out = DMatrix::zeros(3, mu.degeneracy_len());
        if mu.voxels.is_empty() {
            return Ok(out);
        }
        let g = self.scat.to_voxels(r)?;
        for (slot, (&v, &pref)) in mu.voxels.iter().zip(&self.m_pref).enumerate() {
            if pref == 0.0 {
                continue;
            }
            for j in 0..3 {
                for i in 0..3 {
                    out[(i, 3 * slot + j)] = g[v][(i, j)] * pref;
                }
            }
        }
        Ok(out)
    }
}
