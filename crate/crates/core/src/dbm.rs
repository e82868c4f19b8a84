//! Emitter couplings to the discretized continua, overlap (Gram) matrices of
//! the per-emitter bright modes, and their Löwdin canonical orthonormalization.
//!
//! Per frequency node `q` the weighted coupling row of emitter `k` is
//! `W_k = sqrt(nu) g_k` over the degeneracy nodes of the requested kind, so that
//! `Omega_k = |W_k|` and `M_ij = <W_i, W_j> / (Omega_i Omega_j)`.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use std::cmp::Ordering;

use crate::greens::{solve_scattering, GreensError, ScatteringOperator};
use crate::medium::{Location, VoxelMedium};
use crate::modegrid::{ModeGridError, ModeGrids, NodeFields};
use crate::Point;

/// Default relative rank tolerance of the Löwdin truncation.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;
/// Allowed anti-Hermitian part of an overlap matrix, relative to its largest entry.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DbmError {
    #[error("emitter {index}: {reason}")]
    InvalidEmitter { index: usize, reason: String },
    #[error("emitter {index} lies inside the medium (voxel {voxel})")]
    Placement { index: usize, voxel: usize },
    #[error("{kind:?} coupling of emitter {emitter} vanishes at omega = {omega}; overlap normalization undefined")]
    UndefinedNormalization { emitter: usize, kind: CouplingKind, omega: f64 },
    #[error("matrix is not Hermitian (relative deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("rank tolerance {0} must lie in (0, 1)")]
    InvalidTolerance(f64),
    #[error("no eigenvalue above the rank threshold; bright basis is empty")]
    DegenerateBasis,
    #[error("bright basis was built for {found:?} couplings, {expected:?} requested")]
    KindMismatch { expected: CouplingKind, found: CouplingKind },
    #[error("expected {expected} scattering operators (one per frequency node), got {found}")]
    OperatorCount { expected: usize, found: usize },
    #[error(transparent)]
    ModeGrid(#[from] ModeGridError),
    #[error(transparent)]
    Greens(#[from] GreensError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emitter {
    pub position: Point,
    pub dipole: Vector3<f64>,
    pub frequency: f64,
}

impl Emitter {
    pub fn new(position: Point, dipole: Vector3<f64>, frequency: f64) -> Self {
        Emitter { position, dipole, frequency }
    }
}

/// Checks emitter invariants against a medium and a frequency window.
pub fn validate_emitters(emitters: &[Emitter], medium: &VoxelMedium, window: (f64, f64)) -> Result<(), DbmError> {
    for (index, e) in emitters.iter().enumerate() {
        let bad = |reason: String| Err(DbmError::InvalidEmitter { index, reason });
        if !(e.dipole.norm() > 0.0) || !e.dipole.iter().all(|v| v.is_finite()) {
            return bad("dipole must be nonzero and finite".into());
        }
        if !e.position.iter().all(|v| v.is_finite()) {
            return bad("position must be finite".into());
        }
        if !(e.frequency >= window.0 && e.frequency <= window.1) {
            return bad(format!("transition frequency {} outside window [{}, {}]", e.frequency, window.0, window.1));
        }
        match medium.locate(&e.position) {
            Location::Exterior => {}
            Location::Center(voxel) | Location::Inside(voxel) => return Err(DbmError::Placement { index, voxel }),
        }
    }
    Ok(())
}

/// Which continuum an overlap or bright basis refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    E,
    M,
    Hybrid,
}

/// Couplings of all emitters at one frequency node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCouplings {
    pub omega: f64,
    pub freq_weight: f64,
    /// `g^e`, one row per emitter, one column per kappa degeneracy node.
    pub ge: DMatrix<Complex64>,
    /// `g^m`, one row per emitter, one column per mu degeneracy node.
    pub gm: DMatrix<Complex64>,
    /// Degeneracy measure `w^2 u` of each kappa column.
    pub kappa_measure: Vec<f64>,
    /// Degeneracy measure (voxel volume) shared by all mu columns.
    pub mu_measure: f64,
    pub omega_e: Vec<f64>,
    pub omega_m: Vec<f64>,
    pub omega_total: Vec<f64>,
}

impl NodeCouplings {
    /// Rows `sqrt(nu) g` of the requested kind; hybrid rows concatenate e then m.
    pub fn weighted_rows(&self, kind: CouplingKind) -> DMatrix<Complex64> {
        let n = self.ge.nrows();
        let e = || {
            let mut w = self.ge.clone();
            for (d, nu) in self.kappa_measure.iter().enumerate() {
                w.column_mut(d).scale_mut(nu.sqrt());
            }
            w
        };
        let m = || &self.gm * Complex64::from(self.mu_measure.sqrt());
        match kind {
            CouplingKind::E => e(),
            CouplingKind::M => m(),
            CouplingKind::Hybrid => {
                let (ne, nm) = (self.ge.ncols(), self.gm.ncols());
                let mut w = DMatrix::zeros(n, ne + nm);
                w.columns_mut(0, ne).copy_from(&e());
                w.columns_mut(ne, nm).copy_from(&m());
                w
            }
        }
    }

    pub fn omega_of(&self, kind: CouplingKind) -> &[f64] {
        match kind {
            CouplingKind::E => &self.omega_e,
            CouplingKind::M => &self.omega_m,
            CouplingKind::Hybrid => &self.omega_total,
        }
    }

    /// Normalized coefficients `h = g / Omega` of emitter `k`; `None` when `Omega = 0`.
    pub fn h_coefficients(&self, k: usize, kind: CouplingKind) -> Option<DVector<Complex64>> {
        let om = self.omega_of(kind)[k];
        if om == 0.0 {
            return None;
        }
        let g: DVector<Complex64> = match kind {
            CouplingKind::E => self.ge.row(k).transpose(),
            CouplingKind::M => self.gm.row(k).transpose(),
            CouplingKind::Hybrid => {
                let mut v = DVector::zeros(self.ge.ncols() + self.gm.ncols());
                v.rows_mut(0, self.ge.ncols()).copy_from(&self.ge.row(k).transpose());
                v.rows_mut(self.ge.ncols(), self.gm.ncols()).copy_from(&self.gm.row(k).transpose());
                v
            }
        };
        Some(g / Complex64::from(om))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub emitters: Vec<Emitter>,
    pub nodes: Vec<NodeCouplings>,
}

impl CouplingTable {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.omega).collect()
    }

    /// `Omega^{(k)}` of the given kind at every node.
    pub fn profile(&self, k: usize, kind: CouplingKind) -> Vec<f64> {
        self.nodes.iter().map(|n| n.omega_of(kind)[k]).collect()
    }
}

fn row_norms(w: &DMatrix<Complex64>) -> Vec<f64> {
    w.row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect()
}

/// Couplings of every emitter at frequency node `q`.
pub fn node_couplings(
    emitters: &[Emitter],
    grids: &ModeGrids,
    scat: &ScatteringOperator<'_>,
    q: usize,
) -> Result<NodeCouplings, DbmError> {
    let fields = NodeFields::new(scat, grids, q)?;
    let omega = fields.omega();
    let nk = grids.kappa.degeneracy_len();
    let nm = grids.mu.degeneracy_len();
    let n = emitters.len();
    let pref = Complex64::from((0.5 / omega).sqrt());
    let mut ge = DMatrix::zeros(n, nk);
    let mut gm = DMatrix::zeros(n, nm);
    for (k, em) in emitters.iter().enumerate() {
        let d = em.dipole.map(Complex64::from).transpose();
        let e = fields.e_fields(&grids.kappa, &em.position)?;
        ge.row_mut(k).copy_from(&(d * e * pref));
        if nm > 0 {
            let m = fields.m_fields(&grids.mu, &em.position)?;
            gm.row_mut(k).copy_from(&(d * m * pref));
        }
    }
    let mut node = NodeCouplings {
        omega,
        freq_weight: grids.frequencies().weights[q],
        ge,
        gm,
        kappa_measure: grids.kappa.degeneracy_weights(q),
        mu_measure: grids.mu.voxel_volume(),
        omega_e: Vec::new(),
        omega_m: Vec::new(),
        omega_total: Vec::new(),
    };
    node.omega_e = row_norms(&node.weighted_rows(CouplingKind::E));
    node.omega_m = row_norms(&node.weighted_rows(CouplingKind::M));
    node.omega_total = node.omega_e.iter().zip(&node.omega_m).map(|(e, m)| (e * e + m * m).sqrt()).collect();
    Ok(node)
}

/// Couplings from pre-factorized operators, one per frequency node.
pub fn emitter_couplings(
    emitters: &[Emitter],
    grids: &ModeGrids,
    scats: &[ScatteringOperator<'_>],
) -> Result<CouplingTable, DbmError> {
    let nf = grids.frequencies().len();
    if scats.len() != nf {
        return Err(DbmError::OperatorCount { expected: nf, found: scats.len() });
    }
    validate_emitters(emitters, scats.first().map(|s| s.medium()).unwrap_or(&VoxelMedium::empty()), grids.frequencies().window)?;
    let nodes = scats
        .par_iter()
        .enumerate()
        .map(|(q, s)| node_couplings(emitters, grids, s, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CouplingTable { emitters: emitters.to_vec(), nodes })
}

/// Couplings for a medium, factorizing one frequency at a time so that only
/// a few operators are alive at once.
pub fn couplings_for_medium(
    medium: &VoxelMedium,
    emitters: &[Emitter],
    grids: &ModeGrids,
) -> Result<CouplingTable, DbmError> {
    validate_emitters(emitters, medium, grids.frequencies().window)?;
    let nodes = grids
        .frequencies()
        .nodes
        .par_iter()
        .enumerate()
        .map(|(q, &w)| {
            let scat = solve_scattering(medium, w)?;
            node_couplings(emitters, grids, &scat, q)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CouplingTable { emitters: emitters.to_vec(), nodes })
}

fn gram(w: &DMatrix<Complex64>, norms: &[f64]) -> DMatrix<Complex64> {
    let mut m = w * w.adjoint();
    let n = norms.len();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= norms[i] * norms[j];
        }
        m[(i, i)] = Complex64::from(1.0);
    }
    m
}

/// Overlap matrix of the given kind at every node.
pub fn overlap_matrices(couplings: &CouplingTable, kind: CouplingKind) -> Result<Vec<DMatrix<Complex64>>, DbmError> {
    couplings
        .nodes
        .iter()
        .map(|node| {
            let om = node.omega_of(kind);
            if let Some(emitter) = om.iter().position(|&o| o == 0.0) {
                return Err(DbmError::UndefinedNormalization { emitter, kind, omega: node.omega });
            }
            Ok(gram(&node.weighted_rows(kind), om))
        })
        .collect()
}

/// Löwdin canonical orthonormalization of one overlap matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Lowdin {
    /// Eigenvalues of `M`, descending; values within `1e-12 lambda_max` of
    /// each other are ordered by their eigenvectors instead.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors of `M` as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<Complex64>,
    pub n_ind: usize,
    /// `N_ind x N`; rows are `lambda_j^{-1/2} u_j^H`.
    pub beta: DMatrix<Complex64>,
    /// `N x N_ind`, `gamma = M beta^H`.
    pub gamma: DMatrix<Complex64>,
    pub tolerance: f64,
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

pub fn lowdin(m: &DMatrix<Complex64>, tolerance: f64) -> Result<Lowdin, DbmError> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(DbmError::InvalidTolerance(tolerance));
    }
    let n = m.nrows();
    let scale = max_abs(m);
    let skew = max_abs(&(m - m.adjoint())) / scale.max(f64::MIN_POSITIVE);
    if !m.is_square() || skew > HERMITIAN_TOLERANCE {
        return Err(DbmError::NonHermitian(skew));
    }
    let herm = (m + m.adjoint()) * Complex64::from(0.5);
    let eig = herm.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<Complex64> = eig.eigenvectors.column(j).iter().copied().collect();
            // phase rule: the largest-magnitude entry (first on ties) becomes real positive
            let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = v.iter().position(|z| z.norm() >= big * (1.0 - 1e-12)).unwrap_or(0);
            let phase = v[pivot].conj() / v[pivot].norm();
            v.iter_mut().for_each(|z| *z *= phase);
            v[pivot] = Complex64::from(v[pivot].re);
            (eig.eigenvalues[j], v)
        })
        .collect();
    let lmax = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) {
        return Err(DbmError::DegenerateBasis);
    }
    // descending, then clusters of eigenvalues within `tie` of their first
    // member are ordered by the eigenvector tie-break
    let tie = 1e-12 * lmax;
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut start = 0;
    while start < n {
        let end = (start..n).find(|&k| pairs[start].0 - pairs[k].0 > tie).unwrap_or(n);
        pairs[start..end].sort_by(|a, b| lex_cmp(&b.1, &a.1));
        start = end;
    }
    let n_ind = pairs.iter().filter(|p| p.0 > tolerance * lmax).count();
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| pairs[j].1[i]);
    let beta = DMatrix::from_fn(n_ind, n, |j, i| pairs[j].1[i].conj() / pairs[j].0.sqrt());
    let gamma = m * beta.adjoint();
    Ok(Lowdin {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        eigenvectors,
        n_ind,
        beta,
        gamma,
        tolerance,
    })
}

/// Bright basis at one frequency node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBright {
    pub omega: f64,
    /// Emitters with nonzero coupling at this node; the others are excluded
    /// from the basis and carry zero chi rows.
    pub active: Vec<usize>,
    /// Overlap matrix among the active emitters.
    pub overlap: DMatrix<Complex64>,
    pub lowdin: Option<Lowdin>,
    /// `N x N_ind`, rows of inactive emitters are zero.
    pub chi: DMatrix<Complex64>,
}

impl NodeBright {
    pub fn n_ind(&self) -> usize {
        self.lowdin.as_ref().map_or(0, |l| l.n_ind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrightBasis {
    pub kind: CouplingKind,
    pub tolerance: f64,
    pub nodes: Vec<NodeBright>,
}

impl BrightBasis {
    pub fn n_ind(&self) -> Vec<usize> {
        self.nodes.iter().map(NodeBright::n_ind).collect()
    }
}

pub fn build_bright_basis(couplings: &CouplingTable, kind: CouplingKind, tolerance: f64) -> Result<BrightBasis, DbmError> {
    let n = couplings.emitters.len();
    let nodes = couplings
        .nodes
        .par_iter()
        .map(|node| {
            let om = node.omega_of(kind);
            let active: Vec<usize> = (0..n).filter(|&k| om[k] > 0.0).collect();
            if active.is_empty() {
                return Ok(NodeBright {
                    omega: node.omega,
                    active,
                    overlap: DMatrix::zeros(0, 0),
                    lowdin: None,
                    chi: DMatrix::zeros(n, 0),
                });
            }
            let rows = node.weighted_rows(kind).select_rows(active.iter());
            let norms: Vec<f64> = active.iter().map(|&k| om[k]).collect();
            let overlap = gram(&rows, &norms);
            let l = lowdin(&overlap, tolerance)?;
            let mut chi = DMatrix::zeros(n, l.n_ind);
            for (slot, &k) in active.iter().enumerate() {
                for j in 0..l.n_ind {
                    chi[(k, j)] = l.gamma[(slot, j)] * om[k];
                }
            }
            Ok(NodeBright { omega: node.omega, active, overlap, lowdin: Some(l), chi })
        })
        .collect::<Result<Vec<_>, DbmError>>()?;
    Ok(BrightBasis { kind, tolerance, nodes })
}

/// Effective couplings `chi^{(ij)} = Omega^{(i)} gamma^{(ij)}` per node.
pub fn chi_couplings(couplings: &CouplingTable, bright: &BrightBasis, kind: CouplingKind) -> Result<Vec<DMatrix<Complex64>>, DbmError> {
    if bright.kind != kind {
        return Err(DbmError::KindMismatch { expected: kind, found: bright.kind });
    }
    let n = couplings.emitters.len();
    Ok(couplings
        .nodes
        .iter()
        .zip(&bright.nodes)
        .map(|(node, b)| {
            let om = node.omega_of(kind);
            let mut chi = DMatrix::zeros(n, b.n_ind());
            if let Some(l) = &b.lowdin {
                for (slot, &k) in b.active.iter().enumerate() {
                    for j in 0..l.n_ind {
                        chi[(k, j)] = l.gamma[(slot, j)] * om[k];
                    }
                }
            }
            chi
        })
        .collect())
}

/// Orthonormal bright vectors per node, as rows over the measure-weighted
/// mode coordinates of the requested kind (`N_ind x N_modes`).
pub fn bright_vectors(couplings: &CouplingTable, bright: &BrightBasis, kind: CouplingKind) -> Result<Vec<DMatrix<Complex64>>, DbmError> {
    if bright.kind != kind {
        return Err(DbmError::KindMismatch { expected: kind, found: bright.kind });
    }
    Ok(couplings
        .nodes
        .iter()
        .zip(&bright.nodes)
        .map(|(node, b)| {
            let w = node.weighted_rows(kind);
            let Some(l) = &b.lowdin else {
                return DMatrix::zeros(0, w.ncols());
            };
            let om = node.omega_of(kind);
            let mut h = w.select_rows(b.active.iter());
            for (slot, &k) in b.active.iter().enumerate() {
                h.row_mut(slot).unscale_mut(om[k]);
            }
            &l.beta * h
        })
        .collect())
}

/// Removes the bright span from `raw` and returns the dark remainder together
/// with its largest overlap against the bright rows.
pub fn dark_complement(bright_rows: &DMatrix<Complex64>, raw: &DVector<Complex64>) -> (DVector<Complex64>, f64) {
    // <x, v_j> = sum_a x_a conj(v_ja)
    let overlaps = bright_rows.conjugate() * raw;
    let dark = raw - bright_rows.transpose() * overlaps;
    let residual = (bright_rows.conjugate() * &dark).iter().map(|z| z.norm()).fold(0.0, f64::max);
    (dark, residual)
}
