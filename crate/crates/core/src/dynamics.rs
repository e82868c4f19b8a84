//! Single-excitation dynamics of emitters coupled to the discretized continua
//! in the rotating-wave approximation.
//!
//! The basis lists the `N` states `|e_k, vac>` first, followed by one block of
//! one-photon states per frequency node. The full model keeps every raw
//! discrete mode (kappa nodes then mu nodes); the reduced models keep only the
//! orthonormal bright modes of each node. Quadrature weights are folded into
//! the couplings so every discrete mode is canonically normalized.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::dbm::{bright_vectors, BrightBasis, CouplingKind, CouplingTable, DbmError};

/// Dense eigendecomposition is used up to this dimension, RK4 above it.
pub const MAX_EIGEN_DIM: usize = 4000;
/// Relative anti-Hermitian part tolerated in a Hamiltonian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-13;
/// `|H| dt` of the fixed-step integrator; the local norm error is about
/// `(|H| dt)^6 / 72`, far below 1e-12.
pub const RK4_STEP_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("{0} model requires a bright basis of kind {1:?}")]
    MissingBasis(ModelTag, CouplingKind),
    #[error("Hamiltonian is not Hermitian (relative deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("initial state has dimension {found}, Hamiltonian has {expected}")]
    StateDimension { expected: usize, found: usize },
    #[error("initial state must be normalized (norm {0})")]
    NotNormalized(f64),
    #[error("time nodes must start at 0 and increase")]
    InvalidTimes,
    #[error("transition frequency {omega} is not strictly inside the frequency window [{lo}, {hi}]")]
    OutOfWindow { omega: f64, lo: f64, hi: f64 },
    #[error("models were assembled on different frequency grids")]
    GridMismatch,
    #[error("emitter index {0} out of range")]
    NoSuchEmitter(usize),
    #[error("too few samples inside the fit window")]
    FitWindow,
    #[error(transparent)]
    Dbm(#[from] DbmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    FullEm,
    DoubleBright,
    Hybrid,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelTag::FullEm => "full-em",
            ModelTag::DoubleBright => "double-bright",
            ModelTag::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleExcitationHamiltonian {
    pub model: ModelTag,
    pub n_emitters: usize,
    pub matrix: DMatrix<Complex64>,
    /// Frequency of each node.
    pub frequencies: Vec<f64>,
    /// Start of each node's mode block in the basis.
    pub block_offsets: Vec<usize>,
    /// For reduced models: rows of the block's modes over the raw mode
    /// coordinates of the node (kappa then mu). Empty for the full model.
    pub mode_rows: Vec<DMatrix<Complex64>>,
}

impl SingleExcitationHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn block_len(&self, q: usize) -> usize {
        let end = self.block_offsets.get(q + 1).copied().unwrap_or(self.dim());
        end - self.block_offsets[q]
    }

    /// Maps a full-model state to this model's basis by projecting every node
    /// block onto its mode rows. Exact for states without a dark component.
    pub fn reduce_state(&self, full: &SingleExcitationHamiltonian, state: &DVector<Complex64>) -> DVector<Complex64> {
        if self.model == ModelTag::FullEm {
            return state.clone();
        }
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, self.n_emitters).copy_from(&state.rows(0, self.n_emitters));
        for (q, rows) in self.mode_rows.iter().enumerate() {
            let src = state.rows(full.block_offsets[q], full.block_len(q));
            out.rows_mut(self.block_offsets[q], rows.nrows()).copy_from(&(rows * src));
        }
        out
    }
}

fn assemble(
    model: ModelTag,
    couplings: &CouplingTable,
    blocks: Vec<DMatrix<Complex64>>,
    mode_rows: Vec<DMatrix<Complex64>>,
) -> SingleExcitationHamiltonian {
    let n = couplings.emitters.len();
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut dim = n;
    for b in &blocks {
        offsets.push(dim);
        dim += b.ncols();
    }
    let mut h = DMatrix::zeros(dim, dim);
    for (k, e) in couplings.emitters.iter().enumerate() {
        h[(k, k)] = Complex64::from(e.frequency);
    }
    for ((node, block), &off) in couplings.nodes.iter().zip(&blocks).zip(&offsets) {
        for a in 0..block.ncols() {
            h[(off + a, off + a)] = Complex64::from(node.omega);
            for k in 0..n {
                h[(k, off + a)] = block[(k, a)];
                h[(off + a, k)] = block[(k, a)].conj();
            }
        }
    }
    SingleExcitationHamiltonian {
        model,
        n_emitters: n,
        matrix: h,
        frequencies: couplings.frequencies(),
        block_offsets: offsets,
        mode_rows,
    }
}

/// Full double-continuum model: couplings `sqrt(w_q nu) g` to every raw mode.
pub fn assemble_full(couplings: &CouplingTable) -> SingleExcitationHamiltonian {
    let blocks = couplings
        .nodes
        .iter()
        .map(|node| node.weighted_rows(CouplingKind::Hybrid) * Complex64::from(node.freq_weight.sqrt()))
        .collect();
    assemble(ModelTag::FullEm, couplings, blocks, Vec::new())
}

fn check_kind(bright: &BrightBasis, model: ModelTag, kind: CouplingKind) -> Result<(), DynamicsError> {
    if bright.kind == kind {
        Ok(())
    } else {
        Err(DynamicsError::MissingBasis(model, kind))
    }
}

fn chi_block(chi: &DMatrix<Complex64>, w: f64) -> DMatrix<Complex64> {
    chi * Complex64::from(w.sqrt())
}

/// Hybrid single-continuum model: couplings `sqrt(w_q) chi` to the bright modes.
pub fn assemble_hybrid(couplings: &CouplingTable, bright: &BrightBasis) -> Result<SingleExcitationHamiltonian, DynamicsError> {
    check_kind(bright, ModelTag::Hybrid, CouplingKind::Hybrid)?;
    let rows = bright_vectors(couplings, bright, CouplingKind::Hybrid)?;
    let blocks = couplings.nodes.iter().zip(&bright.nodes).map(|(n, b)| chi_block(&b.chi, n.freq_weight)).collect();
    Ok(assemble(ModelTag::Hybrid, couplings, blocks, rows))
}

/// Double-bright model: separate e and m bright modes per node.
pub fn assemble_double_bright(
    couplings: &CouplingTable,
    bright_e: &BrightBasis,
    bright_m: &BrightBasis,
) -> Result<SingleExcitationHamiltonian, DynamicsError> {
    check_kind(bright_e, ModelTag::DoubleBright, CouplingKind::E)?;
    check_kind(bright_m, ModelTag::DoubleBright, CouplingKind::M)?;
    let re = bright_vectors(couplings, bright_e, CouplingKind::E)?;
    let rm = bright_vectors(couplings, bright_m, CouplingKind::M)?;
    let n = couplings.emitters.len();
    let mut blocks = Vec::with_capacity(couplings.len());
    let mut rows = Vec::with_capacity(couplings.len());
    for (q, node) in couplings.nodes.iter().enumerate() {
        let (ce, cm) = (&bright_e.nodes[q].chi, &bright_m.nodes[q].chi);
        let mut block = DMatrix::zeros(n, ce.ncols() + cm.ncols());
        block.columns_mut(0, ce.ncols()).copy_from(&chi_block(ce, node.freq_weight));
        block.columns_mut(ce.ncols(), cm.ncols()).copy_from(&chi_block(cm, node.freq_weight));
        blocks.push(block);
        let (nk, nm) = (node.ge.ncols(), node.gm.ncols());
        let mut r = DMatrix::zeros(re[q].nrows() + rm[q].nrows(), nk + nm);
        r.view_mut((0, 0), (re[q].nrows(), nk)).copy_from(&re[q]);
        r.view_mut((re[q].nrows(), nk), (rm[q].nrows(), nm)).copy_from(&rm[q]);
        rows.push(r);
    }
    Ok(assemble(ModelTag::DoubleBright, couplings, blocks, rows))
}

/// Bright bases needed by the reduced models.
#[derive(Debug, Clone, Copy, Default)]
pub struct BrightInputs<'a> {
    pub hybrid: Option<&'a BrightBasis>,
    pub e: Option<&'a BrightBasis>,
    pub m: Option<&'a BrightBasis>,
}

pub fn assemble_hamiltonian(
    model: ModelTag,
    couplings: &CouplingTable,
    bright: BrightInputs<'_>,
) -> Result<SingleExcitationHamiltonian, DynamicsError> {
    match model {
        ModelTag::FullEm => Ok(assemble_full(couplings)),
        ModelTag::Hybrid => {
            let b = bright.hybrid.ok_or(DynamicsError::MissingBasis(model, CouplingKind::Hybrid))?;
            assemble_hybrid(couplings, b)
        }
        ModelTag::DoubleBright => {
            let e = bright.e.ok_or(DynamicsError::MissingBasis(model, CouplingKind::E))?;
            let m = bright.m.ok_or(DynamicsError::MissingBasis(model, CouplingKind::M))?;
            assemble_double_bright(couplings, e, m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the log-linear fit.
    pub rms: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DynamicsResult {
    pub model: ModelTag,
    pub times: Vec<f64>,
    /// `populations[t][k]`: excited population of emitter `k` at time node `t`.
    pub populations: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub fit: Option<DecayFit>,
}

impl DynamicsResult {
    pub fn population(&self, k: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[k]).collect()
    }
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitary evolution of `psi0` sampled at `times`.
pub fn propagate(
    h: &SingleExcitationHamiltonian,
    psi0: &DVector<Complex64>,
    times: &[f64],
) -> Result<DynamicsResult, DynamicsError> {
    Propagator::new(h)?.run(psi0, times)
}

pub fn propagate_with(
    h: &SingleExcitationHamiltonian,
    psi0: &DVector<Complex64>,
    times: &[f64],
    method: Method,
) -> Result<DynamicsResult, DynamicsError> {
    Propagator::with_method(h, method)?.run(psi0, times)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Eigen,
    Rk4,
}

enum Engine {
    Eigen { values: Vec<f64>, vectors: DMatrix<Complex64> },
    Rk4 { shifted: DMatrix<Complex64>, dt_max: f64 },
}

/// A Hamiltonian prepared for repeated propagation: the eigendecomposition
/// (or the shifted integrator matrix) is computed once.
pub struct Propagator<'h> {
    h: &'h SingleExcitationHamiltonian,
    engine: Engine,
}

impl<'h> Propagator<'h> {
    pub fn new(h: &'h SingleExcitationHamiltonian) -> Result<Self, DynamicsError> {
        let method = if h.dim() <= MAX_EIGEN_DIM { Method::Eigen } else { Method::Rk4 };
        Self::with_method(h, method)
    }

    pub fn with_method(h: &'h SingleExcitationHamiltonian, method: Method) -> Result<Self, DynamicsError> {
        let scale = max_abs(&h.matrix);
        let skew = max_abs(&(&h.matrix - h.matrix.adjoint())) / scale.max(f64::MIN_POSITIVE);
        if skew > HERMITIAN_TOLERANCE {
            return Err(DynamicsError::NonHermitian(skew));
        }
        let engine = match method {
            Method::Eigen => {
                let eig = h.matrix.clone().symmetric_eigen();
                Engine::Eigen { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
            }
            Method::Rk4 => {
                // a diagonal shift only changes the global phase
                let diag: Vec<f64> = h.matrix.diagonal().iter().map(|z| z.re).collect();
                let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut shifted = h.matrix.clone();
                for i in 0..h.dim() {
                    shifted[(i, i)] -= 0.5 * (lo + hi);
                }
                let hnorm = shifted.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
                Engine::Rk4 { shifted, dt_max: RK4_STEP_SCALE / hnorm.max(f64::MIN_POSITIVE) }
            }
        };
        Ok(Propagator { h, engine })
    }

    pub fn hamiltonian(&self) -> &SingleExcitationHamiltonian {
        self.h
    }

    pub fn run(&self, psi0: &DVector<Complex64>, times: &[f64]) -> Result<DynamicsResult, DynamicsError> {
        let dim = self.h.dim();
        if psi0.len() != dim {
            return Err(DynamicsError::StateDimension { expected: dim, found: psi0.len() });
        }
        let norm0 = psi0.norm();
        if (norm0 - 1.0).abs() > 1e-12 {
            return Err(DynamicsError::NotNormalized(norm0));
        }
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DynamicsError::InvalidTimes);
        }
        let n = self.h.n_emitters;
        let mut populations = Vec::with_capacity(times.len());
        let mut norms = Vec::with_capacity(times.len());
        let mut record = |psi: &DVector<Complex64>| {
            populations.push((0..n).map(|k| psi[k].norm_sqr()).collect());
            norms.push(psi.norm());
        };
        match &self.engine {
            Engine::Eigen { values, vectors } => {
                let c = vectors.adjoint() * psi0;
                for &t in times {
                    let phased = DVector::from_fn(dim, |i, _| c[i] * Complex64::from_polar(1.0, -values[i] * t));
                    record(&(vectors * phased));
                }
            }
            Engine::Rk4 { shifted, dt_max } => {
                let minus_i = Complex64::new(0.0, -1.0);
                let f = |psi: &DVector<Complex64>| (shifted * psi) * minus_i;
                let mut psi = psi0.clone();
                let mut now = 0.0;
                for &t in times {
                    let span = t - now;
                    if span > 0.0 {
                        let steps = (span / dt_max).ceil() as usize;
                        let dt = span / steps as f64;
                        let half = Complex64::from(0.5 * dt);
                        let sixth = Complex64::from(dt / 6.0);
                        for _ in 0..steps {
                            let k1 = f(&psi);
                            let k2 = f(&(&psi + &k1 * half));
                            let k3 = f(&(&psi + &k2 * half));
                            let k4 = f(&(&psi + &k3 * Complex64::from(dt)));
                            psi += (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4) * sixth;
                        }
                        now = t;
                    }
                    record(&psi);
                }
            }
        }
        Ok(DynamicsResult { model: self.h.model, times: times.to_vec(), populations, norms, fit: None })
    }
}

/// State with the given emitter amplitudes and the field in vacuum.
pub fn emitter_state(h: &SingleExcitationHamiltonian, amplitudes: &[Complex64]) -> Result<DVector<Complex64>, DynamicsError> {
    if amplitudes.len() != h.n_emitters {
        return Err(DynamicsError::StateDimension { expected: h.n_emitters, found: amplitudes.len() });
    }
    let mut psi = DVector::zeros(h.dim());
    psi.rows_mut(0, amplitudes.len()).copy_from_slice(amplitudes);
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(DynamicsError::NotNormalized(0.0));
    }
    Ok(psi.unscale(norm))
}

/// One-photon state in bright mode `j` of node `q` of a reduced model,
/// written in the full model basis.
pub fn bright_photon_full(
    reduced: &SingleExcitationHamiltonian,
    full: &SingleExcitationHamiltonian,
    q: usize,
    j: usize,
) -> DVector<Complex64> {
    let mut psi = DVector::zeros(full.dim());
    let row = reduced.mode_rows[q].row(j);
    for a in 0..row.len() {
        psi[full.block_offsets[q] + a] = row[a].conj();
    }
    psi
}

/// One-photon state in raw mode `a` of node `q` with the bright span of
/// `reduced` removed, normalized, in the full model basis.
pub fn dark_photon_full(
    reduced: &SingleExcitationHamiltonian,
    full: &SingleExcitationHamiltonian,
    q: usize,
    a: usize,
) -> Option<DVector<Complex64>> {
    let rows = &reduced.mode_rows[q];
    let mut raw = DVector::zeros(rows.ncols());
    raw[a] = Complex64::from(1.0);
    // bright states are conj(rows); remove their components
    let overlaps = rows * &raw;
    let dark = raw - rows.adjoint() * overlaps;
    let norm = dark.norm();
    if norm < 1e-8 {
        return None;
    }
    let mut psi = DVector::zeros(full.dim());
    psi.rows_mut(full.block_offsets[q], rows.ncols()).copy_from(&dark.unscale(norm));
    Some(psi)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModelComparison {
    pub max_dev_hybrid: f64,
    pub max_dev_double_bright: f64,
    pub full: DynamicsResult,
    pub hybrid: DynamicsResult,
    pub double_bright: DynamicsResult,
}

/// The three models prepared for repeated comparison runs.
pub struct ModelSet<'h> {
    pub full: Propagator<'h>,
    pub double_bright: Propagator<'h>,
    pub hybrid: Propagator<'h>,
}

impl<'h> ModelSet<'h> {
    pub fn new(
        full: &'h SingleExcitationHamiltonian,
        double_bright: &'h SingleExcitationHamiltonian,
        hybrid: &'h SingleExcitationHamiltonian,
    ) -> Result<Self, DynamicsError> {
        if full.frequencies != hybrid.frequencies || full.frequencies != double_bright.frequencies {
            return Err(DynamicsError::GridMismatch);
        }
        Ok(ModelSet {
            full: Propagator::new(full)?,
            double_bright: Propagator::new(double_bright)?,
            hybrid: Propagator::new(hybrid)?,
        })
    }

    /// Propagates the same physical initial state, given in the full basis,
    /// in all three models.
    pub fn compare(&self, initial_full: &DVector<Complex64>, times: &[f64]) -> Result<ModelComparison, DynamicsError> {
        let full = self.full.hamiltonian();
        let pf = self.full.run(initial_full, times)?;
        let run = |p: &Propagator<'_>| {
            let psi = p.hamiltonian().reduce_state(full, initial_full);
            // renormalize away round-off of the projection only
            let psi = if (psi.norm() - 1.0).abs() < 1e-10 { psi.unscale(psi.norm()) } else { psi };
            p.run(&psi, times)
        };
        let ph = run(&self.hybrid)?;
        let pd = run(&self.double_bright)?;
        let dev = |other: &DynamicsResult| {
            pf.populations
                .iter()
                .zip(&other.populations)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        };
        Ok(ModelComparison {
            max_dev_hybrid: dev(&ph),
            max_dev_double_bright: dev(&pd),
            full: pf,
            hybrid: ph,
            double_bright: pd,
        })
    }
}

/// Propagates the same physical initial state in all three models.
pub fn compare_models(
    full: &SingleExcitationHamiltonian,
    double_bright: &SingleExcitationHamiltonian,
    hybrid: &SingleExcitationHamiltonian,
    initial_full: &DVector<Complex64>,
    times: &[f64],
) -> Result<ModelComparison, DynamicsError> {
    ModelSet::new(full, double_bright, hybrid)?.compare(initial_full, times)
}

/// Linear interpolation of `Omega^{(k)}` (hybrid) at the emitter's transition
/// frequency; the end segments extend to the window edges.
pub fn interpolate_omega(couplings: &CouplingTable, k: usize, window: (f64, f64)) -> Result<f64, DynamicsError> {
    let em = couplings.emitters.get(k).ok_or(DynamicsError::NoSuchEmitter(k))?;
    let w = em.frequency;
    if !(w > window.0 && w < window.1) {
        return Err(DynamicsError::OutOfWindow { omega: w, lo: window.0, hi: window.1 });
    }
    let xs = couplings.frequencies();
    let ys = couplings.profile(k, CouplingKind::Hybrid);
    Ok(interp(&xs, &ys, w))
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Golden-rule rate `2 pi Omega(w_eg)^2`.
pub fn decay_rate(couplings: &CouplingTable, k: usize, window: (f64, f64)) -> Result<f64, DynamicsError> {
    let om = interpolate_omega(couplings, k, window)?;
    Ok(2.0 * PI * om * om)
}

/// Free-space spontaneous emission rate `d^2 w^3 / (3 pi)` in natural units.
pub fn vacuum_decay_rate(dipole: f64, omega: f64) -> f64 {
    dipole * dipole * omega.powi(3) / (3.0 * PI)
}

/// Log-linear least-squares fit of `P(t) = A exp(-rate t)` over
/// `[0.1, 3] / reference_rate`.
pub fn fit_decay(times: &[f64], population: &[f64], reference_rate: f64) -> Result<DecayFit, DynamicsError> {
    let window = (0.1 / reference_rate, 3.0 / reference_rate);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(population)
        .filter(|(t, p)| **t >= window.0 && **t <= window.1 && **p > 0.0)
        .map(|(t, p)| (*t, p.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(DynamicsError::FitWindow);
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx).powi(2), b + (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (pts.iter().map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { rate: -slope, window, rms, samples: pts.len() })
}

/// Frequency window around `omega_eg`: `+- 20 gamma`, widened by half while
/// the coupling at either edge exceeds ten times its central value.
pub fn suggest_window(omega_eg: f64, gamma: f64, omega_at: impl Fn(f64) -> f64) -> (f64, f64) {
    let center = omega_at(omega_eg).abs();
    let mut half = 20.0 * gamma;
    for _ in 0..16 {
        let lo = (omega_eg - half).max(0.5 * omega_eg);
        let hi = omega_eg + half;
        let edge = omega_at(lo).abs().max(omega_at(hi).abs());
        if edge < 10.0 * center || lo <= 0.5 * omega_eg {
            return (lo, hi);
        }
        half *= 1.5;
    }
    ((omega_eg - half).max(0.5 * omega_eg), omega_eg + half)
}
