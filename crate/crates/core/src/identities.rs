//! Residual checks of the discrete Green-tensor sum rules and of the bright
//! basis algebra. Every check returns a [`ResidualReport`]; tolerances are
//! always supplied by the caller.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::dbm::{BrightBasis, CouplingTable, DbmError, Emitter};
use crate::greens::{GreensError, ScatteringOperator};
use crate::medium::{Location, VoxelMedium};
use crate::modegrid::{ModeGridError, ModeGrids, NodeFields};
use crate::Point;

/// Seed of the random exterior probe points.
pub const DEFAULT_PROBE_SEED: u64 = 0x5eed_0bad_cafe_0001;
/// Number of random exterior probes added to the emitter positions.
pub const RANDOM_PROBES: usize = 3;
/// Lower bound on the reference norm in relative residuals.
pub const NORM_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResidualReport {
    pub identity: String,
    pub omega: f64,
    pub probes: Vec<[f64; 3]>,
    pub absolute: f64,
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(identity: impl Into<String>, omega: f64, probes: &[Point], absolute: f64, reference: f64, tolerance: f64) -> Self {
        let relative = absolute / reference.max(NORM_FLOOR);
        ResidualReport {
            identity: identity.into(),
            omega,
            probes: probes.iter().map(|p| [p.x, p.y, p.z]).collect(),
            absolute,
            relative,
            tolerance,
            pass: relative <= tolerance,
        }
    }
}

/// Named tolerance sets for the identity suite.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Tolerances {
    /// Quadrature-limited sum rules (LDOS forms vs the solved Im G).
    pub quadrature: f64,
    /// Algebraic identities between finite sums.
    pub exact: f64,
    /// Löwdin orthonormality and projector checks.
    pub algebra: f64,
    /// Allowed negative eigenvalue of an overlap matrix.
    pub psd_floor: f64,
    /// Reciprocity of the solved Green tensor and solver residuals.
    pub reciprocity: f64,
}

impl Tolerances {
    pub const REFERENCE: Tolerances =
        Tolerances { quadrature: 1e-2, exact: 1e-12, algebra: 1e-10, psd_floor: 1e-12, reciprocity: 1e-10 };

    pub fn profile(name: &str) -> Option<Tolerances> {
        match name {
            "reference" | "default" => Some(Self::REFERENCE),
            "strict" => Some(Tolerances { quadrature: 1e-3, ..Self::REFERENCE }),
            "relaxed" => Some(Tolerances { quadrature: 5e-2, exact: 1e-10, algebra: 1e-8, psd_floor: 1e-10, reciprocity: 1e-8 }),
            _ => None,
        }
    }

    pub const PROFILES: [&'static str; 3] = ["reference", "strict", "relaxed"];
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::REFERENCE
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentityError {
    #[error("could not place {0} random probes outside the medium")]
    ProbePlacement(usize),
    #[error("emitter index {0} out of range")]
    NoSuchEmitter(usize),
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    ModeGrid(#[from] ModeGridError),
    #[error(transparent)]
    Dbm(#[from] DbmError),
}

/// Emitter positions followed by `RANDOM_PROBES` seeded exterior points drawn
/// from the medium bounding box padded by two voxel edges (or a unit box
/// around the emitters for an empty medium).
pub fn default_probes(medium: &VoxelMedium, emitters: &[Emitter], seed: u64) -> Result<Vec<Point>, IdentityError> {
    let mut probes: Vec<Point> = emitters.iter().map(|e| e.position).collect();
    let (lo, hi) = if medium.is_empty() {
        let c = if emitters.is_empty() {
            Point::zeros()
        } else {
            probes.iter().sum::<Point>() / probes.len() as f64
        };
        (c.add_scalar(-1.0), c.add_scalar(1.0))
    } else {
        let (lo, hi) = medium.bounding_box();
        let pad = 2.0 * medium.voxel_edge();
        (lo.add_scalar(-pad), hi.add_scalar(pad))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed = 0;
    for _ in 0..100_000 {
        if placed == RANDOM_PROBES {
            break;
        }
        let p = Point::from_fn(|i, _| rng.random_range(lo[i]..hi[i]));
        if medium.locate(&p) == Location::Exterior && probes.iter().all(|q| (q - p).norm() > 1e-6) {
            probes.push(p);
            placed += 1;
        }
    }
    if placed < RANDOM_PROBES {
        return Err(IdentityError::ProbePlacement(RANDOM_PROBES));
    }
    Ok(probes)
}

/// Right-hand side of the LDOS identity to compare against `Im G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LdosForm {
    /// e-mode boundary sum plus the absorbed-power volume integral.
    BoundaryVolume,
    /// e-mode sum plus m-mode sum.
    EM,
}

impl LdosForm {
    fn label(self) -> &'static str {
        match self {
            LdosForm::BoundaryVolume => "ldos_boundary_volume",
            LdosForm::EM => "ldos_e_plus_m",
        }
    }
}

fn outer_sum(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, weights: impl Fn(usize) -> f64) -> Matrix3<Complex64> {
    let mut out = Matrix3::zeros();
    for d in 0..a.ncols() {
        let w = weights(d);
        for i in 0..3 {
            for j in 0..3 {
                out[(i, j)] += a[(i, d)] * b[(j, d)].conj() * w;
            }
        }
    }
    out
}

/// Discrete mode sums `(pi / 2 w^3) sum nu c(x) c(y)^H` over the kappa and
/// mu continua at node `q`, returned as `(e_sum, m_sum)`.
pub fn discrete_im_green(
    fields: &NodeFields<'_, '_>,
    grids: &ModeGrids,
    x: &Point,
    y: &Point,
) -> Result<(Matrix3<Complex64>, Matrix3<Complex64>), IdentityError> {
    let w = fields.omega();
    let pref = PI / (2.0 * w * w * w);
    let kw = grids.kappa.degeneracy_weights(fields.node_index());
    let ex = fields.e_fields(&grids.kappa, x)?;
    let ey = if x == y { ex.clone() } else { fields.e_fields(&grids.kappa, y)? };
    let e_sum = outer_sum(&ex, &ey, |d| kw[d]) * Complex64::from(pref);
    let m_sum = if grids.mu.degeneracy_len() == 0 {
        Matrix3::zeros()
    } else {
        let mx = fields.m_fields(&grids.mu, x)?;
        let my = if x == y { mx.clone() } else { fields.m_fields(&grids.mu, y)? };
        let dv = grids.mu.voxel_volume();
        outer_sum(&mx, &my, |_| dv) * Complex64::from(pref)
    };
    Ok((e_sum, m_sum))
}

/// `w^2 sum_v dV eps_i(z_v) G(x, z_v) conj(G(z_v, y))` over the absorptive voxels.
pub fn volume_term(scat: &ScatteringOperator<'_>, grids: &ModeGrids, x: &Point, y: &Point) -> Result<Matrix3<Complex64>, IdentityError> {
    let w = scat.omega();
    let medium = scat.medium();
    let mut out = Matrix3::zeros();
    if grids.mu.voxels().is_empty() {
        return Ok(out);
    }
    let gx = scat.to_voxels(x)?;
    let gy = scat.from_voxels(y)?;
    for &v in grids.mu.voxels() {
        let ei = medium.eps_imag(v, w).map_err(GreensError::from)?.max(0.0);
        out += gx[v] * gy[v].map(|z| z.conj()) * Complex64::from(w * w * medium.voxel_volume() * ei);
    }
    Ok(out)
}

fn complex_frob(m: &Matrix3<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Residual of `Im G(x, y)` against the selected discrete right-hand side.
pub fn ldos_identity_residual(
    scat: &ScatteringOperator<'_>,
    grids: &ModeGrids,
    q: usize,
    x: &Point,
    y: &Point,
    form: LdosForm,
    tolerance: f64,
) -> Result<ResidualReport, IdentityError> {
    let fields = NodeFields::new(scat, grids, q)?;
    let (e_sum, m_sum) = discrete_im_green(&fields, grids, x, y)?;
    let rhs = match form {
        LdosForm::EM => e_sum + m_sum,
        LdosForm::BoundaryVolume => e_sum + volume_term(scat, grids, x, y)?,
    };
    let im_g = scat.im_green(x, y)?.map(Complex64::from);
    Ok(ResidualReport::new(form.label(), fields.omega(), &[*x, *y], complex_frob(&(rhs - im_g)), complex_frob(&im_g), tolerance))
}

/// Mutual residual of the two discrete right-hand sides; they differ only
/// through the m-sum versus volume-integral rearrangement.
pub fn ldos_forms_residual(
    scat: &ScatteringOperator<'_>,
    grids: &ModeGrids,
    q: usize,
    x: &Point,
    y: &Point,
    tolerance: f64,
) -> Result<ResidualReport, IdentityError> {
    let fields = NodeFields::new(scat, grids, q)?;
    let (e_sum, m_sum) = discrete_im_green(&fields, grids, x, y)?;
    let vol = volume_term(scat, grids, x, y)?;
    let reference = complex_frob(&(e_sum + m_sum));
    Ok(ResidualReport::new("ldos_forms_agree", fields.omega(), &[*x, *y], complex_frob(&(m_sum - vol)), reference, tolerance))
}

/// `(w^2 / pi) d . M . d` for a real dipole.
fn ldos_projection(omega: f64, d: &nalgebra::Vector3<f64>, m: &Matrix3<Complex64>) -> Complex64 {
    crate::greens::project(m, d, d) * (omega * omega / PI)
}

/// Residuals of `Omega^2` against `(w^2/pi) d . Im G . d` for emitter `k` at
/// node `q`: first through the discrete mode sums, then through the solved
/// Green tensor.
pub fn compensation_residual(
    k: usize,
    couplings: &CouplingTable,
    grids: &ModeGrids,
    scat: &ScatteringOperator<'_>,
    q: usize,
    tolerances: &Tolerances,
) -> Result<[ResidualReport; 2], IdentityError> {
    let em = couplings.emitters.get(k).ok_or(IdentityError::NoSuchEmitter(k))?;
    let node = &couplings.nodes[q];
    let omega2 = node.omega_e[k].powi(2) + node.omega_m[k].powi(2);
    let fields = NodeFields::new(scat, grids, q)?;
    let r = em.position;
    let (e_sum, m_sum) = discrete_im_green(&fields, grids, &r, &r)?;
    let w = fields.omega();
    let discrete = ldos_projection(w, &em.dipole, &(e_sum + m_sum));
    let direct = ldos_projection(w, &em.dipole, &scat.im_green(&r, &r)?.map(Complex64::from));
    Ok([
        ResidualReport::new(format!("compensation_discrete[{k}]"), w, &[r], (discrete - omega2).norm(), discrete.norm(), tolerances.exact),
        ResidualReport::new(format!("compensation_direct[{k}]"), w, &[r], (direct - omega2).norm(), direct.norm(), tolerances.quadrature),
    ])
}

/// Hybrid overlap entries against `(w^2/pi) d_i . Im G(r_i, r_j) . d_j / (Omega_i Omega_j)`
/// with `Im G` from the discrete mode sums; one report per node, worst entry.
pub fn overlap_green_residual(
    couplings: &CouplingTable,
    overlap: &DMatrix<Complex64>,
    grids: &ModeGrids,
    scat: &ScatteringOperator<'_>,
    q: usize,
    tolerance: f64,
) -> Result<ResidualReport, IdentityError> {
    let fields = NodeFields::new(scat, grids, q)?;
    let w = fields.omega();
    let ems = &couplings.emitters;
    let om = &couplings.nodes[q].omega_total;
    let mut worst: f64 = 0.0;
    for i in 0..ems.len() {
        for j in 0..ems.len() {
            let (e_sum, m_sum) = discrete_im_green(&fields, grids, &ems[i].position, &ems[j].position)?;
            let g = crate::greens::project(&(e_sum + m_sum), &ems[i].dipole, &ems[j].dipole) * (w * w / PI);
            let expect = g / (om[i] * om[j]);
            worst = worst.max((overlap[(i, j)] - expect).norm());
        }
    }
    let probes: Vec<Point> = ems.iter().map(|e| e.position).collect();
    Ok(ResidualReport::new("overlap_hybrid_im_green", w, &probes, worst, 1.0, tolerance))
}

/// `|G(x, y) - G(y, x)^T| / |G(x, y)|` (Frobenius).
pub fn reciprocity_residual(scat: &ScatteringOperator<'_>, x: &Point, y: &Point, tolerance: f64) -> Result<ResidualReport, IdentityError> {
    let a = scat.green_tensor(x, y)?.tensor;
    let b = scat.green_tensor(y, x)?.tensor;
    Ok(ResidualReport::new("reciprocity", scat.omega(), &[*x, *y], complex_frob(&(a - b.transpose())), complex_frob(&a), tolerance))
}

fn max_entry(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormality, inverse, Hermiticity, PSD and projector checks of every
/// node of a bright basis.
pub fn bright_algebra_residuals(bright: &BrightBasis, tolerances: &Tolerances) -> Vec<ResidualReport> {
    let mut out = Vec::new();
    for node in &bright.nodes {
        let Some(l) = &node.lowdin else { continue };
        let m = &node.overlap;
        let w = node.omega;
        let id = DMatrix::<Complex64>::identity(l.n_ind, l.n_ind);
        let bmb = &l.beta * m * l.beta.adjoint();
        out.push(ResidualReport::new("beta_M_betaH_identity", w, &[], max_entry(&(bmb - &id)), 1.0, tolerances.algebra));
        let bg = &l.beta * &l.gamma;
        out.push(ResidualReport::new("beta_gamma_identity", w, &[], max_entry(&(bg - &id)), 1.0, tolerances.algebra));
        out.push(ResidualReport::new("overlap_hermitian", w, &[], max_entry(&(m - m.adjoint())), max_entry(m), tolerances.exact));
        let diag = (0..m.nrows()).map(|i| (m[(i, i)] - Complex64::from(1.0)).norm()).fold(0.0, f64::max);
        out.push(ResidualReport::new("overlap_unit_diagonal", w, &[], diag, 1.0, tolerances.exact));
        let lmin = l.eigenvalues.last().copied().unwrap_or(0.0);
        out.push(ResidualReport::new("overlap_psd", w, &[], (-lmin).max(0.0), 1.0, tolerances.psd_floor));
        let p = &l.gamma * &l.beta;
        out.push(ResidualReport::new("projector_idempotent", w, &[], max_entry(&(&p * &p - &p)), max_entry(&p).max(1.0), tolerances.algebra));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbm::{lowdin, CouplingKind, Lowdin, NodeBright};

    fn synthetic_basis(m: DMatrix<Complex64>) -> (BrightBasis, Lowdin) {
        let l = lowdin(&m, 1e-10).unwrap();
        let node = NodeBright { omega: 1.0, active: (0..m.nrows()).collect(), overlap: m, lowdin: Some(l.clone()), chi: DMatrix::zeros(0, 0) };
        (BrightBasis { kind: CouplingKind::Hybrid, tolerance: 1e-10, nodes: vec![node] }, l)
    }

    fn random_gram(n: usize, k: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, k, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut m = &a * a.adjoint();
        let d: Vec<f64> = (0..n).map(|i| m[(i, i)].re.sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] /= d[i] * d[j];
            }
        }
        m
    }

    #[test]
    fn report_floor_and_pass_flag() {
        let r = ResidualReport::new("x", 1.0, &[], 1e-40, 0.0, 1e-12);
        assert!((r.relative - 1e-10).abs() < 1e-24);
        assert!(!r.pass);
        let r = ResidualReport::new("x", 1.0, &[], 1e-3, 1.0, 1e-2);
        assert!(r.pass);
    }

    #[test]
    fn single_emitter_algebra_is_exact() {
        let (b, _) = synthetic_basis(DMatrix::identity(1, 1));
        for r in bright_algebra_residuals(&b, &Tolerances::REFERENCE) {
            assert!(r.absolute < 1e-15, "{r:?}");
        }
    }

    #[test]
    fn random_psd_algebra_passes() {
        for seed in 0..5 {
            let (b, l) = synthetic_basis(random_gram(4, 6, seed));
            assert_eq!(l.n_ind, 4);
            for r in bright_algebra_residuals(&b, &Tolerances::REFERENCE) {
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn duplicated_row_drops_rank() {
        let m = random_gram(3, 5, 7);
        let idx = [0, 1, 2, 1];
        let dup = DMatrix::from_fn(4, 4, |i, j| m[(idx[i], idx[j])]);
        let (b, l) = synthetic_basis(dup);
        assert_eq!(l.n_ind, 3);
        for r in bright_algebra_residuals(&b, &Tolerances::REFERENCE) {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn probes_are_seeded_and_exterior() {
        use crate::medium::{build_voxel_medium, Geometry, PermittivityModel};
        let m = build_voxel_medium(&Geometry::Box { center: [0.0; 3], size: [0.6; 3] }, PermittivityModel::Drude { plasma: 2.0, damping: 0.3 }, 3).unwrap();
        let e = vec![Emitter::new(Point::new(0.0, 0.0, 0.6), nalgebra::Vector3::z(), 1.0)];
        let a = default_probes(&m, &e, DEFAULT_PROBE_SEED).unwrap();
        let b = default_probes(&m, &e, DEFAULT_PROBE_SEED).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1 + RANDOM_PROBES);
        assert!(a.iter().all(|p| m.locate(p) == Location::Exterior));
    }
}
