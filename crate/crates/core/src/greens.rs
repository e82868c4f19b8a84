//! Dyadic Green tensors: the closed-form outgoing free-space tensor and the
//! scattered tensor of a voxelized medium obtained from a dense coupled-dipole
//! (volume Lippmann-Schwinger) solve.
//!
//! The discrete system for the field at voxel centers `z_a` due to a source at
//! `y` reads
//!
//! ```text
//! G(z_a, y) - sum_b K_ab beta_b dV G(z_b, y) = G0(z_a, y)
//! ```
//!
//! with `K_ab = G0(z_a, z_b)` off the diagonal and `K_aa = S / dV`, where `S` is
//! the integral of `G0` over the equal-volume sphere (depolarization `1/3` plus
//! radiative correction).

use nalgebra::{DMatrix, Matrix3, Vector3, LU};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::medium::{Location, MediumError, VoxelMedium};
use crate::Point;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Condition estimates above this abort the factorization.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative residual allowed on the probe right-hand side.
pub const MAX_SOLVE_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GreensError {
    #[error("frequency must be strictly positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("real part of the Green tensor is singular at coincident points")]
    Singular,
    #[error("field point lies inside voxel {voxel} but not at its center")]
    SelfTermAmbiguity { voxel: usize },
    #[error("voxel-to-voxel propagators ({0}, {1}) are not exposed")]
    VoxelPair(usize, usize),
    #[error("scattering system at omega = {omega} is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { omega: f64, condition: f64 },
    #[error("scattering solve residual {residual:.3e} exceeds tolerance at omega = {omega}")]
    Residual { omega: f64, residual: f64 },
    #[error(transparent)]
    Medium(#[from] MediumError),
}

/// A 3x3 complex dyadic with the points and frequency it was evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct Dyadic {
    pub tensor: Matrix3<Complex64>,
    pub field: Point,
    pub source: Point,
    pub omega: f64,
}

impl Dyadic {
    pub fn imag(&self) -> Matrix3<f64> {
        self.tensor.map(|z| z.im)
    }

    /// `d1 . G . d2` for real dipoles.
    pub fn project(&self, d1: &Vector3<f64>, d2: &Vector3<f64>) -> Complex64 {
        project(&self.tensor, d1, d2)
    }
}

pub fn project(t: &Matrix3<Complex64>, d1: &Vector3<f64>, d2: &Vector3<f64>) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += d1[i] * t[(i, j)] * d2[j];
        }
    }
    acc
}

fn check_omega(omega: f64) -> Result<(), GreensError> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(GreensError::NonPositiveFrequency(omega))
    }
}

/// Raw free-space tensor for `x != y`; callers validate the inputs.
fn g0_tensor(x: &Point, y: &Point, k: f64) -> Matrix3<Complex64> {
    let r = x - y;
    let dist = r.norm();
    let u = r / dist;
    let kr = k * dist;
    let scalar = (I * kr).exp() / (4.0 * PI * dist);
    let inv = 1.0 / kr;
    let a = scalar * (1.0 + I * inv - inv * inv);
    let b = scalar * (-1.0 - 3.0 * I * inv + 3.0 * inv * inv);
    let mut t = Matrix3::from_diagonal_element(a);
    for i in 0..3 {
        for j in 0..3 {
            t[(i, j)] += b * (u[i] * u[j]);
        }
    }
    t
}

/// Outgoing free-space dyadic Green tensor of `(-omega^2 + curl curl)`.
pub fn vacuum_green(x: &Point, y: &Point, omega: f64) -> Result<Dyadic, GreensError> {
    check_omega(omega)?;
    if (x - y).norm() == 0.0 {
        return Err(GreensError::Singular);
    }
    Ok(Dyadic { tensor: g0_tensor(x, y, omega), field: *x, source: *y, omega })
}

/// Spherical Bessel functions `j0` and `j2`; power series near the origin.
fn bessel_j0_j2(x: f64) -> (f64, f64) {
    if x < 0.5 {
        let y = -0.25 * x * x;
        let series = |l: u32| {
            let mut term = 1.0;
            let mut dfact: f64 = (1..=2 * l + 1).step_by(2).map(|v| v as f64).product();
            let mut sum = 0.0;
            for n in 0..12u32 {
                if n > 0 {
                    term *= 2.0 * y / n as f64;
                    dfact *= (2 * n + 2 * l + 1) as f64;
                }
                sum += term / dfact;
            }
            sum * x.powi(l as i32)
        };
        (series(0), series(2))
    } else {
        let (s, c) = x.sin_cos();
        let j0 = s / x;
        let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
        (j0, j2)
    }
}

/// `Im G0(x, y)`, finite also at `x == y` where it equals `omega/(6 pi) I`.
pub fn vacuum_green_imag(x: &Point, y: &Point, omega: f64) -> Result<Matrix3<f64>, GreensError> {
    check_omega(omega)?;
    let r = x - y;
    let dist = r.norm();
    let (j0, j2) = bessel_j0_j2(omega * dist);
    let pref = omega / (4.0 * PI);
    let mut t = Matrix3::from_diagonal_element(pref * (2.0 * j0 - j2) / 3.0);
    if dist > 0.0 {
        let u = r / dist;
        t += pref * j2 * u * u.transpose();
    }
    Ok(t)
}

/// Integral of `G0` over a sphere of volume `volume` centered on the source
/// point, principal value plus the `-1/(3 k^2)` depolarization term. Scalar
/// multiple of the identity.
pub fn self_term(omega: f64, volume: f64) -> Complex64 {
    let a = (3.0 * volume / (4.0 * PI)).cbrt();
    let ka = omega * a;
    (2.0 * (1.0 - I * ka) * (I * ka).exp() - 3.0) / (3.0 * omega * omega)
}

/// Factorized scattering system of one medium at one frequency.
pub struct ScatteringOperator<'m> {
    omega: f64,
    medium: &'m VoxelMedium,
    /// `beta_a * dV` per voxel.
    weights: Vec<Complex64>,
    /// `None` when every weight vanishes (vacuum or uncoupled medium).
    lu: Option<LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
    condition: f64,
    residual: f64,
}

impl std::fmt::Debug for ScatteringOperator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScatteringOperator")
            .field("omega", &self.omega)
            .field("voxels", &self.medium.len())
            .field("condition", &self.condition)
            .field("residual", &self.residual)
            .finish()
    }
}

/// Assembles and factorizes `I - K B` for `medium` at `omega`.
pub fn solve_scattering(medium: &VoxelMedium, omega: f64) -> Result<ScatteringOperator<'_>, GreensError> {
    check_omega(omega)?;
    let nvox = medium.len();
    let dv = medium.voxel_volume();
    let weights = (0..nvox)
        .map(|a| Ok(medium.beta(a, omega)? * dv))
        .collect::<Result<Vec<_>, MediumError>>()?;
    if weights.iter().all(|w| w.norm() == 0.0) {
        return Ok(ScatteringOperator { omega, medium, weights, lu: None, condition: 1.0, residual: 0.0 });
    }
    let n = 3 * nvox;
    let mut a = DMatrix::<Complex64>::identity(n, n);
    let s_over_dv = self_term(omega, dv) / dv;
    let centers = medium.centers();
    for p in 0..nvox {
        for q in 0..nvox {
            let block = if p == q {
                Matrix3::from_diagonal_element(s_over_dv)
            } else {
                g0_tensor(&centers[p], &centers[q], omega)
            };
            let w = weights[q];
            for i in 0..3 {
                for j in 0..3 {
                    a[(3 * p + i, 3 * q + j)] -= block[(i, j)] * w;
                }
            }
        }
    }
    let lu = a.clone().lu();
    let inverse = lu.try_inverse().ok_or(GreensError::IllConditioned { omega, condition: f64::INFINITY })?;
    let condition = one_norm(&a) * one_norm(&inverse);
    if !(condition <= MAX_CONDITION) {
        return Err(GreensError::IllConditioned { omega, condition });
    }
    let probe = DMatrix::from_fn(n, 1, |i, _| {
        let t = (i + 1) as f64;
        Complex64::new((0.37 * t).sin() + 1.0, (0.11 * t).cos())
    });
    let x = lu.solve(&probe).ok_or(GreensError::IllConditioned { omega, condition })?;
    let residual = (&a * x - &probe).norm() / probe.norm();
    if !(residual < MAX_SOLVE_RESIDUAL) {
        return Err(GreensError::Residual { omega, residual });
    }
    Ok(ScatteringOperator { omega, medium, weights, lu: Some(lu), condition, residual })
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

impl<'m> ScatteringOperator<'m> {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn medium(&self) -> &'m VoxelMedium {
        self.medium
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Relative residual of the factorized solve on the probe right-hand side.
    pub fn probe_residual(&self) -> f64 {
        self.residual
    }

    /// `beta(z_a) dV` for each voxel.
    pub fn voxel_weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn is_trivial(&self) -> bool {
        self.lu.is_none()
    }

    fn exterior(&self, x: &Point) -> Result<Location, GreensError> {
        match self.medium.locate(x) {
            Location::Inside(voxel) => Err(GreensError::SelfTermAmbiguity { voxel }),
            loc => Ok(loc),
        }
    }

    /// `G(z_a, y)` for every voxel `a`, stacked into a `3N x 3` matrix, for an
    /// exterior source point `y`.
    fn voxel_response(&self, y: &Point) -> Option<DMatrix<Complex64>> {
        let lu = self.lu.as_ref()?;
        let centers = self.medium.centers();
        let mut rhs = DMatrix::<Complex64>::zeros(3 * centers.len(), 3);
        for (a, z) in centers.iter().enumerate() {
            rhs.fixed_view_mut::<3, 3>(3 * a, 0).copy_from(&g0_tensor(z, y, self.omega));
        }
        Some(lu.solve(&rhs).expect("factorization verified at construction"))
    }

    /// `G(x, z_a) beta_a dV` blocks laid out as a `3 x 3N` matrix, for an
    /// exterior field point `x`. Zero when the medium does not scatter.
    pub fn dressed_row(&self, x: &Point) -> Result<DMatrix<Complex64>, GreensError> {
        self.exterior_only(x)?;
        let n = 3 * self.medium.len();
        let Some(resp) = self.voxel_response(x) else {
            return Ok(DMatrix::zeros(3, n));
        };
        let mut row = resp.transpose();
        for (a, w) in self.weights.iter().enumerate() {
            for j in 0..3 {
                for i in 0..3 {
                    row[(i, 3 * a + j)] *= w;
                }
            }
        }
        Ok(row)
    }

    /// `G(x, z_a)` for each voxel, for an exterior field point `x`.
    pub fn to_voxels(&self, x: &Point) -> Result<Vec<Matrix3<Complex64>>, GreensError> {
        self.exterior_only(x)?;
        let centers = self.medium.centers();
        match self.voxel_response(x) {
            Some(resp) => Ok((0..centers.len())
                .map(|a| resp.fixed_view::<3, 3>(3 * a, 0).transpose())
                .collect()),
            None => Ok(centers.iter().map(|z| g0_tensor(x, z, self.omega)).collect()),
        }
    }

    /// `G(z_a, y)` for each voxel, for an exterior source point `y`.
    pub fn from_voxels(&self, y: &Point) -> Result<Vec<Matrix3<Complex64>>, GreensError> {
        self.exterior_only(y)?;
        let centers = self.medium.centers();
        match self.voxel_response(y) {
            Some(resp) => Ok((0..centers.len()).map(|a| resp.fixed_view::<3, 3>(3 * a, 0).into()).collect()),
            None => Ok(centers.iter().map(|z| g0_tensor(z, y, self.omega)).collect()),
        }
    }

    fn exterior_only(&self, x: &Point) -> Result<(), GreensError> {
        match self.exterior(x)? {
            Location::Exterior => Ok(()),
            Location::Center(a) => Err(GreensError::VoxelPair(a, a)),
            Location::Inside(voxel) => Err(GreensError::SelfTermAmbiguity { voxel }),
        }
    }

    /// Scattered part `G - G0` between two exterior points (finite at `x == y`).
    pub fn scattered(&self, x: &Point, y: &Point) -> Result<Matrix3<Complex64>, GreensError> {
        self.exterior_only(x)?;
        self.exterior_only(y)?;
        let Some(resp) = self.voxel_response(y) else {
            return Ok(Matrix3::zeros());
        };
        let mut acc = Matrix3::zeros();
        for (a, z) in self.medium.centers().iter().enumerate() {
            let block: Matrix3<Complex64> = resp.fixed_view::<3, 3>(3 * a, 0).into();
            acc += g0_tensor(x, z, self.omega) * block * self.weights[a];
        }
        Ok(acc)
    }

    /// Full Green tensor `G(x, y)` of the medium.
    pub fn green_tensor(&self, x: &Point, y: &Point) -> Result<Dyadic, GreensError> {
        let lx = self.exterior(x)?;
        let ly = self.exterior(y)?;
        let tensor = match (lx, ly) {
            (Location::Exterior, Location::Exterior) => {
                if (x - y).norm() == 0.0 {
                    return Err(GreensError::Singular);
                }
                g0_tensor(x, y, self.omega) + self.scattered(x, y)?
            }
            (Location::Center(a), Location::Exterior) => self.column_block(a, y),
            (Location::Exterior, Location::Center(b)) => self.column_block(b, x).transpose(),
            (Location::Center(a), Location::Center(b)) => return Err(GreensError::VoxelPair(a, b)),
            (Location::Inside(voxel), _) | (_, Location::Inside(voxel)) => {
                return Err(GreensError::SelfTermAmbiguity { voxel })
            }
        };
        Ok(Dyadic { tensor, field: *x, source: *y, omega: self.omega })
    }

    fn column_block(&self, a: usize, y: &Point) -> Matrix3<Complex64> {
        match self.voxel_response(y) {
            Some(resp) => resp.fixed_view::<3, 3>(3 * a, 0).into(),
            None => g0_tensor(&self.medium.center(a), y, self.omega),
        }
    }

    /// `Im G(x, y)`; allowed at coincident exterior points.
    pub fn im_green(&self, x: &Point, y: &Point) -> Result<Matrix3<f64>, GreensError> {
        match (self.exterior(x)?, self.exterior(y)?) {
            (Location::Exterior, Location::Exterior) => {
                Ok(vacuum_green_imag(x, y, self.omega)? + self.scattered(x, y)?.map(|z| z.im))
            }
            _ => Ok(self.green_tensor(x, y)?.imag()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{build_voxel_medium, Geometry, PermittivityModel};

    fn max_abs(m: &Matrix3<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn vacuum_self_imaginary_part() {
        let x = Point::new(0.3, -1.0, 2.0);
        for omega in [0.2, 1.0, 3.7] {
            let im = vacuum_green_imag(&x, &x, omega).unwrap();
            let expect = Matrix3::from_diagonal_element(omega / (6.0 * PI));
            assert!((im - expect).abs().max() < 1e-15);
        }
    }

    #[test]
    fn imaginary_part_matches_closed_form() {
        let x = Point::new(0.0, 0.0, 0.0);
        for d in [0.05, 0.3, 0.9, 2.5, 7.0] {
            let y = Point::new(d * 0.6, -d * 0.8, 0.0);
            let full = vacuum_green(&x, &y, 1.3).unwrap().imag();
            let im = vacuum_green_imag(&x, &y, 1.3).unwrap();
            assert!((full - im).abs().max() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn vacuum_symmetry() {
        let x = Point::new(0.1, 0.2, 0.3);
        let y = Point::new(-1.0, 0.4, 2.2);
        let a = vacuum_green(&x, &y, 0.9).unwrap().tensor;
        let b = vacuum_green(&y, &x, 0.9).unwrap().tensor;
        assert!(max_abs(&(a - b.transpose())) < 1e-16);
    }

    #[test]
    fn far_field_decay() {
        let x = Point::zeros();
        let dir = Point::new(1.0, 2.0, 2.0) / 3.0;
        let omega = 2.0;
        let r = 400.0;
        let g1 = vacuum_green(&(dir * r), &x, omega).unwrap().tensor;
        let g2 = vacuum_green(&(dir * 2.0 * r), &x, omega).unwrap().tensor;
        let ratio = g1.norm() / g2.norm();
        assert!((ratio - 2.0).abs() < 1e-2, "ratio {ratio}");
    }

    #[test]
    fn coincident_and_domain_errors() {
        let x = Point::zeros();
        assert_eq!(vacuum_green(&x, &x, 1.0).unwrap_err(), GreensError::Singular);
        assert!(matches!(vacuum_green(&x, &Point::x(), -1.0), Err(GreensError::NonPositiveFrequency(_))));
    }

    #[test]
    fn self_term_small_size_limit() {
        // Im S -> (omega / 6 pi) dV and Re S -> -1/(3 omega^2) as the sphere shrinks
        let (omega, dv) = (1.0, 1e-6);
        let s = self_term(omega, dv);
        assert!((s.im / dv - omega / (6.0 * PI)).abs() < 1e-6);
        assert!((s.re + 1.0 / (3.0 * omega * omega)).abs() < 1e-3);
    }

    fn single_voxel() -> VoxelMedium {
        let g = Geometry::Voxels { centers: vec![[0.0; 3]], volume: 0.02 };
        build_voxel_medium(&g, PermittivityModel::Drude { plasma: 1.5, damping: 0.2 }, 1).unwrap()
    }

    #[test]
    fn single_voxel_matches_hand_solve() {
        let medium = single_voxel();
        let omega = 0.8;
        let scat = solve_scattering(&medium, omega).unwrap();
        let z = Point::zeros();
        let x = Point::new(0.7, 0.1, -0.3);
        let y = Point::new(-0.2, 0.9, 0.4);
        let eps = medium.epsilon(0, omega).unwrap();
        let bdv = omega * omega * (eps - 1.0) * medium.voxel_volume();
        // (1 - S b) is a scalar for a single voxel
        let denom = 1.0 - self_term(omega, medium.voxel_volume()) * bdv / medium.voxel_volume();
        let expect = g0_tensor(&x, &y, omega) + g0_tensor(&x, &z, omega) * g0_tensor(&z, &y, omega) * (bdv / denom);
        let got = scat.green_tensor(&x, &y).unwrap().tensor;
        let err = max_abs(&(got - expect)) / max_abs(&expect);
        assert!(err < 1e-13, "relative error {err}");
        // field point at the voxel center
        let at_center = scat.green_tensor(&z, &y).unwrap().tensor;
        let g_c = g0_tensor(&z, &y, omega) / denom;
        assert!(max_abs(&(at_center - g_c)) / max_abs(&g_c) < 1e-13);
    }

    #[test]
    fn vacuum_medium_reproduces_free_space() {
        let g = Geometry::Box { center: [0.0; 3], size: [0.6; 3] };
        let m = build_voxel_medium(&g, PermittivityModel::Vacuum, 3).unwrap();
        let scat = solve_scattering(&m, 1.1).unwrap();
        assert!(scat.is_trivial());
        let x = Point::new(1.0, 0.0, 0.2);
        let y = Point::new(-0.9, 0.5, 0.0);
        let g = scat.green_tensor(&x, &y).unwrap().tensor;
        assert_eq!(g, vacuum_green(&x, &y, 1.1).unwrap().tensor);
    }

    #[test]
    fn rejects_points_inside_voxels() {
        let medium = single_voxel();
        let scat = solve_scattering(&medium, 1.0).unwrap();
        let inside = Point::new(0.01, 0.0, 0.0);
        assert!(matches!(
            scat.green_tensor(&inside, &Point::x()),
            Err(GreensError::SelfTermAmbiguity { voxel: 0 })
        ));
    }

    #[test]
    fn uncoupled_limit_is_continuous() {
        let g = Geometry::Box { center: [0.0; 3], size: [0.4; 3] };
        let x = Point::new(0.8, 0.1, 0.0);
        let y = Point::new(-0.1, -0.7, 0.3);
        let free = vacuum_green(&x, &y, 1.0).unwrap().tensor;
        let mut last = f64::INFINITY;
        for s in [1e-1, 1e-3, 1e-5] {
            let model = PermittivityModel::DrudeLorentz {
                terms: vec![crate::medium::LorentzTerm { strength: s, resonance: 2.0, damping: 0.3 }],
            };
            let m = build_voxel_medium(&g, model, 2).unwrap();
            let scat = solve_scattering(&m, 1.0).unwrap();
            let diff = max_abs(&(scat.green_tensor(&x, &y).unwrap().tensor - free));
            assert!(diff < last);
            last = diff;
        }
        assert!(last < 1e-6);
    }
}
