//! Dispersive-absorptive permittivity models and the voxelized description of
//! the finite nanostructure.
//!
//! All quantities are in natural units (`hbar = c = eps0 = 1`); frequencies are
//! angular frequencies and lengths share the unit set by [`crate::units`].

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MediumError {
    #[error("frequency must be strictly positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("frequency {nu} outside tabulated range [{min}, {max}]")]
    OutOfTable { nu: f64, min: f64, max: f64 },
    #[error("invalid permittivity model: {0}")]
    InvalidModel(String),
    #[error("geometry has zero volume: {0}")]
    ZeroVolume(String),
    #[error("duplicate voxel centers at indices {0} and {1}")]
    DuplicateVoxel(usize, usize),
}

/// One Lorentz oscillator `strength / (resonance^2 - nu^2 - i damping nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzTerm {
    pub strength: f64,
    pub resonance: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermittivityModel {
    Vacuum,
    Drude { plasma: f64, damping: f64 },
    DrudeLorentz { terms: Vec<LorentzTerm> },
    /// Sorted `(nu, re, im)` samples, linearly interpolated in both parts.
    Tabulated { samples: Vec<(f64, f64, f64)> },
}

impl PermittivityModel {
    /// Checks the construction invariants. Lossless Drude/Lorentz terms are
    /// rejected unless `allow_lossless` is set (the explicit uncoupled limit).
    pub fn validate(&self, allow_lossless: bool) -> Result<(), MediumError> {
        match self {
            Self::Vacuum => Ok(()),
            Self::Drude { plasma, damping } => {
                if !plasma.is_finite() || *plasma < 0.0 {
                    return Err(MediumError::InvalidModel(format!("plasma frequency {plasma}")));
                }
                check_damping(*damping, allow_lossless)
            }
            Self::DrudeLorentz { terms } => {
                if terms.is_empty() {
                    return Err(MediumError::InvalidModel("no Lorentz terms".into()));
                }
                for t in terms {
                    if !(t.strength >= 0.0 && t.resonance >= 0.0) {
                        return Err(MediumError::InvalidModel(format!("Lorentz term {t:?}")));
                    }
                    check_damping(t.damping, allow_lossless)?;
                }
                Ok(())
            }
            Self::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(MediumError::InvalidModel("table needs at least two samples".into()));
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(MediumError::InvalidModel(format!(
                            "table frequencies not strictly increasing at {}",
                            w[1].0
                        )));
                    }
                }
                if let Some(s) = samples.iter().find(|s| s.0 > 0.0 && s.2 < 0.0) {
                    return Err(MediumError::InvalidModel(format!("active sample (Im eps < 0) at {}", s.0)));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, nu: f64) -> Result<Complex64, MediumError> {
        eval_epsilon(self, nu)
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self, Self::Vacuum)
    }
}

fn check_damping(damping: f64, allow_lossless: bool) -> Result<(), MediumError> {
    if damping > 0.0 || (allow_lossless && damping == 0.0) {
        Ok(())
    } else {
        Err(MediumError::InvalidModel(format!("damping must be > 0, got {damping}")))
    }
}

/// Complex relative permittivity of `model` at angular frequency `nu`.
pub fn eval_epsilon(model: &PermittivityModel, nu: f64) -> Result<Complex64, MediumError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(MediumError::NonPositiveFrequency(nu));
    }
    let eps = match model {
        PermittivityModel::Vacuum => Complex64::new(1.0, 0.0),
        PermittivityModel::Drude { plasma, damping } => {
            1.0 - plasma * plasma / Complex64::new(nu * nu, damping * nu)
        }
        PermittivityModel::DrudeLorentz { terms } => {
            terms.iter().fold(Complex64::new(1.0, 0.0), |acc, t| {
                acc + t.strength
                    / Complex64::new(t.resonance * t.resonance - nu * nu, -t.damping * nu)
            })
        }
        PermittivityModel::Tabulated { samples } => {
            let (min, max) = (samples[0].0, samples[samples.len() - 1].0);
            if nu < min || nu > max {
                return Err(MediumError::OutOfTable { nu, min, max });
            }
            let hi = samples.partition_point(|s| s.0 < nu).max(1);
            let (a, b) = (samples[hi - 1], samples[hi]);
            let t = (nu - a.0) / (b.0 - a.0);
            Complex64::new(a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2))
        }
    };
    Ok(eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Axis-aligned box; `resolution` voxels per axis.
    Box { center: [f64; 3], size: [f64; 3] },
    /// Sphere voxelized on a cubic lattice of `resolution` cells per diameter.
    Sphere { center: [f64; 3], radius: f64 },
    /// Explicit voxel centers sharing one volume; `resolution` is ignored.
    Voxels { centers: Vec<[f64; 3]>, volume: f64 },
}

/// Voxelized finite medium. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMedium {
    centers: Vec<Point>,
    voxel_volume: f64,
    materials: Vec<PermittivityModel>,
    material_of: Vec<usize>,
    bbox: (Point, Point),
    uncoupled: bool,
}

impl VoxelMedium {
    /// A medium with no voxels at all: free space.
    pub fn empty() -> Self {
        Self {
            centers: Vec::new(),
            voxel_volume: 1.0,
            materials: vec![PermittivityModel::Vacuum],
            material_of: Vec::new(),
            bbox: (Point::zeros(), Point::zeros()),
            uncoupled: false,
        }
    }

    /// Assembles a medium from explicit per-voxel material indices.
    pub fn from_parts(
        centers: Vec<Point>,
        voxel_volume: f64,
        materials: Vec<PermittivityModel>,
        material_of: Vec<usize>,
    ) -> Result<Self, MediumError> {
        if !(voxel_volume > 0.0) || !voxel_volume.is_finite() {
            return Err(MediumError::ZeroVolume(format!("voxel volume {voxel_volume}")));
        }
        if centers.is_empty() {
            return Err(MediumError::ZeroVolume("no voxels".into()));
        }
        if material_of.len() != centers.len() || material_of.iter().any(|&m| m >= materials.len()) {
            return Err(MediumError::InvalidModel("material index table mismatch".into()));
        }
        for m in &materials {
            m.validate(false)?;
        }
        let tol = 1e-9 * voxel_volume.cbrt();
        let mut order: Vec<usize> = (0..centers.len()).collect();
        order.sort_by(|&a, &b| centers[a].x.total_cmp(&centers[b].x));
        for (i, &a) in order.iter().enumerate() {
            for &b in &order[i + 1..] {
                if centers[b].x - centers[a].x > tol {
                    break;
                }
                if (centers[a] - centers[b]).norm() <= tol {
                    return Err(MediumError::DuplicateVoxel(a.min(b), a.max(b)));
                }
            }
        }
        let half = 0.5 * voxel_volume.cbrt();
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for c in &centers {
            lo = lo.inf(&c.add_scalar(-half));
            hi = hi.sup(&c.add_scalar(half));
        }
        Ok(Self { centers, voxel_volume, materials, material_of, bbox: (lo, hi), uncoupled: false })
    }

    /// Same geometry, but every voxel behaves as vacuum (`eps = 1`, `beta = 0`).
    pub fn uncoupled(mut self) -> Self {
        self.uncoupled = true;
        self
    }

    pub fn is_uncoupled(&self) -> bool {
        self.uncoupled
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, voxel: usize) -> Point {
        self.centers[voxel]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_volume
    }

    pub fn total_volume(&self) -> f64 {
        self.voxel_volume * self.centers.len() as f64
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        self.bbox
    }

    /// Edge of the cube with the voxel's volume.
    pub fn voxel_edge(&self) -> f64 {
        self.voxel_volume.cbrt()
    }

    /// Field points closer than this to a voxel center (but not on it) are rejected.
    pub fn exclusion_radius(&self) -> f64 {
        0.5 * self.voxel_edge()
    }

    pub fn material(&self, voxel: usize) -> &PermittivityModel {
        &self.materials[self.material_of[voxel]]
    }

    pub fn epsilon(&self, voxel: usize, nu: f64) -> Result<Complex64, MediumError> {
        if self.uncoupled {
            if !(nu > 0.0) {
                return Err(MediumError::NonPositiveFrequency(nu));
            }
            return Ok(Complex64::new(1.0, 0.0));
        }
        eval_epsilon(self.material(voxel), nu)
    }

    /// Susceptibility `beta = nu^2 (eps - 1)`.
    pub fn beta(&self, voxel: usize, nu: f64) -> Result<Complex64, MediumError> {
        Ok(nu * nu * (self.epsilon(voxel, nu)? - 1.0))
    }

    pub fn eps_imag(&self, voxel: usize, nu: f64) -> Result<f64, MediumError> {
        Ok(self.epsilon(voxel, nu)?.im)
    }

    /// Voxels with `Im eps > 0` at some frequency of `band`, in voxel order.
    pub fn absorptive_voxels(&self, band: &[f64]) -> Result<Vec<usize>, MediumError> {
        let mut out = Vec::new();
        for v in 0..self.len() {
            let mut lossy = false;
            for &nu in band {
                if self.eps_imag(v, nu)? > 0.0 {
                    lossy = true;
                    break;
                }
            }
            if lossy {
                out.push(v);
            }
        }
        Ok(out)
    }

    /// Classifies a field point against the voxel grid.
    pub fn locate(&self, x: &Point) -> Location {
        let edge = self.voxel_edge();
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (x - c).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        if best.0 <= 1e-9 * edge {
            Location::Center(best.1)
        } else if best.0 < self.exclusion_radius() {
            Location::Inside(best.1)
        } else {
            Location::Exterior
        }
    }

    /// Stable content hash (FNV-1a over the bit patterns), used as a cache key.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.voxel_volume.to_bits());
        eat(self.uncoupled as u64);
        for (c, &m) in self.centers.iter().zip(&self.material_of) {
            c.iter().for_each(|v| eat(v.to_bits()));
            eat(m as u64);
        }
        for m in &self.materials {
            eat(format!("{m:?}").len() as u64);
            for b in format!("{m:?}").bytes() {
                eat(b as u64);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Exterior,
    Center(usize),
    Inside(usize),
}

/// Voxelizes `geometry` with a uniform Cartesian grid.
pub fn build_voxel_medium(
    geometry: &Geometry,
    model: PermittivityModel,
    resolution: usize,
) -> Result<VoxelMedium, MediumError> {
    let (centers, volume) = match geometry {
        Geometry::Box { center, size } => {
            if size.iter().any(|s| !(*s > 0.0)) {
                return Err(MediumError::ZeroVolume(format!("box size {size:?}")));
            }
            if resolution == 0 {
                return Err(MediumError::ZeroVolume("resolution 0".into()));
            }
            let n = resolution;
            let step = Vector3::from(*size) / n as f64;
            let origin = Vector3::from(*center) - Vector3::from(*size) * 0.5;
            let mut centers = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let idx = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5);
                        centers.push(origin + idx.component_mul(&step));
                    }
                }
            }
            (centers, step.x * step.y * step.z)
        }
        Geometry::Sphere { center, radius } => {
            if !(*radius > 0.0) {
                return Err(MediumError::ZeroVolume(format!("sphere radius {radius}")));
            }
            if resolution == 0 {
                return Err(MediumError::ZeroVolume("resolution 0".into()));
            }
            let n = resolution;
            let h = 2.0 * radius / n as f64;
            let c = Vector3::from(*center);
            let mut centers = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let off = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h
                            - Vector3::repeat(*radius);
                        if off.norm_squared() <= radius * radius {
                            centers.push(c + off);
                        }
                    }
                }
            }
            if centers.is_empty() {
                return Err(MediumError::ZeroVolume("sphere contains no lattice points".into()));
            }
            (centers, h * h * h)
        }
        Geometry::Voxels { centers, volume } => {
            (centers.iter().map(|c| Vector3::from(*c)).collect(), *volume)
        }
    };
    let count = centers.len();
    VoxelMedium::from_parts(centers, volume, vec![model], vec![0; count])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_is_unity() {
        assert_eq!(eval_epsilon(&PermittivityModel::Vacuum, 0.7).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn drude_reference_value() {
        let m = PermittivityModel::Drude { plasma: 1.0, damping: 0.1 };
        let eps = eval_epsilon(&m, 0.5).unwrap();
        assert_relative_eq!(eps.re, -2.846_153_846_153_846, epsilon = 1e-12);
        assert_relative_eq!(eps.im, 0.769_230_769_230_769, epsilon = 1e-12);
    }

    #[test]
    fn drude_plasma_zero_crossing() {
        let m = PermittivityModel::Drude { plasma: 1.0, damping: 1e-12 };
        assert!(eval_epsilon(&m, 1.0).unwrap().re.abs() < 1e-20);
    }

    #[test]
    fn lorentz_reduces_to_drude_at_zero_resonance() {
        let d = PermittivityModel::Drude { plasma: 1.3, damping: 0.2 };
        let l = PermittivityModel::DrudeLorentz {
            terms: vec![LorentzTerm { strength: 1.69, resonance: 0.0, damping: 0.2 }],
        };
        for nu in [0.3, 0.9, 2.1] {
            let (a, b) = (d.eval(nu).unwrap(), l.eval(nu).unwrap());
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn domain_and_range_errors() {
        assert!(matches!(
            eval_epsilon(&PermittivityModel::Vacuum, 0.0),
            Err(MediumError::NonPositiveFrequency(_))
        ));
        let t = PermittivityModel::Tabulated { samples: vec![(0.5, -1.0, 0.1), (1.5, -3.0, 0.3)] };
        assert!(matches!(t.eval(2.0), Err(MediumError::OutOfTable { .. })));
        let mid = t.eval(1.0).unwrap();
        assert_relative_eq!(mid.re, -2.0, epsilon = 1e-15);
        assert_relative_eq!(mid.im, 0.2, epsilon = 1e-15);
        assert_eq!(t.eval(1.5).unwrap(), Complex64::new(-3.0, 0.3));
    }

    #[test]
    fn validation_rules() {
        assert!(PermittivityModel::Drude { plasma: 1.0, damping: 0.0 }.validate(false).is_err());
        assert!(PermittivityModel::Drude { plasma: 1.0, damping: 0.0 }.validate(true).is_ok());
        let unsorted = PermittivityModel::Tabulated { samples: vec![(1.0, 1.0, 0.0), (1.0, 2.0, 0.0)] };
        assert!(unsorted.validate(false).is_err());
    }

    #[test]
    fn cube_tiling() {
        let g = Geometry::Box { center: [0.5; 3], size: [1.0; 3] };
        let m = build_voxel_medium(&g, PermittivityModel::Vacuum, 2).unwrap();
        assert_eq!(m.len(), 8);
        assert_relative_eq!(m.voxel_volume(), 0.125);
        assert_eq!(m.center(0), Point::new(0.25, 0.25, 0.25));
    }

    #[test]
    fn sphere_volume_converges() {
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        for res in [4, 8, 12, 16] {
            let g = Geometry::Sphere { center: [0.0; 3], radius: 1.0 };
            let m = build_voxel_medium(&g, PermittivityModel::Vacuum, res).unwrap();
            // independent count: lattice cells whose center lies in the ball
            let h = 2.0 / res as f64;
            let count = (0..res * res * res)
                .filter(|i| {
                    let c = |k: usize| (k as f64 + 0.5) * h - 1.0;
                    let (a, b, d) = (c(i / (res * res)), c((i / res) % res), c(i % res));
                    a * a + b * b + d * d <= 1.0
                })
                .count();
            assert_eq!(m.len(), count);
            assert!((m.total_volume() - exact).abs() / exact < 0.05, "res {res}");
        }
    }

    #[test]
    fn explicit_voxel_passthrough() {
        let g = Geometry::Voxels { centers: vec![[1.0, 2.0, 3.0]], volume: 0.2 };
        let m = build_voxel_medium(&g, PermittivityModel::Vacuum, 0).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.voxel_volume(), 0.2);
    }

    #[test]
    fn degenerate_geometries_fail() {
        let g = Geometry::Box { center: [0.0; 3], size: [1.0, 0.0, 1.0] };
        assert!(matches!(
            build_voxel_medium(&g, PermittivityModel::Vacuum, 2),
            Err(MediumError::ZeroVolume(_))
        ));
        let g = Geometry::Voxels { centers: vec![[0.0; 3]], volume: 0.0 };
        assert!(build_voxel_medium(&g, PermittivityModel::Vacuum, 1).is_err());
        let g = Geometry::Voxels { centers: vec![[0.0; 3], [0.0; 3]], volume: 1.0 };
        assert!(matches!(
            build_voxel_medium(&g, PermittivityModel::Vacuum, 1),
            Err(MediumError::DuplicateVoxel(0, 1))
        ));
    }

    #[test]
    fn deterministic_build() {
        let g = Geometry::Sphere { center: [0.1, -0.2, 0.3], radius: 0.7 };
        let model = PermittivityModel::Drude { plasma: 2.0, damping: 0.3 };
        let a = build_voxel_medium(&g, model.clone(), 6).unwrap();
        let b = build_voxel_medium(&g, model, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn lossless_voxels_are_not_absorptive() {
        let g = Geometry::Box { center: [0.0; 3], size: [1.0; 3] };
        let t = PermittivityModel::Tabulated { samples: vec![(0.1, 2.0, 0.0), (5.0, 2.0, 0.0)] };
        let m = build_voxel_medium(&g, t, 2).unwrap();
        assert!(m.absorptive_voxels(&[0.5, 1.0]).unwrap().is_empty());
        let d = build_voxel_medium(&g, PermittivityModel::Drude { plasma: 1.0, damping: 0.1 }, 2).unwrap();
        assert_eq!(d.absorptive_voxels(&[1.0]).unwrap().len(), 8);
        assert!(d.clone().uncoupled().absorptive_voxels(&[1.0]).unwrap().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn passivity(nu in 1e-3f64..20.0, wp in 0.0f64..5.0, g in 1e-4f64..2.0, w0 in 0.0f64..4.0, s in 0.0f64..6.0) {
            let d = PermittivityModel::Drude { plasma: wp, damping: g };
            proptest::prop_assert!(d.eval(nu).unwrap().im >= 0.0);
            let l = PermittivityModel::DrudeLorentz { terms: vec![LorentzTerm { strength: s, resonance: w0, damping: g }] };
            proptest::prop_assert!(l.eval(nu).unwrap().im >= 0.0);
        }
    }
}
