//! Conversion between SI quantities and the internal natural units
//! (`hbar = c = eps0 = 1`).
//!
//! A length scale `l` (metres) fixes the remaining unit: lengths are measured
//! in `l`, angular frequencies and rates in `c / l`, times in `l / c`, dipole
//! moments in `sqrt(eps0 hbar c) l`, Green tensors in `1 / l` and mode
//! couplings `Omega` in `sqrt(c / l)`.

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_8128e-12;

/// Physical dimension of a reported quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Dimensionless,
    Length,
    Frequency,
    Time,
    Dipole,
    Green,
    Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitSystem {
    Natural,
    Si { length_scale: f64 },
}

impl UnitSystem {
    /// Value of one internal unit of `dim` expressed in the external system.
    pub fn scale(&self, dim: Dimension) -> f64 {
        let l = match self {
            UnitSystem::Natural => return 1.0,
            UnitSystem::Si { length_scale } => *length_scale,
        };
        let freq = SPEED_OF_LIGHT / l;
        match dim {
            Dimension::Dimensionless => 1.0,
            Dimension::Length => l,
            Dimension::Frequency => freq,
            Dimension::Time => 1.0 / freq,
            Dimension::Dipole => (EPSILON_0 * HBAR * SPEED_OF_LIGHT).sqrt() * l,
            Dimension::Green => 1.0 / l,
            Dimension::Coupling => freq.sqrt(),
        }
    }

    pub fn to_internal(&self, value: f64, dim: Dimension) -> f64 {
        value / self.scale(dim)
    }

    pub fn to_external(&self, value: f64, dim: Dimension) -> f64 {
        value * self.scale(dim)
    }

    /// Column-header unit label.
    pub fn label(&self, dim: Dimension) -> &'static str {
        match (self, dim) {
            (_, Dimension::Dimensionless) => "1",
            (UnitSystem::Natural, Dimension::Length) => "l",
            (UnitSystem::Natural, Dimension::Frequency) => "c/l",
            (UnitSystem::Natural, Dimension::Time) => "l/c",
            (UnitSystem::Natural, Dimension::Dipole) => "sqrt(eps0*hbar*c)*l",
            (UnitSystem::Natural, Dimension::Green) => "1/l",
            (UnitSystem::Natural, Dimension::Coupling) => "sqrt(c/l)",
            (UnitSystem::Si { .. }, Dimension::Length) => "m",
            (UnitSystem::Si { .. }, Dimension::Frequency) => "rad/s",
            (UnitSystem::Si { .. }, Dimension::Time) => "s",
            (UnitSystem::Si { .. }, Dimension::Dipole) => "C*m",
            (UnitSystem::Si { .. }, Dimension::Green) => "1/m",
            (UnitSystem::Si { .. }, Dimension::Coupling) => "sqrt(rad/s)",
        }
    }
}
