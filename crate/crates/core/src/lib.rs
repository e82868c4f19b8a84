//! Quantized electromagnetic fields in absorbing, dispersive media expressed
//! through emitter-centered bright modes.
//!
//! The pipeline runs bottom-up: [`medium`] voxelizes a dielectric body,
//! [`greens`] solves for its dyadic Green tensor, [`modegrid`] discretizes the
//! continuum of field modes, [`dbm`] builds the emitter-centered orthonormal
//! mode basis, [`identities`] checks the discrete sum rules and [`dynamics`]
//! propagates the single-excitation sector.

pub mod dbm;
pub mod dynamics;
pub mod greens;
pub mod identities;
pub mod medium;
pub mod modegrid;
pub mod units;

pub type Point = nalgebra::Vector3<f64>;
pub type C64 = num_complex::Complex64;

/// Any failure of the computational pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Medium(#[from] medium::MediumError),
    #[error(transparent)]
    Greens(#[from] greens::GreensError),
    #[error(transparent)]
    ModeGrid(#[from] modegrid::ModeGridError),
    #[error(transparent)]
    Dbm(#[from] dbm::DbmError),
    #[error(transparent)]
    Identity(#[from] identities::IdentityError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
}
