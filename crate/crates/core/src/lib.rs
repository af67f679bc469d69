//! Learning rigid-body dynamics with energy-conserving neural models.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffcore`] – scalar reverse/forward-mode differentiation and MLPs.
//! * [`mechanics`] – Lagrangian/Hamiltonian vector fields with implicit and
//!   explicit constraints, and the ground-truth pendulum and gyroscope systems.
//! * [`models`] – the ten learnable dynamics models.
//! * [`odeint`] – fixed-step RK4, usable inside the training graph.
//! * [`datagen`], [`training`], [`evalkit`] – the benchmark protocol.

pub mod datagen;
pub mod diffcore;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod mechanics;
pub mod models;
pub mod odeint;
pub mod training;

pub use error::{Error, Result};
