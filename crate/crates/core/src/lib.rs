//! Hole-spin qubit simulation in the six-band k·p approximation.
//!
//! The crate builds the Lüttinger–Kohn Hamiltonian (with magnetic terms) of a
//! hole confined in a silicon channel, solves for the lowest Kramers doublets
//! in a harmonic-oscillator basis, and derives qubit figures of merit either
//! directly from the perturbed eigenstates or through the gyromagnetic matrix.
//!
//! Units throughout: energies in meV, lengths in nm, magnetic fields in T,
//! voltages in V, frequencies in GHz (Larmor) and MHz (Rabi).

pub mod analysis;
pub mod basis;
pub mod device;
pub mod error;
pub mod gmatrix;
pub mod hamiltonian;
pub mod potential;
pub mod quadrature;
pub mod solver;
pub mod units;

pub use error::{Error, Result};
