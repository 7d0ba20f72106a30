//! Physical constants in the simulator's working units.
//!
//! Energies are in meV, lengths in nm, magnetic fields in T and gate
//! voltages in V. Frequencies are reported in GHz (Larmor) and MHz (Rabi).

/// ħ²/(2m₀) in meV·nm².
pub const HBAR2_OVER_2M0: f64 = 38.099_821_2;

/// Bohr magneton in meV/T.
pub const MU_B: f64 = 5.788_381_806_0e-2;

/// Conversion factor from an energy in meV to a frequency E/h in GHz.
pub const GHZ_PER_MEV: f64 = 241.798_924_2;

/// Conversion factor from an energy in meV to a frequency E/h in MHz.
pub const MHZ_PER_MEV: f64 = GHZ_PER_MEV * 1.0e3;

/// e/ħ in nm⁻²·T⁻¹ (ħ/e = 658.2119569 T·nm²).
pub const E_OVER_HBAR: f64 = 1.0 / 658.211_956_9;

/// μ_B/h in GHz/T.
pub const MU_B_OVER_H_GHZ: f64 = MU_B * GHZ_PER_MEV;
