//! Mie scattering and the optical weighting factor γ(D, φa).
//!
//! γ is defined relative to the geometric cross-section so that γ ≡ 1
//! reproduces pure geometric blocking: for each wavelength the effective
//! blocking area of a particle is its extinction cross-section minus the
//! scattered light that still falls inside the reflectometer's acceptance
//! cone, divided by πD²/4. For a non-absorbing sphere this is
//! `Q_ext · ∫_{−1}^{cos φa} p(μ) dμ`. Spectral weights average this over the
//! instrument spectrum.

mod mie;
mod phase;
mod spectrum;
mod table;

pub use mie::{mie_efficiencies, mie_q, n_stop, scattering_angles, MieResult, RefractiveIndex};
pub use phase::{acceptance_factor, PhaseFunction, NORMALIZATION_TOLERANCE};
pub use spectrum::Spectrum;
pub use table::{build_gamma_table, default_diameter_grid, GammaMode, MieTable};
