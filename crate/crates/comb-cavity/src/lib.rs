//! Atoms in a lossy multimode cavity pumped through a frequency comb.
//!
//! The crate models N polarizable particles moving along the axis of a
//! standing-wave resonator while a comb of M neighbouring longitudinal
//! modes is driven coherently through the atoms. It provides
//!
//! * semiclassical stochastic trajectories of the coupled atom-field
//!   system ([`integrator`]),
//! * self-consistent thermal density profiles, power sweeps and
//!   threshold estimates ([`meanfield`]),
//! * reconstruction of the intracavity light pattern and the emitted
//!   pulse train from the mode amplitudes ([`fieldanalysis`]).
//!
//! Units: hbar = 1, wavenumbers in units of the comb centre k_c, rates
//! and energies in units of the recoil frequency omega_R = hbar k_c^2 /
//! (2 m_a). The atomic mass is then 1/2 and free flight obeys dx/dt = 2p.
//! Lengths are in 1/k_c, so one optical wavelength is 2 pi.

pub mod fieldanalysis;
pub mod integrator;
pub mod meanfield;
pub mod model;
pub mod modes;

pub use model::SystemParams;
pub use modes::{ModeLadder, OrderParameterSet};
