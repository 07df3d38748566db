//! Physical parameters and the internal unit system.
//!
//! All quantities are stored in recoil units of the comb centre: hbar = 1,
//! k_c = 1, rates and energies in omega_R = hbar k_c^2 / (2 m_a). The mass
//! is then [`ATOM_MASS`] = 1/2, one wavelength is 2 pi, and free flight
//! obeys dx/dt = 2 p.

use thiserror::Error;

/// Atomic mass m_a in internal units; fixed by the choice hbar = k_c = omega_R = 1.
pub const ATOM_MASS: f64 = 0.5;

/// Heuristic margin used by [`SystemParams::thermal_validity`]: a ratio has
/// to beat its scale by this factor before the thermal description is
/// considered safe.
pub const VALIDITY_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must satisfy {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("bandwidth_frac = {bandwidth} inconsistent with n_modes * delta_k_frac = {expected}")]
    BandwidthMismatch { bandwidth: f64, expected: f64 },
}

fn check(
    name: &'static str,
    requirement: &'static str,
    value: f64,
    ok: bool,
) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            requirement,
            value,
        })
    }
}

/// Static description of one pumped-cavity configuration.
///
/// The pump enters through the per-line coupling `eta`, uniform over the
/// comb. Most callers construct it from the total rescaled intensity via
/// [`SystemParams::with_zeta_tot`], which is how runs are specified.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Cavity field decay rate kappa.
    pub kappa: f64,
    /// Pump-cavity detuning Delta_c; must be negative.
    pub delta_c: f64,
    /// Pump coupling per comb line, uniform over lines.
    pub eta: f64,
    /// Number of atoms N.
    pub n_atoms: usize,
    /// Number of driven modes M.
    pub n_modes: usize,
    /// Centre wavenumber of the comb; 1 by unit convention.
    pub k_center: f64,
    /// Line spacing delta k in units of k_c.
    pub delta_k_frac: f64,
    /// Envelope width Delta k = M * delta k, in units of k_c.
    pub bandwidth_frac: f64,
    /// Harmonic trap frequency omega_T; zero disables the trap.
    pub trap_freq: f64,
}

impl SystemParams {
    /// Builds a parameter set with an explicit coupling `eta`.
    /// The comb bandwidth is derived as `n_modes * delta_k_frac`.
    pub fn new(
        kappa: f64,
        delta_c: f64,
        eta: f64,
        n_atoms: usize,
        n_modes: usize,
        delta_k_frac: f64,
        trap_freq: f64,
    ) -> Result<Self, ModelError> {
        let params = SystemParams {
            kappa,
            delta_c,
            eta,
            n_atoms,
            n_modes,
            k_center: 1.0,
            delta_k_frac,
            bandwidth_frac: n_modes as f64 * delta_k_frac,
            trap_freq,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds a parameter set from the total rescaled pump intensity
    /// zeta_tot, deriving `eta` by inverting the definition of zeta.
    pub fn with_zeta_tot(
        zeta_tot: f64,
        kappa: f64,
        delta_c: f64,
        n_atoms: usize,
        n_modes: usize,
        delta_k_frac: f64,
        trap_freq: f64,
    ) -> Result<Self, ModelError> {
        check("zeta_tot", ">= 0", zeta_tot, zeta_tot >= 0.0)?;
        check("n_modes", ">= 1", n_modes as f64, n_modes >= 1)?;
        check("delta_c", "< 0", delta_c, delta_c < 0.0)?;
        check("n_atoms", ">= 1", n_atoms as f64, n_atoms >= 1)?;
        let zeta = zeta_tot / n_modes as f64;
        // zeta = 4 N eta^2 Dc^2 / (Dc^2 + kappa^2)^2, solved for eta >= 0.
        let denom2 = delta_c * delta_c + kappa * kappa;
        let eta = denom2 / (2.0 * delta_c.abs()) * (zeta / n_atoms as f64).sqrt();
        Self::new(
            kappa,
            delta_c,
            eta,
            n_atoms,
            n_modes,
            delta_k_frac,
            trap_freq,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("kappa", "> 0", self.kappa, self.kappa > 0.0)?;
        check("delta_c", "< 0", self.delta_c, self.delta_c < 0.0)?;
        check("eta", ">= 0", self.eta, self.eta >= 0.0)?;
        check("n_atoms", ">= 1", self.n_atoms as f64, self.n_atoms >= 1)?;
        check("n_modes", ">= 1", self.n_modes as f64, self.n_modes >= 1)?;
        check("k_center", "> 0", self.k_center, self.k_center > 0.0)?;
        check(
            "delta_k_frac",
            ">= 0",
            self.delta_k_frac,
            self.delta_k_frac >= 0.0,
        )?;
        check("trap_freq", ">= 0", self.trap_freq, self.trap_freq >= 0.0)?;
        let expected = self.n_modes as f64 * self.delta_k_frac;
        let tol = 1e-9 * expected.max(1e-300);
        if (self.bandwidth_frac - expected).abs() > tol {
            return Err(ModelError::BandwidthMismatch {
                bandwidth: self.bandwidth_frac,
                expected,
            });
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        ATOM_MASS
    }

    /// Rescaled pump intensity per mode,
    /// zeta = 4 N eta^2 Delta_c^2 / (Delta_c^2 + kappa^2)^2.
    pub fn zeta(&self) -> f64 {
        let denom = self.delta_c * self.delta_c + self.kappa * self.kappa;
        4.0 * self.n_atoms as f64 * self.eta * self.eta * self.delta_c * self.delta_c
            / (denom * denom)
    }

    /// Total rescaled pump intensity zeta_tot = M * zeta.
    pub fn zeta_tot(&self) -> f64 {
        self.n_modes as f64 * self.zeta()
    }

    /// Stationary kinetic temperature k_B T_st = (Delta_c^2 + kappa^2) / (-4 Delta_c),
    /// in units of hbar omega_R. Only defined for red detuning.
    pub fn stationary_temperature(&self) -> Result<f64, ModelError> {
        check("delta_c", "< 0", self.delta_c, self.delta_c < 0.0)?;
        Ok((self.delta_c * self.delta_c + self.kappa * self.kappa) / (-4.0 * self.delta_c))
    }

    /// Checks the assumptions behind the thermal (adiabatic) description:
    /// the detuning has to dominate both the recoil frequency and the
    /// pump-induced scale 4 zeta. Reports; never blocks.
    pub fn thermal_validity(&self) -> ThermalValidity {
        let abs_dc = self.delta_c.abs();
        let recoil = self.k_center * self.k_center;
        ThermalValidity {
            detuning_vs_recoil: ConditionReport::new("|delta_c| / omega_R", abs_dc / recoil),
            detuning_vs_pump: ConditionReport::new("|delta_c| / (4 zeta omega_R)", {
                let scale = 4.0 * self.zeta();
                if scale > 0.0 {
                    abs_dc / scale
                } else {
                    f64::INFINITY
                }
            }),
        }
    }

    /// Expresses the parameter set on laboratory scales.
    pub fn to_physical(&self, scale: &UnitScale) -> PhysicalParams {
        PhysicalParams {
            kappa_hz: scale.rate_hz(self.kappa),
            delta_c_hz: scale.rate_hz(self.delta_c),
            eta_hz: scale.rate_hz(self.eta),
            trap_freq_hz: scale.rate_hz(self.trap_freq),
            k_center_per_m: scale.wavenumber_per_m(self.k_center),
            delta_k_per_m: scale.wavenumber_per_m(self.delta_k_frac),
            bandwidth_per_m: scale.wavenumber_per_m(self.bandwidth_frac),
            n_atoms: self.n_atoms,
            n_modes: self.n_modes,
        }
    }

    pub fn from_physical(phys: &PhysicalParams, scale: &UnitScale) -> Result<Self, ModelError> {
        let params = SystemParams {
            kappa: phys.kappa_hz / scale.recoil_hz,
            delta_c: phys.delta_c_hz / scale.recoil_hz,
            eta: phys.eta_hz / scale.recoil_hz,
            n_atoms: phys.n_atoms,
            n_modes: phys.n_modes,
            k_center: phys.k_center_per_m / scale.k_center_per_m(),
            delta_k_frac: phys.delta_k_per_m / scale.k_center_per_m(),
            bandwidth_frac: phys.bandwidth_per_m / scale.k_center_per_m(),
            trap_freq: phys.trap_freq_hz / scale.recoil_hz,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionStatus {
    /// Ratio beats the heuristic margin.
    Satisfied,
    /// Ratio is above 1 but below the margin; results are usable with care.
    Marginal,
    /// Ratio at or below 1; the thermal description does not apply.
    Violated,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub label: &'static str,
    pub ratio: f64,
    pub status: ConditionStatus,
}

impl ConditionReport {
    fn new(label: &'static str, ratio: f64) -> Self {
        let status = if ratio >= VALIDITY_MARGIN {
            ConditionStatus::Satisfied
        } else if ratio > 1.0 {
            ConditionStatus::Marginal
        } else {
            ConditionStatus::Violated
        };
        ConditionReport {
            label,
            ratio,
            status,
        }
    }
}

/// Outcome of the thermal-regime heuristics.
#[derive(Debug, Clone)]
pub struct ThermalValidity {
    pub detuning_vs_recoil: ConditionReport,
    pub detuning_vs_pump: ConditionReport,
}

impl ThermalValidity {
    pub fn conditions(&self) -> [&ConditionReport; 2] {
        [&self.detuning_vs_recoil, &self.detuning_vs_pump]
    }

    pub fn all_satisfied(&self) -> bool {
        self.conditions()
            .iter()
            .all(|c| c.status == ConditionStatus::Satisfied)
    }

    /// Human-readable warnings for every condition that is not cleanly met.
    pub fn warnings(&self) -> Vec<String> {
        self.conditions()
            .iter()
            .filter(|c| c.status != ConditionStatus::Satisfied)
            .map(|c| {
                format!(
                    "{} = {:.3} is {} the heuristic margin {}",
                    c.label,
                    c.ratio,
                    match c.status {
                        ConditionStatus::Marginal => "below",
                        _ => "far below",
                    },
                    VALIDITY_MARGIN
                )
            })
            .collect()
    }
}

/// Conversion anchor between internal recoil units and SI-like scales:
/// the recoil angular frequency in rad/s and the optical wavelength in m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitScale {
    pub recoil_hz: f64,
    pub lambda_c_m: f64,
}

impl UnitScale {
    pub fn time_s(&self, t: f64) -> f64 {
        t / self.recoil_hz
    }

    pub fn rate_hz(&self, r: f64) -> f64 {
        r * self.recoil_hz
    }

    pub fn k_center_per_m(&self) -> f64 {
        std::f64::consts::TAU / self.lambda_c_m
    }

    pub fn length_m(&self, x: f64) -> f64 {
        x / self.k_center_per_m()
    }

    pub fn wavenumber_per_m(&self, k: f64) -> f64 {
        k * self.k_center_per_m()
    }
}

/// Parameters expressed on laboratory scales, for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub kappa_hz: f64,
    pub delta_c_hz: f64,
    pub eta_hz: f64,
    pub trap_freq_hz: f64,
    pub k_center_per_m: f64,
    pub delta_k_per_m: f64,
    pub bandwidth_per_m: f64,
    pub n_atoms: usize,
    pub n_modes: usize,
}
