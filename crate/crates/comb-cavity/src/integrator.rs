//! Time integration of the coupled atom-field stochastic equations.
//!
//! The equations of motion per atom j and mode m are
//!
//!   dx_j/dt     = p_j / m
//!   dp_j/dt     = 2 eta sum_m w_m k_m sin(k_m x_j - phi_m) Re(alpha_m) - m w_T^2 x_j
//!   dalpha_m/dt = (i delta_c - kappa) alpha_m - i eta w_m N Theta_m + noise
//!
//! integrated with Euler-Maruyama at fixed dt. The only noise is the
//! vacuum input on each field quadrature; positions and momenta receive
//! none. An adiabatic mode slaves the fields to their stationary values
//! instead, for fast noise-free qualitative runs.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::SystemParams;
use crate::modes::{order_parameters, ModeLadder, ModeParity};

/// Stability cap on kappa * dt for the explicit scheme.
pub const MAX_KAPPA_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("time step {dt} exceeds the stability cap {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("ensemble records differ in sample grid or mode count")]
    MismatchedGrids,
    #[error("empty ensemble")]
    EmptyEnsemble,
}

/// Instantaneous phase-space and field configuration of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub time: f64,
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub fields: Vec<Complex64>,
}

impl EnsembleState {
    /// State at t = 0 with all fields empty.
    pub fn new(positions: Vec<f64>, momenta: Vec<f64>, n_modes: usize) -> EnsembleState {
        assert_eq!(positions.len(), momenta.len());
        EnsembleState {
            time: 0.0,
            positions,
            momenta,
            fields: vec![Complex64::ZERO; n_modes],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self.positions.iter().all(|x| x.is_finite())
            && self.momenta.iter().all(|p| p.is_finite())
            && self
                .fields
                .iter()
                .all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Kinetic energy per atom, <p^2> / (2 m).
    pub fn kinetic_energy(&self, params: &SystemParams) -> f64 {
        let sum: f64 = self.momenta.iter().map(|p| p * p).sum();
        sum / (self.momenta.len() as f64 * 2.0 * params.mass())
    }

    /// Total intracavity photon number sum_m |alpha_m|^2.
    pub fn photon_number(&self) -> f64 {
        self.fields.iter().map(|a| a.norm_sqr()).sum()
    }
}

fn assert_shapes(state: &EnsembleState, params: &SystemParams, ladder: &ModeLadder) {
    assert_eq!(state.positions.len(), params.n_atoms, "atom count mismatch");
    assert_eq!(
        state.momenta.len(),
        params.n_atoms,
        "momentum count mismatch"
    );
    assert_eq!(ladder.len(), params.n_modes, "mode count mismatch");
    assert_eq!(state.fields.len(), ladder.len(), "field count mismatch");
}

/// Time derivative of every state component.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub fields: Vec<Complex64>,
}

/// Drift part of the equations of motion, evaluated exactly.
///
/// # Panics
/// If the state arrays do not match `params` and `ladder`.
pub fn deterministic_drift(
    state: &EnsembleState,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> Derivative {
    assert_shapes(state, params, ladder);
    let set = order_parameters(&state.positions, ladder);
    let n = params.n_atoms as f64;
    let trap_k = params.mass() * params.trap_freq * params.trap_freq;

    let positions = state.momenta.iter().map(|p| p / params.mass()).collect();
    let momenta = state
        .positions
        .iter()
        .map(|&x| {
            let mut pump = 0.0;
            for m in 0..ladder.len() {
                // mode_slope is -k sin(k x - phi), so the sin factor enters
                // with a sign flip.
                pump -= ladder.weights()[m] * state.fields[m].re * ladder.mode_slope(m, x);
            }
            2.0 * params.eta * pump - trap_k * x
        })
        .collect();
    let fields = (0..ladder.len())
        .map(|m| {
            let drive = params.eta * ladder.weights()[m] * n * set.theta(m);
            Complex64::new(-params.kappa, params.delta_c) * state.fields[m]
                + Complex64::new(0.0, -drive)
        })
        .collect();

    Derivative {
        positions,
        momenta,
        fields,
    }
}

/// Stationary field amplitudes alpha_m = eta w_m N Theta_m / (delta_c + i kappa)
/// for frozen atomic positions.
pub fn adiabatic_fields(
    positions: &[f64],
    params: &SystemParams,
    ladder: &ModeLadder,
) -> Vec<Complex64> {
    let set = order_parameters(positions, ladder);
    let n = positions.len() as f64;
    let denom = Complex64::new(params.delta_c, params.kappa);
    (0..ladder.len())
        .map(|m| params.eta * ladder.weights()[m] * n * set.theta(m) / denom)
        .collect()
}

/// Whether the cavity fields are integrated or slaved to their stationary
/// values. All quantitative runs use the full stochastic equations; the
/// adiabatic variant is a noise-free approximation for quick looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldModel {
    FullSde,
    Adiabatic,
}

/// Integration plan: horizon, step, sampling, and field treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub t_end: f64,
    pub dt: f64,
    pub sample_stride: usize,
    pub field_model: FieldModel,
    pub record_positions: bool,
}

impl Schedule {
    pub fn new(t_end: f64, dt: f64) -> Schedule {
        Schedule {
            t_end,
            dt,
            sample_stride: 1,
            field_model: FieldModel::FullSde,
            record_positions: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Schedule {
        self.sample_stride = stride;
        self
    }

    pub fn with_field_model(mut self, model: FieldModel) -> Schedule {
        self.field_model = model;
        self
    }

    pub fn recording_positions(mut self) -> Schedule {
        self.record_positions = true;
        self
    }

    pub fn validate(&self, params: &SystemParams) -> Result<(), IntegratorError> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(IntegratorError::InvalidSchedule("t_end must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegratorError::InvalidSchedule("dt must be positive"));
        }
        if self.sample_stride == 0 {
            return Err(IntegratorError::InvalidSchedule(
                "sample_stride must be >= 1",
            ));
        }
        let max = MAX_KAPPA_DT / params.kappa;
        if self.dt > max * (1.0 + 1e-12) {
            return Err(IntegratorError::StepTooLarge { dt: self.dt, max });
        }
        Ok(())
    }

    /// Number of steps covering `t_end`, robust to t_end/dt landing a
    /// rounding error above an integer.
    pub fn n_steps(&self) -> usize {
        let raw = self.t_end / self.dt;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 * raw.max(1.0) {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
        .max(1)
    }
}

/// Observables of one trajectory on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Per-sample Theta_m, indexed [sample][mode].
    pub thetas: Vec<Vec<f64>>,
    pub theta_bar: Vec<f64>,
    pub photon_number: Vec<f64>,
    pub kinetic_energy: Vec<f64>,
    pub positions: Option<Vec<Vec<f64>>>,
    /// Full state at t_end; absent on averaged records.
    pub final_state: Option<EnsembleState>,
}

impl TrajectoryRecord {
    fn with_capacity(samples: usize, record_positions: bool) -> TrajectoryRecord {
        TrajectoryRecord {
            times: Vec::with_capacity(samples),
            thetas: Vec::with_capacity(samples),
            theta_bar: Vec::with_capacity(samples),
            photon_number: Vec::with_capacity(samples),
            kinetic_energy: Vec::with_capacity(samples),
            positions: record_positions.then(Vec::new),
            final_state: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Initial ensemble: positions uniform over [-width/2, width/2], momenta
/// thermal with <p^2>/(2m) = k_B T / 2, fields empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCloud {
    pub width: f64,
    pub temperature: f64,
}

impl InitialCloud {
    pub fn sample<R: Rng>(&self, params: &SystemParams, rng: &mut R) -> EnsembleState {
        assert!(self.width > 0.0 && self.temperature >= 0.0);
        let n = params.n_atoms;
        let positions = (0..n)
            .map(|_| (rng.random::<f64>() - 0.5) * self.width)
            .collect();
        let sigma = (params.mass() * self.temperature).sqrt();
        let momenta = (0..n)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        EnsembleState::new(positions, momenta, params.n_modes)
    }
}

/// Per-run constants and scratch space for the stepping kernel. Mode
/// projections are built by rotating exp(i k_0 x) through the ladder in
/// steps of exp(i delta_k x), so each atom costs two sin/cos calls per
/// step regardless of the mode count.
struct Stepper {
    kappa: f64,
    delta_c: f64,
    eta: f64,
    mass: f64,
    trap_k: f64,
    k0: f64,
    dk: f64,
    n_atoms: usize,
    n_modes: usize,
    weights: Vec<f64>,
    /// Parity selectors: cos-mode (1,0), sin-mode (0,1); keeps the inner
    /// loop branch-free.
    sel_cos: Vec<f64>,
    sel_sin: Vec<f64>,
    /// weights[m] * k_m
    wk: Vec<f64>,
    theta: Vec<f64>,
    force_coef: Vec<f64>,
    slopes: Vec<f64>,
}

impl Stepper {
    fn new(params: &SystemParams, ladder: &ModeLadder) -> Stepper {
        let n_modes = ladder.len();
        let sel_cos = (0..n_modes)
            .map(|m| {
                if ladder.parity(m) == ModeParity::Cosine {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let sel_sin = (0..n_modes)
            .map(|m| {
                if ladder.parity(m) == ModeParity::Sine {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let wk = (0..n_modes)
            .map(|m| ladder.weights()[m] * ladder.wavenumbers()[m])
            .collect();
        Stepper {
            kappa: params.kappa,
            delta_c: params.delta_c,
            eta: params.eta,
            mass: params.mass(),
            trap_k: params.mass() * params.trap_freq * params.trap_freq,
            k0: ladder.wavenumbers()[0],
            dk: ladder.delta_k(),
            n_atoms: params.n_atoms,
            n_modes,
            weights: ladder.weights().to_vec(),
            sel_cos,
            sel_sin,
            wk,
            theta: vec![0.0; n_modes],
            force_coef: vec![0.0; n_modes],
            slopes: vec![0.0; params.n_atoms * n_modes],
        }
    }

    /// Accumulates N * Theta_m into `self.theta` and, when `with_force`,
    /// advances positions and momenta using `self.force_coef`. Otherwise
    /// the per-atom sin projections are stashed for a later force pass.
    fn atom_pass(&mut self, state: &mut EnsembleState, dt: f64, with_force: bool) {
        self.theta.iter_mut().for_each(|t| *t = 0.0);
        for j in 0..self.n_atoms {
            let x = state.positions[j];
            let (s0, c0) = (self.k0 * x).sin_cos();
            let (sr, cr) = (self.dk * x).sin_cos();
            let mut zc = c0;
            let mut zs = s0;
            let mut force = 0.0;
            for m in 0..self.n_modes {
                // cos(k_m x - phi_m) and sin(k_m x - phi_m)
                let proj = self.sel_cos[m] * zc + self.sel_sin[m] * zs;
                let slope = self.sel_cos[m] * zs - self.sel_sin[m] * zc;
                self.theta[m] += proj;
                if with_force {
                    force += self.force_coef[m] * slope;
                } else {
                    self.slopes[j * self.n_modes + m] = slope;
                }
                let next_zc = zc * cr - zs * sr;
                zs = zs * cr + zc * sr;
                zc = next_zc;
            }
            if with_force {
                self.push_atom(state, j, force, dt);
            }
        }
    }

    fn force_pass(&mut self, state: &mut EnsembleState, dt: f64) {
        for j in 0..self.n_atoms {
            let mut force = 0.0;
            for m in 0..self.n_modes {
                force += self.force_coef[m] * self.slopes[j * self.n_modes + m];
            }
            self.push_atom(state, j, force, dt);
        }
    }

    /// Semi-implicit update: the position advances with the freshly kicked
    /// momentum. Explicit Euler instead feeds energy into the optical-well
    /// oscillations at a rate (omega dt)^2 per step, which at deep ordering
    /// outruns cavity friction and melts the grating at any practical dt.
    fn push_atom(&self, state: &mut EnsembleState, j: usize, pump_force: f64, dt: f64) {
        let x = state.positions[j];
        let p = state.momenta[j] + dt * (pump_force - self.trap_k * x);
        state.momenta[j] = p;
        state.positions[j] = x + dt * (p / self.mass);
    }

    fn set_force_coef(&mut self, fields: &[Complex64]) {
        for m in 0..self.n_modes {
            self.force_coef[m] = 2.0 * self.eta * self.wk[m] * fields[m].re;
        }
    }

    /// Slaves every field to its stationary value for the current
    /// accumulated N * Theta_m.
    fn slave_fields(&mut self, state: &mut EnsembleState) {
        let denom = Complex64::new(self.delta_c, self.kappa);
        for m in 0..self.n_modes {
            state.fields[m] = self.eta * self.weights[m] * self.theta[m] / denom;
        }
    }

    fn step_full<R: Rng>(&mut self, state: &mut EnsembleState, dt: f64, rng: Option<&mut R>) {
        self.set_force_coef(&state.fields);
        self.atom_pass(state, dt, true);
        let noise_scale = (self.kappa * dt / 2.0).sqrt();
        let lin = Complex64::new(-self.kappa, self.delta_c);
        for m in 0..self.n_modes {
            let drive = self.eta * self.weights[m] * self.theta[m];
            let drift = lin * state.fields[m] + Complex64::new(0.0, -drive);
            state.fields[m] += dt * drift;
        }
        if let Some(rng) = rng {
            for m in 0..self.n_modes {
                let g_re: f64 = rng.sample(StandardNormal);
                let g_im: f64 = rng.sample(StandardNormal);
                state.fields[m] += noise_scale * Complex64::new(g_re, g_im);
            }
        }
    }

    fn step_adiabatic(&mut self, state: &mut EnsembleState, dt: f64) {
        self.atom_pass(state, dt, false);
        self.slave_fields(state);
        self.set_force_coef(&state.fields);
        self.force_pass(state, dt);
    }
}

/// One Euler-Maruyama step of the full stochastic system.
pub fn stochastic_step<R: Rng>(
    state: &EnsembleState,
    dt: f64,
    params: &SystemParams,
    ladder: &ModeLadder,
    rng: &mut R,
) -> Result<EnsembleState, IntegratorError> {
    step_checked(state, dt, params, ladder, Some(rng))
}

/// One drift-only step; identical to [`stochastic_step`] with the noise
/// draws removed.
pub fn deterministic_step(
    state: &EnsembleState,
    dt: f64,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> Result<EnsembleState, IntegratorError> {
    step_checked::<ChaCha8Rng>(state, dt, params, ladder, None)
}

fn step_checked<R: Rng>(
    state: &EnsembleState,
    dt: f64,
    params: &SystemParams,
    ladder: &ModeLadder,
    rng: Option<&mut R>,
) -> Result<EnsembleState, IntegratorError> {
    assert_shapes(state, params, ladder);
    let max = MAX_KAPPA_DT / params.kappa;
    if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
        return Err(IntegratorError::StepTooLarge { dt, max });
    }
    let mut stepper = Stepper::new(params, ladder);
    let mut next = state.clone();
    stepper.step_full(&mut next, dt, rng);
    next.time = state.time + dt;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(IntegratorError::NonFinite { time: next.time })
    }
}

/// Integrates one trajectory, sampling observables every
/// `sample_stride` steps (the initial state included). Order parameters
/// at sample times are recomputed by direct summation, so recorded values
/// are exact for the sampled configuration.
pub fn simulate<R: Rng>(
    initial: &EnsembleState,
    params: &SystemParams,
    ladder: &ModeLadder,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<TrajectoryRecord, IntegratorError> {
    assert_shapes(initial, params, ladder);
    schedule.validate(params)?;
    if !initial.is_finite() {
        return Err(IntegratorError::NonFinite { time: initial.time });
    }

    let n_steps = schedule.n_steps();
    let mut stepper = Stepper::new(params, ladder);
    let mut state = initial.clone();
    if schedule.field_model == FieldModel::Adiabatic {
        // Fields carry no state of their own in this mode; pin them to the
        // initial configuration so the t = 0 sample is already consistent.
        state.fields = adiabatic_fields(&state.positions, params, ladder);
    }

    let mut record = TrajectoryRecord::with_capacity(
        n_steps / schedule.sample_stride + 1,
        schedule.record_positions,
    );
    for step in 0..=n_steps {
        let time = initial.time + step as f64 * schedule.dt;
        state.time = time;
        if step % schedule.sample_stride == 0 {
            sample(&mut record, &state, params, ladder)?;
        }
        if step < n_steps {
            match schedule.field_model {
                FieldModel::FullSde => stepper.step_full(&mut state, schedule.dt, Some(rng)),
                FieldModel::Adiabatic => stepper.step_adiabatic(&mut state, schedule.dt),
            }
        }
    }
    record.final_state = Some(state);
    Ok(record)
}

fn sample(
    record: &mut TrajectoryRecord,
    state: &EnsembleState,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> Result<(), IntegratorError> {
    let set = order_parameters(&state.positions, ladder);
    let energy = state.kinetic_energy(params);
    let photons = state.photon_number();
    if !(energy.is_finite() && photons.is_finite() && set.theta_bar().is_finite()) {
        return Err(IntegratorError::NonFinite { time: state.time });
    }
    record.times.push(state.time);
    record.theta_bar.push(set.theta_bar());
    record.thetas.push(set.thetas().to_vec());
    record.photon_number.push(photons);
    record.kinetic_energy.push(energy);
    if let Some(snapshots) = record.positions.as_mut() {
        snapshots.push(state.positions.clone());
    }
    Ok(())
}

/// Independent generator for one trajectory of an ensemble: a common key
/// from the master seed, with the trajectory index as stream.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs `n_trajectories` independent trajectories in parallel, each with
/// its own initial draw and noise stream. Results are ordered by
/// trajectory index and bit-reproducible for a given master seed.
pub fn run_ensemble(
    cloud: &InitialCloud,
    params: &SystemParams,
    ladder: &ModeLadder,
    schedule: &Schedule,
    master_seed: u64,
    n_trajectories: usize,
) -> Result<Vec<TrajectoryRecord>, IntegratorError> {
    (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i as u64);
            let initial = cloud.sample(params, &mut rng);
            simulate(&initial, params, ladder, schedule, &mut rng)
        })
        .collect()
}

/// Pointwise ensemble mean of the recorded observables. Theta_bar is
/// averaged per trajectory first, so the result is <Theta_bar>, not the
/// order parameter of a pooled cloud. Position snapshots and final states
/// do not average meaningfully and are dropped.
pub fn ensemble_average(records: &[TrajectoryRecord]) -> Result<TrajectoryRecord, IntegratorError> {
    let first = records.first().ok_or(IntegratorError::EmptyEnsemble)?;
    let n_modes = first.thetas.first().map_or(0, Vec::len);
    for r in records {
        if r.times != first.times || r.thetas.first().map_or(0, Vec::len) != n_modes {
            return Err(IntegratorError::MismatchedGrids);
        }
    }
    let weight = 1.0 / records.len() as f64;
    let samples = first.times.len();
    let mut mean = TrajectoryRecord::with_capacity(samples, false);
    mean.times = first.times.clone();
    for s in 0..samples {
        let avg = |f: &dyn Fn(&TrajectoryRecord) -> f64| -> f64 {
            records.iter().map(|r| f(r)).sum::<f64>() * weight
        };
        mean.theta_bar.push(avg(&|r| r.theta_bar[s]));
        mean.photon_number.push(avg(&|r| r.photon_number[s]));
        mean.kinetic_energy.push(avg(&|r| r.kinetic_energy[s]));
        mean.thetas.push(
            (0..n_modes)
                .map(|m| records.iter().map(|r| r.thetas[s][m]).sum::<f64>() * weight)
                .collect(),
        );
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::chi;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    const LAMBDA_C: f64 = TAU;

    fn params_m(n_atoms: usize, n_modes: usize, eta: f64) -> SystemParams {
        SystemParams::new(400.0, -400.0, eta, n_atoms, n_modes, 1e-3, 0.0).unwrap()
    }

    #[test]
    fn free_flight_without_fields() {
        let params = params_m(3, 2, 0.0);
        let ladder = ModeLadder::comb(&params);
        let state = EnsembleState::new(vec![0.1, -0.4, 2.0], vec![1.0, 2.0, 3.0], 2);
        let d = deterministic_drift(&state, &params, &ladder);
        assert_eq!(d.momenta, vec![0.0; 3]);
        assert_eq!(d.fields, vec![Complex64::ZERO; 2]);
        for (dx, p) in d.positions.iter().zip(&state.momenta) {
            assert_relative_eq!(dx, &(2.0 * p));
        }
    }

    #[test]
    fn force_is_gradient_of_slaved_potential() {
        // With stationary fields, the pump force on an atom at x must be
        // -d/dx of -2 k_B T_st zeta sum_m Theta_m cos(k_m x - phi_m).
        let params = SystemParams::new(400.0, -300.0, 3.7, 5, 1, 0.0, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let positions = vec![0.3, 1.1, -0.7, 2.9, 0.05];
        let momenta = vec![0.0; 5];
        let fields = adiabatic_fields(&positions, &params, &ladder);
        let state = EnsembleState {
            time: 0.0,
            positions: positions.clone(),
            momenta,
            fields,
        };
        let d = deterministic_drift(&state, &params, &ladder);

        let set = order_parameters(&positions, &ladder);
        let t_st = params.stationary_temperature().unwrap();
        let zeta = params.zeta();
        let probe = |x: f64| -> f64 {
            -2.0 * t_st
                * zeta
                * (0..ladder.len())
                    .map(|m| set.theta(m) * ladder.mode_value(m, x))
                    .sum::<f64>()
        };
        let h = 1e-5;
        for (j, &x) in positions.iter().enumerate() {
            let fd = -(probe(x + h) - probe(x - h)) / (2.0 * h);
            assert_relative_eq!(d.momenta[j], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn force_is_gradient_of_total_potential() {
        // Differentiating U = -k_B T_st N M zeta Theta_bar^2 with the order
        // parameters recomputed per displacement gives the same force.
        let params = params_m(6, 4, 2.1);
        let ladder = ModeLadder::comb(&params);
        let positions = vec![0.3, 1.1, -0.7, 2.9, 0.05, -1.8];
        let fields = adiabatic_fields(&positions, &params, &ladder);
        let state = EnsembleState {
            time: 0.0,
            positions: positions.clone(),
            momenta: vec![0.0; 6],
            fields,
        };
        let d = deterministic_drift(&state, &params, &ladder);

        let t_st = params.stationary_temperature().unwrap();
        let coef = t_st * params.n_atoms as f64 * ladder.len() as f64 * params.zeta();
        let total = |xs: &[f64]| -> f64 { -coef * order_parameters(xs, &ladder).theta_bar_sq() };
        let h = 1e-5;
        for j in 0..positions.len() {
            let mut plus = positions.clone();
            plus[j] += h;
            let mut minus = positions.clone();
            minus[j] -= h;
            let fd = -(total(&plus) - total(&minus)) / (2.0 * h);
            assert_relative_eq!(d.momenta[j], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn frozen_atoms_relax_fields_exponentially() {
        let params = SystemParams::new(2.0, -6.0, 0.8, 3, 3, 0.05, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let positions = vec![0.3, 1.9, -0.7];
        let target = adiabatic_fields(&positions, &params, &ladder);
        let start = vec![
            Complex64::new(1.0, -0.5),
            Complex64::new(-0.3, 0.8),
            Complex64::new(0.2, 0.1),
        ];
        let mut state = EnsembleState {
            time: 0.0,
            positions,
            momenta: vec![0.0; 3],
            fields: start.clone(),
        };
        // Step small enough that the Euler factor |1 + (i dc - k) dt| tracks
        // e^(-k dt) well below the 1% check: the gap grows like dc^2 dt^2 / 2
        // per step.
        let dt = 1e-4;
        let steps = 25_000;
        for _ in 0..steps {
            let d = deterministic_drift(&state, &params, &ladder);
            for m in 0..3 {
                state.fields[m] += dt * d.fields[m];
            }
        }
        let t = dt * steps as f64;
        for m in 0..3 {
            let residual = (state.fields[m] - target[m]).norm();
            let expect = (start[m] - target[m]).norm() * (-params.kappa * t).exp();
            assert_relative_eq!(residual, expect, max_relative = 1e-2);
        }
    }

    #[test]
    fn empty_cavity_noise_reaches_half_photon() {
        // eta = 0 leaves each quadrature an independent OU process whose
        // stationary |alpha|^2 averages 1/2 (plus an O(kappa dt) scheme bias).
        let params = SystemParams::new(1.0, -1.0, 0.0, 1, 2, 1e-3, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let initial = EnsembleState::new(vec![0.0], vec![0.0], 2);
        let schedule = Schedule::new(4000.0, 0.02).with_stride(50);
        let mut rng = trajectory_rng(404, 0);
        let record = simulate(&initial, &params, &ladder, &schedule, &mut rng).unwrap();
        let tail: Vec<f64> = record
            .times
            .iter()
            .zip(&record.photon_number)
            .filter(|(t, _)| **t > 20.0)
            .map(|(_, n)| n / 2.0)
            .collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert_relative_eq!(mean, 0.5, max_relative = 0.05);
    }

    #[test]
    fn drift_free_motion_is_linear_and_repeatable() {
        let params = params_m(2, 2, 0.0);
        let ladder = ModeLadder::comb(&params);
        let initial = EnsembleState::new(vec![0.0, 1.0], vec![0.5, -0.25], 2);
        let dt = 2e-4;
        let run = || {
            let mut state = initial.clone();
            for _ in 0..500 {
                state = deterministic_step(&state, dt, &params, &ladder).unwrap();
            }
            state
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let t = dt * 500.0;
        for j in 0..2 {
            assert_relative_eq!(
                a.positions[j],
                initial.positions[j] + 2.0 * initial.momenta[j] * t,
                max_relative = 1e-12,
                epsilon = 1e-12
            );
            assert_eq!(a.momenta[j], initial.momenta[j]);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let params = params_m(1, 1, 0.0);
        let ladder = ModeLadder::comb(&params);
        let state = EnsembleState::new(vec![0.0], vec![0.0], 1);
        let mut rng = trajectory_rng(1, 0);
        let err = stochastic_step(&state, 3e-4, &params, &ladder, &mut rng).unwrap_err();
        assert!(matches!(err, IntegratorError::StepTooLarge { .. }));

        let schedule = Schedule::new(1.0, 3e-4);
        assert!(matches!(
            schedule.validate(&params),
            Err(IntegratorError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn non_finite_states_are_reported_with_time() {
        let params = params_m(1, 1, 0.0);
        let ladder = ModeLadder::comb(&params);
        let mut state = EnsembleState::new(vec![0.0], vec![0.0], 1);
        state.positions[0] = f64::NAN;
        let mut rng = trajectory_rng(2, 0);
        let err = stochastic_step(&state, 1e-4, &params, &ladder, &mut rng).unwrap_err();
        assert!(matches!(err, IntegratorError::NonFinite { .. }));

        // A photon number overflowing f64 trips the sample check at t = 0.
        let mut huge = EnsembleState::new(vec![0.0], vec![0.0], 1);
        huge.fields[0] = Complex64::new(1e200, 1e200);
        let schedule = Schedule::new(0.01, 1e-4);
        let err = simulate(&huge, &params, &ladder, &schedule, &mut rng).unwrap_err();
        assert_eq!(err, IntegratorError::NonFinite { time: 0.0 });
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let params = params_m(8, 4, 1.5);
        let ladder = ModeLadder::comb(&params);
        let cloud = InitialCloud {
            width: 10.0 * LAMBDA_C,
            temperature: 200.0,
        };
        let schedule = Schedule::new(0.05, 2e-4).with_stride(10);
        let a = run_ensemble(&cloud, &params, &ladder, &schedule, 99, 3).unwrap();
        let b = run_ensemble(&cloud, &params, &ladder, &schedule, 99, 3).unwrap();
        assert_eq!(a, b);
        let c = run_ensemble(&cloud, &params, &ladder, &schedule, 100, 3).unwrap();
        assert_ne!(a[0].theta_bar, c[0].theta_bar);
    }

    #[test]
    fn sampling_stride_does_not_alter_dynamics() {
        let params = params_m(5, 2, 1.0);
        let ladder = ModeLadder::comb(&params);
        let cloud = InitialCloud {
            width: 5.0 * LAMBDA_C,
            temperature: 100.0,
        };
        let dense = Schedule::new(0.02, 1e-4);
        let sparse = dense.clone().with_stride(10);
        let mut rng_a = trajectory_rng(7, 0);
        let init_a = cloud.sample(&params, &mut rng_a);
        let mut rng_b = trajectory_rng(7, 0);
        let init_b = cloud.sample(&params, &mut rng_b);
        let a = simulate(&init_a, &params, &ladder, &dense, &mut rng_a).unwrap();
        let b = simulate(&init_b, &params, &ladder, &sparse, &mut rng_b).unwrap();
        for (k, &t) in b.times.iter().enumerate() {
            assert_eq!(t, a.times[10 * k]);
            assert_eq!(b.theta_bar[k], a.theta_bar[10 * k]);
            assert_eq!(b.photon_number[k], a.photon_number[10 * k]);
            assert_eq!(b.kinetic_energy[k], a.kinetic_energy[10 * k]);
        }
    }

    #[test]
    fn adiabatic_field_examples() {
        // Balanced positions: every order parameter vanishes.
        let params = SystemParams::new(7.0, -7.0, 1.75, 4, 2, 0.0, 0.0).unwrap();
        let pair = ModeLadder::degenerate_pair(1.0);
        let eighth = LAMBDA_C / 8.0;
        let spread = [eighth, 3.0 * eighth, 5.0 * eighth, 7.0 * eighth];
        for a in adiabatic_fields(&spread, &params, &pair) {
            assert_abs_diff_eq!(a.norm(), 0.0, epsilon = 1e-14);
        }

        // eta N Theta = kappa at delta_c = -kappa gives -(1 + i)/2.
        let ordered = [0.0, 0.0, 0.0, 0.0];
        let single = ModeLadder::single(1.0, ModeParity::Cosine);
        let single_params = SystemParams::new(7.0, -7.0, 1.75, 4, 1, 0.0, 0.0).unwrap();
        let alpha = adiabatic_fields(&ordered, &single_params, &single)[0];
        assert_relative_eq!(alpha.re, -0.5, max_relative = 1e-14);
        assert_relative_eq!(alpha.im, -0.5, max_relative = 1e-14);

        // Fully ordered comb: M/2 cosine modes hold (eta N)^2/(dc^2+k^2) each.
        let comb_params = params_m(4, 6, 1.75);
        let comb = ModeLadder::comb(&comb_params);
        let n: f64 = adiabatic_fields(&ordered, &comb_params, &comb)
            .iter()
            .map(|a| a.norm_sqr())
            .sum();
        let eta_n = comb_params.eta * 4.0;
        let expect =
            3.0 * eta_n * eta_n / (comb_params.delta_c.powi(2) + comb_params.kappa.powi(2));
        assert_relative_eq!(n, expect, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_pair_dynamics_translate_with_the_cloud() {
        let params = SystemParams::new(400.0, -400.0, 20.0, 30, 2, 0.0, 0.0).unwrap();
        let ladder = ModeLadder::degenerate_pair(1.0);
        let cloud = InitialCloud {
            width: 4.0 * LAMBDA_C,
            temperature: 100.0,
        };
        let mut rng = trajectory_rng(12, 0);
        let base = cloud.sample(&params, &mut rng);
        let shift = 0.3 * LAMBDA_C;
        let mut moved = base.clone();
        for x in &mut moved.positions {
            *x += shift;
        }
        let schedule = Schedule::new(0.05, 2.5e-4).with_field_model(FieldModel::Adiabatic);
        let mut rng_a = trajectory_rng(13, 0);
        let mut rng_b = trajectory_rng(13, 0);
        let a = simulate(&base, &params, &ladder, &schedule, &mut rng_a).unwrap();
        let b = simulate(&moved, &params, &ladder, &schedule, &mut rng_b).unwrap();
        let fa = a.final_state.unwrap();
        let fb = b.final_state.unwrap();
        for j in 0..30 {
            assert_abs_diff_eq!(fb.positions[j], fa.positions[j] + shift, epsilon = 1e-8);
            assert_abs_diff_eq!(fb.momenta[j], fa.momenta[j], epsilon = 1e-8);
        }
        for (ea, eb) in a.kinetic_energy.iter().zip(&b.kinetic_energy) {
            assert_abs_diff_eq!(ea, eb, epsilon = 1e-8);
        }
    }

    #[test]
    fn field_drift_is_linear_in_state_and_drive() {
        let eta = 1.3;
        let p3 = SystemParams::new(5.0, -4.0, eta, 3, 4, 0.01, 0.0).unwrap();
        let p5 = SystemParams::new(5.0, -4.0, eta, 5, 4, 0.01, 0.0).unwrap();
        let p8 = SystemParams::new(5.0, -4.0, eta, 8, 4, 0.01, 0.0).unwrap();
        let ladder = ModeLadder::comb(&p3);
        let xs3 = vec![0.2, -1.4, 0.9];
        let xs5 = vec![2.2, 0.4, -0.6, 1.7, -2.5];
        let xs8: Vec<f64> = xs3.iter().chain(&xs5).copied().collect();

        // N Theta is additive over subclouds, so zero-field drifts add.
        let drift = |xs: &[f64], p: &SystemParams, fields: Vec<Complex64>| {
            let state = EnsembleState {
                time: 0.0,
                positions: xs.to_vec(),
                momenta: vec![0.0; xs.len()],
                fields,
            };
            deterministic_drift(&state, p, &ladder).fields
        };
        let zero = vec![Complex64::ZERO; 4];
        let d3 = drift(&xs3, &p3, zero.clone());
        let d5 = drift(&xs5, &p5, zero.clone());
        let d8 = drift(&xs8, &p8, zero.clone());
        for m in 0..4 {
            assert_relative_eq!((d3[m] + d5[m]).im, d8[m].im, max_relative = 1e-12);
            assert_relative_eq!(
                (d3[m] + d5[m]).re,
                d8[m].re,
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }

        // And at fixed positions the alpha-dependence is affine.
        let fa: Vec<Complex64> = (0..4)
            .map(|m| Complex64::new(0.3 + m as f64, -0.2))
            .collect();
        let fb: Vec<Complex64> = (0..4)
            .map(|m| Complex64::new(-1.1, 0.4 * m as f64))
            .collect();
        let sum: Vec<Complex64> = fa.iter().zip(&fb).map(|(a, b)| a + b).collect();
        let da = drift(&xs3, &p3, fa);
        let db = drift(&xs3, &p3, fb);
        let d0 = drift(&xs3, &p3, zero);
        let dsum = drift(&xs3, &p3, sum);
        for m in 0..4 {
            let lhs = da[m] + db[m] - d0[m];
            assert_relative_eq!(lhs.re, dsum[m].re, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(lhs.im, dsum[m].im, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn ensemble_average_means_and_grid_checks() {
        let params = params_m(2, 2, 0.5);
        let ladder = ModeLadder::comb(&params);
        let cloud = InitialCloud {
            width: LAMBDA_C,
            temperature: 10.0,
        };
        let schedule = Schedule::new(0.01, 1e-4).with_stride(20);
        let records = run_ensemble(&cloud, &params, &ladder, &schedule, 5, 2).unwrap();

        let single = ensemble_average(&records[..1]).unwrap();
        assert_eq!(single.theta_bar, records[0].theta_bar);
        assert_eq!(single.kinetic_energy, records[0].kinetic_energy);

        let both = ensemble_average(&records).unwrap();
        for s in 0..both.len() {
            assert_relative_eq!(
                both.kinetic_energy[s],
                (records[0].kinetic_energy[s] + records[1].kinetic_energy[s]) / 2.0
            );
        }

        let other = run_ensemble(
            &cloud,
            &params,
            &ladder,
            &schedule.clone().with_stride(10),
            5,
            1,
        )
        .unwrap();
        let mixed = [records[0].clone(), other[0].clone()];
        assert!(matches!(
            ensemble_average(&mixed),
            Err(IntegratorError::MismatchedGrids)
        ));
        assert!(matches!(
            ensemble_average(&[]),
            Err(IntegratorError::EmptyEnsemble)
        ));
    }

    #[test]
    fn ou_ensemble_photon_number_matches_oracle() {
        // 50 empty-cavity trajectories: <n> must sit within 3 standard
        // errors of M/2 once the scheme bias kappa dt / 2 is negligible.
        let params = SystemParams::new(1.0, -1.0, 0.0, 1, 2, 1e-3, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let cloud = InitialCloud {
            width: LAMBDA_C,
            temperature: 0.0,
        };
        let schedule = Schedule::new(400.0, 2e-3).with_stride(500);
        let records = run_ensemble(&cloud, &params, &ladder, &schedule, 2024, 50).unwrap();
        let tail_mean = |r: &TrajectoryRecord| {
            let vals: Vec<f64> = r
                .times
                .iter()
                .zip(&r.photon_number)
                .filter(|(t, _)| **t > 40.0)
                .map(|(_, n)| *n)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let means: Vec<f64> = records.iter().map(tail_mean).collect();
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let var =
            means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
        let se = (var / means.len() as f64).sqrt();
        assert!(
            (grand - 1.0).abs() < 3.0 * se,
            "<n> = {grand} +- {se} vs 1.0"
        );
    }

    #[test]
    fn initial_cloud_statistics() {
        let params = SystemParams::new(400.0, -400.0, 0.0, 100_000, 1, 0.0, 0.0).unwrap();
        let cloud = InitialCloud {
            width: 20.0 * LAMBDA_C,
            temperature: 200.0,
        };
        let mut rng = trajectory_rng(31, 0);
        let state = cloud.sample(&params, &mut rng);

        assert!(state.positions.iter().all(|x| x.abs() <= 10.0 * LAMBDA_C));
        let n = state.positions.len() as f64;
        let x_mean = state.positions.iter().sum::<f64>() / n;
        assert!(x_mean.abs() < 0.01 * cloud.width);
        let x_var = state
            .positions
            .iter()
            .map(|x| (x - x_mean).powi(2))
            .sum::<f64>()
            / n;
        assert_relative_eq!(x_var, cloud.width.powi(2) / 12.0, max_relative = 0.02);

        let p_var = state.momenta.iter().map(|p| p * p).sum::<f64>() / n;
        assert_relative_eq!(
            p_var,
            params.mass() * cloud.temperature,
            max_relative = 0.02
        );
        assert_relative_eq!(
            state.kinetic_energy(&params),
            cloud.temperature / 2.0,
            max_relative = 0.02
        );
        assert!(state.fields.iter().all(|a| *a == Complex64::ZERO));
    }

    #[test]
    fn stochastic_and_deterministic_steps_share_drift() {
        // Wide cloud, strong drive: one noiseless step must equal the
        // drift-only Euler update of the exact derivative to rounding.
        let params = params_m(4, 3, 2.0);
        let ladder = ModeLadder::comb(&params);
        let mut state = EnsembleState::new(vec![0.3, -0.6, 1.2, 5.0], vec![1.0, 0.0, -2.0, 0.5], 3);
        state.fields = vec![
            Complex64::new(0.5, -0.1),
            Complex64::new(-0.2, 0.9),
            Complex64::new(0.0, 0.4),
        ];
        let dt = 1e-4;
        let stepped = deterministic_step(&state, dt, &params, &ladder).unwrap();
        let d = deterministic_drift(&state, &params, &ladder);
        for j in 0..4 {
            assert_relative_eq!(
                stepped.momenta[j],
                state.momenta[j] + dt * d.momenta[j],
                max_relative = 1e-10,
                epsilon = 1e-12
            );
            // Positions advance with the kicked momentum.
            assert_relative_eq!(
                stepped.positions[j],
                state.positions[j] + dt * stepped.momenta[j] / params.mass(),
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
        for m in 0..3 {
            let expect = state.fields[m] + dt * d.fields[m];
            assert_relative_eq!(
                stepped.fields[m].re,
                expect.re,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                stepped.fields[m].im,
                expect.im,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn trap_confines_a_drifting_atom() {
        // Harmonic trap alone: x(t) = x0 cos(w_T t) for one atom.
        let params = SystemParams::new(400.0, -400.0, 0.0, 1, 1, 0.0, 2.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let initial = EnsembleState::new(vec![1.5], vec![0.0], 1);
        let schedule = Schedule::new(3.0, 1e-4).with_field_model(FieldModel::Adiabatic);
        let mut rng = trajectory_rng(3, 0);
        let record = simulate(&initial, &params, &ladder, &schedule, &mut rng).unwrap();
        let end = record.final_state.unwrap();
        assert_relative_eq!(
            end.positions[0],
            1.5 * (params.trap_freq * 3.0).cos(),
            max_relative = 1e-3
        );
    }

    #[test]
    fn schedule_step_counts_are_robust() {
        let s = Schedule::new(10.0, 0.1);
        assert_eq!(s.n_steps(), 100);
        let t = Schedule::new(1.0, 1.0 / 3.0);
        assert_eq!(t.n_steps(), 3);
        assert_relative_eq!(chi(20.0 * LAMBDA_C, 0.0213), 0.426, max_relative = 1e-12);
    }
}
