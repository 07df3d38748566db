//! Experiment descriptions: TOML schema, validation, and the resolved form
//! handed to the experiment strategies.
//!
//! Unknown keys anywhere in a config are errors, as are blocks that the
//! selected experiment kind does not consume. Lengths are given in carrier
//! wavelengths, rates and energies in recoil units, matching the library.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use comb_cavity::integrator::{FieldModel, InitialCloud, IntegratorError, Schedule};
use comb_cavity::meanfield::{MeanFieldError, SolverOptions};
use comb_cavity::model::{ModelError, SystemParams};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unusable invocation or configuration; maps to exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while running or writing results; maps to exit code 1.
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(_) => "run",
            CliError::Io(_) => "io",
        }
    }
}

impl From<IntegratorError> for CliError {
    fn from(e: IntegratorError) -> CliError {
        CliError::Run(e.to_string())
    }
}

impl From<MeanFieldError> for CliError {
    fn from(e: MeanFieldError) -> CliError {
        CliError::Run(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: String,
    system: RawSystem,
    initial: Option<RawInitial>,
    schedule: Option<RawSchedule>,
    sweep: Option<RawSweep>,
    cooling: Option<RawCooling>,
    pulse: Option<RawPulse>,
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kappa: f64,
    delta_c: f64,
    /// Total rescaled pump intensity; set by the grid for scan kinds.
    zeta_tot: Option<f64>,
    n_atoms: usize,
    /// Comb line count; set by the grid for the cooling kind.
    n_modes: Option<usize>,
    /// Comb line spacing in units of the carrier wavenumber.
    delta_k: f64,
    #[serde(default)]
    trap_freq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    /// Cloud width in carrier wavelengths.
    width_lambda: f64,
    /// Initial temperature in recoil units; required by stochastic kinds.
    temperature: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    t_end: f64,
    dt: f64,
    #[serde(default = "default_stride")]
    sample_stride: usize,
    n_trajectories: usize,
    /// Master seed; trajectory i derives its own independent stream.
    seed: u64,
    /// "full" (stochastic fields) or "adiabatic" (slaved fields).
    field_model: Option<String>,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    zeta_start: f64,
    zeta_stop: f64,
    zeta_steps: usize,
    /// "up", "down" or "both" (default).
    direction: Option<String>,
    /// Order parameter level that marks the threshold crossing.
    #[serde(default = "default_cut")]
    boundary_cut: f64,
    #[serde(default = "default_cpw")]
    cells_per_wavelength: usize,
    /// Cloud-size ratios to scan; phase-diagram kind only.
    chi: Option<Vec<f64>>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

fn default_cut() -> f64 {
    0.05
}

fn default_cpw() -> usize {
    32
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCooling {
    zeta_tot: Vec<f64>,
    n_modes: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    /// Trace samples per round trip; default 8 per comb line.
    samples: Option<usize>,
    /// Peak detection threshold as a fraction of the trace maximum.
    threshold: Option<f64>,
    /// Average the intensity over all trajectory end states instead of
    /// taking the first trajectory's snapshot.
    #[serde(default)]
    average: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Dynamics,
    MeanFieldSweep,
    PhaseDiagram,
    Cooling,
    Pulse,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Dynamics => "dynamics",
            ExperimentKind::MeanFieldSweep => "meanfield-sweep",
            ExperimentKind::PhaseDiagram => "phase-diagram",
            ExperimentKind::Cooling => "cooling",
            ExperimentKind::Pulse => "pulse",
        }
    }

    fn parse(s: &str) -> Option<ExperimentKind> {
        match s {
            "dynamics" => Some(ExperimentKind::Dynamics),
            "meanfield-sweep" => Some(ExperimentKind::MeanFieldSweep),
            "phase-diagram" => Some(ExperimentKind::PhaseDiagram),
            "cooling" => Some(ExperimentKind::Cooling),
            "pulse" => Some(ExperimentKind::Pulse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemCfg {
    pub kappa: f64,
    pub delta_c: f64,
    pub zeta_tot: Option<f64>,
    pub n_atoms: usize,
    pub n_modes: Option<usize>,
    pub delta_k: f64,
    pub trap_freq: f64,
}

#[derive(Debug, Clone)]
pub struct InitialCfg {
    pub width_lambda: f64,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScheduleCfg {
    pub t_end: f64,
    pub dt: f64,
    pub sample_stride: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    pub field_model: FieldModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPlan {
    Up,
    Down,
    Both,
}

impl SweepPlan {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepPlan::Up => "up",
            SweepPlan::Down => "down",
            SweepPlan::Both => "both",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCfg {
    pub zeta_grid: Vec<f64>,
    pub plan: SweepPlan,
    pub boundary_cut: f64,
    pub cells_per_wavelength: usize,
    pub chi: Vec<f64>,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct CoolingCfg {
    pub zeta_tot: Vec<f64>,
    pub n_modes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PulseCfg {
    pub samples: Option<usize>,
    pub threshold: f64,
    pub average: bool,
}

/// Validated configuration with defaults applied. Experiments read from
/// this; CLI overrides (seed, output directory) are applied on top before
/// anything runs.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub kind: ExperimentKind,
    pub system: SystemCfg,
    pub initial: Option<InitialCfg>,
    pub schedule: Option<ScheduleCfg>,
    pub sweep: Option<SweepCfg>,
    pub cooling: Option<CoolingCfg>,
    pub pulse: PulseCfg,
    pub out_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ResolvedConfig, CliError> {
    let mut faults: Vec<String> = Vec::new();
    let mut fault = |msg: String| faults.push(msg);

    let kind = match ExperimentKind::parse(&raw.kind) {
        Some(kind) => kind,
        None => {
            return Err(CliError::Config(format!(
                "kind must be one of dynamics, meanfield-sweep, phase-diagram, cooling, pulse; got {:?}",
                raw.kind
            )));
        }
    };

    let needs = |kind: ExperimentKind| -> (bool, bool, bool, bool, bool) {
        // (initial, schedule, sweep, cooling, pulse block allowed)
        match kind {
            ExperimentKind::Dynamics => (true, true, false, false, false),
            ExperimentKind::MeanFieldSweep => (true, false, true, false, false),
            ExperimentKind::PhaseDiagram => (false, false, true, false, false),
            ExperimentKind::Cooling => (true, true, false, true, false),
            ExperimentKind::Pulse => (true, true, false, false, true),
        }
    };
    let (want_initial, want_schedule, want_sweep, want_cooling, allow_pulse) = needs(kind);
    let block = |present: bool, wanted: bool, name: &str, fault: &mut dyn FnMut(String)| {
        if present && !wanted {
            fault(format!(
                "[{name}] block is not used by kind {}",
                kind.as_str()
            ));
        }
        if !present && wanted {
            fault(format!(
                "kind {} requires the [{name}] block",
                kind.as_str()
            ));
        }
    };
    block(raw.initial.is_some(), want_initial, "initial", &mut fault);
    block(
        raw.schedule.is_some(),
        want_schedule,
        "schedule",
        &mut fault,
    );
    block(raw.sweep.is_some(), want_sweep, "sweep", &mut fault);
    block(raw.cooling.is_some(), want_cooling, "cooling", &mut fault);
    if raw.pulse.is_some() && !allow_pulse {
        fault(format!(
            "[pulse] block is not used by kind {}",
            kind.as_str()
        ));
    }

    let grid_sets_zeta = matches!(
        kind,
        ExperimentKind::MeanFieldSweep | ExperimentKind::PhaseDiagram | ExperimentKind::Cooling
    );
    if grid_sets_zeta && raw.system.zeta_tot.is_some() {
        fault(format!(
            "system.zeta_tot is set by the grid for kind {}",
            kind.as_str()
        ));
    }
    if !grid_sets_zeta && raw.system.zeta_tot.is_none() {
        fault("system.zeta_tot is required".into());
    }
    if kind == ExperimentKind::Cooling {
        if raw.system.n_modes.is_some() {
            fault("system.n_modes is set by the cooling grid".into());
        }
    } else if raw.system.n_modes.is_none() {
        fault("system.n_modes is required".into());
    }

    let system = SystemCfg {
        kappa: raw.system.kappa,
        delta_c: raw.system.delta_c,
        zeta_tot: raw.system.zeta_tot,
        n_atoms: raw.system.n_atoms,
        n_modes: raw.system.n_modes,
        delta_k: raw.system.delta_k,
        trap_freq: raw.system.trap_freq,
    };

    let initial = raw.initial.map(|i| InitialCfg {
        width_lambda: i.width_lambda,
        temperature: i.temperature,
    });
    if let Some(i) = &initial {
        if !(i.width_lambda > 0.0 && i.width_lambda.is_finite()) {
            fault(format!(
                "initial.width_lambda must be positive, got {}",
                i.width_lambda
            ));
        }
        if kind == ExperimentKind::MeanFieldSweep
            && (i.width_lambda.fract().abs() > 1e-9 || i.width_lambda < 1.0)
        {
            fault(format!(
                "initial.width_lambda must be a whole number of wavelengths for mean-field scans, got {}",
                i.width_lambda
            ));
        }
        match i.temperature {
            Some(t) if !(t >= 0.0 && t.is_finite()) => {
                fault(format!("initial.temperature must be nonnegative, got {t}"));
            }
            None if kind != ExperimentKind::MeanFieldSweep => {
                fault("initial.temperature is required for stochastic kinds".into());
            }
            _ => {}
        }
    }

    let schedule = match raw.schedule {
        Some(s) => {
            let field_model = match s.field_model.as_deref() {
                None | Some("full") => FieldModel::FullSde,
                Some("adiabatic") => FieldModel::Adiabatic,
                Some(other) => {
                    fault(format!(
                        "schedule.field_model must be \"full\" or \"adiabatic\", got {other:?}"
                    ));
                    FieldModel::FullSde
                }
            };
            if s.n_trajectories == 0 {
                fault("schedule.n_trajectories must be at least 1".into());
            }
            Some(ScheduleCfg {
                t_end: s.t_end,
                dt: s.dt,
                sample_stride: s.sample_stride,
                n_trajectories: s.n_trajectories,
                seed: s.seed,
                field_model,
            })
        }
        None => None,
    };

    let sweep = match raw.sweep {
        Some(s) => {
            if s.zeta_steps < 2 {
                fault("sweep.zeta_steps must be at least 2".into());
            }
            if !(s.zeta_stop > s.zeta_start && s.zeta_start >= 0.0) {
                fault(format!(
                    "sweep bounds must satisfy 0 <= zeta_start < zeta_stop, got {} and {}",
                    s.zeta_start, s.zeta_stop
                ));
            }
            if !(s.boundary_cut > 0.0 && s.boundary_cut < 1.0) {
                fault(format!(
                    "sweep.boundary_cut must be in (0, 1), got {}",
                    s.boundary_cut
                ));
            }
            if s.cells_per_wavelength < 32 {
                fault(format!(
                    "sweep.cells_per_wavelength must be at least 32, got {}",
                    s.cells_per_wavelength
                ));
            }
            let plan = match s.direction.as_deref() {
                None | Some("both") => SweepPlan::Both,
                Some("up") => SweepPlan::Up,
                Some("down") => SweepPlan::Down,
                Some(other) => {
                    fault(format!(
                        "sweep.direction must be \"up\", \"down\" or \"both\", got {other:?}"
                    ));
                    SweepPlan::Both
                }
            };
            let chi = s.chi.unwrap_or_default();
            if kind == ExperimentKind::PhaseDiagram && chi.is_empty() {
                fault("sweep.chi must list at least one cloud-size ratio".into());
            }
            if kind == ExperimentKind::MeanFieldSweep && !chi.is_empty() {
                fault("sweep.chi is only used by the phase-diagram kind".into());
            }
            if chi.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                fault("sweep.chi entries must be positive".into());
            }
            let mut options = SolverOptions::default();
            if let Some(tol) = s.tol {
                if !(tol > 0.0 && tol.is_finite()) {
                    fault(format!("sweep.tol must be positive, got {tol}"));
                }
                options.tol = tol;
            }
            if let Some(it) = s.max_iter {
                if it == 0 {
                    fault("sweep.max_iter must be at least 1".into());
                }
                options.max_iter = it;
            }
            let steps = s.zeta_steps.max(2);
            let zeta_grid: Vec<f64> = (0..steps)
                .map(|i| {
                    s.zeta_start + (s.zeta_stop - s.zeta_start) * i as f64 / (steps - 1) as f64
                })
                .collect();
            Some(SweepCfg {
                zeta_grid,
                plan,
                boundary_cut: s.boundary_cut,
                cells_per_wavelength: s.cells_per_wavelength,
                chi,
                options,
            })
        }
        None => None,
    };

    let cooling = match raw.cooling {
        Some(c) => {
            if c.zeta_tot.is_empty() || c.n_modes.is_empty() {
                fault("cooling.zeta_tot and cooling.n_modes must be non-empty".into());
            }
            if c.zeta_tot.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
                fault("cooling.zeta_tot entries must be nonnegative".into());
            }
            if c.n_modes.iter().any(|m| *m == 0) {
                fault("cooling.n_modes entries must be at least 1".into());
            }
            Some(CoolingCfg {
                zeta_tot: c.zeta_tot,
                n_modes: c.n_modes,
            })
        }
        None => None,
    };

    let pulse = {
        let p = raw.pulse.unwrap_or(RawPulse {
            samples: None,
            threshold: None,
            average: false,
        });
        let threshold = p.threshold.unwrap_or(0.25);
        if !(threshold > 0.0 && threshold <= 1.0) {
            fault(format!(
                "pulse.threshold must be in (0, 1], got {threshold}"
            ));
        }
        if let (Some(samples), Some(m)) = (p.samples, system.n_modes) {
            if samples < 4 * m {
                fault(format!(
                    "pulse.samples must be at least 4 * n_modes = {}, got {samples}",
                    4 * m
                ));
            }
        }
        PulseCfg {
            samples: p.samples,
            threshold,
            average: p.average,
        }
    };

    let resolved = ResolvedConfig {
        kind,
        system,
        initial,
        schedule,
        sweep,
        cooling,
        pulse,
        out_dir: raw.output.dir,
    };

    // Physics-level checks: build the actual parameter sets and schedules so
    // `validate` catches what the run would reject.
    for (zeta, m) in resolved.parameter_grid() {
        match resolved.system_params_with(zeta, m) {
            Ok(params) => {
                if let Some(s) = &resolved.schedule {
                    if let Err(e) = resolved.make_schedule(s).validate(&params) {
                        fault(format!("schedule: {e}"));
                        break;
                    }
                }
            }
            Err(e) => {
                fault(format!("system: {e}"));
                break;
            }
        }
    }

    if faults.is_empty() {
        Ok(resolved)
    } else {
        Err(CliError::Config(faults.join("; ")))
    }
}

impl ResolvedConfig {
    /// Every (zeta_tot, n_modes) combination this config will run.
    pub fn parameter_grid(&self) -> Vec<(f64, usize)> {
        match self.kind {
            ExperimentKind::Dynamics | ExperimentKind::Pulse => {
                vec![(
                    self.system.zeta_tot.unwrap_or(0.0),
                    self.system.n_modes.unwrap_or(1),
                )]
            }
            ExperimentKind::MeanFieldSweep | ExperimentKind::PhaseDiagram => {
                let m = self.system.n_modes.unwrap_or(1);
                self.sweep
                    .as_ref()
                    .map_or_else(Vec::new, |s| s.zeta_grid.iter().map(|&z| (z, m)).collect())
            }
            ExperimentKind::Cooling => self.cooling.as_ref().map_or_else(Vec::new, |c| {
                c.zeta_tot
                    .iter()
                    .flat_map(|&z| c.n_modes.iter().map(move |&m| (z, m)))
                    .collect()
            }),
        }
    }

    pub fn system_params_with(
        &self,
        zeta_tot: f64,
        n_modes: usize,
    ) -> Result<SystemParams, CliError> {
        Ok(SystemParams::with_zeta_tot(
            zeta_tot,
            self.system.kappa,
            self.system.delta_c,
            self.system.n_atoms,
            n_modes,
            self.system.delta_k,
            self.system.trap_freq,
        )?)
    }

    /// Parameter set for kinds with a single fixed (zeta_tot, n_modes).
    pub fn system_params(&self) -> Result<SystemParams, CliError> {
        let zeta = self
            .system
            .zeta_tot
            .ok_or_else(|| CliError::Config("system.zeta_tot is required".into()))?;
        let m = self
            .system
            .n_modes
            .ok_or_else(|| CliError::Config("system.n_modes is required".into()))?;
        self.system_params_with(zeta, m)
    }

    pub fn schedule_cfg(&self) -> &ScheduleCfg {
        self.schedule
            .as_ref()
            .expect("validated: schedule block present")
    }

    pub fn make_schedule(&self, s: &ScheduleCfg) -> Schedule {
        Schedule::new(s.t_end, s.dt)
            .with_stride(s.sample_stride)
            .with_field_model(s.field_model)
    }

    pub fn initial_cfg(&self) -> &InitialCfg {
        self.initial
            .as_ref()
            .expect("validated: initial block present")
    }

    pub fn initial_cloud(&self) -> InitialCloud {
        let i = self.initial_cfg();
        InitialCloud {
            width: i.width_lambda * TAU,
            temperature: i.temperature.expect("validated: temperature present"),
        }
    }

    pub fn sweep_cfg(&self) -> &SweepCfg {
        self.sweep.as_ref().expect("validated: sweep block present")
    }

    pub fn cooling_cfg(&self) -> &CoolingCfg {
        self.cooling
            .as_ref()
            .expect("validated: cooling block present")
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.schedule {
            s.seed = seed;
        }
    }

    /// Flat `key = value` view of everything the run will use; embedded into
    /// every output file and printed by the validate command.
    pub fn resolved_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("kind = {}", self.kind.as_str())];
        let mut push = |key: &str, value: String| lines.push(format!("{key} = {value}"));
        push("system.kappa", self.system.kappa.to_string());
        push("system.delta_c", self.system.delta_c.to_string());
        if let Some(z) = self.system.zeta_tot {
            push("system.zeta_tot", z.to_string());
        }
        push("system.n_atoms", self.system.n_atoms.to_string());
        if let Some(m) = self.system.n_modes {
            push("system.n_modes", m.to_string());
        }
        push("system.delta_k", self.system.delta_k.to_string());
        push("system.trap_freq", self.system.trap_freq.to_string());
        if let Some(i) = &self.initial {
            push("initial.width_lambda", i.width_lambda.to_string());
            if let Some(t) = i.temperature {
                push("initial.temperature", t.to_string());
            }
        }
        if let Some(s) = &self.schedule {
            push("schedule.t_end", s.t_end.to_string());
            push("schedule.dt", s.dt.to_string());
            push("schedule.sample_stride", s.sample_stride.to_string());
            push("schedule.n_trajectories", s.n_trajectories.to_string());
            push("schedule.seed", s.seed.to_string());
            let model = match s.field_model {
                FieldModel::FullSde => "full",
                FieldModel::Adiabatic => "adiabatic",
            };
            push("schedule.field_model", model.to_string());
        }
        if let Some(s) = &self.sweep {
            let mut grid = String::new();
            let _ = write!(
                grid,
                "{}..{} ({} points)",
                s.zeta_grid.first().unwrap_or(&0.0),
                s.zeta_grid.last().unwrap_or(&0.0),
                s.zeta_grid.len()
            );
            push("sweep.zeta_grid", grid);
            push("sweep.direction", s.plan.as_str().to_string());
            push("sweep.boundary_cut", s.boundary_cut.to_string());
            push(
                "sweep.cells_per_wavelength",
                s.cells_per_wavelength.to_string(),
            );
            if !s.chi.is_empty() {
                push(
                    "sweep.chi",
                    s.chi
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(" "),
                );
            }
            push("sweep.tol", s.options.tol.to_string());
            push("sweep.max_iter", s.options.max_iter.to_string());
        }
        if let Some(c) = &self.cooling {
            push(
                "cooling.zeta_tot",
                c.zeta_tot
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            push(
                "cooling.n_modes",
                c.n_modes
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
        }
        if self.kind == ExperimentKind::Pulse {
            if let Some(samples) = self.pulse.samples {
                push("pulse.samples", samples.to_string());
            }
            push("pulse.threshold", self.pulse.threshold.to_string());
            push("pulse.average", self.pulse.average.to_string());
        }
        push("output.dir", self.out_dir.display().to_string());
        lines
    }
}
