//! Stochastic trajectory ensembles: one file per trajectory plus the
//! ensemble mean.

use comb_cavity::integrator::{ensemble_average, run_ensemble, TrajectoryRecord};
use comb_cavity::modes::ModeLadder;

use super::Experiment;
use crate::config::{CliError, ResolvedConfig};
use crate::output::{join_path, num, RunContext, TableWriter};

pub struct Dynamics;

const COLUMNS: &[(&str, &str)] = &[
    ("time", "elapsed time, units 1/omega_R"),
    (
        "theta_bar",
        "total order parameter, rms of Theta_m over modes",
    ),
    (
        "photon_number",
        "total intracavity photon number, sum over modes",
    ),
    (
        "kinetic_energy",
        "mean kinetic energy per atom, units hbar omega_R",
    ),
];

pub fn write_record(
    name: &str,
    record: &TrajectoryRecord,
    cfg: &ResolvedConfig,
    ctx: &RunContext,
) -> Result<(), CliError> {
    let mut table = TableWriter::create(join_path(&cfg.out_dir, name), ctx, cfg, COLUMNS)?;
    for s in 0..record.times.len() {
        table.row(&[
            num(record.times[s]),
            num(record.theta_bar[s]),
            num(record.photon_number[s]),
            num(record.kinetic_energy[s]),
        ])?;
    }
    table.finish()?;
    Ok(())
}

impl Experiment for Dynamics {
    fn kind(&self) -> &'static str {
        "dynamics"
    }

    fn run(&self, cfg: &ResolvedConfig, ctx: &RunContext) -> Result<(), CliError> {
        let params = cfg.system_params()?;
        let ladder = ModeLadder::comb(&params);
        let sch = cfg.schedule_cfg();
        let schedule = cfg.make_schedule(sch);
        let cloud = cfg.initial_cloud();

        let records = run_ensemble(
            &cloud,
            &params,
            &ladder,
            &schedule,
            sch.seed,
            sch.n_trajectories,
        )?;
        println!(
            "dynamics: integrated {} trajectories, N={} M={}, t_end={} dt={}",
            records.len(),
            params.n_atoms,
            params.n_modes,
            sch.t_end,
            sch.dt
        );

        for (i, record) in records.iter().enumerate() {
            write_record(&format!("traj_{i:03}.csv"), record, cfg, ctx)?;
        }
        let mean = ensemble_average(&records)?;
        write_record("ensemble_mean.csv", &mean, cfg, ctx)?;
        println!(
            "dynamics: wrote {} trajectory files and ensemble_mean.csv ({} samples) to {}",
            records.len(),
            mean.times.len(),
            cfg.out_dir.display()
        );
        Ok(())
    }
}
