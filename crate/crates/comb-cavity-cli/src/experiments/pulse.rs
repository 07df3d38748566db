//! Output pulse train and spatial field profile of the state reached by a
//! short stochastic run.

use std::f64::consts::TAU;

use comb_cavity::fieldanalysis::{
    field_distribution, output_intensity, output_intensity_averaged, pulse_metrics,
    smoothed_envelope, AnalysisError,
};
use comb_cavity::integrator::run_ensemble;
use comb_cavity::modes::{order_parameters, ModeLadder};
use num_complex::Complex64;

use super::dynamics::write_record;
use super::Experiment;
use crate::config::{CliError, ResolvedConfig};
use crate::output::{join_path, num, RunContext, TableWriter};

pub struct Pulse;

impl Experiment for Pulse {
    fn kind(&self) -> &'static str {
        "pulse"
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
            "pulse: integrated {} trajectories to t={}, reading the end state",
            records.len(),
            sch.t_end
        );
        write_record(
            "run_mean.csv",
            &comb_cavity::integrator::ensemble_average(&records)?,
            cfg,
            ctx,
        )?;

        let finals: Vec<&comb_cavity::integrator::EnsembleState> = records
            .iter()
            .map(|r| {
                r.final_state
                    .as_ref()
                    .expect("simulate keeps the end state")
            })
            .collect();
        let snapshots: Vec<Vec<Complex64>> = finals.iter().map(|s| s.fields.clone()).collect();
        let samples = cfg
            .pulse
            .samples
            .unwrap_or(8 * ladder.len())
            .max(4 * ladder.len());
        let trace = if cfg.pulse.average {
            output_intensity_averaged(&snapshots, &ladder, samples)?
        } else {
            output_intensity(&snapshots[0], &ladder, samples)?
        };

        let mut trace_table = TableWriter::create(
            join_path(&cfg.out_dir, "pulse_trace.csv"),
            ctx,
            cfg,
            &[
                ("time", "within one round trip, units L/c; the period is 2"),
                (
                    "intensity",
                    "output intensity, units of a single photon's rate",
                ),
            ],
        )?;
        for (&t, &i) in trace.times().iter().zip(trace.intensity()) {
            trace_table.row(&[num(t), num(i)])?;
        }
        trace_table.finish()?;

        let mut peaks_table = TableWriter::create(
            join_path(&cfg.out_dir, "pulse_peaks.csv"),
            ctx,
            cfg,
            &[
                ("peak_time", "position within the round trip, units L/c"),
                ("peak_width", "full width at half maximum, units L/c"),
            ],
        )?;
        match pulse_metrics(&trace, Some(cfg.pulse.threshold)) {
            Ok(metrics) => {
                for (t, w) in metrics.peak_times.iter().zip(&metrics.peak_widths) {
                    peaks_table.row(&[num(*t), num(*w)])?;
                }
                let period = metrics
                    .repetition_period
                    .map_or_else(|| "aperiodic".to_string(), num);
                println!(
                    "pulse: {} peaks per round trip, repetition period {}",
                    metrics.n_peaks, period
                );
            }
            Err(AnalysisError::NoPeaks) => {
                println!("pulse: no peaks above threshold {}", cfg.pulse.threshold);
            }
            Err(e) => return Err(e.into()),
        }
        peaks_table.finish()?;

        // Spatial profile of the end-state atomic grating of trajectory 0.
        let positions = &finals[0].positions;
        let order = order_parameters(positions, &ladder);
        let half_width = 0.75 * cloud.width;
        let dx = TAU / 32.0;
        let cells = (2.0 * half_width / dx).round() as usize;
        let grid: Vec<f64> = (0..cells).map(|i| -half_width + i as f64 * dx).collect();
        let field = field_distribution(&order, &ladder, &grid);

        let mut profile = TableWriter::create(
            join_path(&cfg.out_dir, "field_profile.csv"),
            ctx,
            cfg,
            &[
                ("x", "cavity axis position, carrier wavelength = 2 pi"),
                (
                    "field",
                    "mean field profile from the end-state order parameters",
                ),
            ],
        )?;
        for (&x, &f) in grid.iter().zip(&field) {
            profile.row(&[num(x), num(f)])?;
        }
        profile.finish()?;

        let mut wrote = vec![
            "run_mean.csv",
            "pulse_trace.csv",
            "pulse_peaks.csv",
            "field_profile.csv",
        ];
        match smoothed_envelope(&field, &grid) {
            Ok(env) => {
                let mut envelope = TableWriter::create(
                    join_path(&cfg.out_dir, "field_envelope.csv"),
                    ctx,
                    cfg,
                    &[
                        ("x", "window centre on the cavity axis"),
                        ("envelope", "rms field over one wavelength"),
                    ],
                )?;
                for (x, e) in env {
                    envelope.row(&[num(x), num(e)])?;
                }
                envelope.finish()?;
                wrote.push("field_envelope.csv");
            }
            Err(AnalysisError::GridTooShort { .. }) => {
                println!("pulse: profile grid shorter than one wavelength, skipping envelope");
            }
            Err(e) => return Err(e.into()),
        }

        println!(
            "pulse: wrote {} to {}",
            wrote.join(", "),
            cfg.out_dir.display()
        );
        Ok(())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> CliError {
        CliError::Run(e.to_string())
    }
}
