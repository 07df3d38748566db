//! Self-consistent stationary-state scan over the total pump intensity.

use comb_cavity::meanfield::{
    sweep, threshold_detect, DensityProfile, MeanFieldError, SweepDirection, SweepResult,
};
use comb_cavity::modes::ModeLadder;

use super::Experiment;
use crate::config::{CliError, ResolvedConfig, SweepPlan};
use crate::output::{join_path, num, RunContext, TableWriter};

pub struct MeanFieldSweep;

pub const POINT_COLUMNS: &[(&str, &str)] = &[
    ("direction", "scan direction the point was reached from"),
    ("zeta_tot", "total rescaled pump intensity"),
    ("theta_bar", "total order parameter of the stationary state"),
    ("iterations", "fixed-point iterations used"),
    ("converged", "1 when the iteration met the tolerance"),
];

pub fn point_rows(table: &mut TableWriter, result: &SweepResult) -> Result<(), CliError> {
    let dir = match result.direction {
        SweepDirection::Up => "up",
        SweepDirection::Down => "down",
    };
    for k in 0..result.zeta_tot.len() {
        table.row(&[
            dir.to_string(),
            num(result.zeta_tot[k]),
            num(result.theta_bar[k]),
            result.iterations[k].to_string(),
            u8::from(result.converged[k]).to_string(),
        ])?;
    }
    Ok(())
}

/// Threshold for one scan; NaN when the scan never crosses the cut.
pub fn detect_or_nan(result: &SweepResult, cut: f64) -> Result<f64, CliError> {
    match threshold_detect(result, cut) {
        Ok(z) => Ok(z),
        Err(MeanFieldError::NoCrossing) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

impl Experiment for MeanFieldSweep {
    fn kind(&self) -> &'static str {
        "meanfield-sweep"
    }

    fn run(&self, cfg: &ResolvedConfig, ctx: &RunContext) -> Result<(), CliError> {
        let sw = cfg.sweep_cfg();
        let template = cfg.system_params_with(sw.zeta_grid[0], cfg.system.n_modes.unwrap())?;
        let ladder = ModeLadder::comb(&template);
        let n_lambda = cfg.initial_cfg().width_lambda.round() as usize;
        let start = DensityProfile::uniform(n_lambda, sw.cells_per_wavelength);

        let mut results: Vec<SweepResult> = Vec::new();
        match sw.plan {
            SweepPlan::Up => results.push(sweep(
                &template,
                &ladder,
                &sw.zeta_grid,
                SweepDirection::Up,
                &start,
                &sw.options,
            )),
            SweepPlan::Down => results.push(sweep(
                &template,
                &ladder,
                &sw.zeta_grid,
                SweepDirection::Down,
                &start,
                &sw.options,
            )),
            SweepPlan::Both => {
                let (up, down) = comb_cavity::meanfield::hysteresis_sweep(
                    &template,
                    &ladder,
                    &sw.zeta_grid,
                    &start,
                    &sw.options,
                );
                results.push(up);
                results.push(down);
            }
        }

        let mut points = TableWriter::create(
            join_path(&cfg.out_dir, "sweep_points.csv"),
            ctx,
            cfg,
            POINT_COLUMNS,
        )?;
        let mut thresholds = TableWriter::create(
            join_path(&cfg.out_dir, "sweep_thresholds.csv"),
            ctx,
            cfg,
            &[
                ("direction", "scan direction"),
                (
                    "boundary_cut",
                    "order parameter level defining the crossing",
                ),
                (
                    "zeta_threshold",
                    "interpolated crossing; NaN when never crossed",
                ),
            ],
        )?;
        for result in &results {
            point_rows(&mut points, result)?;
            let dir = match result.direction {
                SweepDirection::Up => "up",
                SweepDirection::Down => "down",
            };
            let z = detect_or_nan(result, sw.boundary_cut)?;
            thresholds.row(&[dir.to_string(), num(sw.boundary_cut), num(z)])?;
            println!(
                "sweep {dir}: {} points, threshold {} at cut {}",
                result.zeta_tot.len(),
                num(z),
                sw.boundary_cut
            );
        }
        points.finish()?;
        thresholds.finish()?;
        println!(
            "sweep: wrote sweep_points.csv and sweep_thresholds.csv to {}",
            cfg.out_dir.display()
        );
        Ok(())
    }
}
