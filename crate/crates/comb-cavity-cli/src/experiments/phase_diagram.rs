//! Ordering-threshold map over the cloud-size ratio chi and pump strength:
//! an up/down hysteresis scan per chi with interpolated boundaries.

use comb_cavity::meanfield::{hysteresis_sweep, largest_step, DensityProfile, SweepDirection};
use comb_cavity::modes::ModeLadder;

use super::sweep::detect_or_nan;
use super::Experiment;
use crate::config::{CliError, ResolvedConfig};
use crate::output::{join_path, num, RunContext, TableWriter};

pub struct PhaseDiagram;

impl Experiment for PhaseDiagram {
    fn kind(&self) -> &'static str {
        "phase-diagram"
    }

    fn run(&self, cfg: &ResolvedConfig, ctx: &RunContext) -> Result<(), CliError> {
        let sw = cfg.sweep_cfg();
        let n_modes = cfg.system.n_modes.unwrap();
        let template = cfg.system_params_with(sw.zeta_grid[0], n_modes)?;
        let ladder = ModeLadder::comb(&template);
        let bandwidth = ladder.bandwidth();
        if bandwidth <= 0.0 {
            return Err(CliError::Config(
                "phase-diagram needs a finite comb bandwidth (delta_k > 0)".into(),
            ));
        }

        let mut points = TableWriter::create(
            join_path(&cfg.out_dir, "phase_points.csv"),
            ctx,
            cfg,
            &[
                (
                    "chi",
                    "cloud width times bandwidth over 2 pi, after rounding to whole wavelengths",
                ),
                ("direction", "scan direction the point was reached from"),
                ("zeta_tot", "total rescaled pump intensity"),
                ("theta_bar", "total order parameter of the stationary state"),
            ],
        )?;
        let mut boundary = TableWriter::create(
            join_path(&cfg.out_dir, "phase_boundary.csv"),
            ctx,
            cfg,
            &[
                ("chi", "cloud-size ratio actually used"),
                ("n_lambda", "cloud width in wavelengths"),
                ("zeta_up", "up-scan threshold; NaN when never crossed"),
                ("zeta_down", "down-scan threshold; NaN when never crossed"),
                ("jump_at", "pump value of the largest up-scan step"),
                (
                    "jump_size",
                    "largest step of theta_bar between up-scan grid points",
                ),
            ],
        )?;

        for &chi_req in &sw.chi {
            let n_lambda = (chi_req / bandwidth).round().max(1.0) as usize;
            let chi = n_lambda as f64 * bandwidth;
            let start = DensityProfile::uniform(n_lambda, sw.cells_per_wavelength);
            let (up, down) =
                hysteresis_sweep(&template, &ladder, &sw.zeta_grid, &start, &sw.options);

            for result in [&up, &down] {
                let dir = match result.direction {
                    SweepDirection::Up => "up",
                    SweepDirection::Down => "down",
                };
                for k in 0..result.zeta_tot.len() {
                    points.row(&[
                        num(chi),
                        dir.to_string(),
                        num(result.zeta_tot[k]),
                        num(result.theta_bar[k]),
                    ])?;
                }
            }

            let zeta_up = detect_or_nan(&up, sw.boundary_cut)?;
            let zeta_down = detect_or_nan(&down, sw.boundary_cut)?;
            let (jump_at, jump_size) = largest_step(&up).unwrap_or((f64::NAN, f64::NAN));
            boundary.row(&[
                num(chi),
                n_lambda.to_string(),
                num(zeta_up),
                num(zeta_down),
                num(jump_at),
                num(jump_size),
            ])?;
            println!(
                "phase-diagram: chi={} (w={n_lambda} wavelengths) thresholds up={} down={}",
                num(chi),
                num(zeta_up),
                num(zeta_down)
            );
        }
        points.finish()?;
        boundary.finish()?;
        println!(
            "phase-diagram: wrote phase_points.csv and phase_boundary.csv to {}",
            cfg.out_dir.display()
        );
        Ok(())
    }
}
