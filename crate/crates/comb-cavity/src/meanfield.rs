//! Self-consistent stationary states of the thermal cloud.
//!
//! At the stationary temperature the cloud obeys a Boltzmann distribution
//! in the light-shift potential it generates itself. Iterating
//!
//!   P_{n+1}(x) proportional to exp(2 zeta sum_m w_m^2 Theta_m[P_n] cos(k_m x - phi_m))
//!
//! finds those states; note the temperature cancels, leaving the pump
//! strength zeta as the only control. On top of the iteration this module
//! provides pump sweeps with warm starts (for hysteresis), threshold
//! extraction, and the analytic threshold estimate for a wavelength comb.

use thiserror::Error;

use crate::model::SystemParams;
use crate::modes::{sinc, ModeLadder, OrderParameterSet};

/// Wavelength of the comb centre in internal units.
pub const LAMBDA_C: f64 = std::f64::consts::TAU;

/// Smallest allowed grid resolution; resolves the wavelength grating and
/// the peak narrowing at desk-scale pump strengths.
pub const MIN_CELLS_PER_WAVELENGTH: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeanFieldError {
    #[error("invalid density grid: {0}")]
    InvalidGrid(&'static str),
    #[error("no convergence after {iterations} iterations, residual {residual}")]
    NotConverged { residual: f64, iterations: usize },
    #[error("order parameter never crosses the threshold cut")]
    NoCrossing,
    #[error("threshold bracket contains an unconverged sweep point")]
    UnconvergedBracket,
}

/// Probability density of the cloud on a uniform grid over
/// [-width/2, width/2], stored at cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    width: f64,
    dx: f64,
    density: Vec<f64>,
}

impl DensityProfile {
    /// Homogeneous cloud over `n_lambda` wavelengths.
    pub fn uniform(n_lambda: usize, cells_per_wavelength: usize) -> DensityProfile {
        assert!(n_lambda >= 1);
        assert!(cells_per_wavelength as f64 >= MIN_CELLS_PER_WAVELENGTH);
        let width = n_lambda as f64 * LAMBDA_C;
        let cells = n_lambda * cells_per_wavelength;
        DensityProfile {
            width,
            dx: width / cells as f64,
            density: vec![1.0 / width; cells],
        }
    }

    /// Wraps raw nonnegative cell values, normalizing them to unit total
    /// probability.
    pub fn from_density(width: f64, density: Vec<f64>) -> Result<DensityProfile, MeanFieldError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(MeanFieldError::InvalidGrid("width must be positive"));
        }
        if density.is_empty() {
            return Err(MeanFieldError::InvalidGrid("empty grid"));
        }
        if density.len() as f64 * LAMBDA_C / width < MIN_CELLS_PER_WAVELENGTH * (1.0 - 1e-9) {
            return Err(MeanFieldError::InvalidGrid(
                "fewer than 32 cells per wavelength",
            ));
        }
        if density.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(MeanFieldError::InvalidGrid(
                "densities must be finite and nonnegative",
            ));
        }
        let mut profile = DensityProfile {
            width,
            dx: width / density.len() as f64,
            density,
        };
        let total = profile.total();
        if total <= 0.0 {
            return Err(MeanFieldError::InvalidGrid("zero total probability"));
        }
        profile.scale(1.0 / total);
        Ok(profile)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.density.len()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Midpoint of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.width + (i as f64 + 0.5) * self.dx
    }

    /// Cloud extent in wavelengths.
    pub fn n_lambda(&self) -> f64 {
        self.width / LAMBDA_C
    }

    fn total(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dx
    }

    fn scale(&mut self, factor: f64) {
        for p in &mut self.density {
            *p *= factor;
        }
    }

    /// L1 distance between two profiles on the same grid.
    pub fn l1_distance(&self, other: &DensityProfile) -> f64 {
        assert_eq!(self.density.len(), other.density.len(), "grid mismatch");
        assert_eq!(self.width, other.width, "grid mismatch");
        self.density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dx
    }
}

/// Mode functions tabulated on a profile grid, shared across iterations.
struct ModeTable {
    /// values[m * cells + c] = cos(k_m x_c - phi_m); weights enter the
    /// potential separately.
    values: Vec<f64>,
    n_modes: usize,
    n_cells: usize,
}

impl ModeTable {
    fn new(ladder: &ModeLadder, grid: &DensityProfile) -> ModeTable {
        let n_modes = ladder.len();
        let n_cells = grid.n_cells();
        let mut values = vec![0.0; n_modes * n_cells];
        for m in 0..n_modes {
            for c in 0..n_cells {
                values[m * n_cells + c] = ladder.mode_value(m, grid.x(c));
            }
        }
        ModeTable {
            values,
            n_modes,
            n_cells,
        }
    }

    fn order_parameters(&self, profile: &DensityProfile) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_modes];
        for m in 0..self.n_modes {
            let row = &self.values[m * self.n_cells..(m + 1) * self.n_cells];
            theta[m] = row
                .iter()
                .zip(profile.density())
                .map(|(g, p)| g * p)
                .sum::<f64>()
                * profile.dx();
        }
        theta
    }
}

/// Order parameters of a continuous cloud, Theta_m = integral of
/// P(x) cos(k_m x - phi_m), by midpoint quadrature.
pub fn profile_order_parameters(
    profile: &DensityProfile,
    ladder: &ModeLadder,
) -> OrderParameterSet {
    let table = ModeTable::new(ladder, profile);
    OrderParameterSet::new(clamp_unit(table.order_parameters(profile)))
}

/// Quadrature roundoff can push |Theta| a few ulp past 1; pin it back so
/// downstream invariants hold exactly.
fn clamp_unit(mut theta: Vec<f64>) -> Vec<f64> {
    for t in &mut theta {
        *t = t.clamp(-1.0, 1.0);
    }
    theta
}

/// Boltzmann distribution generated by prescribed order parameters on the
/// grid of `template`. The largest exponent is subtracted before
/// exponentiation, so arbitrarily deep potentials stay finite.
pub fn boltzmann_from_thetas(
    thetas: &[f64],
    template: &DensityProfile,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> DensityProfile {
    assert_eq!(thetas.len(), ladder.len());
    let table = ModeTable::new(ladder, template);
    boltzmann_with_table(thetas, template, params, ladder, &table)
}

fn boltzmann_with_table(
    thetas: &[f64],
    template: &DensityProfile,
    params: &SystemParams,
    ladder: &ModeLadder,
    table: &ModeTable,
) -> DensityProfile {
    let zeta = params.zeta();
    let n_cells = template.n_cells();
    let mut exponent = vec![0.0; n_cells];
    for m in 0..ladder.len() {
        let w = ladder.weights()[m];
        let coef = 2.0 * zeta * w * w * thetas[m];
        let row = &table.values[m * n_cells..(m + 1) * n_cells];
        for (e, g) in exponent.iter_mut().zip(row) {
            *e += coef * g;
        }
    }
    let peak = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = template.clone();
    for (p, e) in out.density.iter_mut().zip(&exponent) {
        *p = (e - peak).exp();
    }
    let total = out.total();
    out.scale(1.0 / total);
    out
}

/// One iteration of the self-consistency map: measure Theta on P_n, build
/// the potential, return the Boltzmann state.
pub fn boltzmann_update(
    profile: &DensityProfile,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> DensityProfile {
    let table = ModeTable::new(ladder, profile);
    let theta = table.order_parameters(profile);
    boltzmann_with_table(&theta, profile, params, ladder, &table)
}

/// Iteration controls for [`fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// L1 convergence tolerance on successive profiles.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative amplitude of the wavelength-periodic seed added before the
    /// first step. The homogeneous state is always a fixed point, so
    /// without a seed the ordered branch would be unreachable.
    pub seed_amplitude: f64,
    /// Under-relaxation weight in (0, 1]: each step moves this fraction of
    /// the way toward the Boltzmann image. Weight 1 is the plain update;
    /// smaller values damp oscillatory updates at the cost of slower smooth
    /// convergence. No fixed point moves either way.
    pub mixing: f64,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions {
            tol: 1e-9,
            max_iter: 10_000,
            seed_amplitude: 1e-3,
            mixing: 1.0,
        }
    }
}

/// A converged stationary state.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub profile: DensityProfile,
    pub order: OrderParameterSet,
    pub iterations: usize,
}

/// Iterates [`boltzmann_update`] from `start` (plus the symmetry-breaking
/// seed) until the L1 change drops below `opts.tol`.
pub fn fixed_point(
    start: &DensityProfile,
    params: &SystemParams,
    ladder: &ModeLadder,
    opts: &SolverOptions,
) -> Result<FixedPoint, MeanFieldError> {
    let table = ModeTable::new(ladder, start);
    let outcome = iterate_with_table(start, params, ladder, opts, &table);
    if outcome.converged {
        let order = OrderParameterSet::new(clamp_unit(table.order_parameters(&outcome.profile)));
        Ok(FixedPoint {
            profile: outcome.profile,
            order,
            iterations: outcome.iterations,
        })
    } else {
        Err(MeanFieldError::NotConverged {
            residual: outcome.residual,
            iterations: outcome.iterations,
        })
    }
}

struct IterationOutcome {
    profile: DensityProfile,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Iterations to let transients die out before the first extrapolation and
/// between extrapolations.
const ACCEL_MIN_ITER: usize = 50;
const ACCEL_COOLDOWN: usize = 25;

/// True when the last two residual ratios agree on a slow geometric decay,
/// measured deep enough in the tail for one mode to dominate.
fn geometric_tail(ratio: f64, prev_ratio: f64, residual: f64) -> bool {
    ratio > 0.8 && ratio < 0.9999 && (ratio - prev_ratio).abs() <= 0.01 * ratio && residual < 1e-3
}

fn iterate_with_table(
    start: &DensityProfile,
    params: &SystemParams,
    ladder: &ModeLadder,
    opts: &SolverOptions,
    table: &ModeTable,
) -> IterationOutcome {
    assert!(opts.tol > 0.0);
    assert!(opts.mixing > 0.0 && opts.mixing <= 1.0);
    let mut current = start.clone();
    let k_seed = ladder.k_center();
    for c in 0..current.n_cells() {
        let x = current.x(c);
        current.density[c] *= 1.0 + opts.seed_amplitude * (k_seed * x).cos();
    }
    let total = current.total();
    current.scale(1.0 / total);

    let mut residual = f64::INFINITY;
    let mut prev_residual = f64::INFINITY;
    let mut prev_ratio = f64::NAN;
    let mut cooled_until = ACCEL_MIN_ITER;
    for iteration in 1..=opts.max_iter {
        let theta = table.order_parameters(&current);
        let next = boltzmann_with_table(&theta, &current, params, ladder, table);
        // The residual is measured on the unmixed image so it vanishes only
        // at a true fixed point of the update.
        residual = next.l1_distance(&current);
        if residual < opts.tol {
            return IterationOutcome {
                profile: next,
                iterations: iteration,
                residual,
                converged: true,
            };
        }
        let ratio = residual / prev_residual;
        if iteration >= cooled_until && geometric_tail(ratio, prev_ratio, residual) {
            // Near a branch terminus the contraction factor approaches one
            // and plain iteration stalls; a stable geometric tail sums to
            // next + ratio / (1 - ratio) * (next - current), so jump there.
            let gain = ratio / (1.0 - ratio);
            for c in 0..current.n_cells() {
                let step = next.density[c] - current.density[c];
                current.density[c] = (next.density[c] + gain * step).max(0.0);
            }
            let total = current.total();
            current.scale(1.0 / total);
            cooled_until = iteration + ACCEL_COOLDOWN;
            prev_residual = f64::INFINITY;
            prev_ratio = f64::NAN;
            continue;
        }
        // Both profiles are normalized, so the mix stays normalized.
        for c in 0..current.n_cells() {
            current.density[c] =
                (1.0 - opts.mixing) * current.density[c] + opts.mixing * next.density[c];
        }
        prev_ratio = ratio;
        prev_residual = residual;
    }
    IterationOutcome {
        profile: current,
        iterations: opts.max_iter,
        residual,
        converged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

/// Stationary states along a pump-strength scan, each warm-started from
/// its predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Pump grid in sweep order (descending for a down sweep).
    pub zeta_tot: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub direction: SweepDirection,
    /// Converged profile at the last grid point, for chaining sweeps.
    pub last_profile: DensityProfile,
}

/// Scans `zeta_grid` (given ascending) in the requested direction,
/// starting from `start` and warm-starting every later point. Unconverged
/// points are recorded and the scan continues from their last iterate.
pub fn sweep(
    template: &SystemParams,
    ladder: &ModeLadder,
    zeta_grid: &[f64],
    direction: SweepDirection,
    start: &DensityProfile,
    opts: &SolverOptions,
) -> SweepResult {
    assert!(!zeta_grid.is_empty());
    assert!(
        zeta_grid.windows(2).all(|w| w[0] < w[1]),
        "pump grid must be strictly ascending"
    );
    let ordered: Vec<f64> = match direction {
        SweepDirection::Up => zeta_grid.to_vec(),
        SweepDirection::Down => zeta_grid.iter().rev().cloned().collect(),
    };
    let table = ModeTable::new(ladder, start);
    let mut profile = start.clone();
    let mut result = SweepResult {
        zeta_tot: ordered.clone(),
        theta_bar: Vec::with_capacity(ordered.len()),
        thetas: Vec::with_capacity(ordered.len()),
        iterations: Vec::with_capacity(ordered.len()),
        converged: Vec::with_capacity(ordered.len()),
        direction,
        last_profile: profile.clone(),
    };
    for &zeta_tot in &ordered {
        let params = SystemParams::with_zeta_tot(
            zeta_tot,
            template.kappa,
            template.delta_c,
            template.n_atoms,
            template.n_modes,
            template.delta_k_frac,
            template.trap_freq,
        )
        .expect("sweep template invalid");
        let outcome = iterate_with_table(&profile, &params, ladder, opts, &table);
        let order = OrderParameterSet::new(clamp_unit(table.order_parameters(&outcome.profile)));
        result.theta_bar.push(order.theta_bar());
        result.thetas.push(order.thetas().to_vec());
        result.iterations.push(outcome.iterations);
        result.converged.push(outcome.converged);
        // Warm-start the next point from the last iterate either way.
        profile = outcome.profile;
    }
    result.last_profile = profile;
    result
}

/// Up sweep from `start`, then the matching down sweep warm-started from
/// the highest-power stationary state.
pub fn hysteresis_sweep(
    template: &SystemParams,
    ladder: &ModeLadder,
    zeta_grid: &[f64],
    start: &DensityProfile,
    opts: &SolverOptions,
) -> (SweepResult, SweepResult) {
    let up = sweep(template, ladder, zeta_grid, SweepDirection::Up, start, opts);
    let down = sweep(
        template,
        ladder,
        zeta_grid,
        SweepDirection::Down,
        &up.last_profile,
        opts,
    );
    (up, down)
}

/// Pump strength at which Theta_bar crosses `cut`, linearly interpolated
/// between the bracketing grid points in sweep order. Works on rising and
/// falling branches alike; a branch ordered across the whole grid pins the
/// threshold to the low-zeta edge.
pub fn threshold_detect(result: &SweepResult, cut: f64) -> Result<f64, MeanFieldError> {
    assert!(cut > 0.0);
    let tb = &result.theta_bar;
    if tb.is_empty() {
        return Err(MeanFieldError::NoCrossing);
    }
    for k in 1..tb.len() {
        if (tb[k - 1] >= cut) != (tb[k] >= cut) {
            if !(result.converged[k - 1] && result.converged[k]) {
                return Err(MeanFieldError::UnconvergedBracket);
            }
            let frac = (cut - tb[k - 1]) / (tb[k] - tb[k - 1]);
            return Ok(
                result.zeta_tot[k - 1] + frac * (result.zeta_tot[k] - result.zeta_tot[k - 1])
            );
        }
    }
    if tb.iter().all(|t| *t >= cut) {
        let k_low = match result.direction {
            SweepDirection::Up => 0,
            SweepDirection::Down => tb.len() - 1,
        };
        if !result.converged[k_low] {
            return Err(MeanFieldError::UnconvergedBracket);
        }
        return Ok(result.zeta_tot[k_low]);
    }
    Err(MeanFieldError::NoCrossing)
}

/// Size and location of the largest jump between adjacent sweep points;
/// discriminates continuous onsets from first-order ones.
pub fn largest_step(result: &SweepResult) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for k in 1..result.theta_bar.len() {
        let jump = (result.theta_bar[k] - result.theta_bar[k - 1]).abs();
        let mid = 0.5 * (result.zeta_tot[k] + result.zeta_tot[k - 1]);
        if best.is_none_or(|(_, b)| jump > b) {
            best = Some((mid, jump));
        }
    }
    best
}

/// Threshold estimate for a cloud pre-ordered into a wavelength comb of
/// `n_lambda` sites: zeta_tot^c = 2 N^2 / sum_ij sinc(pi chi (i-j) / N).
pub fn analytic_threshold(chi: f64, n_lambda: usize) -> f64 {
    assert!(n_lambda >= 1);
    assert!(chi >= 0.0);
    let n = n_lambda as f64;
    let mut sum = 0.0;
    for i in 0..n_lambda {
        for j in 0..n_lambda {
            sum += sinc(std::f64::consts::PI * chi * (i as f64 - j as f64) / n);
        }
    }
    2.0 * n * n / sum
}

/// Light-shift potential seen by a single atom for fixed order parameters,
/// -2 k_B T_st zeta sum_m w_m^2 Theta_m cos(k_m x - phi_m).
pub fn mean_field_potential(
    x: f64,
    order: &OrderParameterSet,
    params: &SystemParams,
    ladder: &ModeLadder,
) -> f64 {
    assert_eq!(order.len(), ladder.len());
    let t_st = params
        .stationary_temperature()
        .expect("potential needs red detuning");
    let mut sum = 0.0;
    for m in 0..ladder.len() {
        let w = ladder.weights()[m];
        sum += w * w * order.theta(m) * ladder.mode_value(m, x);
    }
    -2.0 * t_st * params.zeta() * sum
}

/// Total potential energy U = -k_B T_st N M zeta Theta_bar^2 of a
/// configuration with the given order parameters.
pub fn total_potential_energy(order: &OrderParameterSet, params: &SystemParams) -> f64 {
    let t_st = params
        .stationary_temperature()
        .expect("potential needs red detuning");
    -t_st * params.n_atoms as f64 * order.len() as f64 * params.zeta() * order.theta_bar_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{order_parameters, ModeParity};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Modified Bessel function I_n by midpoint quadrature of
    /// (1/pi) integral_0^pi exp(z cos t) cos(n t) dt.
    fn bessel_i(n: u32, z: f64) -> f64 {
        let steps = 4000;
        let h = std::f64::consts::PI / steps as f64;
        let mut sum = 0.0;
        for s in 0..steps {
            let t = (s as f64 + 0.5) * h;
            sum += (z * t.cos()).exp() * (n as f64 * t).cos();
        }
        sum * h / std::f64::consts::PI
    }

    /// Self-consistent single-mode order parameter: the positive root of
    /// theta = I1(2 zeta theta) / I0(2 zeta theta), found by bisection.
    fn bessel_self_consistent(zeta: f64) -> f64 {
        let map = |theta: f64| bessel_i(1, 2.0 * zeta * theta) / bessel_i(0, 2.0 * zeta * theta);
        let mut lo = 1e-6;
        let mut hi = 1.0;
        assert!(map(lo) > lo, "no ordered branch at zeta = {zeta}");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if map(mid) > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn single_mode_params(zeta_tot: f64) -> SystemParams {
        SystemParams::with_zeta_tot(zeta_tot, 400.0, -400.0, 100, 1, 0.0, 0.0).unwrap()
    }

    fn pair_params(zeta_tot: f64) -> SystemParams {
        SystemParams::with_zeta_tot(zeta_tot, 400.0, -400.0, 100, 2, 0.0, 0.0).unwrap()
    }

    #[test]
    fn uniform_cloud_carries_no_order() {
        // Ladder commensurate with the interval: every mode integrates to
        // zero over the full width.
        let params = SystemParams::new(400.0, -400.0, 1.0, 10, 5, 0.125, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let profile = DensityProfile::uniform(8, 32);
        let set = profile_order_parameters(&profile, &ladder);
        for m in 0..ladder.len() {
            assert_abs_diff_eq!(set.theta(m), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn spike_reads_the_mode_phases() {
        // Odd cell count puts a cell midpoint exactly at x = 0.
        let params = SystemParams::new(400.0, -400.0, 1.0, 10, 4, 1e-3, 0.0).unwrap();
        let ladder = ModeLadder::comb(&params);
        let mut density = vec![0.0; 5 * 33];
        density[5 * 33 / 2] = 1.0;
        let profile = DensityProfile::from_density(5.0 * LAMBDA_C, density).unwrap();
        assert_abs_diff_eq!(profile.x(5 * 33 / 2), 0.0, epsilon = 1e-12);
        let set = profile_order_parameters(&profile, &ladder);
        for m in 0..ladder.len() {
            let expect = match ladder.parity(m) {
                ModeParity::Cosine => 1.0,
                ModeParity::Sine => 0.0,
            };
            assert_abs_diff_eq!(set.theta(m), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_grating_matches_fourier_factor() {
        let sigma = 0.05 * LAMBDA_C;
        let n_lambda = 10;
        let cells = n_lambda * 64;
        let width = n_lambda as f64 * LAMBDA_C;
        let mut density = vec![0.0; cells];
        for c in 0..cells {
            let x = -0.5 * width + (c as f64 + 0.5) * width / cells as f64;
            for j in -4..=4 {
                let d = x - j as f64 * LAMBDA_C;
                density[c] += (-d * d / (2.0 * sigma * sigma)).exp();
            }
        }
        let profile = DensityProfile::from_density(width, density).unwrap();
        let ladder = ModeLadder::single(1.0, ModeParity::Cosine);
        let set = profile_order_parameters(&profile, &ladder);
        assert_abs_diff_eq!(set.theta(0), (-0.5 * sigma * sigma).exp(), epsilon = 2e-3);
    }

    #[test]
    fn disorder_is_a_fixed_point_of_the_update() {
        let params = single_mode_params(1.7);
        let ladder = ModeLadder::comb(&params);
        let profile = DensityProfile::uniform(6, 32);
        let next = boltzmann_update(&profile, &params, &ladder);
        assert!(next.l1_distance(&profile) < 1e-12);
    }

    #[test]
    fn single_update_reproduces_bessel_ratio() {
        let params = single_mode_params(1.2);
        let ladder = ModeLadder::comb(&params);
        let template = DensityProfile::uniform(1, 64);
        let next = boltzmann_from_thetas(&[0.5], &template, &params, &ladder);
        let theta_out = profile_order_parameters(&next, &ladder).theta(0);
        let z = 2.0 * 1.2 * 0.5;
        assert_relative_eq!(
            theta_out,
            bessel_i(1, z) / bessel_i(0, z),
            max_relative = 1e-9
        );
    }

    #[test]
    fn deep_potential_peaks_narrow_as_expected() {
        // Saddle point: P ~ exp(-zeta Theta x^2) around each wavelength
        // site, so the local variance is 1/(2 zeta Theta).
        let zeta = 12.5;
        let params = single_mode_params(zeta);
        let ladder = ModeLadder::comb(&params);
        let template = DensityProfile::uniform(2, 128);
        let profile = boltzmann_from_thetas(&[1.0], &template, &params, &ladder);

        let mut peak_cell = 0;
        let mut peak_val = 0.0;
        for (c, &p) in profile.density().iter().enumerate() {
            if p > peak_val && profile.x(c).abs() < 0.5 * LAMBDA_C {
                peak_val = p;
                peak_cell = c;
            }
        }
        assert!(profile.x(peak_cell).abs() <= profile.dx());

        let mut weight = 0.0;
        let mut second = 0.0;
        for (c, &p) in profile.density().iter().enumerate() {
            let x = profile.x(c);
            if x.abs() < 0.5 * LAMBDA_C {
                weight += p;
                second += p * x * x;
            }
        }
        let variance = second / weight;
        assert_relative_eq!(variance, 1.0 / (2.0 * zeta), max_relative = 0.05);
    }

    #[test]
    fn below_threshold_iteration_returns_to_disorder() {
        let params = single_mode_params(0.5);
        let ladder = ModeLadder::comb(&params);
        let start = DensityProfile::uniform(4, 32);
        let fp = fixed_point(&start, &params, &ladder, &SolverOptions::default()).unwrap();
        assert!(fp.order.theta_bar() < 1e-6);
        assert!(fp.iterations < 100);
    }

    #[test]
    fn above_threshold_order_solves_bessel_self_consistency() {
        let params = single_mode_params(1.5);
        let ladder = ModeLadder::comb(&params);
        let start = DensityProfile::uniform(4, 32);
        let fp = fixed_point(&start, &params, &ladder, &SolverOptions::default()).unwrap();
        let oracle = bessel_self_consistent(1.5);
        assert_relative_eq!(fp.order.theta_bar(), oracle, max_relative = 1e-5);

        // Self-consistency: one more update barely moves the profile.
        let next = boltzmann_update(&fp.profile, &params, &ladder);
        assert!(next.l1_distance(&fp.profile) < 1e-8);
    }

    #[test]
    fn degenerate_pair_reduces_to_one_effective_mode() {
        // The pair potential is a single shifted cosine of amplitude
        // R = sqrt(Tc^2 + Ts^2), so R obeys the single-mode equation at the
        // per-mode pump zeta_tot/2; Theta_bar picks up the 1/sqrt(2).
        let params = pair_params(2.5);
        let ladder = ModeLadder::degenerate_pair(1.0);
        let start = DensityProfile::uniform(4, 32);
        let fp = fixed_point(&start, &params, &ladder, &SolverOptions::default()).unwrap();
        let r = (fp.order.theta(0).powi(2) + fp.order.theta(1).powi(2)).sqrt();
        let oracle = bessel_self_consistent(1.25);
        assert_relative_eq!(r, oracle, max_relative = 1e-5);
        assert_relative_eq!(
            fp.order.theta_bar(),
            r / 2.0f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn subthreshold_sweep_stays_disordered() {
        let template = pair_params(1.0);
        let ladder = ModeLadder::degenerate_pair(1.0);
        let start = DensityProfile::uniform(4, 32);
        let grid: Vec<f64> = (1..=7).map(|k| 0.2 * k as f64).collect();
        let opts = SolverOptions::default();
        let result = sweep(&template, &ladder, &grid, SweepDirection::Up, &start, &opts);
        assert!(result.converged.iter().all(|c| *c));
        assert!(result
            .theta_bar
            .iter()
            .all(|t| *t < 10.0 * opts.seed_amplitude));
    }

    #[test]
    fn smooth_onset_without_hysteresis_at_small_chi() {
        // Degenerate pair: threshold at zeta_tot = 2, continuous branch,
        // and up/down scans that coincide.
        let template = pair_params(1.0);
        let ladder = ModeLadder::degenerate_pair(1.0);
        let start = DensityProfile::uniform(8, 32);
        // The branch grows like sqrt(zeta - 2), so the first point past
        // threshold carries about sqrt(step / 2); a step of 0.025 keeps a
        // continuous branch visibly below any first-order jump.
        let grid: Vec<f64> = (0..=80).map(|k| 1.0 + 0.025 * k as f64).collect();
        let opts = SolverOptions::default();
        let (up, down) = hysteresis_sweep(&template, &ladder, &grid, &start, &opts);

        let up_threshold = threshold_detect(&up, 0.05).unwrap();
        assert_relative_eq!(up_threshold, 2.0, max_relative = 0.1);
        let (_, jump) = largest_step(&up).unwrap();
        assert!(jump < 0.15, "onset not continuous: jump {jump}");

        for (k, z) in down.zeta_tot.iter().enumerate() {
            let k_up = up.zeta_tot.iter().position(|zu| zu == z).unwrap();
            assert_abs_diff_eq!(down.theta_bar[k], up.theta_bar[k_up], epsilon = 0.02);
        }
    }

    #[test]
    fn threshold_detection_brackets_and_errors() {
        let synthetic = |theta_bar: Vec<f64>, converged: Vec<bool>| SweepResult {
            zeta_tot: vec![1.9, 2.0, 2.1, 2.2],
            thetas: theta_bar.iter().map(|t| vec![*t]).collect(),
            theta_bar,
            iterations: vec![1; 4],
            converged,
            direction: SweepDirection::Up,
            last_profile: DensityProfile::uniform(1, 32),
        };

        let r = synthetic(vec![0.0, 0.0, 0.3, 0.5], vec![true; 4]);
        let zc = threshold_detect(&r, 0.05).unwrap();
        assert!(zc > 2.0 && zc < 2.1, "zc = {zc}");
        assert_relative_eq!(zc, 2.0 + 0.05 / 0.3 * 0.1, max_relative = 1e-12);

        let flat = synthetic(vec![0.0; 4], vec![true; 4]);
        assert_eq!(
            threshold_detect(&flat, 0.05),
            Err(MeanFieldError::NoCrossing)
        );

        let shaky = synthetic(vec![0.0, 0.0, 0.3, 0.5], vec![true, true, false, true]);
        assert_eq!(
            threshold_detect(&shaky, 0.05),
            Err(MeanFieldError::UnconvergedBracket)
        );
    }

    #[test]
    fn threshold_detection_follows_a_falling_branch() {
        let falling = |zeta_tot: Vec<f64>, theta_bar: Vec<f64>| SweepResult {
            thetas: theta_bar.iter().map(|t| vec![*t]).collect(),
            iterations: vec![1; zeta_tot.len()],
            converged: vec![true; zeta_tot.len()],
            direction: SweepDirection::Down,
            last_profile: DensityProfile::uniform(1, 32),
            zeta_tot,
            theta_bar,
        };

        let r = falling(vec![2.2, 2.1, 2.0, 1.9], vec![0.5, 0.3, 0.0, 0.0]);
        let zc = threshold_detect(&r, 0.05).unwrap();
        assert_relative_eq!(zc, 2.1 - 0.1 * (0.3 - 0.05) / 0.3, max_relative = 1e-12);

        // Ordered across the whole grid: pinned to the low edge.
        let pinned = falling(vec![2.2, 2.1, 2.0, 1.9], vec![0.5, 0.4, 0.3, 0.2]);
        assert_eq!(threshold_detect(&pinned, 0.05), Ok(1.9));
    }

    #[test]
    fn analytic_threshold_limits_and_reduction() {
        assert_eq!(analytic_threshold(0.0, 1), 2.0);
        assert_eq!(analytic_threshold(0.0, 300), 2.0);

        // Strictly increasing in chi.
        let mut last = analytic_threshold(0.0, 50);
        for step in 1..=24 {
            let value = analytic_threshold(0.25 * step as f64, 50);
            assert!(
                value > last,
                "not increasing at chi = {}",
                0.25 * step as f64
            );
            last = value;
        }

        // O(N) regrouping of the double sum as an independent check.
        let n = 300;
        let chi = 6.39;
        let mut diag = n as f64;
        for d in 1..n {
            diag += 2.0 * (n - d) as f64 * sinc(std::f64::consts::PI * chi * d as f64 / n as f64);
        }
        let reduced = 2.0 * (n * n) as f64 / diag;
        assert_relative_eq!(analytic_threshold(chi, n), reduced, max_relative = 1e-12);
    }

    #[test]
    fn potential_energy_identities() {
        let params = pair_params(3.0);
        let ladder = ModeLadder::degenerate_pair(1.0);

        let disordered = OrderParameterSet::new(vec![0.0, 0.0]);
        assert_eq!(total_potential_energy(&disordered, &params), 0.0);

        let coincident = order_parameters(&[0.7; 9], &ladder);
        let t_st = params.stationary_temperature().unwrap();
        let expect = -t_st * params.n_atoms as f64 * 2.0 * params.zeta() / 2.0;
        assert_relative_eq!(
            total_potential_energy(&coincident, &params),
            expect,
            max_relative = 1e-12
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 30.0).collect();
        let set = order_parameters(&xs, &ladder);
        let u = total_potential_energy(&set, &params);
        let sum_sq: f64 = set.thetas().iter().map(|t| t * t).sum();
        assert_relative_eq!(
            -u / (t_st * params.n_atoms as f64 * params.zeta()),
            sum_sq,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mean_field_potential_tracks_order_parameters() {
        let params = single_mode_params(1.5);
        let ladder = ModeLadder::comb(&params);
        let set = OrderParameterSet::new(vec![0.4]);
        let t_st = params.stationary_temperature().unwrap();
        let at = |x: f64| mean_field_potential(x, &set, &params, &ladder);
        assert_relative_eq!(
            at(0.0),
            -2.0 * t_st * params.zeta() * 0.4,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            at(std::f64::consts::PI),
            2.0 * t_st * params.zeta() * 0.4,
            max_relative = 1e-12
        );
    }

    proptest! {
        // The update must return a normalized, nonnegative profile for
        // any input order parameters, including overflow-deep potentials.
        #[test]
        fn update_preserves_normalization(
            theta in -1.0..1.0f64,
            zeta_tot in 0.0..500.0f64,
            seed in 0u64..100,
        ) {
            let params = single_mode_params(zeta_tot);
            let ladder = ModeLadder::comb(&params);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cells: Vec<f64> = (0..64).map(|_| rng.random::<f64>() + 1e-3).collect();
            let template = DensityProfile::from_density(LAMBDA_C, cells).unwrap();
            let out = boltzmann_from_thetas(&[theta], &template, &params, &ladder);
            prop_assert!(out.density().iter().all(|p| p.is_finite() && *p >= 0.0));
            let total: f64 = out.density().iter().sum::<f64>() * out.dx();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
