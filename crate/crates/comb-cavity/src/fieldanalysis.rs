//! Field observables: spatial profiles, quadrature readout of the order
//! parameters, and the time-domain output pulse train.
//!
//! Spatial profiles live on the cavity axis in the internal units where the
//! carrier wavelength is 2 pi. Pulse traces live on the round-trip time axis
//! in units of L/c, so one period spans tau in [0, 2): successive comb lines
//! advance in phase by pi per cavity transit.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::model::SystemParams;
use crate::modes::{ModeLadder, OrderParameterSet};

/// Carrier wavelength in internal units (k_c = 1).
const LAMBDA_C: f64 = TAU;

/// One cavity round trip in units of L/c.
pub const ROUND_TRIP: f64 = 2.0;

/// Fraction of the trace maximum below which local maxima are ignored.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.25;

/// Minimum number of envelope cells per carrier wavelength.
const MIN_WINDOW_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    /// The quadrature readout divides by the pump coupling.
    #[error("pump coupling is zero; order parameters cannot be read from the fields")]
    ZeroCoupling,
    /// The smoothing window must tile the carrier wavelength exactly.
    #[error("grid spacing {dx} does not tile one wavelength with at least {MIN_WINDOW_CELLS} whole cells")]
    MisalignedGrid { dx: f64 },
    #[error("field grid has {got} samples, the smoothing window needs {needed}")]
    GridTooShort { needed: usize, got: usize },
    #[error("trace needs at least {needed} samples for {n_modes} modes, got {got}")]
    UndersampledTrace {
        needed: usize,
        got: usize,
        n_modes: usize,
    },
    #[error("no local maxima above the detection threshold")]
    NoPeaks,
    #[error("cannot average an empty set of field snapshots")]
    EmptyAverage,
}

/// Mean intracavity field profile F(x) = (1/M) sum_m Theta_m cos(k_m x - phi_m).
pub fn field_distribution(
    order: &OrderParameterSet,
    ladder: &ModeLadder,
    grid: &[f64],
) -> Vec<f64> {
    assert_eq!(order.len(), ladder.len(), "one order parameter per mode");
    let norm = 1.0 / ladder.len() as f64;
    grid.iter()
        .map(|&x| {
            let sum: f64 = (0..ladder.len())
                .map(|m| order.theta(m) * ladder.mode_value(m, x))
                .sum();
            sum * norm
        })
        .collect()
}

/// Root-mean-square envelope of a field profile, averaged over a rectangular
/// window exactly one carrier wavelength wide.
///
/// The window must hold a whole number (>= 16) of grid cells so that the
/// carrier averages out identically. Returns `(window centre, envelope)` for
/// every position where the full window fits, so the output is one window
/// shorter than the input.
pub fn smoothed_envelope(field: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>, AnalysisError> {
    assert_eq!(field.len(), grid.len(), "one field sample per grid point");
    if grid.len() < 2 {
        return Err(AnalysisError::GridTooShort {
            needed: MIN_WINDOW_CELLS,
            got: grid.len(),
        });
    }
    let dx = grid[1] - grid[0];
    assert!(dx > 0.0, "grid must be ascending");
    assert!(
        grid.windows(2)
            .all(|w| ((w[1] - w[0]) - dx).abs() <= 1e-9 * dx),
        "grid must be uniform"
    );
    let window = (LAMBDA_C / dx).round() as usize;
    if window < MIN_WINDOW_CELLS || (window as f64 * dx - LAMBDA_C).abs() > 1e-9 * LAMBDA_C {
        return Err(AnalysisError::MisalignedGrid { dx });
    }
    if field.len() < window {
        return Err(AnalysisError::GridTooShort {
            needed: window,
            got: field.len(),
        });
    }
    let inv = 1.0 / window as f64;
    Ok((0..=field.len() - window)
        .map(|j| {
            let mean_sq: f64 = field[j..j + window].iter().map(|f| f * f).sum::<f64>() * inv;
            let centre = 0.5 * (grid[j] + grid[j + window - 1]);
            (centre, mean_sq.sqrt())
        })
        .collect())
}

/// Reads the order parameters off the complex mode amplitudes by undoing the
/// phase and magnitude of the adiabatic cavity response.
///
/// Exact for fields slaved to a static atomic configuration; for fluctuating
/// fields the estimate is unbiased and should be time averaged. With
/// non-unit ladder weights the estimate returns `w_m * Theta_m`.
pub fn order_from_quadrature(
    fields: &[Complex64],
    params: &SystemParams,
) -> Result<Vec<f64>, AnalysisError> {
    if params.eta == 0.0 {
        return Err(AnalysisError::ZeroCoupling);
    }
    let response = Complex64::new(params.delta_c, params.kappa);
    let rotation = Complex64::from_polar(1.0, -response.inv().arg());
    let scale = response.norm() / (params.n_atoms as f64 * params.eta.abs());
    Ok(fields.iter().map(|&a| (a * rotation).re * scale).collect())
}

/// One round-trip window of the cavity output intensity, uniformly sampled.
/// Times are in units of L/c; the pattern repeats with period [`ROUND_TRIP`].
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrace {
    times: Vec<f64>,
    intensity: Vec<f64>,
}

impl PulseTrace {
    /// Wraps an externally produced trace. Times must be uniform, ascending
    /// and within [0, 2); intensities finite and nonnegative.
    pub fn from_samples(times: Vec<f64>, intensity: Vec<f64>) -> PulseTrace {
        assert_eq!(times.len(), intensity.len(), "one intensity per time");
        assert!(!times.is_empty(), "trace cannot be empty");
        assert!(
            times[0] >= 0.0 && *times.last().unwrap() < ROUND_TRIP,
            "times must lie in [0, 2)"
        );
        if times.len() > 1 {
            let dt = times[1] - times[0];
            assert!(dt > 0.0, "times must be ascending");
            assert!(
                times
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt),
                "times must be uniform"
            );
        }
        assert!(
            intensity.iter().all(|i| i.is_finite() && *i >= 0.0),
            "intensity must be finite and nonnegative"
        );
        PulseTrace { times, intensity }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean_intensity(&self) -> f64 {
        self.intensity.iter().sum::<f64>() / self.intensity.len() as f64
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensity.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Interference of the comb lines over one round trip: I(tau) with the
/// common optical carrier factored out, so only the line offsets within the
/// comb set the beat pattern.
pub fn output_intensity(
    fields: &[Complex64],
    ladder: &ModeLadder,
    samples: usize,
) -> Result<PulseTrace, AnalysisError> {
    assert_eq!(fields.len(), ladder.len(), "one amplitude per mode");
    let needed = 4 * ladder.len();
    if samples < needed {
        return Err(AnalysisError::UndersampledTrace {
            needed,
            got: samples,
            n_modes: ladder.len(),
        });
    }
    let offsets = line_offsets(ladder);
    let times: Vec<f64> = (0..samples)
        .map(|s| ROUND_TRIP * s as f64 / samples as f64)
        .collect();
    let intensity = times
        .iter()
        .map(|&tau| {
            let amp: Complex64 = fields
                .iter()
                .zip(&offsets)
                .map(|(&a, &d)| a * Complex64::from_polar(1.0, -PI * d * tau))
                .sum();
            amp.norm_sqr()
        })
        .collect();
    Ok(PulseTrace { times, intensity })
}

/// Incoherent average of single-shot pulse trains over a set of field
/// snapshots, for output records of fluctuating dynamics.
pub fn output_intensity_averaged(
    snapshots: &[Vec<Complex64>],
    ladder: &ModeLadder,
    samples: usize,
) -> Result<PulseTrace, AnalysisError> {
    if snapshots.is_empty() {
        return Err(AnalysisError::EmptyAverage);
    }
    let mut trace = output_intensity(&snapshots[0], ladder, samples)?;
    for snap in &snapshots[1..] {
        let next = output_intensity(snap, ladder, samples)?;
        for (acc, i) in trace.intensity.iter_mut().zip(&next.intensity) {
            *acc += i;
        }
    }
    let inv = 1.0 / snapshots.len() as f64;
    for i in &mut trace.intensity {
        *i *= inv;
    }
    Ok(trace)
}

/// Integer line index of each mode relative to the first, from the comb
/// spacing. Degenerate ladders (zero spacing) beat at a single frequency.
fn line_offsets(ladder: &ModeLadder) -> Vec<f64> {
    let dk = ladder.delta_k();
    let k0 = ladder.wavenumbers()[0];
    ladder
        .wavenumbers()
        .iter()
        .map(|&k| {
            if dk == 0.0 {
                0.0
            } else {
                let d = (k - k0) / dk;
                let r = d.round();
                assert!(
                    (d - r).abs() < 1e-6,
                    "comb lines must sit on an equidistant grid"
                );
                r
            }
        })
        .collect()
}

/// Peak census of one round-trip window of the output intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseMetrics {
    pub n_peaks: usize,
    /// Peak positions in units of L/c, ascending within [0, 2).
    pub peak_times: Vec<f64>,
    /// Full width at half maximum of each peak, in the same order.
    pub peak_widths: Vec<f64>,
    /// True when the cyclic gaps between peaks agree with 2/n_peaks to 10%.
    pub equispaced: bool,
    /// Round trip / n_peaks; present only for equispaced trains.
    pub repetition_period: Option<f64>,
}

/// Detects local maxima above `threshold` (fraction of the trace maximum,
/// default [`DEFAULT_PEAK_THRESHOLD`]) and classifies their spacing. The
/// trace is treated as one period of a cyclic signal.
pub fn pulse_metrics(
    trace: &PulseTrace,
    threshold: Option<f64>,
) -> Result<PulseMetrics, AnalysisError> {
    let frac = threshold.unwrap_or(DEFAULT_PEAK_THRESHOLD);
    assert!(
        frac > 0.0 && frac <= 1.0,
        "threshold fraction must lie in (0, 1]"
    );
    let intensity = trace.intensity();
    let n = intensity.len();
    let max = trace.max_intensity();
    if n < 3 || max <= 0.0 {
        return Err(AnalysisError::NoPeaks);
    }
    let cut = frac * max;
    let peaks: Vec<usize> = (0..n)
        .filter(|&j| {
            let prev = intensity[(j + n - 1) % n];
            let next = intensity[(j + 1) % n];
            intensity[j] >= cut && intensity[j] > prev && intensity[j] > next
        })
        .collect();
    if peaks.is_empty() {
        return Err(AnalysisError::NoPeaks);
    }
    let dt = trace.times[1] - trace.times[0];
    let peak_times: Vec<f64> = peaks.iter().map(|&j| trace.times[j]).collect();
    let peak_widths: Vec<f64> = peaks
        .iter()
        .map(|&j| half_max_width(intensity, j, dt))
        .collect();
    let n_peaks = peaks.len();
    let mean_gap = ROUND_TRIP / n_peaks as f64;
    let equispaced = if n_peaks == 1 {
        true
    } else {
        let mut gaps: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(ROUND_TRIP - peak_times[n_peaks - 1] + peak_times[0]);
        gaps.iter().all(|g| (g - mean_gap).abs() <= 0.1 * mean_gap)
    };
    Ok(PulseMetrics {
        n_peaks,
        peak_times,
        peak_widths,
        equispaced,
        repetition_period: equispaced.then_some(mean_gap),
    })
}

/// Cyclic full width at half maximum around one sample index, with linear
/// interpolation at the crossings. Peaks that never fall below half maximum
/// report one full period.
fn half_max_width(intensity: &[f64], peak: usize, dt: f64) -> f64 {
    let n = intensity.len();
    let half = 0.5 * intensity[peak];
    let cross = |dir: isize| -> Option<f64> {
        let mut prev = peak;
        for step in 1..n {
            let j = (peak as isize + dir * step as isize).rem_euclid(n as isize) as usize;
            if intensity[j] < half {
                let frac = (intensity[prev] - half) / (intensity[prev] - intensity[j]);
                return Some((step - 1) as f64 + frac);
            }
            prev = j;
        }
        None
    };
    match (cross(1), cross(-1)) {
        (Some(right), Some(left)) => ((right + left) * dt).min(ROUND_TRIP),
        _ => ROUND_TRIP,
    }
}
