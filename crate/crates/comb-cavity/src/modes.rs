//! Mode-ladder geometry, order parameters, and the cloud-bandwidth
//! parameter chi.
//!
//! A driven comb is a set of equidistant lines k_m around the centre
//! wavenumber, with mode functions cos(k_m x - phi_m) whose phases
//! alternate between 0 and pi/2, as consecutive standing waves of a linear
//! resonator do. Only k_m and the parity are stored; absolute longitudinal
//! mode indices never enter any formula.

use crate::model::SystemParams;

/// Whether a mode function is cos(k x) or sin(k x).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeParity {
    Cosine,
    Sine,
}

impl ModeParity {
    /// Phase offset phi with mode function cos(k x - phi).
    pub fn phase(self) -> f64 {
        match self {
            ModeParity::Cosine => 0.0,
            ModeParity::Sine => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// The set of driven cavity modes: equidistant wavenumbers, alternating
/// parities, and a per-line coupling weight (uniform rectangle by default).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLadder {
    wavenumbers: Vec<f64>,
    parities: Vec<ModeParity>,
    weights: Vec<f64>,
    delta_k: f64,
}

impl ModeLadder {
    /// Builds the comb described by `params`: M lines centred on
    /// `k_center`, spacing `delta_k_frac`, rectangular weights, parities
    /// alternating cosine first.
    ///
    /// # Panics
    /// If `params` fails its own validation.
    pub fn comb(params: &SystemParams) -> ModeLadder {
        params
            .validate()
            .expect("comb built from invalid parameters");
        let m = params.n_modes;
        let half_span = 0.5 * (m as f64 - 1.0);
        let wavenumbers = (0..m)
            .map(|i| params.k_center + (i as f64 - half_span) * params.delta_k_frac)
            .collect();
        let parities = (0..m)
            .map(|i| {
                if i % 2 == 0 {
                    ModeParity::Cosine
                } else {
                    ModeParity::Sine
                }
            })
            .collect();
        ModeLadder {
            wavenumbers,
            parities,
            weights: vec![1.0; m],
            delta_k: params.delta_k_frac,
        }
    }

    /// One mode at wavenumber `k`.
    pub fn single(k: f64, parity: ModeParity) -> ModeLadder {
        ModeLadder {
            wavenumbers: vec![k],
            parities: vec![parity],
            weights: vec![1.0],
            delta_k: 0.0,
        }
    }

    /// Cosine plus sine mode at the same wavenumber. This pair makes the
    /// light-shift potential translationally invariant, which is the
    /// natural reference when studying self-ordering without a preferred
    /// origin.
    pub fn degenerate_pair(k: f64) -> ModeLadder {
        ModeLadder {
            wavenumbers: vec![k, k],
            parities: vec![ModeParity::Cosine, ModeParity::Sine],
            weights: vec![1.0, 1.0],
            delta_k: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn parity(&self, m: usize) -> ModeParity {
        self.parities[m]
    }

    pub fn phase(&self, m: usize) -> f64 {
        self.parities[m].phase()
    }

    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    /// Spectral width Delta k = M * delta k covered by the rectangle of lines.
    pub fn bandwidth(&self) -> f64 {
        self.len() as f64 * self.delta_k
    }

    /// Midpoint of the line set.
    pub fn k_center(&self) -> f64 {
        0.5 * (self.wavenumbers[0] + self.wavenumbers[self.len() - 1])
    }

    /// Mode function cos(k_m x - phi_m).
    pub fn mode_value(&self, m: usize, x: f64) -> f64 {
        let arg = self.wavenumbers[m] * x;
        match self.parities[m] {
            ModeParity::Cosine => arg.cos(),
            ModeParity::Sine => arg.sin(),
        }
    }

    /// Spatial derivative of the mode function, -k_m sin(k_m x - phi_m).
    pub fn mode_slope(&self, m: usize, x: f64) -> f64 {
        let k = self.wavenumbers[m];
        let arg = k * x;
        match self.parities[m] {
            ModeParity::Cosine => -k * arg.sin(),
            ModeParity::Sine => k * arg.cos(),
        }
    }
}

/// Ratio chi = w * Delta_k / (2 pi) of cloud size to the length scale set
/// by the comb bandwidth. Small chi: all modes stay in phase across the
/// cloud. Large chi: distant lines dephase and only local clusters order.
pub fn chi(cloud_width: f64, bandwidth: f64) -> f64 {
    assert!(cloud_width > 0.0, "chi needs a positive cloud width");
    assert!(bandwidth >= 0.0, "chi needs a nonnegative bandwidth");
    cloud_width * bandwidth / std::f64::consts::TAU
}

/// Per-mode order parameters Theta_m together with their root mean square.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderParameterSet {
    theta: Vec<f64>,
    theta_bar: f64,
}

impl OrderParameterSet {
    /// Wraps per-mode values, deriving Theta_bar^2 = (1/M) sum Theta_m^2.
    pub fn new(theta: Vec<f64>) -> OrderParameterSet {
        assert!(!theta.is_empty(), "need at least one mode");
        debug_assert!(theta.iter().all(|t| t.abs() <= 1.0 + 1e-12));
        let theta_bar_sq = theta.iter().map(|t| t * t).sum::<f64>() / theta.len() as f64;
        OrderParameterSet {
            theta,
            theta_bar: theta_bar_sq.sqrt(),
        }
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta(&self, m: usize) -> f64 {
        self.theta[m]
    }

    pub fn theta_bar(&self) -> f64 {
        self.theta_bar
    }

    pub fn theta_bar_sq(&self) -> f64 {
        self.theta_bar * self.theta_bar
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Exact per-mode bunching parameters Theta_m = (1/N) sum_i cos(k_m x_i - phi_m),
/// by direct O(N M) summation.
pub fn order_parameters(positions: &[f64], ladder: &ModeLadder) -> OrderParameterSet {
    assert!(!positions.is_empty(), "need at least one atom");
    let n_inv = 1.0 / positions.len() as f64;
    let theta = (0..ladder.len())
        .map(|m| {
            positions
                .iter()
                .map(|&x| ladder.mode_value(m, x))
                .sum::<f64>()
                * n_inv
        })
        .collect();
    OrderParameterSet::new(theta)
}

/// Dense-comb estimate of Theta_bar^2 from atom pair separations alone:
///
///   (1 / 2 N^2) sum_ij sinc(pi (x_i - x_j) chi / w) cos(x_i - x_j)
///
/// with the centre wavenumber at its unit value. Replaces the finite line
/// sum by its bandwidth envelope, so it is accurate when adjacent lines do
/// not dephase across the cloud (w * delta_k well below pi).
pub fn theta_bar_sq_sinc(positions: &[f64], cloud_width: f64, chi: f64) -> f64 {
    assert!(!positions.is_empty(), "need at least one atom");
    assert!(cloud_width > 0.0, "need a positive cloud width");
    let n = positions.len();
    let rate = std::f64::consts::PI * chi / cloud_width;
    // Diagonal terms contribute the incoherent floor 1/(2N).
    let mut total = n as f64 * 0.5;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = positions[i] - positions[j];
            total += sinc(rate * d) * d.cos();
        }
    }
    total / (n * n) as f64
}

/// sin(x)/x with its removable singularity filled in; small arguments use
/// a 2-term Taylor expansion.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
