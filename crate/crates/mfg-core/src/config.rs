//! Experiment description: everything a run needs, in one JSON document.
//!
//! A config pins the lattice, the kinetic metric `A = kappa g`, the cost
//! expansion coefficients, the stationary boundary traces, the boundary
//! perturbation directions, and optional probe / reconstruction settings.
//! The canonical hash of the document (sorted-key JSON, SHA-256) is embedded
//! in every artifact the run produces, so outputs can always be traced back
//! to their inputs.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::fields::{Grid, MetricField, ScalarField};

/// Closed-form spatial profile, or literal node values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * prod_a sin(2 pi freq_a s_a + phase_a)` where
    /// `s_a` is the axis coordinate rescaled to `[0, 1]`.  Axes with zero
    /// frequency contribute a factor 1.
    SineProduct {
        mean: f64,
        amplitude: f64,
        frequency: [u32; 2],
        #[serde(default)]
        phase: [f64; 2],
    },
    /// `offset + amplitude * cos^2(pi r / (2 radius))` inside the ball of
    /// the given radius around the center, `offset` outside; continuously
    /// differentiable at the rim.
    CosineBump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Literal values, one per lattice node, row-major with axis 0 slowest.
    Nodes {
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn evaluate_at(&self, grid: &Grid, x: [f64; 2]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::SineProduct {
                mean,
                amplitude,
                frequency,
                phase,
            } => {
                let mut factor = 1.0;
                for a in 0..grid.dim() {
                    if frequency[a] == 0 {
                        continue;
                    }
                    let [lo, hi] = grid.extent()[a];
                    let s = (x[a] - lo) / (hi - lo);
                    factor *=
                        (2.0 * std::f64::consts::PI * frequency[a] as f64 * s + phase[a]).sin();
                }
                mean + amplitude * factor
            }
            Profile::CosineBump {
                center,
                radius,
                amplitude,
                offset,
            } => {
                let mut r2 = 0.0;
                for a in 0..grid.dim() {
                    let d = x[a] - center[a];
                    r2 += d * d;
                }
                let r = r2.sqrt();
                if r >= *radius {
                    *offset
                } else {
                    let c = (std::f64::consts::FRAC_PI_2 * r / radius).cos();
                    offset + amplitude * c * c
                }
            }
            Profile::Nodes { .. } => {
                unreachable!("node profiles are evaluated through evaluate()")
            }
        }
    }

    pub fn evaluate(&self, grid: &Arc<Grid>) -> Result<ScalarField, ConfigError> {
        if let Profile::Nodes { values } = self {
            return ScalarField::new(grid.clone(), values.clone())
                .map_err(|e| ConfigError::Validation(format!("node profile: {e}")));
        }
        Ok(ScalarField::from_fn(grid.clone(), |x| {
            self.evaluate_at(grid, x)
        }))
    }
}

/// Closed-form time envelope on `[0, T]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    Constant { value: f64 },
    /// `((T - t) / T)^power`; vanishes at the final time.
    RampDown { power: u32 },
    /// `(t / T)^power`; vanishes at the initial time.
    RampUp { power: u32 },
    /// `sin^2(pi (t/T - start) / (end - start))` inside `(start, end)`
    /// (fractions of the horizon), zero outside.
    TimeBump { start: f64, end: f64 },
}

impl Envelope {
    pub fn evaluate(&self, t: f64, horizon: f64) -> f64 {
        let s = t / horizon;
        match self {
            Envelope::Constant { value } => *value,
            Envelope::RampDown { power } => (1.0 - s).max(0.0).powi(*power as i32),
            Envelope::RampUp { power } => s.max(0.0).powi(*power as i32),
            Envelope::TimeBump { start, end } => {
                if s <= *start || s >= *end {
                    0.0
                } else {
                    let w = (s - start) / (end - start);
                    let v = (std::f64::consts::PI * w).sin();
                    v * v
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Per-axis `[lo, hi]`; one entry in 1D, two in 2D.
    pub extent: Vec<[f64; 2]>,
    pub n_cells: Vec<usize>,
    pub t_horizon: f64,
    pub n_time: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<Grid>, ConfigError> {
        let bad = |msg: String| ConfigError::Validation(msg);
        let grid = match self.dim {
            1 => {
                let e = self.extent.first().ok_or_else(|| bad("extent empty".into()))?;
                let n = *self.n_cells.first().ok_or_else(|| bad("n_cells empty".into()))?;
                Grid::new_1d(e[0], e[1], n, self.t_horizon, self.n_time)
            }
            2 => {
                if self.extent.len() < 2 || self.n_cells.len() < 2 {
                    return Err(bad("two-dimensional grid needs two axis entries".into()));
                }
                Grid::new_2d(
                    [self.extent[0], self.extent[1]],
                    [self.n_cells[0], self.n_cells[1]],
                    self.t_horizon,
                    self.n_time,
                )
            }
            d => return Err(bad(format!("unsupported dimension {d}"))),
        };
        grid.map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

/// Known base tensor of the kinetic metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseMetric {
    Identity,
    Diagonal { first: Profile, second: Profile },
    Full {
        a11: Profile,
        a12: Profile,
        a22: Profile,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub base: BaseMetric,
    pub kappa: Profile,
}

impl MetricConfig {
    pub fn build(&self, grid: &Arc<Grid>) -> Result<MetricField, ConfigError> {
        let kappa = self.kappa.evaluate(grid)?.into_values();
        let wrap = |e: crate::error::FieldError| ConfigError::Validation(e.to_string());
        match &self.base {
            BaseMetric::Identity => MetricField::isotropic(grid.clone(), kappa).map_err(wrap),
            BaseMetric::Diagonal { first, second } => {
                let g11 = first.evaluate(grid)?;
                let g22 = second.evaluate(grid)?;
                let packed = grid.dim() * (grid.dim() + 1) / 2;
                let mut base = vec![0.0; grid.n_nodes() * packed];
                for node in 0..grid.n_nodes() {
                    base[node * packed] = g11.at(node);
                    if grid.dim() == 2 {
                        base[node * packed + 2] = g22.at(node);
                    }
                }
                MetricField::new(grid.clone(), base, kappa).map_err(wrap)
            }
            BaseMetric::Full { a11, a12, a22 } => {
                if grid.dim() != 2 {
                    return Err(ConfigError::Validation(
                        "full base tensor requires a two-dimensional grid".into(),
                    ));
                }
                let f11 = a11.evaluate(grid)?;
                let f12 = a12.evaluate(grid)?;
                let f22 = a22.evaluate(grid)?;
                let mut base = vec![0.0; grid.n_nodes() * 3];
                for node in 0..grid.n_nodes() {
                    base[node * 3] = f11.at(node);
                    base[node * 3 + 1] = f12.at(node);
                    base[node * 3 + 2] = f22.at(node);
                }
                MetricField::new(grid.clone(), base, kappa).map_err(wrap)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficient {
    /// Expansion order `k >= 2`.
    pub order: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub coefficients: Vec<CostCoefficient>,
}

/// Dirichlet traces pinning the stationary pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub u_trace: Profile,
    pub m_trace: Profile,
}

/// One boundary perturbation direction: space profile times time envelope for
/// the value-side and density-side data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub label: String,
    pub u_space: Profile,
    pub u_time: Envelope,
    pub m_space: Profile,
    pub m_time: Envelope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Unit ray direction (second component ignored in 1D).
    pub zeta: [f64; 2],
    /// Spatial frequency ladder used by the decay diagnostics.
    pub rho_values: Vec<f64>,
    /// Time frequency of the oscillatory factor.
    #[serde(default)]
    pub tau: f64,
    /// Transverse integer modes to synthesize (2D only; 1D uses the mean).
    #[serde(default)]
    pub xi_modes: Vec<i64>,
    /// Support of the time window as fractions of the horizon.
    #[serde(default = "default_chi_start")]
    pub chi_start: f64,
    #[serde(default = "default_chi_end")]
    pub chi_end: f64,
}

fn default_chi_start() -> f64 {
    0.2
}
fn default_chi_end() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Output least squares on the first-order value equation.
    Variational,
    /// Oscillatory boundary functionals plus Fourier synthesis.
    Probe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSettings {
    pub mode: RecoveryMode,
    /// Perturbation sizes for the divided-difference ladder, descending.
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub tikhonov_lambda: f64,
    /// Pick the penalty weight from the noise level instead of using
    /// `tikhonov_lambda` directly.
    #[serde(default)]
    pub discrepancy_principle: bool,
    /// Relative noise injected into linearized boundary records.
    #[serde(default)]
    pub noise_level: f64,
    /// Highest cost coefficient order to recover (2..=4).
    #[serde(default = "default_max_order")]
    pub max_cost_order: usize,
}

fn default_lambda() -> f64 {
    1e-8
}
fn default_max_order() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub metric: MetricConfig,
    pub cost: CostConfig,
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub perturbations: Vec<PerturbationConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub reconstruction: Option<ReconstructionSettings>,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Validation(msg));
        if !(1..=2).contains(&self.grid.dim) {
            return bad(format!("dimension must be 1 or 2, got {}", self.grid.dim));
        }
        for c in &self.cost.coefficients {
            if c.order < 2 {
                return bad(format!(
                    "cost coefficient order must be at least 2, got {}",
                    c.order
                ));
            }
        }
        if let Some(r) = &self.reconstruction {
            if r.epsilons.is_empty() {
                return bad("reconstruction needs at least one perturbation size".into());
            }
            if r.epsilons.iter().any(|&e| e <= 0.0) {
                return bad("perturbation sizes must be positive".into());
            }
            if r.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                return bad("perturbation sizes must be strictly descending".into());
            }
            if !(2..=4).contains(&r.max_cost_order) {
                return bad(format!(
                    "max_cost_order must lie in 2..=4, got {}",
                    r.max_cost_order
                ));
            }
            if r.noise_level < 0.0 {
                return bad("noise level must be non-negative".into());
            }
        }
        if let Some(p) = &self.probe {
            if p.rho_values.is_empty() {
                return bad("probe block needs at least one frequency".into());
            }
            if !(0.0..1.0).contains(&p.chi_start) || !(p.chi_start..=1.0).contains(&p.chi_end) {
                return bad("probe time window must satisfy 0 <= start < end <= 1".into());
            }
        }
        // Building the grid exercises its own validation.
        self.grid.build().map(|_| ())
    }

    /// Canonical SHA-256 of the sorted-key JSON form, hex-encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
