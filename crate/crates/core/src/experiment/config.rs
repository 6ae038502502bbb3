//! Experiment configuration.
//!
//! Configurations are TOML documents with one table per concern. Unknown keys
//! are rejected so that typos surface instead of silently falling back to
//! defaults. See `configs/table1.toml` for the documented schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CircleGrid;
use crate::observer::ObserverGains;
use crate::plant::{Activation, InputSignal, PlantParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub plant: PlantConfig,
    pub inputs: InputConfig,
    pub gains: GainConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default)]
    pub pe: PeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationChoice {
    Tanh,
    Logistic,
}

impl ActivationChoice {
    pub fn activation(self) -> Activation {
        match self {
            Self::Tanh => Activation::tanh(),
            Self::Logistic => Activation::logistic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub omega11: f64,
    pub omega12: f64,
    pub omega21: f64,
    pub omega22: f64,
    pub sigma: f64,
    pub activation: ActivationChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// `amplitude * sin(lambda_i * t * r)`
    Sinusoidal,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub kind: InputKind,
    pub amplitude: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainConfig {
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub t_final: f64,
    /// Spacing of the error records.
    #[serde(default = "default_sample_stride")]
    pub sample_stride: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_sample_stride() -> f64 {
    1.0
}
fn default_rtol() -> f64 {
    1e-6
}
fn default_atol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Times at which the kernel estimates are written out.
    pub times: Vec<f64>,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 250.0, 500.0, 1000.0],
        }
    }
}

/// Recording and scanning of the regressor `(S1(zh1), S2(z2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeConfig {
    /// The regressor is stored on `[0, horizon]` only.
    #[serde(default = "default_pe_horizon")]
    pub horizon: f64,
    #[serde(default = "default_pe_stride")]
    pub sample_stride: f64,
    #[serde(default = "default_pe_window")]
    pub window: f64,
    /// Spacing of the window start times.
    #[serde(default = "default_pe_scan_stride")]
    pub scan_stride: f64,
    #[serde(default = "default_pe_kappa")]
    pub kappa: f64,
}

fn default_pe_horizon() -> f64 {
    200.0
}
fn default_pe_stride() -> f64 {
    0.05
}
fn default_pe_window() -> f64 {
    50.0
}
fn default_pe_scan_stride() -> f64 {
    5.0
}
fn default_pe_kappa() -> f64 {
    1e-6
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            horizon: default_pe_horizon(),
            sample_stride: default_pe_stride(),
            window: default_pe_window(),
            scan_stride: default_pe_scan_stride(),
            kappa: default_pe_kappa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs/default"),
        }
    }
}

/// Configurations shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("table1", include_str!("../../configs/table1.toml")),
    ("table1_ci", include_str!("../../configs/table1_ci.toml")),
    ("zero_input", include_str!("../../configs/zero_input.toml")),
];

impl ExperimentConfig {
    /// Parses and validates a configuration document. `origin` only labels
    /// error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "no bundled configuration named {name:?} (available: {})",
                names.join(", ")
            ))
        })?;
        Self::from_toml_str(text, Path::new(&format!("<bundled {name}>")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Checks every constraint and reports all violations at once, each
    /// prefixed with its key path.
    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        v.positive_int("grid.n_points", self.grid.n_points);
        v.positive("grid.length", self.grid.length);

        let p = &self.plant;
        v.positive("plant.tau1", p.tau1);
        v.positive("plant.tau2", p.tau2);
        v.finite("plant.omega11", p.omega11);
        v.finite("plant.omega12", p.omega12);
        v.finite("plant.omega21", p.omega21);
        v.finite("plant.omega22", p.omega22);
        v.positive("plant.sigma", p.sigma);

        v.finite("inputs.amplitude", self.inputs.amplitude);
        v.finite("inputs.lambda1", self.inputs.lambda1);
        v.finite("inputs.lambda2", self.inputs.lambda2);

        v.positive("gains.beta", self.gains.beta);
        v.positive("gains.gamma1", self.gains.gamma1);
        v.positive("gains.gamma2", self.gains.gamma2);

        let i = &self.integration;
        v.non_negative("integration.t_final", i.t_final);
        v.positive("integration.sample_stride", i.sample_stride);
        v.positive("integration.rtol", i.rtol);
        v.positive("integration.atol", i.atol);

        for (k, &t) in self.snapshots.times.iter().enumerate() {
            let key = format!("snapshots.times[{k}]");
            if !(t.is_finite() && t >= 0.0 && t <= i.t_final) {
                v.push(format!(
                    "{key} = {t} must lie in [0, integration.t_final = {}]",
                    i.t_final
                ));
            }
        }

        let pe = &self.pe;
        v.non_negative("pe.horizon", pe.horizon);
        v.positive("pe.sample_stride", pe.sample_stride);
        v.positive("pe.window", pe.window);
        v.positive("pe.scan_stride", pe.scan_stride);
        v.positive("pe.kappa", pe.kappa);

        if self.output.directory.as_os_str().is_empty() {
            v.push("output.directory must not be empty".into());
        }
        v.finish()
    }

    pub fn grid(&self) -> Result<CircleGrid> {
        CircleGrid::new(self.grid.n_points, self.grid.length)
    }

    pub fn plant_params(&self, grid: &CircleGrid) -> Result<PlantParams> {
        let p = &self.plant;
        let s = p.activation.activation();
        PlantParams::gaussian(
            grid,
            p.tau1,
            p.tau2,
            [p.omega11, p.omega12, p.omega21, p.omega22],
            p.sigma,
            s.clone(),
            s,
        )
    }

    pub fn observer_gains(&self) -> Result<ObserverGains> {
        ObserverGains::new(self.gains.beta, self.gains.gamma1, self.gains.gamma2)
    }

    pub fn inputs(&self) -> (InputSignal, InputSignal) {
        match self.inputs.kind {
            InputKind::Zero => (InputSignal::Zero, InputSignal::Zero),
            InputKind::Sinusoidal => (
                InputSignal::sinusoidal(self.inputs.amplitude, self.inputs.lambda1),
                InputSignal::sinusoidal(self.inputs.amplitude, self.inputs.lambda2),
            ),
        }
    }

    /// Replaces the horizon and drops snapshot times beyond it. Returns the
    /// dropped times.
    pub fn override_t_final(&mut self, t_final: f64) -> Vec<f64> {
        self.integration.t_final = t_final;
        let (kept, dropped) = self.snapshots.times.iter().partition(|&&t| t <= t_final);
        self.snapshots.times = kept;
        dropped
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path)
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, message: String) {
        self.0.push(message);
    }

    fn positive(&mut self, key: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.push(format!("{key} must be > 0 (got {x})"));
        }
    }

    fn positive_int(&mut self, key: &str, x: usize) {
        if x == 0 {
            self.push(format!("{key} must be > 0 (got 0)"));
        }
    }

    fn non_negative(&mut self, key: &str, x: f64) {
        if !(x >= 0.0 && x.is_finite()) {
            self.push(format!("{key} must be >= 0 (got {x})"));
        }
    }

    fn finite(&mut self, key: &str, x: f64) {
        if !x.is_finite() {
            self.push(format!("{key} must be finite (got {x})"));
        }
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.0))
        }
    }
}
