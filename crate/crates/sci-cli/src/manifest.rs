//! Run manifest: one TOML file capturing everything a command needs, so
//! a run is reproducible from the manifest alone. Command-line flags
//! override individual fields; the hash embedded in reports is computed
//! over the effective (post-override) manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

fn default_seed() -> u64 {
    sci_core::dgp::DEFAULT_SEED
}

fn default_n_per_dgp() -> usize {
    2000
}

fn default_out_dir() -> String {
    std::env::var("SCI_OUT_DIR").unwrap_or_else(|_| "out".to_string())
}

fn default_simulate_dgps() -> Vec<String> {
    sci_core::dgp::BASELINE_NAMES.iter().map(|s| s.to_string()).collect()
}

fn default_bootstrap() -> usize {
    sci_core::eval::DEFAULT_BOOTSTRAP
}

fn default_windows() -> Vec<usize> {
    sci_core::eval::WINDOW_GRID.to_vec()
}

fn default_phi_grid() -> Vec<f64> {
    sci_core::eval::PHI_GRID.to_vec()
}

fn default_alpha_grid() -> Vec<f64> {
    sci_core::eval::ALPHA_GRID.to_vec()
}

fn default_window_minutes() -> u32 {
    sci_core::ingest::DEFAULT_WINDOW_MINUTES
}

fn default_bin_minutes() -> u32 {
    sci_core::ingest::DEFAULT_BIN_MINUTES
}

fn default_tau() -> f64 {
    0.27
}

fn default_weights() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn default_monitor_window() -> u32 {
    60
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_simulate_dgps")]
    pub dgps: Vec<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { dgps: default_simulate_dgps() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bootstrap resamples for AUC confidence intervals.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Evaluation windows in bins for the window-sensitivity grid.
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default = "default_phi_grid")]
    pub phi_grid: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bootstrap: default_bootstrap(),
            windows: default_windows(),
            phi_grid: default_phi_grid(),
            alpha_grid: default_alpha_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeConfig {
    #[serde(default = "default_window_minutes")]
    pub window_minutes: u32,
    #[serde(default = "default_bin_minutes")]
    pub bin_minutes: u32,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Cobb-Douglas exponents for the weighted variant, rescaled to sum 3.
    #[serde(default = "default_weights")]
    pub weights: [f64; 3],
    /// Trade-level bootstrap resamples; 0 disables the interval.
    #[serde(default)]
    pub bootstrap: usize,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            window_minutes: default_window_minutes(),
            bin_minutes: default_bin_minutes(),
            tau: default_tau(),
            weights: default_weights(),
            bootstrap: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Trailing-window length in minutes.
    #[serde(default = "default_monitor_window")]
    pub window_minutes: u32,
    #[serde(default = "default_bin_minutes")]
    pub bin_minutes: u32,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            window_minutes: default_monitor_window(),
            bin_minutes: default_bin_minutes(),
            tau: default_tau(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_per_dgp")]
    pub n_per_dgp: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub compute: ComputeConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_per_dgp: default_n_per_dgp(),
            out_dir: default_out_dir(),
            simulate: SimulateConfig::default(),
            experiment: ExperimentConfig::default(),
            compute: ComputeConfig::default(),
            monitor: MonitorConfig::default(),
        }
    }
}

impl RunManifest {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))
    }

    /// Field-by-field validation; errors name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |field: &str, why: String| Err(CliError::Config(format!("{field}: {why}")));
        if self.n_per_dgp == 0 {
            return err("n_per_dgp", "must be positive".into());
        }
        if self.simulate.dgps.is_empty() {
            return err("simulate.dgps", "must name at least one DGP".into());
        }
        for name in &self.simulate.dgps {
            if sci_core::dgp::builtin_spec(name).is_err() {
                return err("simulate.dgps", format!("unknown DGP name {name:?}"));
            }
        }
        if self.experiment.bootstrap == 0 {
            return err("experiment.bootstrap", "must be positive".into());
        }
        if self.experiment.windows.is_empty()
            || self.experiment.windows.iter().any(|&w| w < 2 || w > sci_core::dgp::N_BINS)
        {
            return err(
                "experiment.windows",
                format!("each window must be in [2, {}] bins", sci_core::dgp::N_BINS),
            );
        }
        if self.experiment.phi_grid.iter().any(|p| p.abs() >= 1.0) {
            return err("experiment.phi_grid", "AR coefficients must satisfy |phi| < 1".into());
        }
        if self.experiment.alpha_grid.iter().any(|a| *a <= 0.0) {
            return err("experiment.alpha_grid", "concentrations must be positive".into());
        }
        for (field, cfg) in [
            ("compute", (self.compute.window_minutes, self.compute.bin_minutes)),
            ("monitor", (self.monitor.window_minutes, self.monitor.bin_minutes)),
        ] {
            let (w, b) = cfg;
            if b == 0 || w == 0 || w % b != 0 {
                return err(
                    &format!("{field}.window_minutes"),
                    format!("window {w} min must be a positive multiple of bin {b} min"),
                );
            }
        }
        if !(0.0..=1.0).contains(&self.compute.tau) || !(0.0..=1.0).contains(&self.monitor.tau) {
            return err("tau", "threshold must lie in [0, 1]".into());
        }
        if self.compute.weights.iter().any(|w| *w <= 0.0) {
            return err("compute.weights", "exponents must be positive".into());
        }
        Ok(())
    }

    /// Canonical serialization of the effective manifest; reports embed
    /// its SHA-256 so a table can be traced back to its exact config.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        format!("{digest:x}")
    }
}
