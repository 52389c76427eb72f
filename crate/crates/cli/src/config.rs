//! Config file handling: a TOML file provides defaults per subcommand,
//! command-line flags override, and the fully resolved config is echoed
//! into the output directory next to the results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub fault: FaultSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    pub buses: Option<PathBuf>,
    pub lines: Option<PathBuf>,
    pub generators: Option<PathBuf>,
    pub towns: Option<PathBuf>,
    pub national_loads: Option<PathBuf>,
    pub bus_countries: Option<PathBuf>,
    /// Load frequency-sensitivity alpha.
    pub alpha: Option<f64>,
    /// Generator damping ratio gamma = d/m, 1/s.
    pub gamma: Option<f64>,
    pub d_max_km: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    pub grid: Option<PathBuf>,
    pub bus: Option<Vec<u64>>,
    pub delta_p: Option<Vec<f64>>,
    pub t_sim: Option<f64>,
    pub dt: Option<f64>,
    pub n_sim: Option<usize>,
    pub h: Option<f64>,
    pub kind: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub grid: Option<PathBuf>,
    pub modes: Option<usize>,
    /// Homogeneous inertia for the timescale report.
    pub m: Option<f64>,
    /// Homogeneous damping for the timescale report.
    pub d: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Option<PathBuf>,
    pub procedure: Option<String>,
    pub seed: Option<u64>,
    /// M_sys targets; fractions of the current M_sys when
    /// `levels_relative` is set.
    pub levels: Option<Vec<f64>>,
    pub levels_relative: Option<bool>,
    /// CSV of fault scenarios: fault_bus,delta_p.
    pub faults: Option<PathBuf>,
    pub epsilon_floor: Option<f64>,
    pub kind: Option<String>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

/// Writes the resolved (post-override) section into the output directory
/// so a run is reproducible from its artifacts alone.
pub fn echo_resolved<T: Serialize>(out_dir: &Path, section: &str, resolved: &T) -> Result<(), CliError> {
    let mut doc = toml::map::Map::new();
    doc.insert(
        section.to_string(),
        toml::Value::try_from(resolved)
            .map_err(|e| CliError::Runtime(format!("config serialization: {e}")))?,
    );
    let text = toml::to_string_pretty(&toml::Value::Table(doc))
        .map_err(|e| CliError::Runtime(format!("config serialization: {e}")))?;
    std::fs::write(out_dir.join("resolved_config.toml"), text)
        .map_err(|e| CliError::Runtime(format!("write resolved config: {e}")))?;
    Ok(())
}

/// Picks the command-line value when present, otherwise the config-file
/// value.
pub fn pick<T: Clone>(cli: Option<T>, file: Option<T>) -> Option<T> {
    cli.or(file)
}

pub fn require<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Input(format!("missing required parameter: {name}")))
}
