//! Experiment configuration: a single TOML file with a model block, the
//! analysis parameters, and output settings. Parsing rejects unknown keys
//! (the TOML error carries the key name and line), and model assembly
//! checks that every supplied key belongs to the declared model kind.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Deserialize;

use qdlab::chernoff::ExponentChoice;
use qdlab::info::DEFAULT_SAMPLE_COUNT;
use qdlab::linalg::{ComplexMatrix, DensityMatrix};
use qdlab::model::{DecoherenceModel, PointerSpec, SubsystemSpec};
use qdlab::photon::{
    build_sky_partition, load_kernel_family, sky_model, BlackbodySpectrum, KernelSpec, PhotonError,
    SkyModel, SkyPatch, DEFAULT_KERNEL_STRENGTH, DEFAULT_KERNEL_WIDTH, DEFAULT_MOMENTUM_NODES,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub chernoff: ChernoffConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One model block; the `kind` decides which of the remaining keys apply.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "iid-qubit", "custom-list", or "photon-sky".
    pub kind: String,

    /* iid-qubit and custom-list */
    pub p1: Option<f64>,
    pub phase: Option<f64>,
    pub environment_size: Option<usize>,
    pub coupling: Option<f64>,
    pub subsystems: Option<Vec<SubsystemConfig>>,

    /* photon-sky */
    pub resolution: Option<usize>,
    pub cap_half_angle_deg: Option<f64>,
    pub temperature: Option<f64>,
    pub momentum_nodes: Option<usize>,
    pub kernel: Option<String>,
    pub kernel_width: Option<f64>,
    pub kernel_strength: Option<f64>,
    pub kernel_file: Option<PathBuf>,
    pub x1: Option<[f64; 3]>,
    pub x2: Option<[f64; 3]>,
    pub photon_rate: Option<f64>,
}

/// One environment subsystem as explicit matrices, row-major with one
/// `[re, im]` pair per entry.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub initial: Vec<Vec<[f64; 2]>>,
    pub interaction: Vec<Vec<[f64; 2]>>,
    pub self_hamiltonian: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// "exhaustive" or "monte-carlo".
    #[serde(default = "default_sampler_mode")]
    pub mode: String,
    #[serde(default = "default_sample_count")]
    pub samples: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_sampler_mode() -> String {
    "exhaustive".to_string()
}

fn default_sample_count() -> usize {
    DEFAULT_SAMPLE_COUNT
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: default_sampler_mode(),
            samples: default_sample_count(),
            master_seed: 0,
        }
    }
}

/// Chernoff exponent selection: the string "optimize" or "half", or a
/// fixed numeric exponent in (0, 1).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ExponentConfig {
    Named(String),
    Fixed(f64),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChernoffConfig {
    pub exponent: Option<ExponentConfig>,
    /// Fragment sizes for the empirical error-decay fit; absent skips it.
    pub fit_sizes: Option<Vec<usize>>,
}

impl ChernoffConfig {
    pub fn choice(&self) -> Result<ExponentChoice, CliError> {
        match &self.exponent {
            None => Ok(ExponentChoice::Fixed(0.5)),
            Some(ExponentConfig::Named(name)) => match name.as_str() {
                "optimize" => Ok(ExponentChoice::Optimize),
                "half" => Ok(ExponentChoice::Fixed(0.5)),
                other => Err(CliError::Config(format!(
                    "chernoff exponent `{other}` is not recognized; use \"optimize\", \
                     \"half\", or a number strictly between 0 and 1"
                ))),
            },
            Some(ExponentConfig::Fixed(c)) => {
                if !(*c > 0.0 && *c < 1.0) {
                    return Err(CliError::Config(format!(
                        "chernoff exponent must lie strictly between 0 and 1, got {c}"
                    )));
                }
                Ok(ExponentChoice::Fixed(*c))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    /// Any of "csv", "json"; both by default.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".to_string(), "json".to_string()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            formats: default_formats(),
        }
    }
}

/// Parse and schema-check a configuration file.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, toml::Value), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok((config, value))
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), CliError> {
        for &t in &self.times {
            if !t.is_finite() {
                return Err(CliError::Config(format!("times must be finite, got {t}")));
            }
        }
        for &d in &self.deltas {
            if !(d > 0.0 && d < 1.0) {
                return Err(CliError::Config(format!(
                    "deltas must lie strictly between 0 and 1, got {d}"
                )));
            }
        }
        match self.sampler.mode.as_str() {
            "exhaustive" | "monte-carlo" => {}
            other => {
                return Err(CliError::Config(format!(
                    "sampler mode `{other}` is not recognized; use \"exhaustive\" or \
                     \"monte-carlo\""
                )))
            }
        }
        for format in &self.output.formats {
            match format.as_str() {
                "csv" | "json" => {}
                other => {
                    return Err(CliError::Config(format!(
                        "output format `{other}` is not recognized; use \"csv\" or \"json\""
                    )))
                }
            }
        }
        self.model.check_keys()?;
        Ok(())
    }
}

/// A fully assembled model, either flavor.
pub enum BuiltModel {
    Quantum(DecoherenceModel),
    Photon {
        model: Box<SkyModel>,
        /// Half-resolution companion for the discretization error estimate.
        coarse: Option<Box<SkyModel>>,
        photon_rate: f64,
    },
}

/* Which optional keys each model kind accepts. */
const QUBIT_KEYS: &[&str] = &["p1", "phase", "environment_size", "coupling"];
const CUSTOM_KEYS: &[&str] = &["p1", "phase", "subsystems"];
const PHOTON_KEYS: &[&str] = &[
    "resolution",
    "cap_half_angle_deg",
    "temperature",
    "momentum_nodes",
    "kernel",
    "kernel_width",
    "kernel_strength",
    "kernel_file",
    "x1",
    "x2",
    "photon_rate",
];

impl ModelConfig {
    fn supplied_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut push = |name: &'static str, set: bool| {
            if set {
                keys.push(name);
            }
        };
        push("p1", self.p1.is_some());
        push("phase", self.phase.is_some());
        push("environment_size", self.environment_size.is_some());
        push("coupling", self.coupling.is_some());
        push("subsystems", self.subsystems.is_some());
        push("resolution", self.resolution.is_some());
        push("cap_half_angle_deg", self.cap_half_angle_deg.is_some());
        push("temperature", self.temperature.is_some());
        push("momentum_nodes", self.momentum_nodes.is_some());
        push("kernel", self.kernel.is_some());
        push("kernel_width", self.kernel_width.is_some());
        push("kernel_strength", self.kernel_strength.is_some());
        push("kernel_file", self.kernel_file.is_some());
        push("x1", self.x1.is_some());
        push("x2", self.x2.is_some());
        push("photon_rate", self.photon_rate.is_some());
        keys
    }

    fn check_keys(&self) -> Result<(), CliError> {
        let allowed: &[&str] = match self.kind.as_str() {
            "iid-qubit" => QUBIT_KEYS,
            "custom-list" => CUSTOM_KEYS,
            "photon-sky" => PHOTON_KEYS,
            other => {
                return Err(CliError::Config(format!(
                    "model kind `{other}` is not recognized; use \"iid-qubit\", \
                     \"custom-list\", or \"photon-sky\""
                )))
            }
        };
        for key in self.supplied_keys() {
            if !allowed.contains(&key) {
                return Err(CliError::Config(format!(
                    "key `{key}` does not apply to model kind `{}`",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

fn require<T: Copy>(value: Option<T>, key: &str, kind: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Config(format!("model kind `{kind}` requires the key `{key}`"))
    })
}

fn complex_matrix(
    entries: &[Vec<[f64; 2]>],
    what: &str,
) -> Result<ComplexMatrix, CliError> {
    let rows = entries.len();
    if rows == 0 || entries.iter().any(|r| r.len() != rows) {
        return Err(CliError::Config(format!(
            "{what} must be a square non-empty matrix of [re, im] pairs"
        )));
    }
    let data: Vec<C64> = entries
        .iter()
        .flat_map(|row| row.iter().map(|&[re, im]| C64::new(re, im)))
        .collect();
    Ok(ComplexMatrix::from_shape_vec((rows, rows), data).expect("shape checked above"))
}

fn qubit_plus_template(coupling: f64) -> Result<SubsystemSpec, CliError> {
    let half = C64::new(0.5, 0.0);
    let plus = DensityMatrix::new(
        ComplexMatrix::from_shape_vec((2, 2), vec![half, half, half, half]).expect("2x2"),
    )
    .map_err(|e| CliError::Invariant(e.to_string()))?;
    let sigma_z = ComplexMatrix::from_shape_vec(
        (2, 2),
        vec![
            C64::new(coupling, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-coupling, 0.0),
        ],
    )
    .expect("2x2");
    SubsystemSpec::new(plus, sigma_z, ComplexMatrix::zeros((2, 2)))
        .map_err(|e| CliError::Invariant(e.to_string()))
}

fn build_pointer(config: &ModelConfig) -> Result<PointerSpec, CliError> {
    let p1 = require(config.p1, "p1", &config.kind)?;
    if !(0.0..=1.0).contains(&p1) {
        return Err(CliError::Config(format!("p1 must lie in [0, 1], got {p1}")));
    }
    let phase = config.phase.unwrap_or(0.0);
    PointerSpec::qubit_superposition(p1, phase).map_err(|e| CliError::Invariant(e.to_string()))
}

/// Assemble the configured model. Schema problems surface as config
/// errors; violated physical invariants (non-PSD states, non-unitary
/// kernels) as invariant errors.
pub fn build_model(config: &ModelConfig) -> Result<BuiltModel, CliError> {
    config.check_keys()?;
    match config.kind.as_str() {
        "iid-qubit" => {
            let n = require(config.environment_size, "environment_size", &config.kind)?;
            let coupling = config.coupling.unwrap_or(1.0);
            if !coupling.is_finite() {
                return Err(CliError::Config(format!(
                    "coupling must be finite, got {coupling}"
                )));
            }
            let pointer = build_pointer(config)?;
            let template = qubit_plus_template(coupling)?;
            let model = DecoherenceModel::new_iid(pointer, template, n)
                .map_err(|e| CliError::Invariant(e.to_string()))?;
            Ok(BuiltModel::Quantum(model))
        }
        "custom-list" => {
            let subsystems = config
                .subsystems
                .as_ref()
                .ok_or_else(|| {
                    CliError::Config(
                        "model kind `custom-list` requires the key `subsystems`".to_string(),
                    )
                })?;
            if subsystems.is_empty() {
                return Err(CliError::Config(
                    "`subsystems` must list at least one subsystem".to_string(),
                ));
            }
            let pointer = build_pointer(config)?;
            let mut specs = Vec::with_capacity(subsystems.len());
            for (k, sub) in subsystems.iter().enumerate() {
                let initial = complex_matrix(&sub.initial, &format!("subsystem {k} initial"))?;
                let interaction =
                    complex_matrix(&sub.interaction, &format!("subsystem {k} interaction"))?;
                let self_h = match &sub.self_hamiltonian {
                    Some(h) => {
                        complex_matrix(h, &format!("subsystem {k} self_hamiltonian"))?
                    }
                    None => ComplexMatrix::zeros(interaction.dim()),
                };
                let initial = DensityMatrix::new(initial)
                    .map_err(|e| CliError::Invariant(format!("subsystem {k} initial: {e}")))?;
                let spec = SubsystemSpec::new(initial, interaction, self_h)
                    .map_err(|e| CliError::Invariant(format!("subsystem {k}: {e}")))?;
                specs.push(spec);
            }
            let model = DecoherenceModel::new_explicit(pointer, specs)
                .map_err(|e| CliError::Invariant(e.to_string()))?;
            Ok(BuiltModel::Quantum(model))
        }
        "photon-sky" => {
            let resolution = require(config.resolution, "resolution", &config.kind)?;
            let patch = match config.cap_half_angle_deg {
                Some(deg) => SkyPatch::Cap {
                    half_angle: deg.to_radians(),
                },
                None => SkyPatch::FullSphere,
            };
            let temperature = config.temperature.unwrap_or(1.0);
            let nodes = config.momentum_nodes.unwrap_or(DEFAULT_MOMENTUM_NODES);
            let photon_rate = config.photon_rate.unwrap_or(1.0);
            if photon_rate <= 0.0 || !photon_rate.is_finite() {
                return Err(CliError::Config(format!(
                    "photon_rate must be positive, got {photon_rate}"
                )));
            }
            let x1 = config.x1.unwrap_or([0.0, 0.0, 0.0]);
            let x2 = config.x2.unwrap_or([0.0, 0.0, 1.0]);

            let kernel_kind = config.kernel.as_deref().unwrap_or("small-angle");
            let kernel = match kernel_kind {
                "small-angle" => KernelSpec::SmallAngle {
                    width: config.kernel_width.unwrap_or(DEFAULT_KERNEL_WIDTH),
                    strength: config.kernel_strength.unwrap_or(DEFAULT_KERNEL_STRENGTH),
                },
                "identity" => KernelSpec::Identity,
                "file" => {
                    let path = config.kernel_file.as_ref().ok_or_else(|| {
                        CliError::Config(
                            "kernel \"file\" requires the key `kernel_file`".to_string(),
                        )
                    })?;
                    load_kernel_family(path).map_err(|e| CliError::Config(e.to_string()))?
                }
                other => {
                    return Err(CliError::Config(format!(
                        "kernel `{other}` is not recognized; use \"small-angle\", \
                         \"identity\", or \"file\""
                    )))
                }
            };

            let build = |cells: usize, kernel: KernelSpec| -> Result<SkyModel, CliError> {
                let partition =
                    build_sky_partition(cells, patch).map_err(photon_config_error)?;
                let spectrum = BlackbodySpectrum::with_node_count(temperature, nodes)
                    .map_err(photon_config_error)?;
                sky_model(partition, spectrum, kernel, x1, x2).map_err(|e| match e {
                    PhotonError::KernelNotUnitary { .. } => CliError::Invariant(e.to_string()),
                    other => photon_config_error(other),
                })
            };

            let model = Box::new(build(resolution, kernel.clone())?);
            /* An explicit kernel family is pinned to one dimension, so the
             * coarse companion only exists for the built-in kernels. */
            let coarse = if matches!(kernel, KernelSpec::Explicit { .. }) || resolution / 2 < 24 {
                None
            } else {
                match build(resolution / 2, kernel) {
                    Ok(m) => Some(Box::new(m)),
                    Err(CliError::Config(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok(BuiltModel::Photon {
                model,
                coarse,
                photon_rate,
            })
        }
        other => Err(CliError::Config(format!(
            "model kind `{other}` is not recognized"
        ))),
    }
}

fn photon_config_error(e: PhotonError) -> CliError {
    CliError::Config(e.to_string())
}
