//! Experiment configuration files.
//!
//! Configs are TOML documents with flat top-level keys and one
//! `[environment]` table selected by its `kind`. Unknown keys are rejected.
//!
//! ```toml
//! horizon = 10000
//! batches = 5
//! alpha = 1.0
//! lipschitz = 1.0
//! sigma = 0.5
//! algorithms = ["bank_ucb", "binse"]
//! runs = 30
//! master_seed = 7
//! output_dir = "results/setting2"
//!
//! [environment]
//! kind = "setting2"
//! d = 2
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{DatasetOptions, LabelColumn};
use crate::error::ConfigError;

pub const DEFAULT_SIGMA: f64 = 0.5;
pub const DEFAULT_BUMP_HEIGHT: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_LIPSCHITZ: f64 = 1.0;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BankUcb,
    Binse,
    UniformRandom,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::BankUcb, Algorithm::Binse, Algorithm::UniformRandom];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BankUcb => "bank_ucb",
            Algorithm::Binse => "binse",
            Algorithm::UniformRandom => "uniform_random",
        }
    }

    /// Stable index used to key the algorithm's tie-breaking stream.
    pub fn index(self) -> u64 {
        match self {
            Algorithm::BankUcb => 0,
            Algorithm::Binse => 1,
            Algorithm::UniformRandom => 2,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSpec {
    Index(usize),
    Name(String),
}

impl From<&LabelSpec> for LabelColumn {
    fn from(s: &LabelSpec) -> Self {
        match s {
            LabelSpec::Index(i) => LabelColumn::Index(*i),
            LabelSpec::Name(n) => LabelColumn::Name(n.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Signed indicator bumps against a zero arm.
    Setting1 {
        d: usize,
        bumps: usize,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<f64>,
    },
    /// `|x|` against `0.5 - |x|`.
    Setting2 { d: usize },
    /// A labelled table; the horizon is its row count.
    Dataset {
        path: PathBuf,
        label_column: LabelSpec,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delimiter: Option<String>,
    },
}

fn default_true() -> bool {
    true
}

impl EnvironmentSpec {
    pub fn dataset_options(&self) -> Option<Result<DatasetOptions, ConfigError>> {
        let EnvironmentSpec::Dataset {
            label_column,
            has_header,
            delimiter,
            ..
        } = self
        else {
            return None;
        };
        let delimiter = match delimiter.as_deref() {
            None => Ok(None),
            Some(",") => Ok(Some(b',')),
            Some("\t") | Some("\\t") | Some("tab") => Ok(Some(b'\t')),
            Some(other) => Err(ConfigError::invalid(
                "environment.delimiter",
                format!("expected \",\" or \"\\t\", got {other:?}"),
            )),
        };
        Some(delimiter.map(|delimiter| DatasetOptions {
            label_column: label_column.into(),
            has_header: *has_header,
            delimiter,
        }))
    }
}

/// The on-disk schema; `None` marks a key left to its default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    environment: EnvironmentSpec,
    horizon: Option<u64>,
    batches: usize,
    alpha: Option<f64>,
    lipschitz: Option<f64>,
    sigma: Option<f64>,
    algorithms: Option<Vec<Algorithm>>,
    runs: usize,
    master_seed: Option<u64>,
    output_dir: Option<PathBuf>,
    checkpoint_stride: Option<u64>,
    rolling_window: Option<usize>,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    /// Ignored for datasets, whose horizon is the row count.
    pub horizon: Option<u64>,
    pub batches: usize,
    pub alpha: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    pub algorithms: Vec<Algorithm>,
    pub runs: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// `None` resolves to `max(1, T / 100)` once the horizon is known.
    pub checkpoint_stride: Option<u64>,
    /// `None` resolves to `max(100, T / 20)` once the horizon is known.
    pub rolling_window: Option<usize>,
    /// Keys that were filled from defaults, with the value used.
    #[serde(skip)]
    pub defaulted: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// A setting-2 experiment with every optional key at its default.
    pub fn setting2(d: usize, horizon: u64, batches: usize, runs: usize) -> Self {
        Self {
            environment: EnvironmentSpec::Setting2 { d },
            horizon: Some(horizon),
            batches,
            alpha: DEFAULT_ALPHA,
            lipschitz: DEFAULT_LIPSCHITZ,
            sigma: DEFAULT_SIGMA,
            algorithms: vec![Algorithm::BankUcb, Algorithm::Binse],
            runs,
            master_seed: 0,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            checkpoint_stride: None,
            rolling_window: None,
            defaulted: BTreeMap::new(),
        }
    }

    pub fn checkpoint_stride_for(&self, horizon: u64) -> u64 {
        self.checkpoint_stride.unwrap_or((horizon / 100).max(1))
    }

    pub fn rolling_window_for(&self, horizon: u64) -> usize {
        self.rolling_window
            .unwrap_or_else(|| ((horizon / 20) as usize).max(100))
            .min(horizon as usize)
    }

    /// Bump height in effect for setting 1.
    pub fn bump_height(&self) -> Option<f64> {
        match self.environment {
            EnvironmentSpec::Setting1 { height, .. } => Some(height.unwrap_or(DEFAULT_BUMP_HEIGHT)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::invalid("runs", "must be at least 1"));
        }
        if self.batches == 0 {
            return Err(ConfigError::invalid("batches", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::invalid("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(ConfigError::invalid("lipschitz", "must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ConfigError::invalid("sigma", "must be nonnegative"));
        }
        if self.algorithms.is_empty() {
            return Err(ConfigError::invalid("algorithms", "list at least one algorithm"));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(ConfigError::invalid("algorithms", "duplicate entries"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(ConfigError::invalid("master_seed", "must fit a signed 64-bit integer"));
        }
        if self.checkpoint_stride == Some(0) {
            return Err(ConfigError::invalid("checkpoint_stride", "must be at least 1"));
        }
        if self.rolling_window == Some(0) {
            return Err(ConfigError::invalid("rolling_window", "must be at least 1"));
        }
        match &self.environment {
            EnvironmentSpec::Setting1 { d, bumps, radius, height } => {
                if *d == 0 {
                    return Err(ConfigError::invalid("environment.d", "must be at least 1"));
                }
                if *bumps == 0 {
                    return Err(ConfigError::invalid("environment.bumps", "must be at least 1"));
                }
                if !(*radius > 0.0) {
                    return Err(ConfigError::invalid("environment.radius", "must be positive"));
                }
                if height.is_some_and(|h| !(h > 0.0)) {
                    return Err(ConfigError::invalid("environment.height", "must be positive"));
                }
            }
            EnvironmentSpec::Setting2 { d } => {
                if *d == 0 {
                    return Err(ConfigError::invalid("environment.d", "must be at least 1"));
                }
            }
            EnvironmentSpec::Dataset { .. } => {
                self.environment.dataset_options().expect("dataset")?;
            }
        }
        if !matches!(self.environment, EnvironmentSpec::Dataset { .. }) {
            let Some(horizon) = self.horizon else {
                return Err(ConfigError::invalid("horizon", "required for synthetic environments"));
            };
            if horizon < 2 * self.batches as u64 {
                return Err(ConfigError::invalid(
                    "horizon",
                    format!("must be at least 2 * batches = {}", 2 * self.batches),
                ));
            }
        }
        Ok(())
    }
}

/// Parses and validates config text. Relative dataset paths are resolved
/// against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let mut defaulted = BTreeMap::new();
    let mut note = |key: &str, value: String| {
        defaulted.insert(key.to_string(), value);
    };

    let mut environment = raw.environment;
    if let EnvironmentSpec::Dataset { path, .. } = &mut environment {
        if path.is_relative() {
            *path = base_dir.join(&*path);
        }
    }
    if let EnvironmentSpec::Setting1 { height: None, .. } = environment {
        note("environment.height", DEFAULT_BUMP_HEIGHT.to_string());
    }
    let alpha = raw.alpha.unwrap_or_else(|| {
        note("alpha", DEFAULT_ALPHA.to_string());
        DEFAULT_ALPHA
    });
    let lipschitz = raw.lipschitz.unwrap_or_else(|| {
        note("lipschitz", DEFAULT_LIPSCHITZ.to_string());
        DEFAULT_LIPSCHITZ
    });
    let sigma = raw.sigma.unwrap_or_else(|| {
        note("sigma", DEFAULT_SIGMA.to_string());
        DEFAULT_SIGMA
    });
    let algorithms = raw.algorithms.unwrap_or_else(|| {
        note("algorithms", "[bank_ucb, binse]".into());
        vec![Algorithm::BankUcb, Algorithm::Binse]
    });
    let master_seed = raw.master_seed.unwrap_or_else(|| {
        note("master_seed", "0".into());
        0
    });
    let output_dir = raw.output_dir.unwrap_or_else(|| {
        note("output_dir", DEFAULT_OUTPUT_DIR.into());
        PathBuf::from(DEFAULT_OUTPUT_DIR)
    });
    if raw.checkpoint_stride.is_none() {
        note("checkpoint_stride", "max(1, T/100)".into());
    }
    if raw.rolling_window.is_none() {
        note("rolling_window", "max(100, T/20)".into());
    }

    let cfg = ExperimentConfig {
        environment,
        horizon: raw.horizon,
        batches: raw.batches,
        alpha,
        lipschitz,
        sigma,
        algorithms,
        runs: raw.runs,
        master_seed,
        output_dir,
        checkpoint_stride: raw.checkpoint_stride,
        rolling_window: raw.rolling_window,
        defaulted,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}
