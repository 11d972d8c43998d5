//! Reward environments.
//!
//! Two synthetic two-armed problems on `[-1, 1]^d` with Gaussian noise, and
//! an adapter that turns a labelled classification table into a bandit
//! whose reward is 1 when the pulled arm equals the row's label.
//!
//! Arms are 0-based: arm 0 is the first reward function, arm 1 the second.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::EnvError;
use crate::knn::Context;

/// One round's context, plus the dataset row it came from when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub context: Context,
    pub row: Option<usize>,
}

impl Draw {
    pub fn point(context: Context) -> Self {
        Self { context, row: None }
    }
}

fn uniform_cube(dim: usize, rng: &mut ChaCha8Rng) -> Context {
    Context::new((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .expect("finite coordinates")
}

fn gaussian(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma is finite").sample(rng)
}

fn check_sigma(sigma: f64) -> Result<(), EnvError> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(EnvError::Invalid(format!("sigma must be nonnegative, got {sigma}")))
    }
}

/// Signed indicator bumps: `f(x) = sum_j sign_j * height * 1{|x - c_j| <= r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    pub centers: Vec<Context>,
    pub radius: f64,
    pub signs: Vec<f64>,
    pub height: f64,
}

impl BumpSpec {
    pub fn value(&self, x: &Context) -> f64 {
        self.centers
            .iter()
            .zip(&self.signs)
            .filter(|(c, _)| c.distance(x) <= self.radius)
            .map(|(_, v)| v * self.height)
            .sum()
    }
}

/// Arm 0 pays the bump sum, arm 1 pays nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpEnv {
    pub dim: usize,
    pub bumps: BumpSpec,
    pub sigma: f64,
}

impl BumpEnv {
    pub fn mean_reward(&self, arm: usize, x: &Context) -> f64 {
        match arm {
            0 => self.bumps.value(x),
            _ => 0.0,
        }
    }
}

/// Builds the bump environment, drawing centers uniformly on `[-1, 1]^d`
/// and Rademacher signs from `rng`.
pub fn make_setting1(
    dim: usize,
    num_bumps: usize,
    radius: f64,
    height: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BumpEnv, EnvError> {
    if dim == 0 || num_bumps == 0 {
        return Err(EnvError::Invalid(
            "dimension and bump count must be at least 1".into(),
        ));
    }
    if !(radius > 0.0 && height > 0.0) {
        return Err(EnvError::Invalid(format!(
            "radius and height must be positive, got r={radius}, h={height}"
        )));
    }
    check_sigma(sigma)?;
    let centers = (0..num_bumps).map(|_| uniform_cube(dim, rng)).collect();
    let signs = (0..num_bumps)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Ok(BumpEnv {
        dim,
        bumps: BumpSpec {
            centers,
            radius,
            signs,
            height,
        },
        sigma,
    })
}

/// Arm 0 pays `|x|`, arm 1 pays `0.5 - |x|`; the arms swap at `|x| = 0.25`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEnv {
    pub dim: usize,
    pub sigma: f64,
}

impl NormEnv {
    pub fn mean_reward(&self, arm: usize, x: &Context) -> f64 {
        let r = x.norm();
        match arm {
            0 => r,
            _ => 0.5 - r,
        }
    }
}

pub fn make_setting2(dim: usize, sigma: f64) -> Result<NormEnv, EnvError> {
    if dim == 0 {
        return Err(EnvError::Invalid("dimension must be at least 1".into()));
    }
    check_sigma(sigma)?;
    Ok(NormEnv { dim, sigma })
}

/// Which column of a table holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Digits select a zero-based index; anything else is a header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
    /// `None` sniffs tab vs comma from the first line.
    pub delimiter: Option<u8>,
}

impl DatasetOptions {
    pub fn new(label_column: LabelColumn) -> Self {
        Self {
            label_column,
            has_header: true,
            delimiter: None,
        }
    }
}

/// A classification table presented as a bandit: features are min-max
/// scaled to `[0, 1]` per column and arm `a` pays 1 exactly when `a` is the
/// row's label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEnv {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    classes: Vec<String>,
    source: PathBuf,
}

impl DatasetEnv {
    /// Builds a dataset from raw rows, normalizing each column.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self, EnvError> {
        Self::build(rows, labels, PathBuf::from("<memory>"))
    }

    fn build(rows: Vec<Vec<f64>>, labels: Vec<String>, source: PathBuf) -> Result<Self, EnvError> {
        if rows.is_empty() {
            return Err(EnvError::Empty { path: source });
        }
        if labels.len() != rows.len() {
            return Err(EnvError::Invalid(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(EnvError::NoFeatures { path: source });
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(EnvError::RaggedRow {
                path: source,
                row: row + 1,
                found: r.len(),
                expected: dim,
            });
        }
        let mut classes: Vec<String> = labels.clone();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(EnvError::SingleClass {
                path: source,
                found: classes.len(),
            });
        }
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let labels = labels.iter().map(|l| index[l.as_str()]).collect();

        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for r in &rows {
            for (j, &v) in r.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            for (j, &v) in r.iter().enumerate() {
                let range = hi[j] - lo[j];
                features.push(if range > 0.0 {
                    ((v - lo[j]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                });
            }
        }
        Ok(Self {
            dim,
            features,
            labels,
            classes,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class names in arm order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn row(&self, row: usize) -> Context {
        Context::new(self.features[row * self.dim..(row + 1) * self.dim].to_vec())
            .expect("normalized features are finite")
    }

    /// A fresh random presentation order of all rows.
    pub fn permutation(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        order
    }
}

fn sniff_delimiter(path: &Path) -> Result<u8, EnvError> {
    use std::io::BufRead;

    let io_err = |source| EnvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut first = String::new();
    std::io::BufReader::new(file)
        .read_line(&mut first)
        .map_err(io_err)?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

/// Reads a delimiter-separated classification table.
pub fn load_dataset(path: &Path, opts: &DatasetOptions) -> Result<DatasetEnv, EnvError> {
    let delimiter = match opts.delimiter {
        Some(d) => d,
        None => sniff_delimiter(path)?,
    };
    let csv_err = |source| EnvError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;

    let label_idx = match &opts.label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => {
            let unknown = || EnvError::UnknownLabelColumn {
                path: path.to_path_buf(),
                column: name.clone(),
            };
            if !opts.has_header {
                return Err(unknown());
            }
            reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .position(|h| h == name)
                .ok_or_else(unknown)?
        }
    };

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(EnvError::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected,
            });
        }
        if label_idx >= record.len() {
            return Err(EnvError::UnknownLabelColumn {
                path: path.to_path_buf(),
                column: label_idx.to_string(),
            });
        }
        let label = &record[label_idx];
        if label.is_empty() {
            return Err(EnvError::MissingLabel {
                path: path.to_path_buf(),
                row,
            });
        }
        let mut feats = Vec::with_capacity(record.len() - 1);
        for (column, cell) in record.iter().enumerate() {
            if column == label_idx {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => feats.push(v),
                _ => {
                    return Err(EnvError::NonNumeric {
                        path: path.to_path_buf(),
                        row,
                        column,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(feats);
        labels.push(label.to_string());
    }
    DatasetEnv::build(rows, labels, path.to_path_buf())
}

/// A bandit problem: arms, mean rewards, a context law and a noise model.
#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Bumps(BumpEnv),
    Norm(NormEnv),
    Dataset(DatasetEnv),
}

impl Environment {
    pub fn num_arms(&self) -> usize {
        match self {
            Environment::Bumps(_) | Environment::Norm(_) => 2,
            Environment::Dataset(d) => d.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Environment::Bumps(e) => e.dim,
            Environment::Norm(e) => e.dim,
            Environment::Dataset(d) => d.dim(),
        }
    }

    /// Noise scale of the reward; 0 for datasets, whose rewards are exact.
    pub fn sigma(&self) -> f64 {
        match self {
            Environment::Bumps(e) => e.sigma,
            Environment::Norm(e) => e.sigma,
            Environment::Dataset(_) => 0.0,
        }
    }

    /// Per-coordinate bounds of every context this environment produces.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Environment::Bumps(_) | Environment::Norm(_) => (-1.0, 1.0),
            Environment::Dataset(_) => (0.0, 1.0),
        }
    }

    /// The fixed horizon imposed by the data, if any.
    pub fn fixed_horizon(&self) -> Option<u64> {
        match self {
            Environment::Dataset(d) => Some(d.len() as u64),
            _ => None,
        }
    }

    pub fn mean_reward(&self, arm: usize, draw: &Draw) -> f64 {
        match self {
            Environment::Bumps(e) => e.mean_reward(arm, &draw.context),
            Environment::Norm(e) => e.mean_reward(arm, &draw.context),
            Environment::Dataset(d) => {
                let row = draw.row.expect("dataset draws carry their row");
                if d.label(row) == arm {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn optimal_value(&self, draw: &Draw) -> f64 {
        (0..self.num_arms())
            .map(|a| self.mean_reward(a, draw))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index arm attaining the optimal value.
    pub fn optimal_arm(&self, draw: &Draw) -> usize {
        let best = self.optimal_value(draw);
        (0..self.num_arms())
            .find(|&a| self.mean_reward(a, draw) == best)
            .expect("at least one arm")
    }

    /// Mean reward of `arm` plus `N(0, sigma^2)` noise; datasets pay 0/1 exactly.
    pub fn draw_reward(&self, arm: usize, draw: &Draw, rng: &mut ChaCha8Rng) -> f64 {
        self.mean_reward(arm, draw) + gaussian(self.sigma(), rng)
    }

    /// The contexts of one run: i.i.d. uniform on the cube for the synthetic
    /// settings, a random permutation of the rows for datasets (truncated to
    /// `horizon`).
    pub fn contexts(&self, horizon: u64, rng: &mut ChaCha8Rng) -> Vec<Draw> {
        match self {
            Environment::Dataset(d) => d
                .permutation(rng)
                .into_iter()
                .take(horizon as usize)
                .map(|row| Draw {
                    context: d.row(row),
                    row: Some(row),
                })
                .collect(),
            _ => (0..horizon)
                .map(|_| Draw::point(uniform_cube(self.dim(), rng)))
                .collect(),
        }
    }
}

impl From<BumpEnv> for Environment {
    fn from(e: BumpEnv) -> Self {
        Environment::Bumps(e)
    }
}

impl From<NormEnv> for Environment {
    fn from(e: NormEnv) -> Self {
        Environment::Norm(e)
    }
}

impl From<DatasetEnv> for Environment {
    fn from(e: DatasetEnv) -> Self {
        Environment::Dataset(e)
    }
}
