//! Experiment configuration files (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use dib_core::data::{load_idx, make_synthetic, split, Dataset, Fractions, Synthetic};
use dib_core::dib::DibConfig;
use dib_core::nn::{NetworkSpec, TrainConfig};
use dib_core::surgery::{validate_policy, GrowthPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One network trained on the whole training set.
    Single,
    AdaboostM2,
    Dib,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::AdaboostM2 => "adaboost-m2",
            Method::Dib => "dib",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// IDX files. Training and validation sets are drawn, stratified, from
    /// the training files; the test files are used whole.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        train_size: usize,
        valid_size: usize,
        #[serde(default)]
        split_seed: u64,
        /// Subtract the training set's per-pixel mean from every split.
        #[serde(default)]
        center: bool,
    },
    Synthetic {
        generator: Synthetic,
        n: usize,
        classes: usize,
        noise: f64,
        /// Train, validation and test proportions.
        fractions: [f64; 3],
        #[serde(default)]
        data_seed: u64,
        #[serde(default)]
        center: bool,
    },
}

fn ten() -> usize {
    10
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostingSection {
    #[serde(default = "ten")]
    pub rounds: usize,
}

impl Default for BoostingSection {
    fn default() -> Self {
        BoostingSection { rounds: ten() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DibSection {
    /// Epochs for every grown member; the first member uses `train.epochs`.
    pub later_epochs: usize,
    pub growth: GrowthPolicy,
}

/// One experiment: a method, its data and network, and `repetitions` seeds.
///
/// `train.epochs` is the full schedule N for every freshly initialized
/// member. `train.seed` is ignored: run `r` uses `seed + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub data: DataSource,
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub boosting: BoostingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dib: Option<DibSection>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {source}")]
    Parse { path: String, source: Box<toml::de::Error> },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error("cannot load data: {0}")]
    Data(#[from] dib_core::data::DataError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Training, validation and test sets of one experiment.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl ExperimentConfig {
    /// Reads a config file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source: Box::new(source) })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Paths become canonical where the file exists, so a config loaded
    /// through different relative paths records the same data files.
    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
            if let Ok(canonical) = std::fs::canonicalize(&*p) {
                *p = canonical;
            }
        };
        if let DataSource::Idx { train_images, train_labels, test_images, test_labels, .. } = &mut self.data {
            for p in [train_images, train_labels, test_images, test_labels] {
                fix(p);
            }
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    /// The config as embedded in metrics records and model files: the output
    /// directory is left out so that identical experiments written to
    /// different places produce identical records.
    pub fn provenance(&self) -> ExperimentConfig {
        ExperimentConfig { out: None, ..self.clone() }
    }

    pub fn rounds(&self) -> usize {
        match self.method {
            Method::Single => 1,
            _ => self.boosting.rounds,
        }
    }

    /// DIB schedule for base seed `seed`.
    pub fn dib_config(&self, seed: u64) -> Option<DibConfig> {
        let dib = self.dib.as_ref()?;
        Some(DibConfig {
            rounds: self.boosting.rounds,
            first_epochs: self.train.epochs,
            later_epochs: dib.later_epochs,
            growth: dib.growth.clone(),
            train: self.train.clone(),
            seed,
        })
    }

    /// Everything that can be checked without loading data or training,
    /// including a dry run of the growth policy.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be at least 1"));
        }
        self.network.shapes().map_err(|e| invalid(format!("network: {e}")))?;
        self.train.validate().map_err(|e| invalid(format!("train: {e}")))?;
        if self.boosting.rounds == 0 {
            return Err(invalid("boosting.rounds must be at least 1"));
        }
        match (self.method, &self.dib) {
            (Method::Dib, None) => return Err(invalid("method \"dib\" needs a [dib] section")),
            (Method::Dib, Some(_)) => {
                let dib = self.dib_config(self.seed).expect("dib section present");
                dib.validate().map_err(|e| invalid(format!("dib: {e}")))?;
                validate_policy(&self.network, &dib.growth, dib.rounds)
                    .map_err(|e| invalid(format!("dib.growth: {e}")))?;
            }
            _ => {}
        }
        let classes = self.network.classes().map_err(|e| invalid(e.to_string()))?;
        match &self.data {
            DataSource::Idx {
                train_images, train_labels, test_images, test_labels, train_size, valid_size, ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.is_file() {
                        return Err(invalid(format!("data file {} does not exist", p.display())));
                    }
                }
                if *train_size == 0 || *valid_size == 0 {
                    return Err(invalid("train_size and valid_size must be positive"));
                }
            }
            DataSource::Synthetic { n, classes: k, noise, fractions, generator, .. } => {
                if *k != classes {
                    return Err(invalid(format!("network has {classes} outputs but the data has {k} classes")));
                }
                if *generator == Synthetic::TwoMoons && *k != 2 {
                    return Err(invalid("two-moons data has exactly 2 classes"));
                }
                if *n < *k || !noise.is_finite() || *noise < 0.0 {
                    return Err(invalid("synthetic data needs n >= classes and noise >= 0"));
                }
                Fractions::new(fractions[0], fractions[1], fractions[2])?;
            }
        }
        Ok(())
    }

    /// Loads and splits the data. Deterministic: the split depends only on
    /// the data section, never on the run seed.
    pub fn load_data(&self) -> Result<Splits, ConfigError> {
        let (splits, center) = match &self.data {
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_size,
                valid_size,
                split_seed,
                center,
            } => {
                let full = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?;
                let n = full.len();
                if train_size + valid_size >= n {
                    return Err(invalid(format!(
                        "train_size + valid_size = {} must be smaller than the {n} training examples",
                        train_size + valid_size
                    )));
                }
                let f = Fractions::new(
                    *train_size as f64 / n as f64,
                    *valid_size as f64 / n as f64,
                    (n - train_size - valid_size) as f64 / n as f64,
                )?;
                let (train, valid, _) = split(&full, f, *split_seed)?;
                (Splits { train, valid, test }, *center)
            }
            DataSource::Synthetic { generator, n, classes, noise, fractions, data_seed, center } => {
                let base = make_synthetic(*generator, *n, *classes, *noise, *data_seed)?;
                let f = Fractions::new(fractions[0], fractions[1], fractions[2])?;
                let (train, valid, test) = split(&base, f, *data_seed)?;
                (Splits { train, valid, test }, *center)
            }
        };
        let classes = self.network.classes().map_err(|e| invalid(e.to_string()))?;
        if splits.train.classes() != classes || splits.test.classes() != classes {
            return Err(invalid(format!(
                "network has {classes} outputs but the data has {} classes",
                splits.train.classes()
            )));
        }
        if splits.train.example_shape() != self.network.input_shape.as_slice() {
            return Err(invalid(format!(
                "network input {:?} does not match example shape {:?}",
                self.network.input_shape,
                splits.train.example_shape()
            )));
        }
        if !center {
            return Ok(splits);
        }
        let mean = splits.train.feature_mean();
        Ok(Splits {
            train: splits.train.shifted(&mean)?,
            valid: splits.valid.shifted(&mean)?,
            test: splits.test.shifted(&mean)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOONS: &str = r#"
method = "dib"
repetitions = 2
seed = 5

[data]
kind = "synthetic"
generator = "two-moons"
n = 200
classes = 2
noise = 0.1
fractions = [0.6, 0.2, 0.2]

[network]
input_shape = [2]
layers = [
  { kind = "dense", units = 16, activation = "relu" },
  { kind = "dense", units = 2 },
  { kind = "softmax" },
]

[train]
epochs = 4
batch_size = 16

[boosting]
rounds = 3

[dib]
later_epochs = 1
growth = { position = 1, layer = { kind = "dense", units = 16, activation = "relu" } }
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        assert_eq!(cfg.method, Method::Dib);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        cfg.validate().unwrap();
        let d = cfg.load_data().unwrap();
        assert_eq!((d.train.len(), d.valid.len(), d.test.len()), (120, 40, 40));
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn dib_needs_its_section() {
        let mut cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        cfg.dib = None;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn bad_growth_is_caught_before_training() {
        let mut cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        cfg.dib.as_mut().unwrap().growth.position = 7;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("growth round 1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MOONS.replace("seed = 5", "seed = 5\nsede = 6");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn provenance_drops_output_dir() {
        let mut cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        cfg.out = Some("somewhere".into());
        assert_eq!(cfg.provenance().out, None);
    }
}
