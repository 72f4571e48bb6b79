//! Declarative run configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdbscan::{DbscanParams, DEFAULT_EPS_DETECT, DEFAULT_EPS_EVOLVE};
use crate::hin::DEFAULT_SLOT_SECS;
use crate::ingest::EnrichmentTables;
use crate::metapath::{MetaPathSet, PathFilter, WeightVector, DEFAULT_MAX_LEN_EVENT, DEFAULT_MAX_LEN_INSTANCE};
use crate::ppgcn::TrainConfig;
use crate::streaming::{Pipeline, StreamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub threads: usize,
    pub ingest: IngestSection,
    pub paths: PathsSection,
    pub retrieval: StreamConfig,
    pub cluster: ClusterSection,
    pub weights: WeightsSection,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub slot_secs: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub max_len_instance: usize,
    pub max_len_event: usize,
    pub include_same_slot: bool,
    pub include_odd: bool,
    pub include_composition_only: bool,
    /// Explicit path files override enumeration.
    pub detect_file: Option<PathBuf>,
    pub evolve_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub eps_detect: f64,
    pub eps_evolve: f64,
    pub min_pts: usize,
}

/// Weight files (one value per line, aligned with the path sets); uniform
/// when absent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub detect: Option<PathBuf>,
    pub evolve: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            threads: 1,
            ingest: IngestSection::default(),
            paths: PathsSection::default(),
            retrieval: StreamConfig::default(),
            cluster: ClusterSection::default(),
            weights: WeightsSection::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            slot_secs: DEFAULT_SLOT_SECS,
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            max_len_instance: DEFAULT_MAX_LEN_INSTANCE,
            max_len_event: DEFAULT_MAX_LEN_EVENT,
            include_same_slot: false,
            include_odd: false,
            include_composition_only: false,
            detect_file: None,
            evolve_file: None,
        }
    }
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            eps_detect: DEFAULT_EPS_DETECT,
            eps_evolve: DEFAULT_EPS_EVOLVE,
            min_pts: 1,
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.ingest.slot_secs <= 0 {
            return Err(Error::Config("ingest.slot_secs must be positive".into()));
        }
        self.retrieval.validate()?;
        self.detect_params().validate()?;
        self.evolve_params().validate()?;
        self.train_config().validate()
    }

    fn filter(&self) -> PathFilter {
        PathFilter {
            include_same_slot: self.paths.include_same_slot,
            include_odd: self.paths.include_odd,
            include_composition_only: self.paths.include_composition_only,
        }
    }

    pub fn detect_paths(&self) -> Result<MetaPathSet> {
        match &self.paths.detect_file {
            Some(p) => MetaPathSet::read_from(read_file(p)?.as_bytes()),
            None => MetaPathSet::detection(self.paths.max_len_instance, self.filter()),
        }
    }

    pub fn evolve_paths(&self) -> Result<MetaPathSet> {
        match &self.paths.evolve_file {
            Some(p) => MetaPathSet::read_from(read_file(p)?.as_bytes()),
            None => MetaPathSet::evolution(self.paths.max_len_event, self.filter()),
        }
    }

    fn weights_for(file: &Option<PathBuf>, paths: &MetaPathSet) -> Result<WeightVector> {
        let w = match file {
            Some(p) => WeightVector::read_from(read_file(p)?.as_bytes())?,
            None => WeightVector::uniform(paths.len()),
        };
        if w.len() != paths.len() {
            return Err(Error::InvalidWeights(format!("{} weights for {} paths", w.len(), paths.len())));
        }
        Ok(w)
    }

    pub fn detect_weights(&self, paths: &MetaPathSet) -> Result<WeightVector> {
        Self::weights_for(&self.weights.detect, paths)
    }

    pub fn evolve_weights(&self, paths: &MetaPathSet) -> Result<WeightVector> {
        Self::weights_for(&self.weights.evolve, paths)
    }

    pub fn detect_params(&self) -> DbscanParams {
        DbscanParams {
            eps: self.cluster.eps_detect,
            min_pts: self.cluster.min_pts,
            threads: self.threads,
        }
    }

    pub fn evolve_params(&self) -> DbscanParams {
        DbscanParams {
            eps: self.cluster.eps_evolve,
            ..self.detect_params()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn pipeline(&self, tables: EnrichmentTables) -> Result<Pipeline> {
        let detect_paths = self.detect_paths()?;
        let evolve_paths = self.evolve_paths()?;
        Ok(Pipeline {
            stream: self.retrieval.clone(),
            slot_secs: self.ingest.slot_secs,
            tables,
            detect_weights: self.detect_weights(&detect_paths)?,
            evolve_weights: self.evolve_weights(&evolve_paths)?,
            detect_paths,
            evolve_paths,
            detect_params: self.detect_params(),
            evolve_params: self.evolve_params(),
            labels_dir: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.cluster.eps_detect = 0.5;
        c.retrieval.top_k = 7;
        c.weights.detect = Some("w.txt".into());
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Config::from_toml("[cluster]\nepsilon = 0.3\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("epsilon")), "{err}");
        let err = Config::from_toml("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml("threads = 0\n").is_err());
        assert!(Config::from_toml("[retrieval]\nt1_secs = 100\nt2_secs = 50\n").is_err());
    }

    #[test]
    fn seed_flows_into_training() {
        let c = Config::from_toml("seed = 9\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(c.train_config().seed, 9);
        assert_eq!(c.train_config().epochs, 3);
        let p = c.pipeline(EnrichmentTables::default()).unwrap();
        assert_eq!(p.detect_weights.len(), p.detect_paths.len());
    }
}
