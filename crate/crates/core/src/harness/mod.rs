//! Config-driven pipeline: dataset generation, offline training,
//! fine-tuning and analysis, with all file I/O.
//!
//! Output layout under the output directory:
//!
//! ```text
//! data/dataset.bin (+ dataset.bin.meta.json), data/config.json
//! offline/seed_<s>/{checkpoint.ck, curve.csv}, offline/config.json
//! finetune/<alg>/seed_<s>/{record.csv, run.json, final.ck}, finetune/<alg>/config.json
//! finetune/index.csv
//! analysis/{metrics.csv, runs.csv, curves.csv, curves.svg, h.csv, h.svg, interp.csv, interp.svg}
//! ```

mod pipeline;
mod report;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Quality;
use crate::env::EnvConfig;
use crate::rng::derive_seed;
use crate::training::{EvalConfig, FinetuneConfig, OfflineConfig};
use crate::{Error, Result};

pub use pipeline::{
    finetune_runs, gen_data, train_offline_runs, FinetuneReport, GenDataReport, OfflineReport, RunInfo, RunSummary,
};
pub use report::{analyze, AlgorithmSummary, AnalysisReport, Stat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub quality: Quality,
    pub size: usize,
    /// Generation seed; derived from the master seed when absent.
    pub seed: Option<u64>,
    /// Dataset file; defaults to `data/dataset.bin` under the output directory.
    pub path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            quality: Quality::Expert,
            size: 10_000,
            seed: None,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Share of the series averaged for the final score.
    pub tail_fraction: f64,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    /// Grid points for the aggregated curves.
    pub curve_points: usize,
    /// Evaluate parameter interpolation between each run's start and final actor.
    pub interpolation: bool,
    pub interp_points: usize,
    pub interp_rollouts: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tail_fraction: 0.1,
            bootstrap_resamples: 1000,
            confidence: 0.95,
            curve_points: 51,
            interpolation: false,
            interp_points: 11,
            interp_rollouts: 50,
        }
    }
}

/// Everything one pipeline invocation needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub dataset: DatasetConfig,
    pub offline: OfflineConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
    /// Master seed; every component seed is derived from it.
    pub seed: u64,
    /// Run indices; each gets its own offline checkpoint and fine-tuning run.
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::GridCliff(Default::default()),
            dataset: DatasetConfig::default(),
            offline: OfflineConfig::default(),
            finetune: FinetuneConfig::default(),
            eval: EvalConfig::default(),
            analysis: AnalysisConfig::default(),
            seed: 0,
            seeds: vec![0],
            output: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput(format!("config {}", path.display()))
            } else {
                e.into()
            }
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.env.build().map_err(as_config)?;
        self.offline.agent.validate().map_err(as_config)?;
        if self.dataset.size == 0 {
            return Err(Error::Config("dataset.size must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one run".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let a = &self.analysis;
        if !(a.tail_fraction > 0.0 && a.tail_fraction <= 1.0) {
            return Err(Error::Config(format!("analysis.tail_fraction must lie in (0, 1], got {}", a.tail_fraction)));
        }
        if !(a.confidence > 0.0 && a.confidence < 1.0) {
            return Err(Error::Config(format!("analysis.confidence must lie in (0, 1), got {}", a.confidence)));
        }
        if a.curve_points < 2 || a.bootstrap_resamples == 0 {
            return Err(Error::Config("analysis needs at least 2 curve points and 1 resample".into()));
        }
        Ok(())
    }

    /// Pretty JSON of the resolved config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short digest of the resolved config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        format!("{digest:x}")[..16].to_string()
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or_else(|| derive_seed(self.seed, "dataset", 0))
    }

    /// Seed of run `index` (one of `seeds`).
    pub fn run_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, "run", index)
    }

    pub fn dataset_path(&self, out: &Path) -> PathBuf {
        self.dataset.path.clone().unwrap_or_else(|| out.join("data").join("dataset.bin"))
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

pub fn offline_dir(out: &Path) -> PathBuf {
    out.join("offline")
}

pub fn finetune_dir(out: &Path) -> PathBuf {
    out.join("finetune")
}

pub fn seed_dir(base: &Path, index: u64) -> PathBuf {
    base.join(format!("seed_{index}"))
}

/// Parallel seed cap from `O2ORL_THREADS`.
pub fn thread_cap() -> Option<usize> {
    std::env::var("O2ORL_THREADS").ok()?.trim().parse().ok()
}

pub(crate) fn write_config_echo(dir: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), config.to_json())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut c = RunConfig::default();
        c.seeds = vec![3, 1, 4];
        c.finetune.agent = serde_json::json!({"tau": 0.2});
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"env": {"name": "chain"}, "seeds": [0, 1]}"#).unwrap();
        assert_eq!(c.eval.p0_episodes, 20);
        assert_eq!(c.eval.every_episodes, 10);
        assert_eq!(c.analysis.interp_points, 11);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            r#"{"dataset": {"quality": "superb"}}"#,
            r#"{"finetune": {"algorithm": "dqn"}}"#,
            r#"{"offline": {"agent": {"expectile": 1.5}}}"#,
            r#"{"seeds": []}"#,
            r#"{"seeds": [1, 1]}"#,
            r#"{"typo": 1}"#,
            r#"{"env": {"name": "chain", "n_states": 1}}"#,
            "{",
        ] {
            let err = RunConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn field_errors_name_the_location() {
        let err = RunConfig::from_json("{\n  \"dataset\": {\"quality\": \"superb\"}\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn seeds_fan_out() {
        let c = RunConfig::default();
        assert_ne!(c.run_seed(0), c.run_seed(1));
        assert_ne!(c.dataset_seed(), c.run_seed(0));
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(d.run_seed(0), c.run_seed(0));
    }
}
