//! The four pipeline stages behind the command line.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::report::{summarize, summary_line, SUMMARY_HEADER};
use super::{finetune_dir, offline_dir, seed_dir, thread_cap, write_config_echo, RunConfig};
use crate::algos::{load_checkpoint, save_checkpoint, Algorithm, Checkpoint};
use crate::data::{generate_dataset, load_dataset, normalized_return, save_dataset, Dataset};
use crate::env::{Env, Environment};
use crate::par::{self, Parallelism};
use crate::training::{finetune, train_offline, FinetuneAlgorithm, MetricSource};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenDataReport {
    pub path: PathBuf,
    pub transitions: usize,
    /// Normalized mean return of the generating behavior.
    pub behavior_score: Option<f64>,
}

pub fn gen_data(config: &RunConfig, out: &Path) -> Result<GenDataReport> {
    let mut env = config.env.build()?;
    let dataset = generate_dataset(&mut env, config.dataset.quality, config.dataset.size, config.dataset_seed())?;
    let path = config.dataset_path(out);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_dataset(&dataset, &path)?;
    write_config_echo(&out.join("data"), config)?;
    let behavior_score = dataset
        .meta
        .behavior_return
        .map(|r| normalized_return(r, &dataset.meta.reference))
        .transpose()?;
    Ok(GenDataReport {
        path,
        transitions: dataset.transitions.len(),
        behavior_score,
    })
}

fn load_matching_dataset(config: &RunConfig, out: &Path, env: &Env) -> Result<Dataset> {
    let dataset = load_dataset(&config.dataset_path(out))?;
    let spec = env.spec();
    if dataset.meta.env != spec.name || dataset.meta.state_dim != spec.state_dim || dataset.meta.action_space != spec.action_space {
        return Err(Error::Incompatible(format!(
            "dataset was generated on {} but the config names {}",
            dataset.meta.env, spec.name
        )));
    }
    Ok(dataset)
}

/// Runs `f` over the configured seeds, capped by `O2ORL_THREADS`.
fn over_seeds<R: Send>(config: &RunConfig, mode: Parallelism, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    par::with_threads(thread_cap(), || par::map(mode, &config.seeds, |&s| f(s)))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfflineReport {
    /// `(seed index, checkpoint, last evaluation)` per run.
    pub runs: Vec<(u64, PathBuf, Option<f64>)>,
}

pub fn train_offline_runs(config: &RunConfig, out: &Path, mode: Parallelism) -> Result<OfflineReport> {
    let env = config.env.build()?;
    let dataset = load_matching_dataset(config, out, &env)?;
    let base = offline_dir(out);
    write_config_echo(&base, config)?;
    let runs = over_seeds(config, mode, |s| {
        let (checkpoint, curve) = train_offline(&env, &dataset, &config.offline, &config.eval, config.run_seed(s))?;
        let dir = seed_dir(&base, s);
        fs::create_dir_all(&dir)?;
        let path = dir.join("checkpoint.ck");
        save_checkpoint(&checkpoint, &path)?;
        let mut csv = String::from("step,eval_return_norm\n");
        for (step, v) in &curve {
            csv.push_str(&format!("{step},{v}\n"));
        }
        fs::write(dir.join("curve.csv"), csv)?;
        Ok((s, path, curve.last().map(|c| c.1)))
    })?;
    Ok(OfflineReport { runs })
}

/// Sidecar describing one fine-tuning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub algorithm: String,
    pub seed_index: u64,
    pub seed: u64,
    pub config_hash: String,
    /// Offline checkpoint the run started from.
    pub checkpoint: PathBuf,
    pub budget_steps: usize,
    pub horizon: usize,
    pub metric_source: MetricSource,
}

/// Headline numbers of one run, as written to the index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed_index: u64,
    pub seed: u64,
    pub config_hash: String,
    pub p0: Option<f64>,
    pub degradation: Option<f64>,
    pub final_improvement: Option<f64>,
    pub auc: Option<f64>,
    pub episodes: u64,
    pub steps: u64,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinetuneReport {
    pub runs: Vec<RunSummary>,
    pub index: PathBuf,
}

fn trained_algorithm(alg: FinetuneAlgorithm) -> Algorithm {
    match alg {
        FinetuneAlgorithm::InacFt => Algorithm::Inac,
        FinetuneAlgorithm::IqlFt => Algorithm::Iql,
        FinetuneAlgorithm::Proto => Algorithm::Proto,
        FinetuneAlgorithm::Pex => Algorithm::Pex,
        _ => Algorithm::Sac,
    }
}

static INDEX_LOCK: Mutex<()> = Mutex::new(());

fn append_index(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let _guard = INDEX_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let fresh = !path.exists();
    let mut text = String::new();
    if fresh {
        text.push_str(SUMMARY_HEADER);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&summary_line(r));
        text.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Checkpoint for run `s`: a file shared by every run, or `seed_<s>/checkpoint.ck`
/// under a directory.
fn checkpoint_for(source: &Path, s: u64) -> PathBuf {
    if source.is_dir() {
        seed_dir(source, s).join("checkpoint.ck")
    } else {
        source.to_path_buf()
    }
}

/// Fine-tunes every seed from `checkpoint` (default: the offline stage's
/// output) and appends one summary row per run to the index.
pub fn finetune_runs(config: &RunConfig, out: &Path, checkpoint: Option<&Path>, mode: Parallelism) -> Result<FinetuneReport> {
    let env = config.env.build()?;
    let dataset = load_matching_dataset(config, out, &env)?;
    let source = checkpoint.map_or_else(|| offline_dir(out), Path::to_path_buf);
    let alg = config.finetune.algorithm;
    let base = finetune_dir(out).join(alg.name());
    write_config_echo(&base, config)?;
    let hash = config.hash();
    let runs = over_seeds(config, mode, |s| {
        let ck_path = checkpoint_for(&source, s);
        let ck = load_checkpoint(&ck_path)?;
        let seed = config.run_seed(s);
        let outcome = finetune(&env, &ck, &dataset, &config.finetune, &config.eval, seed, &hash)?;
        let dir = seed_dir(&base, s);
        fs::create_dir_all(&dir)?;
        outcome.record.write_csv(&dir.join("record.csv"))?;
        let info = RunInfo {
            algorithm: alg.name().to_string(),
            seed_index: s,
            seed,
            config_hash: hash.clone(),
            checkpoint: ck_path,
            budget_steps: config.finetune.budget_steps,
            horizon: env.spec().horizon,
            metric_source: config.eval.metric_source,
        };
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&info)?)?;
        let mut extras = Vec::new();
        if let Some(g) = &outcome.guide {
            extras.push(("guide".to_string(), g.actor.net().clone()));
        }
        if let Some(f) = &outcome.fqe {
            extras.push(("fqe".to_string(), f.net.net.clone()));
        }
        save_checkpoint(
            &Checkpoint {
                algorithm: trained_algorithm(alg),
                agent: outcome.agent,
                extras,
            },
            &dir.join("final.ck"),
        )?;
        summarize(&outcome.record, &info, config.analysis.tail_fraction, &dir)
    })?;
    let index = finetune_dir(out).join("index.csv");
    append_index(&index, &runs)?;
    Ok(FinetuneReport { runs, index })
}
