//! Metric aggregation over fine-tuning runs and plot output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use super::pipeline::{RunInfo, RunSummary};
use super::svg::{line_chart, Series};
use super::AnalysisConfig;
use crate::algos::load_checkpoint;
use crate::analysis::{auc, bootstrap_ci, degradation, final_improvement, lambda_grid, linear_interp_eval, median, RunRecord};
use crate::env::EnvConfig;
use crate::rng::derive_seed;
use crate::training::{metric_series, MetricSource};
use crate::{Error, Result};

/// Mean, median and bootstrap interval of one metric over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Stat {
    fn of(values: &[f64], config: &AnalysisConfig, seed: u64) -> Result<Option<Self>> {
        if values.is_empty() {
            return Ok(None);
        }
        let (lo, hi) = bootstrap_ci(values, config.bootstrap_resamples, config.confidence, seed)?;
        Ok(Some(Stat {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: median(values).expect("nonempty"),
            lo,
            hi,
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: usize,
    pub degradation: Option<Stat>,
    pub final_improvement: Option<Stat>,
    pub auc: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub runs: Vec<RunSummary>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub files: Vec<PathBuf>,
}

/// Per-run metrics; missing series leave the metric empty.
pub(crate) fn summarize(record: &RunRecord, info: &RunInfo, tail_fraction: f64, dir: &Path) -> Result<RunSummary> {
    let mut s = RunSummary {
        algorithm: info.algorithm.clone(),
        seed_index: info.seed_index,
        seed: info.seed,
        config_hash: info.config_hash.clone(),
        p0: record.p0(),
        degradation: None,
        final_improvement: None,
        auc: None,
        episodes: record.rows.last().map_or(0, |r| r.episode),
        steps: record.rows.last().map_or(0, |r| r.step),
        dir: dir.to_path_buf(),
    };
    if let Some((p0, series)) = metric_series(record, info.metric_source) {
        let values: Vec<f64> = series.iter().map(|p| p.1).collect();
        if !values.is_empty() && p0 != 0.0 {
            s.degradation = Some(degradation(p0, &values)?);
            s.final_improvement = Some(final_improvement(p0, &values, tail_fraction)?);
        }
        if info.budget_steps > 0 && !series.is_empty() {
            let mut points = vec![(0.0, p0)];
            points.extend(series.iter().filter(|p| p.0 <= info.budget_steps as f64));
            if points.len() >= 2 {
                s.auc = Some(auc(&points, info.budget_steps as f64)?);
            }
        }
    }
    Ok(s)
}

pub(crate) const SUMMARY_HEADER: &str = "algorithm,seed,config_hash,p0,degradation,final_improvement,auc,episodes,steps,dir";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub(crate) fn summary_line(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.algorithm,
        s.seed_index,
        s.config_hash,
        opt(s.p0),
        opt(s.degradation),
        opt(s.final_improvement),
        opt(s.auc),
        s.episodes,
        s.steps,
        s.dir.display()
    )
}

struct LoadedRun {
    info: RunInfo,
    record: RunRecord,
    dir: PathBuf,
}

fn discover(run_dirs: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    let mut runs = Vec::new();
    for root in run_dirs {
        if !root.exists() {
            return Err(Error::MissingInput(format!("run directory {}", root.display())));
        }
        let mut files: Vec<PathBuf> = WalkDir::new(root)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name() == "record.csv")
            .map(|e| e.into_path())
            .collect();
        files.sort();
        for file in files {
            let dir = file.parent().expect("file has a parent").to_path_buf();
            let info_path = dir.join("run.json");
            if !info_path.exists() {
                continue;
            }
            let info: RunInfo = serde_json::from_str(&fs::read_to_string(&info_path)?)
                .map_err(|e| Error::Format {
                    path: info_path.clone(),
                    reason: e.to_string(),
                })?;
            let record = RunRecord::from_csv(&fs::read_to_string(&file)?, &info.algorithm, info.seed, &info.config_hash)
                .map_err(|e| match e {
                    Error::Format { reason, .. } => Error::Format { path: file.clone(), reason },
                    other => other,
                })?;
            runs.push(LoadedRun { info, record, dir });
        }
    }
    Ok(runs)
}

/// Value of a step function through `points` at `x` (first value before the start).
fn step_value(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = points.first()?;
    Some(points.iter().take_while(|p| p.0 <= x).last().unwrap_or(first).1)
}

/// Mean curve with a bootstrap band across runs on an even step grid.
fn aggregate(
    curves: &[Vec<(f64, f64)>],
    budget: f64,
    config: &AnalysisConfig,
    seed: u64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let n = config.curve_points;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = budget * i as f64 / (n - 1) as f64;
        let ys: Vec<f64> = curves.iter().filter_map(|c| step_value(c, x)).collect();
        if ys.is_empty() {
            continue;
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let (lo, hi) = bootstrap_ci(&ys, config.bootstrap_resamples, config.confidence, derive_seed(seed, "grid", i as u64))?;
        out.push((x, mean, lo, hi));
    }
    Ok(out)
}

fn write_curves(
    dir: &Path,
    stem: &str,
    title: &str,
    y_label: &str,
    x_label: &str,
    groups: &BTreeMap<String, Vec<(f64, f64, f64, f64)>>,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut csv = format!("algorithm,{x_label},mean,lo,hi\n");
    let mut series = Vec::new();
    for (alg, rows) in groups {
        for (x, m, lo, hi) in rows {
            let _ = writeln!(csv, "{alg},{x},{m},{lo},{hi}");
        }
        series.push(Series {
            name: alg.clone(),
            points: rows.iter().map(|r| (r.0, r.1)).collect(),
            band: rows.iter().map(|r| (r.0, r.2, r.3)).collect(),
        });
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&csv_path, csv)?;
    fs::write(&svg_path, line_chart(title, x_label, y_label, &series))?;
    files.push(csv_path);
    files.push(svg_path);
    Ok(())
}

/// Aggregates every run found under `run_dirs` and writes tables and plots
/// into `out`. Interpolation curves need the environment config.
pub fn analyze(
    run_dirs: &[PathBuf],
    out: &Path,
    config: &AnalysisConfig,
    env: Option<&EnvConfig>,
    seed: u64,
) -> Result<AnalysisReport> {
    let runs = discover(run_dirs)?;
    if runs.is_empty() {
        return Err(Error::EmptyAnalysis(format!("no run records under {run_dirs:?}")));
    }
    fs::create_dir_all(out)?;
    let mut files = Vec::new();

    let summaries = runs
        .iter()
        .map(|r| summarize(&r.record, &r.info, config.tail_fraction, &r.dir))
        .collect::<Result<Vec<_>>>()?;
    let mut by_alg: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        by_alg.entry(r.info.algorithm.clone()).or_default().push(i);
    }

    let mut algorithms = Vec::new();
    for (alg, idx) in &by_alg {
        let pick = |f: fn(&RunSummary) -> Option<f64>| idx.iter().filter_map(|&i| f(&summaries[i])).collect::<Vec<_>>();
        let stat_seed = |metric: &str| derive_seed(seed, &format!("bootstrap:{alg}:{metric}"), 0);
        algorithms.push(AlgorithmSummary {
            algorithm: alg.clone(),
            runs: idx.len(),
            degradation: Stat::of(&pick(|s| s.degradation), config, stat_seed("degradation"))?,
            final_improvement: Stat::of(&pick(|s| s.final_improvement), config, stat_seed("final_improvement"))?,
            auc: Stat::of(&pick(|s| s.auc), config, stat_seed("auc"))?,
        });
    }

    let mut metrics = String::from("algorithm,runs");
    for m in ["degradation", "final_improvement", "auc"] {
        let _ = write!(metrics, ",{m}_mean,{m}_median,{m}_lo,{m}_hi");
    }
    metrics.push('\n');
    for a in &algorithms {
        let _ = write!(metrics, "{},{}", a.algorithm, a.runs);
        for s in [a.degradation, a.final_improvement, a.auc] {
            match s {
                Some(s) => {
                    let _ = write!(metrics, ",{},{},{},{}", s.mean, s.median, s.lo, s.hi);
                }
                None => metrics.push_str(",,,,"),
            }
        }
        metrics.push('\n');
    }
    let metrics_path = out.join("metrics.csv");
    fs::write(&metrics_path, metrics)?;
    files.push(metrics_path);

    let mut per_run = format!("{SUMMARY_HEADER}\n");
    for s in &summaries {
        per_run.push_str(&summary_line(s));
        per_run.push('\n');
    }
    let runs_path = out.join("runs.csv");
    fs::write(&runs_path, per_run)?;
    files.push(runs_path);

    let mut curves = BTreeMap::new();
    let mut hs = BTreeMap::new();
    for (alg, idx) in &by_alg {
        let budget = idx.iter().map(|&i| runs[i].info.budget_steps).max().unwrap_or(0) as f64;
        let series: Vec<Vec<(f64, f64)>> = idx
            .iter()
            .filter_map(|&i| {
                let (p0, mut s) = metric_series(&runs[i].record, runs[i].info.metric_source)?;
                s.insert(0, (0.0, p0));
                Some(s)
            })
            .collect();
        curves.insert(alg.clone(), aggregate(&series, budget, config, derive_seed(seed, &format!("curve:{alg}"), 0))?);
        if runs[idx[0]].record.columns.h {
            let h_series: Vec<Vec<(f64, f64)>> = idx
                .iter()
                .map(|&i| {
                    let rec = &runs[i].record;
                    let mut s = rec.h_series();
                    if let Some(h0) = rec.rows.first().and_then(|r| r.h) {
                        s.insert(0, (0.0, h0));
                    }
                    s
                })
                .collect();
            hs.insert(alg.clone(), aggregate(&h_series, budget, config, derive_seed(seed, &format!("h:{alg}"), 0))?);
        }
    }
    let y_label = match runs[0].info.metric_source {
        MetricSource::Eval => "normalized evaluation return",
        MetricSource::Online => "normalized online return",
    };
    write_curves(out, "curves", "Fine-tuning curves", y_label, "step", &curves, &mut files)?;
    if !hs.is_empty() {
        write_curves(out, "h", "Guide steps", "h", "step", &hs, &mut files)?;
    }

    if config.interpolation {
        let env = env
            .ok_or_else(|| Error::Config("interpolation needs the environment config".into()))?
            .build()?;
        let grid = lambda_grid(config.interp_points);
        let mut interp: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for r in &runs {
            let end_path = r.dir.join("final.ck");
            if !end_path.exists() {
                continue;
            }
            let start = load_checkpoint(&r.info.checkpoint)?;
            let end = load_checkpoint(&end_path)?;
            let values = linear_interp_eval(
                &start.agent.actor,
                &end.agent.actor,
                &grid,
                &env,
                config.interp_rollouts,
                derive_seed(seed, "interp", r.info.seed_index),
            )?;
            interp.entry(r.info.algorithm.clone()).or_default().push(values);
        }
        let mut groups = BTreeMap::new();
        for (alg, runs) in &interp {
            let mut rows = Vec::new();
            for (j, &l) in grid.iter().enumerate() {
                let ys: Vec<f64> = runs.iter().map(|v| v[j]).collect();
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let (lo, hi) = bootstrap_ci(
                    &ys,
                    config.bootstrap_resamples,
                    config.confidence,
                    derive_seed(seed, &format!("interp:{alg}"), j as u64),
                )?;
                rows.push((l, mean, lo, hi));
            }
            groups.insert(alg.clone(), rows);
        }
        if !groups.is_empty() {
            write_curves(out, "interp", "Start-to-final interpolation", "normalized return", "lambda", &groups, &mut files)?;
        }
    }

    Ok(AnalysisReport {
        runs: summaries,
        algorithms,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{Columns, RunRow};

    fn record(p0: f64, evals: &[f64]) -> RunRecord {
        let mut r = RunRecord::new("sac", 0, "x", Columns::default());
        r.rows.push(RunRow {
            eval_return_norm: Some(p0),
            ..Default::default()
        });
        for (i, &e) in evals.iter().enumerate() {
            r.rows.push(RunRow {
                step: 10 * (i as u64 + 1),
                episode: i as u64 + 1,
                return_raw: Some(0.0),
                return_norm: Some(0.0),
                eval_return_norm: Some(e),
                ..Default::default()
            });
        }
        r
    }

    fn info() -> RunInfo {
        RunInfo {
            algorithm: "sac".into(),
            seed_index: 0,
            seed: 0,
            config_hash: "x".into(),
            checkpoint: PathBuf::new(),
            budget_steps: 100,
            horizon: 10,
            metric_source: MetricSource::Eval,
        }
    }

    #[test]
    fn single_run_metrics() {
        let evals = [100.0, 80.0, 90.0, 100.0, 110.0, 120.0, 120.0, 120.0, 120.0, 120.0];
        let s = summarize(&record(100.0, &evals), &info(), 0.1, Path::new("d")).unwrap();
        assert!((s.degradation.unwrap() + 0.2).abs() < 1e-12);
        assert!((s.final_improvement.unwrap() - 0.2).abs() < 1e-12);
        assert!(s.auc.is_some());
    }

    #[test]
    fn step_function_holds_last_value() {
        let pts = [(0.0, 1.0), (10.0, 2.0), (30.0, 3.0)];
        assert_eq!(step_value(&pts, 0.0), Some(1.0));
        assert_eq!(step_value(&pts, 29.0), Some(2.0));
        assert_eq!(step_value(&pts, 99.0), Some(3.0));
        assert_eq!(step_value(&[], 1.0), None);
    }

    #[test]
    fn record_without_evaluations_has_no_metrics() {
        let s = summarize(&record(1.0, &[]), &info(), 0.1, Path::new("d")).unwrap();
        assert_eq!(s.degradation, None);
        assert_eq!(s.auc, None);
        assert_eq!(s.p0, Some(1.0));
    }
}
