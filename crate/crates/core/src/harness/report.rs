//! Experiment grids, long-format CSV output and summaries.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::stats::{aggregate, stats_from_counts, DeadEndStats};
use super::train::{train_run_observed, RunResult};
use crate::config::{DqnVariant, RescueMode, RunConfig};
use crate::error::Result;
use crate::goal::UserGoal;
use crate::kb::KbTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: RunConfig,
    pub agents: Vec<RescueMode>,
    pub variants: Vec<DqnVariant>,
    pub noises: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub agent: RescueMode,
    pub variant: DqnVariant,
    pub noise: f64,
    pub seed: u64,
}

impl CellKey {
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            rescue_mode: self.agent,
            dqn_variant: self.variant,
            slot_error_rate: self.noise,
            seed: self.seed,
            ..base.clone()
        }
    }

    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_noise{}_seed{}",
            self.agent.agent_name(),
            variant_name(self.variant),
            self.noise,
            self.seed
        )
    }
}

pub fn variant_name(v: DqnVariant) -> &'static str {
    match v {
        DqnVariant::Vanilla => "vanilla",
        DqnVariant::Double => "double",
        DqnVariant::Dueling => "dueling",
    }
}

impl GridSpec {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &variant in &self.variants {
            for &noise in &self.noises {
                for &agent in &self.agents {
                    for &seed in &self.seeds {
                        cells.push(CellKey {
                            agent,
                            variant,
                            noise,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub result: std::result::Result<RunResult, String>,
}

/// Runs every cell, `workers` at a time. Cells share nothing but the
/// read-only table and goals.
pub fn run_grid(spec: &GridSpec, table: &KbTable, goals: &[UserGoal], workers: usize) -> Vec<CellResult> {
    let cells = spec.cells();
    let table = Arc::new(table.clone());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let workers = workers.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(key) = cells.get(i).copied() else { break };
                let config = key.config(&spec.base);
                let result = train_run_observed(&config, table.clone(), goals, |_, _| {}).map_err(|e| e.to_string());
                slots.lock().expect("grid results lock")[i] = Some(CellResult { key, result });
            });
        }
    });
    slots
        .into_inner()
        .expect("grid results lock")
        .into_iter()
        .map(|c| c.expect("every cell ran"))
        .collect()
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// One value in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub agent: String,
    pub variant: String,
    pub noise: f64,
    pub seed: u64,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch and final metrics of a run as long-format rows. Final values
/// use the epoch count as their epoch.
pub fn long_rows(key: &CellKey, run: &RunResult) -> Vec<LongRow> {
    let row = |epoch: usize, metric: &str, value: f64| LongRow {
        agent: key.agent.agent_name().to_string(),
        variant: variant_name(key.variant).to_string(),
        noise: key.noise,
        seed: key.seed,
        epoch,
        metric: metric.to_string(),
        value,
    };
    let mut rows = Vec::new();
    for r in &run.records {
        rows.push(row(r.epoch, "train_success_rate", r.train_success_rate));
        rows.push(row(r.epoch, "dialogues", r.dialogues as f64));
        rows.push(row(r.epoch, "experiences", r.experiences as f64));
        rows.push(row(r.epoch, "failed", r.dead_end.failed as f64));
        rows.push(row(r.epoch, "failed_with_dead_end", r.dead_end.failed_with_dead_end as f64));
        rows.push(row(r.epoch, "rescues", r.rescues as f64));
        if let Some(ratio) = r.dead_end_ratio() {
            rows.push(row(r.epoch, "dead_end_ratio", ratio));
        }
        if let Some(loss) = r.loss {
            rows.push(row(r.epoch, "loss", loss));
        }
        if let Some(e) = r.eval {
            rows.push(row(r.epoch, "success_rate", e.success_rate));
            rows.push(row(r.epoch, "average_reward", e.average_reward));
            rows.push(row(r.epoch, "average_turns", e.average_turns));
        }
    }
    let last = run.records.last().map_or(0, |r| r.epoch);
    rows.push(row(last, "final_success_rate", run.final_eval.success_rate));
    rows.push(row(last, "final_average_reward", run.final_eval.average_reward));
    rows.push(row(last, "final_average_turns", run.final_eval.average_turns));
    rows.push(row(last, "success_auc", run.success_auc()));
    if let Some(ratio) = run.dead_end.ratio() {
        rows.push(row(last, "run_dead_end_ratio", ratio));
    }
    rows
}

pub fn write_long_csv(path: &Path, rows: &[LongRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_long_csv(path: &Path) -> Result<Vec<LongRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: String,
    pub variant: String,
    pub noise: f64,
    pub epoch: usize,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub seeds: usize,
}

/// Mean and sample standard deviation across seeds for every
/// (agent, variant, noise, epoch, metric).
pub fn summarize(rows: &[LongRow]) -> Vec<SummaryRow> {
    let groups = aggregate(rows.iter().map(|r| {
        (
            (
                r.agent.clone(),
                r.variant.clone(),
                r.noise.to_bits(),
                r.metric.clone(),
                r.epoch,
            ),
            r.value,
        )
    }));
    groups
        .into_iter()
        .map(|((agent, variant, noise, metric, epoch), (mean, stddev, seeds))| SummaryRow {
            agent,
            variant,
            noise: f64::from_bits(noise),
            epoch,
            metric,
            mean,
            stddev,
            seeds,
        })
        .collect()
}

/// Dead-end ratio among failed training dialogues for each
/// (agent, variant, noise), one value per seed.
pub fn dead_end_table(cells: &[CellResult]) -> BTreeMap<(String, String, u64), DeadEndStats> {
    let mut groups: BTreeMap<(String, String, u64), Vec<_>> = BTreeMap::new();
    for c in cells {
        if let Ok(run) = &c.result {
            groups
                .entry((
                    c.key.agent.agent_name().to_string(),
                    variant_name(c.key.variant).to_string(),
                    c.key.noise.to_bits(),
                ))
                .or_default()
                .push(run.dead_end);
        }
    }
    groups.into_iter().map(|(k, v)| (k, stats_from_counts(&v))).collect()
}

/// Writes one CSV per cell, `results.csv` with all rows, `summary.csv` and
/// `summary.json`. Returns the number of failed cells.
pub fn write_grid_outputs(dir: &Path, cells: &[CellResult]) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let mut all = Vec::new();
    let mut failures = Vec::new();
    for c in cells {
        match &c.result {
            Ok(run) => {
                let rows = long_rows(&c.key, run);
                write_long_csv(&dir.join(format!("{}.csv", c.key.file_stem())), &rows)?;
                all.extend(rows);
            }
            Err(msg) => failures.push(serde_json::json!({
                "cell": c.key.file_stem(),
                "error": msg,
            })),
        }
    }
    write_long_csv(&dir.join("results.csv"), &all)?;
    let summary = summarize(&all);
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    let dead_ends: Vec<_> = dead_end_table(cells)
        .into_iter()
        .map(|((agent, variant, noise), s)| {
            serde_json::json!({
                "agent": agent,
                "variant": variant,
                "noise": f64::from_bits(noise),
                "dead_end_ratio": s.ratio,
                "stddev": s.stddev,
                "per_seed": s.per_seed,
            })
        })
        .collect();
    let json = serde_json::json!({
        "cells": cells.len(),
        "failed_cells": failures,
        "summary": summary,
        "dead_ends": dead_ends,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(failures.len())
}
