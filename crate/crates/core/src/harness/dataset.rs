//! Synthetic movie-like task database and goal list.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};
use crate::goal::{validate_goal, UserGoal};
use crate::kb::KbTable;
use crate::rng::{stream, Stream};
use crate::user_sim::sample_goal;

const MOVIE_SLOTS: [&str; 8] = [
    "genre", "city", "theater", "date", "starttime", "rating", "actor", "price",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub slots: usize,
    pub min_values: usize,
    pub max_values: usize,
    pub entries: usize,
    pub goals: usize,
    /// Reject duplicate rows.
    pub distinct_rows: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            slots: 8,
            min_values: 3,
            max_values: 6,
            entries: 120,
            goals: 128,
            distinct_rows: true,
        }
    }
}

pub fn slot_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match MOVIE_SLOTS.get(i) {
            Some(s) => s.to_string(),
            None => format!("slot{i}"),
        })
        .collect()
}

fn value_name(slot: &str, j: usize) -> String {
    format!("{slot}_{j}")
}

/// Deterministic table and goal list for `seed`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<(KbTable, Vec<UserGoal>)> {
    if spec.slots < 2 || spec.entries < 2 {
        return Err(DdrError::Generation("need at least two slots and two entries".into()));
    }
    if spec.min_values < 1 || spec.min_values > spec.max_values {
        return Err(DdrError::Generation("value range must satisfy 1 <= min <= max".into()));
    }
    let mut rng = stream(seed, Stream::Dataset);
    let schema = slot_names(spec.slots);
    let cards: Vec<usize> = (0..spec.slots)
        .map(|_| rng.gen_range(spec.min_values..=spec.max_values))
        .collect();
    // Saturating product of cardinalities.
    let combos = cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    if spec.distinct_rows && combos.is_some_and(|c| c < spec.entries) {
        return Err(DdrError::Generation(format!(
            "only {} distinct rows exist but {} entries were requested",
            combos.unwrap_or(0),
            spec.entries
        )));
    }
    let rows: Vec<Vec<usize>> = match combos {
        // Small spaces: enumerate and draw without replacement.
        Some(c) if spec.distinct_rows && c <= 1 << 16 => {
            let mut all: Vec<Vec<usize>> = (0..c)
                .map(|mut k| {
                    cards
                        .iter()
                        .map(|&card| {
                            let v = k % card;
                            k /= card;
                            v
                        })
                        .collect()
                })
                .collect();
            all.shuffle(&mut rng);
            all.truncate(spec.entries);
            all
        }
        _ => {
            let mut seen = BTreeSet::new();
            let mut rows = Vec::with_capacity(spec.entries);
            while rows.len() < spec.entries {
                let row: Vec<usize> = cards.iter().map(|&c| rng.gen_range(0..c)).collect();
                if !spec.distinct_rows || seen.insert(row.clone()) {
                    rows.push(row);
                }
            }
            rows
        }
    };
    let rows = rows
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(&schema)
                .map(|(&v, s)| value_name(s, v))
                .collect()
        })
        .collect();
    let table = KbTable::new(schema, rows)?;
    let mut goals = Vec::with_capacity(spec.goals);
    while goals.len() < spec.goals {
        let g = sample_goal(&table, &mut rng)?;
        if validate_goal(&g, &table)? {
            goals.push(g);
        }
    }
    Ok((table, goals))
}

/// Writes `table.json` and `goals.json` into `dir`.
pub fn save_dataset(dir: &Path, table: &KbTable, goals: &[UserGoal]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    table.save_json(&dir.join("table.json"))?;
    UserGoal::save_list(goals, &dir.join("goals.json"))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(KbTable, Vec<UserGoal>)> {
    let table = KbTable::load(&dir.join("table.json"))?;
    let goals = UserGoal::load_list(&dir.join("goals.json"))?;
    Ok((table, goals))
}
