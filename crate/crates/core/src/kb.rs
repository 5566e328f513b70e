//! The task database: constraint matching, match counts, value
//! distributions, entropy and information gain.
//!
//! Entries are treated as equiprobable among the currently matching rows,
//! so the entropy of the match set is `log2 n`. Information gain for a
//! request on slot `a` is the entropy of the match set minus the expected
//! entropy after learning the slot's value:
//!
//! ```text
//! IG(a) = log2 n - sum_v (|N_v| / n) * log2 |N_v|
//! ```
//!
//! where `N_v` are the matching rows whose value for `a` is `v`. Unknown
//! cells form their own bucket.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::act::DONT_CARE;
use crate::error::{DdrError, Result};

/// Cell value for an attribute the entry does not define.
pub const UNKNOWN: &str = "unknown";

/// Slot constraints keyed by slot name.
pub type Constraints = BTreeMap<String, String>;

/// IG differences below this are treated as ties.
const IG_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbTable {
    schema: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    schema: Vec<String>,
    entries: Vec<BTreeMap<String, String>>,
}

impl KbTable {
    /// Builds a table from a schema and rows aligned with it.
    pub fn new(schema: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if schema.is_empty() {
            return Err(DdrError::Schema("schema has no slots".into()));
        }
        if rows.is_empty() {
            return Err(DdrError::Schema("table has no entries".into()));
        }
        let unique: BTreeSet<&String> = schema.iter().collect();
        if unique.len() != schema.len() {
            return Err(DdrError::Schema("duplicate slot in schema".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DdrError::Schema(format!(
                    "entry {i} has {} cells for {} slots",
                    row.len(),
                    schema.len()
                )));
            }
        }
        Ok(KbTable { schema, rows })
    }

    /// The four-entry movie table used throughout the examples and tests:
    /// `e1{action, LA}`, `e2{action, NY}`, `e3{comedy, SF}`, `e4{comedy, SEA}`.
    pub fn toy() -> Self {
        let row = |g: &str, c: &str| vec![g.to_owned(), c.to_owned()];
        KbTable::new(
            vec!["genre".into(), "city".into()],
            vec![
                row("action", "LA"),
                row("action", "NY"),
                row("comedy", "SF"),
                row("comedy", "SEA"),
            ],
        )
        .unwrap()
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, index: usize) -> &[String] {
        &self.rows[index]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[String]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn slot_index(&self, slot: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|s| s == slot)
            .ok_or_else(|| DdrError::UnknownSlot(slot.to_owned()))
    }

    pub fn has_slot(&self, slot: &str) -> bool {
        self.schema.iter().any(|s| s == slot)
    }

    /// Value of `slot` in entry `row`.
    pub fn value(&self, row: usize, slot: &str) -> Result<&str> {
        Ok(&self.rows[row][self.slot_index(slot)?])
    }

    /// Distinct known values of each slot, in order of first appearance.
    pub fn value_pool(&self) -> BTreeMap<String, Vec<String>> {
        let mut pool = BTreeMap::new();
        for (col, slot) in self.schema.iter().enumerate() {
            let mut seen = BTreeSet::new();
            let mut values = Vec::new();
            for row in &self.rows {
                let v = &row[col];
                if v != UNKNOWN && seen.insert(v.clone()) {
                    values.push(v.clone());
                }
            }
            pool.insert(slot.clone(), values);
        }
        pool
    }

    /// Hash of the schema, used to tie snapshots to their table.
    pub fn schema_fingerprint(&self) -> u64 {
        // FNV-1a; stable across runs and platforms.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for slot in &self.schema {
            for b in slot.bytes().chain(std::iter::once(0xff)) {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }

    fn resolve<'c>(&self, constraints: &'c Constraints) -> Result<Vec<(usize, &'c str)>> {
        let mut resolved = Vec::with_capacity(constraints.len());
        for (slot, value) in constraints {
            let col = self.slot_index(slot)?;
            if value != DONT_CARE {
                resolved.push((col, value.as_str()));
            }
        }
        Ok(resolved)
    }

    fn row_matches(row: &[String], resolved: &[(usize, &str)]) -> bool {
        resolved
            .iter()
            .all(|&(col, value)| row[col] != UNKNOWN && row[col] == value)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut rows = Vec::with_capacity(file.entries.len());
        for (i, entry) in file.entries.iter().enumerate() {
            if let Some(extra) = entry.keys().find(|k| !file.schema.contains(k)) {
                return Err(DdrError::Schema(format!(
                    "entry {i} has slot `{extra}` outside the schema"
                )));
            }
            rows.push(
                file.schema
                    .iter()
                    .map(|s| entry.get(s).cloned().unwrap_or_else(|| UNKNOWN.to_owned()))
                    .collect(),
            );
        }
        KbTable::new(file.schema, rows)
    }

    pub fn to_json_string(&self) -> String {
        let file = TableFile {
            schema: self.schema.clone(),
            entries: self
                .rows
                .iter()
                .map(|row| self.schema.iter().cloned().zip(row.iter().cloned()).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("tables always serialize")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    /// Reads a CSV whose header row is the schema.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        Self::read_csv(&mut reader)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        Self::read_csv(&mut reader)
    }

    fn read_csv<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let schema: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record?.iter().map(str::to_owned).collect());
        }
        KbTable::new(schema, rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(&self.schema)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Loads JSON or CSV depending on the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::load_csv(path),
            _ => Self::load_json(path),
        }
    }
}

/// Counts of a slot's values among the matching entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueDistribution {
    pub slot: String,
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

/// Result of choosing the most informative request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BestSlot {
    Slot(String),
    /// Every candidate slot has zero information gain (or none is left).
    NoInformativeSlot,
}

/// Indices of the rows satisfying every constraint, in table order.
///
/// `anything` constraints are wildcards; unknown cells never match.
pub fn match_entries(table: &KbTable, constraints: &Constraints) -> Result<Vec<usize>> {
    let resolved = table.resolve(constraints)?;
    Ok(table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| KbTable::row_matches(row, &resolved))
        .map(|(i, _)| i)
        .collect())
}

pub fn match_count(table: &KbTable, constraints: &Constraints) -> Result<usize> {
    let resolved = table.resolve(constraints)?;
    Ok(table
        .rows
        .iter()
        .filter(|row| KbTable::row_matches(row, &resolved))
        .count())
}

pub fn value_distribution(
    table: &KbTable,
    constraints: &Constraints,
    slot: &str,
) -> Result<ValueDistribution> {
    let col = table.slot_index(slot)?;
    let matches = match_entries(table, constraints)?;
    if matches.is_empty() {
        return Err(DdrError::EmptyMatch);
    }
    let mut counts = BTreeMap::new();
    for &i in &matches {
        *counts.entry(table.rows[i][col].clone()).or_insert(0) += 1;
    }
    Ok(ValueDistribution {
        slot: slot.to_owned(),
        counts,
        total: matches.len(),
    })
}

/// Shannon entropy in bits of the bucket distribution.
pub fn entropy(dist: &ValueDistribution) -> f64 {
    let total = dist.total as f64;
    let mut probs: Vec<f64> = dist.counts.values().map(|&c| c as f64 / total).collect();
    probs.sort_by(f64::total_cmp);
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// `log2 n - sum_v (c_v / n) log2 c_v` over sorted bucket sizes.
fn ig_from_counts(mut counts: Vec<usize>, n: usize) -> f64 {
    counts.sort_unstable();
    let n_f = n as f64;
    let conditional: f64 = counts
        .iter()
        .map(|&c| (c as f64 / n_f) * (c as f64).log2())
        .sum();
    n_f.log2() - conditional
}

pub fn information_gain(table: &KbTable, constraints: &Constraints, slot: &str) -> Result<f64> {
    let dist = value_distribution(table, constraints, slot).or_else(|e| match e {
        DdrError::EmptyMatch => Err(DdrError::Precondition(
            "information gain needs at least two matching entries".into(),
        )),
        other => Err(other),
    })?;
    if dist.total < 2 {
        return Err(DdrError::Precondition(
            "information gain needs at least two matching entries".into(),
        ));
    }
    Ok(ig_from_counts(dist.counts.into_values().collect(), dist.total))
}

/// Highest-IG slot among the schema slots without a constraint.
pub fn best_request_slot(table: &KbTable, constraints: &Constraints) -> Result<BestSlot> {
    best_request_slot_excluding(table, constraints, &BTreeSet::new())
}

/// As [`best_request_slot`], also skipping the slots in `excluded`.
pub fn best_request_slot_excluding(
    table: &KbTable,
    constraints: &Constraints,
    excluded: &BTreeSet<String>,
) -> Result<BestSlot> {
    let matches = match_entries(table, constraints)?;
    let n = matches.len();
    if n < 2 {
        return Err(DdrError::Precondition(format!(
            "best request slot needs n >= 2, got {n}"
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (col, slot) in table.schema.iter().enumerate() {
        if constraints.contains_key(slot) || excluded.contains(slot) {
            continue;
        }
        let mut buckets: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &matches {
            *buckets.entry(table.rows[i][col].as_str()).or_insert(0) += 1;
        }
        let ig = ig_from_counts(buckets.into_values().collect(), n);
        if best.map_or(true, |(_, b)| ig > b + IG_TIE_EPS) {
            best = Some((col, ig));
        }
    }
    Ok(match best {
        Some((col, ig)) if ig > IG_TIE_EPS => BestSlot::Slot(table.schema[col].clone()),
        _ => BestSlot::NoInformativeSlot,
    })
}
