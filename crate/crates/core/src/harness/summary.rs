use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optimizers::{Trace, TraceMeta, TraceRecord};

/// Suboptimalities at or below this value are clamped before taking `log₁₀`.
pub const LOG_FLOOR: f64 = 1e-16;

/// Seed-averaged statistics of one `(algorithm, m, T, c)` combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub algorithm: String,
    pub batch_size: usize,
    pub horizon: usize,
    pub t_effective: usize,
    pub c: Option<f64>,
    pub replicates: usize,
    pub seeds: Vec<u64>,
    /// Mean of `log₁₀ subopt` at each `t = 0..=T_effective`.
    pub mean_log10_subopt: Vec<f64>,
    pub stderr_log10_subopt: Vec<f64>,
    /// Mean final suboptimality on the linear scale.
    pub final_mean_subopt: f64,
    pub final_stderr_subopt: f64,
    pub mean_wall_time_s: f64,
}

/// Smallest final mean error over the horizons of one `(algorithm, m, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub algorithm: String,
    pub batch_size: usize,
    pub c: Option<f64>,
    pub horizon: usize,
    pub final_mean_subopt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epsilon: f64,
    pub f_star: f64,
    pub records: Vec<SummaryRecord>,
    pub best_over_horizon: Vec<BestRecord>,
}

impl Summary {
    pub fn record(&self, algorithm: &str, batch_size: usize, horizon: usize, c: f64) -> Option<&SummaryRecord> {
        self.records.iter().find(|r| {
            r.algorithm == algorithm && r.batch_size == batch_size && r.horizon == horizon && r.c == Some(c)
        })
    }

    pub fn best(&self, algorithm: &str, batch_size: usize, c: f64) -> Option<&BestRecord> {
        self.best_over_horizon
            .iter()
            .find(|r| r.algorithm == algorithm && r.batch_size == batch_size && r.c == Some(c))
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Total order on the optional stepsize factor, used as a grouping key.
fn c_key(c: Option<f64>) -> (bool, u64) {
    match c {
        Some(v) => (true, v.to_bits()),
        None => (false, 0),
    }
}

/// Groups traces by `(algorithm, m, T, c)` and averages over seeds. Traces are
/// sorted by seed within a group, so the result does not depend on input order.
pub fn summarize(traces: &[Trace]) -> Result<Summary> {
    let (epsilon, f_star) = match traces.first() {
        Some(t) => (t.meta.epsilon, t.meta.f_star),
        None => (0.0, 0.0),
    };
    if let Some(first) = traces.first() {
        for t in traces {
            let (a, b) = (&first.meta, &t.meta);
            if a.f_star != b.f_star || a.epsilon != b.epsilon || a.n != b.n || a.d != b.d {
                return Err(Error::MismatchedObjective(format!(
                    "{} (seed {}) does not share the objective or budget of {} (seed {})",
                    b.algorithm, b.seed, a.algorithm, a.seed
                )));
            }
        }
    }

    let mut groups: BTreeMap<(String, usize, usize, (bool, u64)), Vec<&Trace>> = BTreeMap::new();
    for t in traces {
        let m = &t.meta;
        groups
            .entry((m.algorithm.clone(), m.batch_size, m.horizon, c_key(m.c)))
            .or_default()
            .push(t);
    }

    let mut records = Vec::with_capacity(groups.len());
    for ((algorithm, batch_size, horizon, _), mut group) in groups {
        group.sort_by_key(|t| t.meta.seed);
        let lengths = group.iter().map(|t| t.records.len()).min().unwrap_or(0);
        if group.iter().any(|t| t.records.len() != lengths) {
            return Err(Error::MismatchedObjective(format!(
                "traces of {algorithm} (m = {batch_size}, T = {horizon}) differ in length"
            )));
        }
        let mut mean_curve = Vec::with_capacity(lengths);
        let mut stderr_curve = Vec::with_capacity(lengths);
        let mut column = vec![0.0; group.len()];
        for step in 0..lengths {
            for (slot, t) in column.iter_mut().zip(&group) {
                *slot = t.records[step].subopt.max(LOG_FLOOR).log10();
            }
            let (mean, se) = mean_stderr(&column);
            mean_curve.push(mean);
            stderr_curve.push(se);
        }
        let finals: Vec<f64> = group.iter().map(|t| t.final_record().subopt).collect();
        let (final_mean, final_se) = mean_stderr(&finals);
        let times: Vec<f64> = group.iter().map(|t| t.meta.wall_time_s).collect();
        records.push(SummaryRecord {
            algorithm,
            batch_size,
            horizon,
            t_effective: lengths.saturating_sub(1),
            c: group[0].meta.c,
            replicates: group.len(),
            seeds: group.iter().map(|t| t.meta.seed).collect(),
            mean_log10_subopt: mean_curve,
            stderr_log10_subopt: stderr_curve,
            final_mean_subopt: final_mean,
            final_stderr_subopt: final_se,
            mean_wall_time_s: mean_stderr(&times).0,
        });
    }

    let mut best: BTreeMap<(String, usize, (bool, u64)), BestRecord> = BTreeMap::new();
    for r in &records {
        let key = (r.algorithm.clone(), r.batch_size, c_key(r.c));
        let candidate = BestRecord {
            algorithm: r.algorithm.clone(),
            batch_size: r.batch_size,
            c: r.c,
            horizon: r.horizon,
            final_mean_subopt: r.final_mean_subopt,
        };
        best.entry(key)
            .and_modify(|b| {
                if candidate.final_mean_subopt < b.final_mean_subopt {
                    *b = candidate.clone();
                }
            })
            .or_insert(candidate);
    }

    Ok(Summary {
        epsilon,
        f_star,
        records,
        best_over_horizon: best.into_values().collect(),
    })
}

/// Reads every `<stem>.csv` in `dir` that has a `<stem>.json` metadata sidecar,
/// in file-name order.
pub fn load_traces(dir: &Path) -> Result<Vec<Trace>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && p.with_extension("json").exists())
        .collect();
    paths.sort();
    paths.iter().map(|p| load_trace(p)).collect()
}

pub fn load_trace(csv_path: &Path) -> Result<Trace> {
    let meta: TraceMeta = serde_json::from_reader(BufReader::new(File::open(csv_path.with_extension("json"))?))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| invalid(format!("short row in {}", csv_path.display())))
        };
        let number = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| invalid(format!("bad number in {}: {e}", csv_path.display())))
        };
        records.push(TraceRecord {
            t: field(0)?.parse().map_err(|e| invalid(format!("bad step in {}: {e}", csv_path.display())))?,
            subopt: number(1)?,
            eps_cum: number(2)?,
            iterate: None,
        });
    }
    Ok(Trace { meta, records })
}
