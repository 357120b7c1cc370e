use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::agent::{EpisodeResult, ErrorMode};

/// Aggregate scores for one group of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub episodes: usize,
    pub sr: f64,
    pub gc: f64,
    pub plwsr: f64,
    pub plwgc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub overall: Scores,
    pub per_task_type: BTreeMap<String, Scores>,
    /// Episode count per error mode, failures and successes alike.
    pub error_modes: BTreeMap<String, usize>,
}

/// Path-length weight L*/max(L, L*).
pub fn path_weight(steps: usize, expert: usize) -> f64 {
    let denom = steps.max(expert);
    if denom == 0 {
        1.0
    } else {
        expert as f64 / denom as f64
    }
}

fn gc_fraction(r: &EpisodeResult) -> f64 {
    if r.goal_total == 0 {
        0.0
    } else {
        r.goal_satisfied as f64 / r.goal_total as f64
    }
}

fn scores(results: &[&EpisodeResult]) -> Scores {
    let n = results.len() as f64;
    let (mut sr, mut plwsr, mut plwgc) = (0.0, 0.0, 0.0);
    let (mut sat, mut total) = (0usize, 0usize);
    for r in results {
        let w = path_weight(r.steps, r.expert_length);
        if r.success {
            sr += 1.0;
            plwsr += w;
        }
        plwgc += gc_fraction(r) * w;
        sat += r.goal_satisfied;
        total += r.goal_total;
    }
    Scores {
        episodes: results.len(),
        sr: sr / n,
        gc: if total == 0 { 0.0 } else { sat as f64 / total as f64 },
        plwsr: plwsr / n,
        plwgc: plwgc / n,
    }
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let all: Vec<&EpisodeResult> = results.iter().collect();
    let mut groups: BTreeMap<String, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.task_type.clone()).or_default().push(r);
    }
    let mut error_modes: BTreeMap<String, usize> = ErrorMode::ALL.iter().map(|m| (m.name().to_string(), 0)).collect();
    for r in results {
        *error_modes.entry(r.error_mode.name().to_string()).or_default() += 1;
    }
    Ok(Metrics {
        overall: scores(&all),
        per_task_type: groups.into_iter().map(|(k, v)| (k, scores(&v))).collect(),
        error_modes,
    })
}
