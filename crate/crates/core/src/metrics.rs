//! Tower-height statistics over sets of transcripts.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::session::Transcript;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    Empty,
    /// Session at this position disagrees with the first on steps or object count.
    MixedConfig { position: usize },
    Incomplete { session_index: usize },
    ShapeMismatch,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Empty => f.write_str("no sessions to aggregate"),
            MetricsError::MixedConfig { position } => {
                write!(f, "transcript #{position} has a different step count or object count")
            }
            MetricsError::Incomplete { session_index } => {
                write!(f, "session {session_index} is incomplete")
            }
            MetricsError::ShapeMismatch => f.write_str("summaries differ in step count"),
        }
    }
}

/// Rows are sessions; column `j` is the max tower height after step `j`
/// (column 0 is the initial scene).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightMatrix {
    pub steps: usize,
    pub object_count: usize,
    pub rows: Vec<Vec<usize>>,
}

impl HeightMatrix {
    pub fn new(steps: usize, object_count: usize, rows: Vec<Vec<usize>>) -> Result<Self, MetricsError> {
        if rows.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(position) = rows
            .iter()
            .position(|r| r.len() != steps + 1 || r.iter().any(|&h| h == 0 || h > object_count))
        {
            return Err(MetricsError::MixedConfig { position });
        }
        Ok(HeightMatrix { steps, object_count, rows })
    }

    pub fn sessions(&self) -> usize {
        self.rows.len()
    }
}

pub fn height_matrix(transcripts: &[Transcript]) -> Result<HeightMatrix, MetricsError> {
    let first = transcripts.first().ok_or(MetricsError::Empty)?;
    let steps = first.header.config.steps;
    let objects = first.header.config.object_count();
    let mut rows = Vec::with_capacity(transcripts.len());
    for (position, t) in transcripts.iter().enumerate() {
        if t.header.config.steps != steps || t.header.config.object_count() != objects {
            return Err(MetricsError::MixedConfig { position });
        }
        if !t.footer.complete || t.steps.len() != steps {
            return Err(MetricsError::Incomplete {
                session_index: t.header.session_index,
            });
        }
        rows.push(t.heights());
    }
    HeightMatrix::new(steps, objects, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub object_count: usize,
    pub sessions: usize,
    /// Mean instantaneous height per step, `steps + 1` entries.
    pub mean: Vec<f64>,
    /// Mean of the per-session running maximum per step.
    pub running_max_mean: Vec<f64>,
    /// `histogram[step][h - 1]`: sessions at height `h` after `step`.
    pub histogram: Vec<Vec<usize>>,
    /// Highest height each session reached.
    pub session_max: Vec<usize>,
    /// `max_distribution[h - 1]`: sessions whose maximum was `h`.
    pub max_distribution: Vec<usize>,
    /// `first_passage[session][h - 1]`: first step with height >= h.
    pub first_passage: Vec<Vec<Option<usize>>>,
    pub matrix: HeightMatrix,
}

impl Summary {
    /// Fraction of sessions that built a tower of every object.
    pub fn reach_probability(&self) -> f64 {
        let reached = self.session_max.iter().filter(|&&m| m == self.object_count).count();
        reached as f64 / self.sessions as f64
    }
}

pub fn summarize(matrix: &HeightMatrix) -> Summary {
    let n = matrix.sessions();
    let cols = matrix.steps + 1;
    let levels = matrix.object_count;

    let mut histogram = vec![vec![0usize; levels]; cols];
    let mut sums = vec![0usize; cols];
    let mut running_sums = vec![0usize; cols];
    let mut session_max = Vec::with_capacity(n);
    let mut first_passage = Vec::with_capacity(n);

    for row in &matrix.rows {
        let mut running = 0;
        let mut passage = vec![None; levels];
        for (step, &h) in row.iter().enumerate() {
            histogram[step][h - 1] += 1;
            sums[step] += h;
            running = running.max(h);
            running_sums[step] += running;
            for slot in passage.iter_mut().take(h) {
                slot.get_or_insert(step);
            }
        }
        session_max.push(running);
        first_passage.push(passage);
    }

    let mut max_distribution = vec![0usize; levels];
    for &m in &session_max {
        max_distribution[m - 1] += 1;
    }
    Summary {
        steps: matrix.steps,
        object_count: levels,
        sessions: n,
        mean: sums.iter().map(|&s| s as f64 / n as f64).collect(),
        running_max_mean: running_sums.iter().map(|&s| s as f64 / n as f64).collect(),
        histogram,
        session_max,
        max_distribution,
        first_passage,
        matrix: matrix.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Differences are `a − b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub steps: usize,
    pub mean_diff: Vec<f64>,
    pub mean_diff_ci: Vec<Interval>,
    pub reach_a: f64,
    pub reach_b: f64,
    pub reach_diff: f64,
    pub reach_diff_ci: Interval,
    pub resamples: usize,
    pub seed: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn interval(mut samples: Vec<f64>) -> Interval {
    samples.sort_by(f64::total_cmp);
    Interval {
        lo: percentile(&samples, 0.025),
        hi: percentile(&samples, 0.975),
    }
}

/// Resampled per-step means and reach fraction of one group.
fn resample_stats(s: &Summary, rng: &mut ChaCha8Rng, means: &mut [f64]) -> f64 {
    let n = s.sessions;
    means.iter_mut().for_each(|m| *m = 0.0);
    let mut reached = 0usize;
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        for (m, &h) in means.iter_mut().zip(&s.matrix.rows[i]) {
            *m += h as f64;
        }
        reached += usize::from(s.session_max[i] == s.object_count);
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    reached as f64 / n as f64
}

/// Two-sample percentile bootstrap (95%) over sessions. The groups may
/// differ in object count; reach is always measured against each group's
/// own full height.
pub fn compare(a: &Summary, b: &Summary, resamples: usize, seed: u64) -> Result<Comparison, MetricsError> {
    if a.steps != b.steps || resamples == 0 {
        return Err(MetricsError::ShapeMismatch);
    }
    let cols = a.steps + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_samples = vec![Vec::with_capacity(resamples); cols];
    let mut reach_samples = Vec::with_capacity(resamples);
    let mut ma = vec![0.0; cols];
    let mut mb = vec![0.0; cols];
    for _ in 0..resamples {
        let ra = resample_stats(a, &mut rng, &mut ma);
        let rb = resample_stats(b, &mut rng, &mut mb);
        for (j, samples) in mean_samples.iter_mut().enumerate() {
            samples.push(ma[j] - mb[j]);
        }
        reach_samples.push(ra - rb);
    }
    let reach_a = a.reach_probability();
    let reach_b = b.reach_probability();
    Ok(Comparison {
        steps: a.steps,
        mean_diff: a.mean.iter().zip(&b.mean).map(|(x, y)| x - y).collect(),
        mean_diff_ci: mean_samples.into_iter().map(interval).collect(),
        reach_a,
        reach_b,
        reach_diff: reach_a - reach_b,
        reach_diff_ci: interval(reach_samples),
        resamples,
        seed,
    })
}

/// Steps where the height fell although the picked object did not come
/// from a tallest column. Empty for every valid transcript.
pub fn unexplained_height_drops(t: &Transcript) -> Vec<usize> {
    let mut state = t.header.initial_state.clone();
    let mut bad = Vec::new();
    for record in &t.steps {
        let before = state.max_tower_height();
        let from_tallest = state
            .locate(record.decision.action.source)
            .and_then(|(cell, _)| state.column(cell))
            .is_some_and(|col| col.len() == before);
        let Ok((next, _)) = state.apply_action(record.decision.action) else {
            bad.push(record.step);
            break;
        };
        if next.max_tower_height() < before && !from_tallest {
            bad.push(record.step);
        }
        state = next;
    }
    bad
}
