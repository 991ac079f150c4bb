//! Scoring a clustering against ground truth.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::sim::GroundTruth;
use crate::{Error, Result};

/// Minimum-cost assignment of rows to columns.
///
/// Rectangular inputs are padded with zero-cost dummy entries; a row matched
/// to a dummy column is returned as `None`. Ties are resolved by scanning
/// columns in increasing index order, so the result is deterministic.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Result<Vec<Option<usize>>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("empty cost matrix".into()));
    }
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("ragged cost matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost matrix has non-finite entries".into()));
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };

    // Shortest augmenting paths with row/column potentials; index 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = at(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    for j in 1..=n {
        let i = row_of[j];
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
        }
    }
    Ok(assignment)
}

/// Total cost of an assignment produced by [`hungarian_assign`].
pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| cost[i][j]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Fraction of observed frames whose cluster is not mapped to their speaker.
    pub frame_error_rate: f64,
    /// Number of clusters minus number of true speakers.
    pub cluster_count_delta: i64,
    /// Error restricted to frames of stationary speakers, if there are any.
    pub stationary_error_rate: Option<f64>,
    /// Error restricted to frames of moving speakers, if there are any.
    pub moving_error_rate: Option<f64>,
    /// `(cluster label, assigned speaker)` for every output cluster.
    pub assignment: Vec<(usize, Option<usize>)>,
    pub total_frames: u64,
}

/// Scores `(segment id, cluster label)` pairs against the truth.
///
/// Frames are counted once per segment, so overlapped speech on two channels
/// counts twice. Segments without observed frames carry no weight.
pub fn score(clustering: &[(u64, usize)], truth: &GroundTruth) -> Result<EvalReport> {
    let mut label_of = BTreeMap::new();
    for &(id, label) in clustering {
        if label_of.insert(id, label).is_some() {
            return Err(Error::SegmentMismatch(alloc::format!("segment {id} labelled twice")));
        }
    }
    if label_of.len() != truth.segments.len() {
        return Err(Error::SegmentMismatch(alloc::format!(
            "clustering has {} segments, truth has {}",
            label_of.len(),
            truth.segments.len()
        )));
    }
    let mut labels: Vec<usize> = label_of.values().copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let mut speakers: Vec<usize> = truth.segments.iter().map(|s| s.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    let row = |l: usize| labels.binary_search(&l).unwrap();
    let col = |s: usize| speakers.binary_search(&s).unwrap();

    let mut overlap = vec![vec![0u64; speakers.len()]; labels.len()];
    for seg in &truth.segments {
        let label = *label_of
            .get(&seg.id)
            .ok_or_else(|| Error::SegmentMismatch(alloc::format!("segment {} missing from clustering", seg.id)))?;
        overlap[row(label)][col(seg.speaker)] += seg.observed_frames;
    }
    let cost: Vec<Vec<f64>> = overlap.iter().map(|r| r.iter().map(|&c| -(c as f64)).collect()).collect();
    let assignment = hungarian_assign(&cost)?;

    let moving = |s: usize| truth.speakers.get(s).is_some_and(|t| t.moving);
    let (mut total, mut hit) = ([0u64; 2], [0u64; 2]);
    for seg in &truth.segments {
        let k = moving(seg.speaker) as usize;
        total[k] += seg.observed_frames;
        if assignment[row(label_of[&seg.id])] == Some(col(seg.speaker)) {
            hit[k] += seg.observed_frames;
        }
    }
    let rate = |h: u64, t: u64| if t == 0 { None } else { Some(1.0 - h as f64 / t as f64) };
    let all = total[0] + total[1];
    Ok(EvalReport {
        frame_error_rate: rate(hit[0] + hit[1], all).unwrap_or(0.0),
        cluster_count_delta: labels.len() as i64 - speakers.len() as i64,
        stationary_error_rate: rate(hit[0], total[0]),
        moving_error_rate: rate(hit[1], total[1]),
        assignment: labels.iter().zip(&assignment).map(|(&l, a)| (l, a.map(|j| speakers[j]))).collect(),
        total_frames: all,
    })
}
