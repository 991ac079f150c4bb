//! Grid search over affinity weights and stopping thresholds.

use std::path::Path;

use circletrack_core::ahc::{cluster, AffinityConfig, Segment};
use circletrack_core::eval::{score, EvalReport};
use circletrack_core::sim::GroundTruth;
use circletrack_core::tracker::KalmanParams;
use rayon::prelude::*;

use crate::commands::{read_segments_file, read_truth_file};
use crate::{AffinityKind, CliError};

#[derive(Debug, Clone)]
pub struct Meeting {
    pub name: String,
    pub segments: Vec<Segment>,
    pub truth: GroundTruth,
}

impl Meeting {
    /// Reads `segments.jsonl` and `truth.json` from a meeting directory.
    pub fn load(dir: &Path) -> Result<Meeting, CliError> {
        let truth_record = read_truth_file(&dir.join("truth.json"))?;
        Ok(Meeting {
            name: truth_record.meeting.clone(),
            segments: read_segments_file(&dir.join("segments.jsonl"))?,
            truth: truth_record.to_truth()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub weight_speaker: f64,
    pub weight_location: f64,
    pub threshold: f64,
    /// Mean over meetings of the frame error rate.
    pub mean_error: f64,
    /// Mean over meetings that have stationary (moving) speakers.
    pub stationary_error: Option<f64>,
    pub moving_error: Option<f64>,
    pub mean_cluster_count_delta: f64,
}

/// Reports for every `(weights, threshold)` pair of one meeting, weights-major.
///
/// Each weight pair grows one full dendrogram; thresholds are cuts of it.
pub fn meeting_reports(
    meeting: &Meeting,
    kind: AffinityKind,
    weights: &[(f64, f64)],
    thresholds: &[f64],
    params: KalmanParams,
) -> Result<Vec<EvalReport>, CliError> {
    let mut reports = Vec::with_capacity(weights.len() * thresholds.len());
    for &(ws, wl) in weights {
        let config = AffinityConfig {
            weight_speaker: ws,
            weight_location: wl,
            location_kind: kind.location(),
            stop_threshold: f64::NEG_INFINITY,
            params,
        };
        let full = cluster(&meeting.segments, &config)
            .map_err(|e| CliError::Input(format!("meeting {}: {e}", meeting.name)))?;
        for &th in thresholds {
            reports.push(score(&full.dendrogram.cut(th), &meeting.truth)?);
        }
    }
    Ok(reports)
}

fn mean_some(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row per `(weights, threshold)` pair, weights-major; meetings run on
/// the rayon pool.
pub fn sweep(
    meetings: &[Meeting],
    kind: AffinityKind,
    weights: &[(f64, f64)],
    thresholds: &[f64],
    params: KalmanParams,
) -> Result<Vec<SweepRow>, CliError> {
    if meetings.is_empty() || weights.is_empty() || thresholds.is_empty() {
        return Err(CliError::Input("sweep needs at least one meeting, weight pair and threshold".into()));
    }
    let per_meeting: Vec<Vec<EvalReport>> = meetings
        .par_iter()
        .map(|m| meeting_reports(m, kind, weights, thresholds, params))
        .collect::<Result<_, _>>()?;
    let n = meetings.len() as f64;
    let mut rows = Vec::with_capacity(weights.len() * thresholds.len());
    for (wi, &(ws, wl)) in weights.iter().enumerate() {
        for (ti, &th) in thresholds.iter().enumerate() {
            let k = wi * thresholds.len() + ti;
            let col = || per_meeting.iter().map(move |r| &r[k]);
            rows.push(SweepRow {
                weight_speaker: ws,
                weight_location: wl,
                threshold: th,
                mean_error: col().map(|r| r.frame_error_rate).sum::<f64>() / n,
                stationary_error: mean_some(col().map(|r| r.stationary_error_rate)),
                moving_error: mean_some(col().map(|r| r.moving_error_rate)),
                mean_cluster_count_delta: col().map(|r| r.cluster_count_delta as f64).sum::<f64>() / n,
            });
        }
    }
    Ok(rows)
}

/// The row with the lowest mean error; the first one on ties.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().reduce(|best, r| if r.mean_error < best.mean_error { r } else { best })
}

pub fn write_table<W: std::io::Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
    writeln!(out, "weight_speaker\tweight_location\tthreshold\tmean_error\tstationary_error\tmoving_error\tmean_cluster_count_delta")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{}\t{}\t{:.3}",
            r.weight_speaker,
            r.weight_location,
            r.threshold,
            r.mean_error,
            opt(r.stationary_error),
            opt(r.moving_error),
            r.mean_cluster_count_delta
        )?;
    }
    Ok(())
}
