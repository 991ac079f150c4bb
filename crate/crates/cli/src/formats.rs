//! On-disk formats: JSON-lines segments, ground-truth JSON, RTTM lines and
//! dendrogram merge lists.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use circletrack_core::ahc::{Dendrogram, RawObservation, Segment};
use circletrack_core::circular::Angle;
use circletrack_core::sim::{GroundTruth, SegmentTruth, SpeakerTruth};
use circletrack_core::ssl::{validate_ssl, BinLayout};
use circletrack_core::FRAME_SEC;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssl: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doa: Option<f64>,
}

/// One line of a segments file. Frames without an observation are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub id: u64,
    pub channel: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub embedding: Vec<f64>,
    pub frames: Vec<FrameRecord>,
}

/// Seconds of a frame index; exact for indices below 2^50.
pub fn frame_to_seconds(frame: u64) -> f64 {
    frame as f64 * 2.0 / 5.0
}

/// Nearest frame index of a time in seconds.
pub fn seconds_to_frame(s: f64) -> Result<u64, CliError> {
    if !s.is_finite() || s < 0.0 {
        return Err(CliError::Input(format!("time {s} is not a nonnegative number")));
    }
    Ok((s / FRAME_SEC).round() as u64)
}

impl SegmentRecord {
    pub fn from_segment(seg: &Segment) -> SegmentRecord {
        let frames = seg
            .frames
            .iter()
            .zip(seg.start_frame..)
            .filter_map(|(f, t)| {
                f.as_ref().map(|obs| match obs {
                    RawObservation::Ssl(v) => FrameRecord { t_index: t, ssl: Some(v.probs().to_vec()), doa: None },
                    RawObservation::Doa(a) => FrameRecord { t_index: t, ssl: None, doa: Some(a.radians()) },
                })
            })
            .collect();
        SegmentRecord {
            id: seg.id,
            channel: seg.channel,
            start_s: frame_to_seconds(seg.start_frame),
            end_s: frame_to_seconds(seg.end_frame),
            embedding: seg.embedding.clone(),
            frames,
        }
    }

    pub fn to_segment(&self, layouts: &mut BTreeMap<usize, BinLayout>) -> Result<Segment, CliError> {
        let bad = |msg: String| CliError::Input(format!("segment {}: {msg}", self.id));
        let start = seconds_to_frame(self.start_s)?;
        let end = seconds_to_frame(self.end_s)?;
        if end <= start {
            return Err(bad(format!("end {} s does not follow start {} s", self.end_s, self.start_s)));
        }
        let mut frames: Vec<Option<RawObservation>> = vec![None; (end - start) as usize];
        for f in &self.frames {
            if f.t_index < start || f.t_index >= end {
                return Err(bad(format!("frame {} outside [{start}, {end})", f.t_index)));
            }
            let obs = match (&f.ssl, f.doa) {
                (Some(raw), None) => {
                    if raw.is_empty() {
                        return Err(bad("empty SSL vector".into()));
                    }
                    let layout = match layouts.get(&raw.len()) {
                        Some(l) => l,
                        None => {
                            let l = BinLayout::new(raw.len()).map_err(|e| bad(e.to_string()))?;
                            layouts.entry(raw.len()).or_insert(l)
                        }
                    };
                    RawObservation::Ssl(validate_ssl(raw, layout).map_err(|e| bad(e.to_string()))?)
                }
                (None, Some(doa)) => RawObservation::Doa(Angle::new(doa).map_err(|e| bad(e.to_string()))?),
                (Some(_), Some(_)) => return Err(bad(format!("frame {} has both ssl and doa", f.t_index))),
                (None, None) => continue,
            };
            let slot = &mut frames[(f.t_index - start) as usize];
            if slot.is_some() {
                return Err(bad(format!("frame {} listed twice", f.t_index)));
            }
            *slot = Some(obs);
        }
        Segment::new(self.id, self.channel, start, end, self.embedding.clone(), frames).map_err(|e| bad(e.to_string()))
    }
}

pub fn write_segments<W: Write>(mut out: W, segments: &[Segment]) -> Result<(), CliError> {
    for s in segments {
        serde_json::to_writer(&mut out, &SegmentRecord::from_segment(s))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_segments<R: BufRead>(input: R) -> Result<Vec<Segment>, CliError> {
    let mut layouts = BTreeMap::new();
    let mut segments = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SegmentRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("segments line {}: {e}", n + 1)))?;
        segments.push(record.to_segment(&mut layouts)?);
    }
    if segments.is_empty() {
        return Err(CliError::Input("segments file is empty".into()));
    }
    Ok(segments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerRecord {
    pub index: usize,
    pub moving: bool,
    /// True angle in radians at every frame.
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSegmentRecord {
    pub id: u64,
    pub channel: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: usize,
    pub observed_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub meeting: String,
    pub frame_seconds: f64,
    pub speakers: Vec<SpeakerRecord>,
    pub segments: Vec<TruthSegmentRecord>,
}

impl TruthRecord {
    pub fn from_truth(meeting: &str, truth: &GroundTruth) -> TruthRecord {
        TruthRecord {
            meeting: meeting.to_string(),
            frame_seconds: FRAME_SEC,
            speakers: truth
                .speakers
                .iter()
                .enumerate()
                .map(|(index, s)| SpeakerRecord {
                    index,
                    moving: s.moving,
                    trajectory: s.trajectory.iter().map(|a| a.radians()).collect(),
                })
                .collect(),
            segments: truth
                .segments
                .iter()
                .map(|s| TruthSegmentRecord {
                    id: s.id,
                    channel: s.channel,
                    start_s: frame_to_seconds(s.start_frame),
                    end_s: frame_to_seconds(s.end_frame),
                    speaker: s.speaker,
                    observed_frames: s.observed_frames,
                })
                .collect(),
        }
    }

    pub fn to_truth(&self) -> Result<GroundTruth, CliError> {
        if (self.frame_seconds - FRAME_SEC).abs() > 1e-12 {
            return Err(CliError::Input(format!("truth frame_seconds {} is not {FRAME_SEC}", self.frame_seconds)));
        }
        let mut speakers = Vec::with_capacity(self.speakers.len());
        for (i, s) in self.speakers.iter().enumerate() {
            if s.index != i {
                return Err(CliError::Input(format!("truth speaker {i} has index {}", s.index)));
            }
            let trajectory = s
                .trajectory
                .iter()
                .map(|&a| Angle::new(a))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Input(format!("truth speaker {i}: {e}")))?;
            speakers.push(SpeakerTruth { trajectory, moving: s.moving });
        }
        let segments = self
            .segments
            .iter()
            .map(|s| {
                if s.speaker >= speakers.len() {
                    return Err(CliError::Input(format!("truth segment {} names unknown speaker {}", s.id, s.speaker)));
                }
                Ok(SegmentTruth {
                    id: s.id,
                    channel: s.channel,
                    start_frame: seconds_to_frame(s.start_s)?,
                    end_frame: seconds_to_frame(s.end_s)?,
                    speaker: s.speaker,
                    observed_frames: s.observed_frames,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GroundTruth { speakers, segments })
    }
}

/// A parsed `SPEAKER` line.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmLine {
    pub meeting: String,
    pub channel: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: String,
}

/// One `SPEAKER` line per segment, in segment order.
pub fn write_rttm<W: Write>(
    mut out: W,
    meeting: &str,
    segments: &[Segment],
    labels: &[(u64, usize)],
) -> Result<(), CliError> {
    for (seg, &(id, label)) in segments.iter().zip(labels) {
        debug_assert_eq!(seg.id, id);
        let start = frame_to_seconds(seg.start_frame);
        let dur = frame_to_seconds(seg.end_frame - seg.start_frame);
        writeln!(out, "SPEAKER {meeting} {} {start:.3} {dur:.3} spk{label}", seg.channel)?;
    }
    Ok(())
}

pub fn read_rttm<R: BufRead>(input: R) -> Result<Vec<RttmLine>, CliError> {
    let mut lines = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let bad = |msg: &str| CliError::Input(format!("rttm line {}: {msg}", n + 1));
        if fields[0] != "SPEAKER" || fields.len() < 6 {
            return Err(bad("expected `SPEAKER <meeting> <channel> <start> <dur> <label>`"));
        }
        let channel: u32 = fields[2].parse().map_err(|_| bad("bad channel"))?;
        let start: f64 = fields[3].parse().map_err(|_| bad("bad start time"))?;
        let dur: f64 = fields[4].parse().map_err(|_| bad("bad duration"))?;
        let start_frame = seconds_to_frame(start)?;
        let end_frame = seconds_to_frame(start + dur)?;
        lines.push(RttmLine {
            meeting: fields[1].to_string(),
            channel,
            start_frame,
            end_frame,
            label: fields[5].to_string(),
        });
    }
    Ok(lines)
}

/// Matches RTTM lines to truth segments by `(channel, start, end)` and
/// returns `(segment id, label index)` with labels numbered by first use.
pub fn rttm_to_clustering(lines: &[RttmLine], truth: &GroundTruth) -> Result<Vec<(u64, usize)>, CliError> {
    let mut by_span: BTreeMap<(u32, u64, u64), VecDeque<u64>> = BTreeMap::new();
    for s in &truth.segments {
        by_span.entry((s.channel, s.start_frame, s.end_frame)).or_default().push_back(s.id);
    }
    let mut label_index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(lines.len());
    for l in lines {
        let id = by_span
            .get_mut(&(l.channel, l.start_frame, l.end_frame))
            .and_then(|q| q.pop_front())
            .ok_or_else(|| {
                CliError::Input(format!(
                    "rttm line for channel {} at {:.3} s matches no remaining truth segment",
                    l.channel,
                    frame_to_seconds(l.start_frame)
                ))
            })?;
        let next = label_index.len();
        let label = *label_index.entry(l.label.as_str()).or_insert(next);
        out.push((id, label));
    }
    Ok(out)
}

/// `[[step, a, b, affinity], ...]`; infinite affinities are written as strings.
pub fn dendrogram_json(d: &Dendrogram) -> serde_json::Value {
    let affinity = |v: f64| {
        if v.is_finite() {
            serde_json::json!(v)
        } else {
            serde_json::json!(v.to_string())
        }
    };
    serde_json::Value::Array(
        d.merges.iter().map(|m| serde_json::json!([m.step, m.a, m.b, affinity(m.affinity)])).collect(),
    )
}
