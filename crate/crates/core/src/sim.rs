//! Synthetic meetings with known speakers, trajectories and segment labels.
//!
//! Every random draw comes from a named sub-stream of the meeting seed, so
//! changing one part of the generator does not perturb the others.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ahc::{RawObservation, Segment};
use crate::circular::{vm_sample, Angle, VonMises, KAPPA_MAX};
use crate::math::{ceil, exp, round, sqrt, PI, TAU};
use crate::rng::{substream, StreamRng};
use crate::ssl::{BinLayout, SslVector};
use crate::{Error, Result, FRAME_SEC};

/// How moving speakers move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MovementMode {
    /// von Mises random walk, one step per frame.
    RandomWalk,
    /// Constant-speed walks between uniformly drawn waypoints.
    Waypoints { seconds_between: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_speakers: usize,
    pub meeting_seconds: f64,
    pub n_bins: usize,
    pub embedding_dim: usize,
    /// Transition concentration of moving speakers' random walk, unless
    /// `move_step_concentration` overrides it.
    pub kappa_z_true: f64,
    /// Concentration of the discretized von Mises SSL frames.
    pub kappa_phi_true: f64,
    pub moving_fraction: f64,
    pub move_step_concentration: Option<f64>,
    pub movement: MovementMode,
    /// Resample moving trajectories until they pass [`passes_movement_test`].
    pub require_movement: bool,
    pub segment_min_seconds: f64,
    pub segment_max_seconds: f64,
    /// Silences are drawn like segment lengths and scaled by this.
    pub gap_factor: f64,
    pub overlap_probability: f64,
    /// Probability that a frame inside a segment carries no observation.
    pub frame_dropout: f64,
    /// Draw each frame's SSL peak around the true angle from VM(0, kappa_phi_true).
    pub ssl_jitter: bool,
    /// Standard deviation of the log-normal factor applied to each bin.
    pub ssl_noise: f64,
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_speakers: 4,
            meeting_seconds: 600.0,
            n_bins: 360,
            embedding_dim: 128,
            kappa_z_true: 50.0,
            kappa_phi_true: 20.0,
            moving_fraction: 0.5,
            move_step_concentration: None,
            movement: MovementMode::RandomWalk,
            require_movement: true,
            segment_min_seconds: 2.0,
            segment_max_seconds: 10.0,
            gap_factor: 0.2,
            overlap_probability: 0.1,
            frame_dropout: 0.1,
            ssl_jitter: true,
            ssl_noise: 0.0,
            embedding_noise: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(alloc::format!("sim: {what}")));
        let kappa_ok = |k: f64| (0.0..=KAPPA_MAX).contains(&k);
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_speakers == 0 {
            return bad("n_speakers must be positive");
        }
        if !(self.meeting_seconds >= FRAME_SEC && self.meeting_seconds.is_finite()) {
            return bad("meeting_seconds must cover at least one frame");
        }
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2");
        }
        if self.embedding_dim < self.n_speakers {
            return bad("embedding_dim must be at least n_speakers for orthogonal speaker centroids");
        }
        if !kappa_ok(self.kappa_z_true) || !kappa_ok(self.kappa_phi_true) {
            return bad("concentrations must lie in [0, KAPPA_MAX]");
        }
        if self.move_step_concentration.is_some_and(|k| !kappa_ok(k)) {
            return bad("move_step_concentration must lie in [0, KAPPA_MAX]");
        }
        if let MovementMode::Waypoints { seconds_between } = self.movement {
            if !(seconds_between >= FRAME_SEC && seconds_between.is_finite()) {
                return bad("waypoint spacing must cover at least one frame");
            }
        }
        if !unit(self.moving_fraction) || !unit(self.overlap_probability) || !unit(self.frame_dropout) {
            return bad("moving_fraction, overlap_probability and frame_dropout must lie in [0, 1]");
        }
        if !(self.segment_min_seconds >= FRAME_SEC && self.segment_max_seconds >= self.segment_min_seconds)
            || !self.segment_max_seconds.is_finite()
        {
            return bad("segment lengths need FRAME_SEC <= min <= max");
        }
        if !(self.gap_factor >= 0.0 && self.gap_factor.is_finite()) {
            return bad("gap_factor must be nonnegative");
        }
        if !(self.ssl_noise >= 0.0 && self.ssl_noise.is_finite()) || !(self.embedding_noise >= 0.0 && self.embedding_noise.is_finite()) {
            return bad("noise levels must be nonnegative");
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        let f = ceil(self.meeting_seconds / FRAME_SEC) as usize;
        f.max(1)
    }

    pub fn n_moving(&self) -> usize {
        round(self.moving_fraction * self.n_speakers as f64) as usize
    }

    pub fn step_concentration(&self) -> f64 {
        self.move_step_concentration.unwrap_or(self.kappa_z_true)
    }

    /// Speech each side of the movement test needs: 30 s per hour of meeting.
    pub fn min_region_seconds(&self) -> f64 {
        30.0 * self.meeting_seconds / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTruth {
    /// True angle at every frame of the meeting.
    pub trajectory: Vec<Angle>,
    pub moving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTruth {
    pub id: u64,
    pub channel: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    pub speaker: usize,
    pub observed_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub speakers: Vec<SpeakerTruth>,
    pub segments: Vec<SegmentTruth>,
}

const ARC_BINS: usize = 30;
const HIST_BINS: usize = 360;
const MAX_ATTEMPTS: usize = 1000;

/// Whether two disjoint arcs of at least pi/6 split the circle into two
/// regions that each hold at least `min_frames` of the given frames.
///
/// Angles are binned to one degree and arcs start on bin edges.
pub fn passes_movement_test(angles: &[Angle], min_frames: usize) -> bool {
    let mut hist = [0usize; HIST_BINS];
    for a in angles {
        let x = (a.radians() + PI) / TAU;
        let b = ((x * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        hist[b] += 1;
    }
    let mut prefix = [0usize; 2 * HIST_BINS + 1];
    for i in 0..2 * HIST_BINS {
        prefix[i + 1] = prefix[i] + hist[i % HIST_BINS];
    }
    let count = |from: usize, to: usize| prefix[to] - prefix[from];
    // first arc at [i, i + 30), second at [j, j + 30); regions between them
    for i in 0..HIST_BINS {
        for gap in 1..=(HIST_BINS - 2 * ARC_BINS - 1) {
            let j = i + ARC_BINS + gap;
            let first = count(i + ARC_BINS, j);
            let second = count(j + ARC_BINS, i + HIST_BINS);
            if first >= min_frames && second >= min_frames {
                return true;
            }
        }
    }
    false
}

fn draw_trajectory(config: &SimConfig, moving: bool, rng: &mut StreamRng) -> Vec<Angle> {
    let n = config.total_frames();
    let start = vm_sample(&VonMises::uniform(), rng);
    if !moving {
        return vec![start; n];
    }
    match config.movement {
        MovementMode::RandomWalk => {
            let kappa = config.step_concentration();
            let mut z = start;
            (0..n)
                .map(|t| {
                    if t > 0 {
                        z = vm_sample(&VonMises::clamped(z, kappa), rng);
                    }
                    z
                })
                .collect()
        }
        MovementMode::Waypoints { seconds_between } => {
            let leg = ((seconds_between / FRAME_SEC) as usize).max(1);
            let mut from = start;
            let mut to = vm_sample(&VonMises::uniform(), rng);
            (0..n)
                .map(|t| {
                    if t > 0 && t % leg == 0 {
                        from = to;
                        to = vm_sample(&VonMises::uniform(), rng);
                    }
                    let delta = Angle::wrap(to.radians() - from.radians()).radians();
                    from.rotate(delta * (t % leg) as f64 / leg as f64)
                })
                .collect()
        }
    }
}

/// The full-meeting trajectory of one speaker. The first `n_moving` speakers
/// move; the rest hold a uniformly drawn angle.
///
/// With `require_movement`, moving trajectories are redrawn until they pass
/// [`passes_movement_test`] scaled to the meeting length.
pub fn simulate_trajectory(config: &SimConfig, speaker_index: usize, seed: u64) -> Result<Vec<Angle>> {
    config.validate()?;
    let moving = speaker_index < config.n_moving();
    let mut rng = substream(seed, "trajectory", speaker_index as u64);
    if !moving || !config.require_movement {
        return Ok(draw_trajectory(config, moving, &mut rng));
    }
    let min_frames = ceil(config.min_region_seconds() / FRAME_SEC) as usize;
    for _ in 0..MAX_ATTEMPTS {
        let traj = draw_trajectory(config, true, &mut rng);
        if passes_movement_test(&traj, min_frames.max(1)) {
            return Ok(traj);
        }
    }
    Err(Error::RejectionLimit(alloc::format!(
        "no trajectory for speaker {speaker_index} passed the movement test in {MAX_ATTEMPTS} attempts; \
         lower move_step_concentration or lengthen the meeting"
    )))
}

/// One SSL frame: a discretized von Mises around `true_angle`, optionally
/// recentred by VM(0, kappa) jitter and perturbed by log-normal bin noise.
pub fn emit_ssl_frame<R: Rng + ?Sized>(
    true_angle: Angle,
    kappa_phi_true: f64,
    layout: &BinLayout,
    jitter: bool,
    noise: f64,
    rng: &mut R,
) -> SslVector {
    let centre = if jitter && kappa_phi_true > 0.0 {
        vm_sample(&VonMises::clamped(true_angle, kappa_phi_true), rng)
    } else {
        true_angle
    };
    let mut probs = layout.discretized_von_mises(centre, kappa_phi_true);
    if noise > 0.0 {
        for p in probs.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p *= exp(noise * z);
        }
    }
    SslVector::from_nonnegative(probs)
}

/// `centroid + noise_scale / sqrt(D) * N(0, I)`, renormalized.
pub fn emit_embedding<R: Rng + ?Sized>(centroid: &[f64], noise_scale: f64, rng: &mut R) -> Vec<f64> {
    if noise_scale == 0.0 {
        return centroid.to_vec();
    }
    let sd = noise_scale / sqrt(centroid.len() as f64);
    let v: Vec<f64> = centroid
        .iter()
        .map(|c| {
            let z: f64 = rng.sample(StandardNormal);
            c + sd * z
        })
        .collect();
    normalized(v)
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = sqrt(v.iter().map(|x| x * x).sum());
    v.into_iter().map(|x| x / n).collect()
}

/// Random orthonormal vectors by Gram-Schmidt on Gaussian draws.
fn speaker_centroids(config: &SimConfig) -> Vec<Vec<f64>> {
    let mut rng = substream(config.seed, "centroids", 0);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(config.n_speakers);
    while out.len() < config.n_speakers {
        let mut v: Vec<f64> = (0..config.embedding_dim).map(|_| rng.sample(StandardNormal)).collect();
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = sqrt(v.iter().map(|x| x * x).sum());
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

struct Turn {
    channel: u32,
    start: u64,
    end: u64,
    speaker: usize,
}

fn frames_between(rng: &mut StreamRng, lo: f64, hi: f64) -> u64 {
    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    round(s / FRAME_SEC) as u64
}

/// Turn-taking on channel 0 with occasional overlapping turns on channel 1.
/// No speaker ever holds two turns at once.
fn layout_turns(config: &SimConfig) -> Vec<Turn> {
    let mut rng = substream(config.seed, "layout", 0);
    let total = config.total_frames() as u64;
    let (lo, hi) = (config.segment_min_seconds, config.segment_max_seconds);
    let n = config.n_speakers;
    let mut busy_until = vec![0u64; n];
    let mut channel1_free = 0u64;
    let mut turns = Vec::new();
    let mut t = 0u64;
    let mut prev: Option<usize> = None;
    while t < total {
        let free: Vec<usize> = (0..n).filter(|&s| busy_until[s] <= t && (n == 1 || Some(s) != prev)).collect();
        if free.is_empty() {
            t = (0..n).filter(|&s| Some(s) != prev || n == 1).map(|s| busy_until[s]).min().unwrap_or(t + 1).max(t + 1);
            continue;
        }
        let speaker = free[rng.random_range(0..free.len())];
        let len = frames_between(&mut rng, lo, hi).max(1);
        let end = (t + len).min(total);
        turns.push(Turn { channel: 0, start: t, end, speaker });
        busy_until[speaker] = end;

        if rng.random::<f64>() < config.overlap_probability {
            let start = t + rng.random_range(0..end - t);
            let others: Vec<usize> = (0..n).filter(|&s| s != speaker && busy_until[s] <= start).collect();
            if start >= channel1_free && !others.is_empty() {
                let who = others[rng.random_range(0..others.len())];
                let oend = (start + frames_between(&mut rng, lo, hi).max(1)).min(total);
                if oend > start {
                    turns.push(Turn { channel: 1, start, end: oend, speaker: who });
                    busy_until[who] = oend;
                    channel1_free = oend;
                }
            }
        }
        prev = Some(speaker);
        t = end + frames_between(&mut rng, lo * config.gap_factor, hi * config.gap_factor);
    }
    turns.sort_by_key(|s| (s.start, s.channel));
    turns
}

/// Generates a meeting: speaker trajectories, segments with SSL frames and
/// noisy embeddings, and the ground truth.
///
/// Segment ids follow `(start, channel)` order. Dropout never empties a
/// segment completely: if every frame is dropped the middle one is kept.
pub fn simulate_meeting(config: &SimConfig) -> Result<(Vec<Segment>, GroundTruth)> {
    config.validate()?;
    let layout = BinLayout::new(config.n_bins)?;
    let speakers = (0..config.n_speakers)
        .map(|s| {
            Ok(SpeakerTruth {
                trajectory: simulate_trajectory(config, s, config.seed)?,
                moving: s < config.n_moving(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let centroids = speaker_centroids(config);

    let mut segments = Vec::new();
    let mut truth_segments = Vec::new();
    for (id, turn) in layout_turns(config).into_iter().enumerate() {
        let id = id as u64;
        let mut rng = substream(config.seed, "frames", id);
        let traj = &speakers[turn.speaker].trajectory;
        let len = (turn.end - turn.start) as usize;
        let mut keep: Vec<bool> = (0..len).map(|_| rng.random::<f64>() >= config.frame_dropout).collect();
        if !keep.iter().any(|&k| k) {
            keep[len / 2] = true;
        }
        let frames: Vec<Option<RawObservation>> = (turn.start..turn.end)
            .zip(&keep)
            .map(|(t, &k)| {
                k.then(|| {
                    RawObservation::Ssl(emit_ssl_frame(
                        traj[t as usize],
                        config.kappa_phi_true,
                        &layout,
                        config.ssl_jitter,
                        config.ssl_noise,
                        &mut rng,
                    ))
                })
            })
            .collect();
        let mut erng = substream(config.seed, "embedding", id);
        let embedding = emit_embedding(&centroids[turn.speaker], config.embedding_noise, &mut erng);
        let seg = Segment::new(id, turn.channel, turn.start, turn.end, embedding, frames)?;
        truth_segments.push(SegmentTruth {
            id,
            channel: turn.channel,
            start_frame: turn.start,
            end_frame: turn.end,
            speaker: turn.speaker,
            observed_frames: seg.observed_frames(),
        });
        segments.push(seg);
    }
    Ok((segments, GroundTruth { speakers, segments: truth_segments }))
}
