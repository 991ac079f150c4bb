//! The TOML run configuration.
//!
//! Every section and key is optional; omitted values take the `Default`
//! impls below (listed in the README). Unknown keys are rejected.

use std::path::Path;

use circletrack_core::ahc::{AffinityConfig, LocationKind};
use circletrack_core::circular::KAPPA_MAX;
use circletrack_core::em::EmConfig;
use circletrack_core::sim::{MovementMode, SimConfig};
use circletrack_core::tracker::KalmanParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every random sub-stream.
    pub seed: u64,
    /// Meeting name written into RTTM lines.
    pub meeting: String,
    pub sim: SimSection,
    pub kalman: KalmanSection,
    pub affinity: AffinitySection,
    pub em: EmSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            meeting: "meeting".into(),
            sim: SimSection::default(),
            kalman: KalmanSection::default(),
            affinity: AffinitySection::default(),
            em: EmSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    RandomWalk,
    Waypoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_speakers: usize,
    pub meeting_seconds: f64,
    pub n_bins: usize,
    pub embedding_dim: usize,
    pub kappa_z_true: f64,
    pub kappa_phi_true: f64,
    pub moving_fraction: f64,
    /// Random-walk step concentration; defaults to `kappa_z_true`.
    pub move_step_concentration: Option<f64>,
    pub movement: Movement,
    /// Seconds between waypoints when `movement = "waypoints"`.
    pub waypoint_seconds: f64,
    pub require_movement: bool,
    pub segment_min_seconds: f64,
    pub segment_max_seconds: f64,
    pub gap_factor: f64,
    pub overlap_probability: f64,
    pub frame_dropout: f64,
    pub ssl_jitter: bool,
    pub ssl_noise: f64,
    pub embedding_noise: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            n_speakers: d.n_speakers,
            meeting_seconds: d.meeting_seconds,
            n_bins: d.n_bins,
            embedding_dim: d.embedding_dim,
            kappa_z_true: d.kappa_z_true,
            kappa_phi_true: d.kappa_phi_true,
            moving_fraction: d.moving_fraction,
            move_step_concentration: d.move_step_concentration,
            movement: Movement::RandomWalk,
            waypoint_seconds: 60.0,
            require_movement: d.require_movement,
            segment_min_seconds: d.segment_min_seconds,
            segment_max_seconds: d.segment_max_seconds,
            gap_factor: d.gap_factor,
            overlap_probability: d.overlap_probability,
            frame_dropout: d.frame_dropout,
            ssl_jitter: d.ssl_jitter,
            ssl_noise: d.ssl_noise,
            embedding_noise: d.embedding_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanSection {
    pub kappa_z: f64,
    pub kappa_phi: f64,
}

impl Default for KalmanSection {
    fn default() -> Self {
        KalmanSection { kappa_z: 50.0, kappa_phi: 20.0 }
    }
}

/// Which location affinity accompanies the speaker affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum AffinityKind {
    #[serde(rename = "speaker")]
    #[value(name = "speaker")]
    Speaker,
    #[serde(rename = "speaker+kl")]
    #[value(name = "speaker+kl")]
    SpeakerKl,
    #[serde(rename = "speaker+track")]
    #[value(name = "speaker+track")]
    SpeakerTrack,
}

impl AffinityKind {
    pub fn location(self) -> LocationKind {
        match self {
            AffinityKind::Speaker => LocationKind::None,
            AffinityKind::SpeakerKl => LocationKind::Kl,
            AffinityKind::SpeakerTrack => LocationKind::Track,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffinitySection {
    pub kind: AffinityKind,
    pub weight_speaker: f64,
    pub weight_location: f64,
    pub threshold: f64,
}

impl Default for AffinitySection {
    fn default() -> Self {
        AffinitySection { kind: AffinityKind::SpeakerTrack, weight_speaker: 1.0, weight_location: 0.1, threshold: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmSection {
    pub max_iters: usize,
    pub grid_size: usize,
    pub min_rel_improvement: f64,
    pub kappa_bounds: [f64; 2],
    pub init_kappa_z: f64,
    pub init_kappa_phi: f64,
}

impl Default for EmSection {
    fn default() -> Self {
        let d = EmConfig::default();
        EmSection {
            max_iters: d.max_iters,
            grid_size: d.grid_size,
            min_rel_improvement: d.min_rel_improvement,
            kappa_bounds: [d.kappa_bounds.0, d.kappa_bounds.1],
            init_kappa_z: 5.0,
            init_kappa_phi: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `[weight_speaker, weight_location]` pairs.
    pub weights: Vec<[f64; 2]>,
    pub thresholds: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            weights: vec![[1.0, 0.0], [1.0, 0.05], [1.0, 0.1], [1.0, 0.2]],
            thresholds: (-4..=8).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: circletrack_core::Error| CliError::Config(e.to_string());
        self.sim_config().validate().map_err(cfg)?;
        self.kalman_params()?;
        self.em_config().validate().map_err(cfg)?;
        self.affinity_config(None, None, None)?;
        for w in &self.sweep.weights {
            self.affinity_config(None, Some((w[0], w[1])), None)?;
        }
        if self.sweep.thresholds.iter().any(|t| t.is_nan()) {
            return Err(CliError::Config("sweep thresholds must not be NaN".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            n_speakers: s.n_speakers,
            meeting_seconds: s.meeting_seconds,
            n_bins: s.n_bins,
            embedding_dim: s.embedding_dim,
            kappa_z_true: s.kappa_z_true,
            kappa_phi_true: s.kappa_phi_true,
            moving_fraction: s.moving_fraction,
            move_step_concentration: s.move_step_concentration,
            movement: match s.movement {
                Movement::RandomWalk => MovementMode::RandomWalk,
                Movement::Waypoints => MovementMode::Waypoints { seconds_between: s.waypoint_seconds },
            },
            require_movement: s.require_movement,
            segment_min_seconds: s.segment_min_seconds,
            segment_max_seconds: s.segment_max_seconds,
            gap_factor: s.gap_factor,
            overlap_probability: s.overlap_probability,
            frame_dropout: s.frame_dropout,
            ssl_jitter: s.ssl_jitter,
            ssl_noise: s.ssl_noise,
            embedding_noise: s.embedding_noise,
            seed: self.seed,
        }
    }

    pub fn kalman_params(&self) -> Result<KalmanParams, CliError> {
        KalmanParams::new(self.kalman.kappa_z, self.kalman.kappa_phi).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            max_iters: self.em.max_iters,
            grid_size: self.em.grid_size,
            min_rel_improvement: self.em.min_rel_improvement,
            kappa_bounds: (self.em.kappa_bounds[0], self.em.kappa_bounds[1]),
        }
    }

    pub fn em_init(&self) -> Result<KalmanParams, CliError> {
        let bound = |k: f64| k.clamp(0.0, KAPPA_MAX);
        KalmanParams::new(bound(self.em.init_kappa_z), bound(self.em.init_kappa_phi))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The clustering configuration with optional command-line overrides.
    pub fn affinity_config(
        &self,
        kind: Option<AffinityKind>,
        weights: Option<(f64, f64)>,
        threshold: Option<f64>,
    ) -> Result<AffinityConfig, CliError> {
        let (ws, wl) = weights.unwrap_or((self.affinity.weight_speaker, self.affinity.weight_location));
        let config = AffinityConfig {
            weight_speaker: ws,
            weight_location: wl,
            location_kind: kind.unwrap_or(self.affinity.kind).location(),
            stop_threshold: threshold.unwrap_or(self.affinity.threshold),
            params: self.kalman_params()?,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}
