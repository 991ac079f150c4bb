//! The subcommands. Each one reads its inputs, runs the core pipeline and
//! writes its outputs; nothing is printed except short summaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use circletrack_core::ahc::{cluster, RawObservation, Segment};
use circletrack_core::em::{fit_with, sequence_stats, EmTrace, PosteriorStats};
use circletrack_core::eval::{score, EvalReport};
use circletrack_core::sim::simulate_meeting;
use circletrack_core::ssl::{denominator_profile, eval_grid, flatness, ssl_to_doa, BinLayout};
use circletrack_core::tracker::{FrameObservation, KalmanParams};
use clap::Args;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::formats::{
    dendrogram_json, read_rttm, read_segments, rttm_to_clustering, write_rttm, write_segments, TruthRecord,
};
use crate::sweep::{best_row, sweep, write_table, Meeting};
use crate::{AffinityKind, CliError, RunConfig};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

pub fn read_segments_file(path: &Path) -> Result<Vec<Segment>, CliError> {
    read_segments(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_truth_file(path: &Path) -> Result<TruthRecord, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_weights(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected w_s,w_l")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for segments.jsonl and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let sim = config.sim_config();
    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (segments, truth) = simulate_meeting(&sim)?;
    create_dir(&args.out)?;
    let mut seg_out = create(&args.out.join("segments.jsonl"))?;
    write_segments(&mut seg_out, &segments)?;
    seg_out.flush()?;
    let mut truth_out = create(&args.out.join("truth.json"))?;
    serde_json::to_writer(&mut truth_out, &TruthRecord::from_truth(&config.meeting, &truth))?;
    truth_out.write_all(b"\n")?;
    truth_out.flush()?;
    info!("simulated {} segments for {} speakers", segments.len(), truth.speakers.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Segments file (JSON lines).
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for params.toml and trace.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

/// One DOA sequence per segment; SSL frames are reduced to their peak bin.
pub fn doa_sequences(segments: &[Segment]) -> Result<Vec<Vec<FrameObservation>>, CliError> {
    let mut layout: Option<BinLayout> = None;
    segments
        .iter()
        .map(|s| {
            s.frames
                .iter()
                .map(|f| {
                    Ok(match f {
                        None => FrameObservation::empty(),
                        Some(RawObservation::Doa(a)) => FrameObservation::doa(*a),
                        Some(RawObservation::Ssl(v)) => {
                            if layout.as_ref().is_none_or(|l| l.n_bins() != v.len()) {
                                layout = Some(BinLayout::new(v.len())?);
                            }
                            FrameObservation::doa(ssl_to_doa(v, layout.as_ref().unwrap()))
                        }
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect()
}

/// EM over the segments with the E-step spread over the rayon pool.
///
/// Per-sequence statistics are summed in input order, so the result does not
/// depend on the number of threads.
pub fn fit_segments(segments: &[Segment], config: &RunConfig) -> Result<(KalmanParams, EmTrace), CliError> {
    let sequences = doa_sequences(segments)?;
    let em = config.em_config();
    em.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let init = config.em_init()?;
    let fitted = fit_with(&sequences, init, &em, |seqs, params, grid| {
        let parts: Vec<PosteriorStats> =
            seqs.par_iter().map(|s| sequence_stats(s, params, grid)).collect::<Result<_, _>>()?;
        let mut total = PosteriorStats::default();
        parts.iter().for_each(|p| total.merge(p));
        Ok(total)
    })?;
    Ok(fitted)
}

#[derive(Serialize)]
struct ParamsFile {
    kalman: ParamsSection,
}

#[derive(Serialize)]
struct ParamsSection {
    kappa_z: f64,
    kappa_phi: f64,
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let segments = read_segments_file(&args.segments)?;
    let (params, trace) = fit_segments(&segments, &config)?;
    create_dir(&args.out)?;
    let toml = toml::to_string(&ParamsFile {
        kalman: ParamsSection { kappa_z: params.kappa_z, kappa_phi: params.kappa_phi },
    })
    .map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(args.out.join("params.toml"), toml)?;
    let mut out = create(&args.out.join("trace.tsv"))?;
    writeln!(out, "iteration\tkappa_z\tkappa_phi\tlog_likelihood")?;
    for (i, it) in trace.iterations.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}\t{}", i + 1, it.kappa_z, it.kappa_phi, it.log_likelihood)?;
    }
    out.flush()?;
    info!(
        "initial ({}, {}) ll {}; fitted ({}, {}) after {} iterations",
        trace.initial.kappa_z,
        trace.initial.kappa_phi,
        trace.initial.log_likelihood,
        params.kappa_z,
        params.kappa_phi,
        trace.iterations.len()
    );
    println!("kappa_z = {}\nkappa_phi = {}", params.kappa_z, params.kappa_phi);
    Ok(())
}

#[derive(Debug, Args)]
pub struct DiarizeArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RTTM output file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub affinity: Option<AffinityKind>,
    /// Speaker and location weights, e.g. `1,0.1`.
    #[arg(long, value_parser = parse_weights, allow_hyphen_values = true)]
    pub weights: Option<(f64, f64)>,
    /// Stopping threshold; `inf` keeps every segment apart.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Also write the merge list as JSON.
    #[arg(long)]
    pub dendrogram: Option<PathBuf>,
    /// Meeting name for the RTTM lines; defaults to the config's.
    #[arg(long)]
    pub meeting: Option<String>,
}

pub fn diarize(args: &DiarizeArgs) -> Result<(), CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let affinity = config.affinity_config(args.affinity, args.weights, args.threshold)?;
    let segments = read_segments_file(&args.segments)?;
    let clustering = cluster(&segments, &affinity)?;
    let meeting = args.meeting.as_deref().unwrap_or(&config.meeting);
    let mut out = create(&args.out)?;
    write_rttm(&mut out, meeting, &segments, &clustering.labels)?;
    out.flush()?;
    if let Some(path) = &args.dendrogram {
        let mut d = create(path)?;
        serde_json::to_writer(&mut d, &dendrogram_json(&clustering.dendrogram))?;
        d.write_all(b"\n")?;
        d.flush()?;
    }
    info!("{} segments -> {} clusters", segments.len(), clustering.n_clusters);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub rttm: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct AssignmentRecord {
    pub label: String,
    pub speaker: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ReportRecord {
    pub stationary_error: Option<f64>,
    pub moving_error: Option<f64>,
    pub average_error: f64,
    pub cluster_count_delta: i64,
    pub total_frames: u64,
    pub assignment: Vec<AssignmentRecord>,
}

/// Scores an RTTM file against a truth file.
pub fn eval_files(rttm: &Path, truth: &Path) -> Result<(EvalReport, Vec<String>), CliError> {
    let truth = read_truth_file(truth)?.to_truth()?;
    let lines = read_rttm(open(rttm)?)?;
    let clustering = rttm_to_clustering(&lines, &truth)?;
    let mut names: Vec<String> = Vec::new();
    for l in &lines {
        if !names.contains(&l.label) {
            names.push(l.label.clone());
        }
    }
    Ok((score(&clustering, &truth)?, names))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (report, names) = eval_files(&args.rttm, &args.truth)?;
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x));
    println!("stationary\tmoving\taverage");
    println!(
        "{}\t{}\t{}",
        pct(report.stationary_error_rate),
        pct(report.moving_error_rate),
        pct(Some(report.frame_error_rate))
    );
    println!("cluster_count_delta\t{}", report.cluster_count_delta);
    if let Some(path) = &args.out {
        let record = ReportRecord {
            stationary_error: report.stationary_error_rate,
            moving_error: report.moving_error_rate,
            average_error: report.frame_error_rate,
            cluster_count_delta: report.cluster_count_delta,
            total_frames: report.total_frames,
            assignment: report
                .assignment
                .iter()
                .map(|&(label, speaker)| AssignmentRecord { label: names[label].clone(), speaker })
                .collect(),
        };
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &record)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Meeting directories, each holding segments.jsonl and truth.json.
    #[arg(long, num_args = 1.., required = true)]
    pub meetings: Vec<PathBuf>,
    /// Supplies [kalman], [affinity].kind and the [sweep] grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub affinity: Option<AffinityKind>,
    /// TSV output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<(), CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let kind = args.affinity.unwrap_or(config.affinity.kind);
    let weights: Vec<(f64, f64)> = config.sweep.weights.iter().map(|w| (w[0], w[1])).collect();
    for &w in &weights {
        config.affinity_config(Some(kind), Some(w), None)?;
    }
    if config.sweep.thresholds.is_empty() || weights.is_empty() {
        return Err(CliError::Config("sweep needs at least one weight pair and threshold".into()));
    }
    let meetings = args.meetings.iter().map(|d| Meeting::load(d)).collect::<Result<Vec<_>, _>>()?;
    let rows = sweep(&meetings, kind, &weights, &config.sweep.thresholds, config.kalman_params()?)?;
    let mut out = create(&args.out)?;
    write_table(&mut out, &rows)?;
    out.flush()?;
    if let Some(b) = best_row(&rows) {
        println!(
            "best: weights {},{} threshold {} mean error {:.6}",
            b.weight_speaker, b.weight_location, b.threshold, b.mean_error
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct DenominatorArgs {
    /// Concentrations, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub kappa: Vec<f64>,
    /// Bin counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub bins: Vec<usize>,
    /// Number of evaluation points (table rows).
    #[arg(long, default_value_t = 720)]
    pub n_eval: usize,
    /// TSV output.
    #[arg(long)]
    pub out: PathBuf,
}

pub struct DenominatorColumn {
    pub kappa: f64,
    pub n_bins: usize,
    /// Profile divided by its mean.
    pub profile: Vec<f64>,
    pub flatness: f64,
}

/// One column per `(kappa, bins)` pair, bins outermost.
pub fn denominator_table(kappas: &[f64], bins: &[usize], n_eval: usize) -> Result<Vec<DenominatorColumn>, CliError> {
    let mut cols = Vec::new();
    for &n in bins {
        let layout = BinLayout::new(n)?;
        for &k in kappas {
            if !k.is_finite() || k < 0.0 {
                return Err(CliError::Input(format!("kappa {k} must be finite and nonnegative")));
            }
            let profile = denominator_profile(k, &layout, n_eval)?;
            let mean = profile.iter().sum::<f64>() / profile.len() as f64;
            cols.push(DenominatorColumn {
                kappa: k,
                n_bins: n,
                flatness: flatness(&profile),
                profile: profile.iter().map(|v| v / mean).collect(),
            });
        }
    }
    Ok(cols)
}

pub fn denominator(args: &DenominatorArgs) -> Result<(), CliError> {
    let cols = denominator_table(&args.kappa, &args.bins, args.n_eval)?;
    let mut out = create(&args.out)?;
    write!(out, "z")?;
    for c in &cols {
        write!(out, "\tkappa={},N={}", c.kappa, c.n_bins)?;
    }
    writeln!(out)?;
    for (i, z) in eval_grid(args.n_eval).enumerate() {
        write!(out, "{z:.6}")?;
        for c in &cols {
            write!(out, "\t{:.9e}", c.profile[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    for c in &cols {
        println!("kappa={}\tN={}\tflatness={:.6e}", c.kappa, c.n_bins, c.flatness);
    }
    Ok(())
}
