//! Agglomerative clustering of speaker-pure segments.
//!
//! Affinities interpolate the cosine similarity of embedding centroids with a
//! location term: either the negative symmetric KL divergence of SSL
//! centroids, or a tracking log-likelihood ratio that asks whether the two
//! clusters are better explained by one moving source than by two.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::circular::Angle;
use crate::math::{ln, sqrt};
use crate::ssl::{ssl_summarize, BinLayout, SslVector};
use crate::tracker::{sparse_log_likelihood, KalmanParams, Measurement};
use crate::{Error, Result};

/// A raw per-frame location observation.
#[derive(Debug, Clone, PartialEq)]
pub enum RawObservation {
    Doa(Angle),
    Ssl(SslVector),
}

/// A speaker-pure span of frames on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: u64,
    pub channel: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Unit-norm speaker embedding.
    pub embedding: Vec<f64>,
    /// One entry per frame in `start_frame..end_frame`.
    pub frames: Vec<Option<RawObservation>>,
}

impl Segment {
    pub fn new(
        id: u64,
        channel: u32,
        start_frame: u64,
        end_frame: u64,
        embedding: Vec<f64>,
        frames: Vec<Option<RawObservation>>,
    ) -> Result<Segment> {
        if end_frame <= start_frame {
            return Err(Error::InvalidInput(alloc::format!("segment {id}: end frame must follow start frame")));
        }
        if frames.len() as u64 != end_frame - start_frame {
            return Err(Error::InvalidInput(alloc::format!(
                "segment {id}: {} frames for a span of {}",
                frames.len(),
                end_frame - start_frame
            )));
        }
        let norm = sqrt(embedding.iter().map(|v| v * v).sum());
        if !((norm - 1.0).abs() <= 1e-6) {
            return Err(Error::InvalidInput(alloc::format!("segment {id}: embedding norm {norm} is not 1")));
        }
        Ok(Segment { id, channel, start_frame, end_frame, embedding, frames })
    }

    /// Number of frames carrying an observation.
    pub fn observed_frames(&self) -> u64 {
        self.frames.iter().filter(|f| f.is_some()).count() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationKind {
    None,
    Kl,
    Track,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityConfig {
    pub weight_speaker: f64,
    pub weight_location: f64,
    pub location_kind: LocationKind,
    /// Merging stops once the best affinity falls below this.
    pub stop_threshold: f64,
    pub params: KalmanParams,
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.weight_speaker) || !ok(self.weight_location) || self.weight_speaker + self.weight_location <= 0.0 {
            return Err(Error::InvalidInput("affinity weights must be nonnegative with a positive sum".into()));
        }
        if self.stop_threshold.is_nan() {
            return Err(Error::InvalidInput("stop threshold is NaN".into()));
        }
        Ok(())
    }

    fn uses(&self, kind: LocationKind) -> bool {
        self.location_kind == kind && self.weight_location != 0.0
    }
}

/// A set of merged segments with cached statistics.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<u64>,
    pub embedding_centroid: Vec<f64>,
    embedding_sum: Vec<f64>,
    /// Mean SSL frame, present only when members carry SSL frames.
    pub ssl_centroid: Option<SslVector>,
    log_ssl: Vec<f64>,
    ssl_sum: Vec<f64>,
    ssl_frames: u64,
    pub t_start: u64,
    pub t_end: u64,
    /// Distinct frames carrying at least one measurement.
    pub observed_frame_count: usize,
    stream: Vec<(u64, Measurement)>,
    log_likelihood: f64,
    params: KalmanParams,
}

impl Cluster {
    /// A singleton cluster. SSL frames are summarized with `params.kappa_phi`
    /// on `layout`, which must match their length.
    pub fn from_segment(id: usize, seg: &Segment, params: &KalmanParams, layout: Option<&BinLayout>) -> Result<Cluster> {
        let mut stream = Vec::new();
        let mut ssl_sum = Vec::new();
        let mut ssl_frames = 0;
        for (t, f) in (seg.start_frame..).zip(&seg.frames) {
            match f {
                None => {}
                Some(RawObservation::Doa(a)) => stream.push((t, Measurement::Doa(*a))),
                Some(RawObservation::Ssl(s)) => {
                    let layout = match layout {
                        Some(l) if l.n_bins() == s.len() => l,
                        _ => {
                            return Err(Error::InvalidInput(alloc::format!(
                                "segment {}: SSL frame length does not match the bin layout",
                                seg.id
                            )))
                        }
                    };
                    if ssl_sum.is_empty() {
                        ssl_sum = vec![0.0; s.len()];
                    }
                    ssl_sum.iter_mut().zip(s.probs()).for_each(|(a, p)| *a += p);
                    ssl_frames += 1;
                    stream.push((t, Measurement::Ssl(ssl_summarize(s, layout, params.kappa_phi))));
                }
            }
        }
        let mut c = Cluster {
            id,
            members: vec![seg.id],
            embedding_centroid: Vec::new(),
            embedding_sum: seg.embedding.clone(),
            ssl_centroid: None,
            log_ssl: Vec::new(),
            ssl_sum,
            ssl_frames,
            t_start: seg.start_frame,
            t_end: seg.end_frame,
            observed_frame_count: 0,
            stream,
            log_likelihood: 0.0,
            params: *params,
        };
        c.refresh();
        Ok(c)
    }

    /// The union of `a` and `b` under a new id.
    pub fn merge(id: usize, a: &Cluster, b: &Cluster) -> Cluster {
        let mut members = a.members.clone();
        members.extend_from_slice(&b.members);
        let embedding_sum = a.embedding_sum.iter().zip(&b.embedding_sum).map(|(x, y)| x + y).collect();
        let ssl_sum = match (a.ssl_sum.is_empty(), b.ssl_sum.is_empty()) {
            (true, _) => b.ssl_sum.clone(),
            (_, true) => a.ssl_sum.clone(),
            _ => a.ssl_sum.iter().zip(&b.ssl_sum).map(|(x, y)| x + y).collect(),
        };
        let mut c = Cluster {
            id,
            members,
            embedding_centroid: Vec::new(),
            embedding_sum,
            ssl_centroid: None,
            log_ssl: Vec::new(),
            ssl_sum,
            ssl_frames: a.ssl_frames + b.ssl_frames,
            t_start: a.t_start.min(b.t_start),
            t_end: a.t_end.max(b.t_end),
            observed_frame_count: 0,
            stream: merge_streams(&a.stream, &b.stream),
            log_likelihood: 0.0,
            params: a.params,
        };
        c.refresh();
        c
    }

    fn refresh(&mut self) {
        let norm = sqrt(self.embedding_sum.iter().map(|v| v * v).sum());
        self.embedding_centroid =
            self.embedding_sum.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect();
        if self.ssl_frames > 0 {
            let centroid = SslVector::from_nonnegative(self.ssl_sum.clone());
            self.log_ssl = centroid.probs().iter().map(|&p| ln(p)).collect();
            self.ssl_centroid = Some(centroid);
        }
        let (ll, frames) = sparse_log_likelihood(&self.stream, &self.params);
        self.log_likelihood = ll;
        self.observed_frame_count = frames;
    }

    fn log_likelihood_under(&self, params: &KalmanParams) -> f64 {
        if *params == self.params {
            self.log_likelihood
        } else {
            sparse_log_likelihood(&self.stream, params).0
        }
    }
}

fn merge_streams(a: &[(u64, Measurement)], b: &[(u64, Measurement)]) -> Vec<(u64, Measurement)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if b[j].0 < a[i].0 {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Cosine similarity of the embedding centroids.
pub fn speaker_affinity(a: &Cluster, b: &Cluster) -> f64 {
    a.embedding_centroid.iter().zip(&b.embedding_centroid).map(|(x, y)| x * y).sum()
}

/// `-(KL(a||b) + KL(b||a)) / 2` between the SSL centroids.
pub fn kl_affinity(a: &Cluster, b: &Cluster) -> Result<f64> {
    let (Some(sa), Some(sb)) = (&a.ssl_centroid, &b.ssl_centroid) else {
        return Err(Error::LocationUnavailable);
    };
    if sa.len() != sb.len() {
        return Err(Error::InvalidInput("SSL centroids have different lengths".into()));
    }
    let sum: f64 = sa
        .probs()
        .iter()
        .zip(sb.probs())
        .zip(a.log_ssl.iter().zip(&b.log_ssl))
        .map(|((pa, pb), (la, lb))| (pa - pb) * (la - lb))
        .sum();
    Ok(-0.5 * sum)
}

/// Log-likelihood ratio of one shared track against two separate tracks,
/// per observed frame. Zero when neither cluster has observations.
pub fn track_affinity(a: &Cluster, b: &Cluster, params: &KalmanParams) -> f64 {
    let frames = a.observed_frame_count + b.observed_frame_count;
    if frames == 0 {
        return 0.0;
    }
    let merged = merge_streams(&a.stream, &b.stream);
    let (joint, _) = sparse_log_likelihood(&merged, params);
    (joint - a.log_likelihood_under(params) - b.log_likelihood_under(params)) / frames as f64
}

/// `weight_speaker * A_speaker + weight_location * A_location`.
///
/// The location term is skipped entirely when its weight is zero.
pub fn combined_affinity(a: &Cluster, b: &Cluster, config: &AffinityConfig) -> Result<f64> {
    let mut total = config.weight_speaker * speaker_affinity(a, b);
    if config.weight_location != 0.0 {
        total += config.weight_location
            * match config.location_kind {
                LocationKind::None => 0.0,
                LocationKind::Kl => kl_affinity(a, b)?,
                LocationKind::Track => track_affinity(a, b, &config.params),
            };
    }
    Ok(total)
}

/// One merge: clusters `a < b` joined into cluster `n_segments + step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub affinity: f64,
}

/// The greedy merge sequence, with enough of the input to label any cut.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub segment_ids: Vec<u64>,
    pub start_frames: Vec<u64>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Labels after replaying merges until the first one below `threshold`.
    ///
    /// The greedy order does not depend on the threshold, so this equals a
    /// fresh run stopped at `threshold` whenever the dendrogram was grown at
    /// least that far.
    pub fn cut(&self, threshold: f64) -> Vec<(u64, usize)> {
        let steps = self.merges.iter().take_while(|m| m.affinity >= threshold).count();
        self.labels_after(steps)
    }

    /// Labels after the first `steps` merges; labels are contiguous and
    /// ordered by each cluster's earliest start frame.
    pub fn labels_after(&self, steps: usize) -> Vec<(u64, usize)> {
        let n = self.segment_ids.len();
        let mut parent: Vec<usize> = (0..n + steps).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for m in &self.merges[..steps] {
            parent[m.a] = n + m.step;
            parent[m.b] = n + m.step;
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        let mut first: Vec<(u64, usize, usize)> = Vec::new();
        for (i, &r) in roots.iter().enumerate() {
            match first.iter_mut().find(|f| f.2 == r) {
                Some(f) => f.0 = f.0.min(self.start_frames[i]),
                None => first.push((self.start_frames[i], i, r)),
            }
        }
        first.sort();
        (0..n)
            .map(|i| (self.segment_ids[i], first.iter().position(|f| f.2 == roots[i]).unwrap()))
            .collect()
    }

    pub fn cluster_count(&self, threshold: f64) -> usize {
        self.segment_ids.len() - self.merges.iter().take_while(|m| m.affinity >= threshold).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// `(segment id, label)` in input order.
    pub labels: Vec<(u64, usize)>,
    pub n_clusters: usize,
    pub dendrogram: Dendrogram,
}

/// Greedy agglomerative clustering.
///
/// Starts from singletons (ids `0..n` in input order) and repeatedly merges
/// the pair with the highest affinity, lowest `(a, b)` first on ties, until
/// the best affinity is below `config.stop_threshold` or one cluster is left.
pub fn cluster(segments: &[Segment], config: &AffinityConfig) -> Result<Clustering> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::InvalidInput("no segments to cluster".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(s) = segments.iter().find(|s| !seen.insert(s.id)) {
        return Err(Error::InvalidInput(alloc::format!("duplicate segment id {}", s.id)));
    }
    let dim = segments[0].embedding.len();
    if segments.iter().any(|s| s.embedding.len() != dim) {
        return Err(Error::InvalidInput("embeddings have different dimensions".into()));
    }
    let n_bins = segments
        .iter()
        .flat_map(|s| s.frames.iter().flatten())
        .find_map(|f| match f {
            RawObservation::Ssl(v) => Some(v.len()),
            RawObservation::Doa(_) => None,
        });
    let layout = n_bins.map(BinLayout::new).transpose()?;

    let n = segments.len();
    let mut clusters: Vec<Option<Cluster>> = Vec::with_capacity(2 * n);
    for (i, s) in segments.iter().enumerate() {
        clusters.push(Some(Cluster::from_segment(i, s, &config.params, layout.as_ref())?));
    }
    if config.uses(LocationKind::Kl) && clusters.iter().flatten().any(|c| c.ssl_centroid.is_none()) {
        return Err(Error::LocationUnavailable);
    }

    // aff[b][a] for a < b; NaN once either side has been merged away.
    let mut aff: Vec<Vec<f64>> = Vec::with_capacity(2 * n);
    for b in 0..n {
        let cb = clusters[b].as_ref().unwrap();
        let row = (0..b)
            .map(|a| combined_affinity(clusters[a].as_ref().unwrap(), cb, config))
            .collect::<Result<Vec<f64>>>()?;
        aff.push(row);
    }

    let mut merges = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (bi, &b) in active.iter().enumerate() {
            for &a in &active[..bi] {
                let v = aff[b][a];
                let better = match best {
                    None => true,
                    Some((bv, ba, bb)) => v > bv || (v == bv && (a, b) < (ba, bb)),
                };
                if better {
                    best = Some((v, a, b));
                }
            }
        }
        let (v, a, b) = best.unwrap();
        if v < config.stop_threshold || v.is_nan() {
            break;
        }
        let id = clusters.len();
        let ca = clusters[a].take().unwrap();
        let cb = clusters[b].take().unwrap();
        let merged = Cluster::merge(id, &ca, &cb);
        active.retain(|&c| c != a && c != b);
        let mut row = vec![f64::NAN; id];
        for &c in &active {
            row[c] = combined_affinity(clusters[c].as_ref().unwrap(), &merged, config)?;
        }
        aff.push(row);
        active.push(id);
        clusters.push(Some(merged));
        merges.push(Merge { step: merges.len(), a, b, affinity: v });
    }

    let dendrogram = Dendrogram {
        segment_ids: segments.iter().map(|s| s.id).collect(),
        start_frames: segments.iter().map(|s| s.start_frame).collect(),
        merges,
    };
    let labels = dendrogram.labels_after(dendrogram.merges.len());
    Ok(Clustering { n_clusters: n - dendrogram.merges.len(), labels, dendrogram })
}

#[cfg(test)]
mod tests;
