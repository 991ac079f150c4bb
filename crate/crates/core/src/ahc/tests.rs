use super::*;
use crate::rng::substream;
use crate::ssl::validate_ssl;
use crate::tracker::sequence_log_likelihood;
use crate::tracker::FrameObservation;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

fn params() -> KalmanParams {
    KalmanParams::new(10.0, 5.0).unwrap()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn doa_segment(id: u64, start: u64, len: u64, angle: f64, embedding: Vec<f64>) -> Segment {
    let frames = (0..len).map(|_| Some(RawObservation::Doa(Angle::new(angle).unwrap()))).collect();
    Segment::new(id, 0, start, start + len, embedding, frames).unwrap()
}

fn singleton(seg: &Segment) -> Cluster {
    Cluster::from_segment(seg.id as usize, seg, &params(), None).unwrap()
}

fn ssl_cluster(id: usize, probs: &[f64]) -> Cluster {
    let layout = BinLayout::new(probs.len()).unwrap();
    let s = validate_ssl(probs, &layout).unwrap();
    let seg = Segment::new(id as u64, 0, 0, 1, vec![1.0, 0.0], vec![Some(RawObservation::Ssl(s))]).unwrap();
    Cluster::from_segment(id, &seg, &params(), Some(&layout)).unwrap()
}

fn one_hot(n: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[j] = 1.0;
    v
}

#[test]
fn segment_validation() {
    assert!(Segment::new(0, 0, 5, 5, vec![1.0], vec![]).is_err());
    assert!(Segment::new(0, 0, 0, 2, vec![1.0], vec![None]).is_err());
    assert!(Segment::new(0, 0, 0, 1, vec![0.5, 0.5], vec![None]).is_err());
    assert!(Segment::new(0, 0, 0, 1, vec![0.6, 0.8], vec![None]).is_ok());
}

#[test]
fn speaker_affinity_examples() {
    let a = singleton(&doa_segment(0, 0, 3, 0.0, vec![1.0, 0.0]));
    let b = singleton(&doa_segment(1, 0, 3, 0.0, vec![1.0, 0.0]));
    let c = singleton(&doa_segment(2, 0, 3, 0.0, vec![0.0, 1.0]));
    let d = singleton(&doa_segment(3, 0, 3, 0.0, vec![-1.0, 0.0]));
    assert_eq!(speaker_affinity(&a, &b), 1.0);
    assert_eq!(speaker_affinity(&a, &c), 0.0);
    assert_eq!(speaker_affinity(&a, &d), -1.0);
}

#[test]
fn centroid_is_renormalized_mean() {
    let a = singleton(&doa_segment(0, 0, 3, 0.0, vec![1.0, 0.0]));
    let b = singleton(&doa_segment(1, 5, 3, 0.0, vec![0.0, 1.0]));
    let m = Cluster::merge(2, &a, &b);
    let h = 0.5f64.sqrt();
    assert!((m.embedding_centroid[0] - h).abs() < 1e-15 && (m.embedding_centroid[1] - h).abs() < 1e-15);
    assert_eq!((m.t_start, m.t_end, m.observed_frame_count), (0, 8, 6));
}

#[test]
fn kl_affinity_examples() {
    let mut rng = substream(1, "kl", 0);
    let p: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
    let a = ssl_cluster(0, &p);
    let b = ssl_cluster(1, &p);
    assert_eq!(kl_affinity(&a, &b).unwrap(), 0.0);

    let a = ssl_cluster(0, &one_hot(360, 0));
    let b = ssl_cluster(1, &one_hot(360, 180));
    let v = kl_affinity(&a, &b).unwrap();
    let scale = (1.0 / crate::ssl::FLOOR_EPS).ln();
    assert!((v + scale).abs() < 1e-3 * scale, "{v}");
    assert_eq!(kl_affinity(&a, &b).unwrap(), kl_affinity(&b, &a).unwrap());

    let q: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
    let c = ssl_cluster(2, &q);
    let d = ssl_cluster(3, &p);
    assert!(kl_affinity(&c, &d).unwrap() < 0.0);
    assert_eq!(kl_affinity(&c, &d).unwrap(), kl_affinity(&d, &c).unwrap());
}

#[test]
fn kl_without_ssl_is_unavailable() {
    let a = singleton(&doa_segment(0, 0, 3, 0.0, vec![1.0, 0.0]));
    let b = ssl_cluster(1, &one_hot(8, 0));
    assert_eq!(kl_affinity(&a, &b), Err(Error::LocationUnavailable));
    let config = AffinityConfig {
        weight_speaker: 1.0,
        weight_location: 1.0,
        location_kind: LocationKind::Kl,
        stop_threshold: 0.0,
        params: params(),
    };
    let segs = [doa_segment(0, 0, 3, 0.0, vec![1.0, 0.0]), doa_segment(1, 4, 3, 0.0, vec![1.0, 0.0])];
    assert_eq!(cluster(&segs, &config).unwrap_err(), Error::LocationUnavailable);
}

#[test]
fn track_affinity_with_unobserved_cluster_is_zero() {
    let a = singleton(&doa_segment(0, 0, 5, 0.3, vec![1.0, 0.0]));
    let empty = Segment::new(1, 0, 10, 14, vec![1.0, 0.0], vec![None; 4]).unwrap();
    let b = singleton(&empty);
    assert_eq!(track_affinity(&a, &b, &params()), 0.0);
    assert_eq!(track_affinity(&b, &b, &params()), 0.0);
}

#[test]
fn shared_location_beats_antipode() {
    for kz in [1.0, 10.0, 100.0] {
        let p = KalmanParams::new(kz, 5.0).unwrap();
        let a = Cluster::from_segment(0, &doa_segment(0, 0, 10, 0.5, vec![1.0, 0.0]), &p, None).unwrap();
        let same = Cluster::from_segment(1, &doa_segment(1, 20, 10, 0.5, vec![1.0, 0.0]), &p, None).unwrap();
        let far = Cluster::from_segment(1, &doa_segment(1, 20, 10, 0.5 + PI, vec![1.0, 0.0]), &p, None).unwrap();
        assert!(track_affinity(&a, &same, &p) > track_affinity(&a, &far, &p), "kappa_z {kz}");
    }
}

#[test]
fn shifted_copy_has_nonnegative_affinity() {
    let mut rng = substream(2, "shift", 0);
    for _ in 0..500 {
        let len = rng.random_range(1..15u64);
        let p = KalmanParams::new(rng.random_range(0.5..100.0), rng.random_range(0.5..100.0)).unwrap();
        let source = crate::circular::VonMises::new(Angle::new(rng.random_range(-PI..PI)).unwrap(), p.kappa_phi).unwrap();
        let frames: Vec<_> =
            (0..len).map(|_| Some(RawObservation::Doa(crate::circular::vm_sample(&source, &mut rng)))).collect();
        let shift = len + rng.random_range(0..20u64);
        let a = Segment::new(0, 0, 0, len, vec![1.0], frames.clone()).unwrap();
        let b = Segment::new(1, 0, shift, shift + len, vec![1.0], frames).unwrap();
        let (ca, cb) = (Cluster::from_segment(0, &a, &p, None).unwrap(), Cluster::from_segment(1, &b, &p, None).unwrap());
        let v = track_affinity(&ca, &cb, &p);
        assert!(v >= 0.0, "{v} {p:?} {len}");
    }
}

#[test]
fn track_affinity_matches_dense_filtering() {
    let a = doa_segment(0, 2, 4, 0.1, vec![1.0]);
    let b = doa_segment(1, 9, 3, -0.4, vec![1.0]);
    let p = params();
    let (ca, cb) = (singleton(&a), singleton(&b));
    let dense = |segs: &[&Segment]| {
        let mut frames = vec![FrameObservation::empty(); 12];
        for s in segs {
            for (t, f) in (s.start_frame..).zip(&s.frames) {
                if let Some(RawObservation::Doa(x)) = f {
                    frames[t as usize].measurements.push(Measurement::Doa(*x));
                }
            }
        }
        sequence_log_likelihood(&frames, &p).unwrap().total_log_likelihood
    };
    let expect = (dense(&[&a, &b]) - dense(&[&a]) - dense(&[&b])) / 7.0;
    assert!((track_affinity(&ca, &cb, &p) - expect).abs() < 1e-12);
}

#[test]
fn interleaved_split_counts_frames_once() {
    let mut rng = substream(3, "split", 0);
    let len = 20u64;
    let angles: Vec<f64> = (0..len).map(|t| 0.05 * t as f64 + 0.01 * rng.random::<f64>()).collect();
    let full = Segment::new(
        0,
        0,
        0,
        len,
        vec![1.0],
        angles.iter().map(|&x| Some(RawObservation::Doa(Angle::new(x).unwrap()))).collect(),
    )
    .unwrap();
    let pick = |parity: u64| {
        full.frames
            .iter()
            .enumerate()
            .map(|(t, f)| if t as u64 % 2 == parity { f.clone() } else { None })
            .collect::<Vec<_>>()
    };
    let even = Segment::new(1, 0, 0, len, vec![1.0], pick(0)).unwrap();
    let odd = Segment::new(2, 0, 0, len, vec![1.0], pick(1)).unwrap();
    let (ce, co, cf) = (singleton(&even), singleton(&odd), singleton(&full));
    assert_eq!(ce.observed_frame_count + co.observed_frame_count, cf.observed_frame_count);
    let p = params();
    let v = track_affinity(&ce, &co, &p);
    let expect = (cf.log_likelihood - ce.log_likelihood - co.log_likelihood) / len as f64;
    assert!((v - expect).abs() < 1e-12);
}

fn random_segments(seed: u64, n: usize, dim: usize, with_ssl: bool) -> Vec<Segment> {
    let mut rng = substream(seed, "segments", 0);
    let layout = BinLayout::new(36).unwrap();
    (0..n)
        .map(|i| {
            let emb = unit((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            let start = rng.random_range(0..200u64);
            let len = rng.random_range(1..12u64);
            let base = rng.random_range(-PI..PI);
            let frames = (0..len)
                .map(|t| {
                    if t > 0 && rng.random::<f64>() < 0.2 {
                        None
                    } else if with_ssl {
                        let mean = Angle::new(base + 0.1 * rng.random::<f64>()).unwrap();
                        let raw = layout.discretized_von_mises(mean, 8.0);
                        Some(RawObservation::Ssl(validate_ssl(&raw, &layout).unwrap()))
                    } else {
                        Some(RawObservation::Doa(Angle::new(base + 0.1 * rng.random::<f64>()).unwrap()))
                    }
                })
                .collect();
            Segment::new(i as u64 * 3 + 1, (i % 2) as u32, start, start + len, emb, frames).unwrap()
        })
        .collect()
}

fn config(kind: LocationKind, wl: f64, threshold: f64) -> AffinityConfig {
    AffinityConfig { weight_speaker: 1.0, weight_location: wl, location_kind: kind, stop_threshold: threshold, params: params() }
}

#[test]
fn affinities_are_symmetric() {
    let segs = random_segments(4, 12, 6, true);
    let cs: Vec<Cluster> = segs
        .iter()
        .enumerate()
        .map(|(i, s)| Cluster::from_segment(i, s, &params(), Some(&BinLayout::new(36).unwrap())).unwrap())
        .collect();
    for a in &cs {
        for b in &cs {
            assert_eq!(speaker_affinity(a, b), speaker_affinity(b, a));
            assert_eq!(kl_affinity(a, b).unwrap(), kl_affinity(b, a).unwrap());
            assert!((track_affinity(a, b, &params()) - track_affinity(b, a, &params())).abs() < 1e-9);
        }
    }
}

#[test]
fn speaker_affinity_is_rotation_invariant() {
    let mut rng = substream(5, "rotation", 0);
    let dim = 8;
    let segs = random_segments(6, 6, dim, false);
    // product of random Householder reflections
    let mut rotated: Vec<Vec<f64>> = segs.iter().map(|s| s.embedding.clone()).collect();
    for _ in 0..4 {
        let v = unit((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        for e in rotated.iter_mut() {
            let d: f64 = e.iter().zip(&v).map(|(a, b)| a * b).sum();
            e.iter_mut().zip(&v).for_each(|(a, b)| *a -= 2.0 * d * b);
        }
    }
    let cs: Vec<Cluster> = segs.iter().map(singleton).collect();
    let rs: Vec<Cluster> = segs
        .iter()
        .zip(rotated)
        .map(|(s, e)| singleton(&Segment { embedding: e, ..s.clone() }))
        .collect();
    for i in 0..cs.len() {
        for j in 0..cs.len() {
            assert!((speaker_affinity(&cs[i], &cs[j]) - speaker_affinity(&rs[i], &rs[j])).abs() < 1e-12);
        }
    }
}

#[test]
fn combined_affinity_examples() {
    let a = ssl_cluster(0, &one_hot(8, 1));
    let b = ssl_cluster(1, &one_hot(8, 1));
    let c = ssl_cluster(2, &one_hot(8, 5));
    assert_eq!(combined_affinity(&a, &c, &config(LocationKind::Kl, 0.0, 0.0)).unwrap(), speaker_affinity(&a, &c));
    let track_only = AffinityConfig { weight_speaker: 0.0, weight_location: 1.0, ..config(LocationKind::Track, 1.0, 0.0) };
    assert_eq!(combined_affinity(&a, &c, &track_only).unwrap(), track_affinity(&a, &c, &params()));
    assert_eq!(combined_affinity(&a, &b, &config(LocationKind::Kl, 1.0, 0.0)).unwrap(), 1.0);
}

#[test]
fn config_validation() {
    assert!(AffinityConfig { weight_speaker: 0.0, ..config(LocationKind::None, 0.0, 0.0) }.validate().is_err());
    assert!(config(LocationKind::None, -1.0, 0.0).validate().is_err());
    assert!(config(LocationKind::None, 0.0, f64::NAN).validate().is_err());
    assert!(config(LocationKind::None, 0.0, f64::NEG_INFINITY).validate().is_ok());
}

#[test]
fn cluster_extremes() {
    let segs = random_segments(7, 10, 4, false);
    let all = cluster(&segs, &config(LocationKind::Track, 1.0, f64::INFINITY)).unwrap();
    assert_eq!(all.n_clusters, 10);
    let one = cluster(&segs, &config(LocationKind::Track, 1.0, f64::NEG_INFINITY)).unwrap();
    assert_eq!(one.n_clusters, 1);
    assert!(one.labels.iter().all(|l| l.1 == 0));
    assert!(cluster(&[], &config(LocationKind::None, 0.0, 0.0)).is_err());
    let mut dup = segs.clone();
    dup[1].id = dup[0].id;
    assert!(cluster(&dup, &config(LocationKind::None, 0.0, 0.0)).is_err());
}

#[test]
fn identical_pair_merges_antipode_stays() {
    let segs = [
        doa_segment(10, 0, 3, 0.0, vec![0.6, 0.8]),
        doa_segment(11, 5, 3, 0.0, vec![-0.6, -0.8]),
        doa_segment(12, 10, 3, 0.0, vec![0.6, 0.8]),
    ];
    let out = cluster(&segs, &config(LocationKind::None, 0.0, 0.5)).unwrap();
    assert_eq!(out.n_clusters, 2);
    assert_eq!(out.labels, vec![(10, 0), (11, 1), (12, 0)]);
    assert_eq!(out.dendrogram.merges[0].a, 0);
    assert_eq!(out.dendrogram.merges[0].b, 2);
}

#[test]
fn ties_merge_smallest_pair() {
    let segs: Vec<Segment> = (0..4).map(|i| doa_segment(i, 4 * i, 3, 0.0, vec![1.0, 0.0])).collect();
    let out = cluster(&segs, &config(LocationKind::None, 0.0, 0.5)).unwrap();
    let pairs: Vec<(usize, usize)> = out.dendrogram.merges.iter().map(|m| (m.a, m.b)).collect();
    assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
}

#[test]
fn dendrogram_is_a_forest() {
    for seed in 0..5 {
        let segs = random_segments(10 + seed, 15, 3, false);
        let out = cluster(&segs, &config(LocationKind::Track, 0.5, 0.2)).unwrap();
        let n = segs.len();
        assert_eq!(out.dendrogram.merges.len(), n - out.n_clusters);
        let mut used = vec![false; n + out.dendrogram.merges.len()];
        for m in &out.dendrogram.merges {
            assert!(m.a < m.b && m.b < n + m.step);
            assert!(!used[m.a] && !used[m.b]);
            used[m.a] = true;
            used[m.b] = true;
        }
        let mut labels: Vec<usize> = out.labels.iter().map(|l| l.1).collect();
        assert_eq!(out.labels.iter().map(|l| l.0).collect::<Vec<_>>(), segs.iter().map(|s| s.id).collect::<Vec<_>>());
        labels.sort();
        labels.dedup();
        assert_eq!(labels, (0..out.n_clusters).collect::<Vec<_>>());
    }
}

#[test]
fn labels_follow_earliest_start() {
    let segs = random_segments(20, 15, 3, false);
    let out = cluster(&segs, &config(LocationKind::None, 0.0, 0.3)).unwrap();
    let mut first = vec![u64::MAX; out.n_clusters];
    for (s, (_, l)) in segs.iter().zip(&out.labels) {
        first[*l] = first[*l].min(s.start_frame);
    }
    assert!(first.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn zero_location_weight_is_bit_identical() {
    let segs = random_segments(30, 14, 4, true);
    let runs: Vec<Clustering> = [LocationKind::None, LocationKind::Kl, LocationKind::Track]
        .iter()
        .map(|&k| cluster(&segs, &config(k, 0.0, -0.2)).unwrap())
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn raising_threshold_never_reduces_clusters() {
    let segs = random_segments(40, 14, 3, true);
    for kind in [LocationKind::None, LocationKind::Kl, LocationKind::Track] {
        let full = cluster(&segs, &config(kind, 0.3, f64::NEG_INFINITY)).unwrap();
        let mut prev = 0;
        for k in 0..20 {
            let th = -2.0 + 0.15 * k as f64;
            let fresh = cluster(&segs, &config(kind, 0.3, th)).unwrap();
            assert_eq!(fresh.labels, full.dendrogram.cut(th));
            assert_eq!(fresh.n_clusters, full.dendrogram.cluster_count(th));
            assert!(fresh.n_clusters >= prev);
            prev = fresh.n_clusters;
        }
    }
}
