//! Metric kernels and dataset-slicing reports.

pub mod caption;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::{BoundingBox, ManifestRecord};

/// Paper-scale reference numbers, kept as documentation constants. They
/// require the full datasets and are not reproducible at desk scale.
pub mod reference {
    /// AVA-ActiveSpeaker validation mAP (%).
    pub const AVA_MAP: f64 = 92.4;
    /// WASD Surveillance Settings mAP (%).
    pub const WASD_SS_MAP: f64 = 82.5;
    /// Columbia average F1 (%).
    pub const COLUMBIA_AVG_F1: f64 = 86.8;
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("average precision undefined: no positive labels")]
    NoPositives,
    #[error("body box has zero area")]
    ZeroBodyArea,
    #[error("{count} prediction keys missing from the manifest; first {}: {first:?}", first.len())]
    UnmatchedKeys { count: usize, first: Vec<String> },
}

/// Identity of one scored frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub video_id: String,
    pub entity_id: String,
    /// Milliseconds, rounded; keeps joins exact across CSV round-trips.
    pub timestamp_ms: i64,
}

impl FrameKey {
    pub fn new(video_id: &str, entity_id: &str, timestamp: f64) -> Self {
        FrameKey {
            video_id: video_id.to_string(),
            entity_id: entity_id.to_string(),
            timestamp_ms: (timestamp * 1000.0).round() as i64,
        }
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone)]
pub struct ScoredFrame {
    pub key: FrameKey,
    pub score: f64,
    pub label: bool,
}

/// Single-class average precision: sort by score descending (stable by key
/// on ties), then average precision over the ranks of the positives.
pub fn average_precision(scored: &[ScoredFrame]) -> Result<f64, EvalError> {
    let positives = scored.iter().filter(|s| s.label).count();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<&ScoredFrame> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.key.cmp(&b.key)));
    let mut true_positives = 0usize;
    let mut sum = 0.0;
    for (rank0, frame) in order.iter().enumerate() {
        if frame.label {
            true_positives += 1;
            sum += true_positives as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// F1 at a score threshold. Conventions: 0 when precision + recall is 0;
/// exactly 1 when there are neither predicted nor actual positives.
pub fn f1(scored: &[ScoredFrame], threshold: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for s in scored {
        let predicted = s.score >= threshold;
        match (predicted, s.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp == 0 && tp + fn_ == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// Head-body proportion: face area over body area.
pub fn hbp(face: &BoundingBox, body: &BoundingBox) -> Result<f64, EvalError> {
    let body_area = body.area();
    if body_area == 0.0 {
        return Err(EvalError::ZeroBodyArea);
    }
    Ok(face.area() / body_area)
}

/// `k` equidistant buckets spanning `[min, max]`; the last interval is
/// closed.
pub fn hbp_bucket_edges(min: f64, max: f64, k: usize) -> Vec<(f64, f64)> {
    let width = (max - min) / k as f64;
    (0..k)
        .map(|i| (min + i as f64 * width, min + (i + 1) as f64 * width))
        .collect()
}

fn hbp_bucket_of(value: f64, edges: &[(f64, f64)]) -> usize {
    for (i, (lo, hi)) in edges.iter().enumerate() {
        let last = i + 1 == edges.len();
        if value >= *lo && (value < *hi || (last && value <= *hi)) {
            return i;
        }
    }
    // Outside the observed range (possible only with caller-supplied
    // edges): clamp into the nearest end bucket.
    if value < edges[0].0 {
        0
    } else {
        edges.len() - 1
    }
}

/// Box area as a percentage of the image.
pub fn area_fraction(bbox: &BoundingBox) -> f64 {
    100.0 * bbox.area()
}

/// How `map_report` groups frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slicing {
    None,
    /// By the `video_id` prefix before the first underscore.
    Category,
    /// By head-body proportion over five equidistant buckets between the
    /// observed minimum and maximum.
    Hbp,
}

impl Slicing {
    pub fn parse(s: &str) -> Option<Slicing> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(Slicing::None),
            "category" => Some(Slicing::Category),
            "hbp" => Some(Slicing::Hbp),
            _ => None,
        }
    }
}

/// One metric value for one slice of the data.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub slice: String,
}

/// Category of a video id: the prefix before the first underscore.
pub fn category_of(video_id: &str) -> &str {
    video_id.split('_').next().unwrap_or(video_id)
}

/// Join predictions against manifest labels and compute the global average
/// precision plus per-slice values. Slices that end up empty or without
/// positives are reported in `warnings` and omitted.
pub fn map_report(
    predictions: &[(FrameKey, f64)],
    manifest: &[ManifestRecord],
    slicing: Slicing,
) -> Result<(Vec<MetricReport>, Vec<String>), EvalError> {
    let mut by_key: BTreeMap<&FrameKey, f64> = BTreeMap::new();
    for (key, score) in predictions {
        by_key.insert(key, *score);
    }
    let mut index: BTreeMap<FrameKey, &ManifestRecord> = BTreeMap::new();
    for record in manifest {
        index.insert(
            FrameKey::new(&record.video_id, &record.entity_id, record.frame_timestamp),
            record,
        );
    }
    let mut unmatched: Vec<String> = Vec::new();
    let mut scored: Vec<(ScoredFrame, &ManifestRecord)> = Vec::new();
    for (key, score) in predictions {
        match index.get(key) {
            Some(record) => scored.push((
                ScoredFrame {
                    key: key.clone(),
                    score: *score,
                    label: record.label.is_speaking(),
                },
                record,
            )),
            None => unmatched.push(format!(
                "{}/{}/{}",
                key.video_id,
                key.entity_id,
                key.timestamp()
            )),
        }
    }
    if !unmatched.is_empty() {
        let count = unmatched.len();
        unmatched.truncate(10);
        return Err(EvalError::UnmatchedKeys {
            count,
            first: unmatched,
        });
    }

    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let global: Vec<ScoredFrame> = scored.iter().map(|(s, _)| s.clone()).collect();
    reports.push(MetricReport {
        metric: "ap".into(),
        value: average_precision(&global)?,
        slice: "global".into(),
    });

    let mut slices: BTreeMap<String, Vec<ScoredFrame>> = BTreeMap::new();
    match slicing {
        Slicing::None => {}
        Slicing::Category => {
            for (frame, record) in &scored {
                slices
                    .entry(category_of(&record.video_id).to_string())
                    .or_default()
                    .push(frame.clone());
            }
        }
        Slicing::Hbp => {
            let mut values: Vec<(usize, f64)> = Vec::new();
            for (i, (_, record)) in scored.iter().enumerate() {
                match record.body_box.as_ref() {
                    Some(body) => values.push((i, hbp(&record.face_box, body)?)),
                    None => warnings.push(format!(
                        "{}/{}: no body box, skipped in hbp slicing",
                        record.video_id, record.entity_id
                    )),
                }
            }
            if !values.is_empty() {
                let min = values.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
                let max = values
                    .iter()
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let edges = hbp_bucket_edges(min, max, 5);
                for (i, v) in values {
                    let b = hbp_bucket_of(v, &edges);
                    let name = format!("hbp[{:.3},{:.3}]", edges[b].0, edges[b].1);
                    slices.entry(name).or_default().push(scored[i].0.clone());
                }
            }
        }
    }
    for (name, frames) in slices {
        match average_precision(&frames) {
            Ok(v) => reports.push(MetricReport {
                metric: "ap".into(),
                value: v,
                slice: name,
            }),
            Err(EvalError::NoPositives) => {
                warnings.push(format!("slice '{name}' has no positives, omitted"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((reports, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames(scores: &[f64], labels: &[bool]) -> Vec<ScoredFrame> {
        scores
            .iter()
            .zip(labels.iter())
            .enumerate()
            .map(|(i, (s, l))| ScoredFrame {
                key: FrameKey::new("v", "e", i as f64),
                score: *s,
                label: *l,
            })
            .collect()
    }

    #[test]
    fn perfect_ranking_is_one() {
        let f = frames(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]);
        assert_eq!(average_precision(&f).unwrap(), 1.0);
    }

    #[test]
    fn spec_example_three_frames() {
        let f = frames(&[0.9, 0.8, 0.7], &[true, false, true]);
        let ap = average_precision(&f).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_error() {
        let f = frames(&[0.5, 0.2], &[false, false]);
        assert!(matches!(average_precision(&f), Err(EvalError::NoPositives)));
    }

    // Exhaustive independent oracle on all label patterns for n <= 8 with
    // several score templates (distinct, tied pairs, constant).
    #[test]
    fn matches_definitional_oracle_exhaustively() {
        fn oracle(frames: &[ScoredFrame]) -> f64 {
            // Rank by the documented ordering, computed independently:
            // for each positive, count items ranked at or above it.
            let mut order: Vec<usize> = (0..frames.len()).collect();
            order.sort_by(|&a, &b| {
                frames[b]
                    .score
                    .total_cmp(&frames[a].score)
                    .then_with(|| frames[a].key.cmp(&frames[b].key))
            });
            let positives = frames.iter().filter(|f| f.label).count() as f64;
            let mut sum = 0.0;
            for (rank0, &idx) in order.iter().enumerate() {
                if frames[idx].label {
                    let above = order[..=rank0]
                        .iter()
                        .filter(|&&j| frames[j].label)
                        .count();
                    sum += above as f64 / (rank0 + 1) as f64;
                }
            }
            sum / positives
        }

        for n in 1usize..=8 {
            let templates: Vec<Vec<f64>> = vec![
                (0..n).map(|i| 1.0 - i as f64 * 0.1).collect(),
                (0..n).map(|i| 0.5 + (i % 2) as f64 * 0.2).collect(),
                vec![0.5; n],
            ];
            for scores in &templates {
                for mask in 1u32..(1 << n) {
                    let labels: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
                    let f = frames(scores, &labels);
                    let got = average_precision(&f).unwrap();
                    let expect = oracle(&f);
                    assert_eq!(got, expect, "n={n} scores={scores:?} mask={mask:b}");
                }
            }
        }
    }

    #[test]
    fn f1_conventions() {
        // Perfect predictions.
        let f = frames(&[0.9, 0.1], &[true, false]);
        assert_eq!(f1(&f, 0.5), 1.0);
        // TP=2, FP=1, FN=1 -> 2/3.
        let f = frames(&[0.9, 0.8, 0.7, 0.1], &[true, true, false, true]);
        assert!((f1(&f, 0.5) - 2.0 / 3.0).abs() < 1e-12);
        // Neither predicted nor actual positives -> 1.0.
        let f = frames(&[0.1, 0.2], &[false, false]);
        assert_eq!(f1(&f, 0.5), 1.0);
        // Predicted but none actual -> 0.
        let f = frames(&[0.9], &[false]);
        assert_eq!(f1(&f, 0.5), 0.0);
    }

    #[test]
    fn hbp_examples() {
        let face = BoundingBox::new(0.45, 0.1, 0.55, 0.2).unwrap();
        let body = BoundingBox::new(0.4, 0.1, 0.6, 0.6).unwrap();
        let v = hbp(&face, &body).unwrap();
        assert!((v - 0.01 / 0.10).abs() < 1e-9);
        assert!((hbp(&body, &body).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hbp_bucket_edges_match_fig_intervals() {
        let edges = hbp_bucket_edges(0.1, 0.7, 5);
        let expect = [
            (0.1, 0.22),
            (0.22, 0.34),
            (0.34, 0.46),
            (0.46, 0.58),
            (0.58, 0.7),
        ];
        for ((lo, hi), (elo, ehi)) in edges.iter().zip(expect.iter()) {
            assert!((lo - elo).abs() < 1e-12 && (hi - ehi).abs() < 1e-12);
        }
        // Max lands in the last (closed) bucket.
        assert_eq!(hbp_bucket_of(0.7, &edges), 4);
        assert_eq!(hbp_bucket_of(0.1, &edges), 0);
    }

    #[test]
    fn area_fraction_examples() {
        let full = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((area_fraction(&full) - 100.0).abs() < 1e-12);
        let quarter = BoundingBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
        assert!((area_fraction(&quarter) - 25.0).abs() < 1e-9);
    }

    proptest! {
        // AP is invariant under strictly monotone transforms of the scores.
        #[test]
        fn ap_monotone_invariant(
            scores in proptest::collection::vec(0.0f64..1.0, 2..20),
            labels in proptest::collection::vec(any::<bool>(), 2..20),
        ) {
            let n = scores.len().min(labels.len());
            if !labels[..n].iter().any(|l| *l) {
                return Ok(());
            }
            let f = frames(&scores[..n], &labels[..n]);
            let transformed: Vec<f64> = scores[..n].iter().map(|s| 0.2 + 3.0 * s * s * s).collect();
            let g = frames(&transformed, &labels[..n]);
            let a = average_precision(&f).unwrap();
            let b = average_precision(&g).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
