//! Grounding metrics: box IoU, one-to-one object matching, triplet
//! classification scores and temporal IoU of inclusive frame spans.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stsg::{BBox, FrameSceneGraph, Stsg};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("frame mismatch: predicted frame {pred} vs gold frame {gold}")]
    FrameMismatch { pred: u32, gold: u32 },
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        "FRAME_MISMATCH"
    }
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return if a.area() > 0.0 { 1.0 } else { 0.0 };
    }
    let left = a.x.max(b.x);
    let top = a.y.max(b.y);
    let right = a.right().min(b.right());
    let bottom = a.bottom().min(b.bottom());
    if right <= left || bottom <= top {
        return 0.0;
    }
    let intersection = (right - left) * (bottom - top);
    let union = a.area() + b.area() - intersection;
    if union <= 0.0 {
        return 0.0;
    }
    (intersection / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMatch {
    pub pred_id: String,
    pub gold_id: String,
    pub iou: f64,
}

/// Greedy one-to-one matching of boxed nodes with the same category.
///
/// Candidate pairs with IoU at or above `threshold` are taken in order of
/// descending IoU, ties broken by `(pred_id, gold_id)`.
pub fn match_objects(
    pred: &FrameSceneGraph,
    gold: &FrameSceneGraph,
    threshold: f64,
) -> Result<Vec<ObjectMatch>, MetricsError> {
    if pred.frame_index != gold.frame_index {
        return Err(MetricsError::FrameMismatch {
            pred: pred.frame_index,
            gold: gold.frame_index,
        });
    }
    let mut candidates = Vec::new();
    for p in pred.nodes.iter().filter(|n| n.bbox.is_some()) {
        for g in gold.nodes.iter().filter(|n| n.bbox.is_some()) {
            if !p.category.eq_ignore_ascii_case(&g.category) {
                continue;
            }
            let value = iou(p.bbox.as_ref().unwrap(), g.bbox.as_ref().unwrap());
            if value >= threshold && value > 0.0 {
                candidates.push((value, p.instance_id.as_str(), g.instance_id.as_str()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(b.1))
            .then_with(|| a.2.cmp(b.2))
    });
    let mut used_pred = HashSet::new();
    let mut used_gold = HashSet::new();
    let mut out = Vec::new();
    for (value, p, g) in candidates {
        if used_pred.contains(p) || used_gold.contains(g) {
            continue;
        }
        used_pred.insert(p);
        used_gold.insert(g);
        out.push(ObjectMatch {
            pred_id: p.to_string(),
            gold_id: g.to_string(),
            iou: value,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Precision is 0 with no predictions; recall with no gold items is 1
    /// only if there were no predictions either.
    pub fn from_counts(matched: usize, n_pred: usize, n_gold: usize) -> Self {
        let precision = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
        let recall = match (n_gold, n_pred) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => matched as f64 / n_gold as f64,
        };
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

type CategoryTriplet = (String, String, String);

fn category_triplets(frame: &FrameSceneGraph) -> HashMap<CategoryTriplet, usize> {
    let category = |id: &str| {
        frame
            .node(id)
            .map_or_else(|| crate::stsg::category_of(id).to_lowercase(), |n| n.category.to_lowercase())
    };
    let mut counts = HashMap::new();
    for e in &frame.edges {
        let key = (category(&e.subject_id), e.predicate.to_lowercase(), category(&e.object_id));
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Counts of (matched, predicted, gold) category triplets, summed over
/// frames aligned by index.
pub fn triplet_counts(pred: &Stsg, gold: &Stsg) -> (usize, usize, usize) {
    let mut frames: BTreeMap<u32, (Option<&FrameSceneGraph>, Option<&FrameSceneGraph>)> = BTreeMap::new();
    for f in &pred.frames {
        frames.entry(f.frame_index).or_default().0 = Some(f);
    }
    for f in &gold.frames {
        frames.entry(f.frame_index).or_default().1 = Some(f);
    }
    let (mut matched, mut n_pred, mut n_gold) = (0, 0, 0);
    for (p, g) in frames.values() {
        let p = p.map(category_triplets).unwrap_or_default();
        let g = g.map(category_triplets).unwrap_or_default();
        n_pred += p.values().sum::<usize>();
        n_gold += g.values().sum::<usize>();
        matched += p
            .iter()
            .map(|(k, c)| (*c).min(g.get(k).copied().unwrap_or(0)))
            .sum::<usize>();
    }
    (matched, n_pred, n_gold)
}

/// Micro-averaged triplet precision/recall/F1 over category triplets.
pub fn triplet_scores(pred: &Stsg, gold: &Stsg) -> Prf {
    let (matched, n_pred, n_gold) = triplet_counts(pred, gold);
    Prf::from_counts(matched, n_pred, n_gold)
}

/// IoU of two inclusive integer frame spans.
pub fn temporal_iou(pred: (u32, u32), gold: (u32, u32)) -> f64 {
    let (ps, pe) = (pred.0.min(pred.1) as u64, pred.0.max(pred.1) as u64);
    let (gs, ge) = (gold.0.min(gold.1) as u64, gold.0.max(gold.1) as u64);
    let lo = ps.max(gs);
    let hi = pe.min(ge);
    let intersection = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = (pe - ps + 1) + (ge - gs + 1) - intersection;
    intersection as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub iou_threshold: f64,
    /// Sum of matched IoUs over the number of gold boxes.
    pub mean_iou: f64,
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub detection_f1: f64,
    pub triplet_precision: f64,
    pub triplet_recall: f64,
    pub triplet_f1: f64,
    /// Mean over gold instances of the span IoU with their matched
    /// prediction (0 when never matched).
    pub temporal_iou: f64,
    pub n_pred_boxes: usize,
    pub n_gold_boxes: usize,
    pub n_matched_boxes: usize,
}

fn span(frames: &[u32]) -> Option<(u32, u32)> {
    Some((*frames.iter().min()?, *frames.iter().max()?))
}

/// Full grounding report of a predicted STSG against a gold one.
pub fn grounding_report(pred: &Stsg, gold: &Stsg, threshold: f64) -> GroundingReport {
    let mut n_pred = 0;
    let mut n_gold = 0;
    let mut iou_sum = 0.0;
    let mut matches_per_gold: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut n_matched = 0;

    for f in &pred.frames {
        n_pred += f.nodes.iter().filter(|n| n.bbox.is_some()).count();
    }
    for g in &gold.frames {
        n_gold += g.nodes.iter().filter(|n| n.bbox.is_some()).count();
        let Some(p) = pred.frame(g.frame_index) else {
            continue;
        };
        let matches = match_objects(p, g, threshold).expect("aligned frames");
        n_matched += matches.len();
        for m in matches {
            iou_sum += m.iou;
            *matches_per_gold
                .entry(m.gold_id)
                .or_default()
                .entry(m.pred_id)
                .or_insert(0) += 1;
        }
    }

    let detection = Prf::from_counts(n_matched, n_pred, n_gold);
    let mean_iou = match (n_gold, n_pred) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => iou_sum / n_gold as f64,
    };

    let mut gold_ids: Vec<&str> = gold
        .frames
        .iter()
        .flat_map(|f| f.nodes.iter().filter(|n| n.bbox.is_some()).map(|n| n.instance_id.as_str()))
        .collect();
    gold_ids.sort_unstable();
    gold_ids.dedup();
    let temporal = if gold_ids.is_empty() {
        if n_pred == 0 { 1.0 } else { 0.0 }
    } else {
        let total: f64 = gold_ids
            .iter()
            .map(|gid| {
                let best = matches_per_gold.get(*gid).and_then(|preds| {
                    preds
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                        .map(|(pid, _)| pid.as_str())
                });
                match (best, span(&gold.occurrences(gid))) {
                    (Some(pid), Some(gs)) => span(&pred.occurrences(pid)).map_or(0.0, |ps| temporal_iou(ps, gs)),
                    _ => 0.0,
                }
            })
            .sum();
        total / gold_ids.len() as f64
    };

    let triplets = triplet_scores(pred, gold);
    GroundingReport {
        iou_threshold: threshold,
        mean_iou,
        detection_precision: detection.precision,
        detection_recall: detection.recall,
        detection_f1: detection.f1,
        triplet_precision: triplets.precision,
        triplet_recall: triplets.recall,
        triplet_f1: triplets.f1,
        temporal_iou: temporal,
        n_pred_boxes: n_pred,
        n_gold_boxes: n_gold,
        n_matched_boxes: n_matched,
    }
}
