use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::vision::Proposal;
use crate::bbox::BBox;
use crate::geometry::{exterior_angle, ReferenceMode};
use crate::synth::{ChainRecord, Query, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub caption: String,
    pub tier: usize,
    /// Ids of every object the caption is true for.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub scene: Scene,
    pub proposals: Vec<Proposal>,
    pub queries: Vec<EvalQuery>,
}

/// Every positive and negative caption of `chain`, with ground-truth targets
/// from the scene predicates.
pub fn chain_queries(scene: &Scene, chain: &ChainRecord) -> Result<Vec<EvalQuery>> {
    let mut out = Vec::new();
    for (t, tier) in chain.tiers.iter().enumerate() {
        for caption in [&tier.positive, &tier.negative] {
            let q = Query::parse(caption)?;
            out.push(EvalQuery {
                caption: caption.clone(),
                tier: t + 1,
                targets: scene.matches(&q),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// Anything that scores and localises captions against a scene's proposals.
pub trait Detector {
    /// One detection per proposal for every query, in query order.
    fn detect(&mut self, item: &EvalItem) -> Result<Vec<Vec<Detection>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Detections scoring above this count as predictions for
    /// precision and recall.
    pub operating_point: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            operating_point: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMetrics {
    pub tier: usize,
    pub queries: usize,
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ap_category: f64,
    pub ap_description: f64,
    /// Geometric mean of the category and description APs.
    pub ap: f64,
    pub tiers: Vec<TierMetrics>,
}

/// 11-point interpolated AP of scored predictions `(score, is_true_positive)`
/// against `positives` ground-truth instances.
pub fn average_precision(predictions: &[(f64, bool)], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut sorted: Vec<(f64, bool)> = predictions.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (i, &(_, hit)) in sorted.iter().enumerate() {
        if hit {
            tp += 1;
        }
        curve.push((tp as f64 / positives as f64, tp as f64 / (i + 1) as f64));
    }
    (0..=10)
        .map(|k| {
            let r = k as f64 / 10.0;
            curve
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

#[derive(Default)]
struct Pool {
    predictions: Vec<(f64, bool)>,
    positives: usize,
    queries: usize,
    above: usize,
    above_hits: usize,
}

/// Greedy matching of one query's detections to its targets.
fn match_query(dets: &[Detection], targets: &[BBox], iou_threshold: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used = alloc::vec![false; targets.len()];
    let mut out = Vec::with_capacity(dets.len());
    for i in order {
        let d = &dets[i];
        let best = targets
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, t)| (j, d.bbox.iou(t)))
            .filter(|(_, iou)| *iou >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let hit = best.is_some();
        if let Some((j, _)) = best {
            used[j] = true;
        }
        out.push((d.score, hit));
    }
    out
}

/// Runs `detector` over `items` and computes per-tier AP, precision and
/// recall; category AP pools tier-1 queries and description AP tier-3.
pub fn evaluate<D: Detector + ?Sized>(detector: &mut D, items: &[EvalItem], cfg: &EvalConfig) -> Result<Metrics> {
    if items.iter().all(|i| i.queries.is_empty()) {
        return Err(Error::Empty("evaluation set"));
    }
    let mut pools: [Pool; 3] = Default::default();
    for item in items {
        let dets = detector.detect(item)?;
        if dets.len() != item.queries.len() {
            return Err(Error::shape("detections", &[dets.len()], &[item.queries.len()]));
        }
        for (q, d) in item.queries.iter().zip(&dets) {
            let pool = pools
                .get_mut(q.tier.wrapping_sub(1))
                .ok_or(Error::TierIndex { index: q.tier, tiers: 3 })?;
            let targets: Vec<BBox> = q
                .targets
                .iter()
                .map(|&t| item.scene.object(t).map(|o| o.bbox))
                .collect::<Result<_>>()?;
            let matched = match_query(d, &targets, cfg.iou_threshold);
            for &(s, hit) in &matched {
                if s > cfg.operating_point {
                    pool.above += 1;
                    pool.above_hits += hit as usize;
                }
            }
            pool.predictions.extend(matched);
            pool.positives += targets.len();
            pool.queries += 1;
        }
    }
    let tiers: Vec<TierMetrics> = pools
        .iter()
        .enumerate()
        .map(|(t, p)| TierMetrics {
            tier: t + 1,
            queries: p.queries,
            ap: average_precision(&p.predictions, p.positives),
            precision: if p.above == 0 { 0.0 } else { p.above_hits as f64 / p.above as f64 },
            recall: if p.positives == 0 {
                0.0
            } else {
                p.above_hits as f64 / p.positives as f64
            },
        })
        .collect();
    let (c, d) = (tiers[0].ap, tiers[2].ap);
    Ok(Metrics {
        ap_category: c,
        ap_description: d,
        ap: libm::sqrt(c * d),
        tiers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBin {
    pub low: f64,
    pub high: f64,
    pub count_pos: usize,
    pub count_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub bins: Vec<AngleBin>,
    pub mean_pos: f64,
    pub mean_neg: f64,
}

impl AngleHistogram {
    /// Mean negative angle minus mean positive angle.
    pub fn gap(&self) -> f64 {
        self.mean_neg - self.mean_pos
    }
}

/// Exterior angles of one embedded chain: positive pairs
/// `Ξ(e⁺_t, e⁺_{t+1})` and same-tier pairs `Ξ(e⁺_t, e⁻_t)`, each measured
/// from the tier's reference point.
pub fn chain_angles(pos: &[Vec<f64>], neg: &[Vec<f64>], root: &[f64], mode: ReferenceMode) -> Result<(Vec<f64>, Vec<f64>)> {
    if pos.len() != neg.len() || pos.is_empty() {
        return Err(Error::shape("chain_angles", &[pos.len()], &[neg.len()]));
    }
    let reference = |t: usize| match mode {
        ReferenceMode::Global => root,
        ReferenceMode::Dynamic if t == 0 => root,
        ReferenceMode::Dynamic => pos[t - 1].as_slice(),
    };
    let mut p = Vec::new();
    let mut n = Vec::new();
    for t in 0..pos.len() {
        if t + 1 < pos.len() {
            p.push(exterior_angle(&pos[t], &pos[t + 1], reference(t))?);
        }
        n.push(exterior_angle(&pos[t], &neg[t], reference(t))?);
    }
    Ok((p, n))
}

/// Histogram of angles over `[0, π]` in `bins` equal bins.
pub fn angle_histogram(pos: &[f64], neg: &[f64], bins: usize) -> Result<AngleHistogram> {
    if bins == 0 {
        return Err(Error::config("eval.angle_bins", "must be positive"));
    }
    let width = core::f64::consts::PI / bins as f64;
    let mut out: Vec<AngleBin> = (0..bins)
        .map(|i| AngleBin {
            low: i as f64 * width,
            high: (i + 1) as f64 * width,
            count_pos: 0,
            count_neg: 0,
        })
        .collect();
    let slot = |a: f64| ((a / width) as usize).min(bins - 1);
    for &a in pos {
        out[slot(a)].count_pos += 1;
    }
    for &a in neg {
        out[slot(a)].count_neg += 1;
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(AngleHistogram {
        bins: out,
        mean_pos: mean(pos),
        mean_neg: mean(neg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking_has_unit_ap() {
        let p = [(0.9, true), (0.8, true), (0.1, false)];
        assert_eq!(average_precision(&p, 2), 1.0);
    }

    #[test]
    fn missed_positive_caps_recall() {
        let p = [(0.9, true)];
        let ap = average_precision(&p, 2);
        assert!((ap - 6.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = angle_histogram(&[0.0, 1.0, core::f64::consts::PI], &[2.0], 6).unwrap();
        let total: usize = h.bins.iter().map(|b| b.count_pos + b.count_neg).sum();
        assert_eq!(total, 4);
        assert_eq!(h.bins[5].count_pos, 1);
    }
}
