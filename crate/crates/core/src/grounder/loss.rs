use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::diff::{Graph, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub class: f64,
    pub bbox: f64,
    pub giou: f64,
    pub embedding: f64,
    /// Weight of the decorrelation term inside the disentangle loss.
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            class: 4.0,
            bbox: 5.0,
            giou: 2.0,
            embedding: 5.0,
            lambda: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("loss.class", self.class),
            ("loss.bbox", self.bbox),
            ("loss.giou", self.giou),
            ("loss.embedding", self.embedding),
            ("loss.lambda", self.lambda),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// `w_class·class + w_bbox·bbox + w_giou·giou + w_embedding·embedding`.
    pub fn total(&self, class: f64, bbox: f64, giou: f64, embedding: f64) -> f64 {
        self.class * class + self.bbox * bbox + self.giou * giou + self.embedding * embedding
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.25 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine", &[a.len()], &[b.len()]));
    }
    let (na, nb) = (libm::sqrt(dot(a, a)), libm::sqrt(dot(b, b)));
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Degenerate {
            context: "score",
            norm: na.min(nb),
        });
    }
    Ok(dot(a, b) / (na * nb))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// Logit `cos(query, feature) / tau` and its logistic probability for each
/// proposal feature.
pub fn score(query: &[f64], features: &[Vec<f64>], tau: f64) -> Result<Vec<(f64, f64)>> {
    features
        .iter()
        .map(|f| {
            let z = cosine(query, f)? / tau;
            Ok((z, sigmoid(z)))
        })
        .collect()
}

/// Mean of `-alpha (1 - p_t)^gamma ln p_t` over predictions.
pub fn focal_loss(probs: &[f64], labels: &[f64], params: FocalParams) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::shape("focal_loss", &[probs.len()], &[labels.len()]));
    }
    if probs.is_empty() {
        return Err(Error::Empty("focal loss predictions"));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityRange(p));
        }
        let pt = if y > 0.5 { p } else { 1.0 - p };
        total += -params.alpha * libm::pow(1.0 - pt, params.gamma) * libm::log(pt);
    }
    Ok(total / probs.len() as f64)
}

pub fn giou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    Ok(1.0 - pred.giou(gt)?)
}

/// Mean absolute coordinate difference.
pub fn l1_box_loss(pred: &BBox, gt: &BBox) -> f64 {
    pred.to_array()
        .iter()
        .zip(gt.to_array())
        .map(|(a, b)| libm::fabs(a - b))
        .sum::<f64>()
        / 4.0
}

/// Multi-positive InfoNCE: mean over positives of
/// `-ln(exp(s_p / tau) / sum_c exp(s_c / tau))`, the sum running over every
/// positive and negative candidate.
pub fn contrastive_loss(query: &[f64], positives: &[Vec<f64>], negatives: &[Vec<f64>], tau: f64) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::Empty("contrastive positives"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("contrastive negatives"));
    }
    let logits: Vec<f64> = positives
        .iter()
        .chain(negatives)
        .map(|c| Ok(cosine(query, c)? / tau))
        .collect::<Result<_>>()?;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(logits.iter().map(|z| libm::exp(z - m)).sum::<f64>());
    Ok(logits[..positives.len()].iter().map(|z| lse - z).sum::<f64>() / positives.len() as f64)
}

// ------------------------------------------------------------------ graph forms

/// `[Q, P]` logits: cosine of every query row with every feature row over `tau`.
pub fn score_logits_var(g: &mut Graph, queries: Var, features: Var, tau: f64) -> Result<Var> {
    let q = g.normalize_rows(queries)?;
    let f = g.normalize_rows(features)?;
    let c = g.matmul_bt(q, f)?;
    g.scale(c, 1.0 / tau)
}

fn power(g: &mut Graph, x: Var, gamma: f64) -> Result<Option<Var>> {
    if gamma == 0.0 {
        return Ok(None);
    }
    if libm::trunc(gamma) == gamma && gamma > 0.0 && gamma <= 8.0 {
        let mut acc = x;
        for _ in 1..gamma as usize {
            acc = g.mul(acc, x)?;
        }
        return Ok(Some(acc));
    }
    let l = g.ln(x)?;
    let s = g.scale(l, gamma)?;
    Ok(Some(g.exp(s)?))
}

/// Focal loss on logits, averaged over every entry; `labels` holds 0 or 1
/// per logit in row-major order.
pub fn focal_loss_var(g: &mut Graph, logits: Var, labels: &[f64], params: FocalParams) -> Result<Var> {
    let shape = g.value(logits).shape().to_vec();
    if g.value(logits).len() != labels.len() {
        return Err(Error::shape("focal_loss", &shape, &[labels.len()]));
    }
    if labels.is_empty() {
        return Err(Error::Empty("focal loss predictions"));
    }
    let signs = Tensor::from_parts(shape, labels.iter().map(|&y| if y > 0.5 { 1.0 } else { -1.0 }).collect());
    let s = g.constant(signs);
    let z = g.mul(logits, s)?;
    let pt = g.sigmoid(z)?;
    let nz = g.neg(z)?;
    let one_minus = g.sigmoid(nz)?;
    let log_pt = g.ln(pt)?;
    let term = match power(g, one_minus, params.gamma)? {
        Some(w) => g.mul(w, log_pt)?,
        None => log_pt,
    };
    let m = g.mean(term)?;
    g.scale(m, -params.alpha)
}

fn column(g: &mut Graph, values: Vec<f64>) -> Result<Var> {
    let n = values.len();
    Ok(g.constant(Tensor::matrix(n, 1, values)?))
}

fn box_columns(boxes: &[BBox]) -> [Vec<f64>; 4] {
    [
        boxes.iter().map(|b| b.x_min).collect(),
        boxes.iter().map(|b| b.y_min).collect(),
        boxes.iter().map(|b| b.x_max).collect(),
        boxes.iter().map(|b| b.y_max).collect(),
    ]
}

/// Applies `[N, 4]` deltas `(dx, dy, dw, dh)` to anchor boxes, as
/// [`BBox::apply_deltas`] does, returning `[N, 4]` corner coordinates.
pub fn apply_deltas_var(g: &mut Graph, anchors: &[BBox], deltas: Var) -> Result<Var> {
    let (n, c) = g.value(deltas).dims2();
    if n != anchors.len() || c != 4 {
        return Err(Error::shape("apply_deltas", g.value(deltas).shape(), &[anchors.len(), 4]));
    }
    let w = column(g, anchors.iter().map(BBox::width).collect())?;
    let h = column(g, anchors.iter().map(BBox::height).collect())?;
    let cx = column(g, anchors.iter().map(|b| b.center().0).collect())?;
    let cy = column(g, anchors.iter().map(|b| b.center().1).collect())?;
    let d: Vec<Var> = (0..4).map(|j| g.slice_cols(deltas, j, 1)).collect::<Result<_>>()?;
    let sx = g.mul(d[0], w)?;
    let ncx = g.add(sx, cx)?;
    let sy = g.mul(d[1], h)?;
    let ncy = g.add(sy, cy)?;
    let ew = g.exp(d[2])?;
    let nw = g.mul(ew, w)?;
    let eh = g.exp(d[3])?;
    let nh = g.mul(eh, h)?;
    let hw = g.scale(nw, 0.5)?;
    let hh = g.scale(nh, 0.5)?;
    let x0 = g.sub(ncx, hw)?;
    let y0 = g.sub(ncy, hh)?;
    let x1 = g.add(ncx, hw)?;
    let y1 = g.add(ncy, hh)?;
    g.concat_cols(&[x0, y0, x1, y1])
}

/// Mean L1 distance between `[N, 4]` predicted corners and ground truth.
pub fn l1_box_loss_var(g: &mut Graph, pred: Var, gt: &[BBox]) -> Result<Var> {
    let target = Tensor::matrix(gt.len(), 4, gt.iter().flat_map(|b| b.to_array()).collect())?;
    if g.value(pred).shape() != target.shape() {
        return Err(Error::shape("l1_box_loss", g.value(pred).shape(), target.shape()));
    }
    let t = g.constant(target);
    let d = g.sub(pred, t)?;
    let a = g.abs(d)?;
    g.mean(a)
}

fn max_var(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let r = g.relu(d)?;
    g.add(b, r)
}

fn min_var(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let r = g.relu(d)?;
    g.sub(a, r)
}

/// Mean `1 - GIoU` between `[N, 4]` predicted corners and ground truth.
pub fn giou_loss_var(g: &mut Graph, pred: Var, gt: &[BBox]) -> Result<Var> {
    let (n, c) = g.value(pred).dims2();
    if n != gt.len() || c != 4 {
        return Err(Error::shape("giou_loss", g.value(pred).shape(), &[gt.len(), 4]));
    }
    for i in 0..n {
        let r = g.value(pred).row(i);
        BBox::new(r[0], r[1], r[2], r[3]).validated()?;
    }
    for b in gt {
        b.validated()?;
    }
    let p: Vec<Var> = (0..4).map(|j| g.slice_cols(pred, j, 1)).collect::<Result<_>>()?;
    let cols = box_columns(gt);
    let t: Vec<Var> = cols
        .iter()
        .map(|c| column(g, c.clone()))
        .collect::<Result<_>>()?;
    let pw = g.sub(p[2], p[0])?;
    let ph = g.sub(p[3], p[1])?;
    let area_p = g.mul(pw, ph)?;
    let area_t = column(g, gt.iter().map(BBox::area).collect())?;
    let ix0 = max_var(g, p[0], t[0])?;
    let iy0 = max_var(g, p[1], t[1])?;
    let ix1 = min_var(g, p[2], t[2])?;
    let iy1 = min_var(g, p[3], t[3])?;
    let iw = g.sub(ix1, ix0)?;
    let iw = g.relu(iw)?;
    let ih = g.sub(iy1, iy0)?;
    let ih = g.relu(ih)?;
    let inter = g.mul(iw, ih)?;
    let sum = g.add(area_p, area_t)?;
    let union = g.sub(sum, inter)?;
    let ex0 = min_var(g, p[0], t[0])?;
    let ey0 = min_var(g, p[1], t[1])?;
    let ex1 = max_var(g, p[2], t[2])?;
    let ey1 = max_var(g, p[3], t[3])?;
    let ew = g.sub(ex1, ex0)?;
    let eh = g.sub(ey1, ey0)?;
    let enclosing = g.mul(ew, eh)?;
    let iou = g.div(inter, union)?;
    let gap = g.sub(enclosing, union)?;
    let penalty = g.div(gap, enclosing)?;
    let giou = g.sub(iou, penalty)?;
    let loss = g.neg(giou)?;
    let loss = g.shift(loss, 1.0)?;
    g.mean(loss)
}

/// Multi-positive InfoNCE over candidate rows; the first `positives` rows
/// of `candidates` are the positives.
pub fn contrastive_loss_var(g: &mut Graph, query: Var, candidates: Var, positives: usize, tau: f64) -> Result<Var> {
    let (k, _) = g.value(candidates).dims2();
    if positives == 0 {
        return Err(Error::Empty("contrastive positives"));
    }
    if positives >= k {
        return Err(Error::Empty("contrastive negatives"));
    }
    let q = if g.value(query).rank() == 1 {
        let d = g.value(query).len();
        g.reshape(query, &[1, d])?
    } else {
        query
    };
    let logits = score_logits_var(g, q, candidates, tau)?;
    let p = g.softmax(logits)?;
    let head = g.slice_cols(p, 0, positives)?;
    let l = g.ln(head)?;
    let m = g.mean(l)?;
    g.neg(m)
}
