//! Exterior angles and the hierarchy objectives built on them.
//!
//! The exterior angle at `a` measures how far the step `a → b` turns away
//! from the ray `r → a`. Positive children that continue outward along the
//! ray have angle 0; a child that doubles back has angle π.
//!
//! Every objective here has two entry points: a graph form over [`Var`]s used
//! during training, and a plain form over `f64` slices ([`HierarchyChain`])
//! that evaluates the same graph code on constants.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Difference vectors shorter than this are degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum())
}

fn angle_between(a: &[f64], b: &[f64], context: &'static str) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    for n in [na, nb] {
        if !(n > DEGENERATE_NORM) {
            return Err(Error::Degenerate { context, norm: n });
        }
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Ok(libm::acos(c.clamp(-1.0, 1.0)))
}

/// `arccos(a′·b′ / ‖a′‖‖b′‖)` with `a′ = a − r` and `b′ = (b − r) − a′`.
///
/// Evaluated without the gradient-safety clamp, so aligned configurations
/// give exactly 0 and antiparallel ones exactly π.
pub fn exterior_angle(a: &[f64], b: &[f64], r: &[f64]) -> Result<f64> {
    check_dims(&[a, b, r])?;
    let ap = sub(a, r);
    let bp = sub(b, a);
    angle_between(&ap, &bp, "exterior_angle")
}

/// Exterior angle with the direction to `b` reflected through the
/// reference: `b′ = (r − b) − a′`.
pub fn flipped_exterior_angle(a: &[f64], b: &[f64], r: &[f64]) -> Result<f64> {
    check_dims(&[a, b, r])?;
    let ap = sub(a, r);
    let bp: Vec<f64> = r.iter().zip(b).zip(&ap).map(|((r, b), a)| (r - b) - a).collect();
    angle_between(&ap, &bp, "flipped_exterior_angle")
}

/// `(e − r) / (‖e − r‖ + ε)`.
pub fn normalize_relative(e: &[f64], r: &[f64], eps: f64) -> Vec<f64> {
    let d = sub(e, r);
    let n = norm(&d) + eps;
    if n == 0.0 {
        return d;
    }
    d.into_iter().map(|x| x / n).collect()
}

fn check_dims(vs: &[&[f64]]) -> Result<()> {
    let d = vs[0].len();
    for v in vs {
        if v.len() != d {
            return Err(Error::shape("geometry", &[d], &[v.len()]));
        }
    }
    if d == 0 {
        return Err(Error::Empty("embedding"));
    }
    Ok(())
}

/// How tier references are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Root for the first tier, previous tier's positive afterwards.
    #[default]
    Dynamic,
    /// Root for every tier.
    Global,
}

/// Frozen root plus the reference policy. The root is only ever read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    root: Vec<f64>,
    pub mode: ReferenceMode,
}

impl ReferenceFrame {
    pub fn new(root: Vec<f64>, mode: ReferenceMode) -> Self {
        Self { root, mode }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(alloc::vec![0.0; dim], ReferenceMode::Dynamic)
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.root.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Normalisation epsilon.
    pub epsilon: f64,
    /// Normalise embeddings against their reference before forming angles.
    pub normalize: bool,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            normalize: true,
        }
    }
}

/// Graph handles for one chain: `pos[t]` and `neg[t]` for tiers `t = 0..l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainVars {
    pub pos: Vec<Var>,
    pub neg: Vec<Var>,
}

impl ChainVars {
    pub fn tiers(&self) -> usize {
        self.pos.len()
    }

    fn validate(&self) -> Result<()> {
        if self.pos.is_empty() {
            return Err(Error::Empty("hierarchy chain"));
        }
        if self.pos.len() != self.neg.len() {
            return Err(Error::shape("hierarchy chain", &[self.pos.len()], &[self.neg.len()]));
        }
        Ok(())
    }

    /// Reference for tier `t` (0-based): the root at `t = 0`, the previous
    /// positive afterwards (dynamic mode only).
    pub fn reference(&self, t: usize, root: Var, mode: ReferenceMode) -> Result<Var> {
        if t >= self.tiers() {
            return Err(Error::TierIndex {
                index: t,
                tiers: self.tiers(),
            });
        }
        Ok(match (t, mode) {
            (0, _) | (_, ReferenceMode::Global) => root,
            (t, ReferenceMode::Dynamic) => self.pos[t - 1],
        })
    }
}

fn checked_norm(g: &Graph, v: Var, context: &'static str) -> Result<()> {
    let n = norm(g.value(v).data());
    if !(n > DEGENERATE_NORM) {
        return Err(Error::Degenerate { context, norm: n });
    }
    Ok(())
}

/// Angle between two difference vectors, differentiable.
pub fn angle_var(g: &mut Graph, ap: Var, bp: Var, context: &'static str) -> Result<Var> {
    checked_norm(g, ap, context)?;
    checked_norm(g, bp, context)?;
    let c = g.cosine(ap, bp)?;
    g.acos(c)
}

pub fn exterior_angle_var(g: &mut Graph, a: Var, b: Var, r: Var) -> Result<Var> {
    let ap = g.sub(a, r)?;
    let bp = g.sub(b, a)?;
    angle_var(g, ap, bp, "exterior_angle")
}

pub fn flipped_exterior_angle_var(g: &mut Graph, a: Var, b: Var, r: Var) -> Result<Var> {
    let ap = g.sub(a, r)?;
    let rb = g.sub(r, b)?;
    let bp = g.sub(rb, ap)?;
    angle_var(g, ap, bp, "flipped_exterior_angle")
}

pub fn normalize_relative_var(g: &mut Graph, e: Var, r: Var, eps: f64) -> Result<Var> {
    let d = g.sub(e, r)?;
    let n = g.l2_norm(d)?;
    let n = g.shift(n, eps)?;
    if g.item(n) == 0.0 {
        return Ok(d);
    }
    g.div(d, n)
}

fn sum_terms(g: &mut Graph, terms: Vec<Var>) -> Result<Var> {
    match terms.len() {
        0 => Ok(g.scalar(0.0)),
        _ => {
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = g.add(acc, t)?;
            }
            Ok(acc)
        }
    }
}

/// `Σ_i Ξ⟨e_i⁺, e_{i+1}⁺⟩ − Ξ⟨e_i⁺, e_i⁻⟩` over consecutive tiers, every
/// angle taken against the fixed root.
pub fn re_loss_var(g: &mut Graph, chain: &ChainVars, root: Var) -> Result<Var> {
    chain.validate()?;
    let mut terms = Vec::new();
    for t in 0..chain.tiers() - 1 {
        let up = exterior_angle_var(g, chain.pos[t], chain.pos[t + 1], root)?;
        let down = exterior_angle_var(g, chain.pos[t], chain.neg[t], root)?;
        terms.push(g.sub(up, down)?);
    }
    sum_terms(g, terms)
}

/// Angle from the reference through `e_t⁺` to a next-tier embedding `b`.
fn forward_angle(g: &mut Graph, a: Var, b: Var, r: Var, opts: &HierarchyOptions) -> Result<Var> {
    if opts.normalize {
        // Each embedding relative to its own reference: a to r, b to a.
        let ap = normalize_relative_var(g, a, r, opts.epsilon)?;
        let bp = normalize_relative_var(g, b, a, opts.epsilon)?;
        angle_var(g, ap, bp, "hier_pos_loss")
    } else {
        exterior_angle_var(g, a, b, r)
    }
}

/// Angle at `e_t⁺` with the same-tier negative reflected through the reference.
fn opposing_angle(g: &mut Graph, a: Var, b: Var, r: Var, opts: &HierarchyOptions) -> Result<Var> {
    if opts.normalize {
        let ap = normalize_relative_var(g, a, r, opts.epsilon)?;
        let bn = normalize_relative_var(g, b, r, opts.epsilon)?;
        let nb = g.neg(bn)?;
        let bp = g.sub(nb, ap)?;
        angle_var(g, ap, bp, "hier_neg_loss")
    } else {
        flipped_exterior_angle_var(g, a, b, r)
    }
}

/// Cross-tier alignment: `Σ_t Ξ⟨e_t⁺, e_{t+1}⁺⟩ + Ξ⟨e_t⁺, e_{t+1}⁻⟩` for
/// `t` up to the second-to-last tier.
pub fn hier_pos_loss_var(
    g: &mut Graph,
    chain: &ChainVars,
    root: Var,
    mode: ReferenceMode,
    opts: &HierarchyOptions,
) -> Result<Var> {
    chain.validate()?;
    let mut terms = Vec::new();
    for t in 0..chain.tiers() - 1 {
        let r = chain.reference(t, root, mode)?;
        let a = chain.pos[t];
        terms.push(forward_angle(g, a, chain.pos[t + 1], r, opts)?);
        terms.push(forward_angle(g, a, chain.neg[t + 1], r, opts)?);
    }
    sum_terms(g, terms)
}

/// Within-tier discrimination: `Σ_t Ξ⟨e_t⁺, e_t⁻⟩` with `b′ = (r − b) − a′`.
pub fn hier_neg_loss_var(
    g: &mut Graph,
    chain: &ChainVars,
    root: Var,
    mode: ReferenceMode,
    opts: &HierarchyOptions,
) -> Result<Var> {
    chain.validate()?;
    let mut terms = Vec::new();
    for t in 0..chain.tiers() {
        let r = chain.reference(t, root, mode)?;
        terms.push(opposing_angle(g, chain.pos[t], chain.neg[t], r, opts)?);
    }
    sum_terms(g, terms)
}

/// Disentanglement term plus both hierarchy terms.
pub fn combined_loss(disentangle: f64, pos: f64, neg: f64) -> f64 {
    disentangle + pos + neg
}

pub fn combined_loss_var(g: &mut Graph, disentangle: Var, pos: Var, neg: Var) -> Result<Var> {
    let s = g.add(disentangle, pos)?;
    g.add(s, neg)
}

/// A chain of plain vectors: `pos[t]`, `neg[t]` for tiers `t = 0..l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyChain {
    pub pos: Vec<Vec<f64>>,
    pub neg: Vec<Vec<f64>>,
}

impl HierarchyChain {
    pub fn new(pos: Vec<Vec<f64>>, neg: Vec<Vec<f64>>) -> Result<Self> {
        if pos.is_empty() {
            return Err(Error::Empty("hierarchy chain"));
        }
        if pos.len() != neg.len() {
            return Err(Error::shape("hierarchy chain", &[pos.len()], &[neg.len()]));
        }
        let d = pos[0].len();
        for v in pos.iter().chain(&neg) {
            if v.len() != d {
                return Err(Error::shape("hierarchy chain", &[d], &[v.len()]));
            }
        }
        Ok(Self { pos, neg })
    }

    pub fn tiers(&self) -> usize {
        self.pos.len()
    }

    pub fn dim(&self) -> usize {
        self.pos[0].len()
    }

    /// Places the chain and root in `g` as trainable leaves (root constant).
    pub fn to_graph(&self, g: &mut Graph, frame: &ReferenceFrame, trainable: bool) -> Result<(ChainVars, Var)> {
        if frame.dim() != self.dim() {
            return Err(Error::shape("reference frame", &[frame.dim()], &[self.dim()]));
        }
        let leaf = |g: &mut Graph, v: &Vec<f64>| {
            let t = Tensor::vector(v.clone());
            if trainable {
                g.param(t)
            } else {
                g.constant(t)
            }
        };
        let pos = self.pos.iter().map(|v| leaf(g, v)).collect();
        let neg = self.neg.iter().map(|v| leaf(g, v)).collect();
        let root = g.constant(Tensor::vector(frame.root().to_vec()));
        Ok((ChainVars { pos, neg }, root))
    }

    pub fn resolve_reference<'a>(&'a self, t: usize, frame: &'a ReferenceFrame) -> Result<&'a [f64]> {
        if t >= self.tiers() {
            return Err(Error::TierIndex {
                index: t,
                tiers: self.tiers(),
            });
        }
        Ok(match (t, frame.mode) {
            (0, _) | (_, ReferenceMode::Global) => frame.root(),
            (t, ReferenceMode::Dynamic) => &self.pos[t - 1],
        })
    }

    fn eval(
        &self,
        frame: &ReferenceFrame,
        f: impl FnOnce(&mut Graph, &ChainVars, Var) -> Result<Var>,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let (chain, root) = self.to_graph(&mut g, frame, false)?;
        let out = f(&mut g, &chain, root)?;
        Ok(g.item(out))
    }

    pub fn re_loss(&self, frame: &ReferenceFrame) -> Result<f64> {
        self.eval(frame, |g, c, r| re_loss_var(g, c, r))
    }

    pub fn hier_pos_loss(&self, frame: &ReferenceFrame, opts: &HierarchyOptions) -> Result<f64> {
        self.eval(frame, |g, c, r| hier_pos_loss_var(g, c, r, frame.mode, opts))
    }

    pub fn hier_neg_loss(&self, frame: &ReferenceFrame, opts: &HierarchyOptions) -> Result<f64> {
        self.eval(frame, |g, c, r| hier_neg_loss_var(g, c, r, frame.mode, opts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn trivial_angles_are_exact() {
        let r = [0.0, 0.0];
        assert_eq!(exterior_angle(&[1.0, 0.0], &[2.0, 0.0], &r).unwrap(), 0.0);
        assert!((exterior_angle(&[1.0, 0.0], &[1.0, 1.0], &r).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(exterior_angle(&[1.0, 0.0], &[0.0, 0.0], &r).unwrap(), PI);
    }

    #[test]
    fn degenerate_differences_are_rejected() {
        let r = [0.0, 0.0];
        assert!(matches!(
            exterior_angle(&[0.0, 0.0], &[1.0, 0.0], &r),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            exterior_angle(&[1.0, 0.0], &[1.0, 0.0], &r),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn normalize_relative_cases() {
        assert_eq!(normalize_relative(&[3.0, 0.0], &[0.0, 0.0], 0.0), vec![1.0, 0.0]);
        assert_eq!(normalize_relative(&[1.0, 2.0], &[1.0, 2.0], 1e-8), vec![0.0, 0.0]);
        let v = normalize_relative(&[1.0, 1.0], &[1.0, 0.0], 1e-8);
        assert!(v[0].abs() < 1e-7 && (v[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn reference_resolution() {
        let chain = HierarchyChain::new(
            vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]],
            vec![vec![0.0, 1.0]; 3],
        )
        .unwrap();
        let frame = ReferenceFrame::new(vec![0.5, 0.5], ReferenceMode::Dynamic);
        assert_eq!(chain.resolve_reference(0, &frame).unwrap(), &[0.5, 0.5]);
        assert_eq!(chain.resolve_reference(2, &frame).unwrap(), &[2.0, 0.0]);
        assert!(matches!(
            chain.resolve_reference(3, &frame),
            Err(Error::TierIndex { index: 3, tiers: 3 })
        ));
    }

    #[test]
    fn re_loss_cancels_when_negatives_equal_next_positives() {
        let chain = HierarchyChain::new(
            vec![vec![1.0, 0.2], vec![1.5, 1.0], vec![0.3, 2.0]],
            vec![vec![1.5, 1.0], vec![0.3, 2.0], vec![-1.0, 0.0]],
        )
        .unwrap();
        let v = chain.re_loss(&ReferenceFrame::origin(2)).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn hier_pos_two_tier_example() {
        let chain = HierarchyChain::new(
            vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![5.0, 5.0], vec![1.0, -1.0]],
        )
        .unwrap();
        let v = chain
            .hier_pos_loss(&ReferenceFrame::origin(2), &HierarchyOptions::default())
            .unwrap();
        assert!((v - PI).abs() < 1e-9);
    }

    #[test]
    fn hier_neg_exact_reflection_is_degenerate() {
        let chain = HierarchyChain::new(vec![vec![1.0, 2.0]], vec![vec![-1.0, -2.0]]).unwrap();
        let frame = ReferenceFrame::origin(2);
        for normalize in [false, true] {
            let opts = HierarchyOptions {
                normalize,
                ..Default::default()
            };
            assert!(matches!(
                chain.hier_neg_loss(&frame, &opts),
                Err(Error::Degenerate { .. })
            ));
        }
    }

    #[test]
    fn combined_loss_is_a_sum() {
        assert_eq!(combined_loss(0.0, 0.0, 0.0), 0.0);
        assert_eq!(combined_loss(1.0, 2.0, 0.5), 3.5);
    }
}
