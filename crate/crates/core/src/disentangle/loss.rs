use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Component;
use crate::diff::{Graph, Tensor, Var};
use crate::{Error, Result};

/// How `cos(·,·)` in the margin terms is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CosineReading {
    /// `1 − cosine similarity`.
    #[default]
    Distance,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisentangleLossConfig {
    pub margin: f64,
    /// Weight of the orthogonality term.
    pub lambda: f64,
    pub reading: CosineReading,
}

impl Default for DisentangleLossConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            lambda: 0.1,
            reading: CosineReading::Distance,
        }
    }
}

/// Row indices of one chain's captions in a sentence batch, per tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRows {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

/// Unit-normalises pooled component rows.
pub fn pooled_units(g: &mut Graph, components: &[(Component, Var)]) -> Result<Vec<(Component, Var)>> {
    components
        .iter()
        .map(|&(c, v)| Ok((c, g.normalize_rows(v)?)))
        .collect()
}

/// Mean over rows and component pairs of `|p_i · p_j|` for unit rows.
pub fn mean_abs_correlation(units: &[Tensor]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let (a, b) = (&units[i], &units[j]);
            let (rows, _) = a.dims2();
            for r in 0..rows {
                let d: f64 = a.row(r).iter().zip(b.row(r)).map(|(x, y)| x * y).sum();
                total += libm::fabs(d);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn lookup(units: &[(Component, Var)], c: Component) -> Option<Var> {
    units.iter().find(|(k, _)| *k == c).map(|(_, v)| *v)
}

/// Orthogonality penalty over every pair of components present in `units`,
/// plus hinged margin terms per chain:
///
/// - object, tiers `t = 1..l−1`: `m + δ(O_t⁺, O_{t+1}⁺) − δ(O_t⁺, O_t⁻)`
/// - attribute, tiers `t = 2..l−1`: same form on `A`
/// - relation, tier `l`: `m − δ(R_l⁺, R_l⁻)`
///
/// where `δ` is cosine distance (or similarity, per `cfg.reading`). The
/// penalty is averaged over rows, the margin terms over chains.
pub fn disentangle_loss(
    g: &mut Graph,
    units: &[(Component, Var)],
    chains: &[ChainRows],
    cfg: &DisentangleLossConfig,
) -> Result<Var> {
    if units.is_empty() {
        return Err(Error::Empty("component set"));
    }
    let mut total = g.scalar(0.0);
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let prod = g.mul(units[i].1, units[j].1)?;
            let dim = g.value(prod).dims2().1 as f64;
            let dots = g.mean_axis(prod, 1)?;
            let dots = g.scale(dots, dim)?;
            let a = g.abs(dots)?;
            let m = g.mean(a)?;
            let m = g.scale(m, cfg.lambda)?;
            total = g.add(total, m)?;
        }
    }
    if chains.is_empty() {
        return Ok(total);
    }

    let delta = |g: &mut Graph, v: Var, a: usize, b: usize| -> Result<Var> {
        let ra = g.row(v, a)?;
        let rb = g.row(v, b)?;
        let s = g.dot(ra, rb)?;
        match cfg.reading {
            CosineReading::Distance => {
                let n = g.neg(s)?;
                g.shift(n, 1.0)
            }
            CosineReading::Similarity => Ok(s),
        }
    };
    let triplet = |g: &mut Graph, v: Var, anchor: usize, pos: usize, neg: usize| -> Result<Var> {
        let dp = delta(g, v, anchor, pos)?;
        let dn = delta(g, v, anchor, neg)?;
        let d = g.sub(dp, dn)?;
        let d = g.shift(d, cfg.margin)?;
        g.relu(d)
    };

    let mut terms = Vec::new();
    for chain in chains {
        let l = chain.pos.len();
        if l == 0 || chain.neg.len() != l {
            return Err(Error::MissingComponent {
                component: "tier",
                tier: l,
            });
        }
        if let Some(o) = lookup(units, Component::Object) {
            for t in 0..l - 1 {
                terms.push(triplet(g, o, chain.pos[t], chain.pos[t + 1], chain.neg[t])?);
            }
        }
        if let Some(a) = lookup(units, Component::Attribute) {
            for t in 1..l.saturating_sub(1) {
                terms.push(triplet(g, a, chain.pos[t], chain.pos[t + 1], chain.neg[t])?);
            }
        }
        if let Some(r) = lookup(units, Component::Relation) {
            let d = delta(g, r, chain.pos[l - 1], chain.neg[l - 1])?;
            let n = g.neg(d)?;
            let h = g.shift(n, cfg.margin)?;
            terms.push(g.relu(h)?);
        }
    }
    if terms.is_empty() {
        return Ok(total);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    let acc = g.scale(acc, 1.0 / chains.len() as f64)?;
    g.add(total, acc)
}
