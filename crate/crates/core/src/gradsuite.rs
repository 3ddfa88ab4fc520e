//! Finite-difference sweep over every differentiable primitive and every
//! loss, each at a configurable number of random well-conditioned points.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::diff::{grad_check_primitive, grad_check_with, GradCheckConfig, GradCheckReport, Graph, Primitive, Tensor, Var};
use crate::disentangle::{
    cross_attention, disentangle_loss, lora_linear, multi_head_attention, pooled_units, ChainRows, Component,
    DisentangleLossConfig,
};
use crate::geometry::{
    combined_loss_var, exterior_angle_var, flipped_exterior_angle_var, hier_neg_loss_var, hier_pos_loss_var,
    normalize_relative_var, re_loss_var, ChainVars, HierarchyOptions, ReferenceMode,
};
use crate::grounder::{
    apply_deltas_var, contrastive_loss_var, focal_loss_var, giou_loss_var, l1_box_loss_var, score_logits_var,
    FocalParams, LossWeights,
};
use crate::rng::{self, Rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub points: usize,
    pub seed: u64,
    pub check: GradCheckConfig,
    /// Name of one operation whose analytic gradient is negated, to show
    /// that the sweep catches it.
    pub flip: Option<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            points: 100,
            seed: 0,
            check: GradCheckConfig::default(),
            flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub module: String,
    pub op: String,
    pub points: usize,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub ops: Vec<OpReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(OpReport::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OpReport> {
        self.ops.iter().filter(|o| !o.passed())
    }
}

type Inputs = fn(&mut Rng) -> Vec<Tensor>;
type Loss = fn(&mut Graph, &[Var]) -> Result<Var>;

enum Check {
    Primitive(Primitive),
    Loss(Loss),
}

struct Case {
    module: &'static str,
    name: &'static str,
    inputs: Inputs,
    check: Check,
}

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), rng::normal_vec(rng, n, 1.0))
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Values bounded away from zero with random sign.
fn nonzero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(
        shape.to_vec(),
        (0..n)
            .map(|_| {
                let m = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
}

/// Weighted sum of every entry, so no output coordinate has a symmetric
/// zero gradient.
fn probe(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n = g.value(y).len();
    let w = Tensor::from_parts(shape, (0..n).map(|k| libm::cos(0.9 * k as f64 + 0.3) + 0.4).collect());
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn chain(g: &mut Graph, pos: Var, neg: Var) -> Result<ChainVars> {
    let l = g.value(pos).dims2().0;
    Ok(ChainVars {
        pos: (0..l).map(|t| g.row(pos, t)).collect::<Result<_>>()?,
        neg: (0..l).map(|t| g.row(neg, t)).collect::<Result<_>>()?,
    })
}

fn chain_inputs(rng: &mut Rng) -> Vec<Tensor> {
    vec![randn(rng, &[3, 4]), randn(rng, &[3, 4]), randn(rng, &[4])]
}

const RAW: HierarchyOptions = HierarchyOptions {
    normalize: false,
    epsilon: 1e-8,
};

fn normalized() -> HierarchyOptions {
    HierarchyOptions::default()
}

fn component_inputs(rng: &mut Rng) -> Vec<Tensor> {
    (0..3).map(|_| randn(rng, &[6, 4])).collect()
}

fn component_loss(g: &mut Graph, v: &[Var]) -> Result<Var> {
    let comps: Vec<(Component, Var)> = Component::ALL.iter().copied().zip(v.iter().copied()).collect();
    let units = pooled_units(g, &comps)?;
    let rows = [ChainRows {
        pos: vec![0, 1, 2],
        neg: vec![3, 4, 5],
    }];
    disentangle_loss(g, &units, &rows, &DisentangleLossConfig::default())
}

const ANCHORS: [BBox; 3] = [
    BBox::new(0.1, 0.1, 0.4, 0.5),
    BBox::new(0.5, 0.2, 0.9, 0.6),
    BBox::new(0.2, 0.6, 0.5, 0.9),
];
const TARGETS: [BBox; 3] = [
    BBox::new(0.15, 0.05, 0.45, 0.45),
    BBox::new(0.55, 0.25, 0.85, 0.7),
    BBox::new(0.25, 0.55, 0.55, 0.95),
];

fn delta_inputs(rng: &mut Rng) -> Vec<Tensor> {
    vec![Tensor::from_parts(vec![3, 4], rng::normal_vec(rng, 12, 0.2))]
}

fn focal_labels(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect()
}

fn embedding_loss(g: &mut Graph, pos: Var, neg: Var, root: Var, comps: &[Var]) -> Result<Var> {
    let c = chain(g, pos, neg)?;
    let p = hier_pos_loss_var(g, &c, root, ReferenceMode::Dynamic, &normalized())?;
    let n = hier_neg_loss_var(g, &c, root, ReferenceMode::Dynamic, &normalized())?;
    let d = component_loss(g, comps)?;
    combined_loss_var(g, d, p, n)
}

fn cases() -> Vec<Case> {
    let p = |name, inputs: Inputs, prim| Case {
        module: "diffcore",
        name,
        inputs,
        check: Check::Primitive(prim),
    };
    let l = |module, name, inputs: Inputs, loss: Loss| Case {
        module,
        name,
        inputs,
        check: Check::Loss(loss),
    };
    vec![
        p("matmul", |r| vec![randn(r, &[3, 4]), randn(r, &[4, 2])], Primitive::MatMul),
        p("add", |r| vec![randn(r, &[3, 4]), randn(r, &[4])], Primitive::Add),
        p("sub", |r| vec![randn(r, &[3, 4]), randn(r, &[3, 4])], Primitive::Sub),
        p("mul", |r| vec![randn(r, &[3, 4]), randn(r, &[3, 4])], Primitive::Mul),
        p("div", |r| vec![randn(r, &[3, 4]), nonzero(r, &[3, 4])], Primitive::Div),
        p("softmax", |r| vec![randn(r, &[3, 4])], Primitive::Softmax),
        p(
            "layer_norm",
            |r| vec![randn(r, &[3, 8]), randn(r, &[8]), randn(r, &[8])],
            Primitive::LayerNorm,
        ),
        p(
            "affine",
            |r| vec![randn(r, &[3, 4]), randn(r, &[4, 2]), randn(r, &[2])],
            Primitive::Affine,
        ),
        p("gelu", |r| vec![randn(r, &[3, 4])], Primitive::Gelu),
        p("relu", |r| vec![randn(r, &[3, 4])], Primitive::Relu),
        p("l2_norm", |r| vec![randn(r, &[5])], Primitive::L2Norm),
        p("cosine", |r| vec![randn(r, &[5]), randn(r, &[5])], Primitive::Cosine),
        p("acos", |r| vec![uniform(r, &[6], -0.95, 0.95)], Primitive::Acos),
        p("mean", |r| vec![randn(r, &[3, 4])], Primitive::Mean),
        p("mean_rows", |r| vec![randn(r, &[3, 4])], Primitive::MeanRows),
        p("abs", |r| vec![randn(r, &[3, 4])], Primitive::Abs),
        p(
            "clamp",
            |r| vec![randn(r, &[3, 4])],
            Primitive::Clamp { lo: -0.5, hi: 0.5 },
        ),
        p("exp", |r| vec![randn(r, &[3, 4])], Primitive::Exp),
        p("ln", |r| vec![uniform(r, &[3, 4], 0.2, 3.0)], Primitive::Ln),
        p("sigmoid", |r| vec![randn(r, &[3, 4])], Primitive::Sigmoid),
        p("dot", |r| vec![randn(r, &[5]), randn(r, &[5])], Primitive::Dot),
        p("normalize_rows", |r| vec![randn(r, &[3, 4])], Primitive::NormalizeRows),
        p(
            "segment_attention",
            |r| vec![randn(r, &[3, 4]), randn(r, &[3, 4]), randn(r, &[3, 4])],
            Primitive::SegmentAttention,
        ),
        l(
            "geometry",
            "exterior_angle",
            |r| vec![randn(r, &[4]), randn(r, &[4]), randn(r, &[4])],
            |g, v| exterior_angle_var(g, v[0], v[1], v[2]),
        ),
        l(
            "geometry",
            "flipped_exterior_angle",
            |r| vec![randn(r, &[4]), randn(r, &[4]), randn(r, &[4])],
            |g, v| flipped_exterior_angle_var(g, v[0], v[1], v[2]),
        ),
        l(
            "geometry",
            "normalize_relative",
            |r| vec![randn(r, &[4]), randn(r, &[4])],
            |g, v| {
                let y = normalize_relative_var(g, v[0], v[1], 1e-8)?;
                probe(g, y)
            },
        ),
        l("geometry", "re_loss", chain_inputs, |g, v| {
            let c = chain(g, v[0], v[1])?;
            re_loss_var(g, &c, v[2])
        }),
        l("geometry", "hier_pos_loss", chain_inputs, |g, v| {
            let c = chain(g, v[0], v[1])?;
            hier_pos_loss_var(g, &c, v[2], ReferenceMode::Dynamic, &normalized())
        }),
        l("geometry", "hier_pos_loss_raw", chain_inputs, |g, v| {
            let c = chain(g, v[0], v[1])?;
            hier_pos_loss_var(g, &c, v[2], ReferenceMode::Global, &RAW)
        }),
        l("geometry", "hier_neg_loss", chain_inputs, |g, v| {
            let c = chain(g, v[0], v[1])?;
            hier_neg_loss_var(g, &c, v[2], ReferenceMode::Dynamic, &normalized())
        }),
        l("geometry", "hier_neg_loss_raw", chain_inputs, |g, v| {
            let c = chain(g, v[0], v[1])?;
            hier_neg_loss_var(g, &c, v[2], ReferenceMode::Global, &RAW)
        }),
        l(
            "geometry",
            "combined_loss",
            |r| {
                let mut v = chain_inputs(r);
                v.extend(component_inputs(r));
                v
            },
            |g, v| embedding_loss(g, v[0], v[1], v[2], &v[3..6]),
        ),
        l(
            "disentangle",
            "lora_linear",
            |r| {
                vec![
                    randn(r, &[3, 4]),
                    randn(r, &[4, 5]),
                    randn(r, &[4, 2]),
                    randn(r, &[2, 5]),
                ]
            },
            |g, v| {
                let y = lora_linear(g, v[0], v[1], v[2], v[3], 2.0)?;
                probe(g, y)
            },
        ),
        l(
            "disentangle",
            "multi_head_attention",
            |r| vec![randn(r, &[3, 4]), randn(r, &[5, 4]), randn(r, &[5, 4])],
            |g, v| {
                let y = multi_head_attention(g, v[0], v[1], v[2], 2)?;
                probe(g, y)
            },
        ),
        l(
            "disentangle",
            "cross_attention",
            |r| {
                vec![
                    randn(r, &[3, 4]),
                    randn(r, &[5, 4]),
                    randn(r, &[4, 4]),
                    randn(r, &[4, 4]),
                    randn(r, &[4, 4]),
                ]
            },
            |g, v| {
                let y = cross_attention(g, v[0], v[1], v[2], v[3], v[4], 2)?;
                probe(g, y)
            },
        ),
        l("disentangle", "disentangle_loss", component_inputs, component_loss),
        l(
            "grounder",
            "score_logits",
            |r| vec![randn(r, &[3, 4]), randn(r, &[5, 4])],
            |g, v| {
                let y = score_logits_var(g, v[0], v[1], 0.5)?;
                probe(g, y)
            },
        ),
        l(
            "grounder",
            "focal_loss",
            |r| vec![randn(r, &[3, 4])],
            |g, v| focal_loss_var(g, v[0], &focal_labels(12), FocalParams::default()),
        ),
        l(
            "grounder",
            "focal_loss_fractional_gamma",
            |r| vec![randn(r, &[3, 4])],
            |g, v| {
                let params = FocalParams { gamma: 1.5, alpha: 0.25 };
                focal_loss_var(g, v[0], &focal_labels(12), params)
            },
        ),
        l("grounder", "apply_deltas", delta_inputs, |g, v| {
            let y = apply_deltas_var(g, &ANCHORS, v[0])?;
            probe(g, y)
        }),
        l("grounder", "l1_box_loss", delta_inputs, |g, v| {
            let y = apply_deltas_var(g, &ANCHORS, v[0])?;
            l1_box_loss_var(g, y, &TARGETS)
        }),
        l("grounder", "giou_loss", delta_inputs, |g, v| {
            let y = apply_deltas_var(g, &ANCHORS, v[0])?;
            giou_loss_var(g, y, &TARGETS)
        }),
        l(
            "grounder",
            "contrastive_loss",
            |r| vec![randn(r, &[4]), randn(r, &[4, 4])],
            |g, v| contrastive_loss_var(g, v[0], v[1], 1, 0.5),
        ),
        l(
            "grounder",
            "total_loss",
            |r| {
                let mut v = vec![randn(r, &[3, 4]), Tensor::from_parts(vec![3, 4], rng::normal_vec(r, 12, 0.2))];
                v.extend(chain_inputs(r));
                v.extend(component_inputs(r));
                v
            },
            |g, v| {
                let w = LossWeights::default();
                let class = focal_loss_var(g, v[0], &focal_labels(12), FocalParams::default())?;
                let boxes = apply_deltas_var(g, &ANCHORS, v[1])?;
                let l1 = l1_box_loss_var(g, boxes, &TARGETS)?;
                let gi = giou_loss_var(g, boxes, &TARGETS)?;
                let t = embedding_loss(g, v[2], v[3], v[4], &v[5..8])?;
                let mut total = g.scalar(0.0);
                for (term, weight) in [(class, w.class), (l1, w.bbox), (gi, w.giou), (t, w.embedding)] {
                    let s = g.scale(term, weight)?;
                    total = g.add(total, s)?;
                }
                Ok(total)
            },
        ),
    ]
}

/// `(module, operation)` for every entry of the sweep.
pub fn operations() -> Vec<(&'static str, &'static str)> {
    cases().iter().map(|c| (c.module, c.name)).collect()
}

fn merge(into: &mut OpReport, r: &GradCheckReport) {
    into.checked += r.checked;
    into.excluded += r.excluded.len();
    into.max_rel_error = into.max_rel_error.max(r.max_rel_error);
}

/// Runs the sweep. Points where an input lands on a degenerate
/// configuration are redrawn, up to a bounded number of attempts.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut ops = Vec::new();
    for (i, case) in cases().into_iter().enumerate() {
        let mut check = cfg.check;
        if cfg.flip.as_deref() == Some(case.name) {
            check.analytic_scale = -check.analytic_scale;
        }
        let mut report = OpReport {
            module: case.module.into(),
            op: case.name.into(),
            points: 0,
            checked: 0,
            excluded: 0,
            max_rel_error: 0.0,
            tolerance: check.tolerance,
        };
        let mut rng = rng::stream(cfg.seed, i as u64);
        let mut attempts = 0;
        while report.points < cfg.points {
            attempts += 1;
            if attempts > 4 * cfg.points.max(1) {
                break;
            }
            let inputs = (case.inputs)(&mut rng);
            let r = match case.check {
                Check::Primitive(prim) => grad_check_primitive(prim, &inputs, &check),
                Check::Loss(f) => grad_check_with(&inputs, f, |_, _| false, &check),
            };
            match r {
                Ok(r) => {
                    merge(&mut report, &r);
                    report.points += 1;
                }
                Err(e) if e.is_degenerate() => continue,
                Err(e) => return Err(e),
            }
        }
        ops.push(report);
    }
    Ok(SuiteReport { ops })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_passes_and_catches_a_sign_flip() {
        let cfg = SuiteConfig {
            points: 3,
            ..SuiteConfig::default()
        };
        let report = run_suite(&cfg).unwrap();
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
        let flipped = SuiteConfig {
            flip: Some("hier_pos_loss".into()),
            ..cfg
        };
        let report = run_suite(&flipped).unwrap();
        let bad: Vec<&str> = report.failures().map(|o| o.op.as_str()).collect();
        assert_eq!(bad, ["hier_pos_loss"]);
    }
}
