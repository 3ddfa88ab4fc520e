use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::diff::Tensor;
use crate::disentangle::{Component, Vocab};
use crate::params::{ParamGroup, ParamStore};
use crate::rng::{self, Rng};
use crate::synth::{Scene, SceneObject};
use crate::{Error, Result};

pub const TOKEN_TABLE: &str = "embed.tokens";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionConfig {
    /// Gaussian noise added to every feature coordinate.
    pub noise_std: f64,
    /// Proposal boxes are ground-truth boxes scaled by this factor about
    /// their centre, then jittered.
    pub proposal_scale: f64,
    /// Corner jitter, as a fraction of box size.
    pub box_jitter: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            proposal_scale: 1.2,
            box_jitter: 0.03,
        }
    }
}

impl VisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("vision.noise_std", "must be non-negative"));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::config("vision.proposal_scale", "must be positive"));
        }
        if !(0.0..0.25).contains(&self.box_jitter) {
            return Err(Error::config("vision.box_jitter", "must lie in [0, 0.25)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub feature: Vec<f64>,
    pub source: Option<usize>,
}

fn param_name(c: Component) -> String {
    alloc::format!("vision.{}", c.key())
}

/// Words of an object's ground-truth description, split by role.
pub fn description_roles(obj: &SceneObject, scene: &Scene) -> [Vec<String>; 3] {
    let object = alloc::vec![obj.category.clone()];
    let attribute = obj.attributes.values().cloned().collect();
    let mut relation: Vec<String> = obj
        .accessories
        .iter()
        .flat_map(|a| a.split_whitespace().map(ToString::to_string).collect::<Vec<_>>())
        .collect();
    for &(kind, other) in &obj.relations {
        if let Some(o) = scene.objects.get(other) {
            relation.push(kind.word().to_string());
            relation.push(o.category.clone());
        }
    }
    [object, attribute, relation]
}

/// Frozen stand-in for a vision backbone: an object's feature is the sum
/// over roles of the role's projection applied to the mean token vector of
/// that role's description words.
#[derive(Debug, Clone)]
pub struct VisionEncoder {
    tokens: Tensor,
    projections: [Tensor; 3],
}

/// Adds the frozen role projections `vision.{o,a,r}` (`[d_model, dim]`).
pub fn init_vision_params(store: &mut ParamStore, d_model: usize, dim: usize, seed: u64) {
    let mut rng = rng::stream(seed, 0x0515);
    let std = 1.0 / libm::sqrt(d_model as f64);
    for c in Component::ALL {
        let w = Tensor::from_parts(alloc::vec![d_model, dim], rng::normal_vec(&mut rng, d_model * dim, std));
        store.insert(&param_name(c), w, ParamGroup::Frozen);
    }
}

impl VisionEncoder {
    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let tokens = store.get(TOKEN_TABLE)?.value.clone();
        let projections = [
            store.get(&param_name(Component::Object))?.value.clone(),
            store.get(&param_name(Component::Attribute))?.value.clone(),
            store.get(&param_name(Component::Relation))?.value.clone(),
        ];
        let dm = tokens.dims2().1;
        for p in &projections {
            if p.dims2().0 != dm {
                return Err(Error::shape("vision projection", p.shape(), tokens.shape()));
            }
        }
        Ok(Self { tokens, projections })
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dims2().1
    }

    /// Noiseless feature of `obj`.
    pub fn embed(&self, vocab: &Vocab, obj: &SceneObject, scene: &Scene) -> Vec<f64> {
        let (_, dm) = self.tokens.dims2();
        let dim = self.dim();
        let mut out = alloc::vec![0.0; dim];
        for (words, proj) in description_roles(obj, scene).iter().zip(&self.projections) {
            if words.is_empty() {
                continue;
            }
            let mut mean = alloc::vec![0.0; dm];
            for w in words {
                for (m, x) in mean.iter_mut().zip(self.tokens.row(vocab.id(w))) {
                    *m += x / words.len() as f64;
                }
            }
            for (i, m) in mean.iter().enumerate() {
                for (o, w) in out.iter_mut().zip(proj.row(i)) {
                    *o += m * w;
                }
            }
        }
        out
    }
}

fn proposal_box(gt: &BBox, cfg: &VisionConfig, rng: &mut Rng) -> BBox {
    let (cx, cy) = gt.center();
    let (w, h) = (gt.width() * cfg.proposal_scale, gt.height() * cfg.proposal_scale);
    let mut j = || rng::normal(rng) * cfg.box_jitter;
    BBox::new(
        cx - 0.5 * w + j() * w,
        cy - 0.5 * h + j() * h,
        cx + 0.5 * w + j() * w,
        cy + 0.5 * h + j() * h,
    )
}

/// One proposal per scene object, deterministic in `seed`.
pub fn proposal_features(
    scene: &Scene,
    encoder: &VisionEncoder,
    vocab: &Vocab,
    cfg: &VisionConfig,
    seed: u64,
) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let mut rng = rng::seeded(seed);
    scene
        .objects
        .iter()
        .map(|obj| {
            let mut feature = encoder.embed(vocab, obj, scene);
            for f in &mut feature {
                *f += rng::normal(&mut rng) * cfg.noise_std;
            }
            let bbox = proposal_box(&obj.bbox, cfg, &mut rng).validated()?;
            Ok(Proposal {
                bbox,
                feature,
                source: Some(obj.id),
            })
        })
        .collect()
}
