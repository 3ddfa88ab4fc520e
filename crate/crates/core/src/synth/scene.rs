use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::query::{Query, RelationPhrase};
use super::tables::{self, AttrClass, SpatialKind};
use crate::bbox::BBox;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: String,
    /// One word per attribute class the object carries.
    pub attributes: BTreeMap<AttrClass, String>,
    pub accessories: Vec<String>,
    /// Spatial edges `(kind, other object id)`, read "this is `kind` other".
    pub relations: Vec<(SpatialKind, usize)>,
}

impl SceneObject {
    pub fn attribute(&self, class: AttrClass) -> Option<&str> {
        self.attributes.get(&class).map(String::as_str)
    }

    pub fn has_accessory(&self, acc: &str) -> bool {
        self.accessories.iter().any(|a| a == acc)
    }

    /// Full ground-truth description: category, every attribute word and
    /// every true relation phrase.
    pub fn description(&self, scene: &Scene) -> String {
        let mut words: Vec<String> = self.attributes.values().cloned().collect();
        words.push(self.category.clone());
        for a in &self.accessories {
            words.push(format!("{} {}", tables::WITH, a));
        }
        for &(k, other) in &self.relations {
            if let Some(o) = scene.objects.get(other) {
                words.push(format!("{} {}", k.word(), o.category));
            }
        }
        words.join(" ")
    }

    /// Relation phrases true for this object, without negation.
    pub fn true_relations(&self, scene: &Scene) -> Vec<RelationPhrase> {
        let mut out: Vec<RelationPhrase> = self
            .accessories
            .iter()
            .map(|a| RelationPhrase::With(a.clone()))
            .collect();
        for &(kind, other) in &self.relations {
            let noun = scene.objects[other].category.clone();
            let p = RelationPhrase::Spatial {
                kind,
                noun,
                negated: false,
            };
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u64,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Extra objects sharing the target category.
    pub distractors: usize,
    pub box_min: f64,
    pub box_max: f64,
    pub p_color: f64,
    pub p_number: f64,
    pub p_size: f64,
    pub max_accessories: usize,
    /// Vertical centre band within which two objects count as side by side.
    pub beside_band: f64,
    /// Makes the first distractor an exact copy of the primary object.
    pub clone_distractor: bool,
    pub max_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            min_objects: 3,
            max_objects: 6,
            distractors: 1,
            box_min: 0.1,
            box_max: 0.3,
            p_color: 0.8,
            p_number: 0.4,
            p_size: 0.6,
            max_accessories: 2,
            beside_band: 0.15,
            clone_distractor: false,
            max_retries: 64,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects < 2 || self.max_objects > 10 || self.min_objects > self.max_objects {
            return Err(Error::config("scenes.min_objects", "object count must satisfy 2 <= min <= max <= 10"));
        }
        if self.distractors == 0 || self.distractors >= self.min_objects {
            return Err(Error::config("scenes.distractors", "need at least one distractor and fewer than min_objects"));
        }
        if !(self.box_min > 0.0 && self.box_min <= self.box_max && self.box_max <= 1.0) {
            return Err(Error::config("scenes.box_min", "need 0 < box_min <= box_max <= 1"));
        }
        for (name, p) in [("scenes.p_color", self.p_color), ("scenes.p_number", self.p_number), ("scenes.p_size", self.p_size)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        if self.max_accessories == 0 {
            return Err(Error::config("scenes.max_accessories", "must be positive"));
        }
        if self.max_retries == 0 {
            return Err(Error::config("scenes.max_retries", "must be positive"));
        }
        Ok(())
    }
}

pub fn spatial_word(bbox: &BBox, width: f64) -> &'static str {
    let (cx, _) = bbox.center();
    let words = AttrClass::Spatial.words();
    if cx < width / 3.0 {
        words[0]
    } else if cx < 2.0 * width / 3.0 {
        words[1]
    } else {
        words[2]
    }
}

/// Spatial relation of `a` to `b`, if any.
pub fn spatial_relations(a: &BBox, b: &BBox, beside_band: f64) -> Vec<SpatialKind> {
    let mut out = Vec::new();
    if a.y_max <= b.y_min {
        out.push(SpatialKind::Above);
    }
    if a.y_min >= b.y_max {
        out.push(SpatialKind::Below);
    }
    let horizontally_apart = a.x_max <= b.x_min || b.x_max <= a.x_min;
    if horizontally_apart && libm::fabs(a.center().1 - b.center().1) < beside_band {
        out.push(SpatialKind::Beside);
    }
    out
}

impl Scene {
    pub fn object(&self, id: usize) -> Result<&SceneObject> {
        self.objects.get(id).ok_or(Error::UnknownObject(id))
    }

    /// Ids of the objects satisfying `query`.
    pub fn matches(&self, query: &Query) -> Vec<usize> {
        self.objects
            .iter()
            .filter(|o| query.holds(self, o))
            .map(|o| o.id)
            .collect()
    }

    /// Recomputes spatial relations from the boxes.
    pub fn derive_relations(&mut self, beside_band: f64) {
        let boxes: Vec<BBox> = self.objects.iter().map(|o| o.bbox).collect();
        for (i, o) in self.objects.iter_mut().enumerate() {
            o.relations.clear();
            for (j, b) in boxes.iter().enumerate() {
                if i != j {
                    for k in spatial_relations(&boxes[i], b, beside_band) {
                        o.relations.push((k, j));
                    }
                }
            }
        }
    }

    /// Tier-3 captions (attribute, noun, relation) that pick out `id` alone.
    pub fn unique_descriptions(&self, id: usize) -> Result<Vec<Query>> {
        let obj = self.object(id)?;
        let mut out = Vec::new();
        for word in obj.attributes.values() {
            for rel in obj.true_relations(self) {
                let q = Query::described(word, &obj.category, rel);
                if self.matches(&q) == [id] {
                    out.push(q);
                }
            }
        }
        Ok(out)
    }

    /// Structural checks: ids, boxes, derived spatial words and relations.
    pub fn validate(&self, beside_band: f64) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            let bad = |reason: String| Error::Unsatisfiable(format!("scene {} object {}: {}", self.id, i, reason));
            if o.id != i {
                return Err(bad("id does not match position".into()));
            }
            if !o.bbox.is_valid() || !o.bbox.within(self.width, self.height) {
                return Err(bad("box outside scene or without area".into()));
            }
            if o.attribute(AttrClass::Spatial) != Some(spatial_word(&o.bbox, self.width)) {
                return Err(bad("spatial attribute disagrees with box".into()));
            }
            if !tables::is_object_noun(&o.category) {
                return Err(bad(format!("unknown category {}", o.category)));
            }
            for (class, word) in &o.attributes {
                if AttrClass::of(word) != Some(*class) {
                    return Err(bad(format!("attribute {word} is not a {class:?} word")));
                }
            }
        }
        let mut copy = self.clone();
        copy.derive_relations(beside_band);
        if copy.objects.iter().zip(&self.objects).any(|(a, b)| a.relations != b.relations) {
            return Err(Error::Unsatisfiable(format!("scene {}: relations disagree with boxes", self.id)));
        }
        Ok(())
    }
}

fn random_box(rng: &mut Rng, cfg: &SceneConfig) -> BBox {
    let w = rng.random_range(cfg.box_min..=cfg.box_max);
    let h = rng.random_range(cfg.box_min..=cfg.box_max);
    let x = rng.random_range(0.0..=1.0 - w);
    let y = rng.random_range(0.0..=1.0 - h);
    BBox::new(x, y, x + w, y + h)
}

fn random_object(rng: &mut Rng, cfg: &SceneConfig, id: usize, category: &str) -> SceneObject {
    let bbox = random_box(rng, cfg);
    let mut attributes = BTreeMap::new();
    attributes.insert(AttrClass::Spatial, spatial_word(&bbox, 1.0).to_string());
    for (class, p) in [
        (AttrClass::Color, cfg.p_color),
        (AttrClass::Number, cfg.p_number),
        (AttrClass::Size, cfg.p_size),
    ] {
        if rng.random_bool(p) {
            let w = class.words().choose(rng).expect("non-empty table");
            attributes.insert(class, (*w).to_string());
        }
    }
    let pool = tables::group_of(category).expect("object noun").accessories();
    let n = rng.random_range(1..=cfg.max_accessories.min(pool.len()));
    let accessories = pool.choose_multiple(rng, n).map(|s| (*s).to_string()).collect();
    SceneObject {
        id,
        bbox,
        category: category.to_string(),
        attributes,
        accessories,
        relations: Vec::new(),
    }
}

fn draw_scene(rng: &mut Rng, cfg: &SceneConfig, id: u64) -> Scene {
    let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let nouns: Vec<&str> = tables::object_nouns().collect();
    let primary = *nouns.choose(rng).expect("nouns");
    let mut categories = alloc::vec![primary; 1 + cfg.distractors];
    // Half the scenes also contain the primary's contrast noun, so antonym
    // negatives have a real referent.
    if categories.len() < n && rng.random_bool(0.5) {
        categories.push(tables::contrast_nouns(primary).next().expect("contrast"));
    }
    while categories.len() < n {
        categories.push(*nouns.choose(rng).expect("nouns"));
    }
    let mut objects: Vec<SceneObject> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| random_object(rng, cfg, i, c))
        .collect();
    if cfg.clone_distractor {
        let mut copy = objects[0].clone();
        copy.id = 1;
        objects[1] = copy;
    }
    let mut scene = Scene {
        id,
        width: 1.0,
        height: 1.0,
        objects,
    };
    scene.derive_relations(cfg.beside_band);
    scene
}

/// Draws a scene in which every object has at least one unique tier-3
/// description.
pub fn generate_scene(cfg: &SceneConfig, seed: u64, id: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = rng::seeded(seed);
    for _ in 0..cfg.max_retries {
        let scene = draw_scene(&mut rng, cfg, id);
        let ok = (0..scene.objects.len()).all(|i| scene.unique_descriptions(i).is_ok_and(|d| !d.is_empty()));
        if ok {
            return Ok(scene);
        }
    }
    Err(Error::Unsatisfiable(format!(
        "no scene with uniquely describable objects after {} attempts",
        cfg.max_retries
    )))
}
