//! Flat TOML run configuration.
//!
//! Every key lives at the top level. `schema_version` is mandatory, unknown
//! keys are rejected, and every other key falls back to its default. The
//! defaults are the published hyperparameters; `configs/desk.toml` holds the
//! short-run settings used by the acceptance suite.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use hierground_core::disentangle::{AttentionVariant, CosineReading, InitScheme, ModelDims, Placement, TextConfig};
use hierground_core::geometry::{HierarchyOptions, ReferenceMode};
use hierground_core::grounder::{EvalConfig, FocalParams, LossWeights, VisionConfig};
use hierground_core::synth::{CorpusConfig, SceneConfig, TIERS};
use hierground_core::train::{AdamWConfig, LossMode, TrainConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn mode_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<LossMode, D::Error> {
    let s = String::deserialize(d)?;
    LossMode::from_str(&s).map_err(serde::de::Error::custom)
}

fn mode_ser<S: Serializer>(m: &LossMode, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(m.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,

    // corpus files; generated in memory from the seed when absent
    pub train_chains_path: Option<PathBuf>,
    pub train_scenes_path: Option<PathBuf>,
    pub eval_chains_path: Option<PathBuf>,
    pub eval_scenes_path: Option<PathBuf>,

    // generator
    pub train_scene_count: usize,
    pub eval_scene_count: usize,
    pub chains_per_scene: usize,
    pub min_tier3_words: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub distractors: usize,
    pub box_min: f64,
    pub box_max: f64,
    pub p_color: f64,
    pub p_number: f64,
    pub p_size: f64,
    pub max_accessories: usize,
    pub beside_band: f64,
    pub clone_distractor: bool,
    pub max_retries: usize,

    // text model
    pub d_model: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub component_tokens: usize,
    pub max_tokens: usize,
    pub components: usize,
    pub placement: Placement,
    pub attention: AttentionVariant,
    pub init: InitScheme,
    pub encoder_attention: bool,
    pub lora_rank: usize,
    pub lora_scale: f64,

    // proposals
    pub noise_std: f64,
    pub proposal_scale: f64,
    pub box_jitter: f64,

    // losses
    #[serde(deserialize_with = "mode_de", serialize_with = "mode_ser")]
    pub mode: LossMode,
    pub disentangle_loss: bool,
    pub w_class: f64,
    pub w_bbox: f64,
    pub w_giou: f64,
    pub w_embedding: f64,
    pub lambda: f64,
    pub margin: f64,
    pub cosine_reading: CosineReading,
    pub epsilon: f64,
    pub normalize: bool,
    pub reference: ReferenceMode,
    pub h_neg_weight: f64,
    pub re_neg_weight: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub tau: f64,
    pub cl_tau: f64,

    // optimisation
    pub lr_module: f64,
    pub lr_adapter: f64,
    pub lr_head: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub images_per_batch: usize,
    pub sentences_per_image: usize,
    pub iterations: usize,
    pub eval_every: usize,

    // evaluation
    pub iou_threshold: f64,
    pub operating_point: f64,
    pub angle_bins: usize,

    // ablation grid
    pub ablate_seeds: Vec<u64>,
    /// Each variant is a comma-separated list of `key=value` overrides of
    /// this file's keys; the empty string is the configuration as given.
    pub ablate_variants: Vec<String>,
}

/// The grid behind the loss, component-count and placement comparisons.
pub fn default_variants() -> Vec<String> {
    let mut v: Vec<String> = LossMode::ALL.iter().map(|m| format!("mode={}", m.name())).collect();
    v.push("components=2".into());
    v.push("components=1".into());
    v.push("placement=after-pooling".into());
    v
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_parts(&TrainConfig::default(), &CorpusConfig::default(), &EvalConfig::default())
    }
}

impl RunConfig {
    fn from_parts(t: &TrainConfig, c: &CorpusConfig, e: &EvalConfig) -> Self {
        let s = &c.scene;
        let d = &t.text.dims;
        Self {
            schema_version: SCHEMA_VERSION,
            seed: t.seed,
            train_chains_path: None,
            train_scenes_path: None,
            eval_chains_path: None,
            eval_scenes_path: None,
            train_scene_count: 500,
            eval_scene_count: 200,
            chains_per_scene: c.chains_per_scene,
            min_tier3_words: c.min_tier3_words,
            min_objects: s.min_objects,
            max_objects: s.max_objects,
            distractors: s.distractors,
            box_min: s.box_min,
            box_max: s.box_max,
            p_color: s.p_color,
            p_number: s.p_number,
            p_size: s.p_size,
            max_accessories: s.max_accessories,
            beside_band: s.beside_band,
            clone_distractor: s.clone_distractor,
            max_retries: s.max_retries,
            d_model: d.d_model,
            dim: d.dim,
            heads: d.heads,
            ffn_hidden: d.ffn_hidden,
            component_tokens: d.component_tokens,
            max_tokens: d.max_tokens,
            components: t.text.components,
            placement: t.text.placement,
            attention: t.text.attention,
            init: t.text.init,
            encoder_attention: t.text.encoder_attention,
            lora_rank: t.text.lora_rank,
            lora_scale: t.text.lora_scale,
            noise_std: t.vision.noise_std,
            proposal_scale: t.vision.proposal_scale,
            box_jitter: t.vision.box_jitter,
            mode: t.mode,
            disentangle_loss: t.disentangle_loss,
            w_class: t.weights.class,
            w_bbox: t.weights.bbox,
            w_giou: t.weights.giou,
            w_embedding: t.weights.embedding,
            lambda: t.weights.lambda,
            margin: t.margin,
            cosine_reading: t.cosine_reading,
            epsilon: t.hierarchy.epsilon,
            normalize: t.hierarchy.normalize,
            reference: t.reference,
            h_neg_weight: t.h_neg_weight,
            re_neg_weight: t.re_neg_weight,
            focal_gamma: t.focal.gamma,
            focal_alpha: t.focal.alpha,
            tau: t.tau,
            cl_tau: t.cl_tau,
            lr_module: t.lr_module,
            lr_adapter: t.lr_adapter,
            lr_head: t.lr_head,
            beta1: t.optimizer.beta1,
            beta2: t.optimizer.beta2,
            adam_eps: t.optimizer.eps,
            weight_decay: t.optimizer.weight_decay,
            images_per_batch: t.chains_per_step,
            sentences_per_image: 2 * TIERS,
            iterations: t.iterations,
            eval_every: t.eval_every,
            iou_threshold: e.iou_threshold,
            operating_point: e.operating_point,
            angle_bins: 18,
            ablate_seeds: vec![0, 1, 2],
            ablate_variants: default_variants(),
        }
    }

    /// Short-run settings sized for a single core.
    pub fn desk() -> Self {
        Self {
            iterations: 1000,
            ..Self::from_parts(&TrainConfig::desk(), &CorpusConfig::default(), &EvalConfig::default())
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        match table.get("schema_version") {
            None => return Err(CliError::field("schema_version", "missing")),
            Some(v) if v.as_integer() != Some(SCHEMA_VERSION as i64) => {
                return Err(CliError::field("schema_version", format!("expected {SCHEMA_VERSION}, found {v}")))
            }
            Some(_) => {}
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every key with its effective value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat configuration serialises")
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("flat configuration serialises")
    }

    /// This configuration with `key=value` overrides applied, where values
    /// are TOML literals or bare strings.
    pub fn with_overrides(&self, spec: &str) -> Result<Self> {
        let mut table = self.to_table();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, raw) = part
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("override `{part}` is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            if !table.contains_key(key) && !is_optional_key(key) {
                return Err(CliError::field(key, "unknown key"));
            }
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.corpus_config(self.train_scene_count).validate()?;
        if self.sentences_per_image != 2 * TIERS {
            return Err(CliError::field(
                "sentences_per_image",
                format!("each chain carries {} captions", 2 * TIERS),
            ));
        }
        if self.train_scene_count == 0 {
            return Err(CliError::field("train_scene_count", "must be positive"));
        }
        if self.eval_scene_count == 0 {
            return Err(CliError::field("eval_scene_count", "must be positive"));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(CliError::field("iou_threshold", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.operating_point) {
            return Err(CliError::field("operating_point", "must lie in [0, 1)"));
        }
        if self.angle_bins == 0 {
            return Err(CliError::field("angle_bins", "must be positive"));
        }
        for (key, a, b) in [
            ("train_scenes_path", &self.train_chains_path, &self.train_scenes_path),
            ("eval_scenes_path", &self.eval_chains_path, &self.eval_scenes_path),
        ] {
            if a.is_some() != b.is_some() {
                return Err(CliError::field(key, "chains and scenes paths must be given together"));
            }
        }
        if self.ablate_seeds.is_empty() {
            return Err(CliError::field("ablate_seeds", "must not be empty"));
        }
        for v in &self.ablate_variants {
            if v.contains("ablate_") {
                return Err(CliError::field("ablate_variants", format!("variant `{v}` overrides the grid itself")));
            }
        }
        Ok(())
    }

    pub fn text_config(&self) -> TextConfig {
        TextConfig {
            dims: ModelDims {
                d_model: self.d_model,
                dim: self.dim,
                heads: self.heads,
                ffn_hidden: self.ffn_hidden,
                component_tokens: self.component_tokens,
                max_tokens: self.max_tokens,
            },
            components: self.components,
            placement: self.placement,
            attention: self.attention,
            init: self.init,
            encoder_attention: self.encoder_attention,
            lora_rank: self.lora_rank,
            lora_scale: self.lora_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            text: self.text_config(),
            vision: VisionConfig {
                noise_std: self.noise_std,
                proposal_scale: self.proposal_scale,
                box_jitter: self.box_jitter,
            },
            weights: LossWeights {
                class: self.w_class,
                bbox: self.w_bbox,
                giou: self.w_giou,
                embedding: self.w_embedding,
                lambda: self.lambda,
            },
            focal: FocalParams {
                gamma: self.focal_gamma,
                alpha: self.focal_alpha,
            },
            mode: self.mode,
            disentangle_loss: self.disentangle_loss,
            margin: self.margin,
            cosine_reading: self.cosine_reading,
            hierarchy: HierarchyOptions {
                epsilon: self.epsilon,
                normalize: self.normalize,
            },
            reference: self.reference,
            h_neg_weight: self.h_neg_weight,
            re_neg_weight: self.re_neg_weight,
            tau: self.tau,
            cl_tau: self.cl_tau,
            lr_module: self.lr_module,
            lr_adapter: self.lr_adapter,
            lr_head: self.lr_head,
            optimizer: AdamWConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
                weight_decay: self.weight_decay,
            },
            chains_per_step: self.images_per_batch,
            iterations: self.iterations,
            eval_every: self.eval_every,
        }
    }

    pub fn corpus_config(&self, scenes: usize) -> CorpusConfig {
        CorpusConfig {
            scenes,
            chains_per_scene: self.chains_per_scene,
            min_tier3_words: self.min_tier3_words,
            scene: SceneConfig {
                min_objects: self.min_objects,
                max_objects: self.max_objects,
                distractors: self.distractors,
                box_min: self.box_min,
                box_max: self.box_max,
                p_color: self.p_color,
                p_number: self.p_number,
                p_size: self.p_size,
                max_accessories: self.max_accessories,
                beside_band: self.beside_band,
                clone_distractor: self.clone_distractor,
                max_retries: self.max_retries,
            },
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            iou_threshold: self.iou_threshold,
            operating_point: self.operating_point,
        }
    }
}

fn is_optional_key(key: &str) -> bool {
    matches!(
        key,
        "train_chains_path" | "train_scenes_path" | "eval_chains_path" | "eval_scenes_path"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let desk = RunConfig::desk();
        assert_eq!(RunConfig::parse(&desk.to_toml()).unwrap(), desk);
    }

    #[test]
    fn schema_version_is_required() {
        let e = RunConfig::parse("seed = 3").unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let e = RunConfig::parse("schema_version = 1\nlearning_rate = 0.1").unwrap_err();
        assert!(e.to_string().contains("learning_rate"), "{e}");
    }

    #[test]
    fn enumerations_are_checked_at_load() {
        for bad in ["mode = \"hyperbolic\"", "placement = \"middle\"", "attention = \"global\""] {
            let e = RunConfig::parse(&format!("schema_version = 1\n{bad}")).unwrap_err();
            let key = bad.split_whitespace().next().unwrap();
            assert!(e.to_string().contains(key) || e.to_string().contains("hyperbolic"), "{e}");
        }
        let cfg = RunConfig::parse("schema_version = 1\nmode = \"H+only\"").unwrap();
        assert_eq!(cfg.mode, LossMode::HPosOnly);
    }

    #[test]
    fn range_errors_name_the_field() {
        let e = RunConfig::parse("schema_version = 1\ncomponents = 4").unwrap_err();
        assert!(e.to_string().contains("components"), "{e}");
        let e = RunConfig::parse("schema_version = 1\nlr_module = -1.0").unwrap_err();
        assert!(e.to_string().contains("lr_module"), "{e}");
    }

    #[test]
    fn overrides_apply_typed_values() {
        let cfg = RunConfig::default().with_overrides("mode=cl, components=2,placement=after-pooling").unwrap();
        assert_eq!(cfg.mode, LossMode::Cl);
        assert_eq!(cfg.components, 2);
        assert_eq!(cfg.placement, Placement::AfterPooling);
        assert!(RunConfig::default().with_overrides("nonsense=1").is_err());
    }

    #[test]
    fn reference_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.lora_rank, c.lora_scale), (16, 16.0));
        assert_eq!((c.lr_module, c.lr_adapter, c.lambda), (1e-4, 5e-6, 0.1));
        assert_eq!((c.w_class, c.w_bbox, c.w_giou, c.w_embedding), (4.0, 5.0, 2.0, 5.0));
        assert_eq!(c.h_neg_weight, 0.5);
        assert_eq!(c.re_neg_weight, 0.4);
    }
}
