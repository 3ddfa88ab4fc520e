use core::fmt;
use core::str::FromStr;

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use super::optim::AdamWConfig;
use crate::disentangle::{CosineReading, TextConfig};
use crate::geometry::{HierarchyOptions, ReferenceMode};
use crate::grounder::{FocalParams, LossWeights, VisionConfig};
use crate::{Error, Result};

/// Text-embedding objective added to the detection losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Detection losses (and the disentangle loss) only.
    None,
    /// InfoNCE between the target region and each tier's captions.
    Cl,
    /// Radial embedding: exterior angles against the fixed root.
    Re,
    /// Cross-tier alignment plus within-tier discrimination.
    #[default]
    H,
    HPosOnly,
    HNegOnly,
    /// `H` with positives and negatives exchanged.
    ReverseH,
}

impl LossMode {
    pub const ALL: [LossMode; 7] = [
        LossMode::None,
        LossMode::Cl,
        LossMode::Re,
        LossMode::H,
        LossMode::HPosOnly,
        LossMode::HNegOnly,
        LossMode::ReverseH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::None => "none",
            LossMode::Cl => "cl",
            LossMode::Re => "re",
            LossMode::H => "h",
            LossMode::HPosOnly => "h-pos-only",
            LossMode::HNegOnly => "h-neg-only",
            LossMode::ReverseH => "reverse-h",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw = s.trim().to_lowercase().replace([' ', '_'], "");
        let key = match raw.as_str() {
            "base" => "none",
            "h+only" | "h+" | "hpos" => "h-pos-only",
            "h-only" | "h\u{2212}only" | "h-" | "h\u{2212}" | "hneg" => "h-neg-only",
            "reverse" | "reverseh" | "reverse-h" | "reverselh" => "reverse-h",
            other => other,
        }
        .to_string();
        LossMode::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::config("mode", alloc::format!("unknown loss mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub text: TextConfig,
    pub vision: VisionConfig,
    pub weights: LossWeights,
    pub focal: FocalParams,
    pub mode: LossMode,
    /// Adds the component decorrelation and margin terms.
    pub disentangle_loss: bool,
    pub margin: f64,
    pub cosine_reading: CosineReading,
    pub hierarchy: HierarchyOptions,
    pub reference: ReferenceMode,
    /// Relative weight of negative terms: 1:2 for `H`.
    pub h_neg_weight: f64,
    /// Relative weight of negative terms: 4:10 for `RE`.
    pub re_neg_weight: f64,
    /// Scoring temperature.
    pub tau: f64,
    /// Temperature of the contrastive baseline.
    pub cl_tau: f64,
    pub lr_module: f64,
    pub lr_adapter: f64,
    pub lr_head: f64,
    pub optimizer: AdamWConfig,
    pub chains_per_step: usize,
    pub iterations: usize,
    /// Evaluate every this many steps; 0 evaluates only at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            text: TextConfig::default(),
            vision: VisionConfig::default(),
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            mode: LossMode::H,
            disentangle_loss: true,
            margin: 0.2,
            cosine_reading: CosineReading::Distance,
            hierarchy: HierarchyOptions::default(),
            reference: ReferenceMode::Dynamic,
            h_neg_weight: 0.5,
            re_neg_weight: 0.4,
            tau: 0.07,
            cl_tau: 0.07,
            lr_module: 1e-4,
            lr_adapter: 5e-6,
            lr_head: 1e-4,
            optimizer: AdamWConfig::default(),
            chains_per_step: 16,
            iterations: 1000,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    /// Short-run settings for single-core experiments: larger learning rates
    /// and fewer chains per step.
    pub fn desk() -> Self {
        Self {
            lr_module: 3e-3,
            lr_adapter: 1e-3,
            lr_head: 1e-2,
            chains_per_step: 8,
            iterations: 300,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.text.validate()?;
        self.vision.validate()?;
        self.weights.validate()?;
        self.optimizer.validate()?;
        for (name, v) in [
            ("margin", self.margin),
            ("h_neg_weight", self.h_neg_weight),
            ("re_neg_weight", self.re_neg_weight),
            ("lr_module", self.lr_module),
            ("lr_adapter", self.lr_adapter),
            ("lr_head", self.lr_head),
            ("focal_alpha", self.focal.alpha),
            ("focal_gamma", self.focal.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        for (name, v) in [("tau", self.tau), ("cl_tau", self.cl_tau), ("epsilon", self.hierarchy.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.chains_per_step == 0 {
            return Err(Error::config("chains_per_step", "must be positive"));
        }
        Ok(())
    }

    /// Stable fingerprint of the settings that shape the parameter set and
    /// the training trajectory.
    pub fn fingerprint(&self) -> u64 {
        let shape = Self {
            iterations: 0,
            eval_every: 0,
            ..*self
        };
        let text: String = alloc::format!("{shape:?}");
        // FNV-1a
        text.bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in LossMode::ALL {
            assert_eq!(m.name().parse::<LossMode>().unwrap(), m);
        }
        assert_eq!("CL".parse::<LossMode>().unwrap(), LossMode::Cl);
        assert_eq!("H+only".parse::<LossMode>().unwrap(), LossMode::HPosOnly);
        assert!("bogus".parse::<LossMode>().is_err());
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::desk().validate().unwrap();
    }
}
