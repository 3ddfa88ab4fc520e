use alloc::vec::Vec;

use crate::bbox::BBox;
use crate::diff::{Graph, Tensor};
use crate::disentangle::{forward, init_text_params, Component, SentenceBatch, TextConfig, Vocab, UNK};
use crate::geometry::ReferenceMode;
use crate::grounder::{
    angle_histogram, chain_angles, init_vision_params, score, AngleHistogram, Detection, Detector, EvalItem,
    VisionEncoder,
};
use crate::params::{ParamGroup, ParamStore};
use crate::synth::{tables, ChainRecord};
use crate::Result;

pub const ROOT: &str = "embedding.root";
pub const BOX_W: &str = "head.box.w";
pub const BOX_B: &str = "head.box.b";

/// The closed vocabulary covering every word the generator can emit.
pub fn default_vocab() -> Vocab {
    Vocab::from_tokens(tables::all_words())
}

/// Embeddings of a caption batch, detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub embeddings: Tensor,
    pub components: Vec<(Component, Tensor)>,
}

impl Embedded {
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.embeddings.row(i).to_vec()
    }

    pub fn component(&self, c: Component) -> Option<&Tensor> {
        self.components.iter().find(|(k, _)| *k == c).map(|(_, t)| t)
    }
}

/// Text model, frozen vision stub, box head and root reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub text: TextConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub tau: f64,
}

impl Model {
    pub fn init(text: TextConfig, tau: f64, seed: u64) -> Result<Self> {
        text.validate()?;
        let vocab = default_vocab();
        let mut store = ParamStore::new();
        init_text_params(&mut store, &text, vocab.len(), seed);
        init_vision_params(&mut store, text.dims.d_model, text.dims.dim, seed);
        store.insert(BOX_W, Tensor::zeros(&[text.dims.dim, 4]), ParamGroup::Head);
        store.insert(BOX_B, Tensor::zeros(&[4]), ParamGroup::Head);
        store.insert(ROOT, Tensor::zeros(&[text.dims.dim]), ParamGroup::Frozen);
        let mut model = Self {
            text,
            vocab,
            store,
            tau,
        };
        // The root is the untrained model's embedding of a content-free
        // caption, frozen from here on.
        let root = model.embed(&[UNK])?.embeddings.row(0).to_vec();
        model.store.get_mut(ROOT)?.value = Tensor::vector(root);
        Ok(model)
    }

    /// Replaces every parameter with `params`, which must have the same
    /// names, shapes and groups.
    pub fn with_params(mut self, params: ParamStore) -> Result<Self> {
        self.store.check_compatible(&params)?;
        self.store = params;
        Ok(self)
    }

    pub fn vision(&self) -> Result<VisionEncoder> {
        VisionEncoder::from_store(&self.store)
    }

    pub fn root(&self) -> Result<&[f64]> {
        Ok(self.store.get(ROOT)?.value.data())
    }

    /// Forward pass over `captions` with every parameter held constant.
    pub fn embed<S: AsRef<str>>(&self, captions: &[S]) -> Result<Embedded> {
        let batch = SentenceBatch::new(&self.vocab, captions, self.text.dims.max_tokens)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, |_| false);
        let out = forward(&mut g, &p, &self.text, &batch)?;
        Ok(Embedded {
            embeddings: g.value(out.embeddings).clone(),
            components: out
                .components
                .iter()
                .map(|&(c, v)| (c, g.value(v).clone()))
                .collect(),
        })
    }

    /// Box deltas predicted from a proposal feature.
    pub fn box_deltas(&self, feature: &[f64]) -> Result<[f64; 4]> {
        let w = &self.store.get(BOX_W)?.value;
        let b = &self.store.get(BOX_B)?.value;
        let mut d = [0.0; 4];
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = b.data()[j] + feature.iter().enumerate().map(|(i, f)| f * w.data()[i * 4 + j]).sum::<f64>();
        }
        Ok(d)
    }

    /// Embeds each chain's positives and negatives: `(pos, neg)` per chain.
    pub fn chain_embeddings(&self, chains: &[ChainRecord]) -> Result<Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> {
        let mut out = Vec::with_capacity(chains.len());
        for block in chains.chunks(64) {
            let captions: Vec<&str> = block.iter().flat_map(|c| c.positives().chain(c.negatives())).collect();
            let e = self.embed(&captions)?;
            let mut row = 0;
            for c in block {
                let l = c.tiers.len();
                let pos = (row..row + l).map(|i| e.row(i)).collect();
                let neg = (row + l..row + 2 * l).map(|i| e.row(i)).collect();
                row += 2 * l;
                out.push((pos, neg));
            }
        }
        Ok(out)
    }

    /// Angle histogram over held-out chains (positive cross-tier against
    /// same-tier positive/negative pairs).
    pub fn angle_histogram(&self, chains: &[ChainRecord], mode: ReferenceMode, bins: usize) -> Result<AngleHistogram> {
        let root = self.root()?.to_vec();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (p, n) in self.chain_embeddings(chains)? {
            let (a, b) = chain_angles(&p, &n, &root, mode)?;
            pos.extend(a);
            neg.extend(b);
        }
        angle_histogram(&pos, &neg, bins)
    }
}

impl Detector for Model {
    fn detect(&mut self, item: &EvalItem) -> Result<Vec<Vec<Detection>>> {
        let captions: Vec<&str> = item.queries.iter().map(|q| q.caption.as_str()).collect();
        let e = self.embed(&captions)?;
        let features: Vec<Vec<f64>> = item.proposals.iter().map(|p| p.feature.clone()).collect();
        let boxes: Vec<BBox> = item
            .proposals
            .iter()
            .map(|p| Ok(p.bbox.apply_deltas(self.box_deltas(&p.feature)?)))
            .collect::<Result<_>>()?;
        (0..captions.len())
            .map(|i| {
                let s = score(e.embeddings.row(i), &features, self.tau)?;
                Ok(s.iter()
                    .zip(&boxes)
                    .map(|(&(_, p), &bbox)| Detection { score: p, bbox })
                    .collect())
            })
            .collect()
    }
}
