use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{LossMode, TrainConfig};
use super::model::{Model, BOX_B, BOX_W, ROOT};
use super::optim::AdamW;
use crate::bbox::BBox;
use crate::diff::{Graph, Tensor, Var};
use crate::disentangle::{disentangle_loss, forward, pooled_units, ChainRows, DisentangleLossConfig, SentenceBatch};
use crate::geometry::{exterior_angle_var, hier_neg_loss_var, hier_pos_loss_var, ChainVars};
use crate::grounder::{
    apply_deltas_var, chain_queries, contrastive_loss_var, focal_loss_var, giou_loss_var, l1_box_loss_var,
    proposal_features, score_logits_var, EvalItem, Proposal,
};
use crate::params::{Bound, ParamGroup, ParamStore};
use crate::rng;
use crate::synth::{ChainRecord, Corpus, Query, Scene};
use crate::{Error, Result};

const PROPOSAL_STREAM: u64 = 0x9_0b05;

/// Scenes, chains and their fixed proposals.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub scenes: Vec<Scene>,
    pub chains: Vec<ChainRecord>,
    pub proposals: Vec<Vec<Proposal>>,
    index: BTreeMap<u64, usize>,
}

impl TrainData {
    /// Proposals for every scene, seeded by `seed` and the scene id.
    pub fn new(corpus: &Corpus, model: &Model, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let encoder = model.vision()?;
        let base = rng::derive(seed, PROPOSAL_STREAM);
        let proposals = corpus
            .scenes
            .iter()
            .map(|s| proposal_features(s, &encoder, &model.vocab, &cfg.vision, rng::derive(base, s.id)))
            .collect::<Result<Vec<_>>>()?;
        let index = corpus.scenes.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let data = Self {
            scenes: corpus.scenes.clone(),
            chains: corpus.chains.clone(),
            proposals,
            index,
        };
        for c in &data.chains {
            data.scene_index(c.scene_id)?;
        }
        if data.chains.is_empty() {
            return Err(Error::Empty("training chains"));
        }
        Ok(data)
    }

    pub fn scene_index(&self, id: u64) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Unsatisfiable(alloc::format!("chain refers to missing scene {id}")))
    }

    /// One evaluation item per chain: its six captions against the scene.
    pub fn eval_items(&self) -> Result<Vec<EvalItem>> {
        self.chains
            .iter()
            .map(|c| {
                let i = self.scene_index(c.scene_id)?;
                Ok(EvalItem {
                    scene: self.scenes[i].clone(),
                    proposals: self.proposals[i].clone(),
                    queries: chain_queries(&self.scenes[i], c)?,
                })
            })
            .collect()
    }
}

/// Per-term values of one step's loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub class: f64,
    pub bbox: f64,
    pub giou: f64,
    /// Hierarchy (or baseline) term plus disentangle term, before weighting.
    pub embedding: f64,
    pub hierarchy: f64,
    pub disentangle: f64,
    pub total: f64,
}

/// Graph handles of each weighted term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub class: Option<Var>,
    pub bbox: Option<Var>,
    pub giou: Option<Var>,
    pub hierarchy: Option<Var>,
    pub disentangle: Option<Var>,
    pub total: Var,
}

fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Option<Var>> {
    if terms.is_empty() {
        return Ok(None);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(Some(g.scale(acc, 1.0 / terms.len() as f64)?))
}

fn swapped(chain: &ChainVars) -> ChainVars {
    ChainVars {
        pos: chain.neg.clone(),
        neg: chain.pos.clone(),
    }
}

/// Radial objective with negative terms weighted by `w`.
fn radial_loss(g: &mut Graph, chain: &ChainVars, root: Var, w: f64) -> Result<Var> {
    let mut acc = g.scalar(0.0);
    for t in 0..chain.pos.len() - 1 {
        let up = exterior_angle_var(g, chain.pos[t], chain.pos[t + 1], root)?;
        let down = exterior_angle_var(g, chain.pos[t], chain.neg[t], root)?;
        let down = g.scale(down, w)?;
        let d = g.sub(up, down)?;
        acc = g.add(acc, d)?;
    }
    Ok(acc)
}

fn hierarchy_term(g: &mut Graph, cfg: &TrainConfig, chain: &ChainVars, root: Var, feature: Option<Var>) -> Result<Option<Var>> {
    let (h, o) = (&cfg.hierarchy, cfg.reference);
    let w = cfg.h_neg_weight;
    let weighted_neg = |g: &mut Graph, c: &ChainVars| -> Result<Var> {
        let n = hier_neg_loss_var(g, c, root, o, h)?;
        g.scale(n, w)
    };
    Ok(Some(match cfg.mode {
        LossMode::None => return Ok(None),
        LossMode::H | LossMode::ReverseH => {
            let c = if cfg.mode == LossMode::ReverseH { swapped(chain) } else { chain.clone() };
            let p = hier_pos_loss_var(g, &c, root, o, h)?;
            let n = weighted_neg(g, &c)?;
            g.add(p, n)?
        }
        LossMode::HPosOnly => hier_pos_loss_var(g, chain, root, o, h)?,
        LossMode::HNegOnly => weighted_neg(g, chain)?,
        LossMode::Re => radial_loss(g, chain, root, cfg.re_neg_weight)?,
        LossMode::Cl => {
            let f = feature.ok_or(Error::Empty("contrastive anchor"))?;
            let mut terms = Vec::new();
            for t in 0..chain.pos.len() {
                let cand = g.stack_rows(&[chain.pos[t], chain.neg[t]])?;
                terms.push(contrastive_loss_var(g, f, cand, 1, cfg.cl_tau)?);
            }
            mean_of(g, &terms)?.expect("non-empty chain")
        }
    }))
}

/// Builds the full training loss for `chains` on graph `g`.
pub fn batch_loss(
    g: &mut Graph,
    p: &Bound,
    model: &Model,
    cfg: &TrainConfig,
    data: &TrainData,
    chains: &[usize],
) -> Result<LossVars> {
    let w = cfg.weights;
    let records: Vec<&ChainRecord> = chains.iter().map(|&i| &data.chains[i]).collect();
    let captions: Vec<&str> = records
        .iter()
        .flat_map(|c| c.positives().chain(c.negatives()))
        .collect();
    let batch = SentenceBatch::new(&model.vocab, &captions, cfg.text.dims.max_tokens)?;
    let out = forward(g, p, &cfg.text, &batch)?;
    let e = out.embeddings;

    let mut class_terms = Vec::new();
    let mut anchors: Vec<BBox> = Vec::new();
    let mut gts: Vec<BBox> = Vec::new();
    let mut target_rows: Vec<f64> = Vec::new();
    let mut hier_terms = Vec::new();
    let mut rows = Vec::new();
    let root = p.get(ROOT)?;
    let mut row = 0;
    for c in &records {
        let si = data.scene_index(c.scene_id)?;
        let (scene, props) = (&data.scenes[si], &data.proposals[si]);
        let l = c.tiers.len();
        let target = props
            .iter()
            .find(|pr| pr.source == Some(c.target_id))
            .ok_or(Error::UnknownObject(c.target_id))?;
        let features = Tensor::matrix(
            props.len(),
            target.feature.len(),
            props.iter().flat_map(|pr| pr.feature.iter().copied()).collect(),
        )?;
        if w.class > 0.0 {
            let q = g.slice_rows(e, row, 2 * l)?;
            let f = g.constant(features);
            let logits = score_logits_var(g, q, f, cfg.tau)?;
            let mut labels = Vec::with_capacity(2 * l * props.len());
            for cap in c.positives().chain(c.negatives()) {
                let query = Query::parse(cap)?;
                for pr in props {
                    let hit = pr.source.is_some_and(|o| query.holds(scene, &scene.objects[o]));
                    labels.push(if hit { 1.0 } else { 0.0 });
                }
            }
            class_terms.push(focal_loss_var(g, logits, &labels, cfg.focal)?);
        }
        anchors.push(target.bbox);
        gts.push(scene.object(c.target_id)?.bbox);
        target_rows.extend_from_slice(&target.feature);

        let pos: Vec<Var> = (row..row + l).map(|i| g.row(e, i)).collect::<Result<_>>()?;
        let neg: Vec<Var> = (row + l..row + 2 * l).map(|i| g.row(e, i)).collect::<Result<_>>()?;
        let chain = ChainVars { pos, neg };
        let feature = if cfg.mode == LossMode::Cl {
            Some(g.constant(Tensor::vector(target.feature.clone())))
        } else {
            None
        };
        if w.embedding > 0.0 {
            if let Some(h) = hierarchy_term(g, cfg, &chain, root, feature)? {
                hier_terms.push(h);
            }
        }
        rows.push(ChainRows {
            pos: (row..row + l).collect(),
            neg: (row + l..row + 2 * l).collect(),
        });
        row += 2 * l;
    }

    let class = mean_of(g, &class_terms)?;
    let (bbox, giou) = if w.bbox > 0.0 || w.giou > 0.0 {
        let dim = target_rows.len() / anchors.len();
        let f = g.constant(Tensor::matrix(anchors.len(), dim, target_rows)?);
        let bw = p.get(BOX_W)?;
        let bb = p.get(BOX_B)?;
        let deltas = g.affine(f, bw, bb)?;
        let pred = apply_deltas_var(g, &anchors, deltas)?;
        let l1 = l1_box_loss_var(g, pred, &gts)?;
        let gi = giou_loss_var(g, pred, &gts)?;
        (Some(l1), Some(gi))
    } else {
        (None, None)
    };
    let hierarchy = mean_of(g, &hier_terms)?;
    let disentangle = if cfg.disentangle_loss && w.embedding > 0.0 && !out.components.is_empty() {
        let units = pooled_units(g, &out.components)?;
        let dcfg = DisentangleLossConfig {
            margin: cfg.margin,
            lambda: w.lambda,
            reading: cfg.cosine_reading,
        };
        Some(disentangle_loss(g, &units, &rows, &dcfg)?)
    } else {
        None
    };

    let mut total = g.scalar(0.0);
    for (term, weight) in [
        (class, w.class),
        (bbox, w.bbox),
        (giou, w.giou),
        (hierarchy, w.embedding),
        (disentangle, w.embedding),
    ] {
        if let Some(t) = term {
            let s = g.scale(t, weight)?;
            total = g.add(total, s)?;
        }
    }
    Ok(LossVars {
        class,
        bbox,
        giou,
        hierarchy,
        disentangle,
        total,
    })
}

impl LossVars {
    pub fn report(&self, g: &Graph, step: usize) -> LossReport {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.item(x));
        LossReport {
            step,
            class: v(self.class),
            bbox: v(self.bbox),
            giou: v(self.giou),
            embedding: v(self.hierarchy) + v(self.disentangle),
            hierarchy: v(self.hierarchy),
            disentangle: v(self.disentangle),
            total: g.item(self.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub iteration: usize,
    pub params: ParamStore,
    pub optimizer: AdamW,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    pub data: TrainData,
    pub optimizer: AdamW,
    pub step: usize,
}

impl Trainer {
    /// Fresh model and proposals for `corpus`.
    pub fn new(cfg: TrainConfig, corpus: &Corpus) -> Result<Self> {
        cfg.validate()?;
        let model = Model::init(cfg.text, cfg.tau, cfg.seed)?;
        let data = TrainData::new(corpus, &model, &cfg, cfg.seed)?;
        Ok(Self {
            optimizer: AdamW::new(cfg.optimizer),
            cfg,
            model,
            data,
            step: 0,
        })
    }

    pub fn resume(cfg: TrainConfig, corpus: &Corpus, ckpt: Checkpoint) -> Result<Self> {
        let mut t = Self::new(cfg, corpus)?;
        if ckpt.config_hash != cfg.fingerprint() {
            return Err(Error::IncompatibleCheckpoint("configuration differs from the one that wrote it".into()));
        }
        t.model.store.check_compatible(&ckpt.params)?;
        t.model.store = ckpt.params;
        t.optimizer = ckpt.optimizer;
        t.step = ckpt.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.cfg.fingerprint(),
            iteration: self.step,
            params: self.model.store.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Chain indices for `step`, drawn from a stream keyed by seed and step.
    pub fn batch_indices(&self, step: usize) -> Vec<usize> {
        let mut r = rng::stream(rng::derive(self.cfg.seed, 0xba7c), step as u64);
        let n = self.data.chains.len();
        (0..self.cfg.chains_per_step).map(|_| r.random_range(0..n)).collect()
    }

    fn learning_rate(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Frozen => 0.0,
            ParamGroup::Module => self.cfg.lr_module,
            ParamGroup::Adapter => self.cfg.lr_adapter,
            ParamGroup::Head => self.cfg.lr_head,
        }
    }

    /// One optimisation step.
    pub fn step(&mut self) -> Result<LossReport> {
        let ids = self.batch_indices(self.step);
        let mut g = Graph::new();
        let p = self.model.store.bind(&mut g, |grp| grp != ParamGroup::Frozen);
        let vars = batch_loss(&mut g, &p, &self.model, &self.cfg, &self.data, &ids)?;
        let report = vars.report(&g, self.step);
        if !report.total.is_finite() {
            return Err(Error::NonFiniteLoss(self.step));
        }
        let grads = g.backward(vars.total)?;
        let named: Vec<(String, Tensor)> = p.collect(&grads);
        if named.iter().any(|(_, t)| !t.all_finite()) {
            return Err(Error::NonFiniteLoss(self.step));
        }
        let lrs = |grp: ParamGroup| self.learning_rate(grp);
        let lr: [f64; 4] = [
            lrs(ParamGroup::Frozen),
            lrs(ParamGroup::Module),
            lrs(ParamGroup::Adapter),
            lrs(ParamGroup::Head),
        ];
        self.optimizer.update(&mut self.model.store, &named, |grp| match grp {
            ParamGroup::Frozen => lr[0],
            ParamGroup::Module => lr[1],
            ParamGroup::Adapter => lr[2],
            ParamGroup::Head => lr[3],
        })?;
        self.step += 1;
        Ok(report)
    }

    /// Runs until `cfg.iterations` steps have been taken, calling `on_step`
    /// after each.
    pub fn run(&mut self, mut on_step: impl FnMut(&LossReport)) -> Result<()> {
        while self.step < self.cfg.iterations {
            let r = self.step()?;
            on_step(&r);
        }
        Ok(())
    }
}

/// Evaluation items for a held-out corpus with proposals seeded by `seed`.
pub fn eval_items(corpus: &Corpus, model: &Model, cfg: &TrainConfig, seed: u64) -> Result<Vec<EvalItem>> {
    TrainData::new(corpus, model, cfg, seed)?.eval_items()
}
