//! Training for the word prediction model.
//!
//! `train_separate` fits one model per context type on that type's data;
//! `train_joint` fits a single model on all four. Both use Adam with linear
//! warmup followed by inverse-square-root decay, evaluate top-1 validation
//! accuracy under the typed-character constraint, keep the best parameters
//! and stop early after `patience` evaluations without improvement.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{ContextType, GwlanExample, Romanizer};
use crate::completer::{filter_and_renormalize, PrefixIndex};
use crate::corpus::{build_vocab, ParallelCorpus, Sentence, Vocabulary, UNK_ID};
use crate::rng::{below, derive_seed, stream_rng};
use crate::wpm::{dropout_rng, EncodedExample, ModelError, Tensor, WpmConfig, WpmModel, WpmParameters};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: non-finite {what}")]
    Divergence { step: u64, what: &'static str },
    #[error("parameter and gradient shapes differ")]
    Shape,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[serde(alias = "sep")]
    Separate,
    #[default]
    Joint,
}

/// How joint training fills a batch from the four datasets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointBatching {
    /// Each example picks its context type uniformly at random.
    #[default]
    Mixed,
    /// Whole batches cycle through the types.
    RoundRobin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: u64,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub eval_every: u64,
    pub patience: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub joint_batching: JointBatching,
    pub adam: AdamConfig,
    pub model: WpmConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_steps: 3000,
            learning_rate: 1e-3,
            warmup_steps: 200,
            eval_every: 250,
            patience: 4,
            seed: 1,
            strategy: Strategy::Joint,
            joint_batching: JointBatching::Mixed,
            adam: AdamConfig::default(),
            model: WpmConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.batch_size == 0 || self.eval_every == 0 || self.warmup_steps == 0 {
            return bad("batch_size, eval_every and warmup_steps must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(TrainError::Config("adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// `peak · min(step / warmup, sqrt(warmup / step))` for 1-based `step`.
pub fn learning_rate(step: u64, peak: f64, warmup: u64) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup.max(1) as f64;
    peak * (s / w).min((w / s).sqrt())
}

/// Anything the optimizer can update: a fixed sequence of flat buffers.
pub trait ParamSet {
    fn buffers(&self) -> Vec<&[f64]>;
    fn buffers_mut(&mut self) -> Vec<&mut [f64]>;
}

impl ParamSet for WpmParameters {
    fn buffers(&self) -> Vec<&[f64]> {
        self.named_tensors().into_iter().map(|(_, t)| t.data()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.named_tensors_mut().into_iter().map(|(_, t)| t.data_mut()).collect()
    }
}

impl ParamSet for Vec<f64> {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl ParamSet for Tensor {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.data()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.data_mut()]
    }
}

/// First and second moment estimates, flattened in buffer order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One Adam update at 1-based `step` with learning rate `lr`. Gradients are
/// checked before anything is modified.
pub fn optimizer_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    step: u64,
    lr: f64,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    let gbufs = grads.buffers();
    let mut pbufs = params.buffers_mut();
    if gbufs.len() != pbufs.len() || gbufs.iter().zip(&pbufs).any(|(g, p)| g.len() != p.len()) {
        return Err(TrainError::Shape);
    }
    if gbufs.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(TrainError::Divergence { step, what: "gradient" });
    }
    let total: usize = gbufs.iter().map(|g| g.len()).sum();
    if state.m.len() != total {
        state.m = vec![0.0; total];
        state.v = vec![0.0; total];
    }
    let t = step.max(1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut k = 0;
    for (p, g) in pbufs.iter_mut().zip(&gbufs) {
        for (pi, &gi) in p.iter_mut().zip(g.iter()) {
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            *pi -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            k += 1;
        }
    }
    Ok(())
}

/// Train and validation examples for one context type.
#[derive(Clone, Debug, Default)]
pub struct Split {
    pub train: Vec<GwlanExample>,
    pub valid: Vec<GwlanExample>,
}

/// Vocabularies and the candidate index shared by every model of a task.
#[derive(Clone, Debug)]
pub struct TaskVocab {
    pub src: Vocabulary,
    pub tgt: Vocabulary,
    pub index: PrefixIndex,
}

impl TaskVocab {
    pub fn new(src: Vocabulary, tgt: Vocabulary, rom: &Romanizer, case_fold: bool) -> Self {
        let index = PrefixIndex::build(&tgt, rom, case_fold);
        Self { src, tgt, index }
    }

    /// Vocabularies over a parallel corpus, each capped at `max_size` entries.
    pub fn from_corpus(corpus: &ParallelCorpus, rom: &Romanizer, case_fold: bool, max_size: usize) -> Self {
        let src = build_vocab(corpus.sources(), 1, max_size);
        let tgt = build_vocab(corpus.targets(), 1, max_size);
        Self::new(src, tgt, rom, case_fold)
    }

    /// Vocabularies over the words visible in examples: the source sentence
    /// on one side, context and gold words on the other.
    pub fn from_examples<'a, I>(examples: I, rom: &Romanizer, case_fold: bool, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a GwlanExample>,
    {
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        for ex in examples {
            sources.push(ex.src.clone());
            targets.push(ex.left.clone());
            targets.push(ex.right.clone());
            targets.push(Sentence::new([ex.target.as_str()]).expect("gold word is a valid token"));
        }
        let src = build_vocab(&sources, 1, max_size);
        let tgt = build_vocab(&targets, 1, max_size);
        Self::new(src, tgt, rom, case_fold)
    }
}

/// A validation example in id form, with what is needed for scoring.
#[derive(Clone, Debug)]
struct ValidItem {
    src: Vec<u32>,
    left: Vec<u32>,
    right: Vec<u32>,
    typed: String,
    target: String,
}

pub fn encode_example(ex: &GwlanExample, vocab: &TaskVocab) -> EncodedExample {
    EncodedExample {
        src: vocab.src.encode(&ex.src),
        left: vocab.tgt.encode(&ex.left),
        right: vocab.tgt.encode(&ex.right),
        target: vocab.tgt.id_or_unk(&ex.target),
    }
}

/// Encodes training examples, dropping those whose gold word is out of
/// vocabulary or which do not fit the model.
fn encode_train(examples: &[GwlanExample], vocab: &TaskVocab, model: &WpmConfig) -> Vec<EncodedExample> {
    let out: Vec<EncodedExample> = examples
        .iter()
        .map(|ex| encode_example(ex, vocab))
        .filter(|e| {
            e.target != UNK_ID
                && !e.src.is_empty()
                && e.src.len() <= model.max_positions
                && e.left.len() + e.right.len() < model.max_positions
        })
        .collect();
    if out.len() < examples.len() {
        log::info!("dropped {} of {} training examples", examples.len() - out.len(), examples.len());
    }
    out
}

fn encode_valid(examples: &[GwlanExample], vocab: &TaskVocab) -> Vec<ValidItem> {
    examples
        .iter()
        .map(|ex| ValidItem {
            src: vocab.src.encode(&ex.src),
            left: vocab.tgt.encode(&ex.left),
            right: vocab.tgt.encode(&ex.right),
            typed: ex.typed.clone(),
            target: ex.target.clone(),
        })
        .collect()
}

fn valid_accuracy(model: &WpmModel, items: &[ValidItem], vocab: &TaskVocab) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let hits = items
        .iter()
        .filter(|it| {
            model
                .predict_distribution(&it.src, &it.left, &it.right)
                .ok()
                .and_then(|d| filter_and_renormalize(&d, &it.typed, &vocab.index, &vocab.tgt).ok())
                .and_then(|c| c.into_iter().next())
                .is_some_and(|s| s.word == it.target)
        })
        .count();
    hits as f64 / items.len() as f64
}

/// Sum over types of the mean NLL on each type's examples.
pub fn joint_objective(model: &WpmModel, per_type: &BTreeMap<ContextType, Vec<EncodedExample>>) -> Result<f64, ModelError> {
    per_type
        .values()
        .filter(|b| !b.is_empty())
        .map(|b| model.loss(b))
        .sum()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalPoint {
    pub step: u64,
    pub valid_acc: BTreeMap<ContextType, f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// `(step, mean batch loss)` for every step taken.
    pub losses: Vec<(u64, f64)>,
    pub evals: Vec<EvalPoint>,
    /// Validation accuracy of the selected parameters.
    pub best_accuracy: BTreeMap<ContextType, f64>,
    pub best_step: u64,
    pub steps_run: u64,
    pub stopped_early: bool,
}

impl TrainReport {
    /// JSON Lines: one record per step with its loss, plus `valid_acc` on
    /// steps that were evaluated. Step 0 carries only the initial evaluation.
    pub fn write_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        let evals: BTreeMap<u64, &EvalPoint> = self.evals.iter().map(|e| (e.step, e)).collect();
        if let Some(e) = evals.get(&0) {
            writeln!(w, "{}", serde_json::json!({ "step": 0, "valid_acc": e.valid_acc }))?;
        }
        for &(step, loss) in &self.losses {
            let mut rec = serde_json::json!({ "step": step, "loss": loss });
            if let Some(e) = evals.get(&step) {
                rec["valid_acc"] = serde_json::to_value(&e.valid_acc).expect("map serializes");
            }
            writeln!(w, "{rec}")?;
        }
        w.flush()
    }
}

enum Sampler {
    Single,
    Mixed,
    RoundRobin,
}

/// The shared optimization loop. `pools` holds the training examples of the
/// types this model covers; `valid` the matching validation sets.
fn optimize(
    cfg: &TrainConfig,
    init_seed: u64,
    pools: &[Vec<EncodedExample>],
    valid: &BTreeMap<ContextType, Vec<ValidItem>>,
    vocab: &TaskVocab,
    sampler: Sampler,
) -> Result<(WpmModel, TrainReport), TrainError> {
    let mut model = WpmModel::new(cfg.model.clone(), init_seed)?;
    let mut report = TrainReport::default();
    let mut batch_rng = stream_rng(derive_seed(init_seed, 0xBA7C), 0);
    let mut adam = AdamState::default();

    let evaluate = |model: &WpmModel, step: u64| {
        let valid_acc: BTreeMap<ContextType, f64> =
            valid.iter().map(|(&t, items)| (t, valid_accuracy(model, items, vocab))).collect();
        let mean = valid_acc.values().sum::<f64>() / valid_acc.len().max(1) as f64;
        EvalPoint { step, valid_acc, mean }
    };

    let first = evaluate(&model, 0);
    let mut best_mean = first.mean;
    let mut best_params = model.params.clone();
    report.best_accuracy = first.valid_acc.clone();
    report.evals.push(first);
    let mut stale = 0usize;

    for step in 1..=cfg.max_steps {
        let batch: Vec<EncodedExample> = (0..cfg.batch_size)
            .map(|_| {
                let pool = match sampler {
                    Sampler::Single => &pools[0],
                    Sampler::Mixed => &pools[below(&mut batch_rng, pools.len())],
                    Sampler::RoundRobin => &pools[(step as usize - 1) % pools.len()],
                };
                pool[below(&mut batch_rng, pool.len())].clone()
            })
            .collect();
        let mut drop_rng = dropout_rng(init_seed, step);
        let (loss, grads) = model.loss_and_gradients(&batch, Some(&mut drop_rng))?;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { step, what: "loss" });
        }
        let lr = learning_rate(step, cfg.learning_rate, cfg.warmup_steps);
        optimizer_step(&mut model.params, &grads, step, lr, &mut adam, &cfg.adam)?;
        report.losses.push((step, loss));
        report.steps_run = step;

        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let point = evaluate(&model, step);
            log::info!("step {step} loss {loss:.4} valid {:.4}", point.mean);
            if point.mean > best_mean {
                best_mean = point.mean;
                best_params = model.params.clone();
                report.best_step = step;
                report.best_accuracy = point.valid_acc.clone();
                stale = 0;
            } else {
                stale += 1;
            }
            report.evals.push(point);
            if stale >= cfg.patience {
                report.stopped_early = step < cfg.max_steps;
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, report))
}

fn check_splits(splits: &BTreeMap<ContextType, Split>) -> Result<(), TrainError> {
    for t in ContextType::ALL {
        match splits.get(&t) {
            Some(s) if !s.train.is_empty() && !s.valid.is_empty() => {}
            _ => return Err(TrainError::Config(format!("{t} train and valid sets must be nonempty"))),
        }
    }
    Ok(())
}

fn prepared_config(cfg: &TrainConfig, vocab: &TaskVocab) -> Result<TrainConfig, TrainError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.model = cfg.model.with_vocabs(&vocab.src, &vocab.tgt);
    cfg.model.validate()?;
    Ok(cfg)
}

/// One model per context type, each trained and selected on its own data.
pub fn train_separate(
    splits: &BTreeMap<ContextType, Split>,
    vocab: &TaskVocab,
    cfg: &TrainConfig,
) -> Result<(BTreeMap<ContextType, WpmModel>, BTreeMap<ContextType, TrainReport>), TrainError> {
    check_splits(splits)?;
    let cfg = prepared_config(cfg, vocab)?;
    let mut models = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for t in ContextType::ALL {
        let split = &splits[&t];
        let pool = encode_train(&split.train, vocab, &cfg.model);
        if pool.is_empty() {
            return Err(TrainError::Config(format!("no usable {t} training examples")));
        }
        let valid = BTreeMap::from([(t, encode_valid(&split.valid, vocab))]);
        let seed = derive_seed(cfg.seed, 1 + t.index());
        let (m, r) = optimize(&cfg, seed, &[pool], &valid, vocab, Sampler::Single)?;
        models.insert(t, m);
        reports.insert(t, r);
    }
    Ok((models, reports))
}

/// One model for all four types, selected on the mean validation accuracy.
pub fn train_joint(
    splits: &BTreeMap<ContextType, Split>,
    vocab: &TaskVocab,
    cfg: &TrainConfig,
) -> Result<(WpmModel, TrainReport), TrainError> {
    check_splits(splits)?;
    let cfg = prepared_config(cfg, vocab)?;
    let mut pools = Vec::new();
    let mut valid = BTreeMap::new();
    for t in ContextType::ALL {
        let split = &splits[&t];
        let pool = encode_train(&split.train, vocab, &cfg.model);
        if pool.is_empty() {
            return Err(TrainError::Config(format!("no usable {t} training examples")));
        }
        pools.push(pool);
        valid.insert(t, encode_valid(&split.valid, vocab));
    }
    let sampler = match cfg.joint_batching {
        JointBatching::Mixed => Sampler::Mixed,
        JointBatching::RoundRobin => Sampler::RoundRobin,
    };
    optimize(&cfg, derive_seed(cfg.seed, 0), &pools, &valid, vocab, sampler)
}
