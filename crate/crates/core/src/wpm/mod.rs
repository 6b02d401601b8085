//! Word prediction model.
//!
//! A source encoder (a standard pre-norm Transformer encoder) reads the
//! source sentence. A cross-lingual encoder reads `left ++ [MASK] ++ right`
//! with fully bidirectional self-attention, attends to the source memory, and
//! the final representation of the `[MASK]` slot is projected onto the target
//! vocabulary. Position embeddings are learned and shared by both encoders;
//! context positions are numbered consecutively from zero no matter how far
//! apart the pieces were in the reference.
//!
//! Everything runs in `f64` with hand-written backward passes so that
//! gradients can be checked against finite differences.

mod checkpoint;
mod layers;
pub mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{Attention, FeedForward, LayerNorm, Linear, Visit};
pub use tensor::Tensor;

use crate::corpus::{Vocabulary, MASK_ID};
use crate::rng::{self, StreamRng};
use layers::{dropout, dropout_backward, init_uniform, visit_fields, AttnCache, FfnCache, NormCache};
use tensor::softmax_in_place;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence of length {len} exceeds {max} positions")]
    SequenceTooLong { len: usize, max: usize },
    #[error("source sentence is empty")]
    EmptySource,
    #[error("token id {id} outside vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WpmConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub enc_layers: usize,
    pub xenc_layers: usize,
    pub max_positions: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for WpmConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            enc_layers: 2,
            xenc_layers: 2,
            max_positions: 128,
            src_vocab_size: 0,
            tgt_vocab_size: 0,
            dropout_rate: 0.1,
        }
    }
}

impl WpmConfig {
    pub fn with_vocabs(mut self, src: &Vocabulary, tgt: &Vocabulary) -> Self {
        self.src_vocab_size = src.len();
        self.tgt_vocab_size = tgt.len();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_owned()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("d_model, n_heads and d_ff must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_positions < 3 {
            return bad("max_positions must fit at least one context token on each side");
        }
        if self.src_vocab_size <= 3 || self.tgt_vocab_size <= 3 {
            return bad("vocabularies must contain words beyond the special tokens");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }

    /// Key/value lines stored in checkpoint headers.
    pub fn to_header(&self) -> String {
        format!(
            "d_model={}\nn_heads={}\nd_ff={}\nenc_layers={}\nxenc_layers={}\nmax_positions={}\nsrc_vocab_size={}\ntgt_vocab_size={}\ndropout_rate={:?}\n",
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.enc_layers,
            self.xenc_layers,
            self.max_positions,
            self.src_vocab_size,
            self.tgt_vocab_size,
            self.dropout_rate,
        )
    }

    pub fn from_header(text: &str) -> Result<Self, ModelError> {
        let mut cfg = WpmConfig::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Checkpoint(format!("bad header line {line:?}")))?;
            let int = || {
                v.parse::<usize>()
                    .map_err(|_| ModelError::Checkpoint(format!("bad value for {k}: {v:?}")))
            };
            match k {
                "d_model" => cfg.d_model = int()?,
                "n_heads" => cfg.n_heads = int()?,
                "d_ff" => cfg.d_ff = int()?,
                "enc_layers" => cfg.enc_layers = int()?,
                "xenc_layers" => cfg.xenc_layers = int()?,
                "max_positions" => cfg.max_positions = int()?,
                "src_vocab_size" => cfg.src_vocab_size = int()?,
                "tgt_vocab_size" => cfg.tgt_vocab_size = int()?,
                "dropout_rate" => {
                    cfg.dropout_rate = v
                        .parse()
                        .map_err(|_| ModelError::Checkpoint(format!("bad dropout_rate {v:?}")))?
                }
                other => return Err(ModelError::Checkpoint(format!("unknown header key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub attn: Attention,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}
visit_fields!(EncoderLayer { attn_norm, attn, ffn_norm, ffn });

/// Cross-lingual layer: bidirectional self-attention over the context,
/// cross-attention over the source memory, feed-forward.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossLayer {
    pub self_norm: LayerNorm,
    pub self_attn: Attention,
    pub cross_norm: LayerNorm,
    pub cross_attn: Attention,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}
visit_fields!(CrossLayer { self_norm, self_attn, cross_norm, cross_attn, ffn_norm, ffn });

#[derive(Clone, Debug, PartialEq)]
pub struct WpmParameters {
    pub src_embed: Tensor,
    pub tgt_embed: Tensor,
    pub pos_embed: Tensor,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_norm: LayerNorm,
    pub xencoder: Vec<CrossLayer>,
    pub xencoder_norm: LayerNorm,
    /// `d_model × V` projection onto the target vocabulary.
    pub output: Linear,
}
visit_fields!(WpmParameters {
    src_embed,
    tgt_embed,
    pos_embed,
    encoder,
    encoder_norm,
    xencoder,
    xencoder_norm,
    output,
});

impl WpmParameters {
    pub fn init(cfg: &WpmConfig, seed: u64) -> Self {
        let mut r = rng::stream_rng(seed, 0);
        let d = cfg.d_model;
        Self {
            src_embed: init_uniform(&[cfg.src_vocab_size, d], d, &mut r),
            tgt_embed: init_uniform(&[cfg.tgt_vocab_size, d], d, &mut r),
            pos_embed: init_uniform(&[cfg.max_positions, d], d, &mut r),
            encoder: (0..cfg.enc_layers)
                .map(|_| EncoderLayer {
                    attn_norm: LayerNorm::new(d),
                    attn: Attention::new(d, &mut r),
                    ffn_norm: LayerNorm::new(d),
                    ffn: FeedForward::new(d, cfg.d_ff, &mut r),
                })
                .collect(),
            encoder_norm: LayerNorm::new(d),
            xencoder: (0..cfg.xenc_layers)
                .map(|_| CrossLayer {
                    self_norm: LayerNorm::new(d),
                    self_attn: Attention::new(d, &mut r),
                    cross_norm: LayerNorm::new(d),
                    cross_attn: Attention::new(d, &mut r),
                    ffn_norm: LayerNorm::new(d),
                    ffn: FeedForward::new(d, cfg.d_ff, &mut r),
                })
                .collect(),
            xencoder_norm: LayerNorm::new(d),
            output: Linear::new(d, cfg.tgt_vocab_size, d, &mut r),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn add_assign(&mut self, other: &WpmParameters) {
        for ((_, a), (_, b)) in self.named_tensors_mut().into_iter().zip(other.named_tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.named_tensors_mut() {
            t.scale(s);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Checks tensor shapes against `cfg`.
    pub fn check_shapes(&self, cfg: &WpmConfig) -> Result<(), ModelError> {
        let expected = WpmParameters::shapes(cfg);
        let actual: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected != actual {
            return Err(ModelError::Config("parameter shapes do not match config".into()));
        }
        Ok(())
    }

    fn shapes(cfg: &WpmConfig) -> Vec<(String, Vec<usize>)> {
        WpmParameters::init(cfg, 0)
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }
}

/// Cross-lingual encoder input: `left ++ [MASK] ++ right` with consecutive
/// positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XencInput {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    pub mask_slot: usize,
}

pub fn build_xenc_input(left: &[u32], right: &[u32], cfg: &WpmConfig) -> Result<XencInput, ModelError> {
    let len = left.len() + 1 + right.len();
    if len > cfg.max_positions {
        return Err(ModelError::SequenceTooLong {
            len,
            max: cfg.max_positions,
        });
    }
    let mut tokens = Vec::with_capacity(len);
    tokens.extend_from_slice(left);
    tokens.push(MASK_ID);
    tokens.extend_from_slice(right);
    Ok(XencInput {
        tokens,
        positions: (0..len).collect(),
        mask_slot: left.len(),
    })
}

/// One example as ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub src: Vec<u32>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub target: u32,
}

struct EncLayerCache {
    attn_in: Vec<f64>,
    attn_norm: NormCache,
    attn: AttnCache,
    attn_drop: Option<Vec<f64>>,
    ffn_in: Vec<f64>,
    ffn_norm: NormCache,
    ffn: FfnCache,
    ffn_drop: Option<Vec<f64>>,
}

struct CrossLayerCache {
    self_in: Vec<f64>,
    self_norm: NormCache,
    self_attn: AttnCache,
    self_drop: Option<Vec<f64>>,
    cross_in: Vec<f64>,
    cross_norm: NormCache,
    cross_attn: AttnCache,
    cross_drop: Option<Vec<f64>>,
    ffn_in: Vec<f64>,
    ffn_norm: NormCache,
    ffn: FfnCache,
    ffn_drop: Option<Vec<f64>>,
}

struct ForwardCache {
    enc: Vec<EncLayerCache>,
    enc_norm: NormCache,
    memory: Vec<f64>,
    xenc: Vec<CrossLayerCache>,
    x_norm: NormCache,
    h: Vec<f64>,
    probs: Vec<f64>,
}

fn check_ids(ids: &[u32], size: usize) -> Result<(), ModelError> {
    match ids.iter().find(|&&id| id as usize >= size) {
        Some(&id) => Err(ModelError::TokenOutOfRange { id, size }),
        None => Ok(()),
    }
}

fn embed(tokens: &[u32], positions: &[usize], table: &Tensor, pos: &Tensor, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; tokens.len() * d];
    for (r, (&t, &p)) in tokens.iter().zip(positions).enumerate() {
        let row = &mut out[r * d..(r + 1) * d];
        row.copy_from_slice(table.row(t as usize));
        tensor::axpy(1.0, pos.row(p), row);
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// A parameter set together with its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct WpmModel {
    pub config: WpmConfig,
    pub params: WpmParameters,
}

impl WpmModel {
    pub fn new(config: WpmConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = WpmParameters::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: WpmConfig, params: WpmParameters) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    fn check_source(&self, src: &[u32]) -> Result<(), ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptySource);
        }
        if src.len() > self.config.max_positions {
            return Err(ModelError::SequenceTooLong {
                len: src.len(),
                max: self.config.max_positions,
            });
        }
        check_ids(src, self.config.src_vocab_size)
    }

    /// Source memory, `|x| × d_model`.
    pub fn encode_source(&self, src: &[u32]) -> Result<Tensor, ModelError> {
        self.check_source(src)?;
        let d = self.config.d_model;
        let (memory, _) = self.run_encoder(src, None);
        Ok(Tensor::from_vec(&[src.len(), d], memory))
    }

    /// Representation `h` of the `[MASK]` slot.
    pub fn encode_context(&self, left: &[u32], right: &[u32], memory: &Tensor) -> Result<Vec<f64>, ModelError> {
        let input = build_xenc_input(left, right, &self.config)?;
        check_ids(&input.tokens, self.config.tgt_vocab_size)?;
        let (h, _) = self.run_xencoder(&input, memory.data(), None);
        Ok(h)
    }

    /// `softmax(φ(h))` over the target vocabulary.
    pub fn predict_distribution(&self, src: &[u32], left: &[u32], right: &[u32]) -> Result<Vec<f64>, ModelError> {
        let memory = self.encode_source(src)?;
        let h = self.encode_context(left, right, &memory)?;
        Ok(self.project(&h))
    }

    /// Output distribution for a given `[MASK]` representation.
    pub fn project(&self, h: &[f64]) -> Vec<f64> {
        let mut p = self.params.output.forward(h, 1);
        softmax_in_place(&mut p);
        p
    }

    fn validate_example(&self, ex: &EncodedExample) -> Result<(), ModelError> {
        self.check_source(&ex.src)?;
        build_xenc_input(&ex.left, &ex.right, &self.config)?;
        check_ids(&ex.left, self.config.tgt_vocab_size)?;
        check_ids(&ex.right, self.config.tgt_vocab_size)?;
        if Vocabulary::is_special(ex.target) || ex.target as usize >= self.config.tgt_vocab_size {
            return Err(ModelError::Batch(format!("target id {} is not a vocabulary word", ex.target)));
        }
        Ok(())
    }

    /// Mean negative log-likelihood of the gold words over the batch.
    pub fn loss(&self, batch: &[EncodedExample]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Batch("empty batch".into()));
        }
        let mut total = 0.0;
        for ex in batch {
            self.validate_example(ex)?;
            let p = self.predict_distribution(&ex.src, &ex.left, &ex.right)?;
            total -= p[ex.target as usize].ln();
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean NLL and its exact gradient. With `dropout_rng` set, dropout is
    /// active at the configured rate.
    pub fn loss_and_gradients(
        &self,
        batch: &[EncodedExample],
        mut dropout_rng: Option<&mut StreamRng>,
    ) -> Result<(f64, WpmParameters), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Batch("empty batch".into()));
        }
        for ex in batch {
            self.validate_example(ex)?;
        }
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        for ex in batch {
            let cache = self.forward(ex, dropout_rng.as_deref_mut());
            let p_gold = cache.probs[ex.target as usize];
            total -= p_gold.ln();
            let mut dlogits = cache.probs.clone();
            dlogits[ex.target as usize] -= 1.0;
            self.backward(ex, &cache, &dlogits, &mut grads);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        Ok((total / n, grads))
    }

    fn run_encoder(&self, src: &[u32], mut rng: Option<&mut StreamRng>) -> (Vec<f64>, (Vec<EncLayerCache>, NormCache)) {
        let cfg = &self.config;
        let d = cfg.d_model;
        let n = src.len();
        let positions: Vec<usize> = (0..n).collect();
        let mut x = embed(src, &positions, &self.params.src_embed, &self.params.pos_embed, d);
        let mut caches = Vec::with_capacity(self.params.encoder.len());
        for layer in &self.params.encoder {
            let (attn_in, attn_norm) = layer.attn_norm.forward(&x, d);
            let (mut a, attn) = layer.attn.forward(&attn_in, &attn_in, d, cfg.n_heads);
            let attn_drop = dropout(&mut a, cfg.dropout_rate, rng.as_deref_mut());
            let mid = add(&x, &a);
            let (ffn_in, ffn_norm) = layer.ffn_norm.forward(&mid, d);
            let (mut f, ffn) = layer.ffn.forward(&ffn_in, n);
            let ffn_drop = dropout(&mut f, cfg.dropout_rate, rng.as_deref_mut());
            x = add(&mid, &f);
            caches.push(EncLayerCache {
                attn_in,
                attn_norm,
                attn,
                attn_drop,
                ffn_in,
                ffn_norm,
                ffn,
                ffn_drop,
            });
        }
        let (memory, norm) = self.params.encoder_norm.forward(&x, d);
        (memory, (caches, norm))
    }

    fn run_xencoder(&self, input: &XencInput, memory: &[f64], mut rng: Option<&mut StreamRng>) -> (Vec<f64>, (Vec<CrossLayerCache>, NormCache)) {
        let cfg = &self.config;
        let d = cfg.d_model;
        let n = input.tokens.len();
        let mut x = embed(&input.tokens, &input.positions, &self.params.tgt_embed, &self.params.pos_embed, d);
        let mut caches = Vec::with_capacity(self.params.xencoder.len());
        for layer in &self.params.xencoder {
            let (self_in, self_norm) = layer.self_norm.forward(&x, d);
            let (mut a, self_attn) = layer.self_attn.forward(&self_in, &self_in, d, cfg.n_heads);
            let self_drop = dropout(&mut a, cfg.dropout_rate, rng.as_deref_mut());
            let after_self = add(&x, &a);
            let (cross_in, cross_norm) = layer.cross_norm.forward(&after_self, d);
            let (mut c, cross_attn) = layer.cross_attn.forward(&cross_in, memory, d, cfg.n_heads);
            let cross_drop = dropout(&mut c, cfg.dropout_rate, rng.as_deref_mut());
            let after_cross = add(&after_self, &c);
            let (ffn_in, ffn_norm) = layer.ffn_norm.forward(&after_cross, d);
            let (mut f, ffn) = layer.ffn.forward(&ffn_in, n);
            let ffn_drop = dropout(&mut f, cfg.dropout_rate, rng.as_deref_mut());
            x = add(&after_cross, &f);
            caches.push(CrossLayerCache {
                self_in,
                self_norm,
                self_attn,
                self_drop,
                cross_in,
                cross_norm,
                cross_attn,
                cross_drop,
                ffn_in,
                ffn_norm,
                ffn,
                ffn_drop,
            });
        }
        let slot = &x[input.mask_slot * d..(input.mask_slot + 1) * d];
        let (h, norm) = self.params.xencoder_norm.forward(slot, d);
        (h, (caches, norm))
    }

    fn forward(&self, ex: &EncodedExample, mut rng: Option<&mut StreamRng>) -> ForwardCache {
        let (memory, (enc, enc_norm)) = self.run_encoder(&ex.src, rng.as_deref_mut());
        let input = build_xenc_input(&ex.left, &ex.right, &self.config).expect("validated");
        let (h, (xenc, x_norm)) = self.run_xencoder(&input, &memory, rng);
        let probs = self.project(&h);
        ForwardCache {
            enc,
            enc_norm,
            memory,
            xenc,
            x_norm,
            h,
            probs,
        }
    }

    fn backward(&self, ex: &EncodedExample, cache: &ForwardCache, dlogits: &[f64], grads: &mut WpmParameters) {
        let cfg = &self.config;
        let d = cfg.d_model;
        let p = &self.params;

        // output projection
        let mut dh = vec![0.0; d];
        p.output.backward(&mut grads.output, &cache.h, dlogits, 1, &mut dh);

        // final norm applies to the mask row only
        let input = build_xenc_input(&ex.left, &ex.right, cfg).expect("validated");
        let n = input.tokens.len();
        let mut dx = vec![0.0; n * d];
        let slot = input.mask_slot;
        p.xencoder_norm.backward(&mut grads.xencoder_norm, &cache.x_norm, &dh, d, &mut dx[slot * d..(slot + 1) * d]);

        let mut dmemory = vec![0.0; cache.memory.len()];
        for ((layer, g), c) in p.xencoder.iter().zip(grads.xencoder.iter_mut()).zip(&cache.xenc).rev() {
            // ffn sublayer
            let df = dropout_backward(&dx, &c.ffn_drop);
            let mut dffn_in = vec![0.0; n * d];
            layer.ffn.backward(&mut g.ffn, &c.ffn, &c.ffn_in, &df, n, &mut dffn_in);
            let mut d_after_cross = dx;
            layer.ffn_norm.backward(&mut g.ffn_norm, &c.ffn_norm, &dffn_in, d, &mut d_after_cross);

            // cross-attention sublayer
            let dc = dropout_backward(&d_after_cross, &c.cross_drop);
            let mut dcross_in = vec![0.0; n * d];
            layer.cross_attn.backward(
                &mut g.cross_attn,
                &c.cross_attn,
                &c.cross_in,
                &cache.memory,
                &dc,
                d,
                cfg.n_heads,
                &mut dcross_in,
                &mut dmemory,
            );
            let mut d_after_self = d_after_cross;
            layer.cross_norm.backward(&mut g.cross_norm, &c.cross_norm, &dcross_in, d, &mut d_after_self);

            // bidirectional self-attention sublayer
            let da = dropout_backward(&d_after_self, &c.self_drop);
            let mut dq = vec![0.0; n * d];
            let mut dkv = vec![0.0; n * d];
            layer.self_attn.backward(&mut g.self_attn, &c.self_attn, &c.self_in, &c.self_in, &da, d, cfg.n_heads, &mut dq, &mut dkv);
            let dself_in = add(&dq, &dkv);
            let mut dinput = d_after_self;
            layer.self_norm.backward(&mut g.self_norm, &c.self_norm, &dself_in, d, &mut dinput);
            dx = dinput;
        }
        for (r, (&t, &pos)) in input.tokens.iter().zip(&input.positions).enumerate() {
            let row = &dx[r * d..(r + 1) * d];
            tensor::axpy(1.0, row, grads.tgt_embed.row_mut(t as usize));
            tensor::axpy(1.0, row, grads.pos_embed.row_mut(pos));
        }

        // source encoder
        let m = ex.src.len();
        let mut dx = vec![0.0; m * d];
        p.encoder_norm.backward(&mut grads.encoder_norm, &cache.enc_norm, &dmemory, d, &mut dx);
        for ((layer, g), c) in p.encoder.iter().zip(grads.encoder.iter_mut()).zip(&cache.enc).rev() {
            let df = dropout_backward(&dx, &c.ffn_drop);
            let mut dffn_in = vec![0.0; m * d];
            layer.ffn.backward(&mut g.ffn, &c.ffn, &c.ffn_in, &df, m, &mut dffn_in);
            let mut dmid = dx;
            layer.ffn_norm.backward(&mut g.ffn_norm, &c.ffn_norm, &dffn_in, d, &mut dmid);

            let da = dropout_backward(&dmid, &c.attn_drop);
            let mut dq = vec![0.0; m * d];
            let mut dkv = vec![0.0; m * d];
            layer.attn.backward(&mut g.attn, &c.attn, &c.attn_in, &c.attn_in, &da, d, cfg.n_heads, &mut dq, &mut dkv);
            let dattn_in = add(&dq, &dkv);
            let mut dinput = dmid;
            layer.attn_norm.backward(&mut g.attn_norm, &c.attn_norm, &dattn_in, d, &mut dinput);
            dx = dinput;
        }
        for (r, &t) in ex.src.iter().enumerate() {
            let row = &dx[r * d..(r + 1) * d];
            tensor::axpy(1.0, row, grads.src_embed.row_mut(t as usize));
            tensor::axpy(1.0, row, grads.pos_embed.row_mut(r));
        }
    }
}

/// Draws a dropout stream for one training step.
pub fn dropout_rng(seed: u64, step: u64) -> StreamRng {
    rng::stream_rng(rng::derive_seed(seed, 0xD0), step)
}
