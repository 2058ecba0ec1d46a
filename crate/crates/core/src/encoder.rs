//! A small pre-norm transformer encoder tower.
//!
//! Each tower embeds a padded batch of token ids, runs `num_layers` blocks of
//! masked multi-head self-attention and a GELU feed-forward network, and
//! exports the position-0 (sequence start) state of each of the top
//! `tap_top_k` layers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, Parameters};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Ids reserved at the bottom of every vocabulary.
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SEQ_START_ID: usize = 2;
pub const NUM_RESERVED_IDS: usize = 3;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub tap_top_k: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 32,
            num_heads: 2,
            ffn_dim: 64,
            max_len: 48,
            vocab_size: 512,
            tap_top_k: 3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.vocab_size <= NUM_RESERVED_IDS {
            return Err(Error::config(format!(
                "vocab_size {} leaves no room beyond the {NUM_RESERVED_IDS} reserved ids",
                self.vocab_size
            )));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.tap_top_k == 0 || self.tap_top_k > self.num_layers {
            return Err(Error::config(format!(
                "tap_top_k {} outside [1, {}]",
                self.tap_top_k, self.num_layers
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

/// A padded batch of token sequences. Position 0 of every row is expected
/// to hold [`SEQ_START_ID`].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    ids: Vec<usize>,
    mask: Vec<bool>,
    batch: usize,
    len: usize,
}

impl TokenBatch {
    /// Pads sequences to the longest one with [`PAD_ID`].
    pub fn from_sequences<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        let len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        Self::padded_to(seqs, len)
    }

    /// Pads every sequence to exactly `len` positions.
    pub fn padded_to<S: AsRef<[usize]>>(seqs: &[S], len: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let mut ids = Vec::with_capacity(seqs.len() * len);
        let mut mask = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            let s = s.as_ref();
            if s.is_empty() {
                return Err(Error::Input("empty token sequence".into()));
            }
            if s.len() > len {
                return Err(Error::Input(format!("sequence of {} exceeds pad length {len}", s.len())));
            }
            ids.extend_from_slice(s);
            ids.extend(core::iter::repeat_n(PAD_ID, len - s.len()));
            mask.extend(core::iter::repeat_n(true, s.len()));
            mask.extend(core::iter::repeat_n(false, len - s.len()));
        }
        Ok(Self {
            ids,
            mask,
            batch: seqs.len(),
            len,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// First-token states of the tapped layers, bottom to top. Each entry is a
/// `[batch, hidden_dim]` tensor on the tape.
#[derive(Debug, Clone)]
pub struct LayerStates {
    pub states: Vec<Var>,
}

impl LayerStates {
    /// The exported vectors of one batch row, `tap_top_k × hidden_dim`.
    pub fn row(&self, tape: &Tape, b: usize) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|&v| {
                let d = tape.shape(v)[1];
                tape.value(v).data()[b * d..(b + 1) * d].to_vec()
            })
            .collect()
    }
}

/// Parameter name under a tower prefix.
pub fn param_name(prefix: &str, leaf: &str) -> alloc::string::String {
    format!("{prefix}.{leaf}")
}

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.uniform_range(-bound, bound);
    }
    t
}

/// Adds the parameters of one tower, named under `prefix`, to `params`.
pub fn encoder_init(config: &EncoderConfig, prefix: &str, params: &mut Parameters, rng: &mut Rng) -> Result<()> {
    config.validate()?;
    let d = config.hidden_dim;
    let f = config.ffn_dim;
    let mut add = |leaf: &str, t: Tensor| params.insert(&param_name(prefix, leaf), t, false).map(|_| ());
    add("tok_emb", xavier_uniform(&[config.vocab_size, d], config.vocab_size, d, rng))?;
    add("pos_emb", xavier_uniform(&[config.max_len, d], config.max_len, d, rng))?;
    for l in 0..config.num_layers {
        let p = |s: &str| format!("layer{l}.{s}");
        add(&p("ln1.gain"), Tensor::full(&[d], 1.0))?;
        add(&p("ln1.bias"), Tensor::zeros(&[d]))?;
        for w in ["wq", "wk", "wv", "wo"] {
            add(&p(&format!("attn.{w}")), xavier_uniform(&[d, d], d, d, rng))?;
            add(&p(&format!("attn.b{}", &w[1..])), Tensor::zeros(&[d]))?;
        }
        add(&p("ln2.gain"), Tensor::full(&[d], 1.0))?;
        add(&p("ln2.bias"), Tensor::zeros(&[d]))?;
        add(&p("ffn.w1"), xavier_uniform(&[f, d], d, f, rng))?;
        add(&p("ffn.b1"), Tensor::zeros(&[f]))?;
        add(&p("ffn.w2"), xavier_uniform(&[d, f], f, d, rng))?;
        add(&p("ffn.b2"), Tensor::zeros(&[d]))?;
    }
    Ok(())
}

/// Resolves tower parameter names to tape variables.
pub(crate) struct TowerVars<'a> {
    pub params: &'a Parameters,
    pub bound: &'a Bound,
    pub prefix: &'a str,
}

impl TowerVars<'_> {
    fn get(&self, leaf: &str) -> Result<Var> {
        let idx = self.params.require(&param_name(self.prefix, leaf))?;
        Ok(self.bound.var(idx))
    }

    fn layer(&self, l: usize, leaf: &str) -> Result<Var> {
        self.get(&format!("layer{l}.{leaf}"))
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul_t(x, w)?;
    tape.add_row(y, b)
}

fn norm(tape: &mut Tape, tv: &TowerVars, l: usize, which: &str, x: Var) -> Result<Var> {
    let n = tape.layer_norm(x, LN_EPS);
    let g = tape.mul_row(n, tv.layer(l, &format!("{which}.gain"))?)?;
    tape.add_row(g, tv.layer(l, &format!("{which}.bias"))?)
}

/// Masked multi-head self-attention on `[batch * len, d]` token states.
/// Returns the attention context (before the output projection) and the
/// value projection, both `[batch * len, d]`. With `first_only`, queries are
/// restricted to the first token of each sequence and the context is
/// `[batch, d]`.
pub(crate) fn self_attention(
    tape: &mut Tape,
    tv: &TowerVars,
    config: &EncoderConfig,
    l: usize,
    x: Var,
    batch: &TokenBatch,
    first_only: bool,
) -> Result<(Var, Var)> {
    let (b, n) = (batch.batch_size(), batch.seq_len());
    let nq = if first_only { 1 } else { n };
    let h = config.num_heads;
    let dh = config.head_dim();
    let d = config.hidden_dim;
    let xq = if first_only {
        let first_rows: Vec<usize> = (0..b).map(|i| i * n).collect();
        tape.gather_rows(x, &first_rows)?
    } else {
        x
    };
    let q = linear(tape, xq, tv.layer(l, "attn.wq")?, tv.layer(l, "attn.bq")?)?;
    let k = linear(tape, x, tv.layer(l, "attn.wk")?, tv.layer(l, "attn.bk")?)?;
    let v = linear(tape, x, tv.layer(l, "attn.wv")?, tv.layer(l, "attn.bv")?)?;
    let split = |tape: &mut Tape, t: Var, len: usize| -> Result<Var> {
        let t = tape.reshape(t, &[b, len, h, dh])?;
        let t = tape.permute(t, &[0, 2, 1, 3])?;
        tape.reshape(t, &[b * h, len, dh])
    };
    let (qh, kh, vh) = (split(tape, q, nq)?, split(tape, k, n)?, split(tape, v, n)?);
    let scores = tape.matmul_t(qh, kh)?;
    let scores = tape.scale(scores, 1.0 / libm::sqrt(dh as f64));
    let key_mask = batch.mask();
    let mut mask = Vec::with_capacity(b * h * nq * n);
    for bi in 0..b {
        let keys = &key_mask[bi * n..(bi + 1) * n];
        for _ in 0..h * nq {
            mask.extend_from_slice(keys);
        }
    }
    let attn = tape.softmax(scores, Some(&mask))?;
    let ctx = tape.matmul(attn, vh)?;
    let ctx = tape.reshape(ctx, &[b, h, nq, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b * nq, d])?;
    Ok((ctx, v))
}

/// Runs one tower and returns the first-token states of its tapped layers.
pub fn encoder_forward(
    tape: &mut Tape,
    params: &Parameters,
    bound: &Bound,
    prefix: &str,
    config: &EncoderConfig,
    batch: &TokenBatch,
) -> Result<LayerStates> {
    let (b, n) = (batch.batch_size(), batch.seq_len());
    if n == 0 {
        return Err(Error::Input("empty token sequence".into()));
    }
    if n > config.max_len {
        return Err(Error::Input(format!("sequence length {n} exceeds max_len {}", config.max_len)));
    }
    if let Some(&id) = batch.ids().iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::Vocab {
            id,
            vocab_size: config.vocab_size,
        });
    }
    let tv = TowerVars { params, bound, prefix };
    let tok = tape.gather_rows(tv.get("tok_emb")?, batch.ids())?;
    let positions: Vec<usize> = (0..b).flat_map(|_| 0..n).collect();
    let pos = tape.gather_rows(tv.get("pos_emb")?, &positions)?;
    let mut x = tape.add(tok, pos)?;
    let first_rows: Vec<usize> = (0..b).map(|i| i * n).collect();
    let first_tapped = config.num_layers - config.tap_top_k;
    let mut states = Vec::with_capacity(config.tap_top_k);
    for l in 0..config.num_layers {
        // Only first-token rows of the top layer are read downstream.
        let last = l + 1 == config.num_layers;
        let a = norm(tape, &tv, l, "ln1", x)?;
        let (ctx, _) = self_attention(tape, &tv, config, l, a, batch, last)?;
        let o = linear(tape, ctx, tv.layer(l, "attn.wo")?, tv.layer(l, "attn.bo")?)?;
        if last {
            x = tape.gather_rows(x, &first_rows)?;
        }
        x = tape.add(x, o)?;
        let f = norm(tape, &tv, l, "ln2", x)?;
        let f = linear(tape, f, tv.layer(l, "ffn.w1")?, tv.layer(l, "ffn.b1")?)?;
        let f = tape.gelu(f);
        let f = linear(tape, f, tv.layer(l, "ffn.w2")?, tv.layer(l, "ffn.b2")?)?;
        x = tape.add(x, f)?;
        if last {
            states.push(x);
        } else if l >= first_tapped {
            states.push(tape.gather_rows(x, &first_rows)?);
        }
    }
    Ok(LayerStates { states })
}

/// Names of every parameter belonging to one tower, in creation order.
pub fn tower_param_names(config: &EncoderConfig, prefix: &str) -> Vec<alloc::string::String> {
    let mut names = vec![param_name(prefix, "tok_emb"), param_name(prefix, "pos_emb")];
    for l in 0..config.num_layers {
        for leaf in [
            "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
            "attn.wo", "attn.bo", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
        ] {
            names.push(param_name(prefix, &format!("layer{l}.{leaf}")));
        }
    }
    names
}
