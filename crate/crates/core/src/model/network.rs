//! The student network: a bag-of-tokens encoder and a single-hidden-layer
//! decoder that sees the encoding, the previous symbol and the position.
//!
//! ```text
//! enc    = tanh(E_task + mean_j E_tok[x_j])
//! a_t    = W_enc enc + W_sym E_sym[y_{t-1}] + W_pos[t] + b
//! logits = U tanh(a_t) + c
//! ```
//!
//! `[W_enc W_sym W_pos]` is the `(2d + P) -> h` decoder matrix applied to
//! `[enc; E_sym[prev]; onehot(t)]`, stored as three column blocks.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::symbols::{encode_target, BOS, N_SYMBOLS};
use super::vocab::{Vocab, TASK_TOKENS};
use crate::data::{Task, TrainingExample};
use crate::error::{contract, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Hidden width.
    pub h: usize,
    /// Maximum decoded symbols, EOS included.
    pub max_positions: usize,
    /// Standard deviation of the initial token embeddings.
    pub embedding_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            h: 128,
            max_positions: 64,
            embedding_std: 1.0,
        }
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub vocab: usize,
    pub d: usize,
    pub h: usize,
    pub p: usize,
    pub tok: usize,
    pub sym: usize,
    pub w_enc: usize,
    pub w_sym: usize,
    pub w_pos: usize,
    pub b: usize,
    pub u: usize,
    pub c: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(vocab: usize, d: usize, h: usize, p: usize) -> Self {
        let tok = 0;
        let sym = tok + vocab * d;
        let w_enc = sym + N_SYMBOLS * d;
        let w_sym = w_enc + h * d;
        let w_pos = w_sym + h * d;
        let b = w_pos + p * h;
        let u = b + h;
        let c = u + N_SYMBOLS * h;
        let total = c + N_SYMBOLS;
        Self { vocab, d, h, p, tok, sym, w_enc, w_sym, w_pos, b, u, c, total }
    }

    /// First parameter after the token embedding table.
    pub fn dense_start(&self) -> usize {
        self.sym
    }

    pub fn dense_len(&self) -> usize {
        self.total - self.sym
    }
}

/// Model input and target as ids and symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub task: Task,
    pub tokens: Vec<u32>,
    /// Target symbols, EOS included.
    pub target: Vec<u8>,
}

/// Gradient with sparse token-embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Grad {
    pub tokens: BTreeMap<u32, Vec<f64>>,
    /// Everything from the symbol embeddings on, indexed from `Layout::sym`.
    pub dense: Vec<f64>,
}

impl Grad {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            tokens: BTreeMap::new(),
            dense: vec![0.0; layout.dense_len()],
        }
    }

    pub fn norm(&self) -> f64 {
        let t: f64 = self.tokens.values().flatten().map(|x| x * x).sum();
        let d: f64 = self.dense.iter().map(|x| x * x).sum();
        (t + d).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.tokens.values_mut().flatten() {
            *x *= s;
        }
        for x in &mut self.dense {
            *x *= s;
        }
    }

    /// Gradient of one flat parameter coordinate.
    pub fn get(&self, layout: &Layout, index: usize) -> f64 {
        if index < layout.sym {
            let row = (index / layout.d) as u32;
            self.tokens
                .get(&row)
                .map_or(0.0, |r| r[index % layout.d])
        } else {
            self.dense[index - layout.sym]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Mean of the per-example losses.
    pub mean: f64,
    /// Mean per-symbol negative log-likelihood of each example.
    pub per_example: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyGenModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Vec<f64>,
    layout: Layout,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|x| x - z).collect()
}

/// Task token (the reserved ids below `TASK_TOKENS`) and content tokens.
fn split_task(tokens: &[u32]) -> (Option<u32>, &[u32]) {
    match tokens.split_first() {
        Some((&t, rest)) if t < TASK_TOKENS => (Some(t), rest),
        _ => (None, tokens),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl TinyGenModel {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        if config.d == 0 || config.h == 0 {
            return Err(contract("model widths must be positive"));
        }
        if config.max_positions < 2 {
            return Err(contract("max_positions must be at least 2"));
        }
        if !(config.embedding_std > 0.0 && config.embedding_std.is_finite()) {
            return Err(contract("embedding_std must be positive"));
        }
        let layout = Layout::new(vocab.len(), config.d, config.h, config.max_positions);
        let mut params = vec![0.0; layout.total];
        let mut fill = |range: std::ops::Range<usize>, std: f64, label: &str| {
            let mut rng = seed::rng(seed::derive(seed, label));
            let normal = Normal::new(0.0, std).expect("positive std");
            for x in &mut params[range] {
                *x = normal.sample(&mut rng);
            }
        };
        let inv_sqrt_d = 1.0 / (config.d as f64).sqrt();
        let inv_sqrt_h = 1.0 / (config.h as f64).sqrt();
        fill(layout.tok..layout.sym, config.embedding_std, "init-tok");
        fill(layout.sym..layout.w_enc, 1.0, "init-sym");
        fill(layout.w_enc..layout.w_sym, inv_sqrt_d, "init-wenc");
        fill(layout.w_sym..layout.w_pos, inv_sqrt_d, "init-wsym");
        fill(layout.w_pos..layout.b, 1.0, "init-wpos");
        fill(layout.u..layout.c, 0.01 * inv_sqrt_h, "init-u");
        Ok(Self { config, vocab, params, layout })
    }

    /// Rebuild from stored parameters.
    pub fn from_parts(config: ModelConfig, vocab: Vocab, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(vocab.len(), config.d, config.h, config.max_positions);
        if params.len() != layout.total {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, vocab, params, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    fn tok_row(&self, t: u32) -> &[f64] {
        let d = self.layout.d;
        let o = self.layout.tok + t as usize * d;
        &self.params[o..o + d]
    }

    fn sym_row(&self, s: u8) -> &[f64] {
        let d = self.layout.d;
        let o = self.layout.sym + s as usize * d;
        &self.params[o..o + d]
    }

    fn w_enc_row(&self, i: usize) -> &[f64] {
        let d = self.layout.d;
        let o = self.layout.w_enc + i * d;
        &self.params[o..o + d]
    }

    fn w_sym_row(&self, i: usize) -> &[f64] {
        let d = self.layout.d;
        let o = self.layout.w_sym + i * d;
        &self.params[o..o + d]
    }

    fn w_pos_row(&self, t: usize) -> &[f64] {
        let h = self.layout.h;
        let o = self.layout.w_pos + t * h;
        &self.params[o..o + h]
    }

    fn u_row(&self, s: usize) -> &[f64] {
        let h = self.layout.h;
        let o = self.layout.u + s * h;
        &self.params[o..o + h]
    }

    /// Encoding of already-mapped token ids; zero for an empty input. A
    /// leading task token is added to the mean of the content tokens rather
    /// than averaged with them, so its weight does not shrink with length.
    pub fn encode_tokens(&self, tokens: &[u32]) -> Vec<f64> {
        let d = self.layout.d;
        let mut m = vec![0.0; d];
        let (task, content) = split_task(tokens);
        if !content.is_empty() {
            for &t in content {
                axpy(&mut m, 1.0, self.tok_row(t));
            }
            let inv = 1.0 / content.len() as f64;
            m.iter_mut().for_each(|x| *x *= inv);
        }
        if let Some(t) = task {
            axpy(&mut m, 1.0, self.tok_row(t));
        }
        m.iter_mut().for_each(|x| *x = x.tanh());
        m
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_tokens(&self.vocab.encode(text))
    }

    /// `W_sym E_sym[s]` for every symbol, row per symbol.
    pub fn symbol_projection(&self) -> Vec<f64> {
        let h = self.layout.h;
        let mut out = vec![0.0; N_SYMBOLS * h];
        for s in 0..N_SYMBOLS {
            let e = self.sym_row(s as u8);
            for i in 0..h {
                out[s * h + i] = dot(self.w_sym_row(i), e);
            }
        }
        out
    }

    /// `W_enc enc + b`, the position- and symbol-independent part of `a_t`.
    pub fn hidden_base(&self, enc: &[f64]) -> Vec<f64> {
        let h = self.layout.h;
        (0..h)
            .map(|i| dot(self.w_enc_row(i), enc) + self.params[self.layout.b + i])
            .collect()
    }

    /// Hidden activations and logits of one step given the cached parts.
    pub fn step_from_parts(
        &self,
        base: &[f64],
        sym_proj: &[f64],
        prev: u8,
        pos: usize,
        hidden: &mut [f64],
        logits: &mut [f64; N_SYMBOLS],
    ) {
        let h = self.layout.h;
        let sp = &sym_proj[prev as usize * h..(prev as usize + 1) * h];
        let wp = self.w_pos_row(pos);
        for i in 0..h {
            hidden[i] = (base[i] + sp[i] + wp[i]).tanh();
        }
        for (s, l) in logits.iter_mut().enumerate() {
            *l = dot(self.u_row(s), hidden) + self.params[self.layout.c + s];
        }
    }

    pub fn step_logits(&self, enc: &[f64], prev: u8, position: usize) -> Result<[f64; N_SYMBOLS]> {
        if position >= self.layout.p {
            return Err(contract(format!(
                "position {position} beyond the {} decoder positions",
                self.layout.p
            )));
        }
        if enc.len() != self.layout.d || prev as usize >= N_SYMBOLS {
            return Err(contract("encoding width or previous symbol out of range"));
        }
        let base = self.hidden_base(enc);
        let sym_proj = self.symbol_projection();
        let mut hidden = vec![0.0; self.layout.h];
        let mut logits = [0.0; N_SYMBOLS];
        self.step_from_parts(&base, &sym_proj, prev, position, &mut hidden, &mut logits);
        Ok(logits)
    }

    pub fn prepare(&self, example: &TrainingExample) -> Result<EncodedExample> {
        let target = encode_target(&example.target)?;
        if target.len() > self.layout.p {
            return Err(contract(format!(
                "target {:?} needs {} symbols, decoder has {}",
                example.target,
                target.len(),
                self.layout.p
            )));
        }
        Ok(EncodedExample {
            task: example.task,
            tokens: self.vocab.encode(&example.input_text),
            target,
        })
    }

    /// Mean per-symbol teacher-forced NLL of one example.
    pub fn example_loss(&self, ex: &EncodedExample) -> f64 {
        let enc = self.encode_tokens(&ex.tokens);
        let base = self.hidden_base(&enc);
        let sym_proj = self.symbol_projection();
        self.sequence_nll(&base, &sym_proj, &ex.target)
    }

    fn sequence_nll(&self, base: &[f64], sym_proj: &[f64], target: &[u8]) -> f64 {
        let mut hidden = vec![0.0; self.layout.h];
        let mut logits = [0.0; N_SYMBOLS];
        let mut prev = BOS;
        let mut nll = 0.0;
        for (t, &y) in target.iter().enumerate() {
            self.step_from_parts(base, sym_proj, prev, t, &mut hidden, &mut logits);
            nll -= log_softmax(&logits)[y as usize];
            prev = y;
        }
        nll / target.len() as f64
    }

    /// Batch loss (mean of example losses) and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[EncodedExample]) -> Result<(BatchLoss, Grad)> {
        if batch.is_empty() {
            return Err(contract("empty batch"));
        }
        let l = self.layout;
        let (d, h) = (l.d, l.h);
        let mut g = Grad::zeros(&l);
        let sym_proj = self.symbol_projection();
        // Summed pre-activation gradients per previous symbol.
        let mut da_prev = vec![0.0; N_SYMBOLS * h];
        let weight = 1.0 / batch.len() as f64;
        let mut per_example = Vec::with_capacity(batch.len());

        let mut hidden = vec![0.0; h];
        let mut logits = [0.0; N_SYMBOLS];
        let mut dh = vec![0.0; h];
        let mut da_sum = vec![0.0; h];
        let dn = |idx: usize| idx - l.sym;
        for ex in batch {
            if ex.target.is_empty() || ex.target.len() > l.p {
                return Err(contract("target length outside 1..=max_positions"));
            }
            let enc = self.encode_tokens(&ex.tokens);
            let base = self.hidden_base(&enc);
            let n_sym = ex.target.len() as f64;
            da_sum.iter_mut().for_each(|x| *x = 0.0);
            let mut nll = 0.0;
            let mut prev = BOS;
            for (t, &y) in ex.target.iter().enumerate() {
                self.step_from_parts(&base, &sym_proj, prev, t, &mut hidden, &mut logits);
                let logp = log_softmax(&logits);
                nll -= logp[y as usize];
                dh.iter_mut().for_each(|x| *x = 0.0);
                for s in 0..N_SYMBOLS {
                    let mut dl = logp[s].exp();
                    if s == y as usize {
                        dl -= 1.0;
                    }
                    dl *= weight / n_sym;
                    let uo = dn(l.u + s * h);
                    axpy(&mut g.dense[uo..uo + h], dl, &hidden);
                    g.dense[dn(l.c + s)] += dl;
                    axpy(&mut dh, dl, self.u_row(s));
                }
                let po = dn(l.w_pos + t * h);
                let pa = prev as usize * h;
                for i in 0..h {
                    let da = dh[i] * (1.0 - hidden[i] * hidden[i]);
                    g.dense[po + i] += da;
                    da_prev[pa + i] += da;
                    da_sum[i] += da;
                }
                prev = y;
            }
            per_example.push(nll / n_sym);

            let bo = dn(l.b);
            let mut denc = vec![0.0; d];
            for i in 0..h {
                g.dense[bo + i] += da_sum[i];
                let wo = dn(l.w_enc + i * d);
                axpy(&mut g.dense[wo..wo + d], da_sum[i], &enc);
                axpy(&mut denc, da_sum[i], self.w_enc_row(i));
            }
            let dm: Vec<f64> = denc.iter().zip(&enc).map(|(g, e)| g * (1.0 - e * e)).collect();
            let (task, content) = split_task(&ex.tokens);
            if let Some(t) = task {
                let row = g.tokens.entry(t).or_insert_with(|| vec![0.0; d]);
                axpy(row, 1.0, &dm);
            }
            if !content.is_empty() {
                let inv = 1.0 / content.len() as f64;
                for &t in content {
                    let row = g.tokens.entry(t).or_insert_with(|| vec![0.0; d]);
                    axpy(row, inv, &dm);
                }
            }
        }

        for s in 0..N_SYMBOLS {
            let da = &da_prev[s * h..(s + 1) * h];
            let e = self.sym_row(s as u8).to_vec();
            let so = dn(l.sym + s * d);
            for i in 0..h {
                if da[i] == 0.0 {
                    continue;
                }
                let wo = dn(l.w_sym + i * d);
                axpy(&mut g.dense[wo..wo + d], da[i], &e);
                let w = self.w_sym_row(i).to_vec();
                axpy(&mut g.dense[so..so + d], da[i], &w);
            }
        }

        let mean = per_example.iter().sum::<f64>() * weight;
        Ok((BatchLoss { mean, per_example }, g))
    }

    /// Batch loss without a gradient.
    pub fn batch_loss(&self, batch: &[EncodedExample]) -> f64 {
        let sym_proj = self.symbol_projection();
        let total: f64 = batch
            .iter()
            .map(|ex| {
                let enc = self.encode_tokens(&ex.tokens);
                self.sequence_nll(&self.hidden_base(&enc), &sym_proj, &ex.target)
            })
            .sum();
        total / batch.len() as f64
    }
}
