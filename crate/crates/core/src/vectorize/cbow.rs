//! Word2Vec CBOW trainer with negative sampling.
//!
//! For every position the context vectors inside the window are averaged into
//! `h`, and the loss
//!
//! ```text
//! L = -ln σ(u_center · h) - Σ_k ln σ(-u_neg_k · h)
//! ```
//!
//! is minimised by plain SGD over input vectors `v` and output vectors `u`.
//! Noise words are drawn from the unigram distribution raised to 0.75. The
//! learning rate decays linearly from `initial_lr` to `initial_lr / 10_000`
//! across all scheduled updates.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedDocument;
use crate::rng::SeededRng;

const NOISE_POWER: f64 = 0.75;
const FINAL_LR_FACTOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CbowParams {
    pub dim: usize,
    /// Context half-width.
    pub window: usize,
    /// Noise samples per positive example.
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// Corpus frequency floor for a term to get a vector.
    pub min_count: u64,
}

impl Default for CbowParams {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            seed: 42,
            min_count: 2,
        }
    }
}

impl CbowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("CBOW {what}")));
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negative samples must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Trained input and output vectors, both stored row-major (`len() x dim()`).
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    params: CbowParams,
}

impl WordEmbeddings {
    pub fn from_parts(
        terms: Vec<String>,
        dim: usize,
        input: Vec<f64>,
        output: Vec<f64>,
        params: CbowParams,
    ) -> Result<Self> {
        if dim == 0 || input.len() != terms.len() * dim || output.len() != terms.len() * dim {
            return Err(Error::Domain(
                "embedding matrix shape does not match vocabulary".into(),
            ));
        }
        if input.iter().chain(&output).any(|v| !v.is_finite()) {
            return Err(Error::Domain(
                "embedding contains non-finite components".into(),
            ));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Domain(format!("duplicate term '{t}'")));
            }
        }
        Ok(Self {
            terms,
            index,
            dim,
            input,
            output,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn params(&self) -> &CbowParams {
        &self.params
    }

    pub fn input_matrix(&self) -> &[f64] {
        &self.input
    }

    pub fn output_matrix(&self) -> &[f64] {
        &self.output
    }

    pub fn input_vector(&self, term: &str) -> Option<&[f64]> {
        self.index(term).map(|i| self.input_row(i))
    }

    pub fn output_vector(&self, term: &str) -> Option<&[f64]> {
        self.index(term).map(|i| {
            let i = i as usize;
            &self.output[i * self.dim..(i + 1) * self.dim]
        })
    }

    fn input_row(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.input_vector(a)?, self.input_vector(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(dot / (nx * ny))
    }

    /// Text export: a `"V D"` header line, then `term c1 ... cD` per term.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, t) in self.terms.iter().enumerate() {
            write!(w, "{t}")?;
            for v in self.input_row(i as u32) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Unweighted mean of the input vectors of in-vocabulary tokens, or the zero
/// vector when none is known. Terms are summed in index order, so the result
/// does not depend on token order.
pub fn embed_doc(doc: &TokenizedDocument, emb: &WordEmbeddings) -> Vec<f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(i) = emb.index(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let mut out = vec![0.0; emb.dim];
    let total: usize = counts.values().sum();
    if total == 0 {
        return out;
    }
    for (i, c) in counts {
        for (o, v) in out.iter_mut().zip(emb.input_row(i)) {
            *o += c as f64 * v;
        }
    }
    for o in &mut out {
        *o /= total as f64;
    }
    out
}

/// One training example: context word ids, the center id and its noise ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CbowExample {
    pub context: Vec<u32>,
    pub center: u32,
    pub negatives: Vec<u32>,
}

/// Row access for parameter matrices; lets the single-threaded trainer use a
/// plain `Vec<f64>` and the hogwild trainer a shared atomic matrix.
trait Rows {
    fn read(&self, row: u32, out: &mut [f64]);
    fn add_scaled(&mut self, row: u32, delta: &[f64], scale: f64);
}

struct DenseRows<'a> {
    data: &'a mut [f64],
    dim: usize,
}

impl Rows for DenseRows<'_> {
    fn read(&self, row: u32, out: &mut [f64]) {
        let s = row as usize * self.dim;
        out.copy_from_slice(&self.data[s..s + self.dim]);
    }

    fn add_scaled(&mut self, row: u32, delta: &[f64], scale: f64) {
        let s = row as usize * self.dim;
        for (p, d) in self.data[s..s + self.dim].iter_mut().zip(delta) {
            *p += scale * d;
        }
    }
}

/// Lock-free shared matrix; concurrent updates may overwrite each other.
#[derive(Clone, Copy)]
struct AtomicRows<'a> {
    data: &'a [AtomicU64],
    dim: usize,
}

impl Rows for AtomicRows<'_> {
    fn read(&self, row: u32, out: &mut [f64]) {
        let s = row as usize * self.dim;
        for (o, a) in out.iter_mut().zip(&self.data[s..s + self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add_scaled(&mut self, row: u32, delta: &[f64], scale: f64) {
        let s = row as usize * self.dim;
        for (a, d) in self.data[s..s + self.dim].iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + scale * d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Buffers for one example's forward/backward pass.
struct Scratch {
    dim: usize,
    row: Vec<f64>,
    h: Vec<f64>,
    grad_h: Vec<f64>,
    /// Gradient of each target's output row, `(1 + negatives) x dim`.
    out_grads: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            row: vec![0.0; dim],
            h: vec![0.0; dim],
            grad_h: vec![0.0; dim],
            out_grads: Vec::new(),
        }
    }

    /// Loss of `ex`, leaving `∂L/∂h` in `grad_h` and `∂L/∂u_k` in `out_grads`.
    /// The gradient for each context input vector is `grad_h / |context|`.
    fn forward_backward(&mut self, ex: &CbowExample, input: &impl Rows, output: &impl Rows) -> f64 {
        let d = self.dim;
        self.h.iter_mut().for_each(|v| *v = 0.0);
        for &c in &ex.context {
            input.read(c, &mut self.row);
            for (h, r) in self.h.iter_mut().zip(&self.row) {
                *h += r;
            }
        }
        let inv = 1.0 / ex.context.len() as f64;
        self.h.iter_mut().for_each(|v| *v *= inv);

        self.grad_h.iter_mut().for_each(|v| *v = 0.0);
        self.out_grads.clear();
        self.out_grads.resize((1 + ex.negatives.len()) * d, 0.0);
        let mut loss = 0.0;
        let targets =
            std::iter::once((ex.center, 1.0)).chain(ex.negatives.iter().map(|&n| (n, 0.0)));
        for (k, (target, label)) in targets.enumerate() {
            output.read(target, &mut self.row);
            let f: f64 = self.row.iter().zip(&self.h).map(|(u, h)| u * h).sum();
            loss += if label > 0.0 {
                neg_log_sigmoid(f)
            } else {
                neg_log_sigmoid(-f)
            };
            let coef = sigmoid(f) - label;
            for j in 0..d {
                self.grad_h[j] += coef * self.row[j];
                self.out_grads[k * d + j] = coef * self.h[j];
            }
        }
        loss
    }

    fn sgd_step(
        &mut self,
        ex: &CbowExample,
        lr: f64,
        input: &mut impl Rows,
        output: &mut impl Rows,
    ) {
        self.forward_backward(ex, input, output);
        let d = self.dim;
        let targets = std::iter::once(ex.center).chain(ex.negatives.iter().copied());
        for (k, target) in targets.enumerate() {
            output.add_scaled(target, &self.out_grads[k * d..(k + 1) * d], -lr);
        }
        let scale = -lr / ex.context.len() as f64;
        for &c in &ex.context {
            input.add_scaled(c, &self.grad_h, scale);
        }
    }
}

/// Builds examples from id sequences and a noise distribution.
struct ExampleSampler {
    window: usize,
    negatives: usize,
    noise_cdf: Vec<f64>,
}

impl ExampleSampler {
    fn new(window: usize, negatives: usize, freqs: &[u64]) -> Self {
        let weights: Vec<f64> = freqs
            .iter()
            .map(|&f| (f as f64).powf(NOISE_POWER))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let noise_cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self {
            window,
            negatives,
            noise_cdf,
        }
    }

    fn draw_noise(&self, rng: &mut SeededRng) -> u32 {
        let u = rng.uniform();
        let i = self.noise_cdf.partition_point(|&c| c <= u);
        i.min(self.noise_cdf.len() - 1) as u32
    }

    /// Fills `ex` for position `pos`; returns false when there is no context.
    /// Noise draws that hit the center word are discarded, not redrawn.
    fn example_at(
        &self,
        seq: &[u32],
        pos: usize,
        rng: &mut SeededRng,
        ex: &mut CbowExample,
    ) -> bool {
        let lo = pos.saturating_sub(self.window);
        let hi = (pos + self.window).min(seq.len() - 1);
        ex.context.clear();
        ex.context
            .extend((lo..=hi).filter(|&j| j != pos).map(|j| seq[j]));
        if ex.context.is_empty() {
            return false;
        }
        ex.center = seq[pos];
        ex.negatives.clear();
        for _ in 0..self.negatives {
            let n = self.draw_noise(rng);
            if n != ex.center {
                ex.negatives.push(n);
            }
        }
        true
    }
}

struct Prepared {
    terms: Vec<String>,
    freqs: Vec<u64>,
    sequences: Vec<Vec<u32>>,
}

fn prepare(train_docs: &[TokenizedDocument], params: &CbowParams) -> Result<Prepared> {
    params.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Precondition(
            "CBOW needs at least one training document".into(),
        ));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for d in train_docs {
        for t in &d.tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let (terms, freqs): (Vec<String>, Vec<u64>) = counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count)
        .map(|(t, c)| (t.to_string(), c))
        .unzip();
    if terms.is_empty() {
        return Err(Error::Training(format!(
            "no term occurs at least {} times",
            params.min_count
        )));
    }
    let index: HashMap<&str, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let sequences = train_docs
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect()
        })
        .collect();
    Ok(Prepared {
        terms,
        freqs,
        sequences,
    })
}

fn init_input(v: usize, dim: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..v * dim)
        .map(|_| (rng.uniform() - 0.5) / dim as f64)
        .collect()
}

fn learning_rate(params: &CbowParams, done: u64, total: u64) -> f64 {
    let progress = done as f64 / total.max(1) as f64;
    params.initial_lr * (1.0 - progress * (1.0 - FINAL_LR_FACTOR))
}

/// Single-threaded, bit-reproducible training.
pub fn train_cbow(train_docs: &[TokenizedDocument], params: &CbowParams) -> Result<WordEmbeddings> {
    train_cbow_with_threads(train_docs, params, 1)
}

/// With `threads > 1` documents are split into contiguous chunks trained
/// concurrently against shared vectors (hogwild). Results then depend on
/// thread scheduling and are not reproducible.
pub fn train_cbow_with_threads(
    train_docs: &[TokenizedDocument],
    params: &CbowParams,
    threads: usize,
) -> Result<WordEmbeddings> {
    let prep = prepare(train_docs, params)?;
    let dim = params.dim;
    let v = prep.terms.len();
    let mut rng = SeededRng::new(params.seed);
    let mut input = init_input(v, dim, &mut rng);
    let mut output = vec![0.0; v * dim];
    let sampler = ExampleSampler::new(params.window, params.negatives, &prep.freqs);
    let positions: u64 = prep.sequences.iter().map(|s| s.len() as u64).sum();
    let total = positions * params.epochs as u64;

    if threads <= 1 {
        let mut scratch = Scratch::new(dim);
        let mut ex = CbowExample::default();
        let mut in_rows = DenseRows {
            data: &mut input,
            dim,
        };
        let mut out_rows = DenseRows {
            data: &mut output,
            dim,
        };
        let mut done = 0u64;
        for _ in 0..params.epochs {
            for seq in &prep.sequences {
                for pos in 0..seq.len() {
                    let lr = learning_rate(params, done, total);
                    done += 1;
                    if sampler.example_at(seq, pos, &mut rng, &mut ex) {
                        scratch.sgd_step(&ex, lr, &mut in_rows, &mut out_rows);
                    }
                }
            }
        }
    } else {
        let shared_in: Vec<AtomicU64> = input.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        let shared_out: Vec<AtomicU64> =
            output.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        let done = AtomicU64::new(0);
        let chunk = prep.sequences.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (t, seqs) in prep.sequences.chunks(chunk.max(1)).enumerate() {
                let (shared_in, shared_out, done, sampler) =
                    (&shared_in, &shared_out, &done, &sampler);
                s.spawn(move || {
                    let mut rng = SeededRng::new(params.seed.wrapping_add(1 + t as u64));
                    let mut scratch = Scratch::new(dim);
                    let mut ex = CbowExample::default();
                    let mut in_rows = AtomicRows {
                        data: shared_in,
                        dim,
                    };
                    let mut out_rows = AtomicRows {
                        data: shared_out,
                        dim,
                    };
                    for _ in 0..params.epochs {
                        for seq in seqs {
                            for pos in 0..seq.len() {
                                let lr = learning_rate(
                                    params,
                                    done.fetch_add(1, Ordering::Relaxed),
                                    total,
                                );
                                if sampler.example_at(seq, pos, &mut rng, &mut ex) {
                                    scratch.sgd_step(&ex, lr, &mut in_rows, &mut out_rows);
                                }
                            }
                        }
                    }
                });
            }
        });
        input = shared_in
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect();
        output = shared_out
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect();
    }

    WordEmbeddings::from_parts(prep.terms, dim, input, output, params.clone())
        .map_err(|e| Error::Training(format!("training diverged: {e}")))
}

/// Summed negative-sampling loss over a fixed list of examples, with its
/// analytic gradient. Uses the same forward/backward pass as the trainer.
#[derive(Debug, Clone)]
pub struct CbowObjective {
    pub vocab_size: usize,
    pub dim: usize,
    pub examples: Vec<CbowExample>,
}

impl CbowObjective {
    /// One pass of examples over `docs`, sampled exactly as the trainer does
    /// for its first epoch.
    pub fn from_documents(docs: &[TokenizedDocument], params: &CbowParams) -> Result<Self> {
        let prep = prepare(docs, params)?;
        let mut rng = SeededRng::new(params.seed);
        // Skip the initialisation draws so sampling matches the trainer.
        let _ = init_input(prep.terms.len(), params.dim, &mut rng);
        let sampler = ExampleSampler::new(params.window, params.negatives, &prep.freqs);
        let mut examples = Vec::new();
        let mut ex = CbowExample::default();
        for seq in &prep.sequences {
            for pos in 0..seq.len() {
                if sampler.example_at(seq, pos, &mut rng, &mut ex) {
                    examples.push(ex.clone());
                }
            }
        }
        Ok(Self {
            vocab_size: prep.terms.len(),
            dim: params.dim,
            examples,
        })
    }

    pub fn loss(&self, input: &[f64], output: &[f64]) -> f64 {
        self.loss_and_gradient(input, output).0
    }

    /// Returns `(loss, ∂L/∂input, ∂L/∂output)`, matrices row-major.
    pub fn loss_and_gradient(&self, input: &[f64], output: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        assert_eq!(input.len(), self.vocab_size * d);
        assert_eq!(output.len(), self.vocab_size * d);
        let mut inp = input.to_vec();
        let mut out = output.to_vec();
        let in_rows = DenseRows {
            data: &mut inp,
            dim: d,
        };
        let out_rows = DenseRows {
            data: &mut out,
            dim: d,
        };
        let mut g_in = vec![0.0; input.len()];
        let mut g_out = vec![0.0; output.len()];
        let mut scratch = Scratch::new(d);
        let mut loss = 0.0;
        for ex in &self.examples {
            loss += scratch.forward_backward(ex, &in_rows, &out_rows);
            let targets = std::iter::once(ex.center).chain(ex.negatives.iter().copied());
            for (k, t) in targets.enumerate() {
                let s = t as usize * d;
                for j in 0..d {
                    g_out[s + j] += scratch.out_grads[k * d + j];
                }
            }
            let inv = 1.0 / ex.context.len() as f64;
            for &c in &ex.context {
                let s = c as usize * d;
                for j in 0..d {
                    g_in[s + j] += scratch.grad_h[j] * inv;
                }
            }
        }
        (loss, g_in, g_out)
    }
}
