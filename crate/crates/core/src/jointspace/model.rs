use rand::Rng;
use serde::{Deserialize, Serialize};
use shapeedit_autodiff::{Graph, Tensor, Var};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{Bound, Linear, ParamId, ParamSet};
use crate::rng::stream_rng;
use crate::shapeworld::text;

pub const CHECKPOINT_KIND: &str = "jointspace";

/// Rule selecting utterances presumed independent of a given one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningStrategy {
    /// Same context and same labeler.
    Multiutterance,
    /// Same context, any labeler.
    SharedContext,
    /// Batch items from other contexts.
    Random,
}

impl MiningStrategy {
    pub fn name(self) -> &'static str {
        match self {
            MiningStrategy::Multiutterance => "multiutterance",
            MiningStrategy::SharedContext => "shared_context",
            MiningStrategy::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub joint_dim: usize,
    pub experts: usize,
    pub expert_hidden: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Weight of the orthogonality loss; 0 trains the plain binary objective.
    pub lambda: f64,
    pub mining: MiningStrategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            joint_dim: 32,
            experts: 6,
            expert_hidden: 64,
            embed_dim: 64,
            max_len: 16,
            layers: 2,
            heads: 2,
            ff_dim: 128,
            lambda: 1.0,
            mining: MiningStrategy::Multiutterance,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.joint_dim,
            self.experts,
            self.expert_hidden,
            self.embed_dim,
            self.max_len,
            self.layers,
            self.heads,
            self.ff_dim,
            self.batch_size,
            self.epochs,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config("joint-space sizes must be positive".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda {} must be finite and non-negative",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Short label: the mining strategy, or `baseline` when lambda is 0.
    pub fn variant(&self) -> &'static str {
        if self.lambda == 0.0 {
            "baseline"
        } else {
            self.mining.name()
        }
    }
}

#[derive(Clone, Debug)]
struct AttentionLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    ff_in: Linear,
    ff_out: Linear,
}

#[derive(Clone, Debug)]
struct Expert {
    input: Linear,
    hidden: Linear,
    output: Linear,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointMeta {
    pub seed: u64,
    pub latent_dim: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Per epoch: mean training loss and validation accuracy.
    pub history: Vec<(f64, f64)>,
    pub autoencoder_hash: String,
}

/// Text encoder, expert bank and voting network sharing one parameter set.
#[derive(Clone, Debug)]
pub struct JointModel {
    pub config: JointConfig,
    pub meta: JointMeta,
    params: ParamSet,
    embed: ParamId,
    position: ParamId,
    layers: Vec<AttentionLayer>,
    text_out: Linear,
    experts: Vec<Expert>,
    vote: Linear,
    log_temperature: ParamId,
}

/// Text-side quantities of one utterance: unit embedding and expert weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextCode {
    pub embedding: Vec<f64>,
    pub weights: Vec<f64>,
    pub truncated: bool,
}

impl JointModel {
    pub fn new(config: JointConfig, latent_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, "jointspace-init", 0);
        let mut ps = ParamSet::new();
        let e = config.embed_dim;
        let embed = ps.add("text.embed", small_normal(text::vocab_size(), e, &mut rng));
        let position = ps.add("text.position", small_normal(config.max_len, e, &mut rng));
        let layers = (0..config.layers)
            .map(|l| AttentionLayer {
                query: Linear::new(&mut ps, &format!("text.{l}.query"), e, e, &mut rng),
                key: Linear::new(&mut ps, &format!("text.{l}.key"), e, e, &mut rng),
                value: Linear::new(&mut ps, &format!("text.{l}.value"), e, e, &mut rng),
                output: Linear::new(&mut ps, &format!("text.{l}.output"), e, e, &mut rng),
                ff_in: Linear::new(
                    &mut ps,
                    &format!("text.{l}.ff_in"),
                    e,
                    config.ff_dim,
                    &mut rng,
                ),
                ff_out: Linear::new(
                    &mut ps,
                    &format!("text.{l}.ff_out"),
                    config.ff_dim,
                    e,
                    &mut rng,
                ),
            })
            .collect();
        let text_out = Linear::new(&mut ps, "text.out", e, config.joint_dim, &mut rng);
        let h = config.expert_hidden;
        let experts = (0..config.experts)
            .map(|i| Expert {
                input: Linear::new(
                    &mut ps,
                    &format!("expert.{i}.input"),
                    latent_dim,
                    h,
                    &mut rng,
                ),
                hidden: Linear::new(&mut ps, &format!("expert.{i}.hidden"), h, h, &mut rng),
                output: Linear::new(
                    &mut ps,
                    &format!("expert.{i}.output"),
                    h,
                    config.joint_dim,
                    &mut rng,
                ),
            })
            .collect();
        let vote = Linear::new(&mut ps, "vote", config.joint_dim, config.experts, &mut rng);
        // temperature = exp(0) = 1
        let log_temperature = ps.add("vote.log_temperature", Tensor::scalar(0.0));
        Ok(Self {
            meta: JointMeta {
                seed,
                latent_dim,
                ..JointMeta::default()
            },
            config,
            params: ps,
            embed,
            position,
            layers,
            text_out,
            experts,
            vote,
            log_temperature,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.meta.latent_dim
    }

    pub fn temperature(&self) -> f64 {
        self.params.get(self.log_temperature).values()[0].exp()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.params.bind(g, trainable)
    }

    fn clip<'a>(&self, tokens: &'a [u32]) -> &'a [u32] {
        &tokens[..tokens.len().min(self.config.max_len)]
    }

    /// Unit embeddings `[n, joint]` of several token sequences, encoded together.
    pub fn encode_texts_graph(&self, g: &mut Graph, b: &Bound, texts: &[&[u32]]) -> Result<Var> {
        if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
            return Err(Error::Argument(
                "cannot encode an empty token sequence".into(),
            ));
        }
        let clipped: Vec<&[u32]> = texts.iter().map(|t| self.clip(t)).collect();
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut starts = Vec::with_capacity(clipped.len());
        for t in &clipped {
            starts.push(ids.len());
            for (p, &id) in t.iter().enumerate() {
                ids.push(id.min(text::vocab_size() as u32 - 1) as usize);
                positions.push(p);
            }
        }
        let tok = g.gather_rows(b.var(self.embed), &ids)?;
        let pos = g.gather_rows(b.var(self.position), &positions)?;
        let mut x = g.add(tok, pos)?;
        let head_dim = self.config.embed_dim / self.config.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        for layer in &self.layers {
            let hn = g.layer_norm_rows(x)?;
            let q = layer.query.forward(g, b, hn)?;
            let k = layer.key.forward(g, b, hn)?;
            let v = layer.value.forward(g, b, hn)?;
            let mut per_text = Vec::with_capacity(clipped.len());
            for (t, &start) in clipped.iter().zip(&starts) {
                let (qt, kt, vt) = (
                    g.slice(q, start, t.len())?,
                    g.slice(k, start, t.len())?,
                    g.slice(v, start, t.len())?,
                );
                let mut heads = Vec::with_capacity(self.config.heads);
                for h in 0..self.config.heads {
                    let qh = g.slice_cols(qt, h * head_dim, head_dim)?;
                    let kh = g.slice_cols(kt, h * head_dim, head_dim)?;
                    let vh = g.slice_cols(vt, h * head_dim, head_dim)?;
                    let kh = g.transpose(kh)?;
                    let scores = g.matmul(qh, kh)?;
                    let scores = g.scale(scores, scale);
                    let attn = g.softmax(scores)?;
                    heads.push(g.matmul(attn, vh)?);
                }
                per_text.push(if heads.len() == 1 {
                    heads[0]
                } else {
                    g.concat_cols(&heads)?
                });
            }
            let a = if per_text.len() == 1 {
                per_text[0]
            } else {
                g.concat(&per_text)?
            };
            let a = layer.output.forward(g, b, a)?;
            x = g.add(x, a)?;
            let hn = g.layer_norm_rows(x)?;
            let f = layer.ff_in.forward(g, b, hn)?;
            let f = g.relu(f);
            let f = layer.ff_out.forward(g, b, f)?;
            x = g.add(x, f)?;
        }
        let first = g.gather_rows(x, &starts)?;
        let first = g.layer_norm_rows(first)?;
        let out = self.text_out.forward(g, b, first)?;
        Ok(g.normalize_rows(out)?)
    }

    /// Voting weights `[n, experts]` for unit embeddings `[n, joint]`.
    pub fn vote_graph(&self, g: &mut Graph, b: &Bound, embeddings: Var) -> Result<Var> {
        let logits = self.vote.forward(g, b, embeddings)?;
        let t = g.exp(b.var(self.log_temperature));
        Ok(g.softmax_temperature(logits, t)?)
    }

    /// Output `[n, joint]` of one expert for latents `[n, latent]`.
    pub fn expert_graph(&self, g: &mut Graph, b: &Bound, expert: usize, x: Var) -> Result<Var> {
        let e = &self.experts[expert];
        let h1 = e.input.forward(g, b, x)?;
        let h1 = g.relu(h1);
        let h2 = e.hidden.forward(g, b, h1)?;
        let h2 = g.relu(h2);
        let h2 = g.add(h2, h1)?;
        e.output.forward(g, b, h2)
    }

    /// Fused shape differences `[n, joint]`: per row, sum over experts of
    /// `weights[:, e] * (f_e(targets) - f_e(sources))`.
    pub fn fused_difference_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        sources: Var,
        targets: Var,
        weights: Var,
    ) -> Result<Var> {
        let n = g.shape(sources)[0];
        let both = g.concat(&[sources, targets])?;
        let mut fused = None;
        for e in 0..self.config.experts {
            let out = self.expert_graph(g, b, e, both)?;
            let (fs, ft) = (g.slice(out, 0, n)?, g.slice(out, n, n)?);
            let d = g.sub(ft, fs)?;
            let w = g.slice_cols(weights, e, 1)?;
            let term = g.mul_col(d, w)?;
            fused = Some(match fused {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok(fused.expect("at least one expert"))
    }

    /// Fused expert output `[n, joint]` for latents `[n, latent]` under weights `[n, experts]`.
    pub fn fuse_graph(&self, g: &mut Graph, b: &Bound, x: Var, weights: Var) -> Result<Var> {
        let mut fused = None;
        for e in 0..self.config.experts {
            let out = self.expert_graph(g, b, e, x)?;
            let w = g.slice_cols(weights, e, 1)?;
            let term = g.mul_col(out, w)?;
            fused = Some(match fused {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok(fused.expect("at least one expert"))
    }

    /// Alignment `[n]` between text embeddings and fused differences; rows
    /// with a zero difference give 0.
    pub fn similarity_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        sources: Var,
        targets: Var,
        embeddings: Var,
        weights: Var,
    ) -> Result<Var> {
        let d = self.fused_difference_graph(g, b, sources, targets, weights)?;
        Ok(g.cosine_rows(embeddings, d)?)
    }

    /// Embeddings and voting weights for a batch of token sequences.
    pub fn encode_texts(&self, texts: &[&[u32]]) -> Result<Vec<TextCode>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let emb = self.encode_texts_graph(&mut g, &b, texts)?;
        let w = self.vote_graph(&mut g, &b, emb)?;
        let (j, k) = (self.config.joint_dim, self.config.experts);
        let (ev, wv) = (g.value(emb), g.value(w));
        Ok(texts
            .iter()
            .enumerate()
            .map(|(i, t)| TextCode {
                embedding: ev[i * j..(i + 1) * j].to_vec(),
                weights: wv[i * k..(i + 1) * k].to_vec(),
                truncated: t.len() > self.config.max_len,
            })
            .collect())
    }

    pub fn encode_text(&self, utterance: &str) -> Result<TextCode> {
        let tokens = text::tokenize(utterance);
        Ok(self.encode_texts(&[&tokens])?.remove(0))
    }

    /// Every expert's output for one latent, evaluated without a graph.
    pub fn expert_outputs(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.experts
            .iter()
            .map(|e| {
                let h1: Vec<f64> = e
                    .input
                    .apply(&self.params, x)
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .collect();
                let h2: Vec<f64> = e
                    .hidden
                    .apply(&self.params, &h1)
                    .into_iter()
                    .zip(&h1)
                    .map(|(v, r)| v.max(0.0) + r)
                    .collect();
                e.output.apply(&self.params, &h2)
            })
            .collect()
    }

    /// Alignment between a text code and the fused difference of precomputed
    /// expert outputs.
    pub fn similarity_from_outputs(
        &self,
        code: &TextCode,
        source: &[Vec<f64>],
        target: &[Vec<f64>],
    ) -> f64 {
        let j = self.config.joint_dim;
        let mut d = vec![0.0; j];
        for (e, w) in code.weights.iter().enumerate() {
            for i in 0..j {
                d[i] += w * (target[e][i] - source[e][i]);
            }
        }
        cosine_or_zero(&code.embedding, &d)
    }

    pub fn similarity(&self, source: &[f64], target: &[f64], code: &TextCode) -> f64 {
        self.similarity_from_outputs(
            code,
            &self.expert_outputs(source),
            &self.expert_outputs(target),
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            CHECKPOINT_KIND,
            &self.params,
            serde_json::json!({ "config": self.config, "training": self.meta }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: JointConfig = serde_json::from_value(ck.header.meta["config"].clone())?;
        let meta: JointMeta = serde_json::from_value(ck.header.meta["training"].clone())?;
        let mut model = Self::new(config, meta.latent_dim, meta.seed)?;
        ck.restore(&mut model.params)?;
        model.meta = meta;
        Ok(model)
    }

    pub fn hash(&self) -> Result<String> {
        self.to_checkpoint().hash()
    }
}

fn small_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let normal = rand_distr::Normal::new(0.0, 0.1).expect("valid normal");
    let values = (0..rows * cols)
        .map(|_| rand_distr::Distribution::sample(&normal, rng))
        .collect();
    Tensor::matrix(rows, cols, values).expect("sizes agree")
}

pub fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let (mut d, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        d += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na.sqrt() * nb.sqrt())
    }
}

/// Binary source/target loss for an alignment value: log(1 + exp(-2h)).
pub fn binary_loss(h: f64) -> f64 {
    (-2.0 * h).exp().ln_1p()
}

/// Sum of absolute dot products between `u` and each presumed-independent embedding.
pub fn disentanglement_loss(u: &[f64], independent: &[Vec<f64>]) -> f64 {
    independent
        .iter()
        .map(|v| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs())
        .sum()
}

/// Graph form of [`binary_loss`] averaged over a vector of alignments.
pub fn binary_loss_graph(g: &mut Graph, h: Var) -> Result<Var> {
    let e = g.scale(h, -2.0);
    let e = g.exp(e);
    let e = g.add_scalar(e, 1.0);
    let l = g.log(e)?;
    Ok(g.mean(l)?)
}

/// `sum_{a,b} counts[a][b] * |e_a . e_b|` for unit embeddings `[n, joint]`.
pub fn disentanglement_loss_graph(g: &mut Graph, embeddings: Var, counts: &Tensor) -> Result<Var> {
    let t = g.transpose(embeddings)?;
    let gram = g.matmul(embeddings, t)?;
    let gram = g.abs(gram);
    let c = g.constant(counts);
    let weighted = g.mul(gram, c)?;
    Ok(g.sum(weighted))
}
