use std::collections::HashMap;

use rand::seq::SliceRandom;
use shapeedit_autodiff::{Graph, Tensor};

use super::corpus::{Corpus, PairLatents};
use super::model::{
    binary_loss_graph, disentanglement_loss_graph, JointConfig, JointModel, TextCode,
};
use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::rng::stream_rng;
use crate::shapeworld::{Split, Triplet};

const ENCODE_CHUNK: usize = 256;

/// Text codes for every corpus text, computed in chunks.
pub fn encode_corpus_texts(model: &JointModel, corpus: &Corpus) -> Result<Vec<TextCode>> {
    let mut out = Vec::with_capacity(corpus.tokens.len());
    for chunk in corpus.tokens.chunks(ENCODE_CHUNK) {
        let refs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        out.extend(model.encode_texts(&refs)?);
    }
    Ok(out)
}

/// Alignment `h(s, t, u)` for each listed item.
pub fn item_similarities(
    model: &JointModel,
    corpus: &Corpus,
    latents: &PairLatents,
    items: &[usize],
) -> Result<Vec<f64>> {
    let codes = encode_corpus_texts(model, corpus)?;
    let mut outputs: HashMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = HashMap::new();
    Ok(items
        .iter()
        .map(|&i| {
            let it = &corpus.items[i];
            let (fs, ft) = outputs.entry(it.triplet).or_insert_with(|| {
                (
                    model.expert_outputs(&latents.sources[it.triplet]),
                    model.expert_outputs(&latents.targets[it.triplet]),
                )
            });
            model.similarity_from_outputs(&codes[it.text], fs, ft)
        })
        .collect())
}

/// Fraction of items with `h(s, t, u) > 0`; zero alignment counts as wrong.
pub fn accuracy_of(h: &[f64]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    h.iter().filter(|&&x| x > 0.0).count() as f64 / h.len() as f64
}

/// Held-out source/target classification accuracy on one split.
pub fn evaluate_accuracy(
    model: &JointModel,
    ae: &Autoencoder,
    triplets: &[Triplet],
    split: Split,
) -> Result<f64> {
    let corpus = Corpus::new(triplets);
    let latents = PairLatents::new(triplets, ae);
    let items = corpus.items_in(split);
    Ok(accuracy_of(&item_similarities(
        model, &corpus, &latents, &items,
    )?))
}

struct Batch {
    texts: Vec<usize>,
    item_text: Vec<usize>,
    counts: Option<Tensor>,
}

fn assemble(corpus: &Corpus, cfg: &JointConfig, items: &[usize]) -> Result<Batch> {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut texts = Vec::new();
    let mut slot = |t: usize, texts: &mut Vec<usize>| {
        *local.entry(t).or_insert_with(|| {
            texts.push(t);
            texts.len() - 1
        })
    };
    let item_text: Vec<usize> = items
        .iter()
        .map(|&i| slot(corpus.items[i].text, &mut texts))
        .collect();
    if cfg.lambda == 0.0 {
        return Ok(Batch {
            texts,
            item_text,
            counts: None,
        });
    }
    let mut pairs = Vec::new();
    for (k, &i) in items.iter().enumerate() {
        for j in corpus.mine(i, cfg.mining, items) {
            pairs.push((item_text[k], slot(corpus.items[j].text, &mut texts)));
        }
    }
    let n = texts.len();
    let mut counts = vec![0.0; n * n];
    for (a, b) in pairs {
        counts[a * n + b] += 1.0;
    }
    Ok(Batch {
        texts,
        item_text,
        counts: Some(Tensor::matrix(n, n, counts)?),
    })
}

/// Trains text encoder, experts and voting network on the training split and
/// returns the epoch with the best validation accuracy.
pub fn train_jointspace(
    triplets: &[Triplet],
    ae: &Autoencoder,
    cfg: &JointConfig,
    seed: u64,
) -> Result<JointModel> {
    cfg.validate()?;
    let corpus = Corpus::new(triplets);
    let latents = PairLatents::new(triplets, ae);
    let mut train = corpus.items_in(Split::Train);
    let val = corpus.items_in(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Argument(
            "dataset needs training and validation items".into(),
        ));
    }
    let d = ae.latent_dim();
    let mut model = JointModel::new(cfg.clone(), d, seed)?;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut stream_rng(seed, "jointspace-shuffle", epoch as u64));
        let mut total = 0.0;
        for items in train.chunks(cfg.batch_size) {
            let batch = assemble(&corpus, cfg, items)?;
            let n = items.len();
            let src: Vec<f64> = items
                .iter()
                .flat_map(|&i| latents.sources[corpus.items[i].triplet].clone())
                .collect();
            let tgt: Vec<f64> = items
                .iter()
                .flat_map(|&i| latents.targets[corpus.items[i].triplet].clone())
                .collect();
            let mut g = Graph::new();
            let b = model.bind(&mut g, true);
            let tokens: Vec<&[u32]> = batch
                .texts
                .iter()
                .map(|&t| corpus.tokens[t].as_slice())
                .collect();
            let emb = model.encode_texts_graph(&mut g, &b, &tokens)?;
            let w = model.vote_graph(&mut g, &b, emb)?;
            let s = g.constant(&Tensor::matrix(n, d, src)?);
            let t = g.constant(&Tensor::matrix(n, d, tgt)?);
            let ge = g.gather_rows(emb, &batch.item_text)?;
            let we = g.gather_rows(w, &batch.item_text)?;
            let h = model.similarity_graph(&mut g, &b, s, t, ge, we)?;
            let mut loss = binary_loss_graph(&mut g, h)?;
            if let Some(counts) = &batch.counts {
                let dis = disentanglement_loss_graph(&mut g, emb, counts)?;
                let dis = g.scale(dis, cfg.lambda / n as f64);
                loss = g.add(loss, dis)?;
            }
            let lv = g.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss is {lv}"),
                });
            }
            total += lv * n as f64;
            g.backward(loss)?;
            let grads = model.params().grads(&g, &b);
            opt.step(model.params_mut(), &grads)
                .map_err(|e| Error::Training {
                    epoch,
                    reason: e.to_string(),
                })?;
        }
        let acc = accuracy_of(&item_similarities(&model, &corpus, &latents, &val)?);
        history.push((total / train.len() as f64, acc));
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch, model.params().flatten()));
        }
    }
    let (acc, epoch, weights) = best.expect("at least one epoch");
    model.params_mut().load_flat(&weights)?;
    model.meta.epochs_run = cfg.epochs;
    model.meta.best_epoch = epoch;
    model.meta.best_val_accuracy = acc;
    model.meta.history = history;
    model.meta.autoencoder_hash = ae.hash()?;
    Ok(model)
}
