use std::collections::HashMap;

use super::model::MiningStrategy;
use crate::autoencoder::Autoencoder;
use crate::shapeworld::{Direction, EditAxis, Split, Triplet};

/// One (source, target, utterance) training item.
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub triplet: usize,
    pub utterance: usize,
    pub context: u32,
    pub labeler: u32,
    /// Index into [`Corpus::texts`].
    pub text: usize,
    pub split: Split,
    pub axis: EditAxis,
    pub direction: Direction,
}

/// Dataset items with deduplicated texts and the context/labeler groupings
/// used for mining independent utterances.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub texts: Vec<String>,
    pub tokens: Vec<Vec<u32>>,
    pub items: Vec<Item>,
    by_triplet: Vec<Vec<usize>>,
    by_context: HashMap<u32, Vec<usize>>,
}

impl Corpus {
    pub fn new(triplets: &[Triplet]) -> Self {
        let mut text_ids: HashMap<String, usize> = HashMap::new();
        let mut texts = Vec::new();
        let mut tokens = Vec::new();
        let mut items = Vec::new();
        let mut by_triplet = Vec::with_capacity(triplets.len());
        let mut by_context: HashMap<u32, Vec<usize>> = HashMap::new();
        for (ti, t) in triplets.iter().enumerate() {
            let mut group = Vec::with_capacity(t.utterances.len());
            for (ui, u) in t.utterances.iter().enumerate() {
                let text = *text_ids.entry(u.text.clone()).or_insert_with(|| {
                    texts.push(u.text.clone());
                    tokens.push(crate::shapeworld::text::tokenize(&u.text));
                    texts.len() - 1
                });
                group.push(items.len());
                by_context
                    .entry(t.context_id)
                    .or_default()
                    .push(items.len());
                items.push(Item {
                    triplet: ti,
                    utterance: ui,
                    context: t.context_id,
                    labeler: t.labeler_id,
                    text,
                    split: t.split,
                    axis: u.axis(),
                    direction: u.gt_direction,
                });
            }
            by_triplet.push(group);
        }
        Self {
            texts,
            tokens,
            items,
            by_triplet,
            by_context,
        }
    }

    pub fn items_in(&self, split: Split) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| self.items[i].split == split)
            .collect()
    }

    /// Items presumed independent of `item`. Multiutterance: same context and
    /// labeler; shared-context: same context; random: batch items from other
    /// contexts. `item` itself is never returned.
    pub fn mine(&self, item: usize, strategy: MiningStrategy, batch: &[usize]) -> Vec<usize> {
        let it = &self.items[item];
        match strategy {
            MiningStrategy::Multiutterance => self.by_triplet[it.triplet]
                .iter()
                .copied()
                .filter(|&j| j != item)
                .collect(),
            MiningStrategy::SharedContext => self.by_context[&it.context]
                .iter()
                .copied()
                .filter(|&j| j != item)
                .collect(),
            MiningStrategy::Random => batch
                .iter()
                .copied()
                .filter(|&j| self.items[j].context != it.context)
                .collect(),
        }
    }
}

/// Autoencoder latents of every triplet's source and target.
#[derive(Clone, Debug)]
pub struct PairLatents {
    pub sources: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl PairLatents {
    pub fn new(triplets: &[Triplet], ae: &Autoencoder) -> Self {
        Self {
            sources: triplets.iter().map(|t| ae.encode(&t.source)).collect(),
            targets: triplets.iter().map(|t| ae.encode(&t.target)).collect(),
        }
    }
}
