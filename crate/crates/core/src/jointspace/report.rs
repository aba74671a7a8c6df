use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::model::{JointModel, TextCode};
use super::train::encode_corpus_texts;
use crate::error::Result;
use crate::shapeworld::{text, Attribute, Direction, Part, Triplet};

/// Comparative words that name an edit direction.
pub const ADJECTIVES: [&str; 7] = [
    "longer", "shorter", "taller", "thicker", "thinner", "wider", "narrower",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertActivation {
    pub adjectives: Vec<String>,
    /// Per adjective: mean voting weight of each expert over utterances using it.
    pub rows: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Mean over adjectives of the largest row entry.
    pub specialization: f64,
}

pub fn expert_activation_report(
    model: &JointModel,
    triplets: &[Triplet],
) -> Result<ExpertActivation> {
    let corpus = Corpus::new(triplets);
    let codes = encode_corpus_texts(model, &corpus)?;
    let k = model.config.experts;
    let mut adjectives = Vec::new();
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for adj in ADJECTIVES {
        let id = text::word_id(adj).expect("adjectives are in the vocabulary");
        let mut sum = vec![0.0; k];
        let mut n = 0;
        for it in &corpus.items {
            if corpus.tokens[it.text].contains(&id) {
                for (s, w) in sum.iter_mut().zip(&codes[it.text].weights) {
                    *s += w;
                }
                n += 1;
            }
        }
        if n > 0 {
            adjectives.push(adj.to_string());
            rows.push(sum.into_iter().map(|s| s / n as f64).collect::<Vec<_>>());
            counts.push(n);
        }
    }
    let specialization = if rows.is_empty() {
        0.0
    } else {
        rows.iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / rows.len() as f64
    };
    Ok(ExpertActivation {
        adjectives,
        rows,
        counts,
        specialization,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub pairs: usize,
    pub mean_abs_cosine: f64,
    /// Counts of |cos| in ten equal bins over [0, 1].
    pub histogram: [usize; 10],
}

impl PairStats {
    fn from_values(v: &[f64]) -> Self {
        let mut histogram = [0; 10];
        for x in v {
            histogram[((x * 10.0) as usize).min(9)] += 1;
        }
        let mean = if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Self {
            pairs: v.len(),
            mean_abs_cosine: mean,
            histogram,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub utterance: String,
    pub embedding: Vec<f64>,
    pub part: Part,
    pub attribute: Attribute,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orthogonality {
    /// Same context, different part or attribute.
    pub independent: PairStats,
    /// Same context, same part and attribute.
    pub same_axis: PairStats,
    pub embeddings: Vec<EmbeddingRecord>,
}

fn abs_dot(a: &TextCode, b: &TextCode) -> f64 {
    a.embedding
        .iter()
        .zip(&b.embedding)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .abs()
}

/// |g(u) . g(v)| over utterance pairs sharing a context, split by whether
/// their ground-truth axes differ, plus one embedding record per distinct text.
pub fn orthogonality_report(model: &JointModel, triplets: &[Triplet]) -> Result<Orthogonality> {
    let corpus = Corpus::new(triplets);
    let codes = encode_corpus_texts(model, &corpus)?;
    let mut independent = Vec::new();
    let mut same = Vec::new();
    let items = &corpus.items;
    let mut start = 0;
    while start < items.len() {
        let mut end = start;
        while end < items.len() && items[end].context == items[start].context {
            end += 1;
        }
        for a in start..end {
            for b in a + 1..end {
                let v = abs_dot(&codes[items[a].text], &codes[items[b].text]);
                if items[a].axis == items[b].axis {
                    same.push(v);
                } else {
                    independent.push(v);
                }
            }
        }
        start = end;
    }
    let mut seen = vec![false; corpus.texts.len()];
    let mut embeddings = Vec::new();
    for it in items {
        if !std::mem::replace(&mut seen[it.text], true) {
            embeddings.push(EmbeddingRecord {
                utterance: corpus.texts[it.text].clone(),
                embedding: codes[it.text].embedding.clone(),
                part: it.axis.part,
                attribute: it.axis.attribute,
                direction: it.direction,
            });
        }
    }
    Ok(Orthogonality {
        independent: PairStats::from_values(&independent),
        same_axis: PairStats::from_values(&same),
        embeddings,
    })
}
