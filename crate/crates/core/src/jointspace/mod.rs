//! Joint embedding of edit utterances and shape-latent differences: a small
//! transformer text encoder, a bank of expert projections fused by
//! utterance-conditioned voting, and the training objective with an
//! orthogonality penalty over presumed-independent utterances.

mod corpus;
mod model;
mod report;
mod train;

pub use corpus::{Corpus, Item, PairLatents};
pub use model::{
    binary_loss, binary_loss_graph, cosine_or_zero, disentanglement_loss,
    disentanglement_loss_graph, JointConfig, JointMeta, JointModel, MiningStrategy, TextCode,
    CHECKPOINT_KIND,
};
pub use report::{
    expert_activation_report, orthogonality_report, EmbeddingRecord, ExpertActivation,
    Orthogonality, PairStats, ADJECTIVES,
};
pub use train::{
    accuracy_of, encode_corpus_texts, evaluate_accuracy, item_similarities, train_jointspace,
};
