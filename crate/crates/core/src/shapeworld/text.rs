//! Fixed word-level vocabulary and tokenizer for edit utterances.

pub const PAD: u32 = 0;
pub const FIRST: u32 = 1;
pub const UNK: u32 = 2;

const PAD_WORD: &str = "<pad>";
const FIRST_WORD: &str = "<first>";
const UNK_WORD: &str = "<unk>";

const WORDS: [&str; 40] = [
    PAD_WORD, FIRST_WORD, UNK_WORD, "the", "a", "its", "is", "are", "has", "have", "legs", "leg",
    "seat", "back", "backrest", "armrests", "armrest", "arms", "arm", "chair", "table", "longer",
    "shorter", "taller", "thicker", "thinner", "wider", "narrower", "more", "less", "very", "much",
    "slightly", "and", "than", "it", "of", "nice", "top", "deeper",
];

pub fn vocab_size() -> usize {
    WORDS.len()
}

pub fn word(id: u32) -> Option<&'static str> {
    WORDS.get(id as usize).copied()
}

pub fn word_id(w: &str) -> Option<u32> {
    WORDS.iter().position(|x| *x == w).map(|i| i as u32)
}

/// Lowercase, whitespace-separated form of `text`.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// `FIRST` followed by one id per lowercase word; unknown words map to `UNK`.
pub fn tokenize(text: &str) -> Vec<u32> {
    std::iter::once(FIRST)
        .chain(text.split_whitespace().map(|w| {
            let w = w.to_lowercase();
            match word_id(&w) {
                Some(id) if id > UNK => id,
                _ => UNK,
            }
        }))
        .collect()
}

pub fn detokenize(tokens: &[u32]) -> String {
    tokens
        .iter()
        .filter(|&&t| t != FIRST && t != PAD)
        .map(|&t| word(t).unwrap_or(UNK_WORD))
        .collect::<Vec<_>>()
        .join(" ")
}
