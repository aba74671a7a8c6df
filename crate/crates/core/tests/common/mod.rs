#![allow(dead_code)]

use shapeedit_core::shapeworld::{generate_dataset, DatasetConfig, Triplet};

/// Core results inside a gradient-check closure.
pub fn ad<T>(r: shapeedit_core::Result<T>) -> shapeedit_autodiff::Result<T> {
    r.map_err(|e| shapeedit_autodiff::Error::Contract(e.to_string()))
}

pub fn dataset(contexts: usize, seed: u64) -> Vec<Triplet> {
    generate_dataset(
        &DatasetConfig {
            contexts,
            ..DatasetConfig::default()
        },
        seed,
    )
    .unwrap()
}
