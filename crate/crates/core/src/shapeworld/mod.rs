//! Procedural chairs and tables built from labeled boxes, plus a synthetic
//! corpus of shape pairs described by templated edit utterances.

pub mod dataset;
pub mod geometry;
pub mod params;
pub mod text;

pub use dataset::{
    generate_dataset, read_dataset, sample_shape, shapes_of, write_dataset, write_dataset_to,
    Attribute, DatasetConfig, Direction, EditAxis, Split, Triplet, Utterance,
};
pub use geometry::{occupancy, realize_shape, region_volume, volume, BoxSet, LabeledBox, Part};
pub use params::{param_range, Category, Param, ShapeParams, PARAM_COUNT};
