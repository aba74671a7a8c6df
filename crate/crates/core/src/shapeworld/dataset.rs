use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Part;
use super::params::{param_range, Category, Param, ShapeParams, PARAM_COUNT};
use super::text;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Length,
    Thickness,
    Width,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Increase,
    #[serde(rename = "-")]
    Decrease,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Increase => Direction::Decrease,
            Direction::Decrease => Direction::Increase,
        }
    }
}

/// One editable (part, attribute) axis; each drives exactly one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EditAxis {
    pub part: Part,
    pub attribute: Attribute,
}

impl EditAxis {
    pub const ALL: [EditAxis; PARAM_COUNT] = [
        EditAxis {
            part: Part::Legs,
            attribute: Attribute::Length,
        },
        EditAxis {
            part: Part::Legs,
            attribute: Attribute::Thickness,
        },
        EditAxis {
            part: Part::Seat,
            attribute: Attribute::Width,
        },
        EditAxis {
            part: Part::Seat,
            attribute: Attribute::Length,
        },
        EditAxis {
            part: Part::Seat,
            attribute: Attribute::Thickness,
        },
        EditAxis {
            part: Part::Back,
            attribute: Attribute::Length,
        },
        EditAxis {
            part: Part::Back,
            attribute: Attribute::Thickness,
        },
        EditAxis {
            part: Part::Armrests,
            attribute: Attribute::Length,
        },
        EditAxis {
            part: Part::Armrests,
            attribute: Attribute::Thickness,
        },
    ];

    pub fn new(part: Part, attribute: Attribute) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.part == part && a.attribute == attribute)
    }

    pub fn param(self) -> Param {
        let i = Self::ALL
            .iter()
            .position(|a| *a == self)
            .expect("axis is listed");
        Param::ALL[i]
    }

    pub fn from_param(p: Param) -> Self {
        Self::ALL[p.index()]
    }

    /// Axes that exist on a shape (no back or arm edits when the part is absent).
    pub fn available(shape: &ShapeParams) -> Vec<EditAxis> {
        Self::ALL
            .into_iter()
            .filter(|a| match a.part {
                Part::Legs | Part::Seat => true,
                Part::Back => shape.has_back,
                Part::Armrests => shape.has_arms,
            })
            .collect()
    }

    /// Partner axis whose change tends to accompany this one in generated data.
    pub fn coupled(self) -> EditAxis {
        use Param::*;
        let partner = match self.param() {
            LegHeight => BackHeight,
            BackHeight => LegHeight,
            SeatWidth => SeatDepth,
            SeatDepth => SeatWidth,
            LegThickness => ArmThickness,
            ArmThickness => LegThickness,
            SeatThickness => BackThickness,
            BackThickness => SeatThickness,
            ArmHeight => SeatThickness,
        };
        Self::from_param(partner)
    }

    pub fn comparative(self, direction: Direction) -> &'static str {
        match (self.attribute, direction) {
            (Attribute::Length, Direction::Increase) => match self.part {
                Part::Back | Part::Armrests => "taller",
                Part::Legs | Part::Seat => "longer",
            },
            (Attribute::Length, Direction::Decrease) => "shorter",
            (Attribute::Thickness, Direction::Increase) => "thicker",
            (Attribute::Thickness, Direction::Decrease) => "thinner",
            (Attribute::Width, Direction::Increase) => "wider",
            (Attribute::Width, Direction::Decrease) => "narrower",
        }
    }
}

/// Part nouns with their verb agreement.
fn part_nouns(part: Part) -> &'static [(&'static str, &'static str)] {
    match part {
        Part::Legs => &[("legs", "are"), ("leg", "is")],
        Part::Seat => &[("seat", "is")],
        Part::Back => &[("back", "is"), ("backrest", "is")],
        Part::Armrests => &[("armrests", "are"), ("arms", "are"), ("armrest", "is")],
    }
}

/// Canonical template: "the {part} {is|are} {comparative}".
pub fn template(axis: EditAxis, direction: Direction) -> String {
    let (noun, verb) = part_nouns(axis.part)[0];
    format!("the {noun} {verb} {}", axis.comparative(direction))
}

fn paraphrase(axis: EditAxis, direction: Direction, rng: &mut impl Rng) -> String {
    let (noun, verb) = *part_nouns(axis.part).choose(rng).expect("non-empty");
    format!("the {noun} {verb} {}", axis.comparative(direction))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<u32>,
    #[serde(skip)]
    pub context_id: u32,
    #[serde(skip)]
    pub labeler_id: u32,
    pub gt_part: Part,
    pub gt_attribute: Attribute,
    pub gt_direction: Direction,
}

impl Utterance {
    pub fn new(
        text: String,
        context_id: u32,
        labeler_id: u32,
        axis: EditAxis,
        direction: Direction,
    ) -> Self {
        let text = text::normalize(&text);
        Self {
            tokens: text::tokenize(&text),
            text,
            context_id,
            labeler_id,
            gt_part: axis.part,
            gt_attribute: axis.attribute,
            gt_direction: direction,
        }
    }

    pub fn axis(&self) -> EditAxis {
        EditAxis::new(self.gt_part, self.gt_attribute)
            .expect("generated utterances name a listed axis")
    }
}

/// One labeler's descriptions of how `target` differs from `source`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub context_id: u32,
    pub labeler_id: u32,
    pub source: ShapeParams,
    pub target: ShapeParams,
    pub utterances: Vec<Utterance>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub contexts: usize,
    pub table_fraction: f64,
    pub chair_back_probability: f64,
    pub chair_arms_probability: f64,
    /// Multiplicative change factor range; decreases use the reciprocal.
    pub factor_min: f64,
    pub factor_max: f64,
    /// Fraction of contexts changing two or more axes.
    pub multi_axis_fraction: f64,
    /// Among multi-axis contexts, the fraction changing three axes.
    pub three_axis_share: f64,
    /// Probability that the second changed axis is the first axis's partner, changed in the same direction.
    pub coupling_probability: f64,
    /// Probability that a second labeler also describes the pair.
    pub second_labeler_fraction: f64,
    pub labelers: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            contexts: 5000,
            table_fraction: 0.2,
            chair_back_probability: 0.9,
            chair_arms_probability: 0.5,
            factor_min: 1.3,
            factor_max: 1.8,
            multi_axis_fraction: 0.6,
            three_axis_share: 0.35,
            coupling_probability: 0.7,
            second_labeler_fraction: 0.35,
            labelers: 40,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        if self.contexts == 0 {
            return Err(Error::Config("contexts must be positive".into()));
        }
        prob("table_fraction", self.table_fraction)?;
        prob("chair_back_probability", self.chair_back_probability)?;
        prob("chair_arms_probability", self.chair_arms_probability)?;
        prob("multi_axis_fraction", self.multi_axis_fraction)?;
        prob("three_axis_share", self.three_axis_share)?;
        prob("coupling_probability", self.coupling_probability)?;
        prob("second_labeler_fraction", self.second_labeler_fraction)?;
        if !(self.factor_min > 1.0 && self.factor_max >= self.factor_min) {
            return Err(Error::Config(format!(
                "factor range [{}, {}] must satisfy 1 < min <= max",
                self.factor_min, self.factor_max
            )));
        }
        // one direction must always fit inside every parameter range
        for cat in [Category::Chair, Category::Table] {
            for p in Param::ALL {
                let (lo, hi) = param_range(cat, p);
                if hi / lo < self.factor_max * self.factor_max {
                    return Err(Error::Config(format!(
                        "factor_max {} too large for {} range [{lo}, {hi}]",
                        self.factor_max,
                        p.name()
                    )));
                }
            }
        }
        if self.labelers < 2 {
            return Err(Error::Config("need at least two labelers".into()));
        }
        Ok(())
    }
}

/// Draws a random in-range shape. Parameters follow a Beta(2, 2) law within their ranges.
pub fn sample_shape(cfg: &DatasetConfig, rng: &mut impl Rng) -> ShapeParams {
    let category = if rng.random_bool(cfg.table_fraction) {
        Category::Table
    } else {
        Category::Chair
    };
    let unit: [f64; PARAM_COUNT] = std::array::from_fn(|_| beta22(rng));
    let (arms, back) = match category {
        Category::Chair => (
            rng.random_bool(cfg.chair_arms_probability),
            rng.random_bool(cfg.chair_back_probability),
        ),
        Category::Table => (false, false),
    };
    ShapeParams::from_normalized(category, unit, arms, back)
}

/// Median of three uniforms, which is Beta(2, 2) distributed. Comparisons only,
/// so draws do not depend on how the build folds transcendental constants.
fn beta22(rng: &mut impl Rng) -> f64 {
    let [a, b, c]: [f64; 3] = std::array::from_fn(|_| rng.random());
    a.max(b).min(a.min(b).max(c))
}

fn try_change(
    shape: &ShapeParams,
    axis: EditAxis,
    direction: Direction,
    factor: f64,
) -> Option<f64> {
    let p = axis.param();
    let (lo, hi) = param_range(shape.category, p);
    let v = shape.get(p) * factor.powf(direction.sign());
    (lo..=hi).contains(&v).then_some(v)
}

/// Applies a multiplicative change along `axis`, flipping the direction when
/// the requested one would leave the valid range.
fn apply_change(
    target: &mut ShapeParams,
    axis: EditAxis,
    direction: Direction,
    factor: f64,
    allow_flip: bool,
) -> Option<Direction> {
    if let Some(v) = try_change(target, axis, direction, factor) {
        target.set(axis.param(), v);
        return Some(direction);
    }
    if allow_flip {
        if let Some(v) = try_change(target, axis, direction.flipped(), factor) {
            target.set(axis.param(), v);
            return Some(direction.flipped());
        }
    }
    None
}

fn generate_context(cfg: &DatasetConfig, seed: u64, context_id: u32) -> Vec<Triplet> {
    let mut rng = stream_rng(seed, "dataset-context", u64::from(context_id));
    let source = sample_shape(cfg, &mut rng);
    let available = EditAxis::available(&source);
    let wanted = if rng.random_bool(cfg.multi_axis_fraction) {
        if rng.random_bool(cfg.three_axis_share) {
            3
        } else {
            2
        }
    } else {
        1
    };
    let wanted = wanted.min(available.len());

    let mut target = source.clone();
    let mut changes: Vec<(EditAxis, Direction)> = Vec::new();
    let first = *available
        .choose(&mut rng)
        .expect("every shape has leg and seat axes");
    let dir = if rng.random_bool(0.5) {
        Direction::Increase
    } else {
        Direction::Decrease
    };
    let factor = rng.random_range(cfg.factor_min..=cfg.factor_max);
    let dir =
        apply_change(&mut target, first, dir, factor, true).expect("ranges admit one direction");
    changes.push((first, dir));

    if wanted >= 2 && rng.random_bool(cfg.coupling_probability) {
        let partner = first.coupled();
        if available.contains(&partner) {
            let factor = rng.random_range(cfg.factor_min..=cfg.factor_max);
            if let Some(d) = apply_change(&mut target, partner, dir, factor, false) {
                changes.push((partner, d));
            }
        }
    }
    while changes.len() < wanted {
        let remaining: Vec<EditAxis> = available
            .iter()
            .copied()
            .filter(|a| !changes.iter().any(|(c, _)| c == a))
            .collect();
        let axis = *remaining
            .choose(&mut rng)
            .expect("wanted never exceeds available axes");
        let dir = if rng.random_bool(0.5) {
            Direction::Increase
        } else {
            Direction::Decrease
        };
        let factor = rng.random_range(cfg.factor_min..=cfg.factor_max);
        let dir =
            apply_change(&mut target, axis, dir, factor, true).expect("ranges admit one direction");
        changes.push((axis, dir));
    }

    let split = match rng.random_range(0..10u32) {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    };
    let labeler_a = rng.random_range(0..cfg.labelers);
    let mut order: Vec<usize> = (0..changes.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let utterances = order
        .iter()
        .map(|&i| {
            let (axis, dir) = changes[i];
            Utterance::new(
                paraphrase(axis, dir, &mut rng),
                context_id,
                labeler_a,
                axis,
                dir,
            )
        })
        .collect();
    let mut out = vec![Triplet {
        context_id,
        labeler_id: labeler_a,
        source: source.clone(),
        target: target.clone(),
        utterances,
        split,
    }];

    if rng.random_bool(cfg.second_labeler_fraction) {
        let labeler_b = loop {
            let l = rng.random_range(0..cfg.labelers);
            if l != labeler_a {
                break l;
            }
        };
        let k = rng.random_range(1..=changes.len().min(2));
        let picked = rand::seq::index::sample(&mut rng, changes.len(), k);
        let utterances = picked
            .iter()
            .map(|i| {
                let (axis, dir) = changes[i];
                Utterance::new(
                    paraphrase(axis, dir, &mut rng),
                    context_id,
                    labeler_b,
                    axis,
                    dir,
                )
            })
            .collect();
        out.push(Triplet {
            context_id,
            labeler_id: labeler_b,
            source,
            target,
            utterances,
            split,
        });
    }
    out
}

/// Generates `cfg.contexts` source/target pairs with templated utterances,
/// ordered by context id. Identical `(cfg, seed)` give identical output.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Vec<Triplet>> {
    cfg.validate()?;
    let contexts =
        u32::try_from(cfg.contexts).map_err(|_| Error::Config("too many contexts".into()))?;
    Ok((0..contexts)
        .flat_map(|c| generate_context(cfg, seed, c))
        .collect())
}

pub fn write_dataset(path: &Path, triplets: &[Triplet]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset_to(&mut out, triplets)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset_to(out: &mut impl Write, triplets: &[Triplet]) -> Result<()> {
    for t in triplets {
        serde_json::to_writer(&mut *out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Triplet>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: serde_json::Error| Error::Format(format!("{}:{}: {e}", path.display(), n + 1));
        let value: serde_json::Value = serde_json::from_str(&line).map_err(at)?;
        if value.get("record").is_some() {
            // header lines carry provenance only
            continue;
        }
        let mut t: Triplet = serde_json::from_value(value).map_err(at)?;
        for u in &mut t.utterances {
            u.tokens = text::tokenize(&u.text);
            u.context_id = t.context_id;
            u.labeler_id = t.labeler_id;
        }
        out.push(t);
    }
    Ok(out)
}

/// Every distinct shape in a split (sources and targets, first occurrence order).
pub fn shapes_of(triplets: &[Triplet], split: Option<Split>) -> Vec<ShapeParams> {
    let mut out = Vec::new();
    let mut last_context = None;
    for t in triplets
        .iter()
        .filter(|t| split.is_none_or(|s| t.split == s))
    {
        if last_context == Some(t.context_id) {
            continue;
        }
        last_context = Some(t.context_id);
        out.push(t.source.clone());
        out.push(t.target.clone());
    }
    out
}
