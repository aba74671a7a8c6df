use serde::{Deserialize, Serialize};

use super::params::{Category, ShapeParams};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Legs,
    Seat,
    Back,
    Armrests,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Legs, Part::Seat, Part::Back, Part::Armrests];

    pub fn name(self) -> &'static str {
        match self {
            Part::Legs => "legs",
            Part::Seat => "seat",
            Part::Back => "back",
            Part::Armrests => "armrests",
        }
    }

    /// Part labels a category can carry.
    pub fn label_set(category: Category) -> &'static [Part] {
        match category {
            Category::Chair => &Part::ALL,
            Category::Table => &[Part::Legs, Part::Seat],
        }
    }
}

/// Closed axis-aligned box with a part label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub part: Part,
}

impl LabeledBox {
    pub fn new(min: [f64; 3], max: [f64; 3], part: Part) -> Self {
        Self { min, max, part }
    }

    pub fn volume(&self) -> f64 {
        (0..3)
            .map(|a| (self.max[a] - self.min[a]).max(0.0))
            .product()
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= x[a] && x[a] <= self.max[a])
    }

    pub fn intersection_volume(&self, other: &LabeledBox) -> f64 {
        (0..3)
            .map(|a| (self.max[a].min(other.max[a]) - self.min[a].max(other.min[a])).max(0.0))
            .product()
    }

    /// Interiors overlap.
    pub fn overlaps(&self, other: &LabeledBox) -> bool {
        (0..3).all(|a| self.min[a].max(other.min[a]) < self.max[a].min(other.max[a]))
    }

    pub fn swollen(&self, margin: f64) -> Self {
        Self {
            min: self.min.map(|x| x - margin),
            max: self.max.map(|x| x + margin),
            part: self.part,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub boxes: Vec<LabeledBox>,
}

impl BoxSet {
    pub fn new(boxes: Vec<LabeledBox>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn with_parts(&self, parts: &[Part]) -> BoxSet {
        BoxSet::new(
            self.boxes
                .iter()
                .filter(|b| parts.contains(&b.part))
                .copied()
                .collect(),
        )
    }

    pub fn count(&self, part: Part) -> usize {
        self.boxes.iter().filter(|b| b.part == part).count()
    }

    pub fn swollen(&self, margin: f64) -> BoxSet {
        BoxSet::new(self.boxes.iter().map(|b| b.swollen(margin)).collect())
    }

    pub fn is_disjoint(&self) -> bool {
        self.boxes
            .iter()
            .enumerate()
            .all(|(i, a)| self.boxes[i + 1..].iter().all(|b| !a.overlaps(b)))
    }

    /// Smallest box containing every box of the set.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = self.boxes.first()?;
        let mut lo = first.min;
        let mut hi = first.max;
        for b in &self.boxes[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(b.min[a]);
                hi[a] = hi[a].max(b.max[a]);
            }
        }
        Some((lo, hi))
    }

    /// Disjoint boxes covering the same union, by coordinate compression.
    /// Returns the set unchanged when it is already disjoint.
    pub fn disjoint_cover(&self) -> BoxSet {
        if self.is_disjoint() {
            return self.clone();
        }
        let mut cuts: [Vec<f64>; 3] = Default::default();
        for b in &self.boxes {
            for a in 0..3 {
                cuts[a].push(b.min[a]);
                cuts[a].push(b.max[a]);
            }
        }
        for c in &mut cuts {
            c.sort_by(f64::total_cmp);
            c.dedup();
        }
        let mut out = Vec::new();
        for i in 0..cuts[0].len().saturating_sub(1) {
            for j in 0..cuts[1].len().saturating_sub(1) {
                for k in 0..cuts[2].len().saturating_sub(1) {
                    let min = [cuts[0][i], cuts[1][j], cuts[2][k]];
                    let max = [cuts[0][i + 1], cuts[1][j + 1], cuts[2][k + 1]];
                    let centre = [
                        0.5 * (min[0] + max[0]),
                        0.5 * (min[1] + max[1]),
                        0.5 * (min[2] + max[2]),
                    ];
                    if let Some(owner) = self.boxes.iter().find(|b| b.contains(centre)) {
                        out.push(LabeledBox::new(min, max, owner.part));
                    }
                }
            }
        }
        BoxSet::new(out)
    }
}

/// Lays out a shape as labeled boxes: four legs under the seat corners, the
/// seat slab, a back slab on the rear edge and arm slabs on the side edges.
pub fn realize_shape(p: &ShapeParams) -> Result<BoxSet> {
    p.validate()?;
    Ok(layout(p))
}

/// Layout without bounds validation. Disjointness only holds for in-range parameters.
pub(crate) fn layout(p: &ShapeParams) -> BoxSet {
    let (hw, hd) = (0.5 * p.seat_width, 0.5 * p.seat_depth);
    let t = p.leg_thickness;
    let seat_bottom = p.leg_height;
    let seat_top = seat_bottom + p.seat_thickness;
    let mut boxes = Vec::with_capacity(8);
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let x0 = if sx < 0.0 { -hw } else { hw - t };
        let z0 = if sz < 0.0 { -hd } else { hd - t };
        boxes.push(LabeledBox::new(
            [x0, 0.0, z0],
            [x0 + t, seat_bottom, z0 + t],
            Part::Legs,
        ));
    }
    boxes.push(LabeledBox::new(
        [-hw, seat_bottom, -hd],
        [hw, seat_top, hd],
        Part::Seat,
    ));
    let back_front = if p.has_back {
        -hd + p.back_thickness
    } else {
        -hd
    };
    if p.has_back {
        boxes.push(LabeledBox::new(
            [-hw, seat_top, -hd],
            [hw, seat_top + p.back_height, back_front],
            Part::Back,
        ));
    }
    if p.has_arms {
        let ta = p.arm_thickness;
        let top = seat_top + p.arm_height;
        boxes.push(LabeledBox::new(
            [-hw, seat_top, back_front],
            [-hw + ta, top, hd],
            Part::Armrests,
        ));
        boxes.push(LabeledBox::new(
            [hw - ta, seat_top, back_front],
            [hw, top, hd],
            Part::Armrests,
        ));
    }
    BoxSet::new(boxes)
}

/// 1 when `x` lies in some box (boundaries count as inside).
pub fn occupancy(b: &BoxSet, x: [f64; 3]) -> u8 {
    u8::from(b.boxes.iter().any(|bx| bx.contains(x)))
}

/// Total volume; exact because realized boxes are disjoint.
pub fn volume(b: &BoxSet) -> f64 {
    b.boxes.iter().map(LabeledBox::volume).sum()
}

/// Volume of `b` inside the union of `region`'s boxes. `b` must be disjoint;
/// overlapping region boxes are first split into a disjoint cover.
pub fn region_volume(b: &BoxSet, region: &BoxSet) -> f64 {
    let cover = region.disjoint_cover();
    b.boxes
        .iter()
        .map(|x| {
            cover
                .boxes
                .iter()
                .map(|r| x.intersection_volume(r))
                .sum::<f64>()
        })
        .sum()
}
