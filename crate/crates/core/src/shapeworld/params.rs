use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Chair,
    Table,
}

/// Continuous shape parameters, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    LegHeight,
    LegThickness,
    SeatWidth,
    SeatDepth,
    SeatThickness,
    BackHeight,
    BackThickness,
    ArmHeight,
    ArmThickness,
}

pub const PARAM_COUNT: usize = 9;

impl Param {
    pub const ALL: [Param; PARAM_COUNT] = [
        Param::LegHeight,
        Param::LegThickness,
        Param::SeatWidth,
        Param::SeatDepth,
        Param::SeatThickness,
        Param::BackHeight,
        Param::BackThickness,
        Param::ArmHeight,
        Param::ArmThickness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::LegHeight => "leg_height",
            Param::LegThickness => "leg_thickness",
            Param::SeatWidth => "seat_width",
            Param::SeatDepth => "seat_depth",
            Param::SeatThickness => "seat_thickness",
            Param::BackHeight => "back_height",
            Param::BackThickness => "back_thickness",
            Param::ArmHeight => "arm_height",
            Param::ArmThickness => "arm_thickness",
        }
    }
}

// Leg thickness never exceeds half the smallest seat extent, and back/arm
// thickness stay below the smallest seat depth/half-width, so every in-range
// parameter vector realizes to disjoint boxes. Every range spans a ratio of at
// least 1.8^2 so a multiplicative change always fits in one direction.
const CHAIR_RANGES: [(f64, f64); PARAM_COUNT] = [
    (0.15, 0.90),
    (0.03, 0.12),
    (0.30, 1.00),
    (0.30, 1.00),
    (0.03, 0.15),
    (0.20, 0.90),
    (0.03, 0.12),
    (0.08, 0.35),
    (0.03, 0.12),
];

const TABLE_RANGES: [(f64, f64); PARAM_COUNT] = [
    (0.30, 1.20),
    (0.03, 0.15),
    (0.45, 1.50),
    (0.45, 1.50),
    (0.03, 0.15),
    (0.20, 0.90),
    (0.03, 0.12),
    (0.08, 0.35),
    (0.03, 0.12),
];

/// Valid `[min, max]` for a parameter of a category.
pub fn param_range(category: Category, param: Param) -> (f64, f64) {
    match category {
        Category::Chair => CHAIR_RANGES[param.index()],
        Category::Table => TABLE_RANGES[param.index()],
    }
}

/// Parametric chair or table. Tables never have a back or arms; their back
/// and arm parameters are carried but not realized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub category: Category,
    pub leg_height: f64,
    pub leg_thickness: f64,
    pub seat_width: f64,
    pub seat_depth: f64,
    pub seat_thickness: f64,
    pub back_height: f64,
    pub back_thickness: f64,
    pub arm_height: f64,
    pub arm_thickness: f64,
    pub has_arms: bool,
    pub has_back: bool,
}

impl ShapeParams {
    pub fn from_values(
        category: Category,
        values: [f64; PARAM_COUNT],
        has_arms: bool,
        has_back: bool,
    ) -> Self {
        Self {
            category,
            leg_height: values[0],
            leg_thickness: values[1],
            seat_width: values[2],
            seat_depth: values[3],
            seat_thickness: values[4],
            back_height: values[5],
            back_thickness: values[6],
            arm_height: values[7],
            arm_thickness: values[8],
            has_arms,
            has_back,
        }
    }

    /// Every continuous parameter at the middle of its range. Chairs get a
    /// back and arms.
    pub fn midpoint(category: Category) -> Self {
        let values = Param::ALL.map(|p| {
            let (lo, hi) = param_range(category, p);
            0.5 * (lo + hi)
        });
        let chair = category == Category::Chair;
        Self::from_values(category, values, chair, chair)
    }

    pub fn values(&self) -> [f64; PARAM_COUNT] {
        [
            self.leg_height,
            self.leg_thickness,
            self.seat_width,
            self.seat_depth,
            self.seat_thickness,
            self.back_height,
            self.back_thickness,
            self.arm_height,
            self.arm_thickness,
        ]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.values()[p.index()]
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let mut v = self.values();
        v[p.index()] = value;
        *self = Self::from_values(self.category, v, self.has_arms, self.has_back);
    }

    /// Parameters mapped linearly to `[0, 1]` within their ranges.
    pub fn normalized(&self) -> [f64; PARAM_COUNT] {
        let v = self.values();
        Param::ALL.map(|p| {
            let (lo, hi) = param_range(self.category, p);
            (v[p.index()] - lo) / (hi - lo)
        })
    }

    pub fn from_normalized(
        category: Category,
        unit: [f64; PARAM_COUNT],
        has_arms: bool,
        has_back: bool,
    ) -> Self {
        let values = Param::ALL.map(|p| {
            let (lo, hi) = param_range(category, p);
            lo + unit[p.index()] * (hi - lo)
        });
        Self::from_values(category, values, has_arms, has_back)
    }

    pub fn validate(&self) -> Result<()> {
        if self.category == Category::Table && (self.has_arms || self.has_back) {
            return Err(Error::Validity("tables cannot have arms or a back".into()));
        }
        for p in Param::ALL {
            let (lo, hi) = param_range(self.category, p);
            let x = self.get(p);
            if !(lo..=hi).contains(&x) {
                return Err(Error::Validity(format!(
                    "{} = {x} outside [{lo}, {hi}]",
                    p.name()
                )));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}
