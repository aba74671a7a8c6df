use std::f64::consts::LN_10;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeedit_core::metrics::*;
use shapeedit_core::shapeworld::dataset::template;
use shapeedit_core::shapeworld::{
    occupancy, param_range, realize_shape, region_volume, sample_shape, BoxSet, Category,
    DatasetConfig, Direction, EditAxis, LabeledBox, Param, Part, ShapeParams,
};
use shapeedit_core::Error;

fn b(min: [f64; 3], max: [f64; 3], part: Part) -> LabeledBox {
    LabeledBox::new(min, max, part)
}

/// One leg box of volume 0.1 far from a seat box of volume 0.9.
fn source() -> BoxSet {
    BoxSet::new(vec![
        b([0.0, 0.0, 0.0], [0.2, 0.5, 1.0], Part::Legs),
        b([0.0, 5.0, 0.0], [1.0, 5.9, 1.0], Part::Seat),
    ])
}

#[test]
fn mentioned_parts_follow_the_keyword_table() {
    assert_eq!(mentioned_parts("the legs are longer"), vec![Part::Legs]);
    assert_eq!(mentioned_parts("a leg"), vec![Part::Legs]);
    assert_eq!(
        mentioned_parts("the backrest and the seat"),
        vec![Part::Seat, Part::Back]
    );
    assert_eq!(mentioned_parts("wider armrests"), vec![Part::Armrests]);
    assert!(mentioned_parts("the chair is nice").is_empty());
    for axis in EditAxis::ALL {
        for dir in [Direction::Increase, Direction::Decrease] {
            assert_eq!(mentioned_parts(&template(axis, dir)), vec![axis.part]);
        }
    }
}

#[test]
fn relevant_region_examples() {
    let mut p = ShapeParams::midpoint(Category::Chair);
    p.has_arms = true;
    p.has_back = true;
    let src = realize_shape(&p).unwrap();
    let region = relevant_region(&src, "the legs are longer", 0.02).unwrap();
    assert_eq!(region.len(), 4);
    assert!(region.boxes.iter().all(|x| x.part == Part::Legs));
    assert_eq!(region, src.with_parts(&[Part::Legs]).swollen(0.02));
    assert_eq!(
        relevant_region(&src, "the legs are longer", 0.0).unwrap(),
        src.with_parts(&[Part::Legs])
    );
    assert!(matches!(
        relevant_region(&src, "the chair is nice", 0.02),
        Err(Error::MetricUndefined(_))
    ));
}

#[test]
fn delta_v_and_pct_change_examples() {
    let src = source();
    let region = src.with_parts(&[Part::Legs]).swollen(0.5);
    assert_eq!(delta_v(&region, &src, &src), 0.0);
    assert_eq!(pct_change(&region, &src, &src).unwrap(), 0.0);
    let longer = BoxSet::new(vec![
        b([0.0, -0.25, 0.0], [0.2, 0.5, 1.0], Part::Legs),
        src.boxes[1],
    ]);
    assert!((delta_v(&region, &longer, &src) - 0.05).abs() < 1e-12);
    assert!((pct_change(&region, &longer, &src).unwrap() - 0.5).abs() < 1e-12);

    // the whole shape growing by 10% along z
    let whole = src.swollen(1.0);
    let grown = BoxSet::new(
        src.boxes
            .iter()
            .map(|x| b(x.min, [x.max[0], x.max[1], 1.1], x.part))
            .collect(),
    );
    assert!((pct_change(&whole, &grown, &src).unwrap() - 0.1).abs() < 1e-12);

    let empty = BoxSet::new(vec![b([10.0, 10.0, 10.0], [11.0, 11.0, 11.0], Part::Back)]);
    assert!(matches!(
        pct_change(&empty, &grown, &src),
        Err(Error::MetricUndefined(_))
    ));
}

#[test]
fn pep_of_a_leg_only_edit_is_ln_ten() {
    let src = source();
    let edited = BoxSet::new(vec![
        b([0.0, -0.25, 0.0], [0.2, 0.5, 1.0], Part::Legs),
        src.boxes[1],
    ]);
    let e = pep(&src, &edited, "the legs are longer", 0.5);
    assert_eq!(e.flag, None);
    assert!((e.pct_relevant.unwrap() - 0.5).abs() < 1e-12);
    assert!((e.pct_whole.unwrap() - 0.05).abs() < 1e-12);
    assert!((e.pep.unwrap() - LN_10).abs() < 1e-12);
}

#[test]
fn uniform_change_gives_zero_pep() {
    let src = source();
    let grown = BoxSet::new(
        src.boxes
            .iter()
            .map(|x| b(x.min, [x.max[0], x.max[1], 1.1], x.part))
            .collect(),
    );
    let e = pep(&src, &grown, "the legs are longer", 0.5);
    assert!(e.pep.unwrap().abs() < 1e-9);
}

#[test]
fn change_outside_the_mentioned_parts_is_minus_infinity() {
    let src = source();
    let edited = BoxSet::new(vec![
        src.boxes[0],
        b([0.0, 5.0, 0.0], [1.0, 5.95, 1.0], Part::Seat),
    ]);
    let e = pep(&src, &edited, "the legs are longer", 0.02);
    assert!((e.delta_v_whole - 0.05).abs() < 1e-12);
    assert_eq!(e.pct_relevant, Some(0.0));
    assert_eq!(e.flag, Some(PepFlag::NoRelevantChange));
    assert_eq!(e.pep, None);
    assert_eq!(e.score(), Some(f64::NEG_INFINITY));
}

#[test]
fn identity_edit_is_flagged_not_zero() {
    let src = source();
    let e = pep(&src, &src, "the legs are longer", 0.02);
    assert_eq!(e.delta_v_relevant, 0.0);
    assert_eq!(e.flag, Some(PepFlag::NoChange));
    assert_eq!(e.score(), None);
    let e = pep(&src, &src, "the chair is nice", 0.02);
    assert_eq!(e.flag, Some(PepFlag::NoPartMentioned));
}

#[test]
fn missing_part_gives_an_empty_region_flag() {
    let src = source();
    let edited = BoxSet::new(vec![
        b([0.0, -0.25, 0.0], [0.2, 0.5, 1.0], Part::Legs),
        src.boxes[1],
    ]);
    assert_eq!(
        pep(&src, &edited, "the armrests are taller", 0.02).flag,
        Some(PepFlag::EmptyRelevantRegion)
    );
}

fn entry(pep: Option<f64>, flag: Option<PepFlag>, dv: f64) -> PepEntry {
    PepEntry {
        utterance: "u".into(),
        delta_v_whole: dv,
        delta_v_relevant: 0.0,
        pct_whole: None,
        pct_relevant: None,
        pep,
        flag,
    }
}

#[test]
fn aggregate_examples() {
    let s = aggregate(&[entry(Some(2.3), None, 0.1)], 0.02).unwrap();
    assert_eq!((s.mean_pep, s.mean_delta_v, s.defined), (2.3, 0.1, 1));
    let s = aggregate(
        &[
            entry(Some(0.0), None, 0.1),
            entry(Some(2.0 * LN_10), None, 0.3),
            entry(None, Some(PepFlag::NoRelevantChange), 5.0),
            entry(None, Some(PepFlag::NoChange), 0.0),
        ],
        0.02,
    )
    .unwrap();
    assert!((s.mean_pep - LN_10).abs() < 1e-15);
    assert!((s.mean_delta_v - 0.2).abs() < 1e-15);
    assert_eq!(s.flagged["no_relevant_change"], 1);
    assert_eq!(s.flagged["no_change"], 1);
    assert_eq!(s.log_base, "e");
    assert!(matches!(
        aggregate(&[entry(None, Some(PepFlag::NoChange), 0.0)], 0.02),
        Err(Error::MetricUndefined(_))
    ));
    assert!(aggregate(&[], 0.02).is_err());
}

#[test]
fn pep_report_lines_end_with_the_aggregate() {
    let entries = vec![entry(Some(1.0), None, 0.1), entry(Some(2.0), None, 0.2)];
    let summary = aggregate(&entries, 0.02).unwrap();
    let mut buf = Vec::new();
    write_pep_report(&mut buf, &entries, &summary).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["record"], "aggregate");
    assert_eq!(lines[2]["summary"]["mean_pep"], 1.5);
}

/// Stratified Monte Carlo estimate of |integral over `region` of
/// (occ_edited - occ_source)| from about `n` jittered samples split across the
/// region boxes; overlapping region boxes share their points.
fn monte_carlo_delta_v(
    region: &BoxSet,
    edited: &BoxSet,
    source: &BoxSet,
    n: usize,
    rng: &mut impl Rng,
) -> f64 {
    let per_axis = ((n / region.len()) as f64).cbrt() as usize;
    let mut total = 0.0;
    for r in &region.boxes {
        let step: Vec<f64> = (0..3)
            .map(|a| (r.max[a] - r.min[a]) / per_axis as f64)
            .collect();
        let mut sum = 0.0;
        for i in 0..per_axis {
            for j in 0..per_axis {
                for k in 0..per_axis {
                    let cell = [i, j, k];
                    let x = std::array::from_fn(|a| {
                        r.min[a] + (cell[a] as f64 + rng.random::<f64>()) * step[a]
                    });
                    let diff = occupancy(edited, x) as f64 - occupancy(source, x) as f64;
                    if diff != 0.0 {
                        sum += diff / region.boxes.iter().filter(|o| o.contains(x)).count() as f64;
                    }
                }
            }
        }
        total += sum * step.iter().product::<f64>();
    }
    total.abs()
}

fn random_edit(rng: &mut impl Rng) -> (ShapeParams, ShapeParams, Param) {
    let src = sample_shape(&DatasetConfig::default(), rng);
    let axes = EditAxis::available(&src);
    let param = axes[rng.random_range(0..axes.len())].param();
    let (lo, hi) = param_range(src.category, param);
    let mut edited = src.clone();
    let factor = if rng.random::<bool>() { 1.5 } else { 1.0 / 1.5 };
    edited.set(param, (src.get(param) * factor).clamp(lo, hi));
    (src, edited, param)
}

#[test]
fn delta_v_matches_monte_carlo_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 100 {
        let (src, edited, param) = random_edit(&mut rng);
        let axis = EditAxis::from_param(param);
        let (s, e) = (
            realize_shape(&src).unwrap(),
            realize_shape(&edited).unwrap(),
        );
        let region =
            relevant_region(&s, &template(axis, Direction::Increase), DEFAULT_SWELL).unwrap();
        let exact = delta_v(&region, &e, &s);
        // skip edits whose net change is too small to resolve by sampling
        let region_vol: f64 = region.boxes.iter().map(|r| r.volume()).sum();
        if exact < 0.01 * region_vol {
            continue;
        }
        let mc = monte_carlo_delta_v(&region, &e, &s, 1_000_000, &mut rng);
        assert!(
            (mc - exact).abs() <= 0.02 * exact,
            "{param:?}: analytic {exact} monte carlo {mc}"
        );
        let base = region_volume(&s, &region);
        assert!((pct_change(&region, &e, &s).unwrap() - exact / base).abs() < 1e-12);
        checked += 1;
    }
}

#[test]
fn envelope_contains_its_bulk_and_rejects_outliers() {
    let cfg = DatasetConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes: Vec<ShapeParams> = (0..2000).map(|_| sample_shape(&cfg, &mut rng)).collect();
    let env = Envelope::from_shapes(&shapes);
    let rate = env.validity_rate(&shapes);
    assert!(rate > 0.8 && rate < 1.0, "{rate}");
    let mut p = shapes[0].clone();
    let (_, hi) = param_range(p.category, Param::LegHeight);
    p.set(Param::LegHeight, hi * 2.0);
    assert!(!env.contains(&p));
    let chairs_only = Envelope::from_shapes(&[ShapeParams::midpoint(Category::Chair)]);
    assert!(!chairs_only.contains(&ShapeParams::midpoint(Category::Table)));
    assert!(chairs_only.contains(&ShapeParams::midpoint(Category::Chair)));
    assert_eq!(env.validity_rate(&[]), 0.0);
}

/// Disjoint boxes spaced 3 units apart along x.
fn spaced_boxes(sizes: &[(f64, f64, f64)]) -> BoxSet {
    let parts = [Part::Legs, Part::Seat, Part::Back, Part::Armrests];
    BoxSet::new(
        sizes
            .iter()
            .enumerate()
            .map(|(i, &(w, h, d))| {
                b(
                    [3.0 * i as f64, 0.0, 0.0],
                    [3.0 * i as f64 + w, h, d],
                    parts[i % 4],
                )
            })
            .collect(),
    )
}

proptest! {
    #[test]
    fn enlarging_the_region_never_decreases_region_volume(
        sizes in prop::collection::vec((0.1f64..1.0, 0.1f64..1.0, 0.1f64..1.0), 1..5),
        swell in 0.0f64..0.3,
        extra in 0.0f64..0.5,
    ) {
        let shape = spaced_boxes(&sizes);
        let region = shape.with_parts(&[Part::Legs]).swollen(swell);
        let shifted = BoxSet::new(shape.boxes.iter().map(|x| {
            b([x.min[0] + 0.3, x.min[1] - 0.1, x.min[2]], [x.max[0] + 0.3, x.max[1], x.max[2] + 0.2], x.part)
        }).collect());
        prop_assert!(region_volume(&shifted, &region) <= region_volume(&shifted, &region.swollen(extra)) + 1e-12);
        prop_assert!(region_volume(&shape, &region) <= region_volume(&shape, &region.swollen(extra)) + 1e-12);
    }

    #[test]
    fn outward_growth_keeps_relevant_change_monotone_in_swell(
        sizes in prop::collection::vec((0.1f64..1.0, 0.1f64..1.0, 0.1f64..1.0), 2..5),
        grow in (0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5),
        s1 in 0.0f64..0.3,
        ds in 0.0f64..0.3,
    ) {
        let src = spaced_boxes(&sizes);
        let mut boxes = src.boxes.clone();
        let leg = &mut boxes[0];
        leg.min[0] -= grow.0;
        leg.max[0] += grow.1;
        leg.max[1] += grow.2;
        leg.max[2] += grow.3;
        let edited = BoxSet::new(boxes);
        let small = delta_v(&relevant_region(&src, "legs", s1).unwrap(), &edited, &src);
        let large = delta_v(&relevant_region(&src, "legs", s1 + ds).unwrap(), &edited, &src);
        prop_assert!(large + 1e-12 >= small);
        if small > 0.0 {
            prop_assert!(pep(&src, &edited, "legs", s1 + ds).flag != Some(PepFlag::NoRelevantChange));
        }
    }

    #[test]
    fn pep_is_zero_for_proportional_growth(
        sizes in prop::collection::vec((0.1f64..1.0, 0.1f64..1.0, 0.1f64..1.0), 1..5),
        pct in 0.01f64..0.5,
    ) {
        let src = spaced_boxes(&sizes);
        let grown = BoxSet::new(src.boxes.iter().map(|x| {
            b(x.min, [x.max[0], x.max[1], x.min[2] + (x.max[2] - x.min[2]) * (1.0 + pct)], x.part)
        }).collect());
        let e = pep(&src, &grown, "the legs", 1.0);
        prop_assert!(e.pep.unwrap().abs() < 1e-9);
    }
}
