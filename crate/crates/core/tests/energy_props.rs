use bannerforge_core::energy::{
    distance_energy, misalignment_energy, overlap_energy, overlap_fraction, symmetry_energy,
    total_energy, DimBounds, ElementBox, ElementKind, EnergyWeights, Layout, SizeBounds,
};
use bannerforge_core::BBox;
use proptest::prelude::*;

/// IoU by counting unit cells of the integer grid.
fn pixel_iou(a: [u32; 4], b: [u32; 4]) -> f64 {
    let inside = |r: [u32; 4], x: u32, y: u32| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..64 {
        for x in 0..64 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u32;
            union += (ia || ib) as u32;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn int_box() -> impl Strategy<Value = [u32; 4]> {
    (0u32..63, 0u32..63).prop_flat_map(|(x, y)| {
        (Just(x), Just(y), x + 1..=64, y + 1..=64).prop_map(|(x, y, r, b)| [x, y, r, b])
    })
}

fn to_bbox(r: [u32; 4]) -> BBox {
    BBox::new(r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64)
}

fn bbox_in(w: f64, h: f64) -> impl Strategy<Value = BBox> {
    (0.0..w - 10.0, 0.0..h - 10.0, 5.0..60.0f64, 5.0..60.0f64).prop_map(
        move |(x, y, bw, bh): (f64, f64, f64, f64)| {
            BBox::new(x, y, (x + bw).min(w), (y + bh).min(h))
        },
    )
}

fn layout_strategy() -> impl Strategy<Value = Layout> {
    (
        bbox_in(400.0, 300.0),
        bbox_in(400.0, 300.0),
        bbox_in(400.0, 300.0),
        any::<bool>(),
    )
        .prop_map(|(l, t, p, with_fixed)| {
            let mut lay = Layout::new(400.0, 300.0)
                .with(ElementBox::movable(ElementKind::Logo, l))
                .with(ElementBox::movable(ElementKind::Text, t));
            if with_fixed {
                lay = lay.with(ElementBox::fixed(ElementKind::Person, p));
            }
            lay
        })
}

fn translated(l: &Layout, dx: f64, dy: f64) -> Layout {
    let mut out = l.clone();
    for e in &mut out.elements {
        e.bbox = e.bbox.translate(dx, dy);
    }
    out
}

fn loose() -> SizeBounds {
    SizeBounds {
        logo: DimBounds::new(1.0, 400.0, 1.0, 300.0),
        text: DimBounds::new(1.0, 400.0, 1.0, 300.0),
    }
}

proptest! {
    #[test]
    fn overlap_matches_pixel_count(a in int_box(), b in int_box()) {
        let got = overlap_fraction(&to_bbox(a), &to_bbox(b));
        prop_assert!((got - pixel_iou(a, b)).abs() < 1e-9);
        prop_assert_eq!(got, overlap_fraction(&to_bbox(b), &to_bbox(a)));
    }

    #[test]
    fn terms_bounded(l in layout_strategy()) {
        for v in [overlap_energy(&l), distance_energy(&l), symmetry_energy(&l), misalignment_energy(&l)] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn pairwise_terms_are_translation_invariant(l in layout_strategy(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let t = translated(&l, dx, dy);
        prop_assert!((overlap_energy(&l) - overlap_energy(&t)).abs() < 1e-9);
        prop_assert!((distance_energy(&l) - distance_energy(&t)).abs() < 1e-9);
        prop_assert!((misalignment_energy(&l) - misalignment_energy(&t)).abs() < 1e-9);
    }

    #[test]
    fn mirror_invariant_without_alignment(l in layout_strategy(), w in prop::array::uniform3(0.0..3.0f64)) {
        let weights = EnergyWeights::new(0.0, w[0], w[1], w[2]);
        let a = total_energy(&l, &weights, &loose());
        let b = total_energy(&l.mirrored(), &weights, &loose());
        prop_assert!((a.total - b.total).abs() < 1e-9);
        prop_assert_eq!(a.feasible, b.feasible);
    }

    #[test]
    fn total_is_linear_in_weights(l in layout_strategy(), w in prop::array::uniform4(0.0..3.0f64), k in 0.0..5.0f64) {
        let weights = EnergyWeights::new(w[0], w[1], w[2], w[3]);
        let e = total_energy(&l, &weights, &loose());
        let e_k = total_energy(&l, &weights.scaled(k), &loose());
        prop_assert!((e_k.total - k * e.total).abs() < 1e-9);
        let hand: f64 = e.terms().iter().zip(w).map(|(t, w)| t * w).sum();
        prop_assert!((e.total - hand).abs() < 1e-12);
    }
}

#[test]
fn left_alignment_breaks_mirror_symmetry() {
    // left edges 10 apart, right edges 50 apart: mirrored, the right edges become left edges
    let l = Layout::new(100.0, 100.0)
        .with(ElementBox::movable(
            ElementKind::Logo,
            BBox::new(10.0, 0.0, 30.0, 10.0),
        ))
        .with(ElementBox::movable(
            ElementKind::Text,
            BBox::new(20.0, 50.0, 80.0, 60.0),
        ));
    assert!((misalignment_energy(&l) - 0.05).abs() < 1e-12);
    assert!((misalignment_energy(&l.mirrored()) - 0.10).abs() < 1e-12);
}
