//! Layout model and aesthetic energy.
//!
//! A [`Layout`] holds fixed background boxes (persons, objects) and movable
//! design elements (logo, text). Each energy term is a non-negative penalty
//! normalised to roughly `[0, 1]`; the total is their weighted sum and lower
//! is better.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ImageAnnotation;
use crate::geometry::{dominant_index, BBox};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("invalid size bounds for {kind}: {reason}")]
    Bounds { kind: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Logo,
    Text,
    Person,
    Object,
}

impl ElementKind {
    pub fn is_movable(self) -> bool {
        matches!(self, ElementKind::Logo | ElementKind::Text)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Logo => "logo",
            ElementKind::Text => "text",
            ElementKind::Person => "person",
            ElementKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementBox {
    pub kind: ElementKind,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub movable: bool,
    /// Face box for person elements; used as the anchor for distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<BBox>,
}

impl ElementBox {
    pub fn movable(kind: ElementKind, bbox: BBox) -> Self {
        Self {
            kind,
            bbox,
            movable: true,
            face: None,
        }
    }

    pub fn fixed(kind: ElementKind, bbox: BBox) -> Self {
        Self {
            kind,
            bbox,
            movable: false,
            face: None,
        }
    }

    pub fn with_face(mut self, face: BBox) -> Self {
        self.face = Some(face);
        self
    }

    /// Box whose center is used for distance: the face for persons, when known.
    fn distance_anchor(&self) -> &BBox {
        match (self.kind, &self.face) {
            (ElementKind::Person, Some(face)) => face,
            _ => &self.bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub canvas_width: f64,
    pub canvas_height: f64,
    pub elements: Vec<ElementBox>,
}

impl Layout {
    pub fn new(canvas_width: f64, canvas_height: f64) -> Self {
        Self {
            canvas_width,
            canvas_height,
            elements: Vec::new(),
        }
    }

    pub fn with(mut self, element: ElementBox) -> Self {
        self.elements.push(element);
        self
    }

    pub fn movable(&self) -> impl Iterator<Item = &ElementBox> {
        self.elements.iter().filter(|e| e.movable)
    }

    pub fn of_kind(&self, kind: ElementKind) -> impl Iterator<Item = &ElementBox> {
        self.elements.iter().filter(move |e| e.kind == kind)
    }

    pub fn diagonal(&self) -> f64 {
        self.canvas_width.hypot(self.canvas_height)
    }

    /// Reflect every element about the vertical center line.
    pub fn mirrored(&self) -> Layout {
        let w = self.canvas_width;
        Layout {
            canvas_width: w,
            canvas_height: self.canvas_height,
            elements: self
                .elements
                .iter()
                .map(|e| ElementBox {
                    bbox: e.bbox.mirror_x(w),
                    face: e.face.map(|f| f.mirror_x(w)),
                    ..*e
                })
                .collect(),
        }
    }

    /// Background boxes of an annotated image: persons (with their
    /// dominant contained face) and articles as fixed objects.
    pub fn fixed_from_annotation(ann: &ImageAnnotation) -> Vec<ElementBox> {
        let mut out = Vec::new();
        for p in &ann.persons {
            let inside: Vec<BBox> = ann
                .faces
                .iter()
                .map(|f| f.bbox)
                .filter(|f| {
                    let (cx, cy) = f.center();
                    p.contains_point(cx, cy)
                })
                .collect();
            let mut e = ElementBox::fixed(ElementKind::Person, *p);
            if let Some(i) = dominant_index(&inside) {
                e = e.with_face(inside[i]);
            }
            out.push(e);
        }
        for a in &ann.articles {
            out.push(ElementBox::fixed(ElementKind::Object, a.bbox));
        }
        out
    }

    /// Layout of an existing banner: its annotated background plus the
    /// detected text regions as text elements.
    pub fn from_annotation(ann: &ImageAnnotation) -> Layout {
        let mut layout = Layout::new(ann.width as f64, ann.height as f64);
        layout.elements = Self::fixed_from_annotation(ann);
        for t in &ann.text_regions {
            layout
                .elements
                .push(ElementBox::movable(ElementKind::Text, *t));
        }
        layout
    }
}

/// Weights of the four energy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub w_align: f64,
    pub w_overlap: f64,
    pub w_dist: f64,
    pub w_sym: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w_align: 1.0,
            w_overlap: 4.0,
            w_dist: 1.0,
            w_sym: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn new(w_align: f64, w_overlap: f64, w_dist: f64, w_sym: f64) -> Self {
        Self {
            w_align,
            w_overlap,
            w_dist,
            w_sym,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w_align, self.w_overlap, self.w_dist, self.w_sym]
    }

    pub fn scaled(&self, k: f64) -> Self {
        let [a, o, d, s] = self.as_array();
        Self::new(a * k, o * k, d * k, s * k)
    }

    pub fn check(&self) -> Result<(), EnergyError> {
        let w = self.as_array();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EnergyError::Weights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(EnergyError::Weights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Allowed width/height range of one element kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimBounds {
    pub min_width: f64,
    pub max_width: f64,
    pub min_height: f64,
    pub max_height: f64,
}

impl DimBounds {
    pub fn new(min_width: f64, max_width: f64, min_height: f64, max_height: f64) -> Self {
        Self {
            min_width,
            max_width,
            min_height,
            max_height,
        }
    }

    /// A single admissible size.
    pub fn exact(width: f64, height: f64) -> Self {
        Self::new(width, width, height, height)
    }

    pub fn admits(&self, width: f64, height: f64) -> bool {
        width >= self.min_width
            && width <= self.max_width
            && height >= self.min_height
            && height <= self.max_height
    }
}

/// The buffer region per movable element kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBounds {
    pub logo: DimBounds,
    pub text: DimBounds,
}

impl SizeBounds {
    pub fn for_kind(&self, kind: ElementKind) -> Option<&DimBounds> {
        match kind {
            ElementKind::Logo => Some(&self.logo),
            ElementKind::Text => Some(&self.text),
            _ => None,
        }
    }

    pub fn check(&self, canvas_width: f64, canvas_height: f64) -> Result<(), EnergyError> {
        for (kind, b) in [("logo", &self.logo), ("text", &self.text)] {
            let ok = b.min_width > 0.0
                && b.min_height > 0.0
                && b.min_width <= b.max_width
                && b.min_height <= b.max_height
                && b.max_width <= canvas_width
                && b.max_height <= canvas_height;
            if !ok {
                return Err(EnergyError::Bounds {
                    kind,
                    reason: format!(
                        "need 0 < min <= max <= canvas ({canvas_width}x{canvas_height}), got {b:?}"
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_align: f64,
    pub e_overlap: f64,
    pub e_dist: f64,
    pub e_sym: f64,
    pub total: f64,
    pub feasible: bool,
}

impl EnergyBreakdown {
    pub fn terms(&self) -> [f64; 4] {
        [self.e_align, self.e_overlap, self.e_dist, self.e_sym]
    }
}

/// Intersection over union of two boxes.
pub fn overlap_fraction(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Unordered element pairs that take part in pairwise penalties: every pair
/// with at least one movable element.
fn scored_pairs(layout: &Layout) -> impl Iterator<Item = (&ElementBox, &ElementBox)> {
    let els = &layout.elements;
    (0..els.len())
        .flat_map(move |i| (i + 1..els.len()).map(move |j| (&els[i], &els[j])))
        .filter(|(a, b)| a.movable || b.movable)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean overlap fraction over scored pairs.
pub fn overlap_energy(layout: &Layout) -> f64 {
    mean(scored_pairs(layout).map(|(a, b)| overlap_fraction(&a.bbox, &b.bbox)))
}

pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Closeness cutoff as a fraction of the canvas diagonal.
pub const DISTANCE_REF_FRACTION: f64 = 0.25;

/// Mean closeness penalty `max(0, 1 - d / d_ref)` over scored pairs.
pub fn distance_energy(layout: &Layout) -> f64 {
    let d_ref = DISTANCE_REF_FRACTION * layout.diagonal();
    if d_ref <= 0.0 {
        return 0.0;
    }
    mean(scored_pairs(layout).map(|(a, b)| {
        let d = center_distance(a.distance_anchor(), b.distance_anchor());
        (1.0 - d / d_ref).max(0.0)
    }))
}

/// `|2 * x_center - layout_width|`.
pub fn horizontal_asymmetry(b: &BBox, layout_width: f64) -> f64 {
    let x_center = (b.x_left + b.x_right) / 2.0;
    (2.0 * x_center - layout_width).abs()
}

/// Mean normalised horizontal asymmetry of the movable elements.
pub fn symmetry_energy(layout: &Layout) -> f64 {
    let w = layout.canvas_width;
    if w <= 0.0 {
        return 0.0;
    }
    mean(
        layout
            .movable()
            .map(|e| horizontal_asymmetry(&e.bbox, w) / w),
    )
}

/// Penalty factor applied to left-edge deviation; left alignment is cheaper.
pub const LEFT_ALIGN_FACTOR: f64 = 0.5;

/// Alignment deviation of one pair, in pixels.
pub fn pair_misalignment(a: &BBox, b: &BBox) -> f64 {
    let left = LEFT_ALIGN_FACTOR * (a.x_left - b.x_left).abs();
    let center = (a.center().0 - b.center().0).abs();
    let right = (a.x_right - b.x_right).abs();
    left.min(center).min(right)
}

/// Mean over movable pairs of the best-candidate deviation, normalised by
/// canvas width and clamped to `[0, 1]`.
pub fn misalignment_energy(layout: &Layout) -> f64 {
    let w = layout.canvas_width;
    let movable: Vec<&ElementBox> = layout.movable().collect();
    if movable.len() < 2 || w <= 0.0 {
        return 0.0;
    }
    let pairs = (0..movable.len())
        .flat_map(|i| (i + 1..movable.len()).map(move |j| (i, j)))
        .map(|(i, j)| pair_misalignment(&movable[i].bbox, &movable[j].bbox) / w);
    mean(pairs).clamp(0.0, 1.0)
}

/// Slack, in pixels, absorbing floating-point rounding of `x + width`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Every movable element is on-canvas and sized within its kind's bounds.
pub fn feasible(layout: &Layout, bounds: &SizeBounds) -> bool {
    let tol = FEASIBILITY_TOLERANCE;
    layout.movable().all(|e| {
        let b = &e.bbox;
        let on_canvas = b.x_left >= -tol
            && b.y_top >= -tol
            && b.x_right <= layout.canvas_width + tol
            && b.y_bottom <= layout.canvas_height + tol
            && b.x_left < b.x_right
            && b.y_top < b.y_bottom;
        let sized = bounds.for_kind(e.kind).is_some_and(|d| {
            let (w, h) = (b.width(), b.height());
            w >= d.min_width - tol
                && w <= d.max_width + tol
                && h >= d.min_height - tol
                && h <= d.max_height + tol
        });
        on_canvas && sized
    })
}

/// Weighted energy `w . (e_align, e_overlap, e_dist, e_sym)`.
pub fn total_energy(layout: &Layout, w: &EnergyWeights, bounds: &SizeBounds) -> EnergyBreakdown {
    let e_align = misalignment_energy(layout);
    let e_overlap = overlap_energy(layout);
    let e_dist = distance_energy(layout);
    let e_sym = symmetry_energy(layout);
    let total = w.w_align * e_align + w.w_overlap * e_overlap + w.w_dist * e_dist + w.w_sym * e_sym;
    EnergyBreakdown {
        e_align,
        e_overlap,
        e_dist,
        e_sym,
        total,
        feasible: feasible(layout, bounds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn text(b: BBox) -> ElementBox {
        ElementBox::movable(ElementKind::Text, b)
    }

    fn logo(b: BBox) -> ElementBox {
        ElementBox::movable(ElementKind::Logo, b)
    }

    fn loose_bounds() -> SizeBounds {
        let b = DimBounds::new(1.0, 1000.0, 1.0, 1000.0);
        SizeBounds { logo: b, text: b }
    }

    #[test]
    fn overlap_fraction_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(overlap_fraction(&a, &BBox::new(3.0, 3.0, 4.0, 4.0)), 0.0);
        assert_eq!(overlap_fraction(&a, &a), 1.0);
        let b = BBox::new(1.0, 0.0, 3.0, 2.0);
        assert!((overlap_fraction(&a, &b) - 2.0 / 6.0).abs() < EPS);
        assert_eq!(overlap_fraction(&a, &b), overlap_fraction(&b, &a));
    }

    #[test]
    fn overlap_energy_examples() {
        let disjoint = Layout::new(100.0, 100.0)
            .with(logo(BBox::new(0.0, 0.0, 10.0, 10.0)))
            .with(text(BBox::new(50.0, 50.0, 70.0, 60.0)));
        assert_eq!(overlap_energy(&disjoint), 0.0);

        let stacked = Layout::new(100.0, 100.0)
            .with(logo(BBox::new(0.0, 0.0, 10.0, 10.0)))
            .with(text(BBox::new(0.0, 0.0, 10.0, 10.0)));
        assert_eq!(overlap_energy(&stacked), 1.0);

        // pairs logo-text (IoU 6/12), logo-person (0), text-person (0)
        let three = Layout::new(100.0, 100.0)
            .with(logo(BBox::new(0.0, 0.0, 4.0, 3.0)))
            .with(text(BBox::new(0.0, 0.0, 4.0, 1.5)))
            .with(ElementBox::fixed(
                ElementKind::Person,
                BBox::new(50.0, 50.0, 60.0, 90.0),
            ));
        assert!((overlap_energy(&three) - 0.5 / 3.0).abs() < EPS);

        let single = Layout::new(10.0, 10.0).with(logo(BBox::new(0.0, 0.0, 1.0, 1.0)));
        assert_eq!(overlap_energy(&single), 0.0);
    }

    #[test]
    fn fixed_pairs_are_ignored() {
        let l = Layout::new(100.0, 100.0)
            .with(ElementBox::fixed(
                ElementKind::Person,
                BBox::new(0.0, 0.0, 50.0, 50.0),
            ))
            .with(ElementBox::fixed(
                ElementKind::Object,
                BBox::new(0.0, 0.0, 50.0, 50.0),
            ));
        assert_eq!(overlap_energy(&l), 0.0);
        assert_eq!(distance_energy(&l), 0.0);
    }

    #[test]
    fn center_distance_examples() {
        let a = BBox::new(-1.0, -1.0, 1.0, 1.0);
        assert_eq!(center_distance(&a, &a), 0.0);
        assert_eq!(center_distance(&a, &a.translate(3.0, 4.0)), 5.0);
        let p = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(center_distance(&p, &p.translate(0.0, 8.0)), 8.0);
    }

    #[test]
    fn distance_energy_examples() {
        // 300 x 400 canvas: diagonal 500, d_ref 125
        let coincident = Layout::new(300.0, 400.0)
            .with(logo(BBox::new(10.0, 10.0, 30.0, 30.0)))
            .with(text(BBox::new(0.0, 0.0, 40.0, 40.0)));
        assert!((distance_energy(&coincident) - 1.0).abs() < EPS);

        let far = Layout::new(300.0, 400.0)
            .with(logo(BBox::new(0.0, 0.0, 10.0, 10.0)))
            .with(text(BBox::new(200.0, 300.0, 210.0, 310.0)));
        assert_eq!(distance_energy(&far), 0.0);

        let half = Layout::new(300.0, 400.0)
            .with(logo(BBox::new(0.0, 0.0, 10.0, 10.0)))
            .with(text(BBox::new(62.5, 0.0, 72.5, 10.0)));
        assert!((distance_energy(&half) - 0.5).abs() < EPS);
    }

    #[test]
    fn distance_uses_face_anchor() {
        let person = ElementBox::fixed(ElementKind::Person, BBox::new(100.0, 0.0, 200.0, 400.0))
            .with_face(BBox::new(140.0, 20.0, 160.0, 40.0));
        let l = Layout::new(300.0, 400.0)
            .with(person)
            .with(logo(BBox::new(140.0, 20.0, 160.0, 40.0)));
        assert!((distance_energy(&l) - 1.0).abs() < EPS);
        let mut no_face = l.clone();
        no_face.elements[0].face = None;
        assert!(distance_energy(&no_face) < 1.0);
    }

    #[test]
    fn asymmetry_examples() {
        assert_eq!(
            horizontal_asymmetry(&BBox::new(100.0, 0.0, 300.0, 1.0), 400.0),
            0.0
        );
        assert_eq!(
            horizontal_asymmetry(&BBox::new(0.0, 0.0, 100.0, 1.0), 400.0),
            300.0
        );
        assert_eq!(
            horizontal_asymmetry(&BBox::new(300.0, 0.0, 400.0, 1.0), 400.0),
            300.0
        );
    }

    #[test]
    fn symmetry_energy_examples() {
        let centered = Layout::new(400.0, 100.0)
            .with(logo(BBox::new(150.0, 0.0, 250.0, 20.0)))
            .with(text(BBox::new(100.0, 40.0, 300.0, 60.0)));
        assert_eq!(symmetry_energy(&centered), 0.0);

        let left = Layout::new(400.0, 100.0).with(text(BBox::new(0.0, 0.0, 100.0, 20.0)));
        assert!((symmetry_energy(&left) - 0.75).abs() < EPS);
        assert!((symmetry_energy(&left.mirrored()) - 0.75).abs() < EPS);
    }

    #[test]
    fn misalignment_examples() {
        let shared_left = Layout::new(100.0, 100.0)
            .with(text(BBox::new(10.0, 0.0, 40.0, 10.0)))
            .with(text(BBox::new(10.0, 20.0, 80.0, 30.0)));
        assert_eq!(misalignment_energy(&shared_left), 0.0);

        let shared_center = Layout::new(100.0, 100.0)
            .with(text(BBox::new(40.0, 0.0, 60.0, 10.0)))
            .with(text(BBox::new(20.0, 20.0, 80.0, 30.0)));
        assert_eq!(misalignment_energy(&shared_center), 0.0);

        // left edges 10 apart, centers 30 apart, right edges 50 apart
        let a = BBox::new(0.0, 0.0, 20.0, 10.0);
        let b = BBox::new(10.0, 20.0, 70.0, 30.0);
        assert_eq!(
            (
                b.x_left - a.x_left,
                b.center().0 - a.center().0,
                b.x_right - a.x_right
            ),
            (10.0, 30.0, 50.0)
        );
        let l = Layout::new(100.0, 100.0).with(text(a)).with(text(b));
        assert!((misalignment_energy(&l) - 0.05).abs() < EPS);

        let lone = Layout::new(100.0, 100.0).with(text(a));
        assert_eq!(misalignment_energy(&lone), 0.0);
    }

    #[test]
    fn feasibility_examples() {
        let bounds = SizeBounds {
            logo: DimBounds::new(50.0, 120.0, 25.0, 60.0),
            text: DimBounds::new(50.0, 300.0, 20.0, 100.0),
        };
        let ok = Layout::new(400.0, 200.0).with(logo(BBox::from_xywh(10.0, 10.0, 80.0, 40.0)));
        assert!(feasible(&ok, &bounds));
        let past_edge =
            Layout::new(400.0, 200.0).with(text(BBox::from_xywh(350.0, 10.0, 100.0, 40.0)));
        assert!(!feasible(&past_edge, &bounds));
        let thin = Layout::new(400.0, 200.0).with(logo(BBox::from_xywh(10.0, 10.0, 40.0, 40.0)));
        assert!(!feasible(&thin, &bounds));
    }

    #[test]
    fn total_energy_examples() {
        let disjoint = Layout::new(400.0, 400.0)
            .with(logo(BBox::new(0.0, 0.0, 10.0, 10.0)))
            .with(text(BBox::new(300.0, 300.0, 390.0, 320.0)));
        let only_overlap = EnergyWeights::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(
            total_energy(&disjoint, &only_overlap, &loose_bounds()).total,
            0.0
        );

        let l = Layout::new(200.0, 100.0)
            .with(logo(BBox::new(10.0, 10.0, 50.0, 30.0)))
            .with(text(BBox::new(30.0, 20.0, 120.0, 40.0)));
        let w = EnergyWeights::new(1.3, 0.7, 2.0, 0.4);
        let once = total_energy(&l, &w, &loose_bounds());
        let twice = total_energy(&l, &w.scaled(2.0), &loose_bounds());
        assert!((twice.total - 2.0 * once.total).abs() < EPS);

        // hand recomputation with unit weights
        let inter = 20.0 * 10.0;
        let e_overlap = inter / (800.0 + 1800.0 - inter);
        let d_ref = 0.25 * (200.0f64).hypot(100.0);
        let d = (75.0f64 - 30.0).hypot(30.0 - 20.0);
        let e_dist = (1.0 - d / d_ref).max(0.0);
        let e_sym =
            ((2.0f64 * 30.0 - 200.0).abs() / 200.0 + (2.0f64 * 75.0 - 200.0).abs() / 200.0) / 2.0;
        let e_align = (0.5f64 * 20.0).min(45.0).min(70.0) / 200.0;
        let unit = total_energy(&l, &EnergyWeights::new(1.0, 1.0, 1.0, 1.0), &loose_bounds());
        assert!((unit.total - (e_overlap + e_dist + e_sym + e_align)).abs() < EPS);
        assert!(unit.feasible);
    }

    #[test]
    fn weight_checks() {
        assert!(EnergyWeights::default().check().is_ok());
        assert!(EnergyWeights::new(0.0, 0.0, 0.0, 0.0).check().is_err());
        assert!(EnergyWeights::new(-1.0, 1.0, 0.0, 0.0).check().is_err());
    }
}
