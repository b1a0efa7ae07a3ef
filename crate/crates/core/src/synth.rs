//! Synthetic corpora with a planted click model.
//!
//! Historical banners get randomised persons, faces, articles, scene labels
//! and one text region. The text region covers a uniformly drawn fraction of
//! the dominant face, and click probability falls with that fraction, so the
//! `overlap_text_face` feature carries all of the signal. Calibration
//! records follow a known linear CTR model.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotation::{
    dominant_face, ArticleAnnotation, ArticleCategory, Environment, FaceAnnotation, Gender,
    ImageAnnotation,
};
use crate::calibration::HistoricalBannerRecord;
use crate::compositor::{Raster, Rgba};
use crate::energy::{DimBounds, ElementBox, ElementKind, EnergyWeights, Layout, SizeBounds};
use crate::features::{extract, FeatureSchema, FeatureVector, DEFAULT_K_SCENE};
use crate::ga::{seeded_rng, LayoutProblem, MovableSpec, Rng64};
use crate::geometry::BBox;
use crate::ranker::{Dataset, LabelRecord, RankerError};

pub const PLANTED_FEATURE: &str = "overlap_text_face";
/// Recorded CTR is this multiple of the click probability.
pub const CTR_SCALE: f64 = 0.1;

pub const SCENE_CATEGORIES: [&str; 20] = [
    "street",
    "garden",
    "beach",
    "studio",
    "cafe",
    "park",
    "living_room",
    "office",
    "mall",
    "rooftop",
    "forest",
    "desert",
    "gym",
    "library",
    "restaurant",
    "subway",
    "bridge",
    "harbor",
    "field",
    "stadium",
];
pub const SCENE_ATTRIBUTES: [&str; 20] = [
    "sunny",
    "natural_light",
    "man_made",
    "open_area",
    "cloudy",
    "warm",
    "cold",
    "crowded",
    "empty",
    "night",
    "vegetation",
    "urban",
    "rustic",
    "modern",
    "vintage",
    "bright",
    "dim",
    "wet",
    "snowy",
    "indoor_lighting",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    /// Logit slope of the click model in the planted feature; 0 means no signal.
    pub signal: f64,
    /// Logit at overlap 0.5.
    pub intercept: f64,
    /// Deterministic labels (`p > 0.5`) instead of Bernoulli draws.
    pub noiseless: bool,
    pub width: u32,
    pub height: u32,
    pub k_scene: usize,
    pub n_records: usize,
    /// Coefficients of (align, overlap, dist, sym) in the linear CTR model
    /// of the calibration records; CTR falls by `coef * term`.
    pub record_coefficients: [f64; 4],
    pub record_intercept: f64,
    pub record_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            signal: 12.0,
            intercept: 0.0,
            noiseless: false,
            width: 300,
            height: 250,
            k_scene: DEFAULT_K_SCENE,
            n_records: 500,
            record_coefficients: [0.004, 0.03, 0.008, 0.006],
            record_intercept: 0.06,
            record_noise: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub annotations: Vec<ImageAnnotation>,
    pub layouts: Vec<Layout>,
    pub schema: FeatureSchema,
    pub vectors: Vec<(String, FeatureVector)>,
    pub labels: Vec<LabelRecord>,
    pub dataset: Dataset,
    /// True click probability per banner.
    pub click_probability: Vec<f64>,
    /// Expected AUC of scoring by the true click probability.
    pub bayes_auc: f64,
    pub records: Vec<HistoricalBannerRecord>,
}

fn uniform(rng: &mut Rng64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Index drawn with weight `1 / (rank + 1)`.
fn zipf_pick(rng: &mut Rng64, n: usize) -> usize {
    let total: f64 = (0..n).map(|r| 1.0 / (r + 1) as f64).sum();
    let mut t = rng.random::<f64>() * total;
    for r in 0..n {
        t -= 1.0 / (r + 1) as f64;
        if t <= 0.0 {
            return r;
        }
    }
    n - 1
}

fn random_box(rng: &mut Rng64, w: f64, h: f64, min_frac: f64, max_frac: f64) -> BBox {
    let bw = w * uniform(rng, min_frac, max_frac);
    let bh = h * uniform(rng, min_frac, max_frac);
    let x = uniform(rng, 0.0, w - bw);
    let y = uniform(rng, 0.0, h - bh);
    BBox::from_xywh(x, y, bw, bh)
}

/// Text box covering exactly `u` of the face's width and all of its height.
fn text_over_face(rng: &mut Rng64, face: &BBox, u: f64, w: f64, h: f64) -> BBox {
    let (fw, fh) = (face.width(), face.height());
    let th = uniform(rng, fh.max(0.12 * h), (0.35 * h).max(fh)).min(h);
    let left_room = face.x_left + u * fw;
    let right_room = w - (face.x_right - u * fw);
    let mut tw = uniform(rng, 0.3 * w, 0.6 * w);
    let (x0, x1) = if left_room >= tw || left_room >= right_room {
        tw = tw.min(left_room);
        (left_room - tw, left_room)
    } else {
        tw = tw.min(right_room);
        let x0 = face.x_right - u * fw;
        (x0, x0 + tw)
    };
    let lo = (face.y_bottom - th).max(0.0);
    let hi = face.y_top.min(h - th);
    let y0 = uniform(rng, lo, hi.max(lo));
    BBox::new(x0, y0, x1, y0 + th)
}

/// A photoshoot annotation: persons with faces, articles and scene labels,
/// no text regions.
pub fn random_photoshoot(rng: &mut Rng64, id: &str, width: u32, height: u32) -> ImageAnnotation {
    let (w, h) = (width as f64, height as f64);
    let mut ann = ImageAnnotation::empty(id, width, height);
    ann.brand = if rng.random_bool(0.5) {
        "acme".into()
    } else {
        "northwind".into()
    };
    let n_persons = if rng.random_bool(0.85) {
        1 + usize::from(rng.random_bool(0.2))
    } else {
        0
    };
    for _ in 0..n_persons {
        let pw = w * uniform(rng, 0.2, 0.45);
        let ph = h * uniform(rng, 0.5, 1.0);
        let person = BBox::from_xywh(uniform(rng, 0.0, w - pw), uniform(rng, 0.0, h - ph), pw, ph);
        let fw = pw * uniform(rng, 0.3, 0.5);
        let fh = (fw * uniform(rng, 1.0, 1.3)).min(0.4 * ph);
        let fx = person.x_left + (pw - fw) * uniform(rng, 0.2, 0.8);
        let fy = person.y_top + ph * uniform(rng, 0.02, 0.1);
        ann.persons.push(person);
        ann.faces.push(FaceAnnotation {
            bbox: BBox::from_xywh(fx, fy, fw, fh),
            gender: if rng.random_bool(0.5) {
                Gender::Female
            } else {
                Gender::Male
            },
        });
    }
    for _ in 0..rng.random_range(0..=3) {
        ann.articles.push(ArticleAnnotation {
            category: ArticleCategory::ALL[rng.random_range(0..ArticleCategory::ALL.len())],
            bbox: random_box(rng, w, h, 0.1, 0.4),
            confidence: uniform(rng, 0.5, 1.0),
        });
    }
    ann.scene.environment = if rng.random_bool(0.5) {
        Environment::Outdoor
    } else {
        Environment::Indoor
    };
    for _ in 0..rng.random_range(1..=2) {
        ann.scene
            .categories
            .insert(SCENE_CATEGORIES[zipf_pick(rng, SCENE_CATEGORIES.len())].into());
    }
    for _ in 0..rng.random_range(1..=3) {
        ann.scene
            .attributes
            .insert(SCENE_ATTRIBUTES[zipf_pick(rng, SCENE_ATTRIBUTES.len())].into());
    }
    ann
}

fn random_annotation(rng: &mut Rng64, id: &str, width: u32, height: u32) -> (ImageAnnotation, f64) {
    let (w, h) = (width as f64, height as f64);
    let mut ann = random_photoshoot(rng, id, width, height);
    let u = rng.random::<f64>();
    let text = match dominant_face(&ann) {
        Some(f) => text_over_face(rng, &f.bbox.clone(), u, w, h),
        None => random_box(rng, w, h, 0.15, 0.4),
    };
    ann.text_regions.push(text);
    (ann, u)
}

/// Expected AUC over pairs `i != j` when item `i` is positive with
/// probability `p[i]` and items are scored by `p` itself.
pub fn bayes_auc(p: &[f64]) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut num, mut den) = (0.0, 0.0);
    // sum of (1 - p_j) over items with strictly smaller p
    let mut below_neg = 0.0;
    let total_neg: f64 = sorted.iter().map(|v| 1.0 - v).sum();
    let total_pos: f64 = sorted.iter().sum();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let group = &sorted[i..=j];
        let g_pos: f64 = group.iter().sum();
        let g_neg: f64 = group.iter().map(|v| 1.0 - v).sum();
        let self_pairs: f64 = group.iter().map(|v| v * (1.0 - v)).sum();
        num += g_pos * below_neg + 0.5 * (g_pos * g_neg - self_pairs);
        below_neg += g_neg;
        i = j + 1;
    }
    den += total_pos * total_neg - p.iter().map(|v| v * (1.0 - v)).sum::<f64>();
    if den <= 0.0 {
        0.5
    } else {
        num / den
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn calibration_records(spec: &SynthSpec, rng: &mut Rng64) -> Vec<HistoricalBannerRecord> {
    let noise = Normal::new(0.0, spec.record_noise.max(0.0)).expect("finite noise");
    let ranges = [0.5, 0.6, 1.0, 1.0];
    (0..spec.n_records)
        .map(|i| {
            let t: [f64; 4] = ranges.map(|r| uniform(rng, 0.0, r));
            let mean = spec.record_intercept
                - t.iter()
                    .zip(&spec.record_coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            HistoricalBannerRecord {
                banner_id: format!("hist{i:05}"),
                e_align: t[0],
                e_overlap: t[1],
                e_dist: t[2],
                e_sym: t[3],
                ctr: (mean + noise.sample(rng)).clamp(0.0, 1.0),
            }
        })
        .collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData, RankerError> {
    let mut rng = seeded_rng(spec.seed);
    let mut annotations = Vec::with_capacity(spec.n);
    let mut overlaps = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let (ann, _) = random_annotation(&mut rng, &format!("syn{i:05}"), spec.width, spec.height);
        annotations.push(ann);
    }
    let layouts: Vec<Layout> = annotations.iter().map(Layout::from_annotation).collect();
    let schema = FeatureSchema::build(&annotations, spec.k_scene)
        .map_err(|e| RankerError::InvalidSpec(e.to_string()))?;
    let slot = schema
        .index_of(PLANTED_FEATURE)
        .expect("planted slot exists");
    let mut vectors = Vec::with_capacity(spec.n);
    for (ann, layout) in annotations.iter().zip(&layouts) {
        let v =
            extract(ann, layout, &schema).map_err(|e| RankerError::InvalidSpec(e.to_string()))?;
        overlaps.push(v.values[slot]);
        vectors.push((ann.image_id.clone(), v));
    }

    let click_probability: Vec<f64> = overlaps
        .iter()
        .map(|&z| {
            let p = sigmoid(spec.intercept + spec.signal * (0.5 - z));
            if spec.noiseless {
                f64::from(u8::from(p > 0.5))
            } else {
                p
            }
        })
        .collect();
    let labels: Vec<LabelRecord> = vectors
        .iter()
        .zip(&click_probability)
        .map(|((id, _), &p)| {
            let clicked = rng.random::<f64>() < p;
            LabelRecord {
                banner_id: id.clone(),
                is_clicked: Some(u8::from(clicked)),
                ctr: Some(CTR_SCALE * p),
                impressions: None,
                clicks: None,
            }
        })
        .collect();
    let dataset = Dataset::join(&schema, &vectors, &labels)?;
    let records = calibration_records(spec, &mut rng);
    Ok(SynthData {
        bayes_auc: bayes_auc(&click_probability),
        annotations,
        layouts,
        schema,
        vectors,
        labels,
        dataset,
        click_probability,
        records,
    })
}

/// A seeded two-element layout problem: a logo and a text box of fixed size
/// over a 300x250 canvas with one fixed person and one fixed article.
pub fn layout_problem(seed: u64) -> LayoutProblem {
    let mut rng = seeded_rng(seed);
    let (w, h) = (300.0, 250.0);
    let person = random_box(&mut rng, w, h, 0.25, 0.5);
    let article = random_box(&mut rng, w, h, 0.1, 0.25);
    let (lw, lh) = (
        uniform(&mut rng, 40.0, 70.0).round(),
        uniform(&mut rng, 20.0, 35.0).round(),
    );
    let (tw, th) = (
        uniform(&mut rng, 90.0, 140.0).round(),
        uniform(&mut rng, 30.0, 50.0).round(),
    );
    LayoutProblem {
        canvas_width: w,
        canvas_height: h,
        fixed: vec![
            ElementBox::fixed(ElementKind::Person, person),
            ElementBox::fixed(ElementKind::Object, article),
        ],
        movable: vec![
            MovableSpec {
                kind: ElementKind::Logo,
                width: lw,
                height: lh,
            },
            MovableSpec {
                kind: ElementKind::Text,
                width: tw,
                height: th,
            },
        ],
        bounds: SizeBounds {
            logo: DimBounds::exact(lw, lh),
            text: DimBounds::exact(tw, th),
        },
        weights: EnergyWeights::default(),
    }
}

fn fill_box(r: &mut Raster, b: &BBox, color: Rgba) {
    let x0 = b.x_left.max(0.0).floor() as u32;
    let y0 = b.y_top.max(0.0).floor() as u32;
    let x1 = (b.x_right.ceil().max(0.0) as u32).min(r.width());
    let y1 = (b.y_bottom.ceil().max(0.0) as u32).min(r.height());
    for y in y0..y1 {
        for x in x0..x1 {
            r.set(x, y, color);
        }
    }
}

/// A flat-shaded stand-in photo: sky/floor background, articles, persons
/// and faces drawn as coloured blocks.
pub fn paint_photo(ann: &ImageAnnotation, seed: u64) -> Raster {
    let mut rng = seeded_rng(seed);
    let top: [f64; 3] = [0, 1, 2].map(|_| uniform(&mut rng, 120.0, 230.0));
    let bottom: [f64; 3] = [0, 1, 2].map(|_| uniform(&mut rng, 30.0, 140.0));
    let h = ann.height.max(1) as f64;
    let mut r = Raster::from_fn(ann.width, ann.height, |_, y| {
        let t = y as f64 / h;
        let c = |k: usize| (top[k] * (1.0 - t) + bottom[k] * t).round() as u8;
        [c(0), c(1), c(2), 255]
    });
    for a in &ann.articles {
        let c = [0, 1, 2].map(|_| rng.random_range(40..220u8));
        fill_box(&mut r, &a.bbox, [c[0], c[1], c[2], 255]);
    }
    for p in &ann.persons {
        let c = [0, 1, 2].map(|_| rng.random_range(20..120u8));
        fill_box(&mut r, p, [c[0], c[1], c[2], 255]);
    }
    for f in &ann.faces {
        fill_box(&mut r, &f.bbox, [224, 172, 140, 255]);
    }
    r
}

/// A simple two-tone logo on a transparent background.
pub fn paint_logo(width: u32, height: u32, fg: Rgba, bg: Rgba) -> Raster {
    let (w, h) = (width as f64, height as f64);
    Raster::from_fn(width, height, |x, y| {
        let (fx, fy) = ((x as f64 + 0.5) / w, (y as f64 + 0.5) / h);
        let border = !(0.06..=0.94).contains(&fx) || !(0.12..=0.88).contains(&fy);
        let mark = (fx - 0.3).abs() < 0.12 && (fy - 0.5).abs() < 0.25;
        if border || mark {
            fg
        } else if (fx - 0.7).abs() < 0.18 && (fy - 0.5).abs() < 0.12 {
            bg
        } else {
            [0, 0, 0, 0]
        }
    })
}
