//! Structured photoshoot annotations.
//!
//! Each image in the catalog carries the output of an upstream detector
//! stack: person and face boxes, fashion articles, scene labels and
//! embedded-text regions. This module parses and validates those records
//! and filters a catalog for a generation request.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::BBox;
use crate::geometry::{dominant_index, union_area};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("field `{path}`: {message}")]
    Field { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArticleCategory {
    Topwear,
    Bottomwear,
    Shoes,
    Watches,
    Bags,
    Headgear,
    Other,
}

impl ArticleCategory {
    pub const ALL: [ArticleCategory; 7] = [
        ArticleCategory::Topwear,
        ArticleCategory::Bottomwear,
        ArticleCategory::Shoes,
        ArticleCategory::Watches,
        ArticleCategory::Bags,
        ArticleCategory::Headgear,
        ArticleCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArticleCategory::Topwear => "topwear",
            ArticleCategory::Bottomwear => "bottomwear",
            ArticleCategory::Shoes => "shoes",
            ArticleCategory::Watches => "watches",
            ArticleCategory::Bags => "bags",
            ArticleCategory::Headgear => "headgear",
            ArticleCategory::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap_or(6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Indoor,
    Outdoor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleAnnotation {
    pub category: ArticleCategory,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceAnnotation {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub environment: Environment,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub attributes: BTreeSet<String>,
}

/// Everything known about one photoshoot image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub brand: String,
    #[serde(default)]
    pub season: String,
    #[serde(default)]
    pub persons: Vec<BBox>,
    #[serde(default)]
    pub faces: Vec<FaceAnnotation>,
    #[serde(default)]
    pub articles: Vec<ArticleAnnotation>,
    pub scene: SceneInfo,
    #[serde(default)]
    pub text_regions: Vec<BBox>,
}

impl ImageAnnotation {
    /// An annotation with no boxes and an indoor scene without labels.
    pub fn empty(image_id: &str, width: u32, height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            width,
            height,
            brand: String::new(),
            season: String::new(),
            persons: vec![],
            faces: vec![],
            articles: vec![],
            scene: SceneInfo {
                environment: Environment::Indoor,
                categories: Default::default(),
                attributes: Default::default(),
            },
            text_regions: vec![],
        }
    }
}

/// Parse one annotation document. Errors carry the JSON path of the
/// offending field.
pub fn parse_annotation(bytes: &[u8]) -> Result<ImageAnnotation, AnnotationError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                AnnotationError::Malformed(inner.to_string())
            }
            _ => {
                let message = inner.to_string();
                // serde reports missing fields against the parent path
                let path = match missing_field_name(&message) {
                    Some(name) if path == "." => name.to_string(),
                    Some(name) => format!("{path}.{name}"),
                    None => path,
                };
                AnnotationError::Field { path, message }
            }
        }
    })
}

fn missing_field_name(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

pub fn to_json(ann: &ImageAnnotation) -> String {
    serde_json::to_string_pretty(ann).expect("annotation serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    OutOfBounds,
    DegenerateBox,
    InvalidConfidence,
    EmptyImageId,
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Location of the offending value, e.g. `faces[0].box`.
    pub location: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}", self.kind, self.location)
    }
}

/// Check every annotation invariant. An empty report means the record is valid.
pub fn validate(ann: &ImageAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    if ann.image_id.is_empty() {
        out.push(Violation {
            kind: ViolationKind::EmptyImageId,
            location: "image_id".into(),
        });
    }
    if ann.width == 0 || ann.height == 0 {
        out.push(Violation {
            kind: ViolationKind::ZeroDimension,
            location: if ann.width == 0 { "width" } else { "height" }.into(),
        });
    }
    let (w, h) = (ann.width as f64, ann.height as f64);
    let mut check = |b: &BBox, location: String| {
        let ordered = b.x_left < b.x_right && b.y_top < b.y_bottom;
        let finite = [b.x_left, b.y_top, b.x_right, b.y_bottom]
            .iter()
            .all(|c| c.is_finite());
        if !ordered || !finite {
            out.push(Violation {
                kind: ViolationKind::DegenerateBox,
                location,
            });
        } else if !b.within(w, h) {
            out.push(Violation {
                kind: ViolationKind::OutOfBounds,
                location,
            });
        }
    };
    for (i, b) in ann.persons.iter().enumerate() {
        check(b, format!("persons[{i}]"));
    }
    for (i, f) in ann.faces.iter().enumerate() {
        check(&f.bbox, format!("faces[{i}].box"));
    }
    for (i, a) in ann.articles.iter().enumerate() {
        check(&a.bbox, format!("articles[{i}].box"));
    }
    for (i, b) in ann.text_regions.iter().enumerate() {
        check(b, format!("text_regions[{i}]"));
    }
    for (i, a) in ann.articles.iter().enumerate() {
        if !(0.0..=1.0).contains(&a.confidence) {
            out.push(Violation {
                kind: ViolationKind::InvalidConfidence,
                location: format!("articles[{i}].confidence"),
            });
        }
    }
    out
}

/// Largest-area article; ties go to the lowest `(y_top, x_left)`, then file order.
pub fn dominant_article(ann: &ImageAnnotation) -> Option<(ArticleCategory, BBox)> {
    dominant_index(ann.articles.iter().map(|a| &a.bbox)).map(|i| {
        let a = &ann.articles[i];
        (a.category, a.bbox)
    })
}

/// Largest-area person under the same tie-break as [`dominant_article`].
pub fn dominant_person(ann: &ImageAnnotation) -> Option<BBox> {
    dominant_index(&ann.persons).map(|i| ann.persons[i])
}

pub fn dominant_face(ann: &ImageAnnotation) -> Option<&FaceAnnotation> {
    dominant_index(ann.faces.iter().map(|f| &f.bbox)).map(|i| &ann.faces[i])
}

/// Fraction of the image covered by the union of text regions.
pub fn text_area_fraction(ann: &ImageAnnotation) -> f64 {
    let (w, h) = (ann.width as f64, ann.height as f64);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let canvas = BBox::new(0.0, 0.0, w, h);
    let clipped: Vec<BBox> = ann
        .text_regions
        .iter()
        .filter_map(|b| b.intersection(&canvas))
        .collect();
    (union_area(&clipped) / (w * h)).clamp(0.0, 1.0)
}

pub fn count_gender(ann: &ImageAnnotation, gender: Gender) -> usize {
    ann.faces.iter().filter(|f| f.gender == gender).count()
}

pub const DEFAULT_MAX_TEXT_AREA_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterCriteria {
    pub brand: Option<String>,
    pub category: Option<ArticleCategory>,
    pub environment: Option<Environment>,
    /// At least one face of this gender must be present.
    pub gender: Option<Gender>,
    pub max_text_area_fraction: f64,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            brand: None,
            category: None,
            environment: None,
            gender: None,
            max_text_area_fraction: DEFAULT_MAX_TEXT_AREA_FRACTION,
        }
    }
}

impl FilterCriteria {
    pub fn matches(&self, ann: &ImageAnnotation) -> bool {
        if let Some(brand) = &self.brand {
            if &ann.brand != brand {
                return false;
            }
        }
        if let Some(cat) = self.category {
            if !ann.articles.iter().any(|a| a.category == cat) {
                return false;
            }
        }
        if let Some(env) = self.environment {
            if ann.scene.environment != env {
                return false;
            }
        }
        if let Some(g) = self.gender {
            if count_gender(ann, g) == 0 {
                return false;
            }
        }
        text_area_fraction(ann) <= self.max_text_area_fraction
    }
}

/// Ids of catalog images matching every present criterion, in catalog order.
pub fn filter_images(catalog: &[ImageAnnotation], crit: &FilterCriteria) -> Vec<String> {
    catalog
        .iter()
        .filter(|a| crit.matches(a))
        .map(|a| a.image_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogoEntry {
    pub brand: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalloutEntry {
    pub text: String,
    #[serde(default)]
    pub themes: BTreeSet<String>,
}

/// Logos and text callouts available to the compositor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementLibrary {
    #[serde(default)]
    pub logos: Vec<LogoEntry>,
    #[serde(default)]
    pub callouts: Vec<CalloutEntry>,
}

impl ElementLibrary {
    pub fn parse(bytes: &[u8]) -> Result<Self, AnnotationError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let lib: ElementLibrary =
            serde_path_to_error::deserialize(de).map_err(|e| AnnotationError::Field {
                path: e.path().to_string(),
                message: e.into_inner().to_string(),
            })?;
        lib.check()?;
        Ok(lib)
    }

    pub fn check(&self) -> Result<(), AnnotationError> {
        let mut seen = BTreeSet::new();
        for (i, l) in self.logos.iter().enumerate() {
            if !seen.insert(l.brand.as_str()) {
                return Err(AnnotationError::Field {
                    path: format!("logos[{i}].brand"),
                    message: format!("duplicate brand `{}`", l.brand),
                });
            }
        }
        for (i, c) in self.callouts.iter().enumerate() {
            if c.text.trim().is_empty() {
                return Err(AnnotationError::Field {
                    path: format!("callouts[{i}].text"),
                    message: "callout text is empty".into(),
                });
            }
        }
        Ok(())
    }

    pub fn logo_for(&self, brand: &str) -> Option<&LogoEntry> {
        self.logos.iter().find(|l| l.brand == brand)
    }

    /// Callouts tagged with `theme`, or every callout when no theme is given.
    pub fn callouts_for(&self, theme: Option<&str>) -> Vec<&CalloutEntry> {
        match theme {
            Some(t) => self
                .callouts
                .iter()
                .filter(|c| c.themes.contains(t))
                .collect(),
            None => self.callouts.iter().collect(),
        }
    }
}
