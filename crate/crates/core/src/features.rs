//! Fixed-schema feature vectors for CTR models.
//!
//! A [`FeatureSchema`] is built once from a training corpus (it freezes the
//! most frequent scene labels) and then shared by training and serving.
//! Precomputed external features (a 4096-d image embedding and an aesthetic
//! score) can be appended to a vector; the set of attached features is part
//! of the fingerprint a model is trained against.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{
    count_gender, dominant_article, dominant_face, dominant_person, ArticleCategory, Environment,
    Gender, ImageAnnotation,
};
use crate::energy::{ElementKind, Layout};
use crate::geometry::{dominant_index, union_area, BBox};

pub const DEFAULT_K_SCENE: usize = 16;
pub const VGG_DIM: usize = 4096;
pub const ABSENT: f64 = -1.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("embedding has length {0}, expected {VGG_DIM}")]
    EmbeddingLength(usize),
    #[error("non-finite external feature: {0}")]
    NonFinite(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotGroup {
    Position,
    Area,
    Gender,
    Category,
    Environment,
    SceneCategory,
    SceneAttribute,
    Overlap,
    Quadrant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpan {
    pub group: SlotGroup,
    pub start: usize,
    pub len: usize,
}

/// Ordered slot names with group metadata. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub k_scene: usize,
    /// Selected scene categories, most frequent first; at most `k_scene`.
    pub scene_categories: Vec<String>,
    pub scene_attributes: Vec<String>,
    pub slots: Vec<String>,
    pub groups: Vec<GroupSpan>,
}

const COMPONENTS: [&str; 4] = ["person", "face", "article", "text"];
const COORDS: [&str; 4] = ["x_left", "y_top", "x_right", "y_bottom"];
const QUADRANTS: [&str; 4] = ["top_left", "top_right", "bottom_left", "bottom_right"];

/// The `k` most frequent labels; ties broken lexicographically.
fn top_labels<'a>(labels: impl Iterator<Item = &'a String>, k: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(l, _)| l.to_string())
        .collect()
}

impl FeatureSchema {
    pub fn build(corpus: &[ImageAnnotation], k_scene: usize) -> Result<Self, FeatureError> {
        if corpus.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let cats = top_labels(
            corpus.iter().flat_map(|a| a.scene.categories.iter()),
            k_scene,
        );
        let attrs = top_labels(
            corpus.iter().flat_map(|a| a.scene.attributes.iter()),
            k_scene,
        );
        Ok(Self::from_labels(k_scene, cats, attrs))
    }

    /// Schema for explicitly chosen scene labels (padded to `k_scene`).
    pub fn from_labels(
        k_scene: usize,
        scene_categories: Vec<String>,
        scene_attributes: Vec<String>,
    ) -> Self {
        let mut slots = Vec::new();
        let mut groups = Vec::new();
        let mut push = |group: SlotGroup, names: Vec<String>| {
            groups.push(GroupSpan {
                group,
                start: slots.len(),
                len: names.len(),
            });
            slots.extend(names);
        };
        push(
            SlotGroup::Position,
            COMPONENTS
                .iter()
                .flat_map(|c| COORDS.iter().map(move |k| format!("pos_{c}_{k}")))
                .collect(),
        );
        push(
            SlotGroup::Area,
            ["person", "article", "text"]
                .iter()
                .map(|c| format!("area_{c}"))
                .collect(),
        );
        push(
            SlotGroup::Gender,
            vec![
                "count_women".into(),
                "count_men".into(),
                "count_people".into(),
            ],
        );
        push(
            SlotGroup::Category,
            ArticleCategory::ALL
                .iter()
                .map(|c| format!("category_{}", c.name()))
                .collect(),
        );
        push(SlotGroup::Environment, vec!["environment_outdoor".into()]);
        let padded = |prefix: &str, labels: &[String]| -> Vec<String> {
            (0..k_scene)
                .map(|i| match labels.get(i) {
                    Some(l) => format!("{prefix}_{l}"),
                    None => format!("{prefix}_unused_{i}"),
                })
                .collect()
        };
        push(
            SlotGroup::SceneCategory,
            padded("scene_category", &scene_categories),
        );
        push(
            SlotGroup::SceneAttribute,
            padded("scene_attribute", &scene_attributes),
        );
        push(
            SlotGroup::Overlap,
            ["face", "person", "article"]
                .iter()
                .map(|c| format!("overlap_text_{c}"))
                .collect(),
        );
        push(
            SlotGroup::Quadrant,
            QUADRANTS.iter().map(|q| format!("text_in_{q}")).collect(),
        );
        Self {
            k_scene,
            scene_categories,
            scene_attributes,
            slots,
            groups,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn span(&self, group: SlotGroup) -> &GroupSpan {
        self.groups
            .iter()
            .find(|g| g.group == group)
            .expect("every group is present")
    }

    pub fn index_of(&self, slot: &str) -> Option<usize> {
        self.slots.iter().position(|s| s == slot)
    }

    /// Hex SHA-256 over the ordered slot names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.slots {
            h.update(s.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// A loaded artifact must be exactly what its labels would build.
    pub fn check(&self) -> Result<(), FeatureError> {
        let rebuilt = Self::from_labels(
            self.k_scene,
            self.scene_categories.clone(),
            self.scene_attributes.clone(),
        );
        if self.scene_categories.len() > self.k_scene
            || self.scene_attributes.len() > self.k_scene
            || &rebuilt != self
        {
            return Err(FeatureError::SchemaMismatch(
                "schema artifact is inconsistent with its labels".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FeatureError> {
        let schema: Self = serde_json::from_slice(bytes).map_err(|e| {
            FeatureError::SchemaMismatch(format!("unreadable schema artifact: {e}"))
        })?;
        schema.check()?;
        Ok(schema)
    }
}

/// Which external features are attached to a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSet {
    pub vgg: bool,
    pub nima: bool,
}

impl FeatureSet {
    /// Column names of a full vector with this feature set.
    pub fn names(&self, schema: &FeatureSchema) -> Vec<String> {
        let mut names = schema.slots.clone();
        if self.vgg {
            names.extend((0..VGG_DIM).map(|i| format!("vgg_{i}")));
        }
        if self.nima {
            names.push("nima".into());
        }
        names
    }

    /// Fingerprint of the full column set a model is trained against.
    pub fn fingerprint(&self, schema_fingerprint: &str) -> String {
        let mut fp = schema_fingerprint.to_string();
        if self.vgg {
            fp.push_str("+vgg");
        }
        if self.nima {
            fp.push_str("+nima");
        }
        fp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema_fingerprint: String,
    pub values: Vec<f64>,
    pub vgg: Option<Vec<f64>>,
    pub nima: Option<f64>,
}

impl FeatureVector {
    pub fn feature_set(&self) -> FeatureSet {
        FeatureSet {
            vgg: self.vgg.is_some(),
            nima: self.nima.is_some(),
        }
    }

    pub fn fingerprint(&self) -> String {
        self.feature_set().fingerprint(&self.schema_fingerprint)
    }

    /// Base slots followed by any attached external features.
    pub fn full(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        if let Some(e) = &self.vgg {
            v.extend_from_slice(e);
        }
        if let Some(n) = self.nima {
            v.push(n);
        }
        v
    }
}

fn normalized(b: &BBox, w: f64, h: f64) -> [f64; 4] {
    [b.x_left / w, b.y_top / h, b.x_right / w, b.y_bottom / h].map(|v| v.clamp(0.0, 1.0))
}

/// Sum over text boxes of `|text ∩ c| / |c|`, clamped to 1.
fn overlap_share(texts: &[BBox], component: Option<BBox>) -> f64 {
    match component {
        Some(c) if c.area() > 0.0 => {
            let s: f64 = texts
                .iter()
                .map(|t| t.intersection_area(&c) / c.area())
                .sum();
            s.min(1.0)
        }
        _ => 0.0,
    }
}

/// Fill every schema slot from a banner's annotation (persons, faces,
/// articles, scene) and layout (text elements), both in canvas pixels.
pub fn extract(
    ann: &ImageAnnotation,
    layout: &Layout,
    schema: &FeatureSchema,
) -> Result<FeatureVector, FeatureError> {
    let (w, h) = (layout.canvas_width, layout.canvas_height);
    if (ann.width as f64 - w).abs() > 0.5 || (ann.height as f64 - h).abs() > 0.5 {
        return Err(FeatureError::SchemaMismatch(format!(
            "annotation {} is {}x{} but layout canvas is {w}x{h}",
            ann.image_id, ann.width, ann.height
        )));
    }
    if !(w > 0.0 && h > 0.0) {
        return Err(FeatureError::SchemaMismatch("canvas has zero area".into()));
    }
    let texts: Vec<BBox> = layout.of_kind(ElementKind::Text).map(|e| e.bbox).collect();
    let person = dominant_person(ann);
    let face = dominant_face(ann).map(|f| f.bbox);
    let article = dominant_article(ann);
    let text = dominant_index(&texts).map(|i| texts[i]);

    let mut values = Vec::with_capacity(schema.len());
    for b in [person, face, article.map(|a| a.1), text] {
        match b {
            Some(b) => values.extend(normalized(&b, w, h)),
            None => values.extend([ABSENT; 4]),
        }
    }

    let canvas = w * h;
    let frac = |a: f64| (a / canvas).clamp(0.0, 1.0);
    values.push(person.map_or(0.0, |b| frac(b.area())));
    values.push(article.map_or(0.0, |a| frac(a.1.area())));
    values.push(frac(union_area(&texts)));

    values.push(count_gender(ann, Gender::Female) as f64);
    values.push(count_gender(ann, Gender::Male) as f64);
    values.push(ann.persons.len() as f64);

    let dominant_cat = article.map(|a| a.0);
    values.extend(
        ArticleCategory::ALL
            .iter()
            .map(|c| f64::from(Some(*c) == dominant_cat)),
    );

    values.push(f64::from(ann.scene.environment == Environment::Outdoor));

    for (labels, present) in [
        (&schema.scene_categories, &ann.scene.categories),
        (&schema.scene_attributes, &ann.scene.attributes),
    ] {
        values.extend((0..schema.k_scene).map(|i| {
            labels
                .get(i)
                .map_or(0.0, |l| f64::from(present.contains(l)))
        }));
    }

    values.push(overlap_share(&texts, face));
    values.push(overlap_share(&texts, person));
    values.push(overlap_share(&texts, article.map(|a| a.1)));

    let mut quad = [0.0; 4];
    for t in &texts {
        let (cx, cy) = t.center();
        let q = usize::from(cx >= w / 2.0) + 2 * usize::from(cy >= h / 2.0);
        quad[q] = 1.0;
    }
    values.extend(quad);

    debug_assert_eq!(values.len(), schema.len());
    Ok(FeatureVector {
        schema_fingerprint: schema.fingerprint(),
        values,
        vgg: None,
        nima: None,
    })
}

/// Append precomputed external features.
pub fn attach_external(
    mut vec: FeatureVector,
    vgg: Option<Vec<f64>>,
    nima: Option<f64>,
) -> Result<FeatureVector, FeatureError> {
    if let Some(e) = vgg {
        if e.len() != VGG_DIM {
            return Err(FeatureError::EmbeddingLength(e.len()));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite("vgg".into()));
        }
        vec.vgg = Some(e);
    }
    if let Some(n) = nima {
        if !n.is_finite() {
            return Err(FeatureError::NonFinite("nima".into()));
        }
        vec.nima = Some(n);
    }
    Ok(vec)
}

/// One sidecar entry of precomputed external features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalRecord {
    #[serde(default)]
    pub vgg: Option<Vec<f64>>,
    #[serde(default)]
    pub nima: Option<f64>,
}

/// External-feature sidecar: a JSON object keyed by banner id.
pub fn parse_external(bytes: &[u8]) -> Result<BTreeMap<String, ExternalRecord>, FeatureError> {
    serde_json::from_slice(bytes).map_err(|e| FeatureError::Row {
        row: 0,
        message: format!("external features: {e}"),
    })
}

/// Write `banner_id` plus one column per feature.
pub fn write_matrix_csv<W: Write>(
    writer: W,
    schema: &FeatureSchema,
    rows: &[(String, FeatureVector)],
) -> Result<(), FeatureError> {
    let set = rows.first().map(|r| r.1.feature_set()).unwrap_or_default();
    let fingerprint = set.fingerprint(&schema.fingerprint());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["banner_id".to_string()];
    header.extend(set.names(schema));
    wtr.write_record(&header)?;
    for (i, (id, v)) in rows.iter().enumerate() {
        if v.fingerprint() != fingerprint {
            return Err(FeatureError::Row {
                row: i,
                message: format!("{id} has a different feature set"),
            });
        }
        let mut rec = vec![id.clone()];
        rec.extend(v.full().iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`]; the header must match
/// the schema slots, optionally followed by the external columns.
pub fn read_matrix_csv<R: Read>(
    reader: R,
    schema: &FeatureSchema,
) -> Result<Vec<(String, FeatureVector)>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let set = [
        FeatureSet {
            vgg: false,
            nima: false,
        },
        FeatureSet {
            vgg: false,
            nima: true,
        },
        FeatureSet {
            vgg: true,
            nima: false,
        },
        FeatureSet {
            vgg: true,
            nima: true,
        },
    ]
    .into_iter()
    .find(|s| {
        header.first().map(String::as_str) == Some("banner_id")
            && header[1..] == s.names(schema)[..]
    })
    .ok_or_else(|| {
        FeatureError::SchemaMismatch("matrix header does not match the schema slots".into())
    })?;

    let base = schema.len();
    let fp = schema.fingerprint();
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if let Some(prev) = seen.insert(id.clone(), i) {
            return Err(FeatureError::Row {
                row: i,
                message: format!("duplicate banner_id {id} (first at row {prev})"),
            });
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FeatureError::Row {
                row: i,
                message: format!("{id}: {e}"),
            })?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Row {
                row: i,
                message: format!("{id}: non-finite feature"),
            });
        }
        let mut v = FeatureVector {
            schema_fingerprint: fp.clone(),
            values: vals[..base].to_vec(),
            vgg: None,
            nima: None,
        };
        let mut rest = &vals[base..];
        if set.vgg {
            v.vgg = Some(rest[..VGG_DIM].to_vec());
            rest = &rest[VGG_DIM..];
        }
        if set.nima {
            v.nima = Some(rest[0]);
        }
        out.push((id, v));
    }
    Ok(out)
}
