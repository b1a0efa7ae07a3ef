//! End-to-end banner generation: filter the catalog, crop, lay out, compose,
//! score and write banners plus a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{
    parse_annotation, validate, ElementLibrary, FilterCriteria, ImageAnnotation,
};
use crate::calibration::{fit_weights, CalibrationResult};
use crate::compositor::{
    compose, crop_roi, ComposeOptions, PixelRect, Raster, RoiSource, TextPlacement,
};
use crate::energy::{DimBounds, ElementKind, EnergyBreakdown, EnergyWeights, Layout, SizeBounds};
use crate::features::{extract, FeatureSchema};
use crate::ga::{evolve, seeded_rng, GAConfig, LayoutProblem, MovableSpec};
use crate::ranker::{predict_ctr, train, ModelSpec, TrainedModel};
use crate::synth::{generate_synthetic, paint_logo, paint_photo, random_photoshoot, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("no catalog image matches the filter")]
    EmptyFilter,
    #[error("no logo for brand `{0}`")]
    MissingLogo(String),
    #[error("no callout for theme {0:?}")]
    NoCallouts(Option<String>),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePaths {
    /// Directory of annotation documents (`*.json`).
    pub annotations: PathBuf,
    /// Directory holding `<image_id>.png` for every annotation.
    pub images: PathBuf,
    pub library: PathBuf,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub output: PathBuf,
}

/// Element size range as fractions of the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementSize {
    pub width: [f64; 2],
    pub height: [f64; 2],
}

impl ElementSize {
    fn bounds(&self, w: f64, h: f64) -> DimBounds {
        DimBounds::new(
            self.width[0] * w,
            self.width[1] * w,
            self.height[0] * h,
            self.height[1] * h,
        )
    }

    fn nominal(&self, kind: ElementKind, w: f64, h: f64) -> MovableSpec {
        MovableSpec {
            kind,
            width: (self.width[0] + self.width[1]) / 2.0 * w,
            height: (self.height[0] + self.height[1]) / 2.0 * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationRequest {
    pub filter: FilterCriteria,
    pub theme: Option<String>,
    /// Banner width / height; banners are the region-of-interest crop at
    /// this aspect.
    pub aspect: f64,
    pub logo_size: ElementSize,
    pub text_size: ElementSize,
    pub top_k: usize,
    pub ga: GAConfig,
    pub compose: ComposeOptions,
}

impl Default for GenerationRequest {
    fn default() -> Self {
        Self {
            filter: FilterCriteria::default(),
            theme: None,
            aspect: 2.0,
            logo_size: ElementSize {
                width: [0.12, 0.2],
                height: [0.1, 0.16],
            },
            text_size: ElementSize {
                width: [0.35, 0.5],
                height: [0.2, 0.3],
            },
            top_k: 3,
            ga: GAConfig::default(),
            compose: ComposeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PipelinePaths,
    #[serde(default)]
    pub generation: GenerationRequest,
}

impl PipelineConfig {
    /// Read a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            PipelineError::Config(format!(
                "{}: field `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            ))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let g = &self.generation;
        if g.top_k == 0 {
            return Err(PipelineError::Config("top_k must be >= 1".into()));
        }
        if !(g.aspect.is_finite() && g.aspect > 0.0) {
            return Err(PipelineError::Config("aspect must be > 0".into()));
        }
        for (name, s) in [("logo_size", g.logo_size), ("text_size", g.text_size)] {
            let ok = [s.width, s.height]
                .iter()
                .all(|r| 0.0 < r[0] && r[0] <= r[1] && r[1] <= 1.0);
            if !ok {
                return Err(PipelineError::Config(format!(
                    "{name} ranges must satisfy 0 < min <= max <= 1"
                )));
            }
        }
        g.ga.check()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}

impl PipelinePaths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.annotations);
        fix(&mut self.images);
        fix(&mut self.library);
        fix(&mut self.output);
        for p in [&mut self.weights, &mut self.schema, &mut self.model]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

/// Every `*.json` file in `dir`, parsed, in file-name order.
pub fn load_annotations(dir: &Path) -> Result<Vec<(PathBuf, ImageAnnotation)>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
            let ann = parse_annotation(&bytes).map_err(|e| data_err(&p, e))?;
            Ok((p, ann))
        })
        .collect()
}

/// Energy weights from either a bare weights document or a calibration result.
pub fn load_weights(path: &Path) -> Result<EnergyWeights, PipelineError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Calibrated(CalibrationResult),
        Bare(EnergyWeights),
    }
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let w = match serde_json::from_slice::<Doc>(&bytes).map_err(|e| data_err(path, e))? {
        Doc::Calibrated(c) => c.weights,
        Doc::Bare(w) => w,
    };
    w.check().map_err(|e| data_err(path, e))?;
    Ok(w)
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let name = path
        .file_name()
        .ok_or_else(|| io_err(path, "not a file path"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-image seed: the configured seed mixed with the image id.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    let digest = Sha256::digest(image_id.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropInfo {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    pub roi_source: RoiSource,
    pub roi_clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub callout: String,
    pub logo_brand: String,
    pub logo_path: String,
    pub ga_seed: u64,
    pub layout_rank: usize,
    pub crop: CropInfo,
    pub options: ComposeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BannerEntry {
    pub id: String,
    pub source_image_id: String,
    pub layout: Layout,
    pub energy: EnergyBreakdown,
    pub predicted_ctr: Option<f64>,
    /// File name relative to the output directory.
    pub output: String,
    pub sidecar: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub source_image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BannerManifest {
    /// `predicted_ctr` when a model is configured, else `energy`.
    pub ordered_by: String,
    pub banners: Vec<BannerEntry>,
    pub failures: Vec<FailureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(flatten)]
    pub entry: BannerEntry,
    pub text: Vec<TextPlacement>,
}

struct Shared<'a> {
    cfg: &'a PipelineConfig,
    library: &'a ElementLibrary,
    logos: BTreeMap<String, (String, Raster)>,
    weights: EnergyWeights,
    schema: Option<FeatureSchema>,
    model: Option<TrainedModel>,
}

fn process_image(sh: &Shared<'_>, ann: &ImageAnnotation) -> Result<Vec<BannerEntry>, String> {
    let g = &sh.cfg.generation;
    let img_path = sh.cfg.paths.images.join(format!("{}.png", ann.image_id));
    let image = Raster::read_png(&img_path).map_err(|e| e.to_string())?;
    if (image.width(), image.height()) != (ann.width, ann.height) {
        return Err(format!(
            "{}: image is {}x{} but annotation says {}x{}",
            img_path.display(),
            image.width(),
            image.height(),
            ann.width,
            ann.height
        ));
    }
    let crop = crop_roi(&image, ann, g.aspect).map_err(|e| e.to_string())?;
    let local = crop.project(ann);
    let (w, h) = (crop.rect.width() as f64, crop.rect.height() as f64);
    let seed = image_seed(g.ga.rng_seed, &ann.image_id);
    let problem = LayoutProblem {
        canvas_width: w,
        canvas_height: h,
        fixed: Layout::fixed_from_annotation(&local),
        movable: vec![
            g.logo_size.nominal(ElementKind::Logo, w, h),
            g.text_size.nominal(ElementKind::Text, w, h),
        ],
        bounds: SizeBounds {
            logo: g.logo_size.bounds(w, h),
            text: g.text_size.bounds(w, h),
        },
        weights: sh.weights,
    };
    let run = evolve(&problem, &g.ga.clone().with_seed(seed)).map_err(|e| e.to_string())?;

    let callouts = sh.library.callouts_for(g.theme.as_deref());
    let callout = callouts
        .choose(&mut seeded_rng(seed))
        .map(|c| c.text.clone())
        .ok_or_else(|| format!("no callout for theme {:?}", g.theme))?;
    let (logo_path, logo) = &sh.logos[&ann.brand];

    let out_dir = &sh.cfg.paths.output;
    let mut entries = Vec::new();
    for (rank, scored) in run.top_k(g.top_k).iter().enumerate() {
        let id = format!("{}_r{}", ann.image_id, rank + 1);
        let comp = compose(&image, ann, &scored.layout, logo, &callout, &g.compose)
            .map_err(|e| format!("{id}: {e}"))?;
        let predicted_ctr = match (&sh.schema, &sh.model) {
            (Some(schema), Some(model)) => {
                let v =
                    extract(&local, &scored.layout, schema).map_err(|e| format!("{id}: {e}"))?;
                Some(predict_ctr(model, &v).map_err(|e| format!("{id}: {e}"))?)
            }
            _ => None,
        };
        let PixelRect { x0, y0, .. } = crop.rect;
        let entry = BannerEntry {
            id: id.clone(),
            source_image_id: ann.image_id.clone(),
            layout: scored.layout.clone(),
            energy: scored.energy,
            predicted_ctr,
            output: format!("{id}.png"),
            sidecar: format!("{id}.json"),
            provenance: Provenance {
                callout: callout.clone(),
                logo_brand: ann.brand.clone(),
                logo_path: logo_path.clone(),
                ga_seed: seed,
                layout_rank: rank + 1,
                crop: CropInfo {
                    x0,
                    y0,
                    width: crop.rect.width(),
                    height: crop.rect.height(),
                    roi_source: crop.roi_source,
                    roi_clipped: crop.roi_clipped,
                },
                options: g.compose.clone(),
            },
        };
        let png = comp.banner.encode_png().map_err(|e| format!("{id}: {e}"))?;
        write_atomic(&out_dir.join(&entry.output), &png).map_err(|e| e.to_string())?;
        let sidecar = Sidecar {
            entry: entry.clone(),
            text: comp.text,
        };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
        write_atomic(&out_dir.join(&entry.sidecar), json.as_bytes()).map_err(|e| e.to_string())?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Path of a logo as recorded in provenance: relative to the library file
/// when possible, so manifests do not depend on where the corpus lives.
fn display_path(p: &Path, base: &Path) -> String {
    p.strip_prefix(base)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<BannerManifest, PipelineError> {
    cfg.check()?;
    let paths = &cfg.paths;
    let catalog = load_annotations(&paths.annotations)?;
    for (p, ann) in &catalog {
        if let Some(v) = validate(ann).first() {
            return Err(data_err(p, v));
        }
    }
    let selected: Vec<&ImageAnnotation> = catalog
        .iter()
        .map(|(_, a)| a)
        .filter(|a| cfg.generation.filter.matches(a))
        .collect();
    if selected.is_empty() {
        return Err(PipelineError::EmptyFilter);
    }

    let lib_bytes = fs::read(&paths.library).map_err(|e| io_err(&paths.library, e))?;
    let library = ElementLibrary::parse(&lib_bytes).map_err(|e| data_err(&paths.library, e))?;
    if library
        .callouts_for(cfg.generation.theme.as_deref())
        .is_empty()
    {
        return Err(PipelineError::NoCallouts(cfg.generation.theme.clone()));
    }
    let lib_dir = paths.library.parent().unwrap_or(Path::new("."));
    let mut logos = BTreeMap::new();
    for ann in &selected {
        if logos.contains_key(&ann.brand) {
            continue;
        }
        let entry = library
            .logo_for(&ann.brand)
            .ok_or_else(|| PipelineError::MissingLogo(ann.brand.clone()))?;
        let p = if entry.path.is_relative() {
            lib_dir.join(&entry.path)
        } else {
            entry.path.clone()
        };
        let raster = Raster::read_png(&p).map_err(|e| data_err(&p, e))?;
        logos.insert(
            ann.brand.clone(),
            (display_path(&entry.path, lib_dir), raster),
        );
    }

    let weights = match &paths.weights {
        Some(p) => load_weights(p)?,
        None => EnergyWeights::default(),
    };
    let schema = match &paths.schema {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
            Some(FeatureSchema::from_json(&bytes).map_err(|e| data_err(p, e))?)
        }
        None => None,
    };
    let model = match &paths.model {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
            Some(TrainedModel::from_json(&bytes).map_err(|e| data_err(p, e))?)
        }
        None => None,
    };
    if model.is_some() && schema.is_none() {
        return Err(PipelineError::Config(
            "a model needs the feature schema it was trained with".into(),
        ));
    }
    fs::create_dir_all(&paths.output).map_err(|e| io_err(&paths.output, e))?;

    let shared = Shared {
        cfg,
        library: &library,
        logos,
        weights,
        schema,
        model,
    };
    let results: Vec<(String, Result<Vec<BannerEntry>, String>)> = selected
        .par_iter()
        .map(|ann| (ann.image_id.clone(), process_image(&shared, ann)))
        .collect();

    let mut banners = Vec::new();
    let mut failures = Vec::new();
    for (image_id, r) in results {
        match r {
            Ok(mut b) => banners.append(&mut b),
            Err(error) => {
                log::warn!("{image_id}: {error}");
                failures.push(FailureEntry {
                    source_image_id: image_id,
                    error,
                });
            }
        }
    }
    let by_ctr = shared.model.is_some();
    if by_ctr {
        banners.sort_by(|a, b| {
            b.predicted_ctr
                .unwrap_or(0.0)
                .total_cmp(&a.predicted_ctr.unwrap_or(0.0))
                .then_with(|| a.id.cmp(&b.id))
        });
    } else {
        banners.sort_by(|a, b| {
            a.energy
                .total
                .total_cmp(&b.energy.total)
                .then_with(|| a.id.cmp(&b.id))
        });
    }
    let manifest = BannerManifest {
        ordered_by: if by_ctr { "predicted_ctr" } else { "energy" }.into(),
        banners,
        failures,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&paths.output.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// SHA-256 of the manifest and of every file it lists, keyed by file name.
pub fn output_hashes(
    output: &Path,
    manifest: &BannerManifest,
) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut names = vec!["manifest.json".to_string()];
    for b in &manifest.banners {
        names.push(b.output.clone());
        names.push(b.sidecar.clone());
    }
    names
        .into_iter()
        .map(|n| {
            let p = output.join(&n);
            let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
            Ok((n, sha256_hex(&bytes)))
        })
        .collect()
}

pub const DEMO_IMAGES: usize = 12;
const DEMO_WIDTH: u32 = 480;
const DEMO_HEIGHT: u32 = 320;

const DEMO_CALLOUTS: [(&str, &[&str]); 6] = [
    ("Summer Sale 50% Off", &["sale", "summer"]),
    ("New Season Arrivals", &["launch"]),
    ("Flat 30% Off Today", &["sale"]),
    ("Fresh Styles Just Landed", &["launch", "summer"]),
    ("End of Season Sale", &["sale"]),
    ("Members Get Early Access", &["launch"]),
];

/// Write the self-contained demo corpus: annotated photos, two logos, a
/// callout library, calibrated weights, a feature schema, a small model
/// trained on synthetic history, and `pipeline.json`.
pub fn write_demo_corpus(dir: &Path, seed: u64) -> Result<(), PipelineError> {
    let ann_dir = dir.join("annotations");
    let img_dir = dir.join("images");
    let logo_dir = dir.join("logos");
    for d in [&ann_dir, &img_dir, &logo_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    let write = |p: PathBuf, bytes: &[u8]| fs::write(&p, bytes).map_err(|e| io_err(&p, e));
    let png = |r: &Raster| {
        r.encode_png()
            .map_err(|e| PipelineError::Config(e.to_string()))
    };

    let mut rng = seeded_rng(seed);
    for i in 0..DEMO_IMAGES {
        let id = format!("demo{:02}", i + 1);
        let mut ann = random_photoshoot(&mut rng, &id, DEMO_WIDTH, DEMO_HEIGHT);
        ann.season = if i % 2 == 0 {
            "summer".into()
        } else {
            "winter".into()
        };
        if i == DEMO_IMAGES - 1 {
            // a photo with a large printed slogan; the text-area filter drops it
            ann.text_regions
                .push(crate::geometry::BBox::new(20.0, 20.0, 300.0, 120.0));
        }
        write(
            ann_dir.join(format!("{id}.json")),
            crate::annotation::to_json(&ann).as_bytes(),
        )?;
        write(
            img_dir.join(format!("{id}.png")),
            &png(&paint_photo(&ann, seed ^ i as u64))?,
        )?;
    }
    write(
        logo_dir.join("acme.png"),
        &png(&paint_logo(
            96,
            48,
            [200, 40, 40, 255],
            [255, 255, 255, 255],
        ))?,
    )?;
    write(
        logo_dir.join("northwind.png"),
        &png(&paint_logo(64, 64, [30, 80, 200, 255], [250, 220, 60, 255]))?,
    )?;

    let library = ElementLibrary {
        logos: ["acme", "northwind"]
            .iter()
            .map(|b| crate::annotation::LogoEntry {
                brand: b.to_string(),
                path: PathBuf::from(format!("logos/{b}.png")),
            })
            .collect(),
        callouts: DEMO_CALLOUTS
            .iter()
            .map(|(t, th)| crate::annotation::CalloutEntry {
                text: t.to_string(),
                themes: th.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
    };
    write(dir.join("library.json"), pretty_json(&library).as_bytes())?;

    let synth = generate_synthetic(&SynthSpec {
        n: 2000,
        seed,
        ..Default::default()
    })
    .map_err(|e| PipelineError::Config(e.to_string()))?;
    let calibration =
        fit_weights(&synth.records).map_err(|e| PipelineError::Config(e.to_string()))?;
    write(
        dir.join("weights.json"),
        pretty_json(&calibration).as_bytes(),
    )?;
    write(
        dir.join("schema.json"),
        pretty_json(&synth.schema).as_bytes(),
    )?;
    let model = train(&synth.dataset, &ModelSpec::logistic().with_seed(seed))
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    write(dir.join("model.json"), model.to_json().as_bytes())?;

    let cfg = PipelineConfig {
        paths: PipelinePaths {
            annotations: "annotations".into(),
            images: "images".into(),
            library: "library.json".into(),
            weights: Some("weights.json".into()),
            schema: Some("schema.json".into()),
            model: Some("model.json".into()),
            output: "out".into(),
        },
        generation: GenerationRequest {
            theme: Some("sale".into()),
            top_k: 2,
            ga: GAConfig {
                population_size: 60,
                generations: 60,
                ..GAConfig::default()
            }
            .with_seed(seed),
            ..GenerationRequest::default()
        },
    };
    write(dir.join("pipeline.json"), pretty_json(&cfg).as_bytes())?;
    write(
        dir.join("layout_problem.json"),
        pretty_json(&crate::synth::layout_problem(seed)).as_bytes(),
    )?;
    Ok(())
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}
