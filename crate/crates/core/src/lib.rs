//! Offline engine for generating banner creatives.
//!
//! The crate is organised along the stages of the generation pipeline:
//!
//! * [`annotation`]: structured image annotations (persons, faces, articles,
//!   scene, text regions), validation and catalog filtering.
//! * [`energy`]: the layout model and the aesthetic energy terms
//!   (overlap, distance, symmetry, alignment) plus size constraints.
//! * [`ga`]: genetic search over movable element placements and an
//!   exhaustive lattice oracle for small problems.
//! * [`calibration`]: fitting energy weights against historical CTR.
//! * [`compositor`]: raster cropping, gradients, bitmap text and logo pasting.
//! * [`features`]: fixed-schema banner feature vectors.
//! * [`ranker`]: CTR models (logistic regression, decision tree, random
//!   forest), ranking, AUC and NDCG.
//! * [`pipeline`]: end-to-end orchestration, persistence and synthetic data.

pub mod annotation;
pub mod calibration;
pub mod compositor;
pub mod energy;
pub mod features;
pub mod ga;
pub mod geometry;
pub mod pipeline;
pub mod ranker;
pub mod synth;

pub use annotation::{BBox, ImageAnnotation};
pub use energy::{EnergyBreakdown, EnergyWeights, Layout};
