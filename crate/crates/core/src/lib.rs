//! Speaker-to-text attribution for comics.
//!
//! Pages are loaded from Manga109-style annotations ([`dataset`]), frames are
//! put in reading order ([`order`]), character→text relation scores come from
//! rule-based predictors, a distance heuristic or external score files
//! ([`predict`]), and predictions are scored with Recall@K and
//! Recall@(#text) per difficulty ([`eval`]). [`synth`] generates pages with
//! known ground truth plus brute-force oracles, and [`viz`] renders SVG
//! overlays.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod order;
pub mod predict;
pub mod synth;
pub mod viz;

pub use error::{Error, Result};
pub use geometry::BBox;
