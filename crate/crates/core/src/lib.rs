//! Artifact-driven brain-computer interface pipeline.
//!
//! Eye blinks, jaw clenches and head movements leave large, stereotyped
//! footprints in EEG. This crate turns those footprints into input:
//!
//! - [`signal`]: trial containers, trial file formats and the preprocessing chain
//! - [`detect`]: energy-threshold artifact detection and overlap-based F1 scoring
//! - [`warp`]: linear and dynamic time warping distances with path backtracking
//! - [`classify`]: kNN artifact classification and evaluation protocols
//! - [`online`]: streaming calibration, blink counting and chunk classification
//! - [`lexicon`]: frequency-ranked dictionary with T9 and prefix suggestion
//! - [`speller`]: the scanning T9 / ABC predictive keyboards
//! - [`synth`]: seeded synthetic trials, streams and templates

pub mod classify;
pub mod detect;
mod error;
pub mod lexicon;
pub mod online;
pub mod signal;
pub mod speller;
mod stats;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use signal::{Annotation, ArtifactClass, ArtifactSignal, EegTrial, FilterSpec};
pub use warp::{LocalDistance, Method, Series, WarpResult, WarpVariant};
