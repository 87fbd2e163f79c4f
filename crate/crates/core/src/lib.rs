//! Rehabilitation outcome analytics for post-stroke patients.
//!
//! The crate covers the whole pipeline from free-text procedure notes to
//! statistical and predictive results:
//!
//! 1. [`note_parser`] pulls AM-PAC scores and exercise mentions out of notes.
//! 2. [`cohort`] bins scores to the first visit, one month and two months and
//!    attaches stage-wise exercise exposures and demographics.
//! 3. [`outcomes`] estimates the MCID (0.2 pooled SD) and labels each stage
//!    change as improved or not.
//! 4. [`stats`] runs Friedman / Wilcoxon tests over timepoints and screens
//!    exercises with chi-square or Fisher exact tests plus conditional
//!    maximum-likelihood odds ratios.
//! 5. [`models`] trains and cross-validates five binary classifiers.
//! 6. [`synth`] produces deterministic synthetic cohorts with planted effects.

pub mod cohort;
pub mod models;
pub mod note_parser;
pub mod outcomes;
pub mod rng;
pub mod stats;
pub mod synth;

pub use note_parser::Domain;
