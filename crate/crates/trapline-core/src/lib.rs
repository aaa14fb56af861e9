//! Analysis core for the trapline camera-trap pipeline.
//!
//! Everything in this crate is pure computation over owned data: taxonomy and
//! geometry, capture-stamp parsing, dataset splitting, detection filtering,
//! overlay rasterisation, scene-text parsing, passage retrieval, question
//! answering, evaluation metrics, and report shaping. There is no IO here;
//! the companion `trapline` crate owns files, endpoints, and the CLI.
//!
//! The crate is `no_std` (with `alloc`) so the core can be embedded or
//! cross-checked in constrained environments.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotate;
pub mod context;
pub mod detect;
pub mod domain;
pub mod math;
pub mod metrics;
pub mod qa;
pub mod rag;
pub mod report;
pub mod rng;
pub mod split;

pub use domain::{BoundingBox, Detection, Taxonomy, TaxonomyClass};
