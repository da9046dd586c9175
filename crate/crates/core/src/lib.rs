//! Affordance-chain conditioned manipulation on a 2D tabletop.

pub mod annotate;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod prompt;
pub mod raster;
pub mod seed;
pub mod select;
pub mod tasks;
pub mod world;
