//! Textual and visual affordance prompts.

pub mod text;
pub mod visual;

use thiserror::Error;

pub use text::{classify_clause, parse_textual, textualize, Kind, TextualAffordance};
pub use visual::{render_visual, StyleConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("no affordance component selected")]
    EmptyChain,
    #[error("an affordance component has no points")]
    EmptyComponent,
    #[error("object name {0:?} cannot be written into the prompt grammar")]
    InvalidName(String),
    #[error("malformed textual affordance: {0}")]
    MalformedText(String),
    #[error("observation is {width}x{height}, expected {expected}x{expected}")]
    ResolutionMismatch { expected: usize, width: usize, height: usize },
    #[error("invalid overlay style: {0}")]
    InvalidStyle(String),
}
