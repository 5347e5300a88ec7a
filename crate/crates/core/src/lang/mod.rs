//! Sketch language: AST, surface syntax, refinement and derivation.

pub mod ast;
pub mod matching;
pub mod parse;
pub mod print;
pub mod refine;

pub use ast::*;
pub use matching::{derives, matches};
pub use parse::{parse_completion, parse_sketch, Location, ParseError};
pub use print::{print_sketch, print_table};
pub use refine::{apply_refinement, Fill, ProductionSeq, RefineError};
