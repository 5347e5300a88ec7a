//! Interactive synthesis of select/project/join queries from sketches.
//!
//! A sketch is a query with named holes at table and column positions plus
//! soft constraints describing the data the user expects. The engine samples
//! likely completions, asks the user yes/no questions about single-hole
//! refinements, and converges on the intended query.

pub mod bench;
pub mod catalog;
pub mod engine;
pub mod eval;
pub mod lang;
pub mod questions;
pub mod sampler;
pub mod scalar;
pub mod softsem;

pub use catalog::{load_database, Catalog, CatalogError, ColumnName, Value, ValueType};
pub use engine::{EngineConfig, Mode, Status};
pub use lang::{parse_completion, parse_sketch, print_sketch, Completion, Sketch};
pub use sampler::SamplerConfig;
pub use scalar::Scalar;

/// Double-precision instantiations of the generic core.
pub type Theta = softsem::ThetaTable<f64>;
pub type Session = engine::Session<f64>;
pub type ScoredQuestion = questions::ScoredQuestion<f64>;
