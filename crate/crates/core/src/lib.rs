//! Semantic localization (SeLo) of text queries in large remote-sensing
//! images: multi-scale map generation and the `R_su`/`R_as`/`R_da`/`R_mi`
//! evaluation indicators.
//!
//! The usual flow is [`pipeline::generate_selo_map`] to turn a query and an
//! image into a probability map, then [`metrics::evaluate_case`] to score the
//! map against annotated ground-truth regions. [`report`] wires both over a
//! whole test manifest.

pub mod annotations;
pub mod error;
pub mod io;
pub mod map;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod scorer;

pub use annotations::{load_manifest, GtRegionContext, Manifest, Point, Polygon, TestCase};
pub use error::{Error, Result, ScorerError};
pub use io::RasterRef;
pub use map::{Mask, ProbabilityMap};
pub use metrics::{evaluate_case, AttentionPoint, Indicators, MetricParams, SeLoScores};
pub use pipeline::{generate_selo_map, MedianKernel, PipelineConfig, SeloOutput, StageTimings};
pub use report::RunReport;
pub use scorer::{Scorer, ScorerFactory, ScorerSpec};
