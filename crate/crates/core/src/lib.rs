//! Neighborhood stability scoring over embedding collections.
//!
//! A query's score is the fraction of its `k` nearest neighbors whose own
//! nearest neighbor also lies among those `k`. Sharp local peaks score high,
//! flat regions low.

pub mod ann;
pub mod corpusfreq;
pub mod error;
pub mod evalstats;
pub mod nsm;
pub mod synthgen;
pub mod vecstore;

pub use ann::{batch_nn1, FlatSearch, IvfIndex, IvfSearch, NeighborSearch};
pub use error::{Error, Result};
pub use evalstats::{EvalReport, RatingsTable, SplitSpec};
pub use nsm::{NeighborTable, NsmScore, Stability};
pub use vecstore::{LabeledQuerySet, Metric, VectorCollection};
