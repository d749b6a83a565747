//! Disk-oriented locality-sensitive hashing for c-approximate k-NN search.
//!
//! Two index designs share one collision-counting query loop:
//!
//! * [`C2lshIndex`]: per projection, ids sorted by bucket with a bucket
//!   directory; radii grow by virtual rehashing of aligned bucket blocks.
//! * [`QalshIndex`]: per projection, raw hash values under a paged B+-tree;
//!   radii grow as query-centred value ranges.
//!
//! [`StreamingIndex`] pairs either one with an in-memory delta so points can
//! be inserted without rebuilding. Everything is generic over `f32`/`f64`
//! coordinates; the aliases below fix the scalar.

pub mod c2lsh;
pub mod error;
pub mod fvecs;
pub mod hash;
pub mod io_stats;
pub mod manifest;
pub mod params;
pub mod qalsh;
pub mod scalar;
pub mod search;
pub mod streaming;
pub mod vector;

pub use c2lsh::{C2lshIndex, C2lshProjectionFile};
pub use error::{Error, Result};
pub use hash::ProjectionSet;
pub use io_stats::IoStats;
pub use manifest::{Algo, Manifest};
pub use params::{collision_probability, LshParams};
pub use qalsh::{range_collect, QalshIndex, QalshMode, QalshTree, RangeCursor};
pub use scalar::Scalar;
pub use search::{QueryReport, StopRule};
pub use streaming::{DeltaComponent, MergePolicy, SharedStreamingIndex, StreamConfig, StreamingIndex};
pub use vector::{brute_force_knn, euclidean, Dataset, GroundTruth, Neighbor, PointId, VectorRecord};

pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
pub type VectorRecord32 = VectorRecord<f32>;
pub type VectorRecord64 = VectorRecord<f64>;
pub type StreamingIndex32 = StreamingIndex<f32>;
pub type StreamingIndex64 = StreamingIndex<f64>;
