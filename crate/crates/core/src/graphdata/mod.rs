//! Rating and trust graph ingestion, neighbor indexing, and dataset splits.

mod ratings;
mod sampling;
mod social;
mod split;

pub use ratings::{
    load_ratings, parse_ratings, read_dense_triples, write_dense_triples, IdMap, LoadOptions, RatingGraph,
    RatingTriple, RatingsData, RatingsLoadReport, DEFAULT_R_MAX,
};
pub use sampling::{NeighborView, DEFAULT_NEIGHBOR_CAP};
pub use social::{load_trust, parse_trust, read_dense_edges, write_dense_edges, SocialGraph, TrustLoadReport};
pub use split::{content_hash, split, DatasetSplit, SplitManifest};
pub(crate) use split::hex;
