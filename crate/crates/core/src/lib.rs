//! Privacy-preserving location queries on discrete road networks.
//!
//! A road network is a weighted directed graph whose nodes are fixed-length
//! road segments. Locations are obfuscated with a discrete truncated Laplace
//! channel satisfying approximate geo-indistinguishability, hidden among
//! dummy locations, and shuffled at an edge aggregator before reaching the
//! third-party responder. The analysis side quantifies the travel-distance
//! cost of privacy through graph Voronoi decompositions and recovers query
//! distributions from the sanitized stream with iterative Bayesian update.

pub mod cop;
pub mod dummy;
pub mod edge;
pub mod emd;
pub mod error;
pub mod ibu;
pub mod mechanism;
pub mod road_network;
pub mod sim;

pub use error::{Error, Result};
pub use road_network::{
    nearest_available_station, EdgeCoverage, NearestStation, RoadNetwork, SegmentId, Station,
    StationSet,
};

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
