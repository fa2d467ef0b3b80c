//! Sparse context-aware self-attention: cluster the task-relevant patches by
//! joint morphology/position similarity, refine each cluster with
//! multi-head self-attention, then pool every patch into one bag feature.

mod attention;
mod embed;
pub mod kmeans;
mod pool;

pub use attention::ClusterAttention;
pub use embed::joint_embed;
pub use kmeans::{cluster_count, kmeans, ClusterPartition};
pub use pool::{GatedAttentionPool, Pooled};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_CLUSTER_SIZE: usize = 64;
pub const DEFAULT_W1: f64 = 0.8;

/// Partitions relevant patches into `ceil(n / cluster_size)` clusters by
/// K-Means on their joint embedding.
pub fn cluster<R: Rng + ?Sized>(
    features: &Matrix,
    positions01: &Matrix,
    w1: f64,
    cluster_size: usize,
    rng: &mut R,
) -> Result<ClusterPartition> {
    if features.rows() == 0 {
        return Err(Error::Config("clustering needs at least one patch".into()));
    }
    if cluster_size == 0 {
        return Err(Error::Config("cluster size must be at least 1".into()));
    }
    let embedded = joint_embed(features, positions01, w1)?;
    let k = cluster_count(features.rows(), cluster_size);
    Ok(kmeans(&embedded, k, rng))
}
