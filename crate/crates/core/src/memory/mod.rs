//! Bounded sample memories: the multi-cluster memory and the single-pool
//! baseline it is compared against.

mod multi;
mod single;
mod snapshot;

pub use multi::{Cluster, MultiClusterMemory};
pub use single::{ScmParams, SingleClusterMemory};
pub use snapshot::{ClusterSnapshot, MemberSnapshot, MemorySnapshot, SnapshotParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::{Descriptor, DescriptorKind, DistanceMetric};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_CAPACITY: usize = 64;
pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_SHRINKAGE: f64 = 1e-6;

/// Cluster budget as a function of the class count: `min(5, max(1, floor(n/20)))`.
pub fn compute_kmax(num_classes: usize) -> usize {
    (num_classes / 20).clamp(1, 5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySample {
    pub id: u64,
    pub descriptor: Descriptor,
    /// Opaque reference to the stored image; memory never dereferences it.
    pub payload_ref: u64,
    pub uncertainty: f64,
    /// Stream steps since insertion.
    pub age: u64,
    /// Ground-truth labels used only by diagnostics.
    pub diag_mode: usize,
    pub diag_class: usize,
}

impl MemorySample {
    pub fn new(id: u64, descriptor: Descriptor, uncertainty: f64) -> Self {
        Self {
            id,
            descriptor,
            payload_ref: id,
            uncertainty,
            age: 0,
            diag_mode: 0,
            diag_class: 0,
        }
    }

    pub fn with_labels(mut self, mode: usize, class: usize) -> Self {
        self.diag_mode = mode;
        self.diag_class = class;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Closest pair among creation-order neighbours.
    Acc,
    /// Closest pair overall.
    Gcc,
    /// Smallest cluster into its nearest neighbour.
    SmallestMerge,
    /// Least recently retrieved cluster into its nearest neighbour.
    Lru,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Acc,
        Strategy::Gcc,
        Strategy::SmallestMerge,
        Strategy::Lru,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Acc => "acc",
            Strategy::Gcc => "gcc",
            Strategy::SmallestMerge => "smallest_merge",
            Strategy::Lru => "lru",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "acc" => Ok(Strategy::Acc),
            "gcc" => Ok(Strategy::Gcc),
            "smallest_merge" | "smallest" => Ok(Strategy::SmallestMerge),
            "lru" => Ok(Strategy::Lru),
            other => Err(invalid(format!("unknown consolidation strategy `{other}`"))),
        }
    }
}

/// Metric selection for a memory. The Mahalanobis covariance is not fixed
/// up front: it is re-estimated from the memory's own descriptors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Manhattan,
    Cosine,
    Mahalanobis,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Manhattan => "manhattan",
            MetricKind::Cosine => "cosine",
            MetricKind::Mahalanobis => "mahalanobis",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(MetricKind::Euclidean),
            "manhattan" | "l1" => Ok(MetricKind::Manhattan),
            "cosine" => Ok(MetricKind::Cosine),
            "mahalanobis" => Ok(MetricKind::Mahalanobis),
            other => Err(invalid(format!("unknown distance metric `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryParams {
    /// Per-cluster capacity `N`.
    pub capacity: usize,
    pub max_clusters: usize,
    /// Spawn threshold in descriptor-distance units.
    pub tau: f64,
    pub metric: MetricKind,
    pub mahalanobis_shrinkage: f64,
    pub strategy: Strategy,
    pub lambda_time: f64,
    pub lambda_uncertainty: f64,
    pub lambda_distance: f64,
    pub num_classes: usize,
    pub descriptor: DescriptorKind,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self::for_classes(100)
    }
}

impl MemoryParams {
    pub fn for_classes(num_classes: usize) -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            max_clusters: compute_kmax(num_classes.max(1)),
            tau: DEFAULT_TAU,
            metric: MetricKind::Euclidean,
            mahalanobis_shrinkage: DEFAULT_SHRINKAGE,
            strategy: Strategy::Acc,
            lambda_time: 1.0,
            lambda_uncertainty: 1.0,
            lambda_distance: 1.0,
            num_classes,
            descriptor: DescriptorKind::ChannelStats,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(invalid("per-cluster capacity must be at least 1"));
        }
        if self.max_clusters == 0 {
            return Err(invalid("max_clusters must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau must be positive"));
        }
        if !(self.mahalanobis_shrinkage >= 0.0) {
            return Err(invalid("Mahalanobis shrinkage must be nonnegative"));
        }
        for (name, l) in [
            ("lambda_time", self.lambda_time),
            ("lambda_uncertainty", self.lambda_uncertainty),
            ("lambda_distance", self.lambda_distance),
        ] {
            if !(l >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative")));
            }
        }
        if self.num_classes <= 1 {
            return Err(invalid("num_classes must exceed 1 so that ln(N_C) > 0"));
        }
        Ok(())
    }

    pub fn total_capacity(&self) -> usize {
        self.capacity * self.max_clusters
    }
}

#[inline]
pub(crate) fn age_sigmoid(age: u64, capacity: usize) -> f64 {
    1.0 / (1.0 + (-(age as f64) / capacity as f64).exp())
}

/// Replacement score of `sample` against a cluster centroid; the
/// highest-scoring member is the one evicted.
///
/// `H = l_t * sigmoid(A / N) + l_u * U / ln(N_C) + l_d * dist(d, D_k)`.
pub fn score(
    sample: &MemorySample,
    centroid: &Descriptor,
    params: &MemoryParams,
    metric: &DistanceMetric,
) -> Result<f64> {
    if params.num_classes <= 1 {
        return Err(invalid("num_classes must exceed 1 so that ln(N_C) > 0"));
    }
    let time = age_sigmoid(sample.age, params.capacity);
    let unc = sample.uncertainty / (params.num_classes as f64).ln();
    let dist = metric.between(sample.descriptor.values(), centroid.values())?;
    Ok(params.lambda_time * time + params.lambda_uncertainty * unc + params.lambda_distance * dist)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub strategy: Strategy,
    /// Positions of the merged pair before the merge, earlier first.
    pub merged_pair: (usize, usize),
    /// Creation indices of the merged pair; the merged cluster keeps the first.
    pub merged_creation: (u64, u64),
    pub clusters_before: usize,
    /// Centroid-distance evaluations spent choosing the pair.
    pub comparisons: usize,
    pub survivors_kept: usize,
    pub dropped_ids: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsertOutcome {
    Assigned { cluster: usize },
    Replaced { cluster: usize, evicted: u64 },
    Spawned { cluster: usize, merge: Option<MergeRecord> },
}

impl InsertOutcome {
    pub fn cluster(&self) -> usize {
        match *self {
            InsertOutcome::Assigned { cluster }
            | InsertOutcome::Replaced { cluster, .. }
            | InsertOutcome::Spawned { cluster, .. } => cluster,
        }
    }

    pub fn merge(&self) -> Option<&MergeRecord> {
        match self {
            InsertOutcome::Spawned { merge, .. } => merge.as_ref(),
            _ => None,
        }
    }
}

/// Operation counters; the harness uses them as a runtime proxy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCounters {
    pub inserts: u64,
    pub spawns: u64,
    pub evictions: u64,
    pub merges: u64,
    /// Distance evaluations against centroids during assignment.
    pub centroid_comparisons: u64,
    /// Distance evaluations spent selecting consolidation pairs.
    pub consolidation_comparisons: u64,
    pub merge_dropped: u64,
    pub retrievals: u64,
}

/// Common surface of the two memory designs so the harness can drive either.
pub trait SampleMemory {
    fn insert(&mut self, sample: MemorySample, step: u64) -> Result<InsertOutcome>;

    fn age_tick(&mut self);

    fn retrieve(&mut self, n_adapt: usize, step: u64, rng: &mut dyn rand::RngCore) -> Result<Vec<MemorySample>>;

    fn snapshot(&self) -> MemorySnapshot;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn num_clusters(&self) -> usize;

    fn counters(&self) -> &MemoryCounters;
}

/// Draws `count` members uniformly: without replacement while the pool is
/// large enough, with replacement otherwise.
pub(crate) fn draw_uniform<R: Rng + ?Sized>(
    pool: &[MemorySample],
    count: usize,
    rng: &mut R,
    out: &mut Vec<MemorySample>,
) {
    if pool.is_empty() || count == 0 {
        return;
    }
    if pool.len() >= count {
        for i in rand::seq::index::sample(rng, pool.len(), count) {
            out.push(pool[i].clone());
        }
    } else {
        for _ in 0..count {
            out.push(pool[rng.random_range(0..pool.len())].clone());
        }
    }
}
