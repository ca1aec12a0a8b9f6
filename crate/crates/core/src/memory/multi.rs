use std::cmp::Ordering;

use rand::Rng;

use super::{
    draw_uniform, score, InsertOutcome, MemoryCounters, MemoryParams, MemorySample, MergeRecord,
    MetricKind, SampleMemory, Strategy,
};
use super::snapshot::{ClusterSnapshot, MemberSnapshot, MemorySnapshot, SnapshotParams};
use crate::descriptors::{DiagCovariance, Descriptor, DistanceMetric};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    creation_index: u64,
    members: Vec<MemorySample>,
    centroid: Descriptor,
    /// Step of the last retrieval (or of creation, if never retrieved).
    last_access: u64,
}

impl Cluster {
    fn singleton(creation_index: u64, sample: MemorySample, step: u64) -> Self {
        let centroid = sample.descriptor.clone();
        Self {
            creation_index,
            members: vec![sample],
            centroid,
            last_access: step,
        }
    }

    pub fn creation_index(&self) -> u64 {
        self.creation_index
    }

    pub fn members(&self) -> &[MemorySample] {
        &self.members
    }

    pub fn centroid(&self) -> &Descriptor {
        &self.centroid
    }

    pub fn last_access(&self) -> u64 {
        self.last_access
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn recompute_centroid(&mut self) {
        if let Some(c) = Descriptor::mean(self.members.iter().map(|m| &m.descriptor)) {
            self.centroid = c;
        }
    }
}

/// Memory partitioned into at most `max_clusters` clusters of at most
/// `capacity` samples each, kept in creation order.
#[derive(Clone, Debug)]
pub struct MultiClusterMemory {
    params: MemoryParams,
    clusters: Vec<Cluster>,
    next_creation_index: u64,
    counters: MemoryCounters,
}

impl MultiClusterMemory {
    pub fn new(params: MemoryParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            clusters: Vec::new(),
            next_creation_index: 0,
            counters: MemoryCounters::default(),
        })
    }

    pub fn params(&self) -> &MemoryParams {
        &self.params
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn counters(&self) -> &MemoryCounters {
        &self.counters
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// The metric currently in force. Mahalanobis uses a diagonal covariance
    /// estimated from every resident descriptor.
    pub fn metric(&self) -> Result<DistanceMetric> {
        Ok(match self.params.metric {
            MetricKind::Euclidean => DistanceMetric::Euclidean,
            MetricKind::Manhattan => DistanceMetric::Manhattan,
            MetricKind::Cosine => DistanceMetric::Cosine,
            MetricKind::Mahalanobis => {
                let dim = self
                    .clusters
                    .first()
                    .map(|c| c.centroid.dim())
                    .unwrap_or(0);
                let rows = self
                    .clusters
                    .iter()
                    .flat_map(|c| c.members.iter().map(|m| m.descriptor.values()));
                DistanceMetric::Mahalanobis(DiagCovariance::estimate(
                    rows,
                    dim,
                    self.params.mahalanobis_shrinkage,
                )?)
            }
        })
    }

    /// Replacement score of member `member` of cluster `cluster` under the current metric.
    pub fn member_score(&self, cluster: usize, member: usize) -> Result<f64> {
        let c = &self.clusters[cluster];
        score(&c.members[member], &c.centroid, &self.params, &self.metric()?)
    }

    pub fn insert(&mut self, sample: MemorySample, step: u64) -> Result<InsertOutcome> {
        let kind = self.params.descriptor;
        if sample.descriptor.kind() != kind {
            return Err(Error::KindMismatch {
                expected: kind,
                got: sample.descriptor.kind(),
            });
        }
        if let Some(first) = self.clusters.first() {
            if first.centroid.dim() != sample.descriptor.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.centroid.dim(),
                    got: sample.descriptor.dim(),
                });
            }
        }
        self.counters.inserts += 1;

        if self.clusters.is_empty() {
            return Ok(self.spawn(sample, step, None));
        }

        let metric = self.metric()?;
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (k, c) in self.clusters.iter().enumerate() {
            let d = metric.between(sample.descriptor.values(), c.centroid.values())?;
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        self.counters.centroid_comparisons += self.clusters.len() as u64;

        // a one-cluster budget absorbs far samples instead of spawning
        if best_dist > self.params.tau && self.params.max_clusters > 1 {
            let merge = if self.clusters.len() >= self.params.max_clusters {
                Some(self.consolidate()?)
            } else {
                None
            };
            return Ok(self.spawn(sample, step, merge));
        }

        let capacity = self.params.capacity;
        if self.clusters[best].members.len() < capacity {
            let c = &mut self.clusters[best];
            c.members.push(sample);
            c.recompute_centroid();
            return Ok(InsertOutcome::Assigned { cluster: best });
        }

        let c = &self.clusters[best];
        let mut victim = 0usize;
        let mut victim_score = f64::NEG_INFINITY;
        for (i, m) in c.members.iter().enumerate() {
            let h = score(m, &c.centroid, &self.params, &metric)?;
            let better = match h.partial_cmp(&victim_score) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => m.id < c.members[victim].id,
                _ => false,
            };
            if better {
                victim = i;
                victim_score = h;
            }
        }
        let c = &mut self.clusters[best];
        let evicted = c.members[victim].id;
        c.members[victim] = sample;
        c.recompute_centroid();
        self.counters.evictions += 1;
        Ok(InsertOutcome::Replaced {
            cluster: best,
            evicted,
        })
    }

    fn spawn(&mut self, sample: MemorySample, step: u64, merge: Option<MergeRecord>) -> InsertOutcome {
        let idx = self.next_creation_index;
        self.next_creation_index += 1;
        self.clusters.push(Cluster::singleton(idx, sample, step));
        self.counters.spawns += 1;
        InsertOutcome::Spawned {
            cluster: self.clusters.len() - 1,
            merge,
        }
    }

    pub fn consolidate(&mut self) -> Result<MergeRecord> {
        self.consolidate_with(self.params.strategy)
    }

    /// Merges one pair of clusters chosen by `strategy`, keeping at most
    /// `capacity` members (lowest uncertainty first).
    pub fn consolidate_with(&mut self, strategy: Strategy) -> Result<MergeRecord> {
        let k = self.clusters.len();
        if k < 2 {
            return Err(Error::TooFewClusters(k));
        }
        let metric = self.metric()?;
        let dist = |i: usize, j: usize| -> Result<f64> {
            metric.between(self.clusters[i].centroid.values(), self.clusters[j].centroid.values())
        };

        let (pair, comparisons) = match strategy {
            Strategy::Acc => {
                let mut best = (0, 1);
                let mut best_d = f64::INFINITY;
                for i in 0..k - 1 {
                    let d = dist(i, i + 1)?;
                    if d < best_d {
                        best_d = d;
                        best = (i, i + 1);
                    }
                }
                (best, k - 1)
            }
            Strategy::Gcc => {
                let mut best = (0, 1);
                let mut best_d = f64::INFINITY;
                let mut n = 0;
                for i in 0..k {
                    for j in i + 1..k {
                        let d = dist(i, j)?;
                        n += 1;
                        if d < best_d {
                            best_d = d;
                            best = (i, j);
                        }
                    }
                }
                (best, n)
            }
            Strategy::SmallestMerge | Strategy::Lru => {
                let source = if strategy == Strategy::SmallestMerge {
                    (0..k).min_by_key(|&i| (self.clusters[i].len(), i))
                } else {
                    (0..k).min_by_key(|&i| (self.clusters[i].last_access, i))
                }
                .expect("k >= 2");
                let mut target = usize::MAX;
                let mut best_d = f64::INFINITY;
                for j in (0..k).filter(|&j| j != source) {
                    let d = dist(source, j)?;
                    if d < best_d || target == usize::MAX {
                        best_d = d;
                        target = j;
                    }
                }
                ((source.min(target), source.max(target)), k - 1)
            }
        };
        self.counters.consolidation_comparisons += comparisons as u64;
        self.counters.merges += 1;

        let (i, j) = pair;
        let later = self.clusters.remove(j);
        let capacity = self.params.capacity;
        let earlier = &mut self.clusters[i];
        let merged_creation = (earlier.creation_index, later.creation_index);

        let mut pool: Vec<(u64, usize, MemorySample)> = earlier
            .members
            .drain(..)
            .map(|m| (merged_creation.0, m))
            .chain(later.members.into_iter().map(|m| (merged_creation.1, m)))
            .enumerate()
            .map(|(pos, (c, m))| (c, pos, m))
            .collect();
        let mut dropped_ids = Vec::new();
        if pool.len() > capacity {
            pool.sort_by(|(ca, _, a), (cb, _, b)| {
                a.uncertainty
                    .total_cmp(&b.uncertainty)
                    .then(ca.cmp(cb))
                    .then(a.id.cmp(&b.id))
            });
            dropped_ids = pool.drain(capacity..).map(|(_, _, m)| m.id).collect();
            dropped_ids.sort_unstable();
            // restore origin order (earlier cluster first, then insertion order)
            pool.sort_by_key(|(_, pos, _)| *pos);
        }
        earlier.members = pool.into_iter().map(|(_, _, m)| m).collect();
        earlier.last_access = earlier.last_access.max(later.last_access);
        earlier.recompute_centroid();
        self.counters.merge_dropped += dropped_ids.len() as u64;

        Ok(MergeRecord {
            strategy,
            merged_pair: pair,
            merged_creation,
            clusters_before: k,
            comparisons,
            survivors_kept: earlier.members.len(),
            dropped_ids,
        })
    }

    /// Uniform cluster retrieval: `floor(n_adapt / K)` draws from every cluster.
    pub fn retrieve_ucr<R: Rng + ?Sized>(
        &mut self,
        n_adapt: usize,
        step: u64,
        rng: &mut R,
    ) -> Result<Vec<MemorySample>> {
        let k = self.clusters.len();
        if k == 0 {
            return Err(Error::EmptyMemory);
        }
        if n_adapt < k {
            return Err(crate::error::invalid(format!(
                "n_adapt ({n_adapt}) must be at least the cluster count ({k})"
            )));
        }
        let quota = n_adapt / k;
        let mut out = Vec::with_capacity(quota * k);
        for c in &mut self.clusters {
            draw_uniform(&c.members, quota, rng, &mut out);
            c.last_access = step;
        }
        self.counters.retrievals += 1;
        Ok(out)
    }

    pub fn age_tick(&mut self) {
        for m in self.clusters.iter_mut().flat_map(|c| c.members.iter_mut()) {
            m.age += 1;
        }
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        let mut clusters: Vec<ClusterSnapshot> = self
            .clusters
            .iter()
            .map(|c| {
                let mut members: Vec<MemberSnapshot> =
                    c.members.iter().map(MemberSnapshot::from).collect();
                members.sort_by_key(|m| m.id);
                ClusterSnapshot {
                    creation_index: c.creation_index,
                    centroid: c.centroid.values().to_vec(),
                    members,
                }
            })
            .collect();
        clusters.sort_by_key(|c| c.creation_index);
        MemorySnapshot {
            params: SnapshotParams::Mcm(self.params.clone()),
            clusters,
        }
    }
}

impl SampleMemory for MultiClusterMemory {
    fn insert(&mut self, sample: MemorySample, step: u64) -> Result<InsertOutcome> {
        MultiClusterMemory::insert(self, sample, step)
    }

    fn age_tick(&mut self) {
        MultiClusterMemory::age_tick(self)
    }

    fn retrieve(
        &mut self,
        n_adapt: usize,
        step: u64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<MemorySample>> {
        self.retrieve_ucr(n_adapt, step, rng)
    }

    fn snapshot(&self) -> MemorySnapshot {
        MultiClusterMemory::snapshot(self)
    }

    fn len(&self) -> usize {
        MultiClusterMemory::len(self)
    }

    fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    fn counters(&self) -> &MemoryCounters {
        &self.counters
    }
}
