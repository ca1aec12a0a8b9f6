use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::snapshot::{ClusterSnapshot, MemberSnapshot, MemorySnapshot, SnapshotParams};
use super::{age_sigmoid, draw_uniform, InsertOutcome, MemoryCounters, MemorySample, SampleMemory};
use crate::descriptors::{Descriptor, DescriptorKind};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScmParams {
    pub capacity: usize,
    pub lambda_time: f64,
    pub lambda_uncertainty: f64,
    pub num_classes: usize,
    pub descriptor: DescriptorKind,
}

impl Default for ScmParams {
    fn default() -> Self {
        Self {
            capacity: 320,
            lambda_time: 1.0,
            lambda_uncertainty: 1.0,
            num_classes: 100,
            descriptor: DescriptorKind::ChannelStats,
        }
    }
}

impl ScmParams {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(invalid("pool capacity must be at least 1"));
        }
        if !(self.lambda_time >= 0.0 && self.lambda_uncertainty >= 0.0) {
            return Err(invalid("score weights must be nonnegative"));
        }
        if self.num_classes <= 1 {
            return Err(invalid("num_classes must exceed 1 so that ln(N_C) > 0"));
        }
        Ok(())
    }

    /// Two-term replacement score (age and uncertainty only).
    pub fn score(&self, sample: &MemorySample) -> f64 {
        self.lambda_time * age_sigmoid(sample.age, self.capacity)
            + self.lambda_uncertainty * sample.uncertainty / (self.num_classes as f64).ln()
    }
}

/// Unstructured bounded pool.
#[derive(Clone, Debug)]
pub struct SingleClusterMemory {
    params: ScmParams,
    pool: Vec<MemorySample>,
    counters: MemoryCounters,
}

impl SingleClusterMemory {
    pub fn new(params: ScmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            pool: Vec::new(),
            counters: MemoryCounters::default(),
        })
    }

    pub fn params(&self) -> &ScmParams {
        &self.params
    }

    pub fn pool(&self) -> &[MemorySample] {
        &self.pool
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn insert(&mut self, sample: MemorySample, _step: u64) -> Result<InsertOutcome> {
        if sample.descriptor.kind() != self.params.descriptor {
            return Err(Error::KindMismatch {
                expected: self.params.descriptor,
                got: sample.descriptor.kind(),
            });
        }
        self.counters.inserts += 1;
        if self.pool.len() < self.params.capacity {
            self.pool.push(sample);
            return Ok(InsertOutcome::Assigned { cluster: 0 });
        }
        let mut victim = 0usize;
        let mut victim_score = f64::NEG_INFINITY;
        for (i, m) in self.pool.iter().enumerate() {
            let h = self.params.score(m);
            let better = match h.partial_cmp(&victim_score) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => m.id < self.pool[victim].id,
                _ => false,
            };
            if better {
                victim = i;
                victim_score = h;
            }
        }
        let evicted = self.pool[victim].id;
        self.pool[victim] = sample;
        self.counters.evictions += 1;
        Ok(InsertOutcome::Replaced {
            cluster: 0,
            evicted,
        })
    }

    /// Uniform draws from the pool; with replacement only when the pool is
    /// smaller than the request.
    pub fn retrieve<R: Rng + ?Sized>(&mut self, n_adapt: usize, rng: &mut R) -> Result<Vec<MemorySample>> {
        if self.pool.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let mut out = Vec::with_capacity(n_adapt);
        draw_uniform(&self.pool, n_adapt, rng, &mut out);
        self.counters.retrievals += 1;
        Ok(out)
    }

    pub fn age_tick(&mut self) {
        for m in &mut self.pool {
            m.age += 1;
        }
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        let mut members: Vec<MemberSnapshot> = self.pool.iter().map(MemberSnapshot::from).collect();
        members.sort_by_key(|m| m.id);
        let clusters = match Descriptor::mean(self.pool.iter().map(|m| &m.descriptor)) {
            Some(centroid) => vec![ClusterSnapshot {
                creation_index: 0,
                centroid: centroid.into_values(),
                members,
            }],
            None => Vec::new(),
        };
        MemorySnapshot {
            params: SnapshotParams::Scm(self.params.clone()),
            clusters,
        }
    }
}

impl SampleMemory for SingleClusterMemory {
    fn insert(&mut self, sample: MemorySample, step: u64) -> Result<InsertOutcome> {
        SingleClusterMemory::insert(self, sample, step)
    }

    fn age_tick(&mut self) {
        SingleClusterMemory::age_tick(self)
    }

    fn retrieve(
        &mut self,
        n_adapt: usize,
        _step: u64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<MemorySample>> {
        SingleClusterMemory::retrieve(self, n_adapt, rng)
    }

    fn snapshot(&self) -> MemorySnapshot {
        SingleClusterMemory::snapshot(self)
    }

    fn len(&self) -> usize {
        self.pool.len()
    }

    fn num_clusters(&self) -> usize {
        usize::from(!self.pool.is_empty())
    }

    fn counters(&self) -> &MemoryCounters {
        &self.counters
    }
}
