use serde::{Deserialize, Serialize};

use super::{MemoryParams, MemorySample, ScmParams};

/// Immutable copy of a memory's contents, serialized as
/// `{params, clusters: [{creation_index, centroid, members: [...]}]}`.
/// Clusters are ordered by creation index and members by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub params: SnapshotParams,
    pub clusters: Vec<ClusterSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SnapshotParams {
    Mcm(MemoryParams),
    Scm(ScmParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub creation_index: u64,
    pub centroid: Vec<f64>,
    pub members: Vec<MemberSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberSnapshot {
    pub id: u64,
    pub descriptor: Vec<f64>,
    pub uncertainty: f64,
    pub age: u64,
    pub diag_mode: usize,
    pub diag_class: usize,
}

impl From<&MemorySample> for MemberSnapshot {
    fn from(s: &MemorySample) -> Self {
        Self {
            id: s.id,
            descriptor: s.descriptor.values().to_vec(),
            uncertainty: s.uncertainty,
            age: s.age,
            diag_mode: s.diag_mode,
            diag_class: s.diag_class,
        }
    }
}

impl MemorySnapshot {
    pub fn len(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(cluster position, member)` rows in serialization order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &MemberSnapshot)> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.members.iter().map(move |m| (k, m)))
    }

    pub fn descriptors(&self) -> Vec<Vec<f64>> {
        self.rows().map(|(_, m)| m.descriptor.clone()).collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{Descriptor, DescriptorKind};
    use crate::memory::MultiClusterMemory;

    #[test]
    fn json_shape() {
        let mut m = MultiClusterMemory::new(MemoryParams::default()).unwrap();
        let s = MemorySample::new(4, Descriptor::new(DescriptorKind::ChannelStats, vec![0.1; 6]), 0.2)
            .with_labels(2, 7);
        m.insert(s, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.snapshot().to_json().unwrap()).unwrap();
        assert_eq!(v["params"]["variant"], "mcm");
        let member = &v["clusters"][0]["members"][0];
        assert_eq!(v["clusters"][0]["creation_index"], 0);
        assert_eq!(member["id"], 4);
        assert_eq!(member["diag_mode"], 2);
        assert_eq!(member["diag_class"], 7);
        assert_eq!(member["age"], 0);
        assert_eq!(member["descriptor"].as_array().unwrap().len(), 6);
        let back: MemorySnapshot = serde_json::from_value(v).unwrap();
        assert_eq!(back, m.snapshot());
    }
}
