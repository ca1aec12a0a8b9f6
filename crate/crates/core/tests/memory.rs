mod common;

use common::*;
use mcm_core::descriptors::{Descriptor, DescriptorKind};
use mcm_core::memory::{
    MemoryParams, MemorySample, MultiClusterMemory, SampleMemory, ScmParams, SingleClusterMemory, Strategy,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn eviction_and_merge_match_brute_force() {
    let mut total = EventTally::default();
    for (i, strategy) in Strategy::ALL.into_iter().enumerate() {
        let t = check_random_events(100 + i as u64, small_params(strategy), 2500).unwrap();
        assert!(t.evictions > 50 && t.merges > 20, "{strategy:?}: {t:?}");
        total.evictions += t.evictions;
        total.merges += t.merges;
    }
    assert!(total.evictions >= 500 && total.merges >= 500, "{total:?}");
}

#[test]
fn larger_budget_matches_brute_force() {
    let params = MemoryParams {
        capacity: 8,
        max_clusters: 5,
        tau: 0.25,
        lambda_distance: 2.0,
        ..MemoryParams::for_classes(40)
    };
    check_random_events(7, params.clone(), 1500).unwrap();
    check_random_events(8, MemoryParams { strategy: Strategy::Gcc, ..params }, 1500).unwrap();
}

fn random_samples(seed: u64, n: usize, far: bool) -> Vec<MemorySample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = if far { 1.0 } else { 0.2 };
    (0..n as u64)
        .map(|id| {
            let x: Vec<f64> = (0..DIM).map(|_| spread * rng.random::<f64>()).collect();
            MemorySample::new(id, Descriptor::new(DescriptorKind::ChannelStats, x), rng.random::<f64>() * 2.0)
                .with_labels(rng.random_range(0..6), rng.random_range(0..10))
        })
        .collect()
}

fn fingerprint(m: &dyn SampleMemory) -> Vec<(u64, Vec<u64>, Vec<u64>)> {
    m.snapshot()
        .clusters
        .iter()
        .map(|c| {
            (
                c.creation_index,
                c.members.iter().map(|s| s.id).collect(),
                c.centroid.iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

fn trajectory(memory: &mut dyn SampleMemory, samples: &[MemorySample], seed: u64) -> Vec<(Vec<(u64, Vec<u64>, Vec<u64>)>, Vec<u64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .enumerate()
        .map(|(t, s)| {
            memory.insert(s.clone(), t as u64).unwrap();
            memory.age_tick();
            let got = memory.retrieve(8, t as u64, &mut rng).unwrap();
            (fingerprint(memory), got.iter().map(|g| g.id).collect())
        })
        .collect()
}

fn relabel(samples: &[MemorySample]) -> Vec<MemorySample> {
    samples
        .iter()
        .map(|s| {
            let (m, c) = (s.diag_mode, s.diag_class);
            s.clone().with_labels((m + 4) % 6, 9 - c)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn structural_invariants(
        seed in 0u64..10_000,
        capacity in 1usize..8,
        max_clusters in 1usize..6,
        tau in 0.05f64..0.8,
        strategy in prop::sample::select(Strategy::ALL.to_vec()),
    ) {
        let params = MemoryParams { capacity, max_clusters, tau, strategy, ..MemoryParams::for_classes(10) };
        let mut mem = MultiClusterMemory::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (t, s) in random_samples(seed, 150, true).into_iter().enumerate() {
            mem.insert(s, t as u64).unwrap();
            prop_assert!(mem.clusters().len() <= max_clusters);
            for c in mem.clusters() {
                prop_assert!(!c.is_empty() && c.len() <= capacity);
                for (a, b) in c.centroid().values().iter().zip(member_mean(c)) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
            let n_adapt = max_clusters + (seed as usize % 20);
            let k = mem.clusters().len();
            let got = mem.retrieve_ucr(n_adapt, t as u64, &mut rng).unwrap();
            prop_assert_eq!(got.len(), (n_adapt / k) * k);
        }
        let ids: Vec<u64> = mem.clusters().iter().flat_map(ids_of).collect();
        let mut dedup = ids.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(ids.len(), dedup.len());
    }

    #[test]
    fn ucr_draws_evenly_from_every_cluster(seed in 0u64..10_000, n_adapt in 5usize..100) {
        let mut mem = MultiClusterMemory::new(small_params(Strategy::Acc)).unwrap();
        for (t, s) in random_samples(seed, 60, true).into_iter().enumerate() {
            mem.insert(s, t as u64).unwrap();
        }
        let k = mem.clusters().len();
        prop_assume!(n_adapt >= k);
        let owner = |id: u64| mem.clusters().iter().position(|c| c.members().iter().any(|m| m.id == id)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let got = mem.clone().retrieve_ucr(n_adapt, 0, &mut rng).unwrap();
        let mut per = vec![0usize; k];
        for g in &got {
            per[owner(g.id)] += 1;
        }
        prop_assert!(per.iter().all(|&n| n == n_adapt / k), "{:?}", per);
    }

    #[test]
    fn diagnostic_labels_do_not_steer_memory(seed in 0u64..10_000) {
        let samples = random_samples(seed, 120, seed % 2 == 0);
        let permuted = relabel(&samples);
        let params = MemoryParams { strategy: Strategy::ALL[seed as usize % 4], ..small_params(Strategy::Acc) };
        let a = trajectory(&mut MultiClusterMemory::new(params.clone()).unwrap(), &samples, seed);
        let b = trajectory(&mut MultiClusterMemory::new(params).unwrap(), &permuted, seed);
        prop_assert_eq!(a, b);
        let scm = ScmParams { capacity: 20, num_classes: 10, ..ScmParams::default() };
        let a = trajectory(&mut SingleClusterMemory::new(scm.clone()).unwrap(), &samples, seed);
        let b = trajectory(&mut SingleClusterMemory::new(scm).unwrap(), &permuted, seed);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn replays_are_identical() {
    let samples = random_samples(3, 400, true);
    for strategy in Strategy::ALL {
        let p = small_params(strategy);
        let a = trajectory(&mut MultiClusterMemory::new(p.clone()).unwrap(), &samples, 11);
        let b = trajectory(&mut MultiClusterMemory::new(p).unwrap(), &samples, 11);
        assert_eq!(a, b);
    }
}

#[test]
fn scm_evicts_two_term_argmax_on_random_stream() {
    let p = ScmParams { capacity: 10, num_classes: 10, ..ScmParams::default() };
    let mut mem = SingleClusterMemory::new(p.clone()).unwrap();
    for (t, s) in random_samples(5, 300, true).into_iter().enumerate() {
        let full = mem.len() == p.capacity;
        let want = full.then(|| {
            let top = mem.pool().iter().map(|m| p.score(m)).fold(f64::NEG_INFINITY, f64::max);
            mem.pool().iter().filter(|m| p.score(m) == top).map(|m| m.id).min().unwrap()
        });
        let out = mem.insert(s, t as u64).unwrap();
        if let Some(w) = want {
            assert_eq!(out, mcm_core::memory::InsertOutcome::Replaced { cluster: 0, evicted: w });
        }
        if t % 3 == 0 {
            mem.age_tick();
        }
    }
}
