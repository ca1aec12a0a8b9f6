#![allow(dead_code)]

use mcm_core::descriptors::{Descriptor, DescriptorKind};
use mcm_core::harness::ExperimentConfig;
use mcm_core::memory::{
    Cluster, InsertOutcome, MemoryCounters, MemoryParams, MemorySample, MemorySnapshot, MultiClusterMemory, SampleMemory,
    ScmParams, Strategy,
};
use mcm_core::Result as CoreResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const DIM: usize = 6;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn member_mean(c: &Cluster) -> Vec<f64> {
    let mut m = vec![0.0; c.centroid().dim()];
    for s in c.members() {
        for (a, v) in m.iter_mut().zip(s.descriptor.values()) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= c.len() as f64);
    m
}

/// Replacement score written out term by term.
pub fn oracle_score(s: &MemorySample, centroid: &[f64], p: &MemoryParams) -> f64 {
    let time = 1.0 / (1.0 + (-(s.age as f64) / p.capacity as f64).exp());
    let unc = s.uncertainty / (p.num_classes as f64).ln();
    p.lambda_time * time + p.lambda_uncertainty * unc + p.lambda_distance * euclid(s.descriptor.values(), centroid)
}

/// Nearest cluster by brute force; the lowest position wins ties.
pub fn oracle_nearest(clusters: &[Cluster], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in clusters.iter().enumerate() {
        let d = euclid(x, &member_mean(c));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Member with the largest score; the smallest id wins ties.
pub fn oracle_evictee(c: &Cluster, p: &MemoryParams) -> u64 {
    let centroid = member_mean(c);
    let scored: Vec<(f64, u64)> = c.members().iter().map(|m| (oracle_score(m, &centroid, p), m.id)).collect();
    let top = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    scored.iter().filter(|s| s.0 == top).map(|s| s.1).min().expect("nonempty cluster")
}

pub fn oracle_pair(clusters: &[Cluster], strategy: Strategy) -> (usize, usize) {
    let k = clusters.len();
    let means: Vec<Vec<f64>> = clusters.iter().map(member_mean).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    match strategy {
        Strategy::Acc => {
            for i in 0..k - 1 {
                candidates.push((euclid(&means[i], &means[i + 1]), i, i + 1));
            }
        }
        Strategy::Gcc => {
            for i in 0..k {
                for j in i + 1..k {
                    candidates.push((euclid(&means[i], &means[j]), i, j));
                }
            }
        }
        Strategy::SmallestMerge | Strategy::Lru => {
            let src = (0..k)
                .min_by_key(|&i| {
                    if strategy == Strategy::Lru {
                        (clusters[i].last_access(), i)
                    } else {
                        (clusters[i].len() as u64, i)
                    }
                })
                .unwrap();
            for j in (0..k).filter(|&j| j != src) {
                candidates.push((euclid(&means[src], &means[j]), src.min(j), src.max(j)));
            }
            // the target, not the pair, breaks ties: lowest position first
            let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            let target = (0..k)
                .filter(|&j| j != src && euclid(&means[src], &means[j]) == best)
                .min()
                .unwrap();
            return (src.min(target), src.max(target));
        }
    }
    let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let hit = candidates.iter().find(|c| c.0 == best).unwrap();
    (hit.1, hit.2)
}

/// Ids kept by a merge: the `n` lowest-uncertainty members of both clusters,
/// ties broken by creation index and then id. Sorted ascending.
pub fn oracle_survivors(a: &Cluster, b: &Cluster, n: usize) -> Vec<u64> {
    let mut pool: Vec<(f64, u64, u64)> = a
        .members()
        .iter()
        .map(|m| (m.uncertainty, a.creation_index(), m.id))
        .chain(b.members().iter().map(|m| (m.uncertainty, b.creation_index(), m.id)))
        .collect();
    pool.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut ids: Vec<u64> = pool.into_iter().take(n).map(|x| x.2).collect();
    ids.sort_unstable();
    ids
}

pub fn ids_of(c: &Cluster) -> Vec<u64> {
    let mut ids: Vec<u64> = c.members().iter().map(|m| m.id).collect();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Default, Clone, Copy)]
pub struct EventTally {
    pub evictions: usize,
    pub merges: usize,
}

pub fn small_params(strategy: Strategy) -> MemoryParams {
    MemoryParams {
        capacity: 5,
        max_clusters: 3,
        tau: 0.3,
        strategy,
        ..MemoryParams::for_classes(10)
    }
}

/// Random insert stream drifting between centres, with coarse uncertainties (so ties occur), random
/// ageing and occasional retrievals. Every eviction and consolidation is
/// checked against the brute-force oracles; the first disagreement is
/// returned as an error.
pub fn check_random_events(seed: u64, params: MemoryParams, inserts: usize) -> Result<EventTally, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..8).map(|_| (0..DIM).map(|_| rng.random::<f64>()).collect()).collect();
    let jitter = Normal::new(0.0, 0.04).unwrap();
    let mut mem = MultiClusterMemory::new(params.clone()).map_err(|e| e.to_string())?;
    let mut tally = EventTally::default();
    let mut current = 0;
    for id in 0..inserts as u64 {
        // runs of samples around one centre, with random jumps between centres
        if rng.random::<f64>() < 0.15 {
            current = rng.random_range(0..centres.len());
        }
        let x: Vec<f64> = centres[current].iter().map(|v| v + jitter.sample(&mut rng)).collect();
        let u = f64::from(rng.random_range(0..4u8)) * 0.5;
        let sample = MemorySample::new(id, Descriptor::new(DescriptorKind::ChannelStats, x.clone()), u);

        let before: Vec<Cluster> = mem.clusters().to_vec();
        let comparisons_before = mem.counters().consolidation_comparisons;
        let outcome = mem.insert(sample, id).map_err(|e| e.to_string())?;
        if before.is_empty() {
            continue;
        }
        let (near, dist) = oracle_nearest(&before, &x);
        if dist > params.tau && params.max_clusters > 1 {
            let InsertOutcome::Spawned { merge, .. } = &outcome else {
                return Err(format!("id {id}: expected spawn, got {outcome:?}"));
            };
            if before.len() < params.max_clusters {
                if merge.is_some() {
                    return Err(format!("id {id}: merge below budget"));
                }
                continue;
            }
            let rec = merge.as_ref().ok_or(format!("id {id}: missing merge at budget"))?;
            let pair = oracle_pair(&before, params.strategy);
            if rec.merged_pair != pair {
                return Err(format!("id {id}: merged {:?}, oracle {:?}", rec.merged_pair, pair));
            }
            let k = before.len();
            let expected_cmp = match params.strategy {
                Strategy::Gcc => k * (k - 1) / 2,
                _ => k - 1,
            };
            let counted = (mem.counters().consolidation_comparisons - comparisons_before) as usize;
            if rec.comparisons != expected_cmp || counted != expected_cmp {
                return Err(format!("id {id}: {} comparisons for K={k}", rec.comparisons));
            }
            let want = oracle_survivors(&before[pair.0], &before[pair.1], params.capacity);
            let got = ids_of(&mem.clusters()[pair.0]);
            if got != want {
                return Err(format!("id {id}: kept {got:?}, oracle {want:?}"));
            }
            tally.merges += 1;
        } else if before[near].len() >= params.capacity {
            let want = oracle_evictee(&before[near], &params);
            match outcome {
                InsertOutcome::Replaced { cluster, evicted } if cluster == near && evicted == want => {}
                other => return Err(format!("id {id}: {other:?}, oracle evicts {want} from {near}")),
            }
            tally.evictions += 1;
        } else if outcome != (InsertOutcome::Assigned { cluster: near }) {
            return Err(format!("id {id}: {outcome:?}, oracle assigns to {near}"));
        }

        if rng.random::<f64>() < 0.5 {
            mem.age_tick();
        }
        if rng.random::<f64>() < 0.2 {
            mem.retrieve_ucr(6, id, &mut rng).map_err(|e| e.to_string())?;
        }
    }
    Ok(tally)
}

pub const PLANTED_MEANS: [[f64; 2]; 3] = [[0.0, 0.0], [4.0, 0.0], [1.0, 4.0]];

/// Three well-separated diagonal Gaussians, `per` draws each.
pub fn planted3(seed: u64, per: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sds = [[0.5, 0.5], [0.7, 0.4], [0.4, 0.6]];
    let mut out = Vec::with_capacity(3 * per);
    for (m, sd) in PLANTED_MEANS.iter().zip(sds) {
        for _ in 0..per {
            out.push((0..2).map(|j| Normal::new(m[j], sd[j]).unwrap().sample(&mut rng)).collect());
        }
    }
    out
}

/// Mean Euclidean error between estimated and true means under the best
/// one-to-one matching (exhaustive over permutations).
pub fn matched_mean_error(est: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    assert_eq!(est.len(), truth.len());
    perms(truth.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| euclid(&est[i], &truth[j])).sum::<f64>() / truth.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Random mixture data of random size, dimension and component count.
pub fn random_mixture(seed: u64) -> (Vec<Vec<f64>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=4);
    let true_k = rng.random_range(1..=4);
    let n = rng.random_range(40..=200);
    let centres: Vec<Vec<f64>> = (0..true_k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let data = (0..n)
        .map(|_| {
            let c = &centres[rng.random_range(0..true_k)];
            let sd = rng.random_range(0.2..1.0);
            c.iter().map(|m| m + sd * Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect()
        })
        .collect();
    (data, rng.random_range(1..=5))
}

/// Largest drop between consecutive log-likelihoods (0 when monotone).
pub fn worst_ll_drop(history: &[f64]) -> f64 {
    history.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

/// Down-scaled experiment: 20 classes, 16x16 images, 25-step segments.
pub fn small_experiment(steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.stream.num_classes = 20;
    cfg.stream.images_per_class = 3;
    cfg.stream.height = 16;
    cfg.stream.width = 16;
    cfg.stream.batch_size = 16;
    cfg.stream.total_steps = steps;
    for seg in &mut cfg.stream.schedule {
        seg.dwell = 25;
    }
    cfg.memory = MemoryParams {
        capacity: 16,
        max_clusters: 4,
        ..MemoryParams::for_classes(20)
    };
    cfg.scm = ScmParams {
        capacity: 64,
        num_classes: 20,
        ..ScmParams::default()
    };
    cfg.n_adapt = 16;
    cfg.diagnostics.window = 100;
    cfg.diagnostics.stride = 50;
    cfg.diagnostics.k_ref_cap = 6;
    cfg.clusterability.window = 100;
    cfg.clusterability.stride = 50;
    cfg.clusterability.k_max = 6;
    cfg.sweep_seeds = 2;
    cfg.workers = 1;
    cfg
}

/// Passes every call through but permutes the ground-truth labels first
/// (swaps even and odd values).
pub struct Relabel(pub Box<dyn SampleMemory>);

impl SampleMemory for Relabel {
    fn insert(&mut self, s: MemorySample, step: u64) -> CoreResult<InsertOutcome> {
        let (m, c) = (s.diag_mode, s.diag_class);
        self.0.insert(s.with_labels(m ^ 1, c ^ 1), step)
    }
    fn age_tick(&mut self) {
        self.0.age_tick()
    }
    fn retrieve(&mut self, n: usize, step: u64, rng: &mut dyn rand::RngCore) -> CoreResult<Vec<MemorySample>> {
        self.0.retrieve(n, step, rng)
    }
    fn snapshot(&self) -> MemorySnapshot {
        self.0.snapshot()
    }
    fn len(&self) -> usize {
        self.0.len()
    }
    fn num_clusters(&self) -> usize {
        self.0.num_clusters()
    }
    fn counters(&self) -> &MemoryCounters {
        self.0.counters()
    }
}

