use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::write_csv;
use super::{simulate_paired, ExperimentConfig, RunMetrics, Variant};
use crate::descriptors::DescriptorKind;
use crate::diagnostics::{clusterability, ClusterabilityReport};
use crate::error::{invalid, Error, Result};
use crate::gmm::FitConfig;
use crate::memory::{MetricKind, Strategy};
use crate::stream::{PttaStream, StreamConfig};

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// One probe image per step, described by every requested kind.
pub fn probe_descriptors(stream_cfg: &StreamConfig, kinds: &[DescriptorKind]) -> Result<Vec<Vec<Vec<f64>>>> {
    let stream = PttaStream::new(stream_cfg.clone())?;
    let mut out = vec![Vec::with_capacity(stream.total_steps()); kinds.len()];
    for t in 0..stream.total_steps() {
        let img = stream.sample_at(t, 0)?.image;
        for (o, kind) in out.iter_mut().zip(kinds) {
            o.push(kind.compute(&img)?.into_values());
        }
    }
    Ok(out)
}

/// Sliding-window BIC analysis of the stream for each configured kind.
pub fn run_clusterability(cfg: &ExperimentConfig) -> Result<Vec<ClusterabilityReport>> {
    let cc = &cfg.clusterability;
    if cc.kinds.is_empty() {
        return Err(Error::EmptyInput("descriptor kinds"));
    }
    if cc.k_min == 0 || cc.k_min > cc.k_max {
        return Err(invalid("K range must satisfy 1 <= k_min <= k_max"));
    }
    let mut stream_cfg = cfg.stream.clone();
    stream_cfg.seed = cfg.seed;
    let traces = probe_descriptors(&stream_cfg, &cc.kinds)?;
    let fit = FitConfig {
        seed: cfg.diagnostics.fit.seed ^ cfg.seed,
        ..cfg.diagnostics.fit.clone()
    };
    let ks = cc.k_range();
    let reports = cc
        .kinds
        .iter()
        .zip(&traces)
        .map(|(kind, trace)| clusterability(trace, *kind, cc.window, cc.stride, &ks, &fit))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        write_clusterability_csv(dir, &reports)?;
    }
    Ok(reports)
}

#[derive(Serialize)]
struct WindowRow<'a> {
    kind: &'a str,
    window_start: usize,
    k_star: usize,
}

#[derive(Serialize)]
struct BicRow<'a> {
    kind: &'a str,
    window_start: usize,
    k: usize,
    bic: f64,
    log_likelihood: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    kind: &'a str,
    windows: usize,
    mean_k: f64,
    std_k: f64,
}

/// Writes `clusterability.csv`, `clusterability_bic.csv` and
/// `clusterability_summary.csv` into `dir`.
pub fn write_clusterability_csv(dir: impl AsRef<Path>, reports: &[ClusterabilityReport]) -> Result<()> {
    let dir = dir.as_ref();
    let mut windows = Vec::new();
    let mut bics = Vec::new();
    let mut summary = Vec::new();
    for r in reports {
        let kind = r.kind.name();
        for w in &r.windows {
            windows.push(WindowRow {
                kind,
                window_start: w.start,
                k_star: w.k_star,
            });
            for e in &w.bic {
                bics.push(BicRow {
                    kind,
                    window_start: w.start,
                    k: e.k,
                    bic: e.bic,
                    log_likelihood: e.log_likelihood,
                });
            }
        }
        summary.push(SummaryRow {
            kind,
            windows: r.windows.len(),
            mean_k: r.mean_k,
            std_k: r.std_k,
        });
    }
    write_csv(dir.join("clusterability.csv"), &["kind", "window_start", "k_star"], &windows)?;
    write_csv(
        dir.join("clusterability_bic.csv"),
        &["kind", "window_start", "k", "bic", "log_likelihood"],
        &bics,
    )?;
    write_csv(
        dir.join("clusterability_summary.csv"),
        &["kind", "windows", "mean_k", "std_k"],
        &summary,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Tau,
    Kmax,
    Metric,
    Strategy,
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::Tau => "tau",
            AblationAxis::Kmax => "kmax",
            AblationAxis::Metric => "metric",
            AblationAxis::Strategy => "strategy",
        }
    }

    /// Values swept when none are given.
    pub fn default_values(&self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationAxis::Tau => &["0.1", "0.3", "0.5", "0.7"],
            AblationAxis::Kmax => &["1", "2", "3", "4", "5", "6", "8"],
            AblationAxis::Metric => &["euclidean", "manhattan", "cosine", "mahalanobis"],
            AblationAxis::Strategy => &["acc", "gcc", "smallest_merge", "lru"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn apply(&self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        let bad = || invalid(format!("bad {} value '{value}'", self.name()));
        match self {
            AblationAxis::Tau => out.memory.tau = value.parse().map_err(|_| bad())?,
            AblationAxis::Kmax => out.memory.max_clusters = value.parse().map_err(|_| bad())?,
            AblationAxis::Metric => out.memory.metric = value.parse::<MetricKind>()?,
            AblationAxis::Strategy => out.memory.strategy = value.parse::<Strategy>()?,
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(AblationAxis::Tau),
            "kmax" => Ok(AblationAxis::Kmax),
            "metric" => Ok(AblationAxis::Metric),
            "strategy" => Ok(AblationAxis::Strategy),
            _ => Err(invalid(format!("unknown ablation axis '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub value: String,
    pub runs: usize,
    pub mean_imbalance: f64,
    pub mean_entropy: f64,
    pub mean_coverage: f64,
    pub mean_energy_distance: f64,
    pub mean_clusters: f64,
    pub spawns: f64,
    pub merges: f64,
    pub evictions: f64,
    pub centroid_comparisons: f64,
    pub consolidation_comparisons: f64,
    /// Pair-selection comparisons per consolidation; empty when none happened.
    pub comparisons_per_consolidation: Option<f64>,
    pub wall_clock_s: f64,
}

fn seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.sweep_seeds.max(1) as u64).map(|i| cfg.seed + i).collect()
}

/// One MCM simulation per (value, seed); runs execute concurrently on
/// `cfg.workers` threads.
pub fn run_ablate(cfg: &ExperimentConfig, axis: AblationAxis, values: &[String]) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ablation values"));
    }
    let configs = values
        .iter()
        .map(|v| axis.apply(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    let seeds = seeds(cfg);
    let jobs: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<RunMetrics>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| {
                let run = simulate_paired(&configs[i].seeded(s), &[Variant::Mcm], None)?;
                Ok(run.metrics.into_iter().next().expect("one arm"))
            })
            .collect()
    });
    let mut per_value: Vec<Vec<RunMetrics>> = vec![Vec::new(); values.len()];
    for ((i, _), r) in jobs.iter().zip(results) {
        per_value[*i].push(r?);
    }
    let rows: Vec<AblationRow> = values
        .iter()
        .zip(&per_value)
        .map(|(value, runs)| {
            let merges: u64 = runs.iter().map(|m| m.counters.merges).sum();
            let cons: u64 = runs.iter().map(|m| m.counters.consolidation_comparisons).sum();
            AblationRow {
                axis,
                value: value.clone(),
                runs: runs.len(),
                mean_imbalance: mean(runs.iter().map(|m| m.mean_imbalance())),
                mean_entropy: mean(runs.iter().map(|m| m.mean_entropy())),
                mean_coverage: mean(runs.iter().map(|m| m.mean_coverage())),
                mean_energy_distance: mean(runs.iter().map(|m| m.mean_energy_distance())),
                mean_clusters: mean(runs.iter().map(|m| m.mean_clusters)),
                spawns: mean(runs.iter().map(|m| m.counters.spawns as f64)),
                merges: mean(runs.iter().map(|m| m.counters.merges as f64)),
                evictions: mean(runs.iter().map(|m| m.counters.evictions as f64)),
                centroid_comparisons: mean(runs.iter().map(|m| m.counters.centroid_comparisons as f64)),
                consolidation_comparisons: mean(runs.iter().map(|m| m.counters.consolidation_comparisons as f64)),
                comparisons_per_consolidation: (merges > 0).then(|| cons as f64 / merges as f64),
                wall_clock_s: mean(runs.iter().map(|m| m.timings.memory_s + m.timings.diagnostics_s)),
            }
        })
        .collect();
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        write_ablation_csv(dir.join(format!("ablate_{}.csv", axis.name())), &rows)?;
    }
    Ok(rows)
}

pub fn write_ablation_csv(path: impl AsRef<Path>, rows: &[AblationRow]) -> Result<()> {
    write_csv(
        path,
        &[
            "axis",
            "value",
            "runs",
            "mean_imbalance",
            "mean_entropy",
            "mean_coverage",
            "mean_energy_distance",
            "mean_clusters",
            "spawns",
            "merges",
            "evictions",
            "centroid_comparisons",
            "consolidation_comparisons",
            "comparisons_per_consolidation",
            "wall_clock_s",
        ],
        rows,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub total: usize,
    pub variant: Variant,
    pub clusters: usize,
    pub per_cluster: usize,
    pub runs: usize,
    pub mean_energy_distance: f64,
    pub mean_imbalance: f64,
    pub mean_coverage: f64,
    pub wall_clock_s: f64,
}

/// For each total capacity `T`: SCM with a pool of `T` against MCM with
/// `T / N` clusters of `N`, paired on identical streams.
pub fn run_scaling(cfg: &ExperimentConfig, totals: &[usize]) -> Result<Vec<ScalingRow>> {
    if totals.is_empty() {
        return Err(Error::EmptyInput("capacity totals"));
    }
    let n = cfg.memory.capacity;
    let mut configs = Vec::with_capacity(totals.len());
    for &t in totals {
        if t == 0 || t % n != 0 {
            return Err(invalid(format!("total {t} is not a positive multiple of the per-cluster capacity {n}")));
        }
        let mut c = cfg.clone();
        c.memory.max_clusters = t / n;
        c.scm.capacity = t;
        c.validate()?;
        configs.push(c);
    }
    let seeds = seeds(cfg);
    let jobs: Vec<(usize, u64)> = (0..totals.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<Vec<RunMetrics>>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| Ok(simulate_paired(&configs[i].seeded(s), &[Variant::Mcm, Variant::Scm], None)?.metrics))
            .collect()
    });
    let mut per_total: Vec<Vec<Vec<RunMetrics>>> = vec![Vec::new(); totals.len()];
    for ((i, _), r) in jobs.iter().zip(results) {
        per_total[*i].push(r?);
    }
    let mut rows = Vec::new();
    for (i, &t) in totals.iter().enumerate() {
        for (arm, variant) in [Variant::Mcm, Variant::Scm].into_iter().enumerate() {
            let runs: Vec<&RunMetrics> = per_total[i].iter().map(|r| &r[arm]).collect();
            let (clusters, per_cluster) = match variant {
                Variant::Mcm => (t / n, n),
                Variant::Scm => (1, t),
            };
            rows.push(ScalingRow {
                total: t,
                variant,
                clusters,
                per_cluster,
                runs: runs.len(),
                mean_energy_distance: mean(runs.iter().map(|m| m.mean_energy_distance())),
                mean_imbalance: mean(runs.iter().map(|m| m.mean_imbalance())),
                mean_coverage: mean(runs.iter().map(|m| m.mean_coverage())),
                wall_clock_s: mean(runs.iter().map(|m| m.timings.memory_s + m.timings.diagnostics_s)),
            });
        }
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        write_scaling_csv(dir.join("scaling.csv"), &rows)?;
    }
    Ok(rows)
}

pub fn write_scaling_csv(path: impl AsRef<Path>, rows: &[ScalingRow]) -> Result<()> {
    write_csv(
        path,
        &[
            "total",
            "variant",
            "clusters",
            "per_cluster",
            "runs",
            "mean_energy_distance",
            "mean_imbalance",
            "mean_coverage",
            "wall_clock_s",
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::tiny_config;

    #[test]
    fn axis_parsing_and_application() {
        for a in [AblationAxis::Tau, AblationAxis::Kmax, AblationAxis::Metric, AblationAxis::Strategy] {
            assert_eq!(a.name().parse::<AblationAxis>().unwrap(), a);
        }
        let cfg = tiny_config();
        assert_eq!(AblationAxis::Tau.apply(&cfg, "0.7").unwrap().memory.tau, 0.7);
        assert_eq!(
            AblationAxis::Strategy.apply(&cfg, "gcc").unwrap().memory.strategy,
            Strategy::Gcc
        );
        assert!(AblationAxis::Tau.apply(&cfg, "x").is_err());
        assert!(AblationAxis::Kmax.apply(&cfg, "0").is_err());
    }

    #[test]
    fn ablate_strategy_counts() {
        let mut cfg = tiny_config();
        cfg.sweep_seeds = 1;
        let rows = run_ablate(&cfg, AblationAxis::Strategy, &["acc".into(), "gcc".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        if let Some(c) = rows[0].comparisons_per_consolidation {
            assert_eq!(c, 2.0);
        }
        if let Some(c) = rows[1].comparisons_per_consolidation {
            assert_eq!(c, 3.0);
        }
        assert!(run_ablate(&cfg, AblationAxis::Tau, &[]).is_err());
    }

    #[test]
    fn scaling_rejects_non_multiples() {
        let cfg = tiny_config();
        assert!(run_scaling(&cfg, &[20]).is_err());
        assert!(run_scaling(&cfg, &[]).is_err());
        let mut cfg = cfg;
        cfg.sweep_seeds = 1;
        let rows = run_scaling(&cfg, &[16, 48]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.wall_clock_s >= 0.0));
        assert_eq!((rows[2].clusters, rows[3].per_cluster), (3, 48));
    }

    #[test]
    fn clusterability_kinds() {
        let mut cfg = tiny_config();
        cfg.clusterability.window = 20;
        cfg.clusterability.stride = 10;
        cfg.clusterability.k_max = 4;
        let reports = run_clusterability(&cfg).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.windows.len() == 3));
        cfg.clusterability.window = 41;
        assert!(run_clusterability(&cfg).is_err());
    }
}
