//! Experiment runner: stream -> memory -> diagnostics, plus the sweeps and
//! exports behind the `mcm` CLI.

mod output;
mod projection;
mod sweeps;

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use output::{read_quality_csv, write_json, write_quality_csv, QUALITY_HEADER};
pub use projection::{export_projection, write_projection_csv, Projection, ProjectionRow};
pub use sweeps::{
    run_ablate, run_clusterability, run_scaling, write_ablation_csv, write_clusterability_csv, write_scaling_csv,
    AblationAxis, AblationRow, ScalingRow,
};

use crate::descriptors::DescriptorKind;
use crate::diagnostics::{memory_quality, MemoryQuality, ReferenceModel, DEFAULT_COVERAGE_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::gmm::FitConfig;
use crate::memory::{
    MemoryCounters, MemoryParams, MemorySample, MemorySnapshot, MultiClusterMemory, SampleMemory, ScmParams,
    SingleClusterMemory,
};
use crate::stream::{PttaStream, StreamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Mcm,
    Scm,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Mcm => "MCM",
            Variant::Scm => "SCM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcm" => Ok(Variant::Mcm),
            "scm" => Ok(Variant::Scm),
            _ => Err(invalid(format!("unknown variant '{s}' (expected mcm or scm)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// Trailing window length in stream steps (one probe descriptor per step).
    pub window: usize,
    /// Reference refresh and diagnostic cadence in steps.
    pub stride: usize,
    pub k_ref_cap: usize,
    pub coverage_threshold: f64,
    pub fit: FitConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            window: 640,
            stride: 320,
            k_ref_cap: 20,
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            fit: FitConfig::default(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.k_ref_cap == 0 {
            return Err(invalid("diagnostic window, stride and K_ref cap must be positive"));
        }
        if !(0.0..1.0).contains(&self.coverage_threshold) {
            return Err(invalid("coverage threshold must lie in [0, 1)"));
        }
        self.fit.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterabilityConfig {
    pub kinds: Vec<DescriptorKind>,
    pub window: usize,
    pub stride: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ClusterabilityConfig {
    fn default() -> Self {
        Self {
            kinds: vec![
                DescriptorKind::ChannelStats,
                DescriptorKind::spatial_mean(),
                DescriptorKind::color_histogram(),
            ],
            window: 640,
            stride: 80,
            k_min: 1,
            k_max: 12,
        }
    }
}

impl ClusterabilityConfig {
    pub fn k_range(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub stream: StreamConfig,
    pub memory: MemoryParams,
    pub scm: ScmParams,
    pub diagnostics: DiagnosticsConfig,
    pub clusterability: ClusterabilityConfig,
    /// Samples retrieved per adaptation step.
    pub n_adapt: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Concurrent runs in sweeps; 0 uses every available core.
    pub workers: usize,
    /// Seeds per sweep point, starting at `seed`.
    pub sweep_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            stream: StreamConfig::default(),
            memory: MemoryParams::default(),
            scm: ScmParams::default(),
            diagnostics: DiagnosticsConfig::default(),
            clusterability: ClusterabilityConfig::default(),
            n_adapt: 64,
            seed: 0,
            out_dir: None,
            workers: 0,
            sweep_seeds: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.memory.validate()?;
        self.scm.validate()?;
        self.diagnostics.validate()?;
        if self.memory.num_classes != self.stream.num_classes || self.scm.num_classes != self.stream.num_classes {
            return Err(invalid("memory num_classes must match the stream's"));
        }
        if self.memory.descriptor != self.scm.descriptor {
            return Err(invalid("MCM and SCM must use the same descriptor kind"));
        }
        if self.n_adapt < self.memory.max_clusters {
            return Err(invalid(format!(
                "n_adapt {} is below max_clusters {}, so uniform cluster retrieval would draw nothing",
                self.n_adapt, self.memory.max_clusters
            )));
        }
        Ok(())
    }

    /// Copy with the stream seeded by the experiment seed.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.stream.seed = seed;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub step: usize,
    pub imbalance: f64,
    pub entropy: f64,
    pub coverage: f64,
    pub energy_distance: f64,
    pub variant: Variant,
}

impl QualityRow {
    fn new(q: &MemoryQuality, variant: Variant) -> Self {
        Self {
            step: q.step,
            imbalance: q.imbalance_ratio,
            entropy: q.entropy,
            coverage: q.coverage,
            energy_distance: q.energy_distance,
            variant,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub stream_s: f64,
    pub memory_s: f64,
    pub diagnostics_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub variant: Variant,
    pub seed: u64,
    pub steps: usize,
    pub rows: Vec<QualityRow>,
    pub counters: MemoryCounters,
    /// Cluster count averaged over every step.
    pub mean_clusters: f64,
    pub final_clusters: usize,
    pub timings: PhaseTimings,
}

impl RunMetrics {
    fn mean_of(&self, f: impl Fn(&QualityRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_imbalance(&self) -> f64 {
        self.mean_of(|r| r.imbalance)
    }

    pub fn mean_entropy(&self) -> f64 {
        self.mean_of(|r| r.entropy)
    }

    pub fn mean_coverage(&self) -> f64 {
        self.mean_of(|r| r.coverage)
    }

    pub fn mean_energy_distance(&self) -> f64 {
        self.mean_of(|r| r.energy_distance)
    }
}

/// What an observer sees after each step of each memory.
pub struct StepView<'a> {
    pub step: usize,
    pub variant: Variant,
    pub memory: &'a dyn SampleMemory,
    pub retrieved: &'a [MemorySample],
    pub quality: Option<&'a MemoryQuality>,
}

pub type Observer<'a> = dyn FnMut(&StepView<'_>) + 'a;

/// A memory under test in a paired run.
pub struct Arm {
    pub variant: Variant,
    pub memory: Box<dyn SampleMemory>,
}

impl Arm {
    pub fn from_config(variant: Variant, cfg: &ExperimentConfig) -> Result<Self> {
        let memory: Box<dyn SampleMemory> = match variant {
            Variant::Mcm => Box::new(MultiClusterMemory::new(cfg.memory.clone())?),
            Variant::Scm => Box::new(SingleClusterMemory::new(cfg.scm.clone())?),
        };
        Ok(Self { variant, memory })
    }
}

pub struct PairedRun {
    pub metrics: Vec<RunMetrics>,
    pub snapshots: Vec<MemorySnapshot>,
    /// Trailing probe window at the end of the run.
    pub window: Vec<Vec<f64>>,
    pub manifest: crate::stream::StreamManifest,
}

fn retrieval_rng(seed: u64, arm: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed_0000 + arm as u64);
    rng
}

/// Drives every arm over one shared stream. Per step: insert the batch,
/// tick ages, retrieve `n_adapt` samples; every `stride` steps refit the
/// reference on the trailing probe window and record diagnostics.
pub fn simulate_arms(cfg: &ExperimentConfig, arms: &mut [Arm], mut observer: Option<&mut Observer<'_>>) -> Result<PairedRun> {
    cfg.validate()?;
    let mut stream_cfg = cfg.stream.clone();
    stream_cfg.seed = cfg.seed;
    let t0 = Instant::now();
    let stream = PttaStream::new(stream_cfg)?;
    let setup_s = t0.elapsed().as_secs_f64();
    let kind = cfg.memory.descriptor;
    let diag = &cfg.diagnostics;

    let mut timings: Vec<PhaseTimings> = arms
        .iter()
        .map(|_| PhaseTimings {
            stream_s: setup_s,
            ..PhaseTimings::default()
        })
        .collect();
    let mut rows: Vec<Vec<QualityRow>> = vec![Vec::new(); arms.len()];
    let mut cluster_sum = vec![0usize; arms.len()];
    let mut rngs: Vec<ChaCha8Rng> = (0..arms.len()).map(|i| retrieval_rng(cfg.seed, i)).collect();
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(diag.window + 1);

    for t in 0..stream.total_steps() {
        let ts = Instant::now();
        let batch: Vec<MemorySample> = stream
            .next_batch(t)?
            .iter()
            .map(|s| s.to_memory_sample(kind))
            .collect::<Result<_>>()?;
        window.push_back(batch[0].descriptor.values().to_vec());
        if window.len() > diag.window {
            window.pop_front();
        }
        let stream_s = ts.elapsed().as_secs_f64();

        let step = t + 1;
        let reference = if step % diag.stride == 0 {
            let td = Instant::now();
            let w: Vec<Vec<f64>> = window.iter().cloned().collect();
            let fit = FitConfig {
                seed: diag.fit.seed ^ cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ step as u64,
                ..diag.fit.clone()
            };
            let r = ReferenceModel::fit(&w, diag.k_ref_cap, &fit, step)?;
            Some((r, w, td.elapsed().as_secs_f64() / arms.len() as f64))
        } else {
            None
        };

        for (a, arm) in arms.iter_mut().enumerate() {
            timings[a].stream_s += stream_s;
            let tm = Instant::now();
            for s in &batch {
                arm.memory.insert(s.clone(), t as u64)?;
            }
            arm.memory.age_tick();
            let retrieved = arm.memory.retrieve(cfg.n_adapt, t as u64, &mut rngs[a])?;
            timings[a].memory_s += tm.elapsed().as_secs_f64();
            cluster_sum[a] += arm.memory.num_clusters();

            let quality = match &reference {
                Some((r, w, fit_s)) => {
                    let td = Instant::now();
                    let q = memory_quality(r, &arm.memory.snapshot(), w, step, diag.coverage_threshold)?;
                    timings[a].diagnostics_s += fit_s + td.elapsed().as_secs_f64();
                    rows[a].push(QualityRow::new(&q, arm.variant));
                    Some(q)
                }
                None => None,
            };
            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepView {
                    step: t,
                    variant: arm.variant,
                    memory: arm.memory.as_ref(),
                    retrieved: &retrieved,
                    quality: quality.as_ref(),
                });
            }
        }
    }

    let steps = stream.total_steps();
    let metrics = arms
        .iter()
        .enumerate()
        .map(|(a, arm)| RunMetrics {
            variant: arm.variant,
            seed: cfg.seed,
            steps,
            rows: std::mem::take(&mut rows[a]),
            counters: arm.memory.counters().clone(),
            mean_clusters: if steps == 0 {
                0.0
            } else {
                cluster_sum[a] as f64 / steps as f64
            },
            final_clusters: arm.memory.num_clusters(),
            timings: timings[a].clone(),
        })
        .collect();
    Ok(PairedRun {
        metrics,
        snapshots: arms.iter().map(|a| a.memory.snapshot()).collect(),
        window: window.into_iter().collect(),
        manifest: stream.manifest(),
    })
}

/// Runs the given variants on one shared stream.
pub fn simulate_paired(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    observer: Option<&mut Observer<'_>>,
) -> Result<PairedRun> {
    if variants.is_empty() {
        return Err(Error::EmptyInput("variant list"));
    }
    let mut arms = variants
        .iter()
        .map(|&v| Arm::from_config(v, cfg))
        .collect::<Result<Vec<_>>>()?;
    simulate_arms(cfg, &mut arms, observer)
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    config: &'a ExperimentConfig,
    stream: &'a crate::stream::StreamManifest,
    variants: Vec<Variant>,
    diagnostic_points: Vec<usize>,
    counters: Vec<(Variant, &'a MemoryCounters)>,
}

/// Simulates the variants and, when `out_dir` is set, writes
/// `quality.csv`, `manifest.json`, `run_metrics.json` and one
/// `snapshot_<variant>.json` per variant.
pub fn run_simulate(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<RunMetrics>> {
    let run = simulate_paired(cfg, variants, None)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<&QualityRow> = run.metrics.iter().flat_map(|m| &m.rows).collect();
        write_quality_csv(dir.join("quality.csv"), rows)?;
        let manifest = SimulateManifest {
            config: cfg,
            stream: &run.manifest,
            variants: variants.to_vec(),
            diagnostic_points: run.metrics[0].rows.iter().map(|r| r.step).collect(),
            counters: run.metrics.iter().map(|m| (m.variant, &m.counters)).collect(),
        };
        write_json(dir.join("manifest.json"), &manifest)?;
        write_json(dir.join("run_metrics.json"), &run.metrics)?;
        for (m, snap) in run.metrics.iter().zip(&run.snapshots) {
            write_json(
                dir.join(format!("snapshot_{}.json", m.variant.name().to_ascii_lowercase())),
                snap,
            )?;
        }
    }
    Ok(run.metrics)
}
