//! Memory-quality diagnostics against a reference mixture fitted on the
//! recent stream, plus the sliding-window clusterability analysis.

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorKind;
use crate::error::{invalid, Error, Result};
use crate::gmm::{select_k, BicEntry, FitConfig, GmmModel};
use crate::memory::MemorySnapshot;

pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub model: GmmModel,
    /// Number of descriptors the model was fitted on.
    pub window_len: usize,
    pub fit_step: usize,
}

impl ReferenceModel {
    /// Fits the reference by BIC over `1..=k_cap` (bounded by the window size).
    pub fn fit(window: &[Vec<f64>], k_cap: usize, cfg: &FitConfig, fit_step: usize) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::EmptyInput("reference window"));
        }
        let hi = k_cap.max(1).min(window.len());
        let ks: Vec<usize> = (1..=hi).collect();
        let sel = select_k(window, &ks, cfg)?;
        Ok(Self {
            model: sel.model,
            window_len: window.len(),
            fit_step,
        })
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryQuality {
    pub step: usize,
    pub imbalance_ratio: f64,
    pub entropy: f64,
    pub coverage: f64,
    pub energy_distance: f64,
}

/// Hard-assigns every memory descriptor to its argmax-responsibility component.
pub fn assign_components(reference: &GmmModel, snapshot: &MemorySnapshot) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; reference.k()];
    for (_, m) in snapshot.rows() {
        counts[reference.predict(&m.descriptor)?] += 1;
    }
    Ok(counts)
}

fn total(counts: &[usize]) -> Result<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyMemory);
    }
    Ok(n)
}

/// `max_k n_k / max(1, min_k n_k)`.
pub fn imbalance_ratio(counts: &[usize]) -> Result<f64> {
    total(counts)?;
    let max = *counts.iter().max().expect("nonempty");
    let min = *counts.iter().min().expect("nonempty");
    Ok(max as f64 / min.max(1) as f64)
}

/// Shannon entropy (nats) of the normalized occupancy.
pub fn occupancy_entropy(counts: &[usize]) -> Result<f64> {
    let n = total(counts)? as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// Fraction of components holding more than `threshold` of the memory.
pub fn mode_coverage(counts: &[usize], threshold: f64) -> Result<f64> {
    let n = total(counts)? as f64;
    let covered = counts.iter().filter(|&&c| c as f64 / n > threshold).count();
    Ok(covered as f64 / counts.len() as f64)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for x in a {
        for y in b {
            acc += euclid(x, y);
        }
    }
    acc / (a.len() * b.len()) as f64
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|` between two empirical
/// distributions (V-statistic form, so identical multisets give exactly 0).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("energy distance sample"));
    }
    let d = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let e = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
    Ok(e.max(0.0))
}

/// All four diagnostics of a memory snapshot against a reference and the
/// trailing window it was fitted on.
pub fn memory_quality(
    reference: &ReferenceModel,
    snapshot: &MemorySnapshot,
    window: &[Vec<f64>],
    step: usize,
    coverage_threshold: f64,
) -> Result<MemoryQuality> {
    let counts = assign_components(&reference.model, snapshot)?;
    Ok(MemoryQuality {
        step,
        imbalance_ratio: imbalance_ratio(&counts)?,
        entropy: occupancy_entropy(&counts)?,
        coverage: mode_coverage(&counts, coverage_threshold)?,
        energy_distance: energy_distance(&snapshot.descriptors(), window)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub start: usize,
    pub k_star: usize,
    pub bic: Vec<BicEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterabilityReport {
    pub kind: DescriptorKind,
    pub window: usize,
    pub stride: usize,
    pub k_range: (usize, usize),
    pub windows: Vec<WindowFit>,
    pub mean_k: f64,
    /// Population standard deviation of the per-window `K*`.
    pub std_k: f64,
}

/// Sliding-window BIC model selection over a descriptor sequence.
pub fn clusterability(
    descriptors: &[Vec<f64>],
    kind: DescriptorKind,
    window: usize,
    stride: usize,
    ks: &[usize],
    cfg: &FitConfig,
) -> Result<ClusterabilityReport> {
    if window == 0 || stride == 0 {
        return Err(invalid("window and stride must be positive"));
    }
    if window > descriptors.len() {
        return Err(invalid(format!(
            "window {window} exceeds stream length {}",
            descriptors.len()
        )));
    }
    if ks.is_empty() {
        return Err(Error::EmptyInput("K range"));
    }
    let starts: Vec<usize> = (0..=descriptors.len() - window).step_by(stride).collect();
    let mut windows = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let slice = &descriptors[start..start + window];
        let cfg_w = FitConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let sel = select_k(slice, ks, &cfg_w)?;
        windows.push(WindowFit {
            start,
            k_star: sel.best_k,
            bic: sel.table,
        });
    }
    let n = windows.len() as f64;
    let mean_k = windows.iter().map(|w| w.k_star as f64).sum::<f64>() / n;
    let std_k = (windows
        .iter()
        .map(|w| (w.k_star as f64 - mean_k).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ClusterabilityReport {
        kind,
        window,
        stride,
        k_range: (*ks.iter().min().unwrap(), *ks.iter().max().unwrap()),
        windows,
        mean_k,
        std_k,
    })
}
