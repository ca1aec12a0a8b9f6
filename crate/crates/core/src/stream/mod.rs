//! Synthetic non-i.i.d. image stream: procedural class prototypes, a
//! schedule of corruption modes, Dirichlet-correlated class ordering and a
//! severity-driven uncertainty oracle.

mod corruption;
mod ppm;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

pub use corruption::{apply_corruption, CorruptionKind, CorruptionSpec};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};

use crate::descriptors::{DescriptorKind, Image};
use crate::error::{invalid, Error, Result};
use crate::memory::MemorySample;

const BASE_STREAM: u64 = 0;
const ORDER_STREAM: u64 = 1;
const SAMPLE_STREAM_OFFSET: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub spec: CorruptionSpec,
    pub dwell: usize,
}

impl Segment {
    pub fn new(kind: CorruptionKind, severity: u8, dwell: usize) -> Result<Self> {
        Ok(Self {
            spec: CorruptionSpec::new(kind, severity)?,
            dwell,
        })
    }
}

/// Ten 100-step segments cycling through six well-separated modes.
pub fn default_schedule() -> Vec<Segment> {
    use CorruptionKind::*;
    [
        (BoxBlur, 5),
        (Brightness, 4),
        (GaussianNoise, 5),
        (Contrast, 5),
        (Brightness, 5),
        (ImpulseNoise, 5),
        (BoxBlur, 5),
        (Brightness, 4),
        (GaussianNoise, 5),
        (Contrast, 5),
    ]
    .into_iter()
    .map(|(k, s)| Segment::new(k, s, 100).expect("valid default segment"))
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub num_classes: usize,
    pub images_per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub schedule: Vec<Segment>,
    pub dirichlet_delta: f64,
    /// The schedule repeats when this exceeds the summed dwell lengths.
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            num_classes: 100,
            images_per_class: 10,
            channels: 3,
            height: 32,
            width: 32,
            schedule: default_schedule(),
            dirichlet_delta: 0.1,
            total_steps: 1000,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid("a stream needs at least two classes"));
        }
        if self.images_per_class == 0 || self.batch_size == 0 {
            return Err(invalid("images_per_class and batch_size must be positive"));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if self.schedule.is_empty() {
            return Err(invalid("mode schedule is empty"));
        }
        for seg in &self.schedule {
            seg.spec.validate()?;
            if seg.dwell == 0 {
                return Err(invalid("segment dwell must be at least 1"));
            }
        }
        if !(self.dirichlet_delta > 0.0 && self.dirichlet_delta.is_finite()) {
            return Err(invalid("dirichlet_delta must be positive and finite"));
        }
        Ok(())
    }

    pub fn max_uncertainty(&self) -> f64 {
        (self.num_classes as f64).ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub id: u64,
    pub step: usize,
    pub image: Image,
    pub class: usize,
    /// Index of the schedule entry active at `step`.
    pub mode: usize,
    pub severity: u8,
    pub uncertainty: f64,
}

impl StreamSample {
    pub fn to_memory_sample(&self, kind: DescriptorKind) -> Result<MemorySample> {
        Ok(MemorySample::new(self.id, kind.compute(&self.image)?, self.uncertainty)
            .with_labels(self.mode, self.class))
    }
}

/// Class prototypes: a per-class base colour plus a stripe or checker
/// texture. Each instance gets an illumination shift, a per-channel tint
/// and pixel noise.
pub fn generate_base_images<R: Rng + ?Sized>(cfg: &StreamConfig, rng: &mut R) -> Result<Vec<Vec<Image>>> {
    cfg.validate()?;
    let (c, h, w) = (cfg.channels, cfg.height, cfg.width);
    let illum = Normal::new(0.0, 0.015).expect("valid sd");
    let tint = Normal::new(0.0, 0.035).expect("valid sd");
    let pixel = Normal::new(0.0, 0.01).expect("valid sd");
    let mut out = Vec::with_capacity(cfg.num_classes);
    for class in 0..cfg.num_classes {
        let phase = 2.0 * PI * class as f64 / cfg.num_classes as f64;
        let colour: Vec<f64> = (0..c)
            .map(|ch| 0.12 + 0.055 * (phase + 2.0 * PI * ch as f64 / c as f64).cos())
            .collect();
        let period = 2 + class % 5;
        let orientation = (class / 5) % 3;
        let texture = |y: usize, x: usize| -> f64 {
            let (a, b) = ((y / period) % 2, (x / period) % 2);
            let on = match orientation {
                0 => b == 0,
                1 => a == 0,
                _ => a == b,
            };
            if on {
                0.06
            } else {
                -0.06
            }
        };
        let mut imgs = Vec::with_capacity(cfg.images_per_class);
        for _ in 0..cfg.images_per_class {
            let shift = illum.sample(rng);
            let mut data = Vec::with_capacity(c * h * w);
            for &base in &colour {
                let base = base + tint.sample(rng);
                for y in 0..h {
                    for x in 0..w {
                        data.push(base + shift + texture(y, x) + pixel.sample(rng));
                    }
                }
            }
            imgs.push(Image::from_clamped(c, h, w, data));
        }
        out.push(imgs);
    }
    Ok(out)
}

/// Temporally correlated ordering: each class draws slot proportions from
/// Dirichlet(`delta`) and sends each of its samples to a slot by those
/// proportions; slots are shuffled internally and concatenated. Small
/// `delta` concentrates each class in few slots.
pub fn ptta_order<R: Rng + ?Sized>(labels: &[usize], delta: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("dirichlet concentration must be positive and finite"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let slots = classes.len();
    if slots == 0 {
        return Ok(Vec::new());
    }
    let gamma = Gamma::new(delta, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); slots];
    for &class in &classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut props: Vec<f64> = (0..slots).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = props.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            props.iter_mut().for_each(|p| *p /= sum);
        } else {
            props.iter_mut().for_each(|p| *p = 0.0);
            props[rng.random_range(0..slots)] = 1.0;
        }
        let slot = WeightedIndex::new(&props).map_err(|e| invalid(e.to_string()))?;
        for i in idx {
            buckets[slot.sample(rng)].push(i);
        }
    }
    let mut order = Vec::with_capacity(labels.len());
    for mut b in buckets {
        b.shuffle(rng);
        order.extend(b);
    }
    Ok(order)
}

/// Laplace(0, b) by inverse CDF.
fn laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRun {
    /// Index into the schedule.
    pub mode: usize,
    pub spec: CorruptionSpec,
    pub start: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub seed: u64,
    pub config: StreamConfig,
    pub segments: Vec<SegmentRun>,
}

/// Random-access stream: sample `i` of step `t` depends only on the config,
/// so batches can be regenerated in any order.
#[derive(Clone, Debug)]
pub struct PttaStream {
    cfg: StreamConfig,
    base: Vec<Vec<Image>>,
    runs: Vec<SegmentRun>,
    /// Class sequence per run, `steps * batch_size` long.
    classes: Vec<Vec<usize>>,
}

impl PttaStream {
    pub fn new(cfg: StreamConfig) -> Result<Self> {
        cfg.validate()?;
        let mut base_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        base_rng.set_stream(BASE_STREAM);
        let base = generate_base_images(&cfg, &mut base_rng)?;

        let mut runs = Vec::new();
        let mut start = 0;
        'outer: while start < cfg.total_steps {
            for (mode, seg) in cfg.schedule.iter().enumerate() {
                if start >= cfg.total_steps {
                    break 'outer;
                }
                let steps = seg.dwell.min(cfg.total_steps - start);
                runs.push(SegmentRun {
                    mode,
                    spec: seg.spec,
                    start,
                    steps,
                });
                start += steps;
            }
        }

        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        order_rng.set_stream(ORDER_STREAM);
        let mut classes = Vec::with_capacity(runs.len());
        for run in &runs {
            let labels: Vec<usize> = (0..run.steps * cfg.batch_size).map(|i| i % cfg.num_classes).collect();
            let order = ptta_order(&labels, cfg.dirichlet_delta, &mut order_rng)?;
            classes.push(order.into_iter().map(|i| labels[i]).collect());
        }
        Ok(Self {
            cfg,
            base,
            runs,
            classes,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn total_steps(&self) -> usize {
        self.cfg.total_steps
    }

    pub fn base_images(&self) -> &[Vec<Image>] {
        &self.base
    }

    pub fn segments(&self) -> &[SegmentRun] {
        &self.runs
    }

    fn run_index(&self, t: usize) -> Result<usize> {
        if t >= self.cfg.total_steps {
            return Err(Error::StepOutOfRange {
                step: t,
                total: self.cfg.total_steps,
            });
        }
        Ok(self.runs.partition_point(|r| r.start + r.steps <= t))
    }

    /// Schedule index active at step `t`.
    pub fn mode_at(&self, t: usize) -> Result<usize> {
        Ok(self.runs[self.run_index(t)?].mode)
    }

    pub fn sample_at(&self, t: usize, i: usize) -> Result<StreamSample> {
        let r = self.run_index(t)?;
        if i >= self.cfg.batch_size {
            return Err(invalid(format!("batch index {i} >= batch size {}", self.cfg.batch_size)));
        }
        let run = &self.runs[r];
        let class = self.classes[r][(t - run.start) * self.cfg.batch_size + i];
        let id = (t * self.cfg.batch_size + i) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(SAMPLE_STREAM_OFFSET + id);
        let pick = rng.random_range(0..self.cfg.images_per_class);
        let image = apply_corruption(&self.base[class][pick], &run.spec, &mut rng)?;
        let ln_nc = self.cfg.max_uncertainty();
        let u0 = 0.6 * ln_nc * f64::from(run.spec.severity) / 5.0;
        let uncertainty = (u0 + laplace(&mut rng, 0.1 * ln_nc)).clamp(0.0, ln_nc);
        Ok(StreamSample {
            id,
            step: t,
            image,
            class,
            mode: run.mode,
            severity: run.spec.severity,
            uncertainty,
        })
    }

    pub fn next_batch(&self, t: usize) -> Result<Vec<StreamSample>> {
        (0..self.cfg.batch_size).map(|i| self.sample_at(t, i)).collect()
    }

    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            segments: self.runs.clone(),
        }
    }
}
