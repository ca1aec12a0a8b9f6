//! Pixel-statistics descriptors and descriptor-space distances.
//!
//! Every memory decision (assignment, replacement, consolidation) is made in
//! descriptor space, so these functions are kept pure and cheap. Images are
//! stored planar: `data[(c * height + y) * width + x]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_GRID: usize = 4;
pub const DEFAULT_BINS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "shape {channels}x{height}x{width} has a zero extent"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "expected {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Image with every pixel set to `value` (clamped to `[0, 1]`).
    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value.clamp(0.0, 1.0); channels * height * width],
        )
    }

    /// Builds an image from raw values, clamping them into `[0, 1]`.
    pub(crate) fn from_clamped(channels: usize, height: usize, width: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DescriptorKind {
    /// Per-channel mean and population variance, `2C` values.
    ChannelStats,
    /// Mean luminance over a `grid x grid` partition, `grid^2` values.
    SpatialMean { grid: usize },
    /// Per-channel normalized histogram, `C * bins` values.
    ColorHistogram { bins: usize },
}

impl Default for DescriptorKind {
    fn default() -> Self {
        DescriptorKind::ChannelStats
    }
}

impl DescriptorKind {
    pub fn spatial_mean() -> Self {
        DescriptorKind::SpatialMean { grid: DEFAULT_GRID }
    }

    pub fn color_histogram() -> Self {
        DescriptorKind::ColorHistogram { bins: DEFAULT_BINS }
    }

    pub fn dim(&self, channels: usize) -> usize {
        match *self {
            DescriptorKind::ChannelStats => 2 * channels,
            DescriptorKind::SpatialMean { grid } => grid * grid,
            DescriptorKind::ColorHistogram { bins } => channels * bins,
        }
    }

    pub fn compute(&self, img: &Image) -> Result<Descriptor> {
        match *self {
            DescriptorKind::ChannelStats => Ok(channel_stats(img)),
            DescriptorKind::SpatialMean { grid } => spatial_mean(img, grid),
            DescriptorKind::ColorHistogram { bins } => color_histogram(img, bins),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DescriptorKind::ChannelStats => "channel_stats",
            DescriptorKind::SpatialMean { .. } => "spatial_mean",
            DescriptorKind::ColorHistogram { .. } => "color_histogram",
        }
    }
}

impl std::str::FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel_stats" | "channel-stats" => Ok(DescriptorKind::ChannelStats),
            "spatial_mean" | "spatial-mean" => Ok(DescriptorKind::spatial_mean()),
            "color_histogram" | "color-histogram" => Ok(DescriptorKind::color_histogram()),
            other => Err(invalid(format!("unknown descriptor kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    kind: DescriptorKind,
    values: Vec<f64>,
}

impl Descriptor {
    pub fn new(kind: DescriptorKind, values: Vec<f64>) -> Self {
        Self { kind, values }
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Arithmetic mean of a nonempty set of same-kind descriptors.
    pub fn mean<'a, I>(items: I) -> Option<Descriptor>
    where
        I: IntoIterator<Item = &'a Descriptor>,
    {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut acc = first.values.clone();
        let mut n = 1usize;
        for d in iter {
            for (a, v) in acc.iter_mut().zip(&d.values) {
                *a += v;
            }
            n += 1;
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Some(Descriptor::new(first.kind, acc))
    }
}

/// `[mu_1, var_1, ..., mu_C, var_C]` with population variance over `H * W` pixels.
pub fn channel_stats(img: &Image) -> Descriptor {
    let n = (img.height * img.width) as f64;
    let mut values = Vec::with_capacity(2 * img.channels);
    for c in 0..img.channels {
        let plane = img.plane(c);
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        values.push(mean);
        values.push(var);
    }
    Descriptor::new(DescriptorKind::ChannelStats, values)
}

pub fn spatial_mean(img: &Image, grid: usize) -> Result<Descriptor> {
    if grid == 0 {
        return Err(invalid("spatial-mean grid must be at least 1"));
    }
    if grid > img.height.min(img.width) {
        return Err(invalid(format!(
            "grid {grid} exceeds image extent {}x{}",
            img.height, img.width
        )));
    }
    let mut sums = vec![0.0; grid * grid];
    let mut counts = vec![0usize; grid * grid];
    let inv_c = 1.0 / img.channels as f64;
    for y in 0..img.height {
        let row = y * grid / img.height;
        for x in 0..img.width {
            let col = x * grid / img.width;
            let lum = (0..img.channels).map(|c| img.get(c, y, x)).sum::<f64>() * inv_c;
            sums[row * grid + col] += lum;
            counts[row * grid + col] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s / n as f64)
        .collect();
    Ok(Descriptor::new(DescriptorKind::SpatialMean { grid }, values))
}

pub fn color_histogram(img: &Image, bins: usize) -> Result<Descriptor> {
    if bins < 2 {
        return Err(invalid("color histogram needs at least 2 bins"));
    }
    let n = (img.height * img.width) as f64;
    let mut values = vec![0.0; img.channels * bins];
    for c in 0..img.channels {
        let hist = &mut values[c * bins..(c + 1) * bins];
        for &v in img.plane(c) {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            hist[b] += 1.0;
        }
        hist.iter_mut().for_each(|h| *h /= n);
    }
    Ok(Descriptor::new(DescriptorKind::ColorHistogram { bins }, values))
}

/// Diagonal covariance for the Mahalanobis metric. The effective per-dimension
/// variance is `variance + shrinkage` and must be strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagCovariance {
    variances: Vec<f64>,
    shrinkage: f64,
}

impl DiagCovariance {
    pub fn new(variances: Vec<f64>, shrinkage: f64) -> Result<Self> {
        if !(shrinkage >= 0.0) {
            return Err(invalid("Mahalanobis shrinkage must be nonnegative"));
        }
        if variances.iter().any(|v| !(*v >= 0.0) || *v + shrinkage <= 0.0) {
            return Err(invalid(
                "Mahalanobis variances must be nonnegative with variance + shrinkage > 0",
            ));
        }
        Ok(Self {
            variances,
            shrinkage,
        })
    }

    /// Per-dimension population variance of `rows`, plus `shrinkage`.
    pub fn estimate<'a, I>(rows: I, dim: usize, shrinkage: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            n += 1;
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        let variances = if n == 0 {
            vec![0.0; dim]
        } else {
            let n = n as f64;
            sum.iter()
                .zip(&sum_sq)
                .map(|(s, q)| (q / n - (s / n) * (s / n)).max(0.0))
                .collect()
        };
        Self::new(variances, shrinkage)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
    /// `1 - cos(a, b)`.
    Cosine,
    Mahalanobis(DiagCovariance),
}

impl DistanceMetric {
    /// Distance between two raw value vectors of equal length.
    pub fn between(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        match self {
            DistanceMetric::Euclidean => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()),
            DistanceMetric::Manhattan => Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
            DistanceMetric::Cosine => {
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::ZeroVector);
                }
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                // rounding can push the similarity a hair past 1
                Ok((1.0 - dot / (na * nb)).max(0.0))
            }
            DistanceMetric::Mahalanobis(cov) => {
                if cov.variances.len() != a.len() {
                    return Err(Error::DimensionMismatch {
                        expected: a.len(),
                        got: cov.variances.len(),
                    });
                }
                Ok(a.iter()
                    .zip(b)
                    .zip(&cov.variances)
                    .map(|((x, y), s)| (x - y) * (x - y) / (s + cov.shrinkage))
                    .sum::<f64>()
                    .sqrt())
            }
        }
    }
}

pub fn distance(a: &Descriptor, b: &Descriptor, metric: &DistanceMetric) -> Result<f64> {
    if a.kind != b.kind {
        return Err(Error::KindMismatch {
            expected: a.kind,
            got: b.kind,
        });
    }
    metric.between(&a.values, &b.values)
}
