use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::descriptors::Image;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    Contrast,
    Brightness,
    BoxBlur,
    ImpulseNoise,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::Contrast,
        CorruptionKind::Brightness,
        CorruptionKind::BoxBlur,
        CorruptionKind::ImpulseNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::BoxBlur => "box_blur",
            CorruptionKind::ImpulseNoise => "impulse_noise",
        }
    }

    /// Operator parameter per severity 1..=5: noise sigma, contrast factor,
    /// brightness offset, blur kernel width, impulse fraction.
    fn table(&self) -> [f64; 5] {
        match self {
            CorruptionKind::GaussianNoise => [0.1, 0.2, 0.35, 0.5, 0.65],
            CorruptionKind::Contrast => [0.7, 0.5, 0.3, 0.15, 0.03],
            CorruptionKind::Brightness => [0.1, 0.25, 0.4, 0.55, 1.1],
            CorruptionKind::BoxBlur => [3.0, 5.0, 7.0, 9.0, 11.0],
            CorruptionKind::ImpulseNoise => [0.1, 0.25, 0.45, 0.7, 0.9],
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown corruption kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        let spec = Self { kind, severity };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.severity) {
            return Err(invalid(format!("severity {} outside 1..=5", self.severity)));
        }
        Ok(())
    }

    pub fn parameter(&self) -> f64 {
        self.kind.table()[usize::from(self.severity.clamp(1, 5)) - 1]
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.severity)
    }
}

pub fn apply_corruption<R: Rng + ?Sized>(img: &Image, spec: &CorruptionSpec, rng: &mut R) -> Result<Image> {
    spec.validate()?;
    let p = spec.parameter();
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let data: Vec<f64> = match spec.kind {
        CorruptionKind::GaussianNoise => {
            let noise = Normal::new(0.0, p).expect("positive sigma");
            img.data().iter().map(|v| v + noise.sample(rng)).collect()
        }
        CorruptionKind::Contrast => img.data().iter().map(|v| 0.5 + p * (v - 0.5)).collect(),
        CorruptionKind::Brightness => img.data().iter().map(|v| v + p).collect(),
        CorruptionKind::BoxBlur => box_blur(img, p as usize),
        CorruptionKind::ImpulseNoise => img
            .data()
            .iter()
            .map(|&v| {
                if rng.random::<f64>() < p {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
            .collect(),
    };
    Ok(Image::from_clamped(c, h, w, data))
}

/// Separable `k x k` mean filter with edge clamping.
fn box_blur(img: &Image, k: usize) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let r = (k / 2) as isize;
    let norm = k as f64;
    let mut out = Vec::with_capacity(img.data().len());
    let mut tmp = vec![0.0; h * w];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -r..=r {
                    let xx = (x as isize + d).clamp(0, w as isize - 1) as usize;
                    acc += plane[y * w + xx];
                }
                tmp[y * w + x] = acc / norm;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -r..=r {
                    let yy = (y as isize + d).clamp(0, h as isize - 1) as usize;
                    acc += tmp[yy * w + x];
                }
                out.push(acc / norm);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::channel_stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: CorruptionKind, s: u8) -> CorruptionSpec {
        CorruptionSpec::new(kind, s).unwrap()
    }

    #[test]
    fn severity_range() {
        assert!(CorruptionSpec::new(CorruptionKind::Contrast, 0).is_err());
        assert!(CorruptionSpec::new(CorruptionKind::Contrast, 6).is_err());
        for k in CorruptionKind::ALL {
            assert_eq!(k.name().parse::<CorruptionKind>().unwrap(), k);
        }
    }

    #[test]
    fn tables_are_monotone() {
        for k in CorruptionKind::ALL {
            let t = k.table();
            let inc = t.windows(2).all(|w| w[1] > w[0]);
            let dec = t.windows(2).all(|w| w[1] < w[0]);
            assert!(inc || dec, "{k}");
        }
        assert!(spec(CorruptionKind::Contrast, 1).parameter() < 1.0);
    }

    #[test]
    fn contrast_fixed_point() {
        let img = Image::filled(3, 8, 8, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in 1..=5 {
            let out = apply_corruption(&img, &spec(CorruptionKind::Contrast, s), &mut rng).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn brightness_shift() {
        let img = Image::filled(3, 8, 8, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_corruption(&img, &spec(CorruptionKind::Brightness, 3), &mut rng).unwrap();
        let d = channel_stats(&out);
        for c in 0..3 {
            assert!((d.values()[2 * c] - 0.5).abs() < 1e-12);
            assert!(d.values()[2 * c + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches_pixel_oracle() {
        let img = Image::filled(1, 64, 64, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = 0.1;
        // oracle: sigma^2 (clamping at +-5 sigma ignored)
        let out = apply_corruption(&img, &spec(CorruptionKind::GaussianNoise, 1), &mut rng).unwrap();
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let se = sigma * sigma * (2.0 / n).sqrt();
        assert!((var - sigma * sigma).abs() < 3.0 * se, "{var}");
        assert!((channel_stats(&out).values()[1] - var).abs() < 1e-12);
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..3 * 16 * 16).map(|_| rng.random()).collect();
        let img = Image::new(3, 16, 16, data).unwrap();
        for k in CorruptionKind::ALL {
            for s in 1..=5 {
                let out = apply_corruption(&img, &spec(k, s), &mut rng).unwrap();
                assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn severity_moves_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..3 * 16 * 16).map(|i| 0.3 + 0.2 * ((i % 7) as f64 / 7.0)).collect();
        let img = Image::new(3, 16, 16, data).unwrap();
        let var_at = |k, s, rng: &mut ChaCha8Rng| {
            channel_stats(&apply_corruption(&img, &spec(k, s), rng).unwrap()).values()[1]
        };
        let base = channel_stats(&img).values()[1];
        assert!(var_at(CorruptionKind::GaussianNoise, 1, &mut rng) > base);
        assert!(var_at(CorruptionKind::GaussianNoise, 5, &mut rng) > var_at(CorruptionKind::GaussianNoise, 1, &mut rng));
        assert!(var_at(CorruptionKind::Contrast, 1, &mut rng) < base);
        assert!(var_at(CorruptionKind::Contrast, 5, &mut rng) < var_at(CorruptionKind::Contrast, 1, &mut rng));
    }

    #[test]
    fn blur_matches_direct_window_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (7, 9);
        let data: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
        let img = Image::new(1, h, w, data).unwrap();
        let out = apply_corruption(&img, &spec(CorruptionKind::BoxBlur, 1), &mut rng).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let yy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                        let xx = (x as i32 + dx).clamp(0, w as i32 - 1) as usize;
                        acc += img.get(0, yy, xx);
                    }
                }
                assert!((out.get(0, y, x) - acc / 9.0).abs() < 1e-12);
            }
        }
    }
}
