use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::output::write_csv;
use crate::error::{invalid, Error, Result};
use crate::memory::MemorySnapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    /// `stream` or `memory`.
    pub source: String,
    /// Cluster position for memory rows.
    pub cluster: Option<usize>,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub rows: Vec<ProjectionRow>,
    pub mean: Vec<f64>,
    /// Unit principal axes, largest variance first.
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

impl Projection {
    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (o, axis) in out.iter_mut().zip(&self.axes) {
            *o = x
                .iter()
                .zip(&self.mean)
                .zip(axis)
                .map(|((v, m), a)| (v - m) * a)
                .sum();
        }
        out
    }
}

/// Projects window and memory descriptors onto the top two principal axes of
/// their combined covariance. Window rows come first.
pub fn export_projection(snapshot: &MemorySnapshot, window: &[Vec<f64>]) -> Result<Projection> {
    let mut data: Vec<&[f64]> = window.iter().map(|v| v.as_slice()).collect();
    let mut tags: Vec<Option<usize>> = vec![None; window.len()];
    for (k, m) in snapshot.rows() {
        data.push(&m.descriptor);
        tags.push(Some(k));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let d = data[0].len();
    if let Some(bad) = data.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for x in &data {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    if !(top > 1e-15) {
        return Err(invalid("rank-0 input: all descriptors coincide"));
    }
    let axis = |rank: usize| -> (Vec<f64>, f64) {
        let Some(&idx) = order.get(rank) else {
            return (vec![0.0; d], 0.0);
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // deterministic sign: largest-magnitude coordinate positive
        let pivot = (0..d).fold(0, |b, j| if v[j].abs() > v[b].abs() { j } else { b });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (v, eig.eigenvalues[idx].max(0.0))
    };
    let (a1, l1) = axis(0);
    let (a2, l2) = axis(1);
    let mut proj = Projection {
        rows: Vec::with_capacity(n),
        mean,
        axes: [a1, a2],
        explained_variance: [l1, l2],
    };
    for (x, tag) in data.iter().zip(tags) {
        let [pc1, pc2] = proj.project(x);
        proj.rows.push(ProjectionRow {
            source: if tag.is_some() { "memory" } else { "stream" }.to_string(),
            cluster: tag,
            pc1,
            pc2,
        });
    }
    Ok(proj)
}

pub fn write_projection_csv(path: impl AsRef<Path>, proj: &Projection) -> Result<()> {
    write_csv(path, &["source", "cluster", "pc1", "pc2"], &proj.rows)
}
