//! Diagonal-covariance Gaussian mixtures: k-means++ seeding, EM fitting and
//! BIC model selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub var_floor: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            var_floor: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if !(self.var_floor > 0.0) {
            return Err(invalid("variance floor must be positive"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Log-likelihood of the training data under these parameters.
    pub log_likelihood: f64,
    /// Log-likelihood before each M-step and at the final parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ll_history: Vec<f64>,
    #[serde(default)]
    pub converged: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Free parameters: `(K - 1)` weights, `K * d` means, `K * d` variances.
    pub fn num_params(&self) -> usize {
        let k = self.k();
        (k - 1) + 2 * k * self.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `ln(pi_k) + ln N(x; mu_k, diag var_k)` for every component.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.k()];
        log_joint_into(&self.weights, &self.means, &self.variances, x, &mut out);
        Ok(out)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.log_joint(x)?))
    }

    pub fn log_likelihood_of(&self, data: &[Vec<f64>]) -> Result<f64> {
        data.iter().map(|x| self.log_density(x)).sum()
    }

    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut lj = self.log_joint(x)?;
        let lse = log_sum_exp(&lj);
        lj.iter_mut().for_each(|v| *v = (*v - lse).exp());
        Ok(lj)
    }

    /// Hard assignment: argmax responsibility, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let lj = self.log_joint(x)?;
        Ok(argmax(&lj))
    }

    pub fn bic(&self, data: &[Vec<f64>]) -> Result<f64> {
        bic(self, data)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_joint_into(weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    for k in 0..weights.len() {
        if weights[k] <= 0.0 {
            out[k] = f64::NEG_INFINITY;
            continue;
        }
        let mut acc = 0.0;
        for ((xi, mu), var) in x.iter().zip(&means[k]).zip(&vars[k]) {
            let d = xi - mu;
            acc += d * d / var + var.ln();
        }
        out[k] = weights[k].ln() - 0.5 * (acc + x.len() as f64 * LN_2PI);
    }
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance to the nearest chosen centre. Falls back to a uniform unchosen
/// point when every remaining distance is zero.
pub fn kmeanspp_init<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if data.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: data.len(),
        });
    }
    let n = data.len();
    let mut chosen = vec![false; n];
    let mut centres = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centres.push(data[first].clone());
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &data[first])).collect();

    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can walk past the end; take the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centres.push(data[pick].clone());
        for (i, x) in data.iter().enumerate() {
            let d = sq_dist(x, &data[pick]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    Ok(centres)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn validate_data(data: &[Vec<f64>], k: usize) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyInput("GMM data"));
    }
    let d = data[0].len();
    if d == 0 {
        return Err(invalid("data points must have at least one dimension"));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if data.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: data.len(),
        });
    }
    Ok(d)
}

/// Fits a `k`-component diagonal GMM; the best of `cfg.restarts` runs by
/// final log-likelihood is returned.
pub fn fit_em(data: &[Vec<f64>], k: usize, cfg: &FitConfig) -> Result<GmmModel> {
    cfg.validate()?;
    let d = validate_data(data, k)?;
    let mut best: Option<GmmModel> = None;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let model = fit_once(data, k, d, cfg, &mut rng)?;
        if best
            .as_ref()
            .map_or(true, |b| model.log_likelihood > b.log_likelihood)
        {
            best = Some(model);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn fit_once(data: &[Vec<f64>], k: usize, d: usize, cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Result<GmmModel> {
    let n = data.len();
    let mut means = kmeanspp_init(data, k, rng)?;

    let mut global_mean = vec![0.0; d];
    for x in data {
        for j in 0..d {
            global_mean[j] += x[j];
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; d];
    for x in data {
        for j in 0..d {
            let t = x[j] - global_mean[j];
            global_var[j] += t * t;
        }
    }
    global_var
        .iter_mut()
        .for_each(|v| *v = (*v / n as f64).max(cfg.var_floor));
    let mut vars = vec![global_var; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; n * k];
    let mut history = Vec::new();
    let mut converged = false;
    let mut row = vec![0.0; k];

    loop {
        // E-step
        let mut ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            log_joint_into(&weights, &means, &vars, x, &mut row);
            let lse = log_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (row[j] - lse).exp();
            }
        }
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
            }
        }
        history.push(ll);
        if converged || history.len() > cfg.max_iter {
            break;
        }

        // M-step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                weights[j] = 0.0;
                continue;
            }
            let mut mu = vec![0.0; d];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + j];
                for t in 0..d {
                    mu[t] += r * x[t];
                }
            }
            mu.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; d];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + j];
                for t in 0..d {
                    let dv = x[t] - mu[t];
                    var[t] += r * dv * dv;
                }
            }
            var.iter_mut()
                .for_each(|v| *v = (*v / nk).max(cfg.var_floor));
            means[j] = mu;
            vars[j] = var;
            weights[j] = nk / n as f64;
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
    }

    Ok(GmmModel {
        weights,
        means,
        variances: vars,
        log_likelihood: *history.last().expect("at least one E-step"),
        ll_history: history,
        converged,
    })
}

/// `p ln(n) - 2 LL`; lower is better.
pub fn bic(model: &GmmModel, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("BIC data"));
    }
    let ll = model.log_likelihood_of(data)?;
    Ok(model.num_params() as f64 * (data.len() as f64).ln() - 2.0 * ll)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best_k: usize,
    pub table: Vec<BicEntry>,
    pub model: GmmModel,
}

/// Fits every `k` in `ks` and returns the BIC-minimizing one (smaller `k` on ties).
pub fn select_k(data: &[Vec<f64>], ks: &[usize], cfg: &FitConfig) -> Result<Selection> {
    if ks.is_empty() {
        return Err(Error::EmptyInput("K range"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    validate_data(data, *ks.last().expect("nonempty"))?;

    let fits: Vec<Result<(GmmModel, f64)>> = ks
        .par_iter()
        .map(|&k| {
            let cfg_k = FitConfig {
                seed: cfg.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..cfg.clone()
            };
            let model = fit_em(data, k, &cfg_k)?;
            let score = bic(&model, data)?;
            Ok((model, score))
        })
        .collect();

    let mut table = Vec::with_capacity(ks.len());
    let mut best: Option<(usize, GmmModel, f64)> = None;
    for (k, fit) in ks.iter().zip(fits) {
        let (model, score) = fit?;
        table.push(BicEntry {
            k: *k,
            bic: score,
            log_likelihood: model.log_likelihood,
        });
        if best.as_ref().map_or(true, |(_, _, b)| score < *b) {
            best = Some((*k, model, score));
        }
    }
    let (best_k, model, _) = best.expect("nonempty");
    Ok(Selection {
        best_k,
        table,
        model,
    })
}
