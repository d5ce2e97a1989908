//! Gaussian-Process regression with a Matérn 5/2 ARD kernel.
//!
//! Inputs are normalized to the unit cube and targets standardized before
//! fitting. Hyperparameters are chosen by maximizing the log marginal
//! likelihood with multi-start derivative-free coordinate descent over
//! log-parameters. The fitted model is the node-local oracle: it supplies
//! posterior mean/variance, expected improvement, Thompson candidate
//! selection, and the correlation lengths that scale descent steps.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::domain::{DomainBox, Sample};
use crate::{Error, Result, Rng};

/// ARD kernel hyperparameters in unit-cube units.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

pub const LS_BOUNDS: (f64, f64) = (0.005, 2.0);
pub const SV_BOUNDS: (f64, f64) = (0.05, 20.0);
pub const NV_BOUNDS: (f64, f64) = (1e-6, 1e-2);

const JITTER_START: f64 = 1e-6;
const JITTER_MAX: f64 = 1e-2;

/// Multi-start budget for the marginal-likelihood search.
const FIT_STARTS: usize = 4;
const FIT_EVALS_PER_START: usize = 200;
/// Hyperparameter search runs on at most this many (most recent) points;
/// the final factorization always uses the full training set.
const FIT_SUBSAMPLE: usize = 128;

impl KernelParams {
    pub fn default_for(dim: usize) -> Self {
        KernelParams {
            lengthscales: vec![0.5; dim],
            signal_variance: 1.0,
            noise_variance: 1e-3,
        }
    }

    fn clamped(mut self) -> Self {
        for l in &mut self.lengthscales {
            *l = l.clamp(LS_BOUNDS.0, LS_BOUNDS.1);
        }
        self.signal_variance = self.signal_variance.clamp(SV_BOUNDS.0, SV_BOUNDS.1);
        self.noise_variance = self.noise_variance.clamp(NV_BOUNDS.0, NV_BOUNDS.1);
        self
    }
}

/// Matérn 5/2 with ARD lengthscales, on unit-cube coordinates.
fn matern52(p: &KernelParams, a: &[f64], b: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..a.len() {
        let d = (a[i] - b[i]) / p.lengthscales[i];
        r2 += d * d;
    }
    let r = (5.0 * r2).sqrt();
    p.signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// In-place Cholesky of a row-major symmetric matrix; lower factor on output.
fn cholesky_in_place(a: &mut [f64], n: usize) -> std::result::Result<(), ()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(());
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    // zero the strict upper triangle so the factor is unambiguous
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

fn back_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

/// Build K + (noise + jitter) I and factorize, escalating jitter by 10x.
fn factorize(xs: &[Vec<f64>], p: &KernelParams) -> Result<(Vec<f64>, f64)> {
    let n = xs.len();
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = matern52(p, &xs[i], &xs[j]);
            base[i * n + j] = k;
            base[j * n + i] = k;
        }
    }
    let mut jitter = 0.0;
    loop {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += p.noise_variance + jitter;
        }
        if cholesky_in_place(&mut a, n).is_ok() {
            return Ok((a, jitter));
        }
        jitter = if jitter == 0.0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX {
            return Err(Error::IllConditioned {
                max_jitter: JITTER_MAX,
            });
        }
    }
}

fn mll_of(xs: &[Vec<f64>], ys: &[f64], p: &KernelParams) -> f64 {
    let n = xs.len();
    match factorize(xs, p) {
        Ok((chol, _)) => {
            let alpha0 = forward_solve(&chol, n, ys);
            let alpha = back_solve(&chol, n, &alpha0);
            let fit: f64 = ys.iter().zip(&alpha).map(|(y, a)| y * a).sum();
            let logdet: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
            -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * PI).ln()
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Fitted GP surrogate. Immutable after construction.
pub struct GpModel {
    box_: DomainBox,
    /// Training inputs, unit-cube coordinates.
    pub train_x: Vec<Vec<f64>>,
    /// Training targets, standardized.
    pub train_y: Vec<f64>,
    pub params: KernelParams,
    pub y_mean: f64,
    pub y_std: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

fn standardize(ys: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (ys.iter().map(|y| (y - mean) / std).collect(), mean, std)
}

/// Fit hyperparameters by multi-start coordinate descent on the log marginal
/// likelihood, then factorize on the full training set.
pub fn fit_gp(samples: &[Sample], box_: &DomainBox, rng: &mut Rng) -> Result<GpModel> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let dim = box_.dim();
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| box_.normalize(&s.x)).collect();
    let raw_y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let (ys, y_mean, y_std) = standardize(&raw_y);

    let sub = xs.len().min(FIT_SUBSAMPLE);
    let sub_x = &xs[xs.len() - sub..];
    let sub_y = &ys[ys.len() - sub..];

    let lo: Vec<f64> = (0..dim)
        .map(|_| LS_BOUNDS.0.ln())
        .chain([SV_BOUNDS.0.ln(), NV_BOUNDS.0.ln()])
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|_| LS_BOUNDS.1.ln())
        .chain([SV_BOUNDS.1.ln(), NV_BOUNDS.1.ln()])
        .collect();
    let to_params = |theta: &[f64]| KernelParams {
        lengthscales: theta[..dim].iter().map(|t| t.exp()).collect(),
        signal_variance: theta[dim].exp(),
        noise_variance: theta[dim + 1].exp(),
    };

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(FIT_STARTS);
    let d = KernelParams::default_for(dim);
    starts.push(
        d.lengthscales
            .iter()
            .map(|l| l.ln())
            .chain([d.signal_variance.ln(), d.noise_variance.ln()])
            .collect(),
    );
    for _ in 1..FIT_STARTS {
        starts.push(
            (0..dim + 2)
                .map(|c| rng.random_range(lo[c]..hi[c]))
                .collect(),
        );
    }

    let mut best_theta = starts[0].clone();
    let mut best_val = f64::NEG_INFINITY;
    for start in starts {
        let (theta, val) = coordinate_descent(
            |t| mll_of(sub_x, sub_y, &to_params(t)),
            start,
            &lo,
            &hi,
            FIT_EVALS_PER_START,
        );
        if val > best_val {
            best_val = val;
            best_theta = theta;
        }
    }

    build_model(box_.clone(), xs, ys, y_mean, y_std, to_params(&best_theta))
}

/// Re-factorize on (possibly new) data with fixed hyperparameters.
/// Accepts a single sample, unlike [`fit_gp`].
pub fn refit_with_params(
    samples: &[Sample],
    box_: &DomainBox,
    params: &KernelParams,
) -> Result<GpModel> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| box_.normalize(&s.x)).collect();
    let raw_y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let (ys, y_mean, y_std) = standardize(&raw_y);
    build_model(box_.clone(), xs, ys, y_mean, y_std, params.clone().clamped())
}

fn build_model(
    box_: DomainBox,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    params: KernelParams,
) -> Result<GpModel> {
    let n = xs.len();
    let (chol, jitter) = factorize(&xs, &params)?;
    let a0 = forward_solve(&chol, n, &ys);
    let alpha = back_solve(&chol, n, &a0);
    Ok(GpModel {
        box_,
        train_x: xs,
        train_y: ys,
        params,
        y_mean,
        y_std,
        chol,
        alpha,
        jitter,
    })
}

fn coordinate_descent(
    f: impl Fn(&[f64]) -> f64,
    start: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    budget: usize,
) -> (Vec<f64>, f64) {
    let mut theta = start;
    for c in 0..theta.len() {
        theta[c] = theta[c].clamp(lo[c], hi[c]);
    }
    let mut best = f(&theta);
    let mut evals = 1usize;
    let mut step = 0.8;
    'outer: while evals < budget && step > 1e-3 {
        let mut improved = false;
        for c in 0..theta.len() {
            for s in [step, -step] {
                if evals >= budget {
                    break 'outer;
                }
                let cand = (theta[c] + s).clamp(lo[c], hi[c]);
                if cand == theta[c] {
                    continue;
                }
                let old = theta[c];
                theta[c] = cand;
                let v = f(&theta);
                evals += 1;
                if v > best {
                    best = v;
                    improved = true;
                    break;
                }
                theta[c] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (theta, best)
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn big_phi(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / std::f64::consts::SQRT_2))
}

/// One standard-normal draw via Box-Muller.
fn standard_normal(rng: &mut Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

impl GpModel {
    pub fn dim(&self) -> usize {
        self.box_.dim()
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn kstar(&self, u: &[f64]) -> Vec<f64> {
        self.train_x
            .iter()
            .map(|t| matern52(&self.params, u, t))
            .collect()
    }

    /// Posterior mean and variance at `x` (original units, observation noise
    /// included in the variance).
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.len();
        let u = self.box_.normalize(x);
        let k = self.kstar(&u);
        let mean_std: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_solve(&self.chol, n, &k);
        let explained: f64 = v.iter().map(|a| a * a).sum();
        let var_std =
            (self.params.signal_variance + self.params.noise_variance - explained).max(0.0);
        (
            self.y_mean + self.y_std * mean_std,
            self.y_std * self.y_std * var_std,
        )
    }

    /// Posterior mean only (original units); cheaper than [`GpModel::predict`].
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let u = self.box_.normalize(x);
        let k = self.kstar(&u);
        let mean_std: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.y_mean + self.y_std * mean_std
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let fit: f64 = self
            .train_y
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| y * a)
            .sum();
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    /// Expected improvement for minimization at `x` against `best_y`.
    pub fn expected_improvement(&self, x: &[f64], best_y: f64) -> f64 {
        let (mu, var) = self.predict(x);
        let sigma = var.sqrt();
        let gap = best_y - mu;
        if sigma <= 1e-12 {
            return gap.max(0.0);
        }
        let z = gap / sigma;
        (gap * big_phi(z) + sigma * phi(z)).max(0.0)
    }

    /// Thompson selection: one joint posterior sample per batch element over
    /// `candidates` (sharing a single covariance factorization), each
    /// contributing the argmin of its own draw. Returned indices are
    /// distinct.
    pub fn thompson_select(
        &self,
        candidates: &[Vec<f64>],
        rng: &mut Rng,
        batch: usize,
    ) -> Vec<usize> {
        assert!(batch <= candidates.len());
        let n = self.len();
        let m = candidates.len();
        let us: Vec<Vec<f64>> = candidates.iter().map(|c| self.box_.normalize(c)).collect();

        let mut mean = vec![0.0; m];
        let mut vcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (j, u) in us.iter().enumerate() {
            let k = self.kstar(u);
            mean[j] = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
            vcols.push(forward_solve(&self.chol, n, &k));
        }
        // posterior covariance over candidates: K_cc - V^T V
        let mut cov = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let prior = matern52(&self.params, &us[i], &us[j]);
                let cross: f64 = vcols[i].iter().zip(&vcols[j]).map(|(a, b)| a * b).sum();
                let c = prior - cross;
                cov[i * m + j] = c;
                cov[j * m + i] = c;
            }
        }
        let mut jitter = JITTER_START;
        let lpost = loop {
            let mut a = cov.clone();
            for i in 0..m {
                a[i * m + i] += jitter;
            }
            if cholesky_in_place(&mut a, m).is_ok() {
                break a;
            }
            jitter *= 10.0;
            if jitter > 1.0 {
                // covariance is numerically degenerate; fall back to marginals
                let mut a = vec![0.0; m * m];
                for i in 0..m {
                    a[i * m + i] = cov[i * m + i].max(0.0).sqrt();
                }
                break a;
            }
        };
        let mut picked: Vec<usize> = Vec::with_capacity(batch);
        for _ in 0..batch {
            let z: Vec<f64> = (0..m).map(|_| standard_normal(rng)).collect();
            let mut draw = mean.clone();
            for i in 0..m {
                for k in 0..=i {
                    draw[i] += lpost[i * m + k] * z[k];
                }
            }
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| {
                draw[a].partial_cmp(&draw[b]).unwrap_or(std::cmp::Ordering::Equal)
            });
            let next = idx
                .into_iter()
                .find(|i| !picked.contains(i))
                .expect("batch <= candidates");
            picked.push(next);
        }
        picked
    }

    /// ARD lengthscales rescaled from the unit cube to original box widths.
    pub fn correlation_lengths(&self) -> Vec<f64> {
        self.params
            .lengthscales
            .iter()
            .enumerate()
            .map(|(i, &l)| l * self.box_.width(i))
            .collect()
    }

    /// Scalar step-size multiplier: geometric mean of the unit-cube
    /// lengthscales, clamped to [0.1, 2.0].
    pub fn correlation_scalar(&self) -> f64 {
        let d = self.params.lengthscales.len() as f64;
        let g = self
            .params
            .lengthscales
            .iter()
            .map(|l| l.ln())
            .sum::<f64>()
            / d;
        g.exp().clamp(0.1, 2.0)
    }
}
