//! Restart-free trust-region Bayesian optimization over a node's sample set.
//!
//! A trust region is a box centered at the node best whose side lengths grow
//! after consecutive successes and shrink after consecutive failures. The
//! in-tree variant never restarts: the length is clamped at `L_MIN` and the
//! region persists on its node across optimization epochs. Candidates inside
//! the region are ranked by Thompson sampling on the node GP.

use crate::domain::{latin_hypercube, sample_uniform, DomainBox, Objective, Sample};
use crate::gp::{refit_with_params, GpModel, KernelParams};
use crate::{Result, Rng};

pub const L_INIT: f64 = 0.8;
pub const L_MIN: f64 = 0.0078125; // 2^-7
pub const L_MAX: f64 = 1.6;
pub const SUCCESS_TOL: u32 = 3;

/// Candidate-set size per step (desk-scale cap).
pub fn candidate_count(dim: usize) -> usize {
    (100 * dim).min(512)
}

pub fn fail_tol(dim: usize, batch: usize) -> u32 {
    4.max(dim.div_ceil(batch.max(1))) as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegion {
    /// Side length in unit-cube units, within [L_MIN, L_MAX].
    pub length: f64,
    pub success_streak: u32,
    pub failure_streak: u32,
    /// Node best; refreshed at each step.
    pub center: Vec<f64>,
}

pub fn init_tr(center: Vec<f64>) -> TrustRegion {
    TrustRegion {
        length: L_INIT,
        success_streak: 0,
        failure_streak: 0,
        center,
    }
}

/// Streak bookkeeping after one batch. Returns true when a shrink was
/// requested below `L_MIN` (the restart signal used by the standalone
/// baseline; the in-tree variant clamps and continues).
pub fn update_tr(tr: &mut TrustRegion, improved: bool, fail_tol: u32) -> bool {
    let mut collapsed = false;
    if improved {
        tr.success_streak += 1;
        tr.failure_streak = 0;
        if tr.success_streak >= SUCCESS_TOL {
            tr.length = (tr.length * 2.0).min(L_MAX);
            tr.success_streak = 0;
        }
    } else {
        tr.failure_streak += 1;
        tr.success_streak = 0;
        if tr.failure_streak >= fail_tol {
            let halved = tr.length / 2.0;
            if halved < L_MIN {
                collapsed = true;
                tr.length = L_MIN;
            } else {
                tr.length = halved;
            }
            tr.failure_streak = 0;
        }
    }
    collapsed
}

/// The trust-region box in original units: centered at the node best, with
/// per-dimension widths shaped by the ARD lengthscales and clipped to the
/// domain.
pub fn tr_box(tr: &TrustRegion, model: Option<&GpModel>, domain: &DomainBox) -> DomainBox {
    let dim = domain.dim();
    let weights: Vec<f64> = match model {
        Some(m) => {
            let ls = &m.params.lengthscales;
            let mean = ls.iter().sum::<f64>() / dim as f64;
            ls.iter().map(|l| l / mean).collect()
        }
        None => vec![1.0; dim],
    };
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for i in 0..dim {
        let half = 0.5 * tr.length * weights[i] * domain.width(i);
        let l = (tr.center[i] - half).max(domain.lower()[i]);
        let h = (tr.center[i] + half).min(domain.upper()[i]);
        // keep a sliver of width so the box stays valid near domain edges
        let eps = 1e-12 * domain.width(i).max(1.0);
        lo.push(l.min(h - eps));
        hi.push(h.max(l + eps));
    }
    DomainBox::new(lo, hi).expect("trust-region box is valid")
}

#[derive(Debug, Clone)]
pub struct BoStepOutcome {
    pub ground_truth_calls: usize,
    pub improved: bool,
}

/// GP-fit cap: only the most recent samples enter the surrogate.
pub const GP_TRAIN_CAP: usize = 300;

fn capped(samples: &[Sample]) -> &[Sample] {
    &samples[samples.len().saturating_sub(GP_TRAIN_CAP)..]
}

/// One trust-region step: fit the GP, draw candidates inside the region,
/// select a batch by Thompson sampling, evaluate them, update the streaks.
/// Falls back to uniform sampling in the region when the GP cannot be fit.
#[allow(clippy::too_many_arguments)]
pub fn bo_step(
    samples: &mut Vec<Sample>,
    best: &mut Sample,
    tr: &mut TrustRegion,
    obj: &mut Objective,
    rng: &mut Rng,
    batch: usize,
    params: Option<&KernelParams>,
) -> Result<BoStepOutcome> {
    tr.center = best.x.clone();
    let model = params
        .and_then(|p| refit_with_params(capped(samples), obj.domain(), p).ok());
    let region = tr_box(tr, model.as_ref(), obj.domain());

    let picks: Vec<Vec<f64>> = match (&model, samples.len() >= 2) {
        (Some(m), true) => {
            let n_cand = candidate_count(obj.dim()).max(batch);
            let cands = latin_hypercube(&region, n_cand, rng);
            m.thompson_select(&cands, rng, batch)
                .into_iter()
                .map(|i| cands[i].clone())
                .collect()
        }
        _ => (0..batch).map(|_| sample_uniform(&region, rng)).collect(),
    };

    let prior_best = best.y;
    let mut calls = 0usize;
    for p in picks {
        if obj.stopped() {
            break;
        }
        let s = obj.evaluate(&p)?;
        calls += 1;
        if s.y < best.y {
            *best = s.clone();
        }
        samples.push(s);
    }
    let improved = best.y < prior_best;
    update_tr(tr, improved, fail_tol(obj.dim(), batch));
    Ok(BoStepOutcome {
        ground_truth_calls: calls,
        improved,
    })
}

/// Repeat [`bo_step`] with batch `min(5, remaining)` until the budget is
/// spent. Returns the number of ground-truth calls made.
pub fn local_bo_run(
    samples: &mut Vec<Sample>,
    best: &mut Sample,
    tr: &mut TrustRegion,
    obj: &mut Objective,
    budget: usize,
    rng: &mut Rng,
    params: Option<&KernelParams>,
) -> Result<usize> {
    let mut spent = 0usize;
    while spent < budget && !obj.stopped() {
        let batch = (budget - spent).min(5);
        let out = bo_step(samples, best, tr, obj, rng, batch, params)?;
        spent += out.ground_truth_calls;
        if out.ground_truth_calls == 0 {
            break;
        }
    }
    Ok(spent)
}
