//! Baseline optimizers: random search, Nelder-Mead, standalone TR-BO.

use crate::domain::{latin_hypercube, sample_uniform, Objective, Sample, TraceRecord};
use crate::gp::fit_gp;
use crate::local_bo::{bo_step, init_tr, GP_TRAIN_CAP, L_MIN};
use crate::{Result, Rng};

/// Uniform independent sampling over the domain.
pub fn random_search_run(
    obj: &mut Objective,
    max_evals: usize,
    rng: &mut Rng,
) -> Result<Vec<TraceRecord>> {
    obj.set_max_evals(max_evals);
    obj.set_tag("random");
    while !obj.stopped() {
        let x = sample_uniform(obj.domain(), rng);
        obj.evaluate(&x)?;
    }
    Ok(obj.take_trace())
}

// Nelder-Mead coefficients: reflection, expansion, contraction (both sides),
// shrink.
const NM_REFLECT: f64 = 1.0;
const NM_EXPAND: f64 = 2.0;
const NM_CONTRACT: f64 = 0.5;
const NM_SHRINK: f64 = 0.5;
/// Initial simplex: a random vertex plus one axis offset per dimension at
/// this fraction of the dimensional length.
const NM_INIT_OFFSET: f64 = 0.05;

fn nm_init_simplex(obj: &mut Objective, rng: &mut Rng) -> Result<Vec<Sample>> {
    let dim = obj.dim();
    let x0 = sample_uniform(obj.domain(), rng);
    let mut simplex = vec![obj.evaluate(&x0)?];
    for i in 0..dim {
        if obj.stopped() {
            break;
        }
        let mut xi = x0.clone();
        xi[i] += NM_INIT_OFFSET * obj.domain().width(i);
        simplex.push(obj.evaluate(&xi)?);
    }
    Ok(simplex)
}

fn simplex_diameter(simplex: &[Sample]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let dist: f64 = simplex[i]
                .x
                .iter()
                .zip(&simplex[j].x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d = d.max(dist.sqrt());
        }
    }
    d
}

/// Standard Nelder-Mead simplex search; restarts from a fresh random simplex
/// when the current one degenerates, so the budget is always spent exactly.
pub fn nelder_mead_run(
    obj: &mut Objective,
    max_evals: usize,
    rng: &mut Rng,
) -> Result<Vec<TraceRecord>> {
    obj.set_max_evals(max_evals);
    obj.set_tag("nelder-mead");
    let dim = obj.dim();
    let mut simplex = nm_init_simplex(obj, rng)?;

    while !obj.stopped() {
        if simplex.len() < dim + 1 || simplex_diameter(&simplex) < 1e-12 {
            simplex = nm_init_simplex(obj, rng)?;
            continue;
        }
        simplex.sort_by(|a, b| a.y.partial_cmp(&b.y).unwrap());
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|s| s.x[i]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.x)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let refl = obj.evaluate(&along(NM_REFLECT))?;
        if obj.stopped() {
            break;
        }
        if refl.y < simplex[0].y {
            let exp = obj.evaluate(&along(NM_EXPAND))?;
            simplex[dim] = if exp.y < refl.y { exp } else { refl };
            continue;
        }
        if refl.y < simplex[dim - 1].y {
            simplex[dim] = refl;
            continue;
        }
        // contraction: outside when the reflection improved on the worst
        let contracted = if refl.y < worst.y {
            obj.evaluate(&along(NM_REFLECT * NM_CONTRACT))?
        } else {
            obj.evaluate(&along(-NM_CONTRACT))?
        };
        if contracted.y < refl.y.min(worst.y) {
            simplex[dim] = contracted;
            continue;
        }
        // shrink every non-best vertex toward the best
        let best_x = simplex[0].x.clone();
        for v in simplex.iter_mut().skip(1) {
            if obj.stopped() {
                break;
            }
            let xs: Vec<f64> = best_x
                .iter()
                .zip(&v.x)
                .map(|(b, x)| b + NM_SHRINK * (x - b))
                .collect();
            *v = obj.evaluate(&xs)?;
        }
    }
    Ok(obj.take_trace())
}

const TURBO_INIT: usize = 20;
/// Refit kernel hyperparameters every this many BO steps; steps in between
/// reuse the previous fit.
const TURBO_REFIT_EVERY: usize = 5;

/// Single-trust-region global BO: Latin-hypercube initialization, Thompson
/// batches, and a full restart whenever the region collapses below its
/// minimum length.
pub fn turbo_baseline_run(
    obj: &mut Objective,
    max_evals: usize,
    rng: &mut Rng,
) -> Result<Vec<TraceRecord>> {
    obj.set_max_evals(max_evals);
    obj.set_tag("turbo");

    'restart: while !obj.stopped() {
        let n_init = TURBO_INIT.min(obj.remaining());
        let mut samples = Vec::with_capacity(n_init);
        for x in latin_hypercube(obj.domain(), n_init, rng) {
            samples.push(obj.evaluate(&x)?);
        }
        let mut best = samples
            .iter()
            .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
            .expect("init is non-empty")
            .clone();
        let mut tr = init_tr(best.x.clone());
        let mut params = None;
        let mut step = 0usize;
        while !obj.stopped() {
            if step % TURBO_REFIT_EVERY == 0 && samples.len() >= 2 {
                let from = samples.len().saturating_sub(GP_TRAIN_CAP);
                params = fit_gp(&samples[from..], obj.domain(), rng)
                    .ok()
                    .map(|m| m.params);
            }
            step += 1;
            let batch = obj.remaining().min(5);
            bo_step(&mut samples, &mut best, &mut tr, obj, rng, batch, params.as_ref())?;
            if tr.length <= L_MIN {
                continue 'restart;
            }
        }
    }
    Ok(obj.take_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_benchmark, DomainBox};
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    fn quadratic_2d() -> Objective {
        Objective::new(
            |x| (x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2),
            DomainBox::cube(-2.0, 2.0, 2).unwrap(),
            Some(0.0),
        )
    }

    #[test]
    fn random_search_budget_and_determinism() {
        let mut o1 = make_benchmark("ackley", 3).unwrap();
        let t1 = random_search_run(&mut o1, 10, &mut rng(7)).unwrap();
        assert_eq!(t1.len(), 10);
        for w in t1.windows(2) {
            assert!(w[1].best_y <= w[0].best_y);
        }
        let mut o2 = make_benchmark("ackley", 3).unwrap();
        let t2 = random_search_run(&mut o2, 10, &mut rng(7)).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn nelder_mead_solves_convex_quadratic() {
        let mut obj = quadratic_2d();
        let trace = nelder_mead_run(&mut obj, 200, &mut rng(0)).unwrap();
        assert!(trace.len() <= 200);
        let best = trace.last().unwrap().best_y;
        assert!(best <= 1e-6, "best {best} after {} evals", trace.len());
    }

    #[test]
    fn nelder_mead_respects_budget_exactly() {
        // no early stop on ackley away from the optimum
        let mut obj = make_benchmark("michalewicz", 4).unwrap();
        let trace = nelder_mead_run(&mut obj, 77, &mut rng(1)).unwrap();
        assert_eq!(trace.len(), 77);
        assert_eq!(trace.last().unwrap().index, 77);
    }

    #[test]
    fn nm_shrink_halves_diameter() {
        // pure coefficient check on a hand-built simplex
        let simplex = [
            Sample { x: vec![0.0, 0.0], y: 0.0, index: 1 },
            Sample { x: vec![2.0, 0.0], y: 1.0, index: 2 },
            Sample { x: vec![0.0, 2.0], y: 2.0, index: 3 },
        ];
        let before = simplex_diameter(&simplex);
        let best = simplex[0].x.clone();
        let shrunk: Vec<Sample> = simplex
            .iter()
            .map(|s| Sample {
                x: best
                    .iter()
                    .zip(&s.x)
                    .map(|(b, x)| b + NM_SHRINK * (x - b))
                    .collect(),
                ..s.clone()
            })
            .collect();
        assert!((simplex_diameter(&shrunk) - 0.5 * before).abs() < 1e-12);
    }

    #[test]
    fn turbo_initializes_with_lhs_and_respects_budget() {
        let mut obj = make_benchmark("ackley", 4).unwrap();
        let trace = turbo_baseline_run(&mut obj, 60, &mut rng(2)).unwrap();
        assert_eq!(trace.len(), 60);
        // the first 20 rows are the space-filling initialization: one point
        // per stratum in every dimension
        for d in 0..4 {
            let mut strata: Vec<usize> = trace[..20]
                .iter()
                .map(|r| {
                    let u = (r.x[d] + 5.0) / 15.0;
                    ((u * 20.0).floor() as usize).min(19)
                })
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn turbo_restart_resets_region() {
        // force immediate collapse: fail_tol halvings happen fast on a flat
        // objective where nothing ever improves after the first sample
        let mut obj = Objective::new(|_| 1.0, DomainBox::cube(0.0, 1.0, 2).unwrap(), None);
        let mut r = rng(3);
        let trace = turbo_baseline_run(&mut obj, 400, &mut r).unwrap();
        assert_eq!(trace.len(), 400);
    }
}
