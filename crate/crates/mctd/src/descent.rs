//! Stochastic Three Points local descent.
//!
//! Three step variants: the basic two-evaluation step, a surrogate-guided
//! step that walks along the chosen direction while the surrogate keeps
//! improving and spends a single ground-truth call at the stop point, and a
//! fine-grained step that brackets the best multiplier on the surrogate
//! before its single ground-truth call. [`descend`] drives them with the
//! visit/level step-size schedule.

use rand::Rng as _;

use crate::domain::{latin_hypercube, DomainBox, Objective, Sample};
use crate::gp::GpModel;
use crate::{Result, Rng};

/// Cap on the surrogate walk length in the oracle-guided step.
const ORACLE_WALK_CAP: usize = 10;

#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Base step-size fraction of the dimensional length.
    pub alpha0: f64,
    /// Fine-grained descent kicks in once the node best drops below this.
    pub switch_threshold: f64,
    /// Candidate directions drawn when a surrogate is available.
    pub n_directions: usize,
    /// Surrogate-evaluation cap per fine-grained line search.
    pub fine_budget: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            alpha0: 0.2,
            switch_threshold: f64::NEG_INFINITY,
            n_directions: 64,
            fine_budget: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub new_best: Sample,
    pub ground_truth_calls: usize,
    pub improved: bool,
    /// Every ground-truth sample taken by the step, in evaluation order.
    pub evaluated: Vec<Sample>,
}

impl DescentOutcome {
    fn from_evals(incumbent: &Sample, evaluated: Vec<Sample>) -> Self {
        let mut best = incumbent.clone();
        for s in &evaluated {
            if s.y < best.y {
                best = s.clone();
            }
        }
        DescentOutcome {
            improved: best.y < incumbent.y,
            ground_truth_calls: evaluated.len(),
            new_best: best,
            evaluated,
        }
    }
}

/// Per-dimension step size: `alpha0 * width_i * corr / sqrt(visits * (level + 1))`.
/// Strictly decreasing in both visits and level.
pub fn step_size(
    visits: usize,
    level: usize,
    alpha0: f64,
    corr_scalar: f64,
    box_: &DomainBox,
) -> Vec<f64> {
    assert!(visits >= 1);
    let denom = ((visits * (level + 1)) as f64).sqrt();
    (0..box_.dim())
        .map(|i| alpha0 * box_.width(i) * corr_scalar / denom)
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Rescale `dx` elementwise by the correlation lengths while preserving its
/// Euclidean norm: `dx * L * ||dx|| / ||dx * L||`.
pub fn rescale_by_lengths(dx: &[f64], lengths: &[f64]) -> Vec<f64> {
    let scaled: Vec<f64> = dx.iter().zip(lengths).map(|(d, l)| d * l).collect();
    let ns = norm(&scaled);
    if ns == 0.0 {
        return dx.to_vec();
    }
    let factor = norm(dx) / ns;
    scaled.iter().map(|s| s * factor).collect()
}

/// Choose the descent direction.
///
/// Without a surrogate: a uniformly random direction with length equal to the
/// half-diagonal of the step-size box. With one: `n` Latin-hypercube offsets
/// in the step-size box, each rescaled by the correlation lengths, keeping
/// the offset with the highest expected improvement at `x_best + dx`.
pub fn propose_direction(
    model: Option<&GpModel>,
    x_best: &[f64],
    alpha: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Vec<f64> {
    let dim = alpha.len();
    let half_diag = norm(alpha) / 2.0;
    match model {
        None => {
            // random point on the unit sphere, scaled
            let mut dir: Vec<f64> = (0..dim)
                .map(|_| {
                    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.random_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let nd = norm(&dir);
            if nd == 0.0 {
                dir[0] = 1.0;
                return dir.iter().map(|d| d * half_diag).collect();
            }
            dir.iter().map(|d| d * half_diag / nd).collect()
        }
        Some(m) => {
            let lengths = m.correlation_lengths();
            let offset_box = DomainBox::new(
                alpha.iter().map(|a| -a / 2.0).collect(),
                alpha.iter().map(|a| a / 2.0).collect(),
            )
            .expect("step sizes are positive");
            let offsets = latin_hypercube(&offset_box, n.max(1), rng);
            let best_y = m.predict_mean(x_best).min(f64::INFINITY);
            let mut best_dx: Option<(f64, Vec<f64>)> = None;
            for raw in offsets {
                let dx = rescale_by_lengths(&raw, &lengths);
                let cand: Vec<f64> = x_best.iter().zip(&dx).map(|(a, b)| a + b).collect();
                let ei = m.expected_improvement(&cand, best_y);
                match &best_dx {
                    Some((b, _)) if ei <= *b => {}
                    _ => best_dx = Some((ei, dx)),
                }
            }
            best_dx.expect("at least one candidate").1
        }
    }
}

/// Basic STP step: evaluate `x + dx` and `x - dx`, keep the argmin of the
/// three. `max_calls = 1` evaluates the `+` direction only.
pub fn stp_basic_step(
    obj: &mut Objective,
    x: &Sample,
    dx: &[f64],
    max_calls: usize,
) -> Result<DescentOutcome> {
    let mut evaluated = Vec::new();
    if max_calls >= 1 {
        let plus: Vec<f64> = x.x.iter().zip(dx).map(|(a, b)| a + b).collect();
        evaluated.push(obj.evaluate(&plus)?);
    }
    if max_calls >= 2 {
        let minus: Vec<f64> = x.x.iter().zip(dx).map(|(a, b)| a - b).collect();
        evaluated.push(obj.evaluate(&minus)?);
    }
    Ok(DescentOutcome::from_evals(x, evaluated))
}

/// Oracle-guided step: walk `k = 1, 2, ...` while the surrogate keeps
/// improving along `dx`, then spend exactly one ground-truth call at the
/// stop point `x + k*dx`.
pub fn stp_oracle_step(
    obj: &mut Objective,
    model: &GpModel,
    x_best: &Sample,
    dx: &[f64],
) -> Result<DescentOutcome> {
    let at = |k: usize| -> Vec<f64> {
        x_best
            .x
            .iter()
            .zip(dx)
            .map(|(a, b)| a + k as f64 * b)
            .collect()
    };
    let mut k = 0usize;
    let mut g_here = model.predict_mean(&at(0));
    while k < ORACLE_WALK_CAP {
        let g_next = model.predict_mean(&at(k + 1));
        if g_next < g_here {
            k += 1;
            g_here = g_next;
        } else {
            break;
        }
    }
    let k = k.max(1);
    let s = obj.evaluate(&at(k))?;
    Ok(DescentOutcome::from_evals(x_best, vec![s]))
}

/// Fine-grained step: bracket the best multiplier of `dx` on the surrogate,
/// then spend exactly one ground-truth call at `x + k0*dx`.
///
/// Bracket update: if the argmin stays at the midpoint, both half-widths
/// halve; if it hits an endpoint, the bracket shifts there, keeping the old
/// step outward (doubling the reach) and halving it inward.
pub fn stp_fine_step(
    obj: &mut Objective,
    model: &GpModel,
    x_best: &Sample,
    dx: &[f64],
    fine_budget: usize,
) -> Result<DescentOutcome> {
    let g = |k: f64| {
        let p: Vec<f64> = x_best.x.iter().zip(dx).map(|(a, b)| a + k * b).collect();
        model.predict_mean(&p)
    };
    let (mut k0, mut k_lo, mut k_hi) = (0.0_f64, -1.0_f64, 1.0_f64);
    let mut g0 = g(k0);
    let mut spent = 1usize;
    while spent + 2 <= fine_budget.max(3) {
        let (g_lo, g_hi) = (g(k_lo), g(k_hi));
        spent += 2;
        let (k_new, g_new) = if g_lo < g0 && g_lo <= g_hi {
            (k_lo, g_lo)
        } else if g_hi < g0 {
            (k_hi, g_hi)
        } else {
            (k0, g0)
        };
        if k_new == k0 {
            // midpoint holds: halve both half-widths
            k_lo = k0 - (k0 - k_lo) / 2.0;
            k_hi = k0 + (k_hi - k0) / 2.0;
        } else if k_new == k_hi {
            let h = k_hi - k0;
            k0 = k_new;
            g0 = g_new;
            k_lo = k0 - h / 2.0;
            k_hi = k0 + h;
        } else {
            let h = k0 - k_lo;
            k0 = k_new;
            g0 = g_new;
            k_hi = k0 + h / 2.0;
            k_lo = k0 - h;
        }
    }
    let target: Vec<f64> = x_best.x.iter().zip(dx).map(|(a, b)| a + k0 * b).collect();
    let s = obj.evaluate(&target)?;
    Ok(DescentOutcome::from_evals(x_best, vec![s]))
}

/// Run the per-node descent loop until `budget` ground-truth calls are spent
/// (or the objective stops early). New samples are appended to `samples` and
/// `best` is kept current.
#[allow(clippy::too_many_arguments)]
pub fn descend(
    samples: &mut Vec<Sample>,
    best: &mut Sample,
    visits: usize,
    level: usize,
    model: Option<&GpModel>,
    obj: &mut Objective,
    cfg: &DescentConfig,
    budget: usize,
    rng: &mut Rng,
) -> Result<DescentOutcome> {
    let corr = model.map_or(1.0, |m| m.correlation_scalar());
    let alpha = step_size(visits.max(1), level, cfg.alpha0, corr, obj.domain());
    let incumbent = best.clone();
    let mut evaluated = Vec::new();
    let mut spent = 0usize;
    while spent < budget && !obj.stopped() {
        let remaining = (budget - spent).min(obj.remaining());
        let dx = propose_direction(model, &best.x, &alpha, cfg.n_directions, rng);
        let out = match model {
            None => stp_basic_step(obj, best, &dx, remaining.min(2))?,
            Some(m) => {
                if best.y < cfg.switch_threshold {
                    stp_fine_step(obj, m, best, &dx, cfg.fine_budget)?
                } else {
                    stp_oracle_step(obj, m, best, &dx)?
                }
            }
        };
        spent += out.ground_truth_calls;
        if out.new_best.y < best.y {
            *best = out.new_best.clone();
        }
        samples.extend(out.evaluated.iter().cloned());
        evaluated.extend(out.evaluated);
        if out.ground_truth_calls == 0 {
            break;
        }
    }
    Ok(DescentOutcome::from_evals(&incumbent, evaluated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_benchmark, DomainBox, Objective};
    use crate::gp::{fit_gp, refit_with_params, KernelParams};
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    fn quad_1d() -> Objective {
        Objective::new(
            |x: &[f64]| x[0] * x[0],
            DomainBox::cube(-10.0, 10.0, 1).unwrap(),
            Some(0.0),
        )
    }

    #[test]
    fn step_size_formula() {
        let box_ = DomainBox::cube(-5.0, 10.0, 3).unwrap();
        let a = step_size(1, 0, 0.2, 1.0, &box_);
        assert_eq!(a, vec![3.0; 3]);
        // square-root law in visits
        let a4 = step_size(4, 0, 0.2, 1.0, &box_);
        assert!((a4[0] / a[0] - 0.5).abs() < 1e-15);
        // proportional to the correlation scalar
        let ah = step_size(1, 0, 0.2, 0.5, &box_);
        assert!((ah[0] / a[0] - 0.5).abs() < 1e-15);
        // strictly decreasing in level
        assert!(step_size(1, 1, 0.2, 1.0, &box_)[0] < a[0]);
    }

    #[test]
    fn random_direction_norm_and_determinism() {
        let alpha = vec![2.0, 1.0, 2.0];
        let a = propose_direction(None, &[0.0; 3], &alpha, 8, &mut rng(4));
        let b = propose_direction(None, &[0.0; 3], &alpha, 8, &mut rng(4));
        assert_eq!(a, b);
        let expect = (alpha.iter().map(|v| v * v).sum::<f64>()).sqrt() / 2.0;
        assert!((norm(&a) - expect).abs() < 1e-12);
    }

    #[test]
    fn rescale_preserves_norm() {
        let mut r = rng(8);
        for _ in 0..1000 {
            let dx: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
            let l: Vec<f64> = (0..5).map(|_| r.random_range(0.01..3.0)).collect();
            if norm(&dx) == 0.0 {
                continue;
            }
            let out = rescale_by_lengths(&dx, &l);
            assert!((norm(&out) - norm(&dx)).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_direction_picks_dominant_candidate() {
        // one training point with a very low value: offsets landing near it
        // have far higher EI than anywhere else
        let box_ = DomainBox::cube(0.0, 1.0, 1).unwrap();
        let samples = vec![
            Sample {
                x: vec![0.55],
                y: -5.0,
                index: 1,
            },
            Sample {
                x: vec![0.2],
                y: 0.0,
                index: 2,
            },
            Sample {
                x: vec![0.8],
                y: 0.0,
                index: 3,
            },
        ];
        let p = KernelParams {
            lengthscales: vec![0.03],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        };
        let m = refit_with_params(&samples, &box_, &p).unwrap();
        let x_best = vec![0.5];
        let dx = propose_direction(Some(&m), &x_best, &[0.4], 64, &mut rng(3));
        // verify against the EI oracle over a dense grid of the same box
        let best_y = m.predict_mean(&x_best);
        let landed = x_best[0] + dx[0];
        let mut grid_best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=400 {
            let cand = 0.5 - 0.2 + 0.4 * i as f64 / 400.0;
            let ei = m.expected_improvement(&[cand], best_y);
            if ei > grid_best.0 {
                grid_best = (ei, cand);
            }
        }
        assert!(
            (landed - grid_best.1).abs() < 0.05,
            "landed {landed}, grid argmax {}",
            grid_best.1
        );
    }

    #[test]
    fn basic_step_on_quadratic() {
        let mut obj = quad_1d();
        let x = obj.evaluate(&[1.0]).unwrap();
        let out = stp_basic_step(&mut obj, &x, &[0.5], 2).unwrap();
        assert_eq!(out.ground_truth_calls, 2);
        assert_eq!(out.new_best.x, vec![0.5]);
        assert!(out.improved);
        assert_eq!(obj.eval_count(), 3);
    }

    #[test]
    fn basic_step_on_constant_and_at_minimum() {
        let mut obj = Objective::new(|_: &[f64]| 7.0, DomainBox::cube(0.0, 1.0, 2).unwrap(), None);
        let x = obj.evaluate(&[0.5, 0.5]).unwrap();
        let out = stp_basic_step(&mut obj, &x, &[0.1, 0.0], 2).unwrap();
        assert_eq!(out.new_best.y, 7.0);
        assert!(!out.improved);

        let mut q = quad_1d();
        let origin = q.evaluate(&[0.0]).unwrap();
        let out = stp_basic_step(&mut q, &origin, &[0.3], 2).unwrap();
        assert_eq!(out.new_best.x, vec![0.0]);
    }

    #[test]
    fn basic_step_partial_budget() {
        let mut obj = quad_1d();
        let x = obj.evaluate(&[1.0]).unwrap();
        let out = stp_basic_step(&mut obj, &x, &[0.5], 1).unwrap();
        assert_eq!(out.ground_truth_calls, 1);
        assert_eq!(obj.eval_count(), 2);
    }

    /// Fit a 1-d surrogate on planted (position, value) pairs along the axis.
    fn planted_surrogate(points: &[(f64, f64)], box_: &DomainBox) -> crate::gp::GpModel {
        let samples: Vec<Sample> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Sample {
                x: vec![x],
                y,
                index: i + 1,
            })
            .collect();
        let p = KernelParams {
            lengthscales: vec![0.08],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        };
        refit_with_params(&samples, box_, &p).unwrap()
    }

    #[test]
    fn oracle_step_walks_while_surrogate_improves() {
        let box_ = DomainBox::cube(0.0, 10.0, 1).unwrap();
        // surrogate decreasing for 3 steps of dx=1 from x=2, then rising
        let pts: Vec<(f64, f64)> = vec![
            (2.0, 0.0),
            (3.0, -1.0),
            (4.0, -2.0),
            (5.0, -3.0),
            (6.0, -1.0),
            (7.0, 0.5),
        ];
        let m = planted_surrogate(&pts, &box_);
        // oracle check: the walk must stop where the surrogate stops improving
        let mut expect_k = 0usize;
        let mut g = m.predict_mean(&[2.0]);
        loop {
            let next = m.predict_mean(&[2.0 + (expect_k + 1) as f64]);
            if next < g && expect_k < 10 {
                g = next;
                expect_k += 1;
            } else {
                break;
            }
        }
        assert_eq!(expect_k, 3, "planted surrogate should improve for 3 steps");
        let mut obj = Objective::new(|x: &[f64]| (x[0] - 5.0).abs(), box_, None);
        let start = obj.evaluate(&[2.0]).unwrap();
        let out = stp_oracle_step(&mut obj, &m, &start, &[1.0]).unwrap();
        assert_eq!(out.ground_truth_calls, 1);
        assert_eq!(out.evaluated[0].x, vec![5.0]);
        assert!(out.improved);
    }

    #[test]
    fn oracle_step_monotone_increasing_surrogate_stops_at_one() {
        let box_ = DomainBox::cube(0.0, 10.0, 1).unwrap();
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, i as f64)).collect();
        let m = planted_surrogate(&pts, &box_);
        let mut obj = Objective::new(|x: &[f64]| x[0], box_, None);
        let start = obj.evaluate(&[2.0]).unwrap();
        let out = stp_oracle_step(&mut obj, &m, &start, &[1.0]).unwrap();
        assert_eq!(out.evaluated[0].x, vec![3.0]);
        // ground truth worse than incumbent: best unchanged
        assert!(!out.improved);
        assert_eq!(out.new_best.x, start.x);
    }

    #[test]
    fn fine_step_brackets_surrogate_minimum() {
        let box_ = DomainBox::cube(-4.0, 4.0, 1).unwrap();
        // dense planted quadratic with minimum at x = 0.5 (multiplier 0.5 of dx=1)
        let pts: Vec<(f64, f64)> = (-16..=16)
            .map(|i| {
                let x = i as f64 * 0.25;
                (x, (x - 0.5) * (x - 0.5))
            })
            .collect();
        let m = planted_surrogate(&pts, &box_);
        // oracle: dense 1-d scan of the surrogate along the direction
        let mut scan_best = (f64::INFINITY, 0.0);
        for i in 0..=800 {
            let k = -2.0 + 4.0 * i as f64 / 800.0;
            let v = m.predict_mean(&[k]);
            if v < scan_best.0 {
                scan_best = (v, k);
            }
        }
        let mut obj = Objective::new(|x: &[f64]| (x[0] - 0.5) * (x[0] - 0.5), box_, None);
        let start = obj.evaluate(&[0.0]).unwrap();
        let out = stp_fine_step(&mut obj, &m, &start, &[1.0], 16).unwrap();
        assert_eq!(out.ground_truth_calls, 1);
        let k0 = out.evaluated[0].x[0];
        assert!(
            (k0 - scan_best.1).abs() < 0.1,
            "k0 {k0} vs scan argmin {}",
            scan_best.1
        );
    }

    #[test]
    fn fine_step_converges_to_zero_when_start_is_best() {
        let box_ = DomainBox::cube(-4.0, 4.0, 1).unwrap();
        let pts: Vec<(f64, f64)> = (-16..=16)
            .map(|i| {
                let x = i as f64 * 0.25;
                (x, x * x)
            })
            .collect();
        let m = planted_surrogate(&pts, &box_);
        let mut obj = Objective::new(|x: &[f64]| x[0] * x[0], box_, None);
        let start = obj.evaluate(&[0.0]).unwrap();
        let out = stp_fine_step(&mut obj, &m, &start, &[1.0], 16).unwrap();
        assert_eq!(out.ground_truth_calls, 1);
        assert!(out.evaluated[0].x[0].abs() <= 0.125);
    }

    #[test]
    fn descend_budget_accounting_no_model() {
        let mut obj = quad_1d();
        let start = obj.evaluate(&[4.0]).unwrap();
        let mut samples = vec![start.clone()];
        let mut best = start;
        let before = obj.eval_count();
        let out = descend(
            &mut samples,
            &mut best,
            1,
            0,
            None,
            &mut obj,
            &DescentConfig::default(),
            2,
            &mut rng(0),
        )
        .unwrap();
        assert_eq!(out.ground_truth_calls, 2);
        assert_eq!(obj.eval_count() - before, 2);
        assert_eq!(samples.len(), 3);
    }

    #[test]
    fn descend_improves_on_ackley() {
        for seed in 0..5 {
            let mut obj = make_benchmark("ackley", 5).unwrap();
            let mut r = rng(seed);
            let x0 = crate::domain::sample_uniform(obj.domain(), &mut r);
            let start = obj.evaluate(&x0).unwrap();
            let mut samples = vec![start.clone()];
            let mut best = start.clone();
            let out = descend(
                &mut samples,
                &mut best,
                1,
                0,
                None,
                &mut obj,
                &DescentConfig::default(),
                60,
                &mut r,
            )
            .unwrap();
            assert!(out.improved, "seed {seed} made no progress");
            assert!(out.new_best.y < start.y);
        }
    }

    #[test]
    fn descend_switch_threshold_selects_fine_grained() {
        // with threshold +inf every oracle-path step is fine-grained, which
        // spends exactly one call each
        let box_ = DomainBox::cube(-4.0, 4.0, 1).unwrap();
        let mut obj = Objective::new(|x: &[f64]| x[0] * x[0], box_.clone(), None);
        let mut r = rng(1);
        let mut samples: Vec<Sample> = (0..8)
            .map(|i| {
                let x = -2.0 + i as f64 * 0.5;
                obj.evaluate(&[x]).unwrap()
            })
            .collect();
        let m = fit_gp(&samples, &box_, &mut r).unwrap();
        let mut best = samples
            .iter()
            .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
            .unwrap()
            .clone();
        let cfg = DescentConfig {
            switch_threshold: f64::INFINITY,
            ..DescentConfig::default()
        };
        let before = obj.eval_count();
        let out = descend(
            &mut samples,
            &mut best,
            1,
            0,
            Some(&m),
            &mut obj,
            &cfg,
            5,
            &mut r,
        )
        .unwrap();
        assert_eq!(out.ground_truth_calls, 5);
        assert_eq!(obj.eval_count() - before, 5);
    }

    #[test]
    fn outcome_never_worsens() {
        let mut r = rng(99);
        for trial in 0..50 {
            let mut obj = make_benchmark("ackley", 3).unwrap();
            let x0 = crate::domain::sample_uniform(obj.domain(), &mut r);
            let start = obj.evaluate(&x0).unwrap();
            let mut samples = vec![start.clone()];
            let mut best = start.clone();
            let out = descend(
                &mut samples,
                &mut best,
                1 + trial % 4,
                trial % 3,
                None,
                &mut obj,
                &DescentConfig::default(),
                6,
                &mut r,
            )
            .unwrap();
            assert!(out.new_best.y <= start.y);
        }
    }

    #[test]
    fn convex_quadratic_converges_with_shrinking_steps() {
        let mut obj = quad_1d();
        let mut x = obj.evaluate(&[8.0]).unwrap();
        let mut dx = 4.0;
        for _ in 0..50 {
            let out = stp_basic_step(&mut obj, &x, &[dx], 2).unwrap();
            x = out.new_best;
            dx *= 0.85;
        }
        assert!(x.x[0].abs() <= dx);
    }
}
