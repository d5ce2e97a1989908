//! Objective-function abstraction with evaluation accounting, the compact
//! box domain, synthetic benchmark functions, and the quantized-grid wrapper.
//!
//! Every ground-truth call in the toolkit goes through [`Objective::evaluate`],
//! which clips the point to the domain, bumps the evaluation counter, and
//! appends a trace record. Nothing else may call the underlying function.

use std::f64::consts::{E, PI};

use rand::Rng as _;

use crate::{Error, Result, Rng};

/// Axis-aligned compact search domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config(
                "domain box requires lower[i] < upper[i]".into(),
            ));
        }
        Ok(DomainBox { lower, upper })
    }

    /// Hypercube `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        DomainBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    /// Map a point into the unit cube.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    /// Inverse of [`DomainBox::normalize`].
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &v)| self.lower[i] + v * self.width(i))
            .collect()
    }
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Input coordinates, already clipped to the domain.
    pub x: Vec<f64>,
    pub y: f64,
    /// Evaluation ordinal, 1-based and unique within a run.
    pub index: usize,
}

/// One row of the run trace: a ground-truth evaluation with running best and
/// the node (or baseline tag) that requested it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_y: f64,
    pub node: String,
}

type EvalFn = Box<dyn Fn(&[f64]) -> f64 + Send>;

/// Black-box objective with exact evaluation accounting.
pub struct Objective {
    f: EvalFn,
    box_: DomainBox,
    eval_count: usize,
    known_optimum: Option<f64>,
    max_evals: usize,
    best_y: f64,
    trace: Vec<TraceRecord>,
    tag: String,
}

/// Early-stop tolerance around a known optimum.
pub const EARLY_STOP_TOL: f64 = 1e-8;

impl Objective {
    pub fn new(
        f: impl Fn(&[f64]) -> f64 + Send + 'static,
        box_: DomainBox,
        known_optimum: Option<f64>,
    ) -> Self {
        Objective {
            f: Box::new(f),
            box_,
            eval_count: 0,
            known_optimum,
            max_evals: usize::MAX,
            best_y: f64::INFINITY,
            trace: Vec::new(),
            tag: String::new(),
        }
    }

    pub fn set_max_evals(&mut self, max_evals: usize) {
        self.max_evals = max_evals;
    }

    /// Tag recorded on subsequent trace rows (tree node id or baseline name).
    pub fn set_tag(&mut self, tag: impl Into<String>) {
        self.tag = tag.into();
    }

    pub fn domain(&self) -> &DomainBox {
        &self.box_
    }

    pub fn dim(&self) -> usize {
        self.box_.dim()
    }

    pub fn eval_count(&self) -> usize {
        self.eval_count
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.known_optimum
    }

    pub fn best_y(&self) -> f64 {
        self.best_y
    }

    /// Ground-truth calls still allowed by the budget.
    pub fn remaining(&self) -> usize {
        self.max_evals.saturating_sub(self.eval_count)
    }

    /// True once the budget is spent or the known optimum has been reached.
    pub fn stopped(&self) -> bool {
        if self.remaining() == 0 {
            return true;
        }
        match self.known_optimum {
            Some(opt) => (self.best_y - opt).abs() <= EARLY_STOP_TOL,
            None => false,
        }
    }

    /// The single ground-truth entry point: clips, evaluates, counts, traces.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<Sample> {
        if x.len() != self.box_.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.box_.dim(),
                got: x.len(),
            });
        }
        let clipped = self.box_.clip(x);
        let y = (self.f)(&clipped);
        self.eval_count += 1;
        if y < self.best_y {
            self.best_y = y;
        }
        self.trace.push(TraceRecord {
            index: self.eval_count,
            x: clipped.clone(),
            y,
            best_y: self.best_y,
            node: self.tag.clone(),
        });
        Ok(Sample {
            x: clipped,
            y,
            index: self.eval_count,
        })
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }
}

/// Ackley function with the standard constants a=20, b=0.2, c=2π.
/// Global minimum 0 at the origin.
pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

/// Michalewicz function with steepness m=10, dimensions counted from 1.
/// Each term lies in [-1, 0].
pub fn michalewicz(x: &[f64]) -> f64 {
    -x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = ((i + 1) as f64 * v * v / PI).sin();
            v.sin() * s.powi(20)
        })
        .sum::<f64>()
}

/// Snap each coordinate to the nearest of `levels[i]` cell centers in the box.
pub fn snap_to_grid(box_: &DomainBox, levels: &[usize], x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let l = levels[i] as f64;
            let w = box_.width(i) / l;
            let cell = ((v - box_.lower()[i]) / w).floor().clamp(0.0, l - 1.0);
            box_.lower()[i] + (cell + 0.5) * w
        })
        .collect()
}

/// Wrap an objective so that inputs snap to a per-dimension grid before the
/// inner function is evaluated: all inputs in a cell yield identical values.
pub fn quantize_wrap(obj: Objective, levels: Vec<usize>) -> Result<Objective> {
    if levels.len() != obj.box_.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.box_.dim(),
            got: levels.len(),
        });
    }
    if levels.iter().any(|&l| l < 2) {
        return Err(Error::Config("quantize_wrap requires levels[i] >= 2".into()));
    }
    let Objective {
        f,
        box_,
        known_optimum,
        ..
    } = obj;
    let grid_box = box_.clone();
    let wrapped = move |x: &[f64]| {
        let snapped = snap_to_grid(&grid_box, &levels, x);
        f(&snapped)
    };
    Ok(Objective::new(wrapped, box_, known_optimum))
}

/// Uniform point in the box; deterministic given the RNG state.
pub fn sample_uniform(box_: &DomainBox, rng: &mut Rng) -> Vec<f64> {
    (0..box_.dim())
        .map(|i| rng.random_range(box_.lower[i]..box_.upper[i]))
        .collect()
}

/// Latin hypercube design: per dimension, the `n` points occupy `n` distinct
/// equal-width strata, one point per stratum.
pub fn latin_hypercube(box_: &DomainBox, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    let dim = box_.dim();
    let mut per_dim: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates shuffle
        for k in (1..n).rev() {
            let j = rng.random_range(0..=k);
            strata.swap(k, j);
        }
        let w = box_.width(i) / n as f64;
        per_dim.push(
            strata
                .iter()
                .map(|&s| box_.lower[i] + (s as f64 + rng.random_range(0.0..1.0)) * w)
                .collect(),
        );
    }
    (0..n)
        .map(|k| (0..dim).map(|i| per_dim[i][k]).collect())
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TABULAR_LEVELS: usize = 5;

/// Deterministic pseudo-random table value in [0, 1) for one grid cell.
fn tabular_cell_value(cells: &[usize]) -> f64 {
    let mut h: u64 = 0x51ab_0e5c_3b1a_9d47;
    for &c in cells {
        h = splitmix64(h ^ c as u64);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn quantized_tabular(dim: usize) -> Result<Objective> {
    let box_ = DomainBox::new(vec![0.5; dim], vec![TABULAR_LEVELS as f64 + 0.5; dim])?;
    let levels = vec![TABULAR_LEVELS; dim];
    // Enumerating 5^dim cells stays cheap for the dims this benchmark targets.
    let known_optimum = if (TABULAR_LEVELS as f64).powi(dim as i32) <= 1e6 {
        let mut cells = vec![0usize; dim];
        let mut best = f64::INFINITY;
        loop {
            best = best.min(tabular_cell_value(&cells));
            let mut i = 0;
            loop {
                cells[i] += 1;
                if cells[i] < TABULAR_LEVELS {
                    break;
                }
                cells[i] = 0;
                i += 1;
                if i == dim {
                    return build_tabular(box_, levels, Some(best));
                }
            }
        }
    } else {
        None
    };
    build_tabular(box_, levels, known_optimum)
}

fn build_tabular(box_: DomainBox, levels: Vec<usize>, opt: Option<f64>) -> Result<Objective> {
    let grid_box = box_.clone();
    let f = move |x: &[f64]| {
        let snapped = snap_to_grid(&grid_box, &levels, x);
        let cells: Vec<usize> = snapped
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = grid_box.width(i) / TABULAR_LEVELS as f64;
                ((v - grid_box.lower()[i]) / w).floor() as usize
            })
            .collect();
        tabular_cell_value(&cells)
    };
    Ok(Objective::new(f, box_, opt))
}

/// Benchmark registry keyed by name, as used by the harness configuration.
///
/// Domains: Ackley on `[-5, 10]^d`, Michalewicz on `[0, π]^d`,
/// quantized-tabular on `[0.5, 5.5]^d` with 5 grid levels per dimension.
pub fn make_benchmark(name: &str, dim: usize) -> Result<Objective> {
    if dim == 0 {
        return Err(Error::Config("benchmark dimension must be >= 1".into()));
    }
    match name {
        "ackley" => Ok(Objective::new(
            ackley,
            DomainBox::cube(-5.0, 10.0, dim)?,
            Some(0.0),
        )),
        "michalewicz" => Ok(Objective::new(
            michalewicz,
            DomainBox::cube(0.0, PI, dim)?,
            None,
        )),
        "quantized-tabular" => quantized_tabular(dim),
        other => Err(Error::UnknownBenchmark(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    #[test]
    fn ackley_minimum_at_origin() {
        for d in [1, 2, 5, 20] {
            assert!(ackley(&vec![0.0; d]).abs() < 1e-12);
        }
    }

    #[test]
    fn ackley_matches_high_precision_oracle() {
        // Frozen from a 40-digit arbitrary-precision evaluation of the formula.
        let expected = 3.625384938440362826601289827619211512828_f64;
        assert!((ackley(&[1.0, 1.0]) - expected).abs() < 1e-14);
        // even symmetry
        assert_eq!(ackley(&[1.0, 1.0]), ackley(&[-1.0, -1.0]));
    }

    #[test]
    fn ackley_positive_away_from_origin() {
        let mut r = rng(7);
        let box_ = DomainBox::cube(-5.0, 10.0, 4).unwrap();
        for _ in 0..1000 {
            let x = sample_uniform(&box_, &mut r);
            if x.iter().any(|v| v.abs() > 1e-6) {
                assert!(ackley(&x) > 0.0, "ackley({x:?}) not positive");
            }
        }
    }

    #[test]
    fn michalewicz_zero_at_origin_and_bounded() {
        assert_eq!(michalewicz(&[0.0, 0.0, 0.0]), 0.0);
        let mut r = rng(3);
        let box_ = DomainBox::cube(0.0, PI, 6).unwrap();
        for _ in 0..1000 {
            let x = sample_uniform(&box_, &mut r);
            let y = michalewicz(&x);
            assert!(y <= 0.0 && y >= -6.0);
        }
    }

    #[test]
    fn michalewicz_2d_minimum_matches_brute_force() {
        // Dense grid at ~1e-3 resolution plus local refinement.
        let n = 3200;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=n {
            for j in 0..=n {
                let x = [PI * i as f64 / n as f64, PI * j as f64 / n as f64];
                let y = michalewicz(&x);
                if y < best.0 {
                    best = (y, x[0], x[1]);
                }
            }
        }
        let (mut y0, mut x0) = (best.0, [best.1, best.2]);
        let mut h = PI / n as f64;
        for _ in 0..40 {
            let mut moved = false;
            for d in 0..2 {
                for s in [-1.0, 1.0] {
                    let mut x = x0;
                    x[d] = (x[d] + s * h).clamp(0.0, PI);
                    let y = michalewicz(&x);
                    if y < y0 {
                        y0 = y;
                        x0 = x;
                        moved = true;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        assert!((y0 - (-1.8013034100985534)).abs() < 1e-6);
        assert!((x0[0] - 2.2029055).abs() < 1e-3);
        assert!((x0[1] - 1.5707963).abs() < 1e-3);
    }

    #[test]
    fn evaluate_counts_clips_and_is_deterministic() {
        let mut obj = make_benchmark("ackley", 2).unwrap();
        let s = obj.evaluate(&[0.0, 0.0]).unwrap();
        assert!(s.y.abs() < 1e-12);
        assert_eq!(obj.eval_count(), 1);

        let a = obj.evaluate(&[1.5, -2.0]).unwrap();
        let b = obj.evaluate(&[1.5, -2.0]).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(obj.eval_count(), 3);

        // outside the box: evaluated at the clipped point
        let c = obj.evaluate(&[100.0, -100.0]).unwrap();
        assert_eq!(c.x, vec![10.0, -5.0]);
        assert_eq!(c.y, ackley(&[10.0, -5.0]));

        assert!(matches!(
            obj.evaluate(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn early_stop_on_known_optimum() {
        let mut obj = make_benchmark("ackley", 2).unwrap();
        obj.set_max_evals(100);
        assert!(!obj.stopped());
        obj.evaluate(&[0.0, 0.0]).unwrap();
        assert!(obj.stopped());
    }

    #[test]
    fn quantize_wrap_snaps_to_cells() {
        // Inner f on grid {1..5}^6: all-1.1 hits the same cell as all-1.0.
        let box_ = DomainBox::new(vec![0.5; 6], vec![5.5; 6]).unwrap();
        let inner = Objective::new(|x: &[f64]| x.iter().sum::<f64>(), box_, None);
        let mut w = quantize_wrap(inner, vec![5; 6]).unwrap();
        let a = w.evaluate(&vec![1.1; 6]).unwrap().y;
        let b = w.evaluate(&vec![1.0; 6]).unwrap().y;
        assert_eq!(a, b);
        assert_eq!(a, 6.0);
    }

    #[test]
    fn quantize_two_levels_four_values() {
        // 2 levels per dim over [0,1]^2: exactly 4 attainable values.
        let box_ = DomainBox::cube(0.0, 1.0, 2).unwrap();
        let inner = Objective::new(|x: &[f64]| 10.0 * x[0] + x[1], box_, None);
        let mut w = quantize_wrap(inner, vec![2; 2]).unwrap();
        let mut vals = Vec::new();
        let mut r = rng(11);
        let dom = DomainBox::cube(0.0, 1.0, 2).unwrap();
        for _ in 0..200 {
            let x = sample_uniform(&dom, &mut r);
            vals.push(w.evaluate(&x).unwrap().y);
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(vals.len(), 4);
    }

    #[test]
    fn quantize_wrap_idempotent() {
        let box_ = DomainBox::cube(-1.0, 3.0, 3).unwrap();
        let levels = vec![4usize, 7, 3];
        let mut r = rng(5);
        for _ in 0..1000 {
            let x = sample_uniform(&box_, &mut r);
            let once = snap_to_grid(&box_, &levels, &x);
            let twice = snap_to_grid(&box_, &levels, &once);
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn sample_uniform_mean_and_range() {
        let box_ = DomainBox::cube(0.0, 1.0, 2).unwrap();
        let mut r = rng(42);
        let mut sums = [0.0; 2];
        for _ in 0..10_000 {
            let x = sample_uniform(&box_, &mut r);
            assert!(box_.contains(&x));
            sums[0] += x[0];
            sums[1] += x[1];
        }
        for s in sums {
            let mean = s / 10_000.0;
            assert!((0.45..=0.55).contains(&mean), "mean {mean} out of bound");
        }
        // determinism
        let a = sample_uniform(&box_, &mut rng(1));
        let b = sample_uniform(&box_, &mut rng(1));
        assert_eq!(a, b);
    }

    #[test]
    fn latin_hypercube_stratification() {
        let box_ = DomainBox::cube(0.0, 1.0, 1).unwrap();
        let pts = latin_hypercube(&box_, 4, &mut rng(9));
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, &x) in xs.iter().enumerate() {
            assert!(x >= 0.25 * k as f64 && x < 0.25 * (k as f64 + 1.0));
        }
        // n = 1 falls back to a single uniform point
        let one = latin_hypercube(&box_, 1, &mut rng(2));
        assert_eq!(one.len(), 1);
        assert!(box_.contains(&one[0]));
        // determinism
        assert_eq!(
            latin_hypercube(&box_, 5, &mut rng(3)),
            latin_hypercube(&box_, 5, &mut rng(3))
        );
    }

    #[test]
    fn registry_rejects_unknown() {
        assert!(matches!(
            make_benchmark("rosenbrock", 2),
            Err(Error::UnknownBenchmark(_))
        ));
    }

    #[test]
    fn quantized_tabular_has_enumerated_optimum() {
        let mut obj = make_benchmark("quantized-tabular", 3).unwrap();
        let opt = obj.known_optimum().unwrap();
        let mut best = f64::INFINITY;
        for a in 1..=5 {
            for b in 1..=5 {
                for c in 1..=5 {
                    let y = obj.evaluate(&[a as f64, b as f64, c as f64]).unwrap().y;
                    best = best.min(y);
                }
            }
        }
        assert_eq!(best, opt);
    }
}
