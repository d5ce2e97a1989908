//! The Monte Carlo Tree Descent search tree.
//!
//! Each node owns a sample set, its best (x*, y*) pair, a windowed history of
//! per-call improvements, a visit count, and a persistent trust region. Every
//! iteration SELECTs a node by a modified UCT rule (with an artificial
//! exploration pseudo-child at branches and an expansion predicate at
//! leaves), OPTIMIZEs it with interleaved descent and local BO, and BACKs UP
//! the improved best along the path to the root.

use rand::Rng as _;

use crate::descent::{descend, DescentConfig};
use crate::domain::{Objective, Sample, TraceRecord};
use crate::gp::{fit_gp, refit_with_params, GpModel, KernelParams};
use crate::local_bo::{init_tr, local_bo_run, TrustRegion, GP_TRAIN_CAP};
use crate::{Result, Rng};

/// Weights of the modified UCT rule, the exploration pseudo-child, and the
/// leaf-expansion predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct UctParams {
    /// Weight on recent improvements in the child score.
    pub c_d: f64,
    /// Exploration weight in the child score.
    pub c_p: f64,
    /// Exploration weight of the artificial exploration node.
    pub c_p_explore: f64,
    /// Improvement weight in the leaf-expansion predicate.
    pub c_d_leaf: f64,
    /// Exploration weight in the leaf-expansion predicate.
    pub c_p_leaf: f64,
    /// Improvement window for child scores.
    pub j: usize,
    /// Improvement window for the leaf-expansion predicate.
    pub j_leaf: usize,
}

impl Default for UctParams {
    fn default() -> Self {
        UctParams {
            c_d: 10.0,
            c_p: 0.5,
            c_p_explore: 0.1,
            c_d_leaf: 50.0,
            c_p_leaf: 0.1,
            j: 10,
            j_leaf: 60,
        }
    }
}

impl UctParams {
    fn window(&self) -> usize {
        self.j.max(self.j_leaf)
    }
}

/// Expansion offsets start in this band of the dimensional length at level 0
/// and shrink by `exp(-level)`, floored at 1% of the dimensional length.
const EXPAND_BAND: (f64, f64) = (0.1, 0.5);
const EXPAND_FLOOR: f64 = 0.01;
const EXPAND_REDRAWS: usize = 10;

#[derive(Debug, Clone)]
pub struct MctdConfig {
    pub uct: UctParams,
    pub descent: DescentConfig,
    /// Ground-truth calls per OPTIMIZE iteration.
    pub iter_budget: usize,
    /// Descent : BO budget split.
    pub budget_ratio: (u32, u32),
    /// Sample-count threshold below which the descent oracle is absent.
    pub nr: usize,
    /// Thompson batch size per BO step.
    pub batch: usize,
}

impl MctdConfig {
    pub fn default_for(dim: usize) -> Self {
        MctdConfig {
            uct: UctParams::default(),
            descent: DescentConfig::default(),
            iter_budget: 4,
            budget_ratio: (1, 1),
            nr: (2 * dim).min(40),
            batch: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub samples: Vec<Sample>,
    pub best: Sample,
    /// Most recent per-call improvements, newest last, capped window.
    pub dy: Vec<f64>,
    pub visits: usize,
    pub level: usize,
    pub tr: TrustRegion,
    pub anchor: Vec<f64>,
    /// Kernel hyperparameters from the node's last fit, reused by BO steps.
    pub gp_params: Option<KernelParams>,
    /// Sample count at the last hyperparameter search.
    pub last_fit_len: usize,
}

/// Child score: `-y* + C_d * sum(recent dy) + C_p * sqrt(ln N_parent / N_child)`.
/// Unvisited children score infinity so they are tried first.
pub fn uct_child(child: &TreeNode, parent_visits: usize, p: &UctParams) -> f64 {
    if child.visits == 0 {
        return f64::INFINITY;
    }
    let dy_sum = recent_sum(&child.dy, p.j);
    let explore = ((parent_visits.max(1) as f64).ln() / child.visits as f64).sqrt();
    -child.best.y + p.c_d * dy_sum + p.c_p * explore
}

/// Score of the artificial exploration pseudo-child at a branch:
/// `-mean(children y*) + C'_p * sqrt(ln N_branch)`.
pub fn uct_explore(children_best: &[f64], branch_visits: usize, p: &UctParams) -> f64 {
    let d = children_best.len() as f64;
    let mean: f64 = children_best.iter().sum::<f64>() / d;
    -mean + p.c_p_explore * (branch_visits.max(1) as f64).ln().sqrt()
}

/// Leaf-expansion predicate: expand when the exploitation merit is low,
/// `-y* + C''_d * sum(recent dy) < C''_p * sqrt(ln N_leaf)`.
pub fn leaf_expand_pred(leaf: &TreeNode, p: &UctParams) -> bool {
    let lhs = -leaf.best.y + p.c_d_leaf * recent_sum(&leaf.dy, p.j_leaf);
    let rhs = p.c_p_leaf * (leaf.visits.max(1) as f64).ln().sqrt();
    lhs < rhs
}

fn recent_sum(dy: &[f64], window: usize) -> f64 {
    dy[dy.len().saturating_sub(window)..].iter().sum()
}

pub struct Mctd {
    pub nodes: Vec<TreeNode>,
    pub cfg: MctdConfig,
    /// Node optimized at each iteration, in order.
    pub selection_log: Vec<usize>,
}

impl Mctd {
    pub fn new(cfg: MctdConfig) -> Self {
        Mctd {
            nodes: Vec::new(),
            cfg,
            selection_log: Vec::new(),
        }
    }

    pub fn root(&self) -> Option<&TreeNode> {
        self.nodes.first()
    }

    fn new_node(
        &mut self,
        parent: Option<usize>,
        level: usize,
        anchor: Vec<f64>,
        samples: Vec<Sample>,
        dy: Vec<f64>,
    ) -> usize {
        let id = self.nodes.len();
        let best = samples
            .iter()
            .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
            .expect("node needs at least one sample")
            .clone();
        self.nodes.push(TreeNode {
            id,
            parent,
            children: Vec::new(),
            samples,
            best,
            dy,
            visits: 0,
            level,
            tr: init_tr(anchor.clone()),
            anchor,
            gp_params: None,
            last_fit_len: 0,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    /// Seed the tree with one random root sample.
    pub fn seed_root(&mut self, obj: &mut Objective, rng: &mut Rng) -> Result<usize> {
        assert!(self.nodes.is_empty(), "tree already seeded");
        obj.set_tag("n0");
        let x = crate::domain::sample_uniform(obj.domain(), rng);
        let s = obj.evaluate(&x)?;
        Ok(self.new_node(None, 0, s.x.clone(), vec![s], Vec::new()))
    }

    /// Descend from the root by UCT, possibly expanding; increments visits
    /// along the traversed path including the returned node.
    pub fn select(&mut self, obj: &mut Objective, rng: &mut Rng) -> Result<usize> {
        let mut cur = 0usize;
        let mut path = vec![cur];
        let selected = loop {
            if self.nodes[cur].children.is_empty() {
                // newly created leaves are optimized directly; only leaves
                // that have been visited before are tested for expansion
                if self.nodes[cur].visits > 0
                    && obj.remaining() > 0
                    && leaf_expand_pred(&self.nodes[cur], &self.cfg.uct)
                {
                    let child = self.expand(cur, obj, rng)?;
                    path.push(child);
                    break child;
                }
                break cur;
            }
            let children = self.nodes[cur].children.clone();
            let parent_visits = self.nodes[cur].visits;
            let mut best_child = children[0];
            let mut best_score = f64::NEG_INFINITY;
            for &c in &children {
                let score = uct_child(&self.nodes[c], parent_visits, &self.cfg.uct);
                if score > best_score {
                    best_score = score;
                    best_child = c;
                }
            }
            let bests: Vec<f64> = children.iter().map(|&c| self.nodes[c].best.y).collect();
            let explore = uct_explore(&bests, parent_visits, &self.cfg.uct);
            if explore > best_score && obj.remaining() > 0 {
                let child = self.expand(cur, obj, rng)?;
                path.push(child);
                break child;
            }
            cur = best_child;
            path.push(cur);
        };
        for id in path {
            self.nodes[id].visits += 1;
        }
        Ok(selected)
    }

    /// Create children under `node_id` and return the exploration child.
    ///
    /// A leaf first gets an inheritor child anchored at its best point, which
    /// keeps the nearest samples and the recent improvement history. The
    /// exploration child is anchored at a distant offset and seeded with one
    /// ground-truth evaluation.
    pub fn expand(&mut self, node_id: usize, obj: &mut Objective, rng: &mut Rng) -> Result<usize> {
        let level = self.nodes[node_id].level;
        if self.nodes[node_id].children.is_empty() {
            // the inheritor is a clone of the leaf restricted to the samples
            // nearest its best point: it keeps the improvement history, the
            // visit count, and the trust-region length
            let anchor = self.nodes[node_id].best.x.clone();
            let inherited = self.nearest_samples(node_id, &anchor, self.cfg.nr.max(1), obj);
            let dy = self.nodes[node_id].dy.clone();
            let (visits, tr_length, params) = {
                let n = &self.nodes[node_id];
                (n.visits, n.tr.length, n.gp_params.clone())
            };
            let id = self.new_node(Some(node_id), level + 1, anchor, inherited, dy);
            self.nodes[id].visits = visits;
            self.nodes[id].tr.length = tr_length;
            self.nodes[id].gp_params = params;
        }
        let anchor = self.draw_expansion_anchor(node_id, obj, rng);
        let child_tag = format!("n{}", self.nodes.len());
        obj.set_tag(child_tag);
        let s = obj.evaluate(&anchor)?;
        let anchor = s.x.clone();
        Ok(self.new_node(Some(node_id), level + 1, anchor, vec![s], Vec::new()))
    }

    fn nearest_samples(
        &self,
        node_id: usize,
        anchor: &[f64],
        count: usize,
        obj: &Objective,
    ) -> Vec<Sample> {
        let box_ = obj.domain();
        let a = box_.normalize(anchor);
        let mut ranked: Vec<(f64, &Sample)> = self.nodes[node_id]
            .samples
            .iter()
            .map(|s| {
                let u = box_.normalize(&s.x);
                let d: f64 = u.iter().zip(&a).map(|(x, y)| (x - y) * (x - y)).sum();
                (d, s)
            })
            .collect();
        ranked.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
        ranked
            .into_iter()
            .take(count)
            .map(|(_, s)| s.clone())
            .collect()
    }

    fn draw_expansion_anchor(&self, node_id: usize, obj: &Objective, rng: &mut Rng) -> Vec<f64> {
        let node = &self.nodes[node_id];
        let box_ = obj.domain();
        let decay = (-(node.level as f64)).exp();
        let lo = (EXPAND_BAND.0 * decay).max(EXPAND_FLOOR);
        let hi = (EXPAND_BAND.1 * decay).max(EXPAND_FLOOR);
        let base = &node.best.x;
        let mut fallback = base.clone();
        for attempt in 0..=EXPAND_REDRAWS {
            let cand: Vec<f64> = (0..box_.dim())
                .map(|i| {
                    let mag = rng.random_range(lo..=hi) * box_.width(i);
                    let sign = if rng.random_range(0.0..1.0) < 0.5 {
                        -1.0
                    } else {
                        1.0
                    };
                    base[i] + sign * mag
                })
                .collect();
            let clipped = box_.clip(&cand);
            let dist: f64 = clipped
                .iter()
                .zip(base)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist.sqrt() > 1e-12 || attempt == EXPAND_REDRAWS {
                return clipped;
            }
            fallback = clipped;
        }
        fallback
    }

    /// OPTIMIZE: fit the node GP, run descent with its share of the
    /// per-iteration budget, then trust-region BO with the rest, then update
    /// (x*, y*) and append per-call improvements.
    pub fn optimize_node(
        &mut self,
        node_id: usize,
        obj: &mut Objective,
        rng: &mut Rng,
    ) -> Result<()> {
        let budget = self.cfg.iter_budget.min(obj.remaining());
        if budget == 0 {
            return Ok(());
        }
        let (rd, rb) = self.cfg.budget_ratio;
        let descent_budget = (budget as u64 * rd as u64 / (rd + rb).max(1) as u64) as usize;
        let bo_budget = budget - descent_budget;

        obj.set_tag(format!("n{node_id}"));
        let node = &mut self.nodes[node_id];
        let window = self.cfg.uct.window();

        let train_from = node.samples.len().saturating_sub(GP_TRAIN_CAP);
        // the hyperparameter search is expensive, so rerun it only once the
        // sample set has grown by 25%; refits in between keep the old kernel
        let stale = node.samples.len() * 4 >= node.last_fit_len.max(1) * 5;
        let model: Option<GpModel> = if node.samples.len() >= 2 {
            match (&node.gp_params, stale) {
                (Some(p), false) => {
                    refit_with_params(&node.samples[train_from..], obj.domain(), p).ok()
                }
                _ => {
                    let m = fit_gp(&node.samples[train_from..], obj.domain(), rng).ok();
                    if m.is_some() {
                        node.last_fit_len = node.samples.len();
                    }
                    m
                }
            }
        } else {
            None
        };
        if let Some(m) = &model {
            node.gp_params = Some(m.params.clone());
        }
        // the descent oracle only exists once the node has enough samples
        let oracle = if node.samples.len() >= self.cfg.nr {
            model.as_ref()
        } else {
            None
        };

        let y_before = node.best.y;
        let snapshot = node.samples.len();
        descend(
            &mut node.samples,
            &mut node.best,
            node.visits.max(1),
            node.level,
            oracle,
            obj,
            &self.cfg.descent,
            descent_budget,
            rng,
        )?;
        local_bo_run(
            &mut node.samples,
            &mut node.best,
            &mut node.tr,
            obj,
            bo_budget,
            rng,
            node.gp_params.as_ref(),
        )?;

        // per-call improvement history (zero when a call does not improve)
        let mut running = y_before;
        let new_dy: Vec<f64> = node.samples[snapshot..]
            .iter()
            .map(|s| {
                let nb = running.min(s.y);
                let imp = running - nb;
                running = nb;
                imp
            })
            .collect();
        node.dy.extend(new_dy);
        let cut = node.dy.len().saturating_sub(window);
        node.dy.drain(..cut);
        Ok(())
    }

    /// BACKUP: propagate the node best to every ancestor and append one
    /// improvement entry per ancestor, zero when nothing changed.
    pub fn backup(&mut self, node_id: usize) {
        let window = self.cfg.uct.window();
        let mut cur = node_id;
        while let Some(parent) = self.nodes[cur].parent {
            let child_best = self.nodes[cur].best.clone();
            let p = &mut self.nodes[parent];
            let old = p.best.y;
            if child_best.y < old {
                p.best = child_best;
            }
            p.dy.push((old - p.best.y).max(0.0));
            let cut = p.dy.len().saturating_sub(window);
            p.dy.drain(..cut);
            cur = parent;
        }
    }

    /// One full iteration; returns the optimized node.
    pub fn step(&mut self, obj: &mut Objective, rng: &mut Rng) -> Result<usize> {
        let selected = self.select(obj, rng)?;
        self.optimize_node(selected, obj, rng)?;
        self.backup(selected);
        self.selection_log.push(selected);
        Ok(selected)
    }
}

/// Run MCTD until `max_evals` ground-truth calls (or early stop) and return
/// the per-evaluation trace.
pub fn mctd_run(
    obj: &mut Objective,
    cfg: MctdConfig,
    max_evals: usize,
    rng: &mut Rng,
) -> Result<Vec<TraceRecord>> {
    let mut tree = Mctd::new(cfg);
    run_with_tree(&mut tree, obj, max_evals, rng)?;
    Ok(obj.take_trace())
}

/// Like [`mctd_run`] but on a caller-owned tree, for tree inspection.
pub fn run_with_tree(
    tree: &mut Mctd,
    obj: &mut Objective,
    max_evals: usize,
    rng: &mut Rng,
) -> Result<()> {
    obj.set_max_evals(max_evals);
    tree.seed_root(obj, rng)?;
    while !obj.stopped() {
        tree.step(obj, rng)?;
    }
    Ok(())
}
