//! Policy distillation: importance-weighted experience from a trained
//! policy, weighted resampling, and CART trees fitted to the modal actions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use coolsim_core::control::{run_episode, Command, Controller};
use coolsim_core::env::{CabinetRawAction, CtAction, Environment, StepOutcome};
use coolsim_core::metrics::{summarize, MetricConfig};
use coolsim_core::{Error, Result, SystemTopology};

use crate::dist::{dirichlet_logpdf_unchecked, gaussian_logpdf};
use crate::train::{episode_seed, Agents, PolicyController};

/// Probability floor for categorical weights.
pub const PROB_FLOOR: f64 = 1e-12;
/// Distance of the Dirichlet boundary probes from the simplex faces.
pub const DIRICHLET_PROBE_FLOOR: f64 = 1e-3;

fn domain(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        op,
        reason: reason.into(),
    }
}

/// `ln p(a*) - ln min_k p(k)` with `a*` the modal class. The flag marks a
/// floored minimum.
pub fn viper_weight_categorical(probs: &[f64]) -> (f64, bool) {
    let best = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let flagged = worst < PROB_FLOOR;
    let l = best.max(PROB_FLOOR).ln() - worst.max(PROB_FLOOR).ln();
    (l.max(0.0), flagged)
}

/// Log-density gap between `a_star` and the farther bound of `[lo, hi]`.
pub fn viper_weight_gaussian(mean: f64, std: f64, lo: f64, hi: f64, a_star: f64) -> f64 {
    let min = gaussian_logpdf(lo, mean, std).min(gaussian_logpdf(hi, mean, std));
    (gaussian_logpdf(a_star, mean, std) - min).max(0.0)
}

/// Gap between the log-density at `x_star` and its minimum over the
/// near-vertex probes of the simplex.
pub fn viper_weight_dirichlet(alpha: &[f64], x_star: &[f64]) -> f64 {
    let k = alpha.len();
    if k < 2 {
        return 0.0;
    }
    let eps = DIRICHLET_PROBE_FLOOR;
    let mut min = f64::INFINITY;
    for v in 0..k {
        let probe: Vec<f64> = (0..k).map(|j| if j == v { 1.0 - (k - 1) as f64 * eps } else { eps }).collect();
        min = min.min(dirichlet_logpdf_unchecked(&probe, alpha));
    }
    (dirichlet_logpdf_unchecked(x_star, alpha) - min).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperiencePoint {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub weight: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    /// Cabinet points; actions are `[setpoint, flow, valves...]` in agent units.
    pub blade: Vec<ExperiencePoint>,
    /// Tower points; actions are `[delta index]`.
    pub tower: Vec<ExperiencePoint>,
}

/// Modal cabinet action and its weight for a raw observation.
pub fn blade_point(agents: &Agents, raw_obs: &[f64], std: f64) -> Result<ExperiencePoint> {
    let obs = agents.blade_scaler.apply(raw_obs)?;
    let (mean, alpha) = agents.blade_actor.forward(&obs)?;
    let valves = crate::dist::dirichlet_mean(&alpha);
    let w = mean.iter().map(|m| viper_weight_gaussian(*m, std, -1.0, 1.0, *m)).sum::<f64>()
        + viper_weight_dirichlet(&alpha, &valves);
    let mut action = mean.to_vec();
    action.extend(valves);
    Ok(ExperiencePoint {
        obs: raw_obs.to_vec(),
        action,
        weight: w,
        flagged: false,
    })
}

pub fn tower_point(agents: &Agents, raw_obs: &[f64]) -> Result<ExperiencePoint> {
    let obs = agents.tower_scaler.apply(raw_obs)?;
    let p = agents.tower_actor.probs(&obs)?;
    let (w, flagged) = viper_weight_categorical(&p);
    Ok(ExperiencePoint {
        obs: raw_obs.to_vec(),
        action: vec![crate::dist::argmax(&p) as f64],
        weight: w,
        flagged,
    })
}

/// Rolls out the modal policy for `episodes` episodes and records every
/// visited per-unit observation with its modal action and weight. `std` is
/// the Gaussian head's spread used for the weights.
pub fn collect_experience(agents: &Agents, env: &mut Environment, episodes: usize, std: f64, seed: u64) -> Result<Experience> {
    let mut d = Experience::default();
    for k in 0..episodes {
        let mut ctrl = PolicyController::modal(agents.clone());
        let log = run_episode(env, &mut ctrl, episode_seed(seed, k))?;
        for o in log.iter().filter(|o| !o.done) {
            for raw in &o.blade_obs {
                d.blade.push(blade_point(agents, raw, std)?);
            }
            for raw in &o.ct_obs {
                d.tower.push(tower_point(agents, raw)?);
            }
        }
    }
    Ok(d)
}

/// `size` draws with replacement, proportional to weight.
pub fn resample<R: Rng>(d: &[ExperiencePoint], rng: &mut R, size: usize) -> Result<Vec<ExperiencePoint>> {
    if d.iter().any(|p| !(p.weight.is_finite() && p.weight >= 0.0)) {
        return Err(domain("resample", "weights must be finite and non-negative"));
    }
    let idx = WeightedIndex::new(d.iter().map(|p| p.weight)).map_err(|e| domain("resample", e.to_string()))?;
    Ok((0..size).map(|_| d[idx.sample(rng)].clone()).collect())
}

pub fn resample_uniform<R: Rng>(d: &[ExperiencePoint], rng: &mut R, size: usize) -> Result<Vec<ExperiencePoint>> {
    if d.is_empty() {
        return Err(domain("resample", "no experience"));
    }
    Ok((0..size).map(|_| d[rng.random_range(0..d.len())].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    /// Class index (as a one-element vector) or regression target.
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
}

impl TreeNode {
    pub fn complexity(&self) -> Complexity {
        match self {
            TreeNode::Leaf { .. } => Complexity {
                nodes: 1,
                leaves: 1,
                depth: 0,
            },
            TreeNode::Internal { left, right, .. } => {
                let l = left.complexity();
                let r = right.complexity();
                Complexity {
                    nodes: 1 + l.nodes + r.nodes,
                    leaves: l.leaves + r.leaves,
                    depth: 1 + l.depth.max(r.depth),
                }
            }
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal { feature, left, right, .. } => {
                Some([Some(*feature), left.max_feature(), right.max_feature()].into_iter().flatten().max().unwrap())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub kind: TreeKind,
    pub features: usize,
    pub outputs: usize,
    /// Leaves were renormalized onto the probability simplex.
    pub simplex: bool,
    pub root: TreeNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 17,
            min_leaf: 1,
        }
    }
}

/// Root-to-leaf descent: `<=` threshold goes left.
pub fn tree_predict<'a>(tree: &'a Tree, obs: &[f64]) -> Result<&'a [f64]> {
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { value } => return Ok(value),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let x = *obs.get(*feature).ok_or(Error::Shape {
                    op: "tree feature",
                    expected: feature + 1,
                    got: obs.len(),
                })?;
                node = if x <= *threshold { left } else { right };
            }
        }
    }
}

/// Node visits from root to leaf as `(feature, threshold, went_left)`.
pub fn descent_path(tree: &Tree, obs: &[f64]) -> Result<Vec<(usize, f64, bool)>> {
    let mut path = Vec::new();
    let mut node = &tree.root;
    while let TreeNode::Internal {
        feature,
        threshold,
        left,
        right,
    } = node
    {
        let x = *obs.get(*feature).ok_or(Error::Shape {
            op: "tree feature",
            expected: feature + 1,
            got: obs.len(),
        })?;
        let go_left = x <= *threshold;
        path.push((*feature, *threshold, go_left));
        node = if go_left { left } else { right };
    }
    Ok(path)
}

struct Data<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Vec<f64>],
    w: &'a [f64],
}

enum Target {
    Class(usize),
    Value(usize),
}

fn check_data(x: &[Vec<f64>], y: &[Vec<f64>], w: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(domain("fit_tree", "empty data"));
    }
    if y.len() != x.len() || w.len() != x.len() {
        return Err(Error::Shape {
            op: "fit_tree rows",
            expected: x.len(),
            got: if y.len() != x.len() { y.len() } else { w.len() },
        });
    }
    let f = x[0].len();
    if x.iter().any(|r| r.len() != f) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(domain("fit_tree", "ragged or non-finite features"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(domain("fit_tree", "weights must be non-negative with positive sum"));
    }
    Ok(f)
}

/// Weighted Gini impurity times node weight, from class weights.
fn gini_mass(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    total - counts.iter().map(|c| c * c).sum::<f64>() / total
}

/// Weighted sum of squared deviations from running sums.
fn sse(sw: f64, swy: &[f64], swy2: &[f64]) -> f64 {
    if sw <= 0.0 {
        return 0.0;
    }
    swy.iter().zip(swy2).map(|(a, b)| (b - a * a / sw).max(0.0)).sum()
}

struct Stats {
    mass: Vec<f64>,
    sw: f64,
    swy2: Vec<f64>,
}

impl Stats {
    fn new(width: usize) -> Self {
        Self {
            mass: vec![0.0; width],
            sw: 0.0,
            swy2: vec![0.0; width],
        }
    }

    fn add(&mut self, t: &Target, y: &[f64], w: f64, sign: f64) {
        self.sw += sign * w;
        match t {
            Target::Class(_) => self.mass[y[0] as usize] += sign * w,
            Target::Value(_) => {
                for (k, v) in y.iter().enumerate() {
                    self.mass[k] += sign * w * v;
                    self.swy2[k] += sign * w * v * v;
                }
            }
        }
    }

    fn impurity(&self, t: &Target) -> f64 {
        match t {
            Target::Class(_) => gini_mass(&self.mass),
            Target::Value(_) => sse(self.sw, &self.mass, &self.swy2),
        }
    }
}

fn leaf_value(d: &Data, idx: &[usize], t: &Target, simplex: bool) -> Vec<f64> {
    match t {
        Target::Class(k) => {
            let mut c = vec![0.0; *k];
            for &i in idx {
                c[d.y[i][0] as usize] += d.w[i];
            }
            // Lowest index wins ties.
            let mut best = 0;
            for (j, v) in c.iter().enumerate() {
                if *v > c[best] {
                    best = j;
                }
            }
            vec![best as f64]
        }
        Target::Value(k) => {
            let sw: f64 = idx.iter().map(|&i| d.w[i]).sum();
            let mut m = vec![0.0; *k];
            for &i in idx {
                for (j, v) in d.y[i].iter().enumerate() {
                    m[j] += d.w[i] * v;
                }
            }
            if sw > 0.0 {
                m.iter_mut().for_each(|v| *v /= sw);
            }
            if simplex {
                let s: f64 = m.iter().sum();
                if s > 0.0 {
                    m.iter_mut().for_each(|v| *v /= s);
                } else {
                    let n = m.len() as f64;
                    m.iter_mut().for_each(|v| *v = 1.0 / n);
                }
            }
            m
        }
    }
}

fn width(t: &Target) -> usize {
    match t {
        Target::Class(k) | Target::Value(k) => *k,
    }
}

/// Best `(impurity decrease, feature, threshold)` over all features.
fn best_split(d: &Data, idx: &[usize], t: &Target, features: usize, min_leaf: usize) -> Option<(f64, usize, f64)> {
    let mut total = Stats::new(width(t));
    for &i in idx {
        total.add(t, &d.y[i], d.w[i], 1.0);
    }
    let parent = total.impurity(t);
    let tol = 1e-12 * parent.abs().max(1e-300);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..features {
        order.sort_by(|a, b| d.x[*a][f].total_cmp(&d.x[*b][f]).then(a.cmp(b)));
        let mut left = Stats::new(width(t));
        let mut right = Stats {
            mass: total.mass.clone(),
            sw: total.sw,
            swy2: total.swy2.clone(),
        };
        for s in 0..order.len() - 1 {
            let i = order[s];
            left.add(t, &d.y[i], d.w[i], 1.0);
            right.add(t, &d.y[i], d.w[i], -1.0);
            let (xl, xr) = (d.x[i][f], d.x[order[s + 1]][f]);
            if xl == xr || s + 1 < min_leaf || order.len() - s - 1 < min_leaf {
                continue;
            }
            let gain = parent - left.impurity(t) - right.impurity(t);
            if gain > tol && best.is_none_or(|b| gain > b.0) {
                let mut thr = 0.5 * (xl + xr);
                if !(thr >= xl && thr < xr) {
                    thr = xl;
                }
                best = Some((gain, f, thr));
            }
        }
    }
    best
}

fn grow(d: &Data, idx: &[usize], t: &Target, features: usize, p: &TreeParams, depth: usize, simplex: bool) -> TreeNode {
    let leaf = || TreeNode::Leaf {
        value: leaf_value(d, idx, t, simplex),
    };
    if depth >= p.max_depth || idx.len() < 2 * p.min_leaf.max(1) {
        return leaf();
    }
    match best_split(d, idx, t, features, p.min_leaf.max(1)) {
        None => leaf(),
        Some((_, f, thr)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| d.x[i][f] <= thr);
            TreeNode::Internal {
                feature: f,
                threshold: thr,
                left: Box::new(grow(d, &l, t, features, p, depth + 1, simplex)),
                right: Box::new(grow(d, &r, t, features, p, depth + 1, simplex)),
            }
        }
    }
}

/// Gini CART over class labels `0..classes`.
pub fn fit_classification_tree(x: &[Vec<f64>], labels: &[usize], w: &[f64], classes: usize, p: &TreeParams) -> Result<Tree> {
    let y: Vec<Vec<f64>> = labels.iter().map(|&c| vec![c as f64]).collect();
    let features = check_data(x, &y, w)?;
    if let Some(bad) = labels.iter().find(|&&c| c >= classes) {
        return Err(domain("fit_classification_tree", format!("label {bad} outside {classes} classes")));
    }
    let d = Data { x, y: &y, w };
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(Tree {
        kind: TreeKind::Classification,
        features,
        outputs: 1,
        simplex: false,
        root: grow(&d, &idx, &Target::Class(classes), features, p, 0, false),
    })
}

/// SSE CART over vector targets; `simplex` renormalizes every leaf.
pub fn fit_regression_tree(x: &[Vec<f64>], y: &[Vec<f64>], w: &[f64], simplex: bool, p: &TreeParams) -> Result<Tree> {
    let features = check_data(x, y, w)?;
    let k = y[0].len();
    if k == 0 || y.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite())) {
        return Err(domain("fit_regression_tree", "ragged or non-finite targets"));
    }
    let d = Data { x, y, w };
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(Tree {
        kind: TreeKind::Regression,
        features,
        outputs: k,
        simplex,
        root: grow(&d, &idx, &Target::Value(k), features, p, 0, simplex),
    })
}

/// Weighted training impurity summed over leaves (Gini mass or SSE).
pub fn training_impurity(tree: &Tree, x: &[Vec<f64>], y: &[Vec<f64>], w: &[f64]) -> Result<f64> {
    let k = match tree.kind {
        TreeKind::Classification => 1 + y.iter().map(|r| r[0] as usize).max().unwrap_or(0),
        TreeKind::Regression => tree.outputs,
    };
    let t = match tree.kind {
        TreeKind::Classification => Target::Class(k),
        TreeKind::Regression => Target::Value(k),
    };
    let mut leaves: Vec<(*const TreeNode, Stats)> = Vec::new();
    for i in 0..x.len() {
        let mut node = &tree.root;
        while let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[i][*feature] <= *threshold { left } else { right };
        }
        let key = node as *const TreeNode;
        let pos = match leaves.iter().position(|(p, _)| *p == key) {
            Some(p) => p,
            None => {
                leaves.push((key, Stats::new(k)));
                leaves.len() - 1
            }
        };
        leaves[pos].1.add(&t, &y[i], w[i], 1.0);
    }
    Ok(leaves.iter().map(|(_, s)| s.impurity(&t)).sum())
}

pub fn outline(tree: &Tree, names: &[String]) -> String {
    fn walk(n: &TreeNode, names: &[String], depth: usize, out: &mut String) {
        let pad = "|   ".repeat(depth);
        match n {
            TreeNode::Leaf { value } => {
                let v: Vec<String> = value.iter().map(|x| format!("{x:.4}")).collect();
                out.push_str(&format!("{pad}-> [{}]\n", v.join(", ")));
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = names.get(*feature).cloned().unwrap_or_else(|| format!("x{feature}"));
                out.push_str(&format!("{pad}{name} <= {threshold:.6}\n"));
                walk(left, names, depth + 1, out);
                out.push_str(&format!("{pad}{name} > {threshold:.6}\n"));
                walk(right, names, depth + 1, out);
            }
        }
    }
    let mut s = String::new();
    walk(&tree.root, names, 0, &mut s);
    s
}

pub fn blade_feature_names(b: usize) -> Vec<String> {
    (0..b).map(|j| format!("temp_b{j}_k")).chain((0..b).map(|j| format!("load_b{j}_w"))).collect()
}

pub fn tower_feature_names(m: usize, n: usize) -> Vec<String> {
    (0..m)
        .map(|j| format!("cell{j}_power_w"))
        .chain((0..n).map(|j| format!("tower{j}_outlet_k")))
        .chain(std::iter::once("t_owb_k".to_string()))
        .collect()
}

/// The three distilled trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledPolicy {
    /// Cabinet `[setpoint, flow]` in agent units.
    pub cdu: Tree,
    /// Cabinet valve fractions.
    pub valves: Tree,
    /// Tower delta index.
    pub tower: Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Viper,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub weighting: Weighting,
    /// Resampled set size as a multiple of the collected set.
    pub resample_factor: f64,
    pub tree: TreeParams,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            weighting: Weighting::Viper,
            resample_factor: 1.0,
            tree: TreeParams::default(),
        }
    }
}

fn draw(d: &[ExperiencePoint], cfg: &DistillConfig, rng: &mut ChaCha8Rng) -> Result<Vec<ExperiencePoint>> {
    let size = ((d.len() as f64) * cfg.resample_factor).round().max(1.0) as usize;
    match cfg.weighting {
        Weighting::Viper => match resample(d, rng, size) {
            // All-zero weights (a uniform policy everywhere) carry no preference.
            Err(_) if d.iter().all(|p| p.weight == 0.0) => resample_uniform(d, rng, size),
            r => r,
        },
        Weighting::Uniform => resample_uniform(d, rng, size),
    }
}

/// Resample and fit the cabinet pair, valve and tower trees.
pub fn fit_distilled(d: &Experience, topo: &SystemTopology, cfg: &DistillConfig, seed: u64) -> Result<DistilledPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blade = draw(&d.blade, cfg, &mut rng)?;
    let tower = draw(&d.tower, cfg, &mut rng)?;
    let ones = |n: usize| vec![1.0; n];
    let bx: Vec<Vec<f64>> = blade.iter().map(|p| p.obs.clone()).collect();
    let pair: Vec<Vec<f64>> = blade.iter().map(|p| p.action[..2].to_vec()).collect();
    let valves: Vec<Vec<f64>> = blade.iter().map(|p| p.action[2..].to_vec()).collect();
    let tx: Vec<Vec<f64>> = tower.iter().map(|p| p.obs.clone()).collect();
    let labels: Vec<usize> = tower.iter().map(|p| p.action[0] as usize).collect();
    Ok(DistilledPolicy {
        cdu: fit_regression_tree(&bx, &pair, &ones(bx.len()), false, &cfg.tree)?,
        valves: fit_regression_tree(&bx, &valves, &ones(bx.len()), true, &cfg.tree)?,
        tower: fit_classification_tree(&tx, &labels, &ones(tx.len()), topo.ct_action_deltas.len(), &cfg.tree)?,
    })
}

pub struct TreeController {
    pub policy: DistilledPolicy,
    pub label: String,
}

impl TreeController {
    pub fn new(policy: DistilledPolicy, label: &str) -> Self {
        Self {
            policy,
            label: label.to_string(),
        }
    }
}

impl Controller for TreeController {
    fn name(&self) -> String {
        "decision_tree".into()
    }

    fn details(&self) -> String {
        self.label.clone()
    }

    fn act(&mut self, o: &StepOutcome) -> Result<Command> {
        let p = &self.policy;
        let cabinets = o
            .blade_obs
            .iter()
            .map(|obs| {
                let pair = tree_predict(&p.cdu, obs)?;
                Ok(CabinetRawAction {
                    setpoint: pair[0],
                    flow: pair[1],
                    valves: tree_predict(&p.valves, obs)?.to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let towers = o
            .ct_obs
            .iter()
            .map(|obs| {
                Ok(CtAction {
                    delta_index: tree_predict(&p.tower, obs)?[0] as usize,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Command::Agent { cabinets, towers })
    }
}

/// Per-dimension R^2 and MAE of predictions against targets. A constant
/// target dimension scores 1 when matched exactly, else 0.
pub fn r2_mae(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(domain("r2_mae", "need equal non-empty prediction and target sets"));
    }
    let k = target[0].len();
    let n = target.len() as f64;
    let mut r2 = Vec::with_capacity(k);
    let mut mae = Vec::with_capacity(k);
    for j in 0..k {
        let mean = target.iter().map(|t| t[j]).sum::<f64>() / n;
        let ss_tot: f64 = target.iter().map(|t| (t[j] - mean).powi(2)).sum();
        let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p[j] - t[j]).powi(2)).sum();
        r2.push(if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        });
        mae.push(pred.iter().zip(target).map(|(p, t)| (p[j] - t[j]).abs()).sum::<f64>() / n);
    }
    Ok((r2, mae))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFidelity {
    pub r2: Vec<f64>,
    pub mae: Vec<f64>,
    pub complexity: Complexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub weighting: Weighting,
    pub episodes: usize,
    pub avg_reward_per_cabinet: f64,
    pub avg_reward_per_tower: f64,
    pub d_blade_avg: f64,
    pub ct_avg_power_kw: f64,
    pub cdu: TreeFidelity,
    pub valves: TreeFidelity,
    /// Scored on the selected setpoint delta in kelvin.
    pub tower: TreeFidelity,
    pub tower_accuracy: f64,
}

fn fidelity(
    tree: &Tree,
    pts: &[ExperiencePoint],
    pred_map: impl Fn(&[f64]) -> Vec<f64>,
    target_map: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<TreeFidelity> {
    let pred = pts.iter().map(|p| tree_predict(tree, &p.obs).map(&pred_map)).collect::<Result<Vec<_>>>()?;
    let target: Vec<Vec<f64>> = pts.iter().map(|p| target_map(&p.action)).collect();
    let (r2, mae) = r2_mae(&pred, &target)?;
    Ok(TreeFidelity {
        r2,
        mae,
        complexity: tree.root.complexity(),
    })
}

/// Rewards from running the trees for `episodes` episodes, plus action
/// fidelity against the oracle's modal actions on `eval` (oracle-visited
/// states).
pub fn fidelity_report(
    policy: &DistilledPolicy,
    weighting: Weighting,
    eval: &Experience,
    env: &mut Environment,
    episodes: usize,
    seed: u64,
) -> Result<FidelityReport> {
    let deltas = env.topology().ct_action_deltas.clone();
    let mut logs = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut ctrl = TreeController::new(policy.clone(), "");
        logs.push(run_episode(env, &mut ctrl, episode_seed(seed, k))?);
    }
    let s = summarize(&logs, &MetricConfig::default())?;
    let correct = eval
        .tower
        .iter()
        .map(|p| tree_predict(&policy.tower, &p.obs).map(|v| (v[0] == p.action[0]) as u8 as f64))
        .sum::<Result<f64>>()?;
    Ok(FidelityReport {
        weighting,
        episodes,
        avg_reward_per_cabinet: s.avg_episode_reward_per_cabinet,
        avg_reward_per_tower: s.avg_episode_reward_per_tower,
        d_blade_avg: s.d_blade_avg,
        ct_avg_power_kw: s.ct_avg_power_kw,
        cdu: fidelity(&policy.cdu, &eval.blade, |p| p.to_vec(), |a| a[..2].to_vec())?,
        valves: fidelity(&policy.valves, &eval.blade, |p| p.to_vec(), |a| a[2..].to_vec())?,
        tower: fidelity(&policy.tower, &eval.tower, |p| vec![deltas[p[0] as usize]], |a| vec![deltas[a[0] as usize]])?,
        tower_accuracy: correct / eval.tower.len().max(1) as f64,
    })
}
