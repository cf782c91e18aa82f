//! CART trees grown level by level over presorted feature columns.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Column-major feature matrix with each column's non-missing rows
/// presorted by value. Shared by every tree trained on the same rows.
#[derive(Debug, Clone)]
pub struct Columns {
    n_rows: usize,
    /// `NaN` marks a missing value.
    values: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    missing: Vec<Vec<u32>>,
}

impl Columns {
    pub fn new(rows: &[Vec<Option<f64>>], n_features: usize) -> Self {
        let values: Vec<Vec<f64>> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f].unwrap_or(f64::NAN)).collect())
            .collect();
        let mut sorted = Vec::with_capacity(n_features);
        let mut missing = Vec::with_capacity(n_features);
        for col in &values {
            let (mut present, absent): (Vec<u32>, Vec<u32>) = (0..rows.len() as u32).partition(|&r| !col[r as usize].is_nan());
            present.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            sorted.push(present);
            missing.push(absent);
        }
        Self { n_rows: rows.len(), values, sorted, missing }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// `None` for a leaf.
    pub feature: Option<usize>,
    /// Values `<= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub missing_left: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[Option<f64>]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            let Some(f) = n.feature else {
                return n.value;
            };
            let left = match row[f] {
                Some(v) => v <= n.threshold,
                None => n.missing_left,
            };
            i = if left { n.left } else { n.right };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i].feature {
                None => 0,
                Some(_) => 1 + walk(t, t.nodes[i].left).max(walk(t, t.nodes[i].right)),
            }
        }
        walk(self, 0)
    }
}

/// Split criterion and leaf rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Per-row stats are (positive weight, negative weight); leaves hold the
    /// positive fraction.
    Gini,
    /// Per-row stats are (gradient, hessian); leaves hold the clamped
    /// Newton step.
    Newton { lambda: f64, max_step: f64 },
}

/// Fixed-point scale of the objective sums. Integer sums are exact, so a row
/// of weight `w` contributes exactly what `w` copies of it would.
const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0;

/// Sufficient statistics of a set of rows: two objective-specific sums and
/// the instance weight.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    a: i128,
    b: i128,
    pub w: f64,
}

impl Stats {
    /// One row with per-unit statistics `(a, b)` and instance weight `w`.
    pub fn weighted(a: f64, b: f64, w: f64) -> Self {
        let q = |v: f64| (v * FIXED_SCALE).round() as i128;
        if w.fract() == 0.0 && w.abs() < 9.0e15 {
            Stats { a: q(a) * w as i128, b: q(b) * w as i128, w }
        } else {
            Stats { a: q(a * w), b: q(b * w), w }
        }
    }

    pub fn a(&self) -> f64 {
        self.a as f64 / FIXED_SCALE
    }

    pub fn b(&self) -> f64 {
        self.b as f64 / FIXED_SCALE
    }
}

impl std::ops::Add for Stats {
    type Output = Stats;
    fn add(self, o: Stats) -> Stats {
        Stats { a: self.a + o.a, b: self.b + o.b, w: self.w + o.w }
    }
}

impl std::ops::Sub for Stats {
    type Output = Stats;
    fn sub(self, o: Stats) -> Stats {
        Stats { a: self.a - o.a, b: self.b - o.b, w: self.w - o.w }
    }
}

impl Objective {
    fn score(self, s: Stats) -> f64 {
        let (a, b) = (s.a(), s.b());
        match self {
            Objective::Gini => {
                let t = a + b;
                if t > 0.0 { (a * a + b * b) / t } else { 0.0 }
            }
            Objective::Newton { lambda, .. } => a * a / (b + lambda),
        }
    }

    fn leaf(self, s: Stats) -> f64 {
        let (a, b) = (s.a(), s.b());
        match self {
            Objective::Gini => {
                let t = a + b;
                if t > 0.0 { a / t } else { 0.0 }
            }
            Objective::Newton { lambda, max_step } => (-a / (b + lambda)).clamp(-max_step, max_step),
        }
    }

    fn is_pure(self, s: Stats) -> bool {
        match self {
            Objective::Gini => s.a == 0 || s.b == 0,
            Objective::Newton { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Smallest instance weight allowed in a child.
    pub min_rows: f64,
    /// Features tried per split; `None` tries all.
    pub mtry: Option<usize>,
}

const MIN_GAIN: f64 = 1e-12;
const INACTIVE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

struct Open {
    id: usize,
    depth: usize,
    total: Stats,
    features: Vec<bool>,
}

/// Grows one tree. Rows with zero weight in `stats` take no part. Returns the
/// tree and the total gain credited to each feature.
pub fn grow(cols: &Columns, stats: &[Stats], objective: Objective, params: &TreeParams, rng: &mut impl Rng) -> (Tree, Vec<f64>) {
    let p = cols.n_features();
    let mut importance = vec![0.0; p];
    let mut node_of: Vec<u32> = stats.iter().map(|s| if s.w > 0.0 { 0 } else { INACTIVE }).collect();
    let total = stats.iter().filter(|s| s.w > 0.0).fold(Stats::default(), |acc, &s| acc + s);
    let leaf = |s: Stats| Node { feature: None, threshold: 0.0, left: 0, right: 0, missing_left: false, value: objective.leaf(s) };
    let mut nodes = vec![leaf(total)];
    let mut frontier = vec![Open { id: 0, depth: 0, total, features: Vec::new() }];

    while !frontier.is_empty() {
        // decide which open nodes may split and draw their features
        for o in frontier.iter_mut() {
            let splittable = o.depth < params.max_depth && o.total.w >= 2.0 * params.min_rows && !objective.is_pure(o.total);
            o.features = vec![false; p];
            if splittable {
                let k = params.mtry.unwrap_or(p).clamp(1, p);
                if k == p {
                    o.features.iter_mut().for_each(|f| *f = true);
                } else {
                    for f in sample(rng, p, k) {
                        o.features[f] = true;
                    }
                }
            }
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut miss = vec![Stats::default(); frontier.len()];
        let mut left = vec![Stats::default(); frontier.len()];
        let mut last: Vec<f64> = vec![f64::NAN; frontier.len()];
        for f in 0..p {
            miss.iter_mut().for_each(|m| *m = Stats::default());
            left.iter_mut().for_each(|m| *m = Stats::default());
            last.iter_mut().for_each(|m| *m = f64::NAN);
            for &r in &cols.missing[f] {
                let n = node_of[r as usize];
                if n != INACTIVE && frontier[n as usize].features[f] {
                    miss[n as usize] = miss[n as usize] + stats[r as usize];
                }
            }
            let col = &cols.values[f];
            for &r in &cols.sorted[f] {
                let n = node_of[r as usize];
                if n == INACTIVE || !frontier[n as usize].features[f] {
                    continue;
                }
                let n = n as usize;
                let v = col[r as usize];
                let lv = last[n];
                if v > lv {
                    let l = left[n];
                    let r_ = frontier[n].total - miss[n] - l;
                    let missing_left = l.w >= r_.w;
                    let (lc, rc) = if missing_left { (l + miss[n], r_) } else { (l, r_ + miss[n]) };
                    if lc.w >= params.min_rows && rc.w >= params.min_rows {
                        let gain = objective.score(lc) + objective.score(rc) - objective.score(frontier[n].total);
                        if gain > MIN_GAIN && best[n].map_or(true, |b| gain > b.gain) {
                            let mut threshold = lv + (v - lv) / 2.0;
                            if threshold >= v {
                                threshold = lv;
                            }
                            best[n] = Some(Candidate { gain, feature: f, threshold, missing_left });
                        }
                    }
                }
                left[n] = left[n] + stats[r as usize];
                last[n] = v;
            }
        }

        // apply splits and route rows
        let mut child_of: Vec<Option<(usize, usize)>> = vec![None; frontier.len()];
        let mut next = Vec::new();
        for (k, o) in frontier.iter().enumerate() {
            if let Some(c) = best[k] {
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(leaf(Stats::default()));
                nodes.push(leaf(Stats::default()));
                nodes[o.id] = Node { feature: Some(c.feature), threshold: c.threshold, left: l, right: r, missing_left: c.missing_left, value: objective.leaf(o.total) };
                importance[c.feature] += c.gain;
                child_of[k] = Some((next.len(), next.len() + 1));
                next.push(Open { id: l, depth: o.depth + 1, total: Stats::default(), features: Vec::new() });
                next.push(Open { id: r, depth: o.depth + 1, total: Stats::default(), features: Vec::new() });
            }
        }
        for (r, n) in node_of.iter_mut().enumerate() {
            if *n == INACTIVE {
                continue;
            }
            let k = *n as usize;
            match (best[k], child_of[k]) {
                (Some(c), Some((cl, cr))) => {
                    let v = cols.values[c.feature][r];
                    let go_left = if v.is_nan() { c.missing_left } else { v <= c.threshold };
                    let child = if go_left { cl } else { cr };
                    next[child].total = next[child].total + stats[r];
                    *n = child as u32;
                }
                _ => *n = INACTIVE,
            }
        }
        for o in &next {
            nodes[o.id].value = objective.leaf(o.total);
        }
        frontier = next;
    }
    (Tree { nodes }, importance)
}
