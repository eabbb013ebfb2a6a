//! Second-order gradient boosted regression trees.
//!
//! Trees grow level by level with exact greedy split enumeration over the
//! sorted values of every feature. A split is kept only if its regularised
//! gain
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - (G_L+G_R)^2/(H_L+H_R+lambda) ] - gamma
//! ```
//!
//! is positive, and leaves carry `w = -G/(H+lambda)`. Squared error is used for
//! regression and softmax cross-entropy (one tree per class per round) for
//! classification. Nothing here is random, so a fitted model depends only on
//! its inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// Reserved for row/column subsampling; exact enumeration ignores it.
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_samples_leaf: 5,
            lambda: 1.0,
            gamma: 0.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OspError::InvalidConfig(msg));
        if self.rounds < 1 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if self.max_depth < 1 {
            return bad("max depth must be >= 1".into());
        }
        if self.min_samples_leaf < 1 {
            return bad("min samples per leaf must be >= 1".into());
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    /// Classes are labelled `1..=num_classes`.
    Multiclass {
        num_classes: usize,
    },
    Regression,
}

impl Objective {
    fn outputs(&self) -> usize {
        match self {
            Objective::Multiclass { num_classes } => *num_classes,
            Objective::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Direction taken by NaN inputs.
        default_left: bool,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Flat node array; node 0 is the root and children always follow parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf_weight(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() {
                        *default_left
                    } else {
                        v <= *threshold
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    fn validate(&self, num_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(OspError::Model("empty tree".into()));
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { weight } if !weight.is_finite() => {
                    return Err(OspError::Model(format!(
                        "non-finite leaf weight at node {i}"
                    )));
                }
                Node::Leaf { .. } => {}
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= num_features {
                        return Err(OspError::Model(format!(
                            "node {i} splits on unknown feature {feature}"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(OspError::Model(format!("node {i} has a NaN threshold")));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(OspError::Model(format!("node {i} has invalid child {c}")));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(OspError::Model(
                "tree nodes do not form a single binary tree".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub objective: Objective,
    pub params: GbdtParams,
    pub feature_names: Vec<String>,
    /// One entry per output (class logits start at zero, regression at the target mean).
    pub base_score: Vec<f64>,
    /// `trees[round][output]`.
    pub trees: Vec<Vec<RegressionTree>>,
    /// Total realised split gain per feature.
    pub importances: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

struct Level {
    /// Node index in the tree under construction.
    node: usize,
    grad: f64,
    hess: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Scan {
    grad: f64,
    hess: f64,
    count: usize,
    last: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

/// Midpoint strictly below `hi`, so `x <= t` separates `lo` from `hi`.
fn split_point(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Column-major view with one presorted sample order per feature.
struct Columns {
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Columns {
    fn new(x: &[Vec<f64>], width: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..width)
            .map(|f| x.iter().map(|row| row[f]).collect())
            .collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<usize> = (0..c.len()).collect();
                idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
                idx
            })
            .collect();
        Self { cols, order }
    }
}

fn grow_tree(
    data: &Columns,
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
    importances: &mut [f64],
) -> (RegressionTree, Vec<usize>) {
    let n = grad.len();
    let lambda = params.lambda;
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    // node of every sample; all start at the root
    let mut node_of = vec![0usize; n];
    let mut level = vec![Level {
        node: 0,
        grad: grad.iter().sum(),
        hess: hess.iter().sum(),
        count: n,
    }];

    for depth in 0..=params.max_depth {
        let mut slot_of_node = BTreeMap::new();
        for (slot, l) in level.iter().enumerate() {
            slot_of_node.insert(l.node, slot);
        }
        let mut best: Vec<Option<Candidate>> = vec![None; level.len()];

        if depth < params.max_depth {
            for (f, order) in data.order.iter().enumerate() {
                let col = &data.cols[f];
                let mut scans: Vec<Scan> = level
                    .iter()
                    .map(|_| Scan {
                        grad: 0.0,
                        hess: 0.0,
                        count: 0,
                        last: f64::NEG_INFINITY,
                    })
                    .collect();
                for &i in order {
                    let Some(&slot) = slot_of_node.get(&node_of[i]) else {
                        continue;
                    };
                    let v = col[i];
                    let s = &mut scans[slot];
                    let total = &level[slot];
                    if s.count >= params.min_samples_leaf
                        && total.count - s.count >= params.min_samples_leaf
                        && v > s.last
                    {
                        let (gl, hl) = (s.grad, s.hess);
                        let (gr, hr) = (total.grad - gl, total.hess - hl);
                        let gain = 0.5
                            * (score(gl, hl, lambda) + score(gr, hr, lambda)
                                - score(total.grad, total.hess, lambda))
                            - params.gamma;
                        if best[slot].is_none_or(|b| gain > b.gain) {
                            best[slot] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: split_point(s.last, v),
                            });
                        }
                    }
                    s.grad += grad[i];
                    s.hess += hess[i];
                    s.count += 1;
                    s.last = v;
                }
            }
        }

        // children accumulate sums in sample-index order
        let mut next: Vec<Level> = Vec::new();
        let mut child_of: BTreeMap<usize, (usize, usize, Candidate)> = BTreeMap::new();
        for (slot, l) in level.iter().enumerate() {
            match best[slot] {
                Some(c) if c.gain > 0.0 => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes[l.node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        default_left: true,
                        left,
                        right: left + 1,
                        gain: c.gain,
                    };
                    importances[c.feature] += c.gain;
                    child_of.insert(l.node, (left, left + 1, c));
                }
                _ => {
                    nodes[l.node] = Node::Leaf {
                        weight: leaf_value(l.grad, l.hess, lambda),
                    };
                }
            }
        }
        if child_of.is_empty() {
            break;
        }
        let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for i in 0..n {
            if let Some(&(left, right, c)) = child_of.get(&node_of[i]) {
                let child = if data.cols[c.feature][i] <= c.threshold {
                    left
                } else {
                    right
                };
                node_of[i] = child;
                let e = sums.entry(child).or_insert((0.0, 0.0, 0));
                e.0 += grad[i];
                e.1 += hess[i];
                e.2 += 1;
            }
        }
        for (node, (g, h, count)) in sums {
            next.push(Level {
                node,
                grad: g,
                hess: h,
                count,
            });
        }
        level = next;
    }
    (RegressionTree { nodes }, node_of)
}

fn leaf_weights_for(tree: &RegressionTree, node_of: &[usize]) -> Vec<f64> {
    node_of
        .iter()
        .map(|&nd| match tree.nodes[nd] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("samples always end in leaves"),
        })
        .collect()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn training_loss(objective: &Objective, raw: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match objective {
        Objective::Regression => {
            raw.iter()
                .zip(y)
                .map(|(r, t)| (r[0] - t).powi(2))
                .sum::<f64>()
                / n
        }
        Objective::Multiclass { .. } => {
            raw.iter()
                .zip(y)
                .map(|(r, &t)| {
                    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + r.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                    lse - r[t as usize - 1]
                })
                .sum::<f64>()
                / n
        }
    }
}

fn check_inputs(
    x: &[Vec<f64>],
    y: &[f64],
    objective: &Objective,
    feature_names: &[String],
) -> Result<()> {
    if x.is_empty() {
        return Err(OspError::Training("empty feature matrix".into()));
    }
    if x.len() != y.len() {
        return Err(OspError::LengthMismatch(x.len(), y.len()));
    }
    let width = feature_names.len();
    if let Some(r) = x.iter().position(|row| row.len() != width) {
        return Err(OspError::Training(format!(
            "row {r} has {} columns, expected {width}",
            x[r].len()
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(OspError::Training(
            "feature matrix contains non-finite values".into(),
        ));
    }
    match objective {
        Objective::Multiclass { num_classes } => {
            if *num_classes < 2 {
                return Err(OspError::Training(
                    "multiclass needs at least 2 classes".into(),
                ));
            }
            if let Some(bad) = y
                .iter()
                .find(|&&t| t.fract() != 0.0 || t < 1.0 || t > *num_classes as f64)
            {
                return Err(OspError::Training(format!(
                    "class label {bad} outside 1..={num_classes}"
                )));
            }
        }
        Objective::Regression => {
            if y.iter().any(|t| !t.is_finite()) {
                return Err(OspError::Training("non-finite regression target".into()));
            }
        }
    }
    Ok(())
}

impl GbdtModel {
    /// Fits a boosted ensemble. `x` is row-major with one column per name.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        objective: Objective,
        params: &GbdtParams,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        Self::fit_traced(x, y, objective, params, feature_names).map(|(m, _)| m)
    }

    /// Like [`GbdtModel::fit`] but also returns the training loss after every
    /// round (squared error or mean log-loss).
    pub fn fit_traced(
        x: &[Vec<f64>],
        y: &[f64],
        objective: Objective,
        params: &GbdtParams,
        feature_names: Vec<String>,
    ) -> Result<(Self, Vec<f64>)> {
        params.validate()?;
        check_inputs(x, y, &objective, &feature_names)?;
        let n = y.len();
        let outputs = objective.outputs();
        let data = Columns::new(x, feature_names.len());
        let base_score = match objective {
            Objective::Regression => vec![y.iter().sum::<f64>() / n as f64],
            Objective::Multiclass { .. } => vec![0.0; outputs],
        };
        let mut raw: Vec<Vec<f64>> = vec![base_score.clone(); n];
        let mut importances = vec![0.0; feature_names.len()];
        let mut trees = Vec::with_capacity(params.rounds);
        let mut losses = Vec::with_capacity(params.rounds);

        for _ in 0..params.rounds {
            let mut round = Vec::with_capacity(outputs);
            let mut steps: Vec<Vec<f64>> = Vec::with_capacity(outputs);
            match objective {
                Objective::Regression => {
                    let grad: Vec<f64> = raw.iter().zip(y).map(|(r, t)| r[0] - t).collect();
                    let hess = vec![1.0; n];
                    let (tree, node_of) = grow_tree(&data, &grad, &hess, params, &mut importances);
                    steps.push(leaf_weights_for(&tree, &node_of));
                    round.push(tree);
                }
                Objective::Multiclass { .. } => {
                    let probs: Vec<Vec<f64>> = raw.iter().map(|r| softmax(r)).collect();
                    for c in 0..outputs {
                        let target = (c + 1) as f64;
                        let grad: Vec<f64> = probs
                            .iter()
                            .zip(y)
                            .map(|(p, &t)| p[c] - if t == target { 1.0 } else { 0.0 })
                            .collect();
                        let hess: Vec<f64> = probs.iter().map(|p| p[c] * (1.0 - p[c])).collect();
                        let (tree, node_of) =
                            grow_tree(&data, &grad, &hess, params, &mut importances);
                        steps.push(leaf_weights_for(&tree, &node_of));
                        round.push(tree);
                    }
                }
            }
            for (i, r) in raw.iter_mut().enumerate() {
                for (c, step) in steps.iter().enumerate() {
                    r[c] += params.learning_rate * step[i];
                }
            }
            trees.push(round);
            losses.push(training_loss(&objective, &raw, y));
        }

        Ok((
            Self {
                format_version: MODEL_FORMAT_VERSION,
                objective,
                params: *params,
                feature_names,
                base_score,
                trees,
                importances,
                metadata: BTreeMap::new(),
            },
            losses,
        ))
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_features() {
            return Err(OspError::FeatureMismatch(format!(
                "model expects {} features, got {}",
                self.num_features(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Raw additive scores: one per class (logits) or a single regression value.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut out = self.base_score.clone();
        for round in &self.trees {
            for (c, tree) in round.iter().enumerate() {
                out[c] += self.params.learning_rate * tree.leaf_weight(x);
            }
        }
        Ok(out)
    }

    /// Regression value, or softmax class probabilities for multiclass.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.predict_scores(x)?;
        Ok(match self.objective {
            Objective::Regression => scores,
            Objective::Multiclass { .. } => softmax(&scores),
        })
    }

    /// Predicted class label (1-based); lowest class wins ties.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_raw(x)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best + 1)
    }

    /// Features ranked by total gain, descending; ties keep feature order.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.importances.iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    /// Structural checks used after deserialisation.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let outputs = self.objective.outputs();
        if let Objective::Multiclass { num_classes } = self.objective {
            if num_classes < 2 {
                return Err(OspError::Model(
                    "multiclass model with fewer than 2 classes".into(),
                ));
            }
        }
        if self.base_score.len() != outputs {
            return Err(OspError::Model(format!(
                "base_score has {} entries, expected {outputs}",
                self.base_score.len()
            )));
        }
        if self.importances.len() != self.num_features() {
            return Err(OspError::Model(
                "importances do not match feature count".into(),
            ));
        }
        if self.trees.len() != self.params.rounds {
            return Err(OspError::Model(format!(
                "{} rounds of trees, params say {}",
                self.trees.len(),
                self.params.rounds
            )));
        }
        for round in &self.trees {
            if round.len() != outputs {
                return Err(OspError::Model(format!(
                    "round holds {} trees, expected {outputs}",
                    round.len()
                )));
            }
            for tree in round {
                tree.validate(self.num_features())?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)
            .map_err(|e| OspError::Model(format!("schema error: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(OspError::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        model.validate()?;
        Ok(model)
    }
}
