//! CTR models over feature vectors: logistic regression, decision tree and
//! random forest, plus AUC / NDCG evaluation and ranking.

use std::collections::HashMap;
use std::io::Read;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSchema, FeatureVector};
use crate::ga::seeded_rng;

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("row {row} ({banner_id}): {message}")]
    Row {
        row: usize,
        banner_id: String,
        message: String,
    },
    #[error("split: {0}")]
    Split(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub banner_id: String,
    pub x: Vec<f64>,
    pub clicked: bool,
    pub ctr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Fingerprint of the full feature column set.
    pub fingerprint: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<Row>,
}

/// One line of a labels file. Either `is_clicked`/`ctr` or
/// `impressions`/`clicks` must be given; counts take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub banner_id: String,
    #[serde(default)]
    pub is_clicked: Option<u8>,
    #[serde(default)]
    pub ctr: Option<f64>,
    #[serde(default)]
    pub impressions: Option<u64>,
    #[serde(default)]
    pub clicks: Option<u64>,
}

impl LabelRecord {
    /// `(is_clicked, ctr)`.
    pub fn resolve(&self) -> Result<(bool, f64), String> {
        if let (Some(imp), Some(clk)) = (self.impressions, self.clicks) {
            if imp == 0 {
                return Err("impressions must be > 0".into());
            }
            if clk > imp {
                return Err("clicks exceed impressions".into());
            }
            return Ok((clk > 0, clk as f64 / imp as f64));
        }
        let ctr = self.ctr.ok_or("missing ctr (or impressions/clicks)")?;
        if !(0.0..=1.0).contains(&ctr) {
            return Err(format!("ctr {ctr} not in [0, 1]"));
        }
        let clicked = match self.is_clicked {
            Some(0) => false,
            Some(1) => true,
            Some(v) => return Err(format!("is_clicked must be 0 or 1, got {v}")),
            None => ctr > 0.0,
        };
        Ok((clicked, ctr))
    }
}

pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<LabelRecord>, RankerError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(RankerError::from))
        .collect()
}

impl Dataset {
    /// Join feature vectors with labels on banner id. Vectors without a
    /// label are an error; labels without a vector are ignored.
    pub fn join(
        schema: &FeatureSchema,
        vectors: &[(String, FeatureVector)],
        labels: &[LabelRecord],
    ) -> Result<Dataset, RankerError> {
        let Some(first) = vectors.first() else {
            return Err(RankerError::EmptyDataset);
        };
        let set = first.1.feature_set();
        let fingerprint = first.1.fingerprint();
        if first.1.schema_fingerprint != schema.fingerprint() {
            return Err(RankerError::SchemaMismatch(
                "feature vectors were built with another schema".into(),
            ));
        }
        let by_id: HashMap<&str, &LabelRecord> =
            labels.iter().map(|l| (l.banner_id.as_str(), l)).collect();
        let mut rows = Vec::with_capacity(vectors.len());
        for (i, (id, v)) in vectors.iter().enumerate() {
            let err = |message: String| RankerError::Row {
                row: i,
                banner_id: id.clone(),
                message,
            };
            if v.fingerprint() != fingerprint {
                return Err(err("feature set differs from the first row".into()));
            }
            let label = by_id
                .get(id.as_str())
                .ok_or_else(|| err("no label".into()))?;
            let (clicked, ctr) = label.resolve().map_err(err)?;
            rows.push(Row {
                banner_id: id.clone(),
                x: v.full(),
                clicked,
                ctr,
            });
        }
        let ds = Dataset {
            fingerprint,
            feature_names: set.names(schema),
            rows,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn check(&self) -> Result<(), RankerError> {
        for (i, r) in self.rows.iter().enumerate() {
            let err = |message: &str| {
                Err(RankerError::Row {
                    row: i,
                    banner_id: r.banner_id.clone(),
                    message: message.into(),
                })
            };
            if r.x.len() != self.n_features() {
                return err("feature count differs from the header");
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return err("non-finite feature");
            }
            if !(0.0..=1.0).contains(&r.ctr) {
                return err("ctr not in [0, 1]");
            }
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            fingerprint: self.fingerprint.clone(),
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Seeded shuffle, then the first `round(n * train_fraction)` rows train.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), RankerError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(RankerError::Split(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = ds.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(RankerError::Split(format!(
            "{n} rows cannot fill both sides at {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    Ok((ds.subset(&idx[..n_train]), ds.subset(&idx[n_train..])))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    /// Inverse class frequency: `n / (2 n_c)`.
    #[default]
    Balanced,
    Manual {
        negative: f64,
        positive: f64,
    },
}

impl ClassWeight {
    fn weights(&self, labels: &[bool]) -> Result<(f64, f64), RankerError> {
        let pos = labels.iter().filter(|&&c| c).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(RankerError::SingleClass);
        }
        Ok(match *self {
            ClassWeight::None => (1.0, 1.0),
            ClassWeight::Balanced => {
                let n = labels.len() as f64;
                (n / (2.0 * neg as f64), n / (2.0 * pos as f64))
            }
            ClassWeight::Manual { negative, positive } => {
                if !(negative > 0.0
                    && positive > 0.0
                    && negative.is_finite()
                    && positive.is_finite())
                {
                    return Err(RankerError::InvalidSpec(
                        "class weights must be finite and > 0".into(),
                    ));
                }
                (negative, positive)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            max_epochs: 2000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_split: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `round(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    #[serde(flatten)]
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            features_per_split: None,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression(LrParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LogisticRegression(_) => "logistic_regression",
            ModelKind::DecisionTree(_) => "decision_tree",
            ModelKind::RandomForest(_) => "random_forest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub class_weight: ClassWeight,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn logistic() -> Self {
        Self::from_kind(ModelKind::LogisticRegression(LrParams::default()))
    }

    pub fn tree() -> Self {
        Self::from_kind(ModelKind::DecisionTree(TreeParams::default()))
    }

    pub fn forest() -> Self {
        Self::from_kind(ModelKind::RandomForest(ForestParams::default()))
    }

    pub fn from_kind(kind: ModelKind) -> Self {
        Self {
            kind,
            class_weight: ClassWeight::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self, n_features: usize) -> Result<(), RankerError> {
        let bad = |m: &str| Err(RankerError::InvalidSpec(m.into()));
        match self.kind {
            ModelKind::LogisticRegression(p) => {
                if !(p.learning_rate > 0.0 && p.l2 >= 0.0 && p.tolerance > 0.0 && p.max_epochs > 0)
                {
                    return bad("learning_rate, tolerance and max_epochs must be > 0, l2 >= 0");
                }
            }
            ModelKind::DecisionTree(t) => {
                if t.min_samples_split < 2 {
                    return bad("min_samples_split must be >= 2");
                }
            }
            ModelKind::RandomForest(f) => {
                if f.n_trees == 0 || f.tree.min_samples_split < 2 {
                    return bad("n_trees must be > 0 and min_samples_split >= 2");
                }
                if let Some(m) = f.features_per_split {
                    if m == 0 || m > n_features {
                        return bad("features_per_split must lie in 1..=feature count");
                    }
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression on weighted-standardised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Coefficients on the standardised features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
}

impl Logistic {
    pub fn score(&self, x: &[f64]) -> f64 {
        let z = self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>();
        sigmoid(z)
    }

    fn fit(xs: &[&[f64]], ys: &[bool], ws: &[f64], p: &LrParams) -> Logistic {
        let d = xs.first().map_or(0, |x| x.len());
        let total: f64 = ws.iter().sum();
        let mut mean = vec![0.0; d];
        for (x, w) in xs.iter().zip(ws) {
            for j in 0..d {
                mean[j] += w * x[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut scale = vec![0.0; d];
        for (x, w) in xs.iter().zip(ws) {
            for j in 0..d {
                scale[j] += w * (x[j] - mean[j]).powi(2);
            }
        }
        for s in &mut scale {
            let sd = (*s / total).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| (0..d).map(|j| (x[j] - mean[j]) / scale[j]).collect())
            .collect();

        let mut weights = vec![0.0; d];
        let mut bias = 0.0;
        let mut epochs = 0;
        let mut grad = vec![0.0; d];
        while epochs < p.max_epochs {
            epochs += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for ((zi, &y), &w) in z.iter().zip(ys).zip(ws) {
                let s = bias + zi.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
                let r = w * (sigmoid(s) - f64::from(y)) / total;
                grad_b += r;
                for (g, a) in grad.iter_mut().zip(zi) {
                    *g += r * a;
                }
            }
            for (g, w) in grad.iter_mut().zip(&weights) {
                *g += p.l2 * w;
            }
            let max_grad = grad.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
            if max_grad < p.tolerance {
                break;
            }
            bias -= p.learning_rate * grad_b;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= p.learning_rate * g;
            }
        }
        Logistic {
            mean,
            scale,
            weights,
            bias,
            epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree stored as an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Weighted impurity decrease accumulated per feature.
    pub gains: Vec<f64>,
}

impl Tree {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

struct TreeBuilder<'a, R> {
    xs: &'a [&'a [f64]],
    ys: &'a [bool],
    ws: &'a [f64],
    params: TreeParams,
    /// Candidate features per node; `None` tries all of them.
    per_split: Option<usize>,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

fn gini(w: f64, pos: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = pos / w;
    2.0 * p * (1.0 - p)
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let (w, pos) = idx.iter().fold((0.0, 0.0), |(w, p), &i| {
            (
                w + self.ws[i],
                p + if self.ys[i] { self.ws[i] } else { 0.0 },
            )
        });
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: if w > 0.0 { pos / w } else { 0.0 },
        });
        let pure = pos <= 0.0 || pos >= w;
        if depth >= self.params.max_depth || idx.len() < self.params.min_samples_split || pure {
            return me;
        }
        let Some((feature, threshold, gain)) = self.best_split(idx, w, pos) else {
            return me;
        };
        self.gains[feature] += gain;
        let cut = partition(idx, |&i| self.xs[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn candidates(&mut self) -> Vec<usize> {
        let d = self.xs[0].len();
        match (self.per_split, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = index::sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], w: f64, pos: f64) -> Option<(usize, f64, f64)> {
        let parent = w * gini(w, pos);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for f in self.candidates() {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.xs[i][f], i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut wl, mut pl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k].1;
                wl += self.ws[i];
                if self.ys[i] {
                    pl += self.ws[i];
                }
                let (lo, hi) = (order[k].0, order[k + 1].0);
                if lo == hi {
                    continue;
                }
                let (wr, pr) = (w - wl, pos - pl);
                let gain = parent - wl * gini(wl, pl) - wr * gini(wr, pr);
                if gain > best.map_or(1e-12 * w, |b| b.2) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }
}

/// Stable-order-agnostic in-place partition; returns the count satisfying `pred`.
fn partition(v: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut k = 0;
    for i in 0..v.len() {
        if pred(&v[i]) {
            v.swap(i, k);
            k += 1;
        }
    }
    k
}

fn fit_tree<R: Rng>(
    xs: &[&[f64]],
    ys: &[bool],
    ws: &[f64],
    idx: &mut [usize],
    params: TreeParams,
    per_split: Option<usize>,
    rng: Option<&mut R>,
) -> Tree {
    let mut b = TreeBuilder {
        xs,
        ys,
        ws,
        params,
        per_split,
        rng,
        nodes: Vec::new(),
        gains: vec![0.0; xs[0].len()],
    };
    b.grow(idx, 0);
    Tree {
        nodes: b.nodes,
        gains: b.gains,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Params {
    Logistic(Logistic),
    Tree(Tree),
    Forest { trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub fingerprint: String,
    pub feature_names: Vec<String>,
    pub params: Params,
}

pub fn train(ds: &Dataset, spec: &ModelSpec) -> Result<TrainedModel, RankerError> {
    if ds.is_empty() {
        return Err(RankerError::EmptyDataset);
    }
    ds.check()?;
    let d = ds.n_features();
    if d == 0 {
        return Err(RankerError::InvalidSpec("dataset has no features".into()));
    }
    spec.check(d)?;
    let xs: Vec<&[f64]> = ds.rows.iter().map(|r| r.x.as_slice()).collect();
    let ys: Vec<bool> = ds.rows.iter().map(|r| r.clicked).collect();
    let (wn, wp) = spec.class_weight.weights(&ys)?;
    let ws: Vec<f64> = ys.iter().map(|&y| if y { wp } else { wn }).collect();
    let n = ds.len();

    let params = match spec.kind {
        ModelKind::LogisticRegression(p) => Params::Logistic(Logistic::fit(&xs, &ys, &ws, &p)),
        ModelKind::DecisionTree(t) => {
            let mut idx: Vec<usize> = (0..n).collect();
            Params::Tree(fit_tree::<crate::ga::Rng64>(
                &xs, &ys, &ws, &mut idx, t, None, None,
            ))
        }
        ModelKind::RandomForest(f) => {
            let m = f
                .features_per_split
                .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).clamp(1, d));
            let trees = (0..f.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = seeded_rng(spec.seed);
                    rng.set_stream(t as u64 + 1);
                    let mut idx: Vec<usize> = if f.bootstrap {
                        (0..n).map(|_| rng.random_range(0..n)).collect()
                    } else {
                        (0..n).collect()
                    };
                    fit_tree(&xs, &ys, &ws, &mut idx, f.tree, Some(m), Some(&mut rng))
                })
                .collect();
            Params::Forest { trees }
        }
    };
    Ok(TrainedModel {
        spec: *spec,
        fingerprint: ds.fingerprint.clone(),
        feature_names: ds.feature_names.clone(),
        params,
    })
}

impl TrainedModel {
    /// Score a raw feature row (no fingerprint check).
    pub fn score_row(&self, x: &[f64]) -> Result<f64, RankerError> {
        if x.len() != self.feature_names.len() {
            return Err(RankerError::SchemaMismatch(format!(
                "row has {} features, model expects {}",
                x.len(),
                self.feature_names.len()
            )));
        }
        Ok(match &self.params {
            Params::Logistic(l) => l.score(x),
            Params::Tree(t) => t.score(x),
            Params::Forest { trees } => {
                trees.iter().map(|t| t.score(x)).sum::<f64>() / trees.len() as f64
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, RankerError> {
        serde_json::from_slice(bytes)
            .map_err(|e| RankerError::InvalidSpec(format!("unreadable model artifact: {e}")))
    }
}

pub fn predict_ctr(model: &TrainedModel, vec: &FeatureVector) -> Result<f64, RankerError> {
    if vec.fingerprint() != model.fingerprint {
        return Err(RankerError::SchemaMismatch(format!(
            "vector fingerprint {} differs from model fingerprint {}",
            vec.fingerprint(),
            model.fingerprint
        )));
    }
    model.score_row(&vec.full())
}

/// Items ordered by descending predicted CTR; ties by ascending id.
pub fn rank(
    model: &TrainedModel,
    items: &[(String, FeatureVector)],
) -> Result<Vec<(String, f64)>, RankerError> {
    let mut scored = items
        .iter()
        .map(|(id, v)| predict_ctr(model, v).map(|s| (id.clone(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

/// Mann-Whitney AUC by rank summation with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, RankerError> {
    if scores.len() != labels.len() {
        return Err(RankerError::Metric(
            "scores and labels differ in length".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(RankerError::Metric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RankerError::Metric("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

fn dcg(order: &[usize], rel: &[f64]) -> f64 {
    order
        .iter()
        .enumerate()
        .map(|(i, &k)| rel[k] / ((i + 2) as f64).log2())
        .sum()
}

/// Linear-gain NDCG of the order induced by `predicted` (ties by index).
pub fn ndcg(predicted: &[f64], relevance: &[f64]) -> Result<f64, RankerError> {
    if predicted.len() != relevance.len() {
        return Err(RankerError::Metric(
            "scores and relevances differ in length".into(),
        ));
    }
    if predicted.iter().chain(relevance).any(|v| v.is_nan()) || relevance.iter().any(|r| *r < 0.0) {
        return Err(RankerError::Metric(
            "NaN score or negative relevance".into(),
        ));
    }
    if !relevance.iter().any(|r| *r > 0.0) {
        return Err(RankerError::Metric(
            "ndcg needs some positive relevance".into(),
        ));
    }
    let mut by_pred: Vec<usize> = (0..predicted.len()).collect();
    by_pred.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]).then(a.cmp(&b)));
    let mut ideal: Vec<usize> = (0..relevance.len()).collect();
    ideal.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
    Ok((dcg(&by_pred, relevance) / dcg(&ideal, relevance)).min(1.0))
}

/// Per-feature importance normalised to sum one, most important first.
/// Trees use total weighted Gini decrease (averaged over a forest's
/// per-tree normalised values); logistic regression uses |coefficient| on
/// standardised features. All zeros when the model never splits.
pub fn feature_importance(model: &TrainedModel) -> Vec<(String, f64)> {
    let normalise = |v: &[f64]| -> Vec<f64> {
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter().map(|x| x / s).collect()
        } else {
            vec![0.0; v.len()]
        }
    };
    let raw = match &model.params {
        Params::Logistic(l) => normalise(&l.weights.iter().map(|w| w.abs()).collect::<Vec<_>>()),
        Params::Tree(t) => normalise(&t.gains),
        Params::Forest { trees } => {
            let mut acc = vec![0.0; model.feature_names.len()];
            for t in trees {
                for (a, g) in acc.iter_mut().zip(normalise(&t.gains)) {
                    *a += g;
                }
            }
            normalise(&acc)
        }
    };
    let mut out: Vec<(String, f64)> = model.feature_names.iter().cloned().zip(raw).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub auc: f64,
    pub ndcg: f64,
    pub n_test: usize,
    pub n_positive: usize,
    pub fingerprint: String,
}

pub fn evaluate(model: &TrainedModel, test: &Dataset) -> Result<EvalReport, RankerError> {
    if test.is_empty() {
        return Err(RankerError::EmptyDataset);
    }
    if test.fingerprint != model.fingerprint {
        return Err(RankerError::SchemaMismatch(
            "test set was built with another feature set".into(),
        ));
    }
    let scores = test
        .rows
        .iter()
        .map(|r| model.score_row(&r.x))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<bool> = test.rows.iter().map(|r| r.clicked).collect();
    let ctr: Vec<f64> = test.rows.iter().map(|r| r.ctr).collect();
    Ok(EvalReport {
        model: model.spec.kind.name().into(),
        auc: auc(&scores, &labels)?,
        ndcg: ndcg(&scores, &ctr)?,
        n_test: test.len(),
        n_positive: labels.iter().filter(|&&l| l).count(),
        fingerprint: model.fingerprint.clone(),
    })
}
