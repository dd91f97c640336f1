//! Match scoring models: a bagged random forest of Gini trees and a
//! logistic-regression baseline.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};

pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("feature vector has {found} components, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("unsupported model format version {0:?}")]
    VersionMismatch(String),
    #[error("model feature names do not match this build's feature order")]
    FeatureOrderMismatch,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub rows: Vec<(FeatureVector, bool)>,
}

impl TrainingSet {
    pub fn new(rows: Vec<(FeatureVector, bool)>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|(_, y)| *y).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features examined per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 8, max_features: None, min_samples_split: 2, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self { iterations: 2000, learning_rate: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelConfig {
    Linear(LinearConfig),
    Forest(ForestConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Forest(ForestConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { p: f64 },
}

/// Axis-aligned binary tree; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(p: f64) -> Self {
        Self { nodes: vec![Node::Leaf { p }] }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p } => return p,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub max_depth: usize,
    pub max_features: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Forest(Forest),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainWarning {
    /// Only one class was present; the model is a constant.
    SingleClass { label: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub warning: Option<TrainWarning>,
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Model {
    /// Scores every input `p`. Handy when only features are needed.
    pub fn constant(p: f64) -> Self {
        Model::Forest(Forest { trees: vec![Tree::leaf(p)], max_depth: 0, max_features: 0, seed: 0 })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Forest(_) => "forest",
        }
    }

    pub fn dimension(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.dimension() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dimension(), found: x.len() });
        }
        Ok(match self {
            Model::Linear(m) => {
                let z: f64 = m.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + m.bias;
                logistic(z)
            }
            Model::Forest(f) => {
                if f.trees.is_empty() {
                    return Ok(0.0);
                }
                f.trees.iter().map(|t| t.score(x)).sum::<f64>() / f.trees.len() as f64
            }
        })
    }

    pub fn score_vector(&self, fv: &FeatureVector) -> f64 {
        self.score(fv.values()).expect("feature vectors have the model dimension")
    }
}

/// Inclusive threshold rule.
pub fn accept(score: f64, min_score: f64) -> bool {
    score >= min_score
}

pub fn train(data: &TrainingSet, config: &ModelConfig) -> Result<TrainOutcome, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let pos = data.positives();
    let single = (pos == 0 || pos == data.len()).then_some(pos > 0);
    match config {
        ModelConfig::Linear(cfg) => {
            if single.is_some() {
                return Err(ClassifierError::SingleClassData);
            }
            Ok(TrainOutcome { model: Model::Linear(train_linear(data, cfg)), warning: None })
        }
        ModelConfig::Forest(cfg) => {
            let max_features = cfg
                .max_features
                .unwrap_or_else(|| (FEATURE_COUNT as f64).sqrt().ceil() as usize)
                .clamp(1, FEATURE_COUNT);
            if let Some(label) = single {
                let p = if label { 1.0 } else { 0.0 };
                let forest = Forest { trees: vec![Tree::leaf(p)], max_depth: cfg.max_depth, max_features, seed: cfg.seed };
                return Ok(TrainOutcome {
                    model: Model::Forest(forest),
                    warning: Some(TrainWarning::SingleClass { label }),
                });
            }
            let trees = (0..cfg.n_trees)
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(t as u64);
                    grow_tree(data, cfg, max_features, &mut rng)
                })
                .collect();
            let forest = Forest { trees, max_depth: cfg.max_depth, max_features, seed: cfg.seed };
            Ok(TrainOutcome { model: Model::Forest(forest), warning: None })
        }
    }
}

fn train_linear(data: &TrainingSet, cfg: &LinearConfig) -> LinearModel {
    let n = data.len() as f64;
    let mut w = vec![0.0; FEATURE_COUNT];
    let mut bias = 0.0;
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; FEATURE_COUNT];
        let mut gb = 0.0;
        for (fv, y) in &data.rows {
            let z: f64 = w.iter().zip(fv.values()).map(|(a, b)| a * b).sum::<f64>() + bias;
            let err = logistic(z) - f64::from(u8::from(*y));
            for (g, x) in gw.iter_mut().zip(fv.values()) {
                *g += err * x;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * g / n;
        }
        bias -= cfg.learning_rate * gb / n;
    }
    LinearModel { weights: w, bias }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split_on(data: &TrainingSet, rows: &[usize], feature: usize) -> Option<SplitChoice> {
    let mut sorted: Vec<(f64, bool)> = rows.iter().map(|&r| (data.rows[r].0 .0[feature], data.rows[r].1)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len() as f64;
    let total_pos = sorted.iter().filter(|(_, y)| *y).count() as f64;
    let mut left_pos = 0.0;
    let mut best: Option<SplitChoice> = None;
    for i in 0..sorted.len() - 1 {
        left_pos += f64::from(u8::from(sorted[i].1));
        let (v, next) = (sorted[i].0, sorted[i + 1].0);
        if v == next {
            continue;
        }
        let nl = (i + 1) as f64;
        let nr = n - nl;
        let impurity = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
        if best.as_ref().is_none_or(|b| impurity < b.impurity) {
            best = Some(SplitChoice { feature, threshold: v + (next - v) / 2.0, impurity });
        }
    }
    best
}

fn grow_tree(data: &TrainingSet, cfg: &ForestConfig, max_features: usize, rng: &mut ChaCha8Rng) -> Tree {
    let n = data.len();
    let bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut nodes = Vec::new();
    grow_node(data, &bag, 0, cfg, max_features, rng, &mut nodes);
    Tree { nodes }
}

fn grow_node(
    data: &TrainingSet,
    rows: &[usize],
    depth: usize,
    cfg: &ForestConfig,
    max_features: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let at = nodes.len();
    let pos = rows.iter().filter(|&&r| data.rows[r].1).count();
    let p = pos as f64 / rows.len() as f64;
    nodes.push(Node::Leaf { p });
    if depth >= cfg.max_depth || rows.len() < cfg.min_samples_split.max(2) || pos == 0 || pos == rows.len() {
        return at;
    }

    // Sampled features first; fall back to the rest when none of them can
    // separate the rows.
    let order: Vec<usize> = sample(rng, FEATURE_COUNT, max_features).into_vec();
    let mut rest: Vec<usize> = (0..FEATURE_COUNT).filter(|f| !order.contains(f)).collect();
    rest.shuffle(rng);
    let pick = |features: &[usize]| {
        features.iter().filter_map(|&f| best_split_on(data, rows, f)).fold(None, |best: Option<SplitChoice>, c| {
            match best {
                Some(b) if b.impurity <= c.impurity => Some(b),
                _ => Some(c),
            }
        })
    };
    let Some(split) = pick(&order).or_else(|| pick(&rest)) else {
        return at;
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| data.rows[r].0 .0[split.feature] <= split.threshold);
    let left = grow_node(data, &left_rows, depth + 1, cfg, max_features, rng, nodes);
    let right = grow_node(data, &right_rows, depth + 1, cfg, max_features, rng, nodes);
    nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
    at
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    kind: String,
    feature_names: Vec<String>,
    parameters: serde_json::Value,
}

impl Model {
    pub fn to_json(&self) -> String {
        let parameters = match self {
            Model::Linear(m) => serde_json::to_value(m),
            Model::Forest(f) => serde_json::to_value(f),
        }
        .expect("model parameters serialize");
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION.to_owned(),
            kind: self.kind().to_owned(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            parameters,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ClassifierError::Parse(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::VersionMismatch(file.version));
        }
        if file.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES) {
            return Err(ClassifierError::FeatureOrderMismatch);
        }
        let parse_err = |e: serde_json::Error| ClassifierError::Parse(e.to_string());
        let model = match file.kind.as_str() {
            "linear" => {
                let m: LinearModel = serde_json::from_value(file.parameters).map_err(parse_err)?;
                if m.weights.len() != FEATURE_COUNT {
                    return Err(ClassifierError::Parse("linear model needs one weight per feature".into()));
                }
                Model::Linear(m)
            }
            "forest" => {
                let f: Forest = serde_json::from_value(file.parameters).map_err(parse_err)?;
                for t in &f.trees {
                    validate_tree(t)?;
                }
                Model::Forest(f)
            }
            other => return Err(ClassifierError::Parse(format!("unknown model kind {other:?}"))),
        };
        Ok(model)
    }
}

fn validate_tree(tree: &Tree) -> Result<(), ClassifierError> {
    let bad = |m: &str| Err(ClassifierError::Parse(m.to_owned()));
    if tree.nodes.is_empty() {
        return bad("empty tree");
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        match *node {
            Node::Leaf { p } if !(0.0..=1.0).contains(&p) => return bad("leaf probability outside [0,1]"),
            Node::Split { feature, left, right, .. } => {
                if feature >= FEATURE_COUNT {
                    return bad("split feature out of range");
                }
                // Children always follow their parent, which also rules out cycles.
                if left <= i || right <= i || left >= tree.nodes.len() || right >= tree.nodes.len() {
                    return bad("bad child index");
                }
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ClassifierError> {
    fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ClassifierError> {
    Model::from_json(&fs::read_to_string(path)?)
}
