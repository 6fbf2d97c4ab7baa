//! Metrics, confusion matrices, random-forest permutation importance and
//! evaluation reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CLIP_FEATURE_DIM, CLIP_FEATURE_NAMES};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::LengthMismatch(a, b));
    }
    Ok(())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / targets.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Recall per true class; `None` for classes with no samples.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }

    /// Plain-text table with a header row of predicted classes.
    pub fn to_text(&self) -> String {
        let c = self.num_classes();
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(4);
        let mut s = format!("{:>w$}", "t\\p", w = 5);
        for j in 0..c {
            let _ = write!(s, " {:>width$}", j);
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{i:>5}");
            for v in row {
                let _ = write!(s, " {v:>width$}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    check_lengths(predictions.len(), labels.len())?;
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        for v in [p, l] {
            if v >= num_classes {
                return Err(Error::OutOfRange {
                    value: v,
                    classes: num_classes,
                });
            }
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Random forest settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features tried per split; `None` means `round(sqrt(width))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 500,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned classification tree grown to purity with Gini splits.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// `value(f)` returns feature `f` of the row being classified.
    fn predict_with(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value(feature) <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        self.predict_with(|f| row[f])
    }

    fn uses(&self) -> Vec<bool> {
        let width = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(feature + 1),
                Node::Leaf(_) => None,
            })
            .max()
            .unwrap_or(0);
        let mut used = vec![false; width];
        for n in &self.nodes {
            if let Node::Split { feature, .. } = n {
                used[*feature] = true;
            }
        }
        used
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

fn gini_sum(counts: &[usize], n: usize) -> f64 {
    // n * gini, so weighted child impurities add directly.
    if n == 0 {
        return 0.0;
    }
    let sq: usize = counts.iter().map(|c| c * c).sum();
    n as f64 - sq as f64 / n as f64
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl Grower<'_> {
    fn best_split(&self, idx: &[usize], feature: usize, parent: &[usize]) -> Option<(f64, f64)> {
        let mut order: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| (self.x[i][feature], self.y[i]))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = order.len();
        let mut left = vec![0usize; self.classes];
        let mut right = parent.to_vec();
        let mut best: Option<(f64, f64)> = None;
        for k in 0..n - 1 {
            left[order[k].1] += 1;
            right[order[k].1] -= 1;
            if order[k].0 == order[k + 1].0 {
                continue;
            }
            let score = gini_sum(&left, k + 1) + gini_sum(&right, n - k - 1);
            if best.is_none_or(|b| score < b.0) {
                let (a, b) = (order[k].0, order[k + 1].0);
                let mid = 0.5 * (a + b);
                best = Some((score, if mid < b { mid } else { a }));
            }
        }
        best
    }

    fn grow<R: Rng>(&mut self, idx: Vec<usize>, rng: &mut R) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));
        if idx.len() < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
            return id;
        }
        let width = self.x[0].len();
        let mut features: Vec<usize> = (0..width).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        // Try mtry features; keep drawing only while no feature can split.
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((score, threshold)) = self.best_split(&idx, f, &counts) {
                if best.is_none_or(|b| score < b.0) {
                    best = Some((score, f, threshold));
                }
            }
        }
        // Grown to purity: zero-gain splits are still taken.
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub num_classes: usize,
    /// Out-of-bag sample indices of each tree.
    pub oob: Vec<Vec<usize>>,
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0xD129_2B5C_3A8F_1E47)
        .wrapping_add(t as u64 + 1)
}

fn validate_table(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    check_lengths(x.len(), y.len())?;
    let width = x[0].len();
    if width == 0 || x.iter().any(|r| r.len() != width) {
        return Err(Error::ShapeMismatch(
            "feature rows must share a non-zero width".into(),
        ));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch(
            "feature table contains non-finite values".into(),
        ));
    }
    Ok(width)
}

impl RandomForest {
    /// Bootstrap-aggregated trees; tree `t` uses its own seed derived from `cfg.seed`.
    pub fn fit(x: &[Vec<f64>], y: &[usize], cfg: &ForestConfig) -> Result<Self> {
        let width = validate_table(x, y)?;
        if cfg.trees == 0 {
            return Err(Error::InvalidConfig(
                "forest needs at least one tree".into(),
            ));
        }
        let classes = y.iter().max().map_or(1, |m| m + 1);
        let mtry = cfg
            .mtry
            .unwrap_or_else(|| (width as f64).sqrt().round() as usize)
            .clamp(1, width);
        let n = x.len();
        let grown: Vec<(DecisionTree, Vec<usize>)> = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, t));
                let mut in_bag = vec![false; n];
                let sample: Vec<usize> = (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect();
                let mut g = Grower {
                    x,
                    y,
                    classes,
                    mtry,
                    nodes: Vec::new(),
                };
                g.grow(sample, &mut rng);
                let oob = (0..n).filter(|&i| !in_bag[i]).collect();
                (DecisionTree { nodes: g.nodes }, oob)
            })
            .collect();
        let (trees, oob) = grown.into_iter().unzip();
        Ok(RandomForest {
            trees,
            num_classes: classes,
            oob,
        })
    }

    /// Majority vote, ties to the lower class.
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.num_classes];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        majority(&votes)
    }

    /// Mean over trees of the increase in each tree's out-of-bag error
    /// when one feature's out-of-bag values are permuted, in feature order.
    /// Scores can be negative.
    pub fn permutation_importance(
        &self,
        x: &[Vec<f64>],
        y: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let width = validate_table(x, y)?;
        let per_tree: Vec<Option<Vec<f64>>> = self
            .trees
            .par_iter()
            .zip(&self.oob)
            .enumerate()
            .map(|(t, (tree, oob))| {
                if oob.is_empty() {
                    return None;
                }
                let errors = |value: &dyn Fn(usize, usize) -> f64| {
                    oob.iter()
                        .enumerate()
                        .filter(|&(k, &i)| tree.predict_with(|f| value(k, f)) != y[i])
                        .count() as f64
                        / oob.len() as f64
                };
                let base = errors(&|k, f| x[oob[k]][f]);
                let used = tree.uses();
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed ^ 0xA5A5_5A5A, t));
                let mut out = vec![0.0; width];
                for (j, slot) in out.iter_mut().enumerate() {
                    let mut perm: Vec<usize> = (0..oob.len()).collect();
                    perm.shuffle(&mut rng);
                    if !used.get(j).copied().unwrap_or(false) {
                        continue;
                    }
                    let permuted = errors(&|k, f| {
                        if f == j {
                            x[oob[perm[k]]][f]
                        } else {
                            x[oob[k]][f]
                        }
                    });
                    *slot = permuted - base;
                }
                Some(out)
            })
            .collect();
        let counted: Vec<Vec<f64>> = per_tree.into_iter().flatten().collect();
        if counted.is_empty() {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: x.len(),
            });
        }
        let mut mean = vec![0.0; width];
        for row in &counted {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= counted.len() as f64);
        Ok(mean)
    }
}

pub const MIN_IMPORTANCE_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub index: usize,
    /// Mean OOB error increase, floored at zero.
    pub score: f64,
    /// The unfloored mean, which can dip below zero for useless features.
    pub raw: f64,
}

/// Features sorted by descending importance (ties by feature index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceRanking {
    pub fn from_scores(raw: &[f64]) -> Self {
        let mut entries: Vec<ImportanceEntry> = raw
            .iter()
            .enumerate()
            .map(|(i, &r)| ImportanceEntry {
                feature: CLIP_FEATURE_NAMES
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("f{i:02}")),
                index: i,
                score: r.max(0.0),
                raw: r,
            })
            .collect();
        entries.sort_by(|a, b| b.raw.total_cmp(&a.raw).then(a.index.cmp(&b.index)));
        ImportanceRanking { entries }
    }

    /// Position of a feature in the ranking, 0 being most important.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.index == index)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,feature,score,raw\n");
        for (r, e) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", r + 1, e.feature, e.score, e.raw);
        }
        s
    }

    /// Horizontal bar chart of the scores as a standalone SVG document.
    pub fn to_svg(&self) -> String {
        let bar_h = 14.0;
        let label_w = 230.0;
        let plot_w = 420.0;
        let height = 30.0 + bar_h * self.entries.len() as f64;
        let max = self.entries.iter().map(|e| e.score).fold(0.0, f64::max);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"monospace\" font-size=\"11\">\n",
            label_w + plot_w + 70.0
        );
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"16\">OOB permutation importance</text>"
        );
        for (k, e) in self.entries.iter().enumerate() {
            let y = 24.0 + bar_h * k as f64;
            let w = if max > 0.0 {
                plot_w * e.score / max
            } else {
                0.0
            };
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text><rect x=\"{label_w}\" y=\"{y}\" width=\"{w:.2}\" height=\"{}\" fill=\"#4c72b0\"/><text x=\"{}\" y=\"{}\">{:.4}</text>",
                label_w - 6.0,
                y + bar_h - 3.0,
                e.feature,
                bar_h - 2.0,
                label_w + w + 4.0,
                y + bar_h - 3.0,
                e.score
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Trains a forest on a clip feature table and ranks the features by
/// out-of-bag permutation importance.
pub fn rf_importance(
    table: &[Vec<f64>],
    labels: &[usize],
    cfg: &ForestConfig,
) -> Result<ImportanceRanking> {
    if table.len() < MIN_IMPORTANCE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_IMPORTANCE_SAMPLES,
            got: table.len(),
        });
    }
    if let Some(row) = table.iter().find(|r| r.len() != CLIP_FEATURE_DIM) {
        return Err(Error::ShapeMismatch(format!(
            "clip feature rows must have {CLIP_FEATURE_DIM} columns, got {}",
            row.len()
        )));
    }
    let forest = RandomForest::fit(table, labels, cfg)?;
    let raw = forest.permutation_importance(table, labels, cfg.seed)?;
    Ok(ImportanceRanking::from_scores(&raw))
}

/// Per-video prediction stored in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub label: f64,
    pub prediction: f64,
    /// Class probabilities (classification modes only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probabilities: Vec<f64>,
}

/// Metrics of one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub split: String,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_recall: Option<Vec<Option<f64>>>,
    pub predictions: Vec<PredictionRecord>,
}

impl EvalReport {
    pub fn classification(
        mode: &str,
        split: &str,
        num_classes: usize,
        predictions: Vec<PredictionRecord>,
    ) -> Result<Self> {
        let preds: Vec<usize> = predictions.iter().map(|p| p.prediction as usize).collect();
        let labels: Vec<usize> = predictions.iter().map(|p| p.label as usize).collect();
        let cm = confusion(&preds, &labels, num_classes)?;
        Ok(EvalReport {
            mode: mode.into(),
            split: split.into(),
            samples: predictions.len(),
            accuracy: Some(accuracy(&preds, &labels)?),
            mse: None,
            per_class_recall: Some(cm.recall()),
            confusion: Some(cm),
            predictions,
        })
    }

    /// Predictions are clipped to [0, 1] before scoring.
    pub fn regression(
        mode: &str,
        split: &str,
        mut predictions: Vec<PredictionRecord>,
    ) -> Result<Self> {
        for p in &mut predictions {
            p.prediction = p.prediction.clamp(0.0, 1.0);
        }
        let preds: Vec<f64> = predictions.iter().map(|p| p.prediction).collect();
        let targets: Vec<f64> = predictions.iter().map(|p| p.label).collect();
        Ok(EvalReport {
            mode: mode.into(),
            split: split.into(),
            samples: predictions.len(),
            accuracy: None,
            mse: Some(mse(&preds, &targets)?),
            confusion: None,
            per_class_recall: None,
            predictions,
        })
    }

    /// Writes `report.json`, `report.txt` and, for classification,
    /// `confusion.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let put = |name: &str, text: &str| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
        };
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        put("report.json", &(json + "\n"))?;
        put("report.txt", &self.to_text())?;
        if let Some(cm) = &self.confusion {
            put("confusion.txt", &cm.to_text())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "mode: {}\nsplit: {}\nsamples: {}\n",
            self.mode, self.split, self.samples
        );
        if let Some(a) = self.accuracy {
            let _ = writeln!(s, "accuracy: {a:.6}");
        }
        if let Some(m) = self.mse {
            let _ = writeln!(s, "mse: {m:.6}");
        }
        if let Some(r) = &self.per_class_recall {
            for (i, v) in r.iter().enumerate() {
                match v {
                    Some(v) => {
                        let _ = writeln!(s, "recall[{i}]: {v:.6}");
                    }
                    None => {
                        let _ = writeln!(s, "recall[{i}]: n/a");
                    }
                }
            }
        }
        if let Some(cm) = &self.confusion {
            s.push_str("confusion (rows true, columns predicted):\n");
            s.push_str(&cm.to_text());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn metric_fixtures() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 2]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(mse(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(mse(&[0.2, 0.9], &[0.2, 0.9]).unwrap(), 0.0);
        assert!(matches!(
            accuracy(&[], &[]),
            Err(Error::LengthMismatch(0, 0))
        ));
        assert!(matches!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn confusion_fixtures() {
        let support = [4usize, 84, 882, 814];
        let labels: Vec<usize> = support
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let cm = confusion(&labels, &labels, 4).unwrap();
        for (i, &n) in support.iter().enumerate() {
            assert_eq!(cm.counts[i][i], n as u64);
        }
        assert_eq!(cm.total(), 1784);

        let all_two = vec![2; labels.len()];
        let cm = confusion(&all_two, &labels, 4).unwrap();
        for row in &cm.counts {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v > 0, j == 2);
            }
        }
        assert!(matches!(
            confusion(&[], &[], 4),
            Err(Error::LengthMismatch(0, 0))
        ));
        assert!(matches!(
            confusion(&[4], &[0], 4),
            Err(Error::OutOfRange {
                value: 4,
                classes: 4
            })
        ));
    }

    proptest! {
        #[test]
        fn trace_over_total_is_accuracy(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (p, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = confusion(&p, &l, 5).unwrap();
            prop_assert_eq!(cm.accuracy(), accuracy(&p, &l).unwrap());
            prop_assert_eq!(cm.total(), p.len() as u64);
            let support: Vec<u64> = (0..5).map(|c| l.iter().filter(|&&v| v == c).count() as u64).collect();
            prop_assert_eq!(cm.support(), support);
        }

        #[test]
        fn mse_zero_iff_equal(a in prop::collection::vec(-5.0f64..5.0, 1..30), d in 0.0f64..1.0) {
            prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
            let mut b = a.clone();
            b[0] += d + 1e-3;
            prop_assert!(mse(&a, &b).unwrap() > 0.0);
        }
    }

    #[test]
    fn tree_separates_training_data() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, i as f64 / 10.0])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let forest = RandomForest::fit(
            &x,
            &y,
            &ForestConfig {
                trees: 25,
                mtry: Some(2),
                seed: 3,
            },
        )
        .unwrap();
        let hits = x
            .iter()
            .zip(&y)
            .filter(|(r, &c)| forest.predict(r) == c)
            .count();
        assert_eq!(hits, 40);
    }

    #[test]
    fn importance_is_deterministic_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                (0..CLIP_FEATURE_DIM)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[3] > 0.0)).collect();
        let cfg = ForestConfig {
            trees: 60,
            mtry: None,
            seed: 9,
        };
        let a = rf_importance(&x, &y, &cfg).unwrap();
        assert_eq!(a, rf_importance(&x, &y, &cfg).unwrap());
        assert_eq!(a.entries.len(), CLIP_FEATURE_DIM);
        assert_eq!(a.entries[0].index, 3);
        assert!(a.entries.windows(2).all(|w| w[0].raw >= w[1].raw));
        assert!(a.entries.iter().all(|e| e.score >= 0.0));
        assert!(matches!(
            rf_importance(&x[..19], &y[..19], &cfg),
            Err(Error::TooFewSamples {
                needed: 20,
                got: 19
            })
        ));
    }

    #[test]
    fn report_structure() {
        let recs = |vals: &[(f64, f64)]| {
            vals.iter()
                .enumerate()
                .map(|(i, &(l, p))| PredictionRecord {
                    video_id: format!("v{i}"),
                    label: l,
                    prediction: p,
                    probabilities: Vec::new(),
                })
                .collect::<Vec<_>>()
        };
        let r =
            EvalReport::classification("frame-ordinal", "test", 4, recs(&[(0.0, 0.0), (3.0, 2.0)]))
                .unwrap();
        assert_eq!(r.confusion.as_ref().unwrap().num_classes(), 4);
        assert_eq!(r.accuracy, Some(0.5));
        let g = EvalReport::regression("clip-regress", "test", recs(&[(0.33, 1.4), (0.66, 0.66)]))
            .unwrap();
        assert!(g.confusion.is_none());
        assert!((g.mse.unwrap() - 0.67f64.powi(2) / 2.0).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let first = fs::read(dir.path().join("report.json")).unwrap();
        r.write(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("report.json")).unwrap());
        assert!(dir.path().join("confusion.txt").exists());
    }
}
