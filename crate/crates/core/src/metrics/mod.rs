//! Classification, regression and clustering metrics.
//!
//! Precision, recall and F1 never fail on a zero denominator: they return
//! 0 with `degenerate` set. Accuracy, MAE and the silhouette reject
//! inputs on which they are undefined.

mod input;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use input::{read_classification_csv, read_clustering_csv, read_regression_csv};
pub use report::{emit_report, format_value, MetricSet, Report, ReportRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    /// The defining denominator was zero.
    pub degenerate: bool,
}

impl MetricValue {
    fn of(value: f64) -> Self {
        MetricValue {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        MetricValue {
            value: 0.0,
            degenerate: true,
        }
    }

    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Self::degenerate()
        } else {
            Self::of(num as f64 / den as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} true values vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("at least two distinct clusters are required")]
    SingleCluster,
    #[error("point {index} has {found} coordinates, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("no labels given")]
    NoLabels,
    #[error("bad input: {0}")]
    Input(String),
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Counts outcomes treating `positive` as the positive class and every
/// other label as negative.
pub fn confusion_counts<L: PartialEq>(
    y_true: &[L],
    y_pred: &[L],
    positive: &L,
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// (TP + TN) / (TP + TN + FP + FN).
pub fn accuracy(cm: &ConfusionMatrix) -> Result<MetricValue, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(MetricValue::ratio(cm.tp + cm.tn, cm.total()))
}

/// TP / (TP + FP).
pub fn precision(cm: &ConfusionMatrix) -> MetricValue {
    MetricValue::ratio(cm.tp, cm.tp + cm.fp)
}

/// TP / (TP + FN).
pub fn recall(cm: &ConfusionMatrix) -> MetricValue {
    MetricValue::ratio(cm.tp, cm.tp + cm.fn_)
}

/// Harmonic mean 2PR / (P + R) of values in [0, 1].
pub fn f1(precision: f64, recall: f64) -> MetricValue {
    debug_assert!((0.0..=1.0).contains(&precision) && (0.0..=1.0).contains(&recall));
    let sum = precision + recall;
    if sum == 0.0 {
        return MetricValue::degenerate();
    }
    MetricValue::of(2.0 * precision * recall / sum)
}

/// Fraction of exact matches; equals `accuracy` of any one-vs-rest matrix
/// in the binary case.
pub fn exact_match_accuracy<L: PartialEq>(
    y_true: &[L],
    y_pred: &[L],
) -> Result<MetricValue, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    Ok(MetricValue::of(hits as f64 / y_true.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores<L> {
    pub label: L,
    pub confusion: ConfusionMatrix,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub f1: MetricValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores<L> {
    pub per_label: Vec<LabelScores<L>>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One-vs-rest scores per label and their unweighted means. The macro F1
/// is the mean of per-label F1 values.
pub fn macro_scores<L: PartialEq + Clone>(
    y_true: &[L],
    y_pred: &[L],
    labels: &[L],
) -> Result<MacroScores<L>, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::NoLabels);
    }
    let mut per_label = Vec::with_capacity(labels.len());
    for label in labels {
        let cm = confusion_counts(y_true, y_pred, label)?;
        let p = precision(&cm);
        let r = recall(&cm);
        per_label.push(LabelScores {
            label: label.clone(),
            confusion: cm,
            precision: p,
            recall: r,
            f1: f1(p.value, r.value),
        });
    }
    let n = per_label.len() as f64;
    let mean = |f: fn(&LabelScores<L>) -> f64| per_label.iter().map(f).sum::<f64>() / n;
    Ok(MacroScores {
        precision: mean(|s| s.precision.value),
        recall: mean(|s| s.recall.value),
        f1: mean(|s| s.f1.value),
        per_label,
    })
}

/// Mean absolute error (1/n) Σ |yᵢ − ŷᵢ|.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<MetricValue, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut sum = 0.0;
    for (i, (t, p)) in y_true.iter().zip(y_pred).enumerate() {
        if !t.is_finite() || !p.is_finite() {
            return Err(MetricsError::NonFinite(i));
        }
        sum += (t - p).abs();
    }
    Ok(MetricValue::of(sum / y_true.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    Manhattan,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
        })
    }
}

impl FromStr for Distance {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "manhattan" => Ok(Distance::Manhattan),
            other => Err(MetricsError::Input(format!("unknown distance `{other}`"))),
        }
    }
}

/// Mean silhouette coefficient.
///
/// For sample i, a(i) is its mean distance to the other members of its
/// cluster and b(i) the smallest mean distance to another cluster;
/// s(i) = (b − a) / max(a, b). Members of singleton clusters score 0, as
/// do samples with a = b = 0.
pub fn silhouette<L: Ord>(
    points: &[Vec<f64>],
    labels: &[L],
    distance: Distance,
) -> Result<MetricValue, MetricsError> {
    check_lengths(points.len(), labels.len())?;
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(MetricsError::Dimension {
                index: i,
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
    }
    let mut clusters: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    let groups: Vec<&Vec<usize>> = clusters.values().collect();
    let own: Vec<usize> = {
        let mut own = vec![0; points.len()];
        for (g, members) in groups.iter().enumerate() {
            for &i in members.iter() {
                own[i] = g;
            }
        }
        own
    };

    let mut total = 0.0;
    for i in 0..points.len() {
        let mine = groups[own[i]];
        if mine.len() == 1 {
            continue;
        }
        let mean_to = |members: &[usize]| {
            members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| distance.between(&points[i], &points[j]))
                .sum::<f64>()
        };
        let a = mean_to(mine) / (mine.len() - 1) as f64;
        let b = groups
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != own[i])
            .map(|(_, members)| mean_to(members) / members.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(MetricValue::of(total / points.len() as f64))
}
