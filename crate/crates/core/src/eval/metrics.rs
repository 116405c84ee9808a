use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::model::{Category, DependencyEdge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Float> Metrics<T> {
    pub fn new(precision: T, recall: T, f1: T) -> Self {
        Metrics {
            precision,
            recall,
            f1,
        }
    }

    /// Copy rounded to `places` decimals, for display.
    pub fn rounded(&self, places: i32) -> Self {
        let scale = T::from(10.0).unwrap().powi(places);
        let r = |v: T| (v * scale).round() / scale;
        Metrics::new(r(self.precision), r(self.recall), r(self.f1))
    }

    pub fn scaled(&self, factor: T) -> Self {
        Metrics::new(self.precision * factor, self.recall * factor, self.f1 * factor)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score<T: Float>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum > T::zero() {
        T::from(2.0).unwrap() * precision * recall / sum
    } else {
        T::zero()
    }
}

fn ratio<T: Float>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from(num).unwrap() / T::from(den).unwrap()
    }
}

/// Precision `tp/(tp+fp)` and recall `tp/(tp+fn)`, each 0 on an empty
/// denominator, and their F1. F1 is taken from the counts as
/// `2tp/(2tp+fp+fn)`, which equals the harmonic mean but rounds once.
pub fn compute_metrics<T: Float>(tp: usize, fp: usize, fn_: usize) -> Metrics<T> {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Metrics::new(precision, recall, ratio(2 * tp, 2 * tp + fp + fn_))
}

/// Result of strict tuple matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeMatch {
    pub tp: BTreeSet<DependencyEdge>,
    pub fp: BTreeSet<DependencyEdge>,
    pub fn_: BTreeSet<DependencyEdge>,
}

/// Matches on the full `(source, data, target, category)` tuple after name
/// normalization; a wrong category counts as one false positive and one
/// false negative.
pub fn match_edges(predicted: &[DependencyEdge], gold: &[DependencyEdge]) -> EdgeMatch {
    let p: BTreeSet<DependencyEdge> = predicted.iter().map(DependencyEdge::normalized).collect();
    let g: BTreeSet<DependencyEdge> = gold.iter().map(DependencyEdge::normalized).collect();
    EdgeMatch {
        tp: p.intersection(&g).cloned().collect(),
        fp: p.difference(&g).cloned().collect(),
        fn_: g.difference(&p).cloned().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Overall,
    Api,
    Condition,
    Action,
}

impl Scope {
    pub const ALL: [Scope; 4] = [Scope::Overall, Scope::Api, Scope::Condition, Scope::Action];

    fn admits(self, c: Category) -> bool {
        match self {
            Scope::Overall => true,
            Scope::Api => c == Category::Api,
            Scope::Condition => c == Category::Condition,
            Scope::Action => c == Category::Action,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Scope::Overall => "Overall",
            Scope::Api => "API",
            Scope::Condition => "Condition",
            Scope::Action => "Action",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score<T> {
    #[serde(flatten)]
    pub metrics: Metrics<T>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// False when the category has no gold and no predicted edges.
    pub applicable: bool,
}

impl<T: Float> Score<T> {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        Score {
            metrics: compute_metrics(tp, fp, fn_),
            tp,
            fp,
            fn_,
            applicable: tp + fn_ > 0 || fp > 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores<T> {
    pub overall: Score<T>,
    pub api: Score<T>,
    pub condition: Score<T>,
    pub action: Score<T>,
}

impl<T: Float> CategoryScores<T> {
    pub fn get(&self, scope: Scope) -> &Score<T> {
        match scope {
            Scope::Overall => &self.overall,
            Scope::Api => &self.api,
            Scope::Condition => &self.condition,
            Scope::Action => &self.action,
        }
    }

    /// Per-category scores; false positives are charged to their predicted
    /// category, false negatives to their gold category.
    pub fn from_match(m: &EdgeMatch) -> Self {
        let score = |scope: Scope| {
            let count = |set: &BTreeSet<DependencyEdge>| set.iter().filter(|e| scope.admits(e.category)).count();
            Score::from_counts(count(&m.tp), count(&m.fp), count(&m.fn_))
        };
        CategoryScores {
            overall: score(Scope::Overall),
            api: score(Scope::Api),
            condition: score(Scope::Condition),
            action: score(Scope::Action),
        }
    }
}

pub fn evaluate_usecase<T: Float>(predicted: &[DependencyEdge], gold: &[DependencyEdge]) -> CategoryScores<T> {
    CategoryScores::from_match(&match_edges(predicted, gold))
}

/// Mean of the given rows; `None` when no row is applicable.
pub fn macro_average<T: Float>(rows: &[Option<Metrics<T>>]) -> Option<Metrics<T>> {
    let applicable: Vec<&Metrics<T>> = rows.iter().flatten().collect();
    if applicable.is_empty() {
        return None;
    }
    let n = T::from(applicable.len()).unwrap();
    let sum = applicable.iter().fold(Metrics::new(T::zero(), T::zero(), T::zero()), |acc, m| {
        Metrics::new(acc.precision + m.precision, acc.recall + m.recall, acc.f1 + m.f1)
    });
    Some(Metrics::new(sum.precision / n, sum.recall / n, sum.f1 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores<T> {
    pub overall: Option<Metrics<T>>,
    pub api: Option<Metrics<T>>,
    pub condition: Option<Metrics<T>>,
    pub action: Option<Metrics<T>>,
}

impl<T: Float> MacroScores<T> {
    pub fn get(&self, scope: Scope) -> Option<&Metrics<T>> {
        match scope {
            Scope::Overall => self.overall.as_ref(),
            Scope::Api => self.api.as_ref(),
            Scope::Condition => self.condition.as_ref(),
            Scope::Action => self.action.as_ref(),
        }
    }
}

/// Per-use-case mean of every metric, skipping rows where the category is
/// not applicable.
pub fn aggregate_macro<T: Float>(rows: &[CategoryScores<T>]) -> MacroScores<T> {
    let col = |scope: Scope| {
        let values: Vec<Option<Metrics<T>>> = rows
            .iter()
            .map(|r| {
                let s = r.get(scope);
                s.applicable.then_some(s.metrics)
            })
            .collect();
        macro_average(&values)
    };
    MacroScores {
        overall: col(Scope::Overall),
        api: col(Scope::Api),
        condition: col(Scope::Condition),
        action: col(Scope::Action),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    /// Keyed by use case name, alphabetical.
    pub per_usecase: BTreeMap<String, CategoryScores<T>>,
    #[serde(rename = "macro")]
    pub macro_scores: MacroScores<T>,
}

impl<T: Float> EvaluationReport<T> {
    pub fn from_rows(per_usecase: BTreeMap<String, CategoryScores<T>>) -> Self {
        let rows: Vec<CategoryScores<T>> = per_usecase.values().cloned().collect();
        EvaluationReport {
            macro_scores: aggregate_macro(&rows),
            per_usecase,
        }
    }
}

/// Scores each `(name, predicted, gold)` triple and averages them.
pub fn evaluate<T: Float>(cases: &[(String, Vec<DependencyEdge>, Vec<DependencyEdge>)]) -> EvaluationReport<T> {
    let rows = cases
        .iter()
        .map(|(name, p, g)| (name.clone(), evaluate_usecase(p, g)))
        .collect();
    EvaluationReport::from_rows(rows)
}

impl<T: Float + fmt::Display> EvaluationReport<T> {
    /// Fixed-width table: Precision/Recall/F1 for Overall, API, Condition
    /// and Action, in percent with two decimals; `-` marks categories
    /// without gold edges.
    pub fn to_table(&self) -> String {
        let name_w = self
            .per_usecase
            .keys()
            .map(|k| k.len())
            .chain(["UseCase".len(), "Average".len()])
            .max()
            .unwrap_or(7);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "UseCase");
        for scope in Scope::ALL {
            let _ = write!(out, " | {:^26}", scope.title());
        }
        out.push('\n');
        let _ = write!(out, "{:<name_w$}", "");
        for _ in Scope::ALL {
            let _ = write!(out, " | {:>8} {:>8} {:>8}", "P", "R", "F1");
        }
        out.push('\n');
        let hundred = T::from(100.0).unwrap();
        let cell = |m: Option<&Metrics<T>>| match m {
            Some(m) => {
                let m = m.scaled(hundred);
                format!(" | {:>8.2} {:>8.2} {:>8.2}", m.precision, m.recall, m.f1)
            }
            None => format!(" | {:>8} {:>8} {:>8}", "-", "-", "-"),
        };
        for (name, row) in &self.per_usecase {
            let _ = write!(out, "{name:<name_w$}");
            for scope in Scope::ALL {
                let s = row.get(scope);
                out.push_str(&cell(s.applicable.then_some(&s.metrics)));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<name_w$}", "Average");
        for scope in Scope::ALL {
            out.push_str(&cell(self.macro_scores.get(scope)));
        }
        out.push('\n');
        out
    }
}
