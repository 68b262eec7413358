//! Segmentation scores under optimal label matching, and fit reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::Chain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// Distinct predicted labels, ascending; rows of `confusion`.
    pub pred_labels: Vec<usize>,
    /// Distinct true labels, ascending; columns of `confusion`.
    pub true_labels: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
    /// `(predicted label, matched true label)`; `None` earns no credit.
    pub matching: Vec<(usize, Option<usize>)>,
    /// F1 of each true label, in `true_labels` order.
    pub per_class_f1: Vec<f64>,
    pub support: Vec<usize>,
}

/// Maximum-weight assignment on a rectangular matrix. Returns, for each
/// row, the assigned column if any.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().fold(0.0, f64::max);
    let cost = |i: usize, j: usize| {
        if i < rows && j < cols {
            top - weights[i][j]
        } else {
            top
        }
    };
    // Shortest augmenting path form of the Hungarian method, 1-based.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

fn distinct(labels: &[usize]) -> Vec<usize> {
    let mut d = labels.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

fn check(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Data("cannot score an empty segmentation".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Data(format!(
            "prediction has {} labels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// One-to-one map from predicted to true labels maximizing agreement.
pub fn match_labels(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<usize, Option<usize>>> {
    Ok(score(pred, truth)?.matching.into_iter().collect())
}

pub fn score(pred: &[usize], truth: &[usize]) -> Result<SegmentationScore> {
    check(pred, truth)?;
    let pred_labels = distinct(pred);
    let true_labels = distinct(truth);
    let mut confusion = vec![vec![0usize; true_labels.len()]; pred_labels.len()];
    for (p, t) in pred.iter().zip(truth) {
        let i = pred_labels.binary_search(p).unwrap_or_default();
        let j = true_labels.binary_search(t).unwrap_or_default();
        confusion[i][j] += 1;
    }
    Ok(score_confusion(pred_labels, true_labels, confusion))
}

/// Scores from a `K_pred × K_true` count matrix with the given label names.
pub fn score_confusion(pred_labels: Vec<usize>, true_labels: Vec<usize>, confusion: Vec<Vec<usize>>) -> SegmentationScore {
    let total: usize = confusion.iter().flatten().sum();
    let row_sum: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let support: Vec<usize> = (0..true_labels.len())
        .map(|j| confusion.iter().map(|r| r[j]).sum())
        .collect();
    // Matched counts first; among equally good matchings, the larger F1 sum.
    let eps = 0.25 / (pred_labels.len().max(true_labels.len()) as f64 + 1.0);
    let weights: Vec<Vec<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &c)| c as f64 + eps * 2.0 * c as f64 / (row_sum[i] + support[j]).max(1) as f64)
                .collect()
        })
        .collect();
    let assignment = max_weight_assignment(&weights);

    let mut per_class_f1 = vec![0.0; true_labels.len()];
    let mut correct = 0;
    for (i, a) in assignment.iter().enumerate() {
        if let Some(j) = *a {
            let tp = confusion[i][j];
            correct += tp;
            if tp > 0 {
                per_class_f1[j] = 2.0 * tp as f64 / (row_sum[i] + support[j]) as f64;
            }
        }
    }
    let k = true_labels.len() as f64;
    let macro_f1 = per_class_f1.iter().sum::<f64>() / k;
    let weighted_f1 = per_class_f1
        .iter()
        .zip(&support)
        .map(|(f, &s)| f * s as f64)
        .sum::<f64>()
        / total as f64;
    let matching = assignment
        .iter()
        .enumerate()
        .map(|(i, a)| (pred_labels[i], a.map(|j| true_labels[j])))
        .collect();
    SegmentationScore {
        accuracy: correct as f64 / total as f64,
        weighted_f1,
        macro_f1,
        pred_labels,
        true_labels,
        confusion,
        matching,
        per_class_f1,
        support,
    }
}

/// Score several sequences jointly, with a single matching.
pub fn score_sequences(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<SegmentationScore> {
    if pred.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} predicted sequences for {} labelled ones",
            pred.len(),
            truth.len()
        )));
    }
    for (p, t) in pred.iter().zip(truth) {
        check(p, t)?;
    }
    score(&pred.concat(), &truth.concat())
}

/// Which sampled states a report scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateEstimate {
    #[default]
    FinalSample,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub iterations: usize,
    pub joint_log_density: f64,
    pub evidence_proxy: f64,
    pub score: Option<SegmentationScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation across chains; absent for a single chain.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub variant: String,
    pub estimate: StateEstimate,
    pub chains: Vec<ChainReport>,
    pub summary: Vec<Summary>,
}

pub fn summarize(metric: &str, values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Summary {
        metric: metric.into(),
        mean,
        std,
    }
}

/// Final-sample fit statistics and, when labels exist, segmentation scores
/// of every chain, with their mean and spread.
pub fn report(chains: &[Chain], labels: Option<&[Vec<usize>]>, estimate: StateEstimate) -> Result<FitReport> {
    let Some(first) = chains.first() else {
        return Err(Error::Config("report needs at least one chain".into()));
    };
    let mut rows = Vec::with_capacity(chains.len());
    for (c, chain) in chains.iter().enumerate() {
        let last = chain
            .diagnostics
            .last()
            .ok_or_else(|| Error::Config(format!("chain {c} has not run any iterations")))?;
        let score = match labels {
            Some(truth) => {
                let states = match estimate {
                    StateEstimate::FinalSample => chain.final_states(),
                    StateEstimate::MajorityVote => chain.majority_states(),
                };
                Some(score_sequences(&states, truth)?)
            }
            None => None,
        };
        rows.push(ChainReport {
            chain: c,
            iterations: chain.state.iteration,
            joint_log_density: last.joint_log_density,
            evidence_proxy: last.evidence_proxy,
            score,
        });
    }
    let column = |f: &dyn Fn(&ChainReport) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let mut summary = vec![
        summarize("joint_log_density", &column(&|r| r.joint_log_density)),
        summarize("evidence_proxy", &column(&|r| r.evidence_proxy)),
    ];
    if labels.is_some() {
        let s = |r: &ChainReport| r.score.as_ref().map_or(f64::NAN, |s| s.accuracy);
        summary.push(summarize("accuracy", &column(&s)));
        let s = |r: &ChainReport| r.score.as_ref().map_or(f64::NAN, |s| s.weighted_f1);
        summary.push(summarize("weighted_f1", &column(&s)));
        let s = |r: &ChainReport| r.score.as_ref().map_or(f64::NAN, |s| s.macro_f1);
        summary.push(summarize("macro_f1", &column(&s)));
    }
    Ok(FitReport {
        variant: first.state.config.variant().map_or_else(|| "custom".to_string(), |v| v.to_string()),
        estimate,
        chains: rows,
        summary,
    })
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned plain-text table of the summary rows.
    pub fn to_table(&self) -> String {
        let with_std = self.summary.iter().any(|s| s.std.is_some());
        let mut rows = vec![if with_std {
            vec!["metric".to_string(), "mean".into(), "std".into()]
        } else {
            vec!["metric".to_string(), "value".into()]
        }];
        for s in &self.summary {
            let mut row = vec![s.metric.clone(), format!("{:.4}", s.mean)];
            if with_std {
                row.push(s.std.map_or(String::new(), |v| format!("{v:.4}")));
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{} ({} chains)\n", self.variant, self.chains.len());
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
