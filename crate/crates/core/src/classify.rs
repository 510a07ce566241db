//! Decision rules in the transformed space: Gaussian density scoring against
//! the training points of each class, nearest class center, and the
//! accuracy-selected combination of the two.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::ClassIndex;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Pdf,
    Center,
    Combined,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Pdf, Rule::Center, Rule::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Pdf => "pdf",
            Rule::Center => "center",
            Rule::Combined => "combined",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pdf" => Ok(Rule::Pdf),
            "center" => Ok(Rule::Center),
            "combined" => Ok(Rule::Combined),
            other => Err(format!("unknown rule {other:?} (expected pdf, center or combined)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdfConfig {
    /// Gaussian bandwidth; unrelated to the kernel map's sigma.
    pub bandwidth: f64,
}

impl Default for PdfConfig {
    fn default() -> Self {
        PdfConfig { bandwidth: 1.0 }
    }
}

/// Per-point, per-class scores (`T x m`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    pub values: Array2<f64>,
    /// Natural log of `values`, kept separately so the argmax survives underflow.
    pub log_values: Array2<f64>,
    pub rule: Rule,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean Gaussian density of each test point over the training points of
/// every class, `(1/N_i) sum_k N(|x - u_k|; 0, bandwidth)`.
pub fn pdf_scores(
    u_test: ArrayView2<'_, f64>,
    u_train: ArrayView2<'_, f64>,
    classes: &ClassIndex,
    cfg: &PdfConfig,
) -> Result<ClassScores> {
    let sigma = cfg.bandwidth;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("pdf bandwidth must be positive, got {sigma}")));
    }
    if u_test.ncols() != u_train.ncols() {
        return Err(Error::DimensionMismatch {
            expected: u_train.ncols(),
            found: u_test.ncols(),
        });
    }
    if u_train.nrows() != classes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} training rows but {} labels",
            u_train.nrows(),
            classes.len()
        )));
    }
    if let Some(c) = classes.first_empty_class() {
        return Err(Error::EmptyClass(c));
    }

    let m = classes.num_classes();
    let log_norm = -(sigma * (2.0 * PI).sqrt()).ln();
    let scale = -0.5 / (sigma * sigma);
    let mut log_values = Array2::zeros((u_test.nrows(), m));
    let mut exponents = Vec::new();
    for (t, x) in u_test.rows().into_iter().enumerate() {
        for (i, members) in classes.members().iter().enumerate() {
            exponents.clear();
            exponents.extend(members.iter().map(|&k| scale * sq_dist(x, u_train.row(k))));
            let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = exponents.iter().map(|e| (e - top).exp()).sum();
            log_values[[t, i]] = log_norm + top + (sum / members.len() as f64).ln();
        }
    }
    Ok(ClassScores {
        values: log_values.mapv(f64::exp),
        log_values,
        rule: Rule::Pdf,
    })
}

/// Highest-scoring class per row; ties go to the smallest index.
pub fn pdf_classify(scores: &ClassScores) -> Vec<usize> {
    scores.log_values.rows().into_iter().map(|row| argmax(row)).collect()
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 || i == 0 {
            best = (i, v);
        }
    }
    best.0
}

/// Euclidean distance of every test point to every center (`T x m`).
pub fn center_distances(u_test: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if u_test.ncols() != centers.ncols() {
        return Err(Error::DimensionMismatch {
            expected: centers.ncols(),
            found: u_test.ncols(),
        });
    }
    let mut out = Array2::zeros((u_test.nrows(), centers.nrows()));
    for (t, x) in u_test.rows().into_iter().enumerate() {
        for (i, c) in centers.rows().into_iter().enumerate() {
            out[[t, i]] = sq_dist(x, c).sqrt();
        }
    }
    Ok(out)
}

/// Nearest center per test point, ties to the smallest index. With `radii`,
/// the distance to each center is reduced by that class's radius first.
pub fn center_classify(
    u_test: ArrayView2<'_, f64>,
    centers: ArrayView2<'_, f64>,
    radii: Option<ArrayView1<'_, f64>>,
) -> Result<Vec<usize>> {
    let dists = center_distances(u_test, centers)?;
    if let Some(r) = radii {
        if r.len() != centers.nrows() {
            return Err(Error::InvalidParameter(format!(
                "{} radii for {} centers",
                r.len(),
                centers.nrows()
            )));
        }
    }
    Ok(dists
        .rows()
        .into_iter()
        .map(|row| match radii {
            Some(r) => argmin(row.iter().zip(r.iter()).map(|(d, r)| d - r)),
            None => argmin(row.iter().copied()),
        })
        .collect())
}

/// Fraction of positions where `predicted` equals `truth`. Empty input scores 0.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction and truth lengths differ");
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Picks whichever rule is more accurate against `truth` (the density rule on
/// ties). Without truth the density rule is returned.
pub fn combined_classify(
    pdf_labels: &[usize],
    center_labels: &[usize],
    truth: Option<&[usize]>,
) -> Result<(Vec<usize>, Rule)> {
    if pdf_labels.len() != center_labels.len() {
        return Err(Error::InvalidParameter("rule outputs have different lengths".into()));
    }
    let Some(truth) = truth else {
        return Ok((pdf_labels.to_vec(), Rule::Pdf));
    };
    if truth.len() != pdf_labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} truth labels for {} predictions",
            truth.len(),
            pdf_labels.len()
        )));
    }
    if accuracy(center_labels, truth) > accuracy(pdf_labels, truth) {
        Ok((center_labels.to_vec(), Rule::Center))
    } else {
        Ok((pdf_labels.to_vec(), Rule::Pdf))
    }
}
