//! Labeled tabular data: CSV loading, feature scaling and stratified
//! train/test splitting.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest standard deviation used when standardizing a column.
pub const STD_FLOOR: f64 = 1e-8;

/// Which CSV column holds the class label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    #[default]
    Last,
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s {
            "last" => LabelColumn::Last,
            "first" => LabelColumn::Index(0),
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => write!(f, "{n:?}"),
            LabelColumn::Last => write!(f, "last"),
        }
    }
}

/// Labels together with the per-class row lists they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassIndex {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassIndex {
    /// Builds the index for `labels` over `num_classes` classes. Classes may be
    /// empty (a test subset need not contain every class).
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); num_classes];
        for (row, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::InvalidParameter(format!(
                    "label {label} at row {row} is outside [0, {num_classes})"
                )));
            }
            members[label].push(row);
        }
        Ok(ClassIndex { labels, members })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Row indices of each class, in ascending order.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.members[class].len()
    }

    /// First class with no rows, if any.
    pub fn first_empty_class(&self) -> Option<usize> {
        self.members.iter().position(|m| m.is_empty())
    }
}

/// A labeled sample matrix with its class structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    classes: ClassIndex,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if samples.nrows() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} sample rows but {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        if let Some(((row, col), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite feature at row {row}, column {col}"
            )));
        }
        let classes = ClassIndex::new(labels, class_names.len())?;
        Ok(Dataset {
            samples,
            classes,
            class_names,
        })
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn classes(&self) -> &ClassIndex {
        &self.classes
    }

    pub fn labels(&self) -> &[usize] {
        self.classes.labels()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.samples.ncols()
    }

    /// The rows `rows` (in the given order), keeping the full class list.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let samples = self.samples.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.classes.labels[r]).collect();
        Dataset {
            samples,
            classes: ClassIndex::new(labels, self.num_classes()).expect("labels already validated"),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels, new feature values.
    pub fn with_samples(&self, samples: Array2<f64>) -> Dataset {
        assert_eq!(samples.nrows(), self.len());
        Dataset {
            samples,
            classes: self.classes.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Cells of a CSV file, one vector per non-empty record, with 1-based line numbers.
struct Table {
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cells: Vec<String> = record.iter().map(str::to_string).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    line,
                    expected: w,
                    found: cells.len(),
                })
            }
            Some(_) => {}
        }
        rows.push((line, cells));
    }
    Ok(Table { rows })
}

fn is_numeric(cell: &str) -> bool {
    cell.parse::<f64>().is_ok_and(f64::is_finite)
}

impl Table {
    fn width(&self) -> usize {
        self.rows.first().map_or(0, |(_, r)| r.len())
    }

    /// Resolves the label column and strips a header row if one is present.
    /// Returns the label position (if requested).
    fn resolve(&mut self, path: &Path, label: Option<&LabelColumn>) -> Result<Option<usize>> {
        let width = self.width();
        let missing = |label: &LabelColumn| Error::MissingLabelColumn {
            path: path.to_path_buf(),
            label: label.to_string(),
        };
        let column = match label {
            None => None,
            Some(LabelColumn::Last) if width > 0 => Some(width - 1),
            Some(LabelColumn::Index(i)) if *i < width => Some(*i),
            Some(LabelColumn::Name(name)) => {
                let header = self.rows.first().ok_or_else(|| missing(label.unwrap()))?;
                let pos = header.1.iter().position(|c| c == name).ok_or_else(|| missing(label.unwrap()))?;
                self.rows.remove(0);
                return Ok(Some(pos));
            }
            Some(_) if width == 0 => None,
            Some(other) => return Err(missing(other)),
        };
        let has_header = self.rows.first().is_some_and(|(_, cells)| {
            cells
                .iter()
                .enumerate()
                .any(|(c, cell)| Some(c) != column && !is_numeric(cell))
        });
        if has_header {
            self.rows.remove(0);
        }
        Ok(column)
    }

    fn features(&self, path: &Path, skip: Option<usize>) -> Result<Array2<f64>> {
        let width = self.width();
        let n_features = width - usize::from(skip.is_some() && width > 0);
        let mut values = Vec::with_capacity(self.rows.len() * n_features);
        for (line, cells) in &self.rows {
            for (c, cell) in cells.iter().enumerate() {
                if Some(c) == skip {
                    continue;
                }
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        path: path.to_path_buf(),
                        line: *line,
                        column: c,
                        value: cell.clone(),
                    })?;
                values.push(v);
            }
        }
        Ok(Array2::from_shape_vec((self.rows.len(), n_features), values)
            .expect("row widths already checked"))
    }
}

/// Loads a labeled dataset. Labels are re-indexed densely in order of first
/// appearance; a header row is detected when its feature cells are not numeric.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let mut table = read_table(path)?;
    let column = table.resolve(path, Some(label))?.ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: "file has no data rows".into(),
    })?;
    if table.rows.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "file has no data rows".into(),
        });
    }
    let samples = table.features(path, Some(column))?;

    let mut class_names: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let labels = table
        .rows
        .iter()
        .map(|(_, cells)| {
            let name = &cells[column];
            *lookup.entry(name.clone()).or_insert_with(|| {
                class_names.push(name.clone());
                class_names.len() - 1
            })
        })
        .collect();
    if class_names.len() < 2 {
        return Err(Error::SingleClass {
            path: path.to_path_buf(),
        });
    }
    Dataset::new(samples, labels, class_names)
}

/// Feature rows of an unlabeled (or labeled, with `label` dropped) CSV file.
/// Returns the feature matrix and, when `label` is given, the raw label cells.
pub fn load_features(
    path: impl AsRef<Path>,
    label: Option<&LabelColumn>,
) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let path = path.as_ref();
    let mut table = read_table(path)?;
    let column = table.resolve(path, label)?;
    let samples = table.features(path, column)?;
    let labels = column.map(|c| table.rows.iter().map(|(_, cells)| cells[c].clone()).collect());
    Ok((samples, labels))
}

/// How feature columns are rescaled before the feature map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Subtract the mean, divide by the population standard deviation.
    #[default]
    ZScore,
    /// Map the training range of each column onto [0, 1].
    MinMax,
    /// Leave features as loaded.
    None,
}

impl Scaling {
    pub fn as_str(self) -> &'static str {
        match self {
            Scaling::ZScore => "zscore",
            Scaling::MinMax => "minmax",
            Scaling::None => "none",
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scaling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zscore" | "z-score" => Ok(Scaling::ZScore),
            "minmax" | "min-max" => Ok(Scaling::MinMax),
            "none" => Ok(Scaling::None),
            _ => Err(format!("unknown scaling {s:?} (expected zscore, minmax or none)")),
        }
    }
}

/// Per-column affine normalization `(x - mean) / std`. For min-max scaling
/// `mean` holds the column minimum and `std` the range.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl NormStats {
    /// Population mean and standard deviation of each column, std floored at
    /// [`STD_FLOOR`].
    pub fn fit(samples: ArrayView2<'_, f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::InvalidParameter("cannot standardize an empty training set".into()));
        }
        let mean = samples.mean_axis(Axis(0)).expect("non-empty");
        let std = samples.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(NormStats { mean, std })
    }

    /// Statistics for any [`Scaling`]; spreads are floored at [`STD_FLOOR`].
    pub fn fit_with(samples: ArrayView2<'_, f64>, scaling: Scaling) -> Result<Self> {
        match scaling {
            Scaling::ZScore => Self::fit(samples),
            Scaling::MinMax => {
                if samples.nrows() == 0 {
                    return Err(Error::InvalidParameter("cannot scale an empty training set".into()));
                }
                let min = samples.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
                let max = samples.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
                let range = (&max - &min).mapv(|r| r.max(STD_FLOOR));
                Ok(NormStats { mean: min, std: range })
            }
            Scaling::None => Ok(NormStats {
                mean: Array1::zeros(samples.ncols()),
                std: Array1::ones(samples.ncols()),
            }),
        }
    }

    pub fn apply(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(samples.ncols())?;
        Ok((&samples - &self.mean) / &self.std)
    }

    pub fn invert(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(samples.ncols())?;
        Ok(&samples * &self.std + &self.mean)
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found,
            });
        }
        Ok(())
    }
}

/// Z-scores both sets with statistics fit on `train` only.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, NormStats)> {
    let stats = NormStats::fit(train.samples())?;
    let train = train.with_samples(stats.apply(train.samples())?);
    let test = test.with_samples(stats.apply(test.samples())?);
    Ok((train, test, stats))
}

/// A stratified train/test partition.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub rtt: f64,
    pub seed: u64,
}

/// Holds out `round(rtt * N_i)` rows of every class, capped so that each class
/// keeps at least one training row. Rows are chosen by a seeded shuffle.
pub fn split(ds: &Dataset, rtt: f64, seed: u64) -> Result<Split> {
    if !(rtt > 0.0 && rtt < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test-to-training ratio {rtt} is outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (class, members) in ds.classes().members().iter().enumerate() {
        let n = members.len();
        if n == 0 {
            return Err(Error::EmptyClass(class));
        }
        let wanted = (rtt * n as f64).round() as usize;
        if n == 1 && wanted >= 1 {
            return Err(Error::InvalidParameter(format!(
                "class {class} has a single sample and ratio {rtt} would move it to the test set"
            )));
        }
        let n_test = wanted.min(n - 1);
        let mut rows = members.clone();
        rows.shuffle(&mut rng);
        test_rows.extend_from_slice(&rows[..n_test]);
        train_rows.extend_from_slice(&rows[n_test..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(Split {
        train: ds.subset(&train_rows),
        test: ds.subset(&test_rows),
        train_rows,
        test_rows,
        rtt,
        seed,
    })
}

/// Where a named dataset lives on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSource {
    pub name: String,
    pub path: PathBuf,
    pub label: LabelColumn,
}
