//! End-to-end model: standardization, feature map, trained hyper-sphere space
//! and the decision rules, plus the `rbfdh-model/1` JSON format.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classify::{self, accuracy, PdfConfig, Rule};
use crate::data::{ClassIndex, Dataset, NormStats, Scaling};
use crate::error::{Error, Result};
use crate::kernel::{FeatureMap, KernelMap};
use crate::model::{geometry, transform, DHParams, LossBreakdown};
use crate::optimizer::{train, TrainConfig, TrainTrace};

pub const MODEL_VERSION: &str = "rbfdh-model/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// RBF expansion on (RBFDH) or off (DH).
    pub use_kernel: bool,
    pub pdf: PdfConfig,
    /// Center rule subtracts each class radius from the center distance.
    pub radius_adjusted: bool,
    #[serde(default)]
    pub scaling: Scaling,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            use_kernel: true,
            pdf: PdfConfig::default(),
            radius_adjusted: false,
            scaling: Scaling::ZScore,
        }
    }
}

/// Accuracy of every rule on one labeled test set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleAccuracy {
    pub pdf: f64,
    pub center: f64,
    pub combined: f64,
    pub chosen: Rule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub feature_map: FeatureMap,
    pub norm: NormStats,
    pub class_names: Vec<String>,
    /// Standardized training samples.
    pub train_samples: Array2<f64>,
    pub train_classes: ClassIndex,
    pub params: DHParams,
    pub config: PipelineConfig,
    pub final_loss: LossBreakdown,
    /// Training points in the learned space.
    pub u_train: Array2<f64>,
    pub centers: Array2<f64>,
}

impl TrainedModel {
    /// Scales `train`, fits the feature map on it and trains the space.
    pub fn fit(train_set: &Dataset, config: &PipelineConfig) -> Result<(TrainedModel, TrainTrace)> {
        config.train.validate()?;
        let norm = NormStats::fit_with(train_set.samples(), config.scaling)?;
        let samples = norm.apply(train_set.samples())?;
        let feature_map = if config.use_kernel {
            FeatureMap::Rbf(KernelMap::fit(samples.view(), config.train.sigma)?)
        } else {
            FeatureMap::Identity { dim: samples.ncols() }
        };
        let mapped = feature_map.apply(samples.view())?;
        let (params, trace) = train(mapped.view(), train_set.classes(), &config.train)?;
        let model = Self::assemble(
            feature_map,
            norm,
            train_set.class_names().to_vec(),
            samples,
            train_set.classes().clone(),
            params,
            config.clone(),
            trace.final_loss.clone(),
        )?;
        Ok((model, trace))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        feature_map: FeatureMap,
        norm: NormStats,
        class_names: Vec<String>,
        train_samples: Array2<f64>,
        train_classes: ClassIndex,
        params: DHParams,
        config: PipelineConfig,
        final_loss: LossBreakdown,
    ) -> Result<TrainedModel> {
        let mapped = feature_map.apply(train_samples.view())?;
        let geom = geometry(transform(mapped.view(), &params)?, &train_classes);
        Ok(TrainedModel {
            feature_map,
            norm,
            class_names,
            train_samples,
            train_classes,
            params,
            config,
            final_loss,
            u_train: geom.u,
            centers: geom.centers,
        })
    }

    pub fn num_features(&self) -> usize {
        self.norm.mean.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Raw feature rows to the learned space.
    pub fn embed(&self, raw: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.norm.apply(raw)?;
        let mapped = self.feature_map.apply(z.view())?;
        transform(mapped.view(), &self.params)
    }

    pub fn pdf_labels(&self, u: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let scores = classify::pdf_scores(u, self.u_train.view(), &self.train_classes, &self.config.pdf)?;
        Ok(classify::pdf_classify(&scores))
    }

    pub fn center_labels(&self, u: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let radii = self.config.radius_adjusted.then(|| self.params.r.view());
        classify::center_classify(u, self.centers.view(), radii)
    }

    /// Labels for raw rows under `rule`. The combined rule needs `truth` to
    /// choose; without it the density rule is used.
    pub fn predict(&self, raw: ArrayView2<'_, f64>, rule: Rule, truth: Option<&[usize]>) -> Result<(Vec<usize>, Rule)> {
        let u = self.embed(raw)?;
        match rule {
            Rule::Pdf => Ok((self.pdf_labels(u.view())?, Rule::Pdf)),
            Rule::Center => Ok((self.center_labels(u.view())?, Rule::Center)),
            Rule::Combined => {
                let pdf = self.pdf_labels(u.view())?;
                let center = self.center_labels(u.view())?;
                classify::combined_classify(&pdf, &center, truth)
            }
        }
    }

    /// Accuracy of all three rules on a labeled (raw) test set.
    pub fn evaluate(&self, test: &Dataset) -> Result<RuleAccuracy> {
        let u = self.embed(test.samples())?;
        let pdf = self.pdf_labels(u.view())?;
        let center = self.center_labels(u.view())?;
        let (combined, chosen) = classify::combined_classify(&pdf, &center, Some(test.labels()))?;
        Ok(RuleAccuracy {
            pdf: accuracy(&pdf, test.labels()),
            center: accuracy(&center, test.labels()),
            combined: accuracy(&combined, test.labels()),
            chosen,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<TrainedModel> {
        let format_err = |message: String| Error::ModelFormat {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(MODEL_VERSION) => {}
            Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
            None => return Err(format_err("missing \"version\" field".into())),
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        doc.into_model().map_err(|e| match e {
            Error::InvalidParameter(m) | Error::ModelFormat { message: m, .. } => format_err(m),
            Error::DimensionMismatch { expected, found } => {
                format_err(format!("inconsistent shapes: expected {expected}, found {found}"))
            }
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl From<ArrayView2<'_, f64>> for MatrixDoc {
    fn from(m: ArrayView2<'_, f64>) -> Self {
        MatrixDoc {
            shape: [m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }
}

impl MatrixDoc {
    fn into_array(self, what: &str) -> Result<Array2<f64>> {
        let [r, c] = self.shape;
        Array2::from_shape_vec((r, c), self.data)
            .map_err(|_| Error::InvalidParameter(format!("{what}: data length does not match shape [{r}, {c}]")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FeatureMapDoc {
    Rbf { sigma: f64, anchors: MatrixDoc },
    Identity { dim: usize },
}

#[derive(Serialize, Deserialize)]
struct NormDoc {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    w: MatrixDoc,
    b: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: String,
    feature_map: FeatureMapDoc,
    norm: NormDoc,
    classes: Vec<String>,
    train_samples: MatrixDoc,
    train_labels: Vec<usize>,
    params: ParamsDoc,
    centers: MatrixDoc,
    config: PipelineConfig,
    final_loss: LossBreakdown,
}

impl From<&TrainedModel> for ModelDoc {
    fn from(m: &TrainedModel) -> Self {
        ModelDoc {
            version: MODEL_VERSION.to_string(),
            feature_map: match &m.feature_map {
                FeatureMap::Rbf(k) => FeatureMapDoc::Rbf {
                    sigma: k.sigma(),
                    anchors: k.anchors().into(),
                },
                FeatureMap::Identity { dim } => FeatureMapDoc::Identity { dim: *dim },
            },
            norm: NormDoc {
                mean: m.norm.mean.to_vec(),
                std: m.norm.std.to_vec(),
            },
            classes: m.class_names.clone(),
            train_samples: m.train_samples.view().into(),
            train_labels: m.train_classes.labels().to_vec(),
            params: ParamsDoc {
                w: m.params.w.view().into(),
                b: m.params.b.to_vec(),
                r: m.params.r.to_vec(),
            },
            centers: m.centers.view().into(),
            config: m.config.clone(),
            final_loss: m.final_loss.clone(),
        }
    }
}

impl ModelDoc {
    fn into_model(self) -> Result<TrainedModel> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let train_samples = self.train_samples.into_array("train_samples")?;
        let f = train_samples.ncols();
        if self.norm.mean.len() != f || self.norm.std.len() != f {
            return bad(format!("norm statistics do not have {f} entries"));
        }
        let feature_map = match self.feature_map {
            FeatureMapDoc::Rbf { sigma, anchors } => {
                let anchors = anchors.into_array("anchors")?;
                if anchors.ncols() != f {
                    return bad(format!("anchors have {} columns, expected {f}", anchors.ncols()));
                }
                FeatureMap::Rbf(KernelMap::fit(anchors.view(), sigma)?)
            }
            FeatureMapDoc::Identity { dim } => {
                if dim != f {
                    return bad(format!("identity map of dimension {dim}, expected {f}"));
                }
                FeatureMap::Identity { dim }
            }
        };
        let n = feature_map.output_dim();
        let m = self.classes.len();
        let w = self.params.w.into_array("params.w")?;
        if w.dim() != (n, n) || self.params.b.len() != n || self.params.r.len() != m {
            return bad(format!("parameter shapes do not match dimension {n} and {m} classes"));
        }
        if self.train_labels.len() != train_samples.nrows() {
            return bad("train_labels length differs from train_samples rows".into());
        }
        let train_classes = ClassIndex::new(self.train_labels, m)?;
        if let Some(c) = train_classes.first_empty_class() {
            return bad(format!("class {c} has no training samples"));
        }
        let norm = NormStats {
            mean: Array1::from(self.norm.mean),
            std: Array1::from(self.norm.std),
        };
        let params = DHParams {
            w,
            b: Array1::from(self.params.b),
            r: Array1::from(self.params.r),
        };
        TrainedModel::assemble(
            feature_map,
            norm,
            self.classes,
            train_samples,
            train_classes,
            params,
            self.config,
            self.final_loss,
        )
    }
}
