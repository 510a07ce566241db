//! RBF feature expansion against the training anchors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Gaussian kernel responses of a point against every stored anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMap {
    anchors: Array2<f64>,
    sigma: f64,
}

impl KernelMap {
    /// Stores a copy of `anchors` (one training point per row).
    pub fn fit(anchors: ArrayView2<'_, f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel sigma must be positive, got {sigma}")));
        }
        if anchors.nrows() == 0 {
            return Err(Error::InvalidParameter("kernel map needs at least one anchor".into()));
        }
        Ok(KernelMap {
            anchors: anchors.to_owned(),
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn anchors(&self) -> ArrayView2<'_, f64> {
        self.anchors.view()
    }

    pub fn input_dim(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.anchors.nrows()
    }

    /// `exp(-|x - a_i|^2 / (2 sigma^2))` for every anchor `a_i`.
    pub fn map(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check(x.len())?;
        let scale = -0.5 / (self.sigma * self.sigma);
        Ok(self
            .anchors
            .rows()
            .into_iter()
            .map(|a| (sq_dist(x, a) * scale).exp())
            .collect())
    }

    pub fn map_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let scale = -0.5 / (self.sigma * self.sigma);
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        Zip::from(out.rows_mut()).and(x.rows()).for_each(|mut out, x| {
            for (o, a) in out.iter_mut().zip(self.anchors.rows()) {
                *o = (sq_dist(x, a) * scale).exp();
            }
        });
        Ok(out)
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The input-side transform applied before the hyper-sphere space.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Rbf(KernelMap),
    /// Features pass through unchanged (the un-kernelized variant).
    Identity { dim: usize },
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Rbf(k) => k.input_dim(),
            FeatureMap::Identity { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Rbf(k) => k.output_dim(),
            FeatureMap::Identity { dim } => *dim,
        }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            FeatureMap::Rbf(k) => k.map_batch(x),
            FeatureMap::Identity { dim } => {
                if x.ncols() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        found: x.ncols(),
                    });
                }
                Ok(x.to_owned())
            }
        }
    }
}
