//! Full-batch adaptive gradient descent over `{W, B, R}`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::data::ClassIndex;
use crate::error::{Error, Result};
use crate::model::{geometry, loss, loss_and_gradient, DHParams, Gradients, LossBreakdown};

/// Smallest initial radius.
pub const MIN_INITIAL_RADIUS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Weight `P` of the intra-class scatter term. Signed.
    pub penalty: f64,
    /// RBF kernel bandwidth.
    pub sigma: f64,
    pub seed: u64,
    pub adaptive_eps: f64,
    pub record_history: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 500,
            learning_rate: 0.1,
            penalty: 0.01,
            sigma: 1.0,
            seed: 42,
            adaptive_eps: 1e-8,
            record_history: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !self.penalty.is_finite() {
            return bad(format!("penalty must be finite, got {}", self.penalty));
        }
        if !(self.adaptive_eps > 0.0 && self.adaptive_eps.is_finite()) {
            return bad(format!("adaptive epsilon must be positive, got {}", self.adaptive_eps));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    /// Loss before each step, when history recording is on.
    pub history: Vec<LossBreakdown>,
    /// Loss at the returned parameters.
    pub final_loss: LossBreakdown,
    pub iterations: usize,
}

impl TrainTrace {
    /// `iteration,loss,d1,d2,d3,rpen,intra`, per-class terms summed.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,loss,d1,d2,d3,rpen,intra")?;
        for (k, l) in self.history.iter().enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{},{},{}",
                l.loss,
                l.d1.iter().sum::<f64>(),
                l.d2.iter().sum::<f64>(),
                l.d3,
                l.rpen_sum(),
                l.intra_sum
            )?;
        }
        Ok(())
    }
}

/// `W = I`, `B = 0` and each radius set to the mean distance of its class
/// from the class center in the untransformed data.
pub fn init_params(x: ArrayView2<'_, f64>, classes: &ClassIndex) -> Result<DHParams> {
    if let Some(c) = classes.first_empty_class() {
        return Err(Error::EmptyClass(c));
    }
    let geom = geometry(x.to_owned(), classes);
    let radii = geom
        .intra
        .iter()
        .zip(classes.members())
        .map(|(d, members)| (d / members.len() as f64).max(MIN_INITIAL_RADIUS))
        .collect::<Array1<f64>>();
    Ok(DHParams::identity(x.ncols(), radii))
}

/// Per-coordinate step `lr * g / (sqrt(sum of g^2) + eps)`.
struct AdaGrad {
    lr: f64,
    eps: f64,
    w: Array2<f64>,
    b: Array1<f64>,
    r: Array1<f64>,
}

impl AdaGrad {
    fn new(params: &DHParams, lr: f64, eps: f64) -> Self {
        AdaGrad {
            lr,
            eps,
            w: Array2::zeros(params.w.raw_dim()),
            b: Array1::zeros(params.b.raw_dim()),
            r: Array1::zeros(params.r.raw_dim()),
        }
    }

    fn step(&mut self, params: &mut DHParams, grads: &Gradients) {
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, acc: &mut f64, &g: &f64| {
            *acc += g * g;
            *p -= lr * g / (acc.sqrt() + eps);
        };
        Zip::from(&mut params.w).and(&mut self.w).and(&grads.w).for_each(update);
        Zip::from(&mut params.b).and(&mut self.b).and(&grads.b).for_each(update);
        Zip::from(&mut params.r).and(&mut self.r).and(&grads.r).for_each(update);
    }
}

/// Runs exactly `cfg.iterations` adaptive steps from [`init_params`].
pub fn train(x: ArrayView2<'_, f64>, classes: &ClassIndex, cfg: &TrainConfig) -> Result<(DHParams, TrainTrace)> {
    cfg.validate()?;
    if x.nrows() != classes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} training rows but {} labels",
            x.nrows(),
            classes.len()
        )));
    }
    let mut params = init_params(x, classes)?;
    let mut opt = AdaGrad::new(&params, cfg.learning_rate, cfg.adaptive_eps);
    let mut history = Vec::with_capacity(if cfg.record_history { cfg.iterations } else { 0 });

    for iteration in 0..cfg.iterations {
        let (parts, grads) = loss_and_gradient(x, classes, &params, cfg.penalty);
        if let Some(component) = parts.non_finite_component().or_else(|| grads.non_finite_component()) {
            return Err(Error::NonFinite { component, iteration });
        }
        if cfg.record_history {
            history.push(parts);
        }
        opt.step(&mut params, &grads);
    }

    let final_loss = loss(x, classes, &params, cfg.penalty);
    if let Some(component) = final_loss.non_finite_component() {
        return Err(Error::NonFinite {
            component,
            iteration: cfg.iterations,
        });
    }
    Ok((
        params,
        TrainTrace {
            history,
            final_loss,
            iterations: cfg.iterations,
        },
    ))
}
