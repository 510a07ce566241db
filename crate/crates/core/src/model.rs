//! The dynamic hyper-sphere space.
//!
//! Training points are moved by an affine map `U = X W + B`. Each class `i`
//! gets a center `C_i` (the mean of its rows of `U`) and a learned radius
//! `R_i`. The loss is built from squared hinge penalties:
//!
//! * enclosure: class points outside their own sphere,
//! * exclusion: foreign points inside a sphere,
//! * separation: overlapping sphere pairs,
//! * negative radii,
//!
//! minus `P` times the summed intra-class scatter. Centers are recomputed from
//! `U` on every evaluation, so gradients flow through them into `W` and `B`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ClassIndex;
use crate::error::{Error, Result};

/// Trainable parameters `{W, B, R}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DHParams {
    /// `n x n` weights.
    pub w: Array2<f64>,
    /// Length-`n` offset added to every transformed row.
    pub b: Array1<f64>,
    /// One radius per class. Can go negative during optimization.
    pub r: Array1<f64>,
}

impl DHParams {
    pub fn identity(dim: usize, radii: Array1<f64>) -> Self {
        DHParams {
            w: Array2::eye(dim),
            b: Array1::zeros(dim),
            r: radii,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.r.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).chain(self.r.iter()).all(|v| v.is_finite())
    }
}

/// Transformed training points with their class centers and scatter.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGeometry {
    pub u: Array2<f64>,
    /// `m x n`, row `i` is the mean of class `i`'s rows of `u`.
    pub centers: Array2<f64>,
    /// Sum of (unsquared) distances from class-`i` points to `C_i`.
    pub intra: Array1<f64>,
}

/// Every term of the training loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: f64,
    pub rpen: Vec<f64>,
    pub intra_sum: f64,
    pub d_total: f64,
    pub loss: f64,
}

impl LossBreakdown {
    pub fn rpen_sum(&self) -> f64 {
        self.rpen.iter().sum()
    }

    /// First non-finite component, named.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !all_finite(&self.d1) {
            Some("d1")
        } else if !all_finite(&self.d2) {
            Some("d2")
        } else if !self.d3.is_finite() {
            Some("d3")
        } else if !all_finite(&self.rpen) {
            Some("rpen")
        } else if !self.intra_sum.is_finite() {
            Some("intra")
        } else if !self.loss.is_finite() {
            Some("loss")
        } else {
            None
        }
    }
}

/// Partial derivatives of the loss with respect to `{W, B, R}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub r: Array1<f64>,
}

impl Gradients {
    pub fn non_finite_component(&self) -> Option<&'static str> {
        if !self.w.iter().all(|v| v.is_finite()) {
            Some("gradient of W")
        } else if !self.b.iter().all(|v| v.is_finite()) {
            Some("gradient of B")
        } else if !self.r.iter().all(|v| v.is_finite()) {
            Some("gradient of R")
        } else {
            None
        }
    }
}

/// `X W + B`, row-wise.
pub fn transform(x: ArrayView2<'_, f64>, params: &DHParams) -> Result<Array2<f64>> {
    if x.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: x.ncols(),
        });
    }
    Ok(x.dot(&params.w) + &params.b)
}

/// Centers and intra-class scatter of `u`.
///
/// Panics if a class has no rows or `u` and `classes` disagree on length.
pub fn geometry(u: Array2<f64>, classes: &ClassIndex) -> SphereGeometry {
    assert_eq!(u.nrows(), classes.len(), "row count differs from label count");
    let m = classes.num_classes();
    let mut centers = Array2::zeros((m, u.ncols()));
    let mut intra = Array1::zeros(m);
    for (i, members) in classes.members().iter().enumerate() {
        assert!(!members.is_empty(), "class {i} has no rows");
        let mut c = centers.row_mut(i);
        for &j in members {
            c += &u.row(j);
        }
        c /= members.len() as f64;
        intra[i] = members.iter().map(|&j| dist(u.row(j), c.view())).sum();
    }
    SphereGeometry { u, centers, intra }
}

fn dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn enclose_sum(geom: &SphereGeometry, r: ArrayView1<'_, f64>, classes: &ClassIndex, i: usize) -> f64 {
    let c = geom.centers.row(i);
    classes.members()[i]
        .iter()
        .map(|&j| (dist(geom.u.row(j), c) - r[i]).max(0.0))
        .sum()
}

fn exclude_sum(geom: &SphereGeometry, r: ArrayView1<'_, f64>, classes: &ClassIndex, i: usize) -> f64 {
    let c = geom.centers.row(i);
    classes
        .labels()
        .iter()
        .enumerate()
        .filter(|&(_, &label)| label != i)
        .map(|(j, _)| (r[i] - dist(geom.u.row(j), c)).max(0.0))
        .sum()
}

fn separate_sum(geom: &SphereGeometry, r: ArrayView1<'_, f64>) -> f64 {
    let m = r.len();
    let mut total = 0.0;
    for i in 0..m {
        for k in i + 1..m {
            let gap = dist(geom.centers.row(i), geom.centers.row(k));
            total += (r[i] + r[k] - gap).max(0.0);
        }
    }
    total
}

/// Squared total distance by which class-`i` points lie outside sphere `i`.
pub fn penalty_enclose(geom: &SphereGeometry, r: ArrayView1<'_, f64>, classes: &ClassIndex, i: usize) -> f64 {
    enclose_sum(geom, r, classes, i).powi(2)
}

/// Squared total depth of foreign points inside sphere `i`.
pub fn penalty_exclude(geom: &SphereGeometry, r: ArrayView1<'_, f64>, classes: &ClassIndex, i: usize) -> f64 {
    exclude_sum(geom, r, classes, i).powi(2)
}

/// Squared total pairwise overlap `R_i + R_k - |C_i - C_k|` over unordered pairs.
pub fn penalty_separate(geom: &SphereGeometry, r: ArrayView1<'_, f64>) -> f64 {
    separate_sum(geom, r).powi(2)
}

/// `max(-R, 0)^2`
pub fn radius_penalty(radius: f64) -> f64 {
    (-radius).max(0.0).powi(2)
}

/// Assembles the loss terms from an already computed geometry.
pub fn breakdown(geom: &SphereGeometry, classes: &ClassIndex, r: ArrayView1<'_, f64>, penalty: f64) -> LossBreakdown {
    let m = classes.num_classes();
    assert_eq!(r.len(), m, "radius count differs from class count");
    let d1: Vec<f64> = (0..m).map(|i| penalty_enclose(geom, r, classes, i)).collect();
    let d2: Vec<f64> = (0..m).map(|i| penalty_exclude(geom, r, classes, i)).collect();
    let rpen: Vec<f64> = r.iter().map(|&ri| radius_penalty(ri)).collect();
    let d3 = penalty_separate(geom, r);
    let intra_sum = geom.intra.sum();
    let d_total = (0..m).map(|i| d1[i] + d2[i] + rpen[i]).sum::<f64>() + d3;
    LossBreakdown {
        d1,
        d2,
        d3,
        rpen,
        intra_sum,
        d_total,
        loss: d_total - penalty * intra_sum,
    }
}

fn check_shapes(x: ArrayView2<'_, f64>, classes: &ClassIndex, params: &DHParams) {
    assert_eq!(x.nrows(), classes.len(), "sample count differs from label count");
    assert_eq!(params.num_classes(), classes.num_classes(), "radius count differs from class count");
}

/// Loss of `params` on the mapped training data `x`.
///
/// Panics on inconsistent shapes or an empty class.
pub fn loss(x: ArrayView2<'_, f64>, classes: &ClassIndex, params: &DHParams, penalty: f64) -> LossBreakdown {
    check_shapes(x, classes, params);
    let u = transform(x, params).expect("dimension checked by caller");
    breakdown(&geometry(u, classes), classes, params.r.view(), penalty)
}

pub fn loss_gradient(x: ArrayView2<'_, f64>, classes: &ClassIndex, params: &DHParams, penalty: f64) -> Gradients {
    loss_and_gradient(x, classes, params, penalty).1
}

/// Loss and its analytic gradient in a single pass. Hinges contribute nothing
/// at their kink, and the direction of a zero-length difference is zero.
pub fn loss_and_gradient(
    x: ArrayView2<'_, f64>,
    classes: &ClassIndex,
    params: &DHParams,
    penalty: f64,
) -> (LossBreakdown, Gradients) {
    check_shapes(x, classes, params);
    let u = transform(x, params).expect("dimension checked by caller");
    let geom = geometry(u, classes);
    let r = params.r.view();
    let parts = breakdown(&geom, classes, r, penalty);

    let (rows, n) = geom.u.dim();
    let m = classes.num_classes();
    let mut g_u = Array2::<f64>::zeros((rows, n));
    let mut g_c = Array2::<f64>::zeros((m, n));
    let mut g_r = Array1::<f64>::zeros(m);
    let mut diff = Array1::<f64>::zeros(n);

    for i in 0..m {
        let center = geom.centers.row(i);
        let s1 = enclose_sum(&geom, r, classes, i);
        let s2 = exclude_sum(&geom, r, classes, i);
        for (j, &label) in classes.labels().iter().enumerate() {
            diff.assign(&geom.u.row(j));
            diff -= &center;
            let d = diff.dot(&diff).sqrt();
            // Coefficient on the unit vector (u_j - C_i) / |u_j - C_i|.
            let mut coef = 0.0;
            if label == i {
                if d - r[i] > 0.0 {
                    coef += 2.0 * s1;
                    g_r[i] -= 2.0 * s1;
                }
                coef -= penalty;
            } else if r[i] - d > 0.0 {
                coef -= 2.0 * s2;
                g_r[i] += 2.0 * s2;
            }
            if coef != 0.0 && d > 0.0 {
                diff *= coef / d;
                g_u.row_mut(j).scaled_add(1.0, &diff);
                g_c.row_mut(i).scaled_add(-1.0, &diff);
            }
        }
        if r[i] < 0.0 {
            g_r[i] += 2.0 * r[i];
        }
    }

    let s3 = separate_sum(&geom, r);
    if s3 > 0.0 {
        for i in 0..m {
            for k in i + 1..m {
                diff.assign(&geom.centers.row(i));
                diff -= &geom.centers.row(k);
                let gap = diff.dot(&diff).sqrt();
                if r[i] + r[k] - gap > 0.0 {
                    g_r[i] += 2.0 * s3;
                    g_r[k] += 2.0 * s3;
                    if gap > 0.0 {
                        diff *= 2.0 * s3 / gap;
                        g_c.row_mut(i).scaled_add(-1.0, &diff);
                        g_c.row_mut(k).scaled_add(1.0, &diff);
                    }
                }
            }
        }
    }

    // Each center is the mean of its class rows.
    for (i, members) in classes.members().iter().enumerate() {
        let share = &g_c.row(i) / members.len() as f64;
        for &j in members {
            g_u.row_mut(j).scaled_add(1.0, &share);
        }
    }

    let grads = Gradients {
        w: x.t().dot(&g_u),
        b: g_u.sum_axis(Axis(0)),
        r: g_r,
    };
    (parts, grads)
}
