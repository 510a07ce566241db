//! Reference implementations used as test oracles. Plain nested loops over
//! `Vec`s, sharing no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Flat parameter vector layout: W row-major, then B, then R.
#[derive(Clone, Debug)]
pub struct Instance {
    pub x: Mat,
    pub labels: Vec<usize>,
    pub m: usize,
    pub w: Mat,
    pub b: Vec<f64>,
    pub r: Vec<f64>,
    pub penalty: f64,
}

pub struct NaiveLoss {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: f64,
    pub rpen: Vec<f64>,
    pub intra: Vec<f64>,
    pub loss: f64,
    /// Every hinge argument and every norm that appears, for kink screening.
    pub kink_args: Vec<f64>,
}

pub fn naive_transform(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let n = w.len();
    x.iter()
        .map(|row| (0..n).map(|c| b[c] + (0..n).map(|k| row[k] * w[k][c]).sum::<f64>()).collect())
        .collect()
}

pub fn naive_centers(u: &Mat, labels: &[usize], m: usize) -> Mat {
    let n = u[0].len();
    let mut c = vec![vec![0.0; n]; m];
    let mut counts = vec![0usize; m];
    for (row, &l) in u.iter().zip(labels) {
        counts[l] += 1;
        for k in 0..n {
            c[l][k] += row[k];
        }
    }
    for i in 0..m {
        for k in 0..n {
            c[i][k] /= counts[i] as f64;
        }
    }
    c
}

pub fn naive_loss(inst: &Instance) -> NaiveLoss {
    let u = naive_transform(&inst.x, &inst.w, &inst.b);
    let m = inst.m;
    let c = naive_centers(&u, &inst.labels, m);
    let r = &inst.r;
    let mut kink_args = Vec::new();
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    let mut intra = vec![0.0; m];
    for i in 0..m {
        let (mut s1, mut s2) = (0.0, 0.0);
        for (j, row) in u.iter().enumerate() {
            let d = norm(&sub(row, &c[i]));
            kink_args.push(d);
            if inst.labels[j] == i {
                intra[i] += d;
                kink_args.push(d - r[i]);
                s1 += (d - r[i]).max(0.0);
            } else {
                kink_args.push(r[i] - d);
                s2 += (r[i] - d).max(0.0);
            }
        }
        d1[i] = s1 * s1;
        d2[i] = s2 * s2;
    }
    let mut s3 = 0.0;
    for i in 0..m {
        for k in i + 1..m {
            let gap = norm(&sub(&c[i], &c[k]));
            kink_args.push(gap);
            kink_args.push(r[i] + r[k] - gap);
            s3 += (r[i] + r[k] - gap).max(0.0);
        }
    }
    let d3 = s3 * s3;
    let rpen: Vec<f64> = r.iter().map(|&ri| (-ri).max(0.0).powi(2)).collect();
    kink_args.extend(r.iter().map(|&ri| -ri));
    let d: f64 = (0..m).map(|i| d1[i] + d2[i] + rpen[i]).sum::<f64>() + d3;
    let loss = d - inst.penalty * intra.iter().sum::<f64>();
    NaiveLoss {
        d1,
        d2,
        d3,
        rpen,
        intra,
        loss,
        kink_args,
    }
}

impl Instance {
    pub fn num_params(&self) -> usize {
        let n = self.w.len();
        n * n + n + self.m
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w.iter().flatten().copied().collect();
        v.extend(&self.b);
        v.extend(&self.r);
        v
    }

    pub fn with_flat(&self, v: &[f64]) -> Instance {
        let n = self.w.len();
        let mut out = self.clone();
        for a in 0..n {
            for c in 0..n {
                out.w[a][c] = v[a * n + c];
            }
        }
        out.b = v[n * n..n * n + n].to_vec();
        out.r = v[n * n + n..].to_vec();
        out
    }

    /// Random instance with `rows` points, dimension `n`, `m` classes and
    /// parameters perturbed from the identity.
    pub fn random(seed: u64, rows: usize, n: usize, m: usize) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Mat = (0..rows).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let mut labels: Vec<usize> = (0..rows).map(|j| j % m).collect();
        for j in (1..rows).rev() {
            labels.swap(j, rng.random_range(0..=j));
        }
        let w: Mat = (0..n)
            .map(|a| (0..n).map(|c| f64::from(a == c) + rng.random_range(-0.3..0.3)).collect())
            .collect();
        let b = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        let r = (0..m).map(|_| rng.random_range(-0.3..1.5)).collect();
        let penalty = rng.random_range(-0.1..0.1);
        Instance {
            x,
            labels,
            m,
            w,
            b,
            r,
            penalty,
        }
    }
}

/// Central differences of the naive loss.
pub fn finite_difference_gradient(inst: &Instance, h: f64) -> Vec<f64> {
    let base = inst.flat();
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += h;
            minus[k] -= h;
            (naive_loss(&inst.with_flat(&plus)).loss - naive_loss(&inst.with_flat(&minus)).loss) / (2.0 * h)
        })
        .collect()
}

/// Density scores by direct double loop.
pub fn naive_pdf_scores(test: &Mat, train: &Mat, labels: &[usize], m: usize, sigma: f64) -> Mat {
    let mut counts = vec![0usize; m];
    for &l in labels {
        counts[l] += 1;
    }
    test.iter()
        .map(|x| {
            (0..m)
                .map(|i| {
                    let mut s = 0.0;
                    for (k, row) in train.iter().enumerate() {
                        if labels[k] == i {
                            let d2: f64 = x.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                            s += 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * (-d2 / (2.0 * sigma * sigma)).exp();
                        }
                    }
                    s / counts[i] as f64
                })
                .collect()
        })
        .collect()
}

/// Nearest center by direct loop, ties to the smallest index.
pub fn naive_center_labels(test: &Mat, centers: &Mat) -> Vec<usize> {
    test.iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centers.iter().enumerate() {
                let d = norm(&sub(x, c));
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect()
}
