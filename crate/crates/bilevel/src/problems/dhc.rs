//! Data hyper-cleaning on a seeded synthetic multiclass dataset.
//!
//! A fraction of training labels is corrupted; the upper level tunes one
//! weight per training sample (through a sigmoid) so that the weighted
//! ridge-regularized softmax classifier fits the clean validation set:
//!
//! ```text
//! f(x, y) = mean validation cross-entropy of classifier y
//! g(x, y) = (1/N) Σ_i sigmoid(x_i) CE_i(y) + λ‖y‖²,   λ = 0.001
//! ```
//!
//! The classifier `y` is a `d x C` weight matrix stored flat, class-major
//! (`y[c*d + j]`). Features are Gaussian class clusters scaled to unit order
//! so the smoothness constants stay O(1).

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{ProblemOracles, SmoothnessConstants};
use crate::problems::{normal_vec, test_rng, BenchmarkProblem, ProblemMetadata};
use crate::vecops;

const N_CLASSES: usize = 10;
const REG_LAMBDA: f64 = 0.001;
// Cluster separation is chosen so the classes overlap: label corruption must
// actually cost accuracy for reweighting to have something to recover. The
// mean pairwise class distance is sep·√(2d), so this keeps it near 2.5
// noise standard deviations at d = 50.
const CLUSTER_SEP: f64 = 0.35;
const TRUST_RADIUS: f64 = 20.0;

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One data split, features stored flat row-major (`features[i*d + j]`).
#[derive(Debug, Clone)]
pub struct Split {
    pub n: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn feature(&self, i: usize, d: usize) -> &[f64] {
        &self.features[i * d..(i + 1) * d]
    }
}

/// Dataset bundle plus the evaluation helpers the oracles are built from.
#[derive(Debug, Clone)]
pub struct DhcData {
    pub dim_feat: usize,
    pub n_classes: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub clean_train_labels: Vec<usize>,
    pub corrupted: Vec<bool>,
    pub reg_lambda: f64,
}

impl DhcData {
    pub fn dim_y(&self) -> usize {
        self.dim_feat * self.n_classes
    }

    fn probs(&self, y: &[f64], a: &[f64]) -> Vec<f64> {
        let d = self.dim_feat;
        let mut logits = Vec::with_capacity(self.n_classes);
        for c in 0..self.n_classes {
            logits.push(vecops::dot(&y[c * d..(c + 1) * d], a));
        }
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for l in logits.iter_mut() {
            *l /= sum;
        }
        logits
    }

    pub fn sample_ce(&self, split: &Split, i: usize, y: &[f64]) -> f64 {
        let a = split.feature(i, self.dim_feat);
        let p = self.probs(y, a);
        -(p[split.labels[i]].max(1e-300)).ln()
    }

    pub fn mean_ce(&self, split: &Split, y: &[f64]) -> f64 {
        (0..split.n).map(|i| self.sample_ce(split, i, y)).sum::<f64>() / split.n as f64
    }

    /// Mean cross-entropy gradient over a split, with per-sample weights.
    /// `weights = None` means uniform weight 1.
    pub fn mean_ce_grad(&self, split: &Split, y: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
        let d = self.dim_feat;
        let mut grad = vec![0.0; self.dim_y()];
        for i in 0..split.n {
            let a = split.feature(i, d);
            let p = self.probs(y, a);
            let w = weights.map_or(1.0, |ws| ws[i]);
            for c in 0..self.n_classes {
                let coef = w * (p[c] - if c == split.labels[i] { 1.0 } else { 0.0 });
                vecops::axpy(&mut grad[c * d..(c + 1) * d], coef, a);
            }
        }
        vecops::scale(&grad, 1.0 / split.n as f64)
    }

    pub fn accuracy(&self, split: &Split, y: &[f64]) -> f64 {
        let d = self.dim_feat;
        let mut correct = 0usize;
        for i in 0..split.n {
            let a = split.feature(i, d);
            let mut best = 0usize;
            let mut best_v = f64::MIN;
            for c in 0..self.n_classes {
                let v = vecops::dot(&y[c * d..(c + 1) * d], a);
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            if best == split.labels[i] {
                correct += 1;
            }
        }
        correct as f64 / split.n as f64
    }
}

/// Handle to a generated DHC instance: the solver-facing problem plus the
/// dataset for accuracy evaluation and baselines.
pub struct DhcProblem {
    pub problem: BenchmarkProblem,
    pub data: Arc<DhcData>,
}

fn generate_split(
    rng: &mut rand_chacha::ChaCha8Rng,
    means: &[Vec<f64>],
    n: usize,
    d: usize,
) -> Split {
    let scale = 1.0 / (d as f64).sqrt();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % N_CLASSES;
        let noise = normal_vec(rng, d);
        for j in 0..d {
            features.push((means[class][j] + noise[j]) * scale);
        }
        labels.push(class);
    }
    Split { n, features, labels }
}

/// Builds the scaled data hyper-cleaning benchmark. `corruption` is the
/// fraction of training labels flipped to a uniformly random other class.
/// The test split has `n_val` samples.
pub fn make_dhc(
    seed: u64,
    n_features: usize,
    n_train: usize,
    n_val: usize,
    corruption: f64,
) -> Result<DhcProblem> {
    if !(0.0..1.0).contains(&corruption) {
        return Err(Error::InvalidConfig(format!(
            "corruption rate must be in [0, 1), got {corruption}"
        )));
    }
    if n_features == 0 || n_train == 0 || n_val == 0 {
        return Err(Error::InvalidConfig("dhc dimensions must be >= 1".into()));
    }
    let mut rng = test_rng(seed);
    let means: Vec<Vec<f64>> = (0..N_CLASSES)
        .map(|_| vecops::scale(&normal_vec(&mut rng, n_features), CLUSTER_SEP))
        .collect();
    let mut train = generate_split(&mut rng, &means, n_train, n_features);
    let val = generate_split(&mut rng, &means, n_val, n_features);
    let test = generate_split(&mut rng, &means, n_val, n_features);

    let clean_train_labels = train.labels.clone();
    let mut corrupted = vec![false; n_train];
    let n_corrupt = (corruption * n_train as f64).floor() as usize;
    // Partial Fisher-Yates to pick the corrupted indices.
    let mut order: Vec<usize> = (0..n_train).collect();
    for i in 0..n_corrupt {
        let j = i + rng.random_range(0..n_train - i);
        order.swap(i, j);
    }
    for &idx in &order[..n_corrupt] {
        let shift = 1 + rng.random_range(0..N_CLASSES - 1);
        train.labels[idx] = (train.labels[idx] + shift) % N_CLASSES;
        corrupted[idx] = true;
    }

    let data = Arc::new(DhcData {
        dim_feat: n_features,
        n_classes: N_CLASSES,
        train,
        val,
        test,
        clean_train_labels,
        corrupted,
        reg_lambda: REG_LAMBDA,
    });

    let dim_x = n_train;
    let dim_y = data.dim_y();

    // Smoothness bounds from the realized feature norms. Popoviciu bounds the
    // softmax Jacobian spectral norm by 1/2 and ‖p - e_b‖ ≤ √2.
    let max_feat_sq = |s: &Split| -> f64 {
        (0..s.n)
            .map(|i| vecops::norm_sq(s.feature(i, n_features)))
            .fold(0.0_f64, f64::max)
    };
    let a2_train = max_feat_sq(&data.train);
    let a2_val = max_feat_sq(&data.val);
    let l_f = 0.5 * a2_val;
    let c_f = (2.0 * a2_val).sqrt();
    let l_yy = 0.5 * a2_train + 2.0 * REG_LAMBDA;
    let l_yx = (2.0 * a2_train / n_train as f64).sqrt() / 4.0;
    let c_g = (2.0 * a2_train).sqrt() + 2.0 * REG_LAMBDA * TRUST_RADIUS;
    let constants = SmoothnessConstants {
        l_f,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f,
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    };

    let weights_of = |x: &[f64]| -> Vec<f64> { x.iter().map(|&v| sigmoid(v)).collect() };

    let oracles = ProblemOracles {
        dim_x,
        dim_y,
        f_eval: {
            let data = data.clone();
            Box::new(move |_x, y| data.mean_ce(&data.val, y))
        },
        grad_f: {
            let data = data.clone();
            Box::new(move |_x, y| {
                (vec![0.0; dim_x], data.mean_ce_grad(&data.val, y, None))
            })
        },
        grad_y_g: {
            let data = data.clone();
            Box::new(move |x, y| {
                let w = weights_of(x);
                let mut g = data.mean_ce_grad(&data.train, y, Some(&w));
                vecops::axpy(&mut g, 2.0 * data.reg_lambda, y);
                g
            })
        },
        hvp_yx: {
            let data = data.clone();
            // Column i of ∇²_{yx} g is (σ'(x_i)/N) ∇_y CE_i, so the adjoint
            // action is per-sample inner products with the direction.
            Box::new(move |x, y, v| {
                let d = data.dim_feat;
                let split = &data.train;
                let mut out = Vec::with_capacity(dim_x);
                for i in 0..split.n {
                    let a = split.feature(i, d);
                    let p = data.probs(y, a);
                    let mut inner = 0.0;
                    for c in 0..data.n_classes {
                        let coef = p[c] - if c == split.labels[i] { 1.0 } else { 0.0 };
                        inner += coef * vecops::dot(&v[c * d..(c + 1) * d], a);
                    }
                    let s = sigmoid(x[i]);
                    out.push(s * (1.0 - s) * inner / split.n as f64);
                }
                out
            })
        },
        hvp_yy: {
            let data = data.clone();
            Box::new(move |x, y, v| {
                let d = data.dim_feat;
                let split = &data.train;
                let w = weights_of(x);
                let mut out = vec![0.0; data.dim_y()];
                let mut s_resp = vec![0.0; data.n_classes];
                for i in 0..split.n {
                    let a = split.feature(i, d);
                    let p = data.probs(y, a);
                    for (c, s) in s_resp.iter_mut().enumerate() {
                        *s = vecops::dot(&v[c * d..(c + 1) * d], a);
                    }
                    let ps = vecops::dot(&p, &s_resp);
                    for c in 0..data.n_classes {
                        let coef = w[i] * p[c] * (s_resp[c] - ps);
                        vecops::axpy(&mut out[c * d..(c + 1) * d], coef, a);
                    }
                }
                let mut out = vecops::scale(&out, 1.0 / split.n as f64);
                vecops::axpy(&mut out, 2.0 * data.reg_lambda, v);
                out
            })
        },
        constants: Some(constants),
    };

    let problem = BenchmarkProblem {
        name: "dhc".into(),
        oracles,
        g_eval: {
            let data = data.clone();
            Box::new(move |x, y| {
                let w = weights_of(x);
                let mut acc = 0.0;
                for i in 0..data.train.n {
                    acc += w[i] * data.sample_ce(&data.train, i, y);
                }
                acc / data.train.n as f64 + data.reg_lambda * vecops::norm_sq(y)
            })
        },
        grad_x_g: Some({
            let data = data.clone();
            Box::new(move |x, y| {
                let mut out = Vec::with_capacity(dim_x);
                for i in 0..data.train.n {
                    let s = sigmoid(x[i]);
                    out.push(s * (1.0 - s) * data.sample_ce(&data.train, i, y) / data.train.n as f64);
                }
                out
            })
        }),
        metadata: ProblemMetadata {
            seed,
            dim_x,
            dim_y,
            condition_number: None,
            corruption_rate: Some(corruption),
            reg_lambda: Some(REG_LAMBDA),
            strongly_convex: true,
            sigma_plus_min: None,
            trust_radius: TRUST_RADIUS,
        },
        ground_truth: None,
    };

    Ok(DhcProblem { problem, data })
}
