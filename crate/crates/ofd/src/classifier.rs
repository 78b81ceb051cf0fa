//! Convex quadratic (ellipsoidal) classifier: projected-subgradient training
//! under a PSD constraint, margin evaluation, and the whitened ball form of
//! the decision set `{p : p'W2 p + w1'p + w0 <= 0}`.

use crate::dataset_gen::LabeledDataset;
use crate::opt_core::{project_psd, OptError};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("training objective diverged (NaN)")]
    Diverged,
    #[error("ellipsoid is degenerate: {0}")]
    DegenerateEllipsoid(String),
    #[error(transparent)]
    Numeric(#[from] OptError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Per-coordinate affine map used during training: `z = (p - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub w2: DMatrix<f64>,
    pub w1: DVector<f64>,
    pub w0: f64,
    pub standardization: Standardization,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidJson {
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    w1: Vec<f64>,
    w0: f64,
    standardization: Standardization,
}

impl Serialize for Ellipsoid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EllipsoidJson {
            w2: (0..self.w2.nrows())
                .map(|i| self.w2.row(i).iter().copied().collect())
                .collect(),
            w1: self.w1.iter().copied().collect(),
            w0: self.w0,
            standardization: self.standardization.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ellipsoid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = EllipsoidJson::deserialize(d)?;
        let t = raw.w1.len();
        if raw.w2.len() != t || raw.w2.iter().any(|r| r.len() != t) {
            return Err(serde::de::Error::custom("inconsistent ellipsoid dimensions"));
        }
        Ok(Ellipsoid {
            w2: DMatrix::from_fn(t, t, |i, j| raw.w2[i][j]),
            w1: DVector::from_vec(raw.w1),
            w0: raw.w0,
            standardization: raw.standardization,
        })
    }
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.w1.len()
    }

    /// Margin `d(p) = p'W2 p + w1'p + w0`; feasible iff `d(p) <= 0`.
    pub fn margin(&self, p: &DVector<f64>) -> f64 {
        (p.transpose() * &self.w2 * p)[(0, 0)] + self.w1.dot(p) + self.w0
    }
}

/// `-1` (feasible, inside the ellipsoid) iff `d(p) <= 0`, else `+1`.
pub fn classify(e: &Ellipsoid, p: &DVector<f64>) -> (i8, f64) {
    let d = e.margin(p);
    (if d <= 0.0 { -1 } else { 1 }, d)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    /// Training objective (hinge + regularizer) per epoch.
    pub objective_trace: Vec<f64>,
    pub condition_number: f64,
    pub lambda: f64,
    pub epochs: usize,
    /// Positive-definiteness floor added to W2 after training.
    pub pd_floor: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lambda: f64,
    pub epochs: usize,
    pub step0: f64,
    pub split_seed: u64,
    /// Fraction of points used for training (rest validates).
    pub train_fraction: f64,
}

impl TrainOptions {
    pub fn new(lambda: f64, split_seed: u64) -> Self {
        TrainOptions {
            lambda,
            epochs: 4000,
            step0: 0.02,
            split_seed,
            train_fraction: 0.8,
        }
    }
}

/// Smoothing width for the hinge kink; keeps the full-batch gradient well
/// defined without measurably moving the optimum.
const HINGE_SMOOTHING: f64 = 1e-3;

/// Trains by full-batch projected gradient descent on standardized
/// coordinates, minimizing
/// `(1/N) sum [1 - y_n d(p_n)]_+ + lambda (|W2|_F^2 + |w1|^2)`
/// over PSD `W2` (projected onto the PSD cone every step). Steps are
/// diagonally preconditioned (Adam-style moment estimates, rate `step0`),
/// which copes with the poor conditioning of the lifted quadratic features;
/// best-iterate selection on validation hinge loss.
pub fn train(
    data: &LabeledDataset,
    opts: &TrainOptions,
) -> Result<(Ellipsoid, TrainReport), ClassifierError> {
    let n = data.points.len();
    if n < 2 {
        return Err(ClassifierError::SingleClassDataset);
    }
    let t = data.points[0].p.len();
    let has_pos = data.points.iter().any(|p| p.y == 1);
    let has_neg = data.points.iter().any(|p| p.y == -1);
    if !has_pos || !has_neg {
        return Err(ClassifierError::SingleClassDataset);
    }

    // 80/20 split by seeded shuffle
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.split_seed));
    let n_train = ((n as f64 * opts.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, val_idx) = order.split_at(n_train);

    // standardize per hour on the training split
    let mut shift = vec![0.0; t];
    let mut scale = vec![0.0; t];
    for &i in train_idx {
        for k in 0..t {
            shift[k] += data.points[i].p[k];
        }
    }
    for v in shift.iter_mut() {
        *v /= n_train as f64;
    }
    for &i in train_idx {
        for k in 0..t {
            scale[k] += (data.points[i].p[k] - shift[k]).powi(2);
        }
    }
    for v in scale.iter_mut() {
        *v = (*v / n_train as f64).sqrt();
        if *v < 1e-12 {
            *v = 1.0;
        }
    }

    let z_of = |i: usize| {
        DVector::from_fn(t, |k, _| (data.points[i].p[k] - shift[k]) / scale[k])
    };
    let zs: Vec<DVector<f64>> = (0..n).map(z_of).collect();
    let ys: Vec<f64> = data.points.iter().map(|p| p.y as f64).collect();

    let margin =
        |a: &DMatrix<f64>, b: &DVector<f64>, c: f64, z: &DVector<f64>| -> f64 {
            (z.transpose() * a * z)[(0, 0)] + b.dot(z) + c
        };
    let hinge_loss = |a: &DMatrix<f64>, b: &DVector<f64>, c: f64, idx: &[usize]| -> f64 {
        idx.iter()
            .map(|&i| (1.0 - ys[i] * margin(a, b, c, &zs[i])).max(0.0))
            .sum::<f64>()
            / idx.len() as f64
    };

    let mut a = DMatrix::<f64>::identity(t, t);
    let mut b = DVector::<f64>::zeros(t);
    let mut c = -1.0f64;
    let mut best = (a.clone(), b.clone(), c);
    let mut best_val = f64::INFINITY;
    let mut trace = Vec::with_capacity(opts.epochs);

    // Adam moment accumulators
    let mut ma = DMatrix::<f64>::zeros(t, t);
    let mut va = DMatrix::<f64>::zeros(t, t);
    let mut mb = DVector::<f64>::zeros(t);
    let mut vb = DVector::<f64>::zeros(t);
    let (mut mc, mut vc) = (0.0f64, 0.0f64);
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const ADAM_EPS: f64 = 1e-8;
    let eps = HINGE_SMOOTHING;

    for epoch in 1..=opts.epochs {
        let objective = hinge_loss(&a, &b, c, train_idx)
            + opts.lambda * (a.norm_squared() + b.norm_squared());
        if !objective.is_finite() {
            return Err(ClassifierError::Diverged);
        }
        trace.push(objective);
        let val = hinge_loss(&a, &b, c, val_idx);
        if val < best_val {
            best_val = val;
            best = (a.clone(), b.clone(), c);
        }

        // gradient of the smoothed hinge (quadratic within `eps` of the kink)
        let mut ga = DMatrix::zeros(t, t);
        let mut gb = DVector::zeros(t);
        let mut gc = 0.0;
        for &i in train_idx {
            let z = &zs[i];
            let m = 1.0 - ys[i] * margin(&a, &b, c, z);
            if m <= 0.0 {
                continue;
            }
            let w = -ys[i] * if m >= eps { 1.0 } else { m / eps };
            ga += w * z * z.transpose();
            gb += w * z;
            gc += w;
        }
        let inv_n = 1.0 / n_train as f64;
        ga = ga * inv_n + 2.0 * opts.lambda * &a;
        gb = gb * inv_n + 2.0 * opts.lambda * &b;
        gc *= inv_n;

        let bc1 = 1.0 - B1.powi(epoch as i32);
        let bc2 = 1.0 - B2.powi(epoch as i32);
        ma = &ma * B1 + &ga * (1.0 - B1);
        va = va.zip_map(&ga, |v, g| B2 * v + (1.0 - B2) * g * g);
        mb = &mb * B1 + &gb * (1.0 - B1);
        vb = vb.zip_map(&gb, |v, g| B2 * v + (1.0 - B2) * g * g);
        mc = B1 * mc + (1.0 - B1) * gc;
        vc = B2 * vc + (1.0 - B2) * gc * gc;

        let lr = opts.step0;
        a -= lr * (&ma / bc1).zip_map(&va, |m, v| m / ((v / bc2).sqrt() + ADAM_EPS));
        b -= lr * (&mb / bc1).zip_map(&vb, |m, v| m / ((v / bc2).sqrt() + ADAM_EPS));
        c -= lr * (mc / bc1) / ((vc / bc2).sqrt() + ADAM_EPS);
        a = project_psd(&a)?;
    }
    let (a, b, c) = best;

    // positive-definiteness floor so the ball form stays invertible
    let pd_floor = 1e-6 * a.trace().max(1.0) / t as f64;
    let a = &a + DMatrix::identity(t, t) * pd_floor;

    // undo standardization: with D = diag(1/scale), mu = shift,
    // d(p) = (p-mu)'DAD(p-mu) + b'D(p-mu) + c
    let d_inv = DMatrix::from_diagonal(&DVector::from_fn(t, |k, _| 1.0 / scale[k]));
    let mu = DVector::from_column_slice(&shift);
    let dad = &d_inv * &a * &d_inv;
    let w1 = &d_inv * &b - 2.0 * &dad * &mu;
    let w0 = (mu.transpose() * &dad * &mu)[(0, 0)] - (&d_inv * &b).dot(&mu) + c;
    let ellipsoid = Ellipsoid {
        w2: (&dad + dad.transpose()) * 0.5,
        w1,
        w0,
        standardization: Standardization {
            shift,
            scale,
        },
    };

    let accuracy = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return f64::NAN;
        }
        let hits = idx
            .iter()
            .filter(|&&i| {
                let (label, _) =
                    classify(&ellipsoid, &DVector::from_column_slice(&data.points[i].p));
                label == data.points[i].y
            })
            .count();
        hits as f64 / idx.len() as f64
    };
    let eig = ellipsoid.w2.clone().symmetric_eigen().eigenvalues;
    let report = TrainReport {
        train_accuracy: accuracy(train_idx),
        validation_accuracy: accuracy(val_idx),
        objective_trace: trace,
        condition_number: eig.max() / eig.min().max(f64::MIN_POSITIVE),
        lambda: opts.lambda,
        epochs: opts.epochs,
        pd_floor,
    };
    Ok((ellipsoid, report))
}

/// Whitened form: `d(p) <= 0  <=>  |M p + m| <= r` with `M = W2^{1/2}`,
/// `m = W2^{-1/2} w1 / 2`, `r = sqrt(w1'W2^{-1}w1 / 4 - w0)` (completing the
/// square fixes the 1/2 factors and the square root).
pub fn to_ball_form(e: &Ellipsoid) -> Result<(DMatrix<f64>, DVector<f64>, f64), ClassifierError> {
    let t = e.dim();
    if e.w2.nrows() != t || e.w2.ncols() != t {
        return Err(ClassifierError::DimensionMismatch(format!(
            "W2 is {}x{} for dimension {}",
            e.w2.nrows(),
            e.w2.ncols(),
            t
        )));
    }
    let eig = ((&e.w2 + e.w2.transpose()) * 0.5).symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(ClassifierError::DegenerateEllipsoid(format!(
            "W2 minimum eigenvalue {min_eig} is not positive"
        )));
    }
    let sqrt_vals = eig.eigenvalues.map(|l| l.sqrt());
    let m_mat =
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let inv_sqrt =
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals.map(|s| 1.0 / s))
            * eig.eigenvectors.transpose();
    let m_vec = &inv_sqrt * &e.w1 * 0.5;
    let r2 = m_vec.norm_squared() - e.w0;
    if r2 <= 0.0 {
        return Err(ClassifierError::DegenerateEllipsoid(format!(
            "squared radius {r2} is not positive"
        )));
    }
    Ok((m_mat, m_vec, r2.sqrt()))
}
