//! Server aggregation that re-weights class embeddings by their role as
//! support vectors of a linear SVM separating the two classes.

use super::aggregate::aggregate_fedavg;
use crate::error::{Error, Result};
use crate::model::{ParamVector, PROJ_W};
use crate::numkernel::{dot, norm};

#[derive(Clone, Debug, PartialEq)]
pub struct SvmFit {
    pub w: Vec<f64>,
    pub b: f64,
    /// Dual coefficients in `[0, C]`; positive entries mark support vectors.
    pub alpha: Vec<f64>,
}

impl SvmFit {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }
}

/// Soft-margin linear SVM with the bias folded in as a constant feature,
/// solved by projected gradient ascent on the box-constrained dual.
pub fn fit_linear_svm(points: &[&[f64]], labels: &[f64], c: f64, iters: usize) -> Result<SvmFit> {
    let n = points.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Shape("SVM needs one label per point".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("SVM points differ in width".into()));
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = labels[i] * labels[j] * (dot(points[i], points[j]) + 1.0);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    // Gershgorin bound on the largest eigenvalue gives a safe step.
    let lmax = (0..n)
        .map(|i| q[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut alpha = vec![0.0; n];
    if lmax > 0.0 {
        let eta = 1.0 / lmax;
        let mut qa = vec![0.0; n];
        for _ in 0..iters {
            for i in 0..n {
                qa[i] = dot(&q[i * n..(i + 1) * n], &alpha);
            }
            for i in 0..n {
                alpha[i] = (alpha[i] + eta * (1.0 - qa[i])).clamp(0.0, c);
            }
        }
    }
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for i in 0..n {
        let s = alpha[i] * labels[i];
        crate::numkernel::axpy(s, points[i], &mut w);
        b += s;
    }
    Ok(SvmFit { w, b, alpha })
}

/// FedAvg everywhere except the class-embedding rows, which are rebuilt
/// from support-vector clients and then pushed apart along the SVM normal.
pub fn aggregate_turbosvm(
    locals: &[&ParamVector],
    weights: &[f64],
    svm_c: f64,
    svm_iters: usize,
    server_lr: f64,
) -> Result<ParamVector> {
    if locals.len() < 2 {
        return Err(Error::Protocol(format!(
            "TurboSVM aggregation needs at least 2 participants, got {}",
            locals.len()
        )));
    }
    let mut out = aggregate_fedavg(locals, weights)?;
    let rows: Vec<&[f64]> = locals
        .iter()
        .map(|l| l.segment(PROJ_W))
        .collect::<Result<_>>()?;
    if rows.iter().all(|r| *r == rows[0]) {
        return Ok(out);
    }
    let d = rows[0].len() / 2;
    let mut points: Vec<&[f64]> = Vec::with_capacity(2 * rows.len());
    let mut labels = Vec::with_capacity(2 * rows.len());
    for r in &rows {
        points.push(&r[..d]);
        labels.push(-1.0);
        points.push(&r[d..]);
        labels.push(1.0);
    }
    let fit = fit_linear_svm(&points, &labels, svm_c, svm_iters)?;

    let mut emb = [vec![0.0; d], vec![0.0; d]];
    for (class, e) in emb.iter_mut().enumerate() {
        let active: f64 = (0..rows.len()).map(|i| fit.alpha[2 * i + class]).sum();
        for (i, r) in rows.iter().enumerate() {
            let wgt = if active > 0.0 {
                fit.alpha[2 * i + class] / active
            } else {
                weights[i]
            };
            if wgt != 0.0 {
                crate::numkernel::axpy(wgt, &r[class * d..(class + 1) * d], e);
            }
        }
    }
    let wn = norm(&fit.w);
    if wn > 0.0 {
        for (k, wk) in fit.w.iter().enumerate() {
            let step = server_lr * wk / wn;
            emb[0][k] -= step;
            emb[1][k] += step;
        }
    }
    let seg = out.segment_mut(PROJ_W)?;
    seg[..d].copy_from_slice(&emb[0]);
    seg[d..].copy_from_slice(&emb[1]);
    Ok(out)
}
