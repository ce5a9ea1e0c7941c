//! Björck orthonormal projection and spectral-norm estimation.
//!
//! One Björck step of order `p` maps `Ŵ ↦ Ŵ · Σ_{j=0..p} c_j Q^j` with
//! `Q = I − ŴᵀŴ` and `c_j = (−1)^j C(−1/2, j)`, the truncated Taylor series
//! of `(ŴᵀŴ)^{-1/2}`. Iterating converges to the orthonormal polar factor
//! of `W` when `‖WᵀW − I‖₂ < 1`, which dividing by the spectral norm
//! guarantees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dense::dot;
use crate::nn::DenseMatrix;

/// Defects below this are treated as converged when checking for growth.
const NOISE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthoConfig {
    /// Taylor order of each step (at least 1).
    pub order: usize,
    pub iterations: usize,
    /// Divide by the estimated spectral norm before iterating.
    pub prescale: bool,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for OrthoConfig {
    fn default() -> Self {
        Self {
            order: 1,
            iterations: 15,
            prescale: true,
            power_iters: 50,
            power_tol: 1e-6,
        }
    }
}

impl OrthoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("ortho.order must be at least 1".into()));
        }
        if self.power_iters == 0 && self.prescale {
            return Err(Error::Config("ortho.power_iters must be positive when prescaling".into()));
        }
        if !(self.power_tol >= 0.0) {
            return Err(Error::Config("ortho.power_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Largest singular value with its singular vectors (`W·right = sigma·left`).
#[derive(Clone, Debug)]
pub struct SpectralEstimate {
    pub sigma: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Power iteration on `WᵀW` from the normalized all-ones vector.
///
/// Stops after `iters` rounds or once the relative change of the estimate
/// drops to `tol`. A zero matrix yields `sigma = 0`.
pub fn spectral_estimate(w: &DenseMatrix, iters: usize, tol: f64) -> SpectralEstimate {
    let (rows, cols) = w.shape();
    let zero = || SpectralEstimate {
        sigma: 0.0,
        left: vec![0.0; rows],
        right: vec![0.0; cols],
    };
    if rows == 0 || cols == 0 || w.max_abs() == 0.0 {
        return zero();
    }
    let mut v = vec![1.0; cols];
    normalize(&mut v);
    let mut u = w.mat_vec(&v);
    if normalize(&mut u) == 0.0 {
        // The all-ones start is in the null space; start on the heaviest column.
        let j = (0..cols)
            .max_by(|&a, &b| {
                let na: f64 = (0..rows).map(|i| w.get(i, a).powi(2)).sum();
                let nb: f64 = (0..rows).map(|i| w.get(i, b).powi(2)).sum();
                na.total_cmp(&nb)
            })
            .unwrap();
        v = vec![0.0; cols];
        v[j] = 1.0;
        u = w.mat_vec(&v);
        normalize(&mut u);
    }
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        v = w.t_mat_vec(&u);
        let s = normalize(&mut v);
        u = w.mat_vec(&v);
        normalize(&mut u);
        let done = (s - sigma).abs() <= tol * s;
        sigma = s;
        if done {
            break;
        }
    }
    // Final Rayleigh value keeps sigma, left and right mutually consistent.
    let mut left = w.mat_vec(&v);
    let sigma = normalize(&mut left);
    SpectralEstimate {
        sigma,
        left,
        right: v,
    }
}

/// Estimated `‖W‖₂`.
pub fn spectral_norm(w: &DenseMatrix, iters: usize, tol: f64) -> f64 {
    spectral_estimate(w, iters, tol).sigma
}

/// `‖W‖₂` to working precision, from the largest eigenvalue of the smaller
/// Gram matrix. Unlike power iteration it does not slow down when the top
/// singular values are close; the cost is cubic in `min(rows, cols)`.
pub fn exact_spectral_norm(w: &DenseMatrix) -> f64 {
    let (rows, cols) = w.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let gram = if cols <= rows { w.gram() } else { w.matmul_t(w).expect("shapes agree") };
    let k = gram.rows();
    let g = nalgebra::DMatrix::from_row_slice(k, k, gram.as_slice());
    let top = g.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
    top.max(0.0).sqrt()
}

/// `‖WᵀW − I‖_F`.
pub fn ortho_defect(w: &DenseMatrix) -> f64 {
    let mut g = w.gram();
    for i in 0..g.rows() {
        let d = g.get(i, i) - 1.0;
        g.set(i, i, d);
    }
    g.frobenius_norm()
}

/// `c_j = (−1)^j C(−1/2, j)` for `j = 0..=order`, by the ratio recurrence.
pub fn taylor_coefficients(order: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(order + 1);
    let mut binom = 1.0;
    c.push(1.0);
    for j in 1..=order {
        binom *= (-0.5 - (j as f64) + 1.0) / j as f64;
        c.push(if j % 2 == 0 { binom } else { -binom });
    }
    c
}

fn eye_minus_gram(w: &DenseMatrix) -> DenseMatrix {
    let mut q = w.gram().scale(-1.0);
    for i in 0..q.rows() {
        q.set(i, i, q.get(i, i) + 1.0);
    }
    q
}

/// `Σ_j c_j Q^j` by Horner's rule.
fn taylor_poly(q: &DenseMatrix, coeffs: &[f64]) -> DenseMatrix {
    let n = q.rows();
    let mut acc = DenseMatrix::identity(n).scale(*coeffs.last().unwrap());
    for &c in coeffs.iter().rev().skip(1) {
        acc = q.matmul(&acc).expect("square");
        for i in 0..n {
            acc.set(i, i, acc.get(i, i) + c);
        }
    }
    acc
}

/// Result of a projection with the per-iteration defect history.
#[derive(Clone, Debug)]
pub struct BjorckTrace {
    pub output: DenseMatrix,
    /// `‖ŴₖᵀŴₖ − I‖_F` for `k = 0..=iterations` (in the tall orientation).
    pub defects: Vec<f64>,
    /// Spectral-norm estimate used for prescaling, if any.
    pub scale: Option<f64>,
}

/// Recorded forward pass, enough to differentiate through every iteration.
#[derive(Clone, Debug)]
pub struct BjorckTape {
    transposed: bool,
    input: DenseMatrix,
    prescale: Option<SpectralEstimate>,
    iterates: Vec<DenseMatrix>,
    qs: Vec<DenseMatrix>,
    polys: Vec<DenseMatrix>,
    coeffs: Vec<f64>,
}

/// Projects `w` towards the nearest (semi-)orthonormal matrix.
///
/// Wide matrices are handled through their transpose so the result always
/// has orthonormal rows or columns, whichever is fewer. The input is left
/// untouched.
pub fn bjorck_project(w: &DenseMatrix, cfg: &OrthoConfig) -> Result<DenseMatrix> {
    Ok(bjorck_trace(w, cfg)?.output)
}

pub fn bjorck_trace(w: &DenseMatrix, cfg: &OrthoConfig) -> Result<BjorckTrace> {
    let (trace, _) = run(w, cfg, false)?;
    Ok(trace)
}

/// Projection plus the tape needed for [`BjorckTape::backward`].
pub fn bjorck_with_tape(w: &DenseMatrix, cfg: &OrthoConfig) -> Result<(DenseMatrix, BjorckTape)> {
    let (trace, tape) = run(w, cfg, true)?;
    Ok((trace.output, tape.expect("tape requested")))
}

fn run(w: &DenseMatrix, cfg: &OrthoConfig, record: bool) -> Result<(BjorckTrace, Option<BjorckTape>)> {
    cfg.validate()?;
    if !w.is_finite() {
        return Err(Error::NonFinite("weight matrix passed to Björck projection".into()));
    }
    let transposed = w.rows() < w.cols();
    let tall = if transposed { w.transpose() } else { w.clone() };

    let mut prescale = None;
    let mut cur = tall.clone();
    if cfg.prescale {
        let est = spectral_estimate(&tall, cfg.power_iters, cfg.power_tol);
        if est.sigma > 0.0 {
            cur = tall.scale(1.0 / est.sigma);
            prescale = Some(est);
        }
    }

    let coeffs = taylor_coefficients(cfg.order);
    let mut defects = Vec::with_capacity(cfg.iterations + 1);
    let mut iterates = Vec::new();
    let mut qs = Vec::new();
    let mut polys = Vec::new();
    let mut growth = 0;
    for k in 0..cfg.iterations {
        let q = eye_minus_gram(&cur);
        let defect = q.frobenius_norm();
        if !defect.is_finite() {
            return Err(Error::Convergence {
                layer: 0,
                iteration: k,
                defect,
            });
        }
        if let Some(&prev) = defects.last() {
            // growth at rounding level is noise, not divergence
            growth = if defect > prev && defect > NOISE_FLOOR { growth + 1 } else { 0 };
            if growth >= 3 {
                return Err(Error::Convergence {
                    layer: 0,
                    iteration: k,
                    defect,
                });
            }
        }
        defects.push(defect);
        let poly = taylor_poly(&q, &coeffs);
        let next = cur.matmul(&poly)?;
        if record {
            iterates.push(cur);
            qs.push(q);
            polys.push(poly);
        }
        cur = next;
    }
    let final_defect = ortho_defect(&cur);
    if !final_defect.is_finite() {
        return Err(Error::Convergence {
            layer: 0,
            iteration: cfg.iterations,
            defect: final_defect,
        });
    }
    defects.push(final_defect);

    let scale = prescale.as_ref().map(|e| e.sigma);
    let output = if transposed { cur.transpose() } else { cur };
    let tape = record.then_some(BjorckTape {
        transposed,
        input: tall,
        prescale,
        iterates,
        qs,
        polys,
        coeffs,
    });
    Ok((
        BjorckTrace {
            output,
            defects,
            scale,
        },
        tape,
    ))
}

impl BjorckTape {
    /// Pulls a gradient on the projected matrix back to the raw input,
    /// through every Björck step and the spectral prescaling.
    pub fn backward(&self, d_out: &DenseMatrix) -> Result<DenseMatrix> {
        let mut g = if self.transposed {
            d_out.transpose()
        } else {
            d_out.clone()
        };
        if g.shape() != self.input.shape() {
            return Err(Error::dim("gradient shape does not match the projected matrix"));
        }
        for k in (0..self.iterates.len()).rev() {
            let w = &self.iterates[k];
            let q = &self.qs[k];
            // Y = W·P(Q): dW = dY·P, dP = Wᵀ·dY.
            let mut d_w = g.matmul(&self.polys[k])?;
            let d_p = w.t_matmul(&g)?;
            // P = Σ c_j Q^j with Q symmetric: dQ = Σ_j c_j Σ_a Q^a dP Q^{j-1-a}.
            let n = q.rows();
            let mut d_q = DenseMatrix::zeros(n, n);
            let mut q_pows = vec![DenseMatrix::identity(n)];
            for j in 1..self.coeffs.len() {
                q_pows.push(q_pows[j - 1].matmul(q)?);
            }
            for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
                for a in 0..j {
                    let term = q_pows[a].matmul(&d_p)?.matmul(&q_pows[j - 1 - a])?;
                    d_q.axpy(c, &term)?;
                }
            }
            // Q = I − WᵀW: dW −= W·(dQ + dQᵀ).
            let sym = d_q.add(&d_q.transpose())?;
            d_w.axpy(-1.0, &w.matmul(&sym)?)?;
            g = d_w;
        }
        if let Some(est) = &self.prescale {
            // W_s = W / σ(W), with dσ/dW = u vᵀ at the converged singular pair.
            let sigma = est.sigma;
            let coupling = g.inner(&self.input) / (sigma * sigma);
            let mut d_w = g.scale(1.0 / sigma);
            for i in 0..d_w.rows() {
                for j in 0..d_w.cols() {
                    let v = d_w.get(i, j) - coupling * est.left[i] * est.right[j];
                    d_w.set(i, j, v);
                }
            }
            g = d_w;
        }
        Ok(if self.transposed { g.transpose() } else { g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_match_taylor_series() {
        // (1 − q)^{-1/2} = 1 + q/2 + 3q²/8 + 5q³/16 + 35q⁴/128
        let c = taylor_coefficients(4);
        let want = [1.0, 0.5, 0.375, 0.3125, 35.0 / 128.0];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DenseMatrix::identity(3), 50, 1e-12) - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&DenseMatrix::diag(&[3.0, 1.0]), 200, 1e-15) - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(2, 3), 50, 1e-6), 0.0);
        // All-ones start lies in the null space of this one.
        let w = DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert!((spectral_norm(&w, 50, 1e-12) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn defect_examples() {
        assert_eq!(ortho_defect(&DenseMatrix::identity(4)), 0.0);
        let two_i = DenseMatrix::identity(2).scale(2.0);
        assert!((ortho_defect(&two_i) - 3.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_input_is_a_fixed_point() {
        let (c, s) = (0.6, 0.8);
        let w = DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let cfg = OrthoConfig {
            prescale: false,
            ..OrthoConfig::default()
        };
        let out = bjorck_project(&w, &cfg).unwrap();
        for (a, b) in out.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn prescaled_multiple_of_identity_projects_to_identity() {
        let w = DenseMatrix::identity(3).scale(2.0);
        let out = bjorck_project(&w, &OrthoConfig::default()).unwrap();
        let diff = out.sub(&DenseMatrix::identity(3)).unwrap();
        assert!(diff.max_abs() < 1e-15);
        assert_eq!(w, DenseMatrix::identity(3).scale(2.0));
    }

    #[test]
    fn wide_matrices_get_orthonormal_rows() {
        let w = DenseMatrix::from_fn(2, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let cfg = OrthoConfig {
            iterations: 40,
            ..OrthoConfig::default()
        };
        let out = bjorck_project(&w, &cfg).unwrap();
        assert_eq!(out.shape(), (2, 5));
        assert!(ortho_defect(&out.transpose()) < 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        // Without prescaling, singular values far above √2 blow up.
        let w = DenseMatrix::identity(2).scale(3.0);
        let cfg = OrthoConfig {
            prescale: false,
            iterations: 10,
            ..OrthoConfig::default()
        };
        assert!(matches!(bjorck_project(&w, &cfg), Err(Error::Convergence { .. })));
    }

    #[test]
    fn zero_order_is_rejected() {
        let cfg = OrthoConfig {
            order: 0,
            ..OrthoConfig::default()
        };
        assert!(bjorck_project(&DenseMatrix::identity(2), &cfg).is_err());
    }
}
