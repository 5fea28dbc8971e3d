//! Fully-digital optima, MMSE digital stages and MSE evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::hardware::HardwareScheme;
use crate::matcore::{
    column_rank_ratio, diag_real, hermitian_sqrt, hpd_inverse, real, symmetrize, top_eigvecs,
    trace_re, CMatrix,
};
use crate::random::{gaussian_matrix, substream};

/// Relative singular-value floor below which an analog matrix counts as rank deficient.
pub const ANALOG_RANK_TOL: f64 = 1e-10;
/// Relative eigenvalue floor for inverting Gram matrices.
pub const GRAM_REL_TOL: f64 = 1e-12;

const MONTE_CARLO_SALT: u64 = 0x4d43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub n_rf_t: usize,
    pub n_rf_r: usize,
}

impl SystemDims {
    /// Dimensions with as many RF chains as streams on both sides.
    pub fn new(n_t: usize, n_r: usize, n_s: usize) -> Self {
        SystemDims {
            n_t,
            n_r,
            n_s,
            n_rf_t: n_s,
            n_rf_r: n_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_s >= 1
            && self.n_s <= self.n_rf_t
            && self.n_rf_t <= self.n_t
            && self.n_s <= self.n_rf_r
            && self.n_rf_r <= self.n_r;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "need 1 <= N_s <= N_RF <= N on both sides, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridPrecoder {
    pub f_rf: CMatrix,
    pub f_bb: CMatrix,
    pub scheme: HardwareScheme,
}

impl HybridPrecoder {
    /// The overall precoder `F_RF F_BB`.
    pub fn matrix(&self) -> CMatrix {
        &self.f_rf * &self.f_bb
    }

    pub fn power(&self) -> f64 {
        self.matrix().norm_squared()
    }
}

#[derive(Debug, Clone)]
pub struct HybridCombiner {
    pub w_rf: CMatrix,
    pub w_bb: CMatrix,
    pub scheme: HardwareScheme,
}

impl HybridCombiner {
    /// The overall combiner `W_RF W_BB`.
    pub fn matrix(&self) -> CMatrix {
        &self.w_rf * &self.w_bb
    }
}

/// Power allocation across the eigen-directions of the optimal precoder.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights", rename_all = "snake_case")]
pub enum Allocation {
    /// Equal power `N_s / N_RF` per direction.
    #[default]
    Uniform,
    /// Nonnegative amplitudes, rescaled so the total power equals `N_s`.
    Weights(Vec<f64>),
}

/// The fully-digital optimal precoder `V Phi` (any unitary `T` on the right is equally optimal).
#[derive(Debug, Clone)]
pub struct DigitalPrecoderOpt {
    pub v: CMatrix,
    pub phi: Vec<f64>,
    pub allocation: Allocation,
    /// Eigenvalues of `H~* R~^{-1} H~` matching the columns of `v`.
    pub eigenvalues: Vec<f64>,
    pub n_s: usize,
}

impl DigitalPrecoderOpt {
    /// `V Phi`.
    pub fn target(&self) -> CMatrix {
        &self.v * diag_real(&self.phi)
    }

    pub fn n_rf(&self) -> usize {
        self.v.ncols()
    }

    /// Builds the optimum directly from orthonormal columns and amplitudes.
    pub fn from_parts(v: CMatrix, phi: Vec<f64>, n_s: usize) -> Self {
        let k = v.ncols();
        DigitalPrecoderOpt {
            v,
            phi,
            allocation: Allocation::Uniform,
            eigenvalues: vec![0.0; k],
            n_s,
        }
    }
}

fn allocate(allocation: &Allocation, n_rf: usize, n_s: usize) -> Result<Vec<f64>> {
    match allocation {
        Allocation::Uniform => Ok(vec![(n_s as f64 / n_rf as f64).sqrt(); n_rf]),
        Allocation::Weights(w) => {
            if w.len() != n_rf || w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "allocation needs {n_rf} nonnegative weights"
                )));
            }
            let total: f64 = w.iter().map(|x| x * x).sum();
            if total == 0.0 {
                return Err(Error::InvalidConfig(
                    "allocation weights are all zero".into(),
                ));
            }
            let scale = (n_s as f64 / total).sqrt();
            Ok(w.iter().map(|x| x * scale).collect())
        }
    }
}

/// Optimal fully-digital precoder for the effective channel `H~` (`N x N_t`)
/// and effective interference covariance `R~`.
pub fn optimal_digital_precoder(
    h_tilde: &CMatrix,
    r_tilde: &CMatrix,
    dims: &SystemDims,
    allocation: &Allocation,
) -> Result<DigitalPrecoderOpt> {
    if h_tilde.ncols() != dims.n_t || r_tilde.nrows() != h_tilde.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "H~ is {}x{}, R~ is {}x{}, N_t = {}",
            h_tilde.nrows(),
            h_tilde.ncols(),
            r_tilde.nrows(),
            r_tilde.ncols(),
            dims.n_t
        )));
    }
    if dims.n_rf_t == 0 || dims.n_rf_t > dims.n_t {
        return Err(Error::DimensionMismatch(format!(
            "N_RF_t = {} with N_t = {}",
            dims.n_rf_t, dims.n_t
        )));
    }
    let r_inv = hpd_inverse(r_tilde, GRAM_REL_TOL).ok_or(Error::SingularInterference)?;
    let m = symmetrize(&(h_tilde.adjoint() * r_inv * h_tilde))?;
    let (v, eigenvalues) = top_eigvecs(&m, dims.n_rf_t)?;
    let phi = allocate(allocation, dims.n_rf_t, dims.n_s)?;
    Ok(DigitalPrecoderOpt {
        v,
        phi,
        allocation: allocation.clone(),
        eigenvalues,
        n_s: dims.n_s,
    })
}

fn check_analog(w_rf: &CMatrix, n_r: usize) -> Result<()> {
    if w_rf.nrows() != n_r {
        return Err(Error::DimensionMismatch(format!(
            "analog matrix has {} rows, expected {n_r}",
            w_rf.nrows()
        )));
    }
    let ratio = column_rank_ratio(w_rf);
    if ratio <= ANALOG_RANK_TOL {
        return Err(Error::RankDeficientAnalog(ratio));
    }
    Ok(())
}

/// `[W_RF* (H H* + R_z) W_RF]^{-1}`.
fn inner_inverse(h_bar: &CMatrix, r_z: &CMatrix, w_rf: &CMatrix) -> Result<CMatrix> {
    check_analog(w_rf, h_bar.nrows())?;
    if r_z.shape() != (h_bar.nrows(), h_bar.nrows()) {
        return Err(Error::DimensionMismatch("R_z does not match H".into()));
    }
    let wh = w_rf.adjoint() * h_bar;
    let inner = &wh * wh.adjoint() + w_rf.adjoint() * r_z * w_rf;
    hpd_inverse(&inner, GRAM_REL_TOL).ok_or(Error::SingularInner)
}

/// MMSE digital stage for a fixed analog combiner: the returned `W_BB`
/// (`N_RF x N_s`) satisfies `W_BB* = H* W_RF [W_RF* (H H* + R_z) W_RF]^{-1}`.
pub fn mmse_digital_combiner(h_bar: &CMatrix, r_z: &CMatrix, w_rf: &CMatrix) -> Result<CMatrix> {
    let inv = inner_inverse(h_bar, r_z, w_rf)?;
    Ok(inv * w_rf.adjoint() * h_bar)
}

/// MSE (summed over the `N_s` columns of `h_bar`) of the MMSE estimate after `w_rf`.
pub fn analytic_mse(h_bar: &CMatrix, r_z: &CMatrix, w_rf: &CMatrix) -> Result<f64> {
    let inv = inner_inverse(h_bar, r_z, w_rf)?;
    let wh = w_rf.adjoint() * h_bar;
    let explained = trace_re(&(wh.adjoint() * inv * &wh));
    let n_s = h_bar.ncols() as f64;
    Ok((n_s - explained).clamp(0.0, n_s))
}

/// `B = H H* + R_z`.
pub fn signal_plus_interference(h_bar: &CMatrix, r_z: &CMatrix) -> Result<CMatrix> {
    symmetrize(&(h_bar * h_bar.adjoint() + r_z))
}

/// Unconstrained MMSE combiner `B^{-1} H`.
pub fn mmse_full_combiner(h_bar: &CMatrix, r_z: &CMatrix) -> Result<CMatrix> {
    let b = signal_plus_interference(h_bar, r_z)?;
    let b_inv = hpd_inverse(&b, GRAM_REL_TOL).ok_or(Error::SingularB)?;
    Ok(b_inv * h_bar)
}

/// MSE of the unconstrained MMSE combiner, `N_s - tr(H* B^{-1} H)`.
pub fn full_digital_mse(h_bar: &CMatrix, r_z: &CMatrix) -> Result<f64> {
    let w = mmse_full_combiner(h_bar, r_z)?;
    let n_s = h_bar.ncols() as f64;
    Ok((n_s - trace_re(&(h_bar.adjoint() * w))).clamp(0.0, n_s))
}

/// Maximizer of `tr(W* A W (W* B W)^{-1})` over `N x k` matrices:
/// `B^{-1/2} U` with `U` the top `k` eigenvectors of `B^{-1/2} A B^{-1/2}`.
/// Returns the maximizer and the top `k` eigenvalues (whose sum is the optimum).
pub fn ratio_trace_optimum(a: &CMatrix, b: &CMatrix, k: usize) -> Result<(CMatrix, Vec<f64>)> {
    let factor = hermitian_sqrt(b, true).map_err(|e| match e {
        Error::SingularForInverse => Error::SingularB,
        other => other,
    })?;
    let b_is = factor.inv_sqrt.expect("inverse root requested");
    let m = symmetrize(&(&b_is * a * &b_is))?;
    let (u, values) = top_eigvecs(&m, k)?;
    Ok((b_is * u, values))
}

/// Optimal fully-digital analog-stage combiner `W_opt = B^{-1/2} U` (with `S = I`).
pub fn optimal_digital_combiner(h_bar: &CMatrix, r_z: &CMatrix, n_rf_r: usize) -> Result<CMatrix> {
    let a = symmetrize(&(h_bar * h_bar.adjoint()))?;
    let b = signal_plus_interference(h_bar, r_z)?;
    Ok(ratio_trace_optimum(&a, &b, n_rf_r)?.0)
}

/// `tr(W* A W (W* B W)^{-1})`.
pub fn trace_objective(w: &CMatrix, a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let gram = w.adjoint() * b * w;
    let inv = hpd_inverse(&gram, GRAM_REL_TOL).ok_or(Error::SingularGram)?;
    Ok(trace_re(&(w.adjoint() * a * w * inv)))
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Sample mean and standard error of the mean (0 for a single sample).
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n;
        let stderr = if samples.len() > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr }
    }
}

/// Per-stream empirical MSE `1/(N_s Q) sum ||s^ - s||^2` of the linear chain
/// `s^ = W* (sqrt(p_r) H F s + z)` with `s ~ CN(0, I)` and `z ~ CN(0, R_z)`.
///
/// `f` is the overall precoder (`N_t x N_s`) and `w` the overall combiner
/// (`N_r x N_s`). Trial `q` draws from its own substream of `seed`, so the
/// estimate does not depend on how trials are spread across threads.
pub fn monte_carlo_mse(
    f: &CMatrix,
    w: &CMatrix,
    channel: &ChannelRealization,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    let n_s = f.ncols();
    if f.nrows() != channel.n_t() || w.nrows() != channel.n_r() || w.ncols() != n_s || trials == 0 {
        return Err(Error::DimensionMismatch(format!(
            "F is {}x{}, W is {}x{}, H is {}x{}, Q = {trials}",
            f.nrows(),
            f.ncols(),
            w.nrows(),
            w.ncols(),
            channel.n_r(),
            channel.n_t()
        )));
    }
    let noise_root = hermitian_sqrt(&channel.r_z, false)?.sqrt;
    let gain = w.adjoint() * &channel.h * f * real(channel.p_r.sqrt());
    let noise_map = w.adjoint() * noise_root;
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|q| {
            let mut rng = substream(seed, MONTE_CARLO_SALT, q as u64);
            let s = gaussian_matrix(n_s, 1, &mut rng);
            let g = gaussian_matrix(channel.n_r(), 1, &mut rng);
            let s_hat = &gain * &s + &noise_map * g;
            (s_hat - s).norm_squared() / n_s as f64
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}
