//! Channel and interference generators.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{hermitian_eigen, identity, real, symmetrize, trace_re, CMatrix};
use crate::random::{complex_normal, gaussian_matrix};

/// Default antenna spacing of the uniform linear array, in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// ULA response `(1/sqrt N) e^{j 2 pi d n sin(phi)}`, `n = 0..N-1`, as an `N x 1` matrix.
pub fn steering_vector(n: usize, phi: f64, d_over_lambda: f64) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    let step = 2.0 * PI * d_over_lambda * phi.sin();
    CMatrix::from_fn(n, 1, |i, _| Complex64::from_polar(scale, step * i as f64))
}

/// Parameters of the clustered narrowband mmWave channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmWaveParams {
    pub n_t: usize,
    pub n_r: usize,
    pub n_cl: usize,
    pub n_ray: usize,
    #[serde(default = "default_spacing")]
    pub d_over_lambda: f64,
}

fn default_spacing() -> f64 {
    HALF_WAVELENGTH
}

impl Default for MmWaveParams {
    fn default() -> Self {
        MmWaveParams {
            n_t: 10,
            n_r: 15,
            n_cl: 6,
            n_ray: 1,
            d_over_lambda: HALF_WAVELENGTH,
        }
    }
}

impl MmWaveParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_cl == 0 || self.n_ray == 0 {
            return Err(Error::InvalidSize(
                "mmWave channel needs N_t, N_r, N_cl, N_ray >= 1".into(),
            ));
        }
        if !(self.d_over_lambda > 0.0) {
            return Err(Error::InvalidConfig(
                "d_over_lambda must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One ray of a mmWave draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub cluster: usize,
    pub ray: usize,
    pub gain: Complex64,
    pub phi_t: f64,
    pub phi_r: f64,
}

#[derive(Debug, Clone)]
pub struct MmWaveDraw {
    pub h: CMatrix,
    pub rays: Vec<Ray>,
}

impl MmWaveDraw {
    /// Dumps the ray gains and angles as CSV (`cluster,ray,re,im,phi_t,phi_r`).
    pub fn write_rays_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(["cluster", "ray", "re", "im", "phi_t", "phi_r"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rays {
            w.write_record([
                r.cluster.to_string(),
                r.ray.to_string(),
                format!("{:.17e}", r.gain.re),
                format!("{:.17e}", r.gain.im),
                format!("{:.17e}", r.phi_t),
                format!("{:.17e}", r.phi_r),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Clustered channel `sqrt(N_t N_r / (N_cl N_ray)) sum alpha a_r(phi_r) a_t(phi_t)*`.
///
/// For each cluster `i` and ray `l` (row-major), the draws are taken in the
/// order `alpha ~ CN(0,1)`, `phi_t ~ U[0, 2pi)`, `phi_r ~ U[0, 2pi)`.
pub fn mmwave_channel<R: Rng + ?Sized>(params: &MmWaveParams, rng: &mut R) -> Result<MmWaveDraw> {
    params.validate()?;
    let MmWaveParams {
        n_t,
        n_r,
        n_cl,
        n_ray,
        d_over_lambda,
    } = *params;
    let scale = ((n_t * n_r) as f64 / (n_cl * n_ray) as f64).sqrt();
    let mut h = CMatrix::zeros(n_r, n_t);
    let mut rays = Vec::with_capacity(n_cl * n_ray);
    for cluster in 0..n_cl {
        for ray in 0..n_ray {
            let gain = complex_normal(rng);
            let phi_t = rng.random_range(0.0..2.0 * PI);
            let phi_r = rng.random_range(0.0..2.0 * PI);
            let a_r = steering_vector(n_r, phi_r, d_over_lambda);
            let a_t = steering_vector(n_t, phi_t, d_over_lambda);
            h += a_r * a_t.adjoint() * (gain * scale);
            rays.push(Ray {
                cluster,
                ray,
                gain,
                phi_t,
                phi_r,
            });
        }
    }
    Ok(MmWaveDraw { h, rays })
}

/// First `l` columns of the unitary DFT matrix of size `n`, entries `(1/sqrt n) e^{-j 2 pi k m / n}`.
pub fn dft_columns(n: usize, l: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, l, |m, k| {
        let idx = ((k * m) % n) as f64;
        Complex64::from_polar(scale, -2.0 * PI * idx / n as f64)
    })
}

/// Circulant (virtual) channel `A_r diag(gains) A_t*` built from DFT columns.
pub fn circulant_channel(gains: &[Complex64], n_t: usize, n_r: usize) -> Result<CMatrix> {
    let l = gains.len();
    let limit = n_t.min(n_r);
    if l > limit {
        return Err(Error::TooManyGains { gains: l, limit });
    }
    let a_r = dft_columns(n_r, l);
    let a_t = dft_columns(n_t, l);
    let lambda = CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(gains));
    Ok(a_r * lambda * a_t.adjoint())
}

/// `N_r x N_t` channel with i.i.d. CN(0, 1) entries.
pub fn gaussian_channel<R: Rng + ?Sized>(n_t: usize, n_r: usize, rng: &mut R) -> CMatrix {
    gaussian_matrix(n_r, n_t, rng)
}

/// Interference covariance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interference {
    /// `sigma2 * I`.
    White { sigma2: f64 },
    /// Random full-rank covariance `L L* + eps I` with condition number
    /// `condition_target`, scaled to average eigenvalue `sigma2`.
    Colored { sigma2: f64, condition_target: f64 },
}

impl Interference {
    pub fn sigma2(&self) -> f64 {
        match *self {
            Interference::White { sigma2 } | Interference::Colored { sigma2, .. } => sigma2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma2();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidSigma(format!(
                "sigma^2 = {s} must be positive"
            )));
        }
        if let Interference::Colored {
            condition_target, ..
        } = *self
        {
            if !(condition_target > 1.0) || !condition_target.is_finite() {
                return Err(Error::InvalidSigma(format!(
                    "condition target {condition_target} must exceed 1"
                )));
            }
        }
        Ok(())
    }
}

/// Builds an `N_r x N_r` interference covariance. Only the colored model uses `rng`.
pub fn interference_cov<R: Rng + ?Sized>(
    kind: &Interference,
    n_r: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    kind.validate()?;
    match *kind {
        Interference::White { sigma2 } => Ok(identity(n_r) * real(sigma2)),
        Interference::Colored {
            sigma2,
            condition_target: c,
        } => {
            let l = gaussian_matrix(n_r, n_r, rng);
            let base = symmetrize(&(&l * l.adjoint()))?;
            let eig = hermitian_eigen(&base)?;
            let lmax = eig.values[0];
            let lmin = eig.values[n_r - 1].max(0.0);
            let eps = ((lmax - c * lmin) / (c - 1.0)).max(1e-12 * lmax.max(1.0));
            let r = base + identity(n_r) * real(eps);
            let scale = n_r as f64 * sigma2 / trace_re(&r);
            Ok(r * real(scale))
        }
    }
}

/// Random receive correlation `X X*` with `X` an `n x rank` Gaussian matrix,
/// normalized to trace `n`.
pub fn random_correlation<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Result<CMatrix> {
    if n == 0 || rank == 0 {
        return Err(Error::InvalidSize("correlation needs n, rank >= 1".into()));
    }
    let x = gaussian_matrix(n, rank, rng);
    let r = symmetrize(&(&x * x.adjoint()))?;
    let scale = n as f64 / trace_re(&r);
    Ok(r * real(scale))
}

/// A channel together with its interference covariance and received power.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub r_z: CMatrix,
    pub p_r: f64,
}

impl ChannelRealization {
    pub fn new(h: CMatrix, r_z: CMatrix, p_r: f64) -> Result<Self> {
        if r_z.nrows() != h.nrows() || r_z.ncols() != h.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "R_z is {}x{}, channel has {} receive antennas",
                r_z.nrows(),
                r_z.ncols(),
                h.nrows()
            )));
        }
        if !(p_r > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "received power {p_r} must be positive"
            )));
        }
        Ok(ChannelRealization { h, r_z, p_r })
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.h.ncols()
    }
}

/// Receive-side parameters of the doubly correlated Kronecker model. Only
/// `r_r` enters the combiner design; `users` and `pilot_len` are carried along.
#[derive(Debug, Clone)]
pub struct KroneckerParams {
    pub r_r: CMatrix,
    pub users: usize,
    pub pilot_len: usize,
}
