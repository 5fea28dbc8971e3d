//! Hybrid precoder design.
//!
//! All algorithms approximate the fully-digital optimum `V Phi T`, where the
//! unitary `T` is a free parameter, by a feasible analog matrix times a small
//! digital matrix:
//!
//! * [`magiq_precoder`] alternates a projection onto the feasible set with an
//!   orthogonal Procrustes update of `T`, then fits `F_BB` by least squares.
//! * [`alt_mag`] alternates an arbitrary [`InnerSolver`] with the `T` update.
//! * [`pe_altmin_precoder`] runs the same loop as MaGiQ but restricts `F_BB` to a
//!   scaled unitary matrix (baseline).
//! * [`somp_precoder`] greedily picks dictionary columns (baseline).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{DigitalPrecoderOpt, HybridPrecoder, ANALOG_RANK_TOL};
use crate::error::{Error, Result};
use crate::hardware::{Dictionary, HardwareScheme};
use crate::matcore::{identity, least_squares, procrustes_unitary, real, CMatrix};

/// Change in `T` (Frobenius) below which the alternating loop is at a fixed point.
const FIXED_POINT_TOL: f64 = 1e-12;
const PERTURBATION: f64 = 1e-8;
const PERTURBATION_SEED: u64 = 0x5eed_0f5a17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverControls {
    /// Stop once the approximation gap falls below this value.
    pub threshold: f64,
    pub max_iters: usize,
    /// Stop once an iteration lowers the gap by less than this value.
    pub stall_tol: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            threshold: 1e-6,
            max_iters: 500,
            stall_tol: 1e-10,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) || self.max_iters == 0 || !(self.stall_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid solver controls {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    Stalled,
    FixedPoint,
    MaxIters,
    RejectedStep,
}

/// Iteration record of an alternating solver.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Approximation gap after every iteration; the final entry is the gap of
    /// the returned pair.
    pub gaps: Vec<f64>,
    pub t: CMatrix,
    pub iterations: usize,
    pub stop: StopReason,
    /// Whether the target had to be perturbed to obtain a full-rank analog matrix.
    pub perturbed: bool,
    /// Inner-solver iterates discarded because they increased the gap.
    pub rejected: usize,
}

impl SolveTrace {
    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("at least one iteration")
    }
}

/// Feasible analog matrix and unitary found by the MaGiQ loop.
#[derive(Debug, Clone)]
pub struct Quantization {
    pub analog: CMatrix,
    pub trace: SolveTrace,
    /// Factor applied to the target before quantizing.
    pub scale: f64,
}

/// Minimizes `||c X T - F||_F^2` over feasible `F` and unitary `T` by
/// alternating `F = P(c X T)` and `T = procrustes(F* c X)`, starting from `T = I`.
///
/// The target is first scaled by `c` so its entries have unit RMS modulus;
/// this only matters for schemes whose projection depends on magnitude (S1).
pub fn magiq_loop(
    x: &CMatrix,
    scheme: &HardwareScheme,
    controls: &SolverControls,
) -> Result<Quantization> {
    controls.validate()?;
    let (n, k) = x.shape();
    let norm = x.norm();
    let scale = if norm > 0.0 {
        ((n * k) as f64).sqrt() / norm
    } else {
        1.0
    };
    let xs = x * real(scale);
    let mut t = identity(k);
    let mut gaps = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;
    for _ in 0..controls.max_iters {
        iterations += 1;
        let f = scheme.project(&(&xs * &t))?;
        let t_new = procrustes_unitary(&(f.adjoint() * &xs))?;
        let gap = (&xs * &t_new - &f).norm_squared();
        let moved = (&t_new - &t).norm();
        let prev = gaps.last().copied();
        gaps.push(gap);
        t = t_new;
        if gap < controls.threshold {
            stop = StopReason::Threshold;
            break;
        }
        if moved <= FIXED_POINT_TOL {
            stop = StopReason::FixedPoint;
            break;
        }
        if prev.is_some_and(|p| p - gap < controls.stall_tol) {
            stop = StopReason::Stalled;
            break;
        }
    }
    let analog = scheme.project(&(&xs * &t))?;
    gaps.push((&xs * &t - &analog).norm_squared());
    Ok(Quantization {
        analog,
        trace: SolveTrace {
            gaps,
            t,
            iterations,
            stop,
            perturbed: false,
            rejected: 0,
        },
        scale,
    })
}

/// Multiplies every entry by a random phase of magnitude at most `1e-8` rad.
fn perturb_phases(x: &CMatrix) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(PERTURBATION_SEED);
    x.map(|z| {
        z * num_complex::Complex64::from_polar(1.0, PERTURBATION * rng.random_range(-1.0..=1.0))
    })
}

/// Runs [`magiq_loop`] and `finish`; when `finish` reports a rank-deficient
/// analog matrix, retries once on a phase-perturbed target.
pub fn quantize_with_retry<T>(
    x: &CMatrix,
    scheme: &HardwareScheme,
    controls: &SolverControls,
    mut finish: impl FnMut(&Quantization, &CMatrix) -> Result<T>,
) -> Result<(T, Quantization)> {
    let q = magiq_loop(x, scheme, controls)?;
    match finish(&q, x) {
        Err(Error::RankDeficientAnalog(_)) => {
            let xp = perturb_phases(x);
            let mut q = magiq_loop(&xp, scheme, controls)?;
            q.trace.perturbed = true;
            let out = finish(&q, &xp)?;
            Ok((out, q))
        }
        other => Ok((other?, q)),
    }
}

/// `F_BB = (F_RF* F_RF)^{-1} F_RF* X`, the least-squares digital stage.
pub fn ls_digital_precoder(f_rf: &CMatrix, target: &CMatrix) -> Result<CMatrix> {
    least_squares(f_rf, target, ANALOG_RANK_TOL)
}

/// Scales `f_bb` so that `||F_RF F_BB||_F^2 = n_s`; a zero product is returned unchanged.
pub fn scale_to_power(f_rf: &CMatrix, f_bb: CMatrix, n_s: usize) -> CMatrix {
    let norm = (f_rf * &f_bb).norm();
    if norm > 0.0 {
        f_bb * real((n_s as f64).sqrt() / norm)
    } else {
        f_bb
    }
}

/// MaGiQ precoder: quantization loop followed by a least-squares `F_BB` fit to
/// `V Phi T`, scaled to the full transmit power `N_s`.
pub fn magiq_precoder(
    opt: &DigitalPrecoderOpt,
    scheme: &HardwareScheme,
    controls: &SolverControls,
) -> Result<(HybridPrecoder, SolveTrace)> {
    let (f_bb, q) = quantize_with_retry(&opt.target(), scheme, controls, |q, x| {
        ls_digital_precoder(&q.analog, &(x * &q.trace.t))
    })?;
    let f_bb = scale_to_power(&q.analog, f_bb, opt.n_s);
    Ok((
        HybridPrecoder {
            f_rf: q.analog,
            f_bb,
            scheme: scheme.clone(),
        },
        q.trace,
    ))
}

/// PE-AltMin baseline: the MaGiQ loop with `F_BB = sqrt(N_s) / ||F_RF T*|| * T*`.
///
/// The loop's `T` aligns `V Phi T` with `F_RF`, so `F_RF T*` approximates `V Phi`.
pub fn pe_altmin_precoder(
    opt: &DigitalPrecoderOpt,
    scheme: &HardwareScheme,
    controls: &SolverControls,
) -> Result<(HybridPrecoder, SolveTrace)> {
    let q = magiq_loop(&opt.target(), scheme, controls)?;
    let t_adj = q.trace.t.adjoint();
    let norm = (&q.analog * &t_adj).norm();
    if norm == 0.0 {
        return Err(Error::RankDeficientAnalog(0.0));
    }
    let f_bb = t_adj * real((opt.n_s as f64).sqrt() / norm);
    Ok((
        HybridPrecoder {
            f_rf: q.analog,
            f_bb,
            scheme: scheme.clone(),
        },
        q.trace,
    ))
}

/// Approximates a target `X` (`N x k`) by `F_RF F_BB` with feasible `F_RF`.
pub trait InnerSolver {
    fn solve(&self, target: &CMatrix, scheme: &HardwareScheme) -> Result<(CMatrix, CMatrix)>;
}

/// One MaGiQ quantization: `F_RF = P(c X)`, `F_BB = I / c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MagiqStep;

impl InnerSolver for MagiqStep {
    fn solve(&self, target: &CMatrix, scheme: &HardwareScheme) -> Result<(CMatrix, CMatrix)> {
        let (n, k) = target.shape();
        let norm = target.norm();
        let scale = if norm > 0.0 {
            ((n * k) as f64).sqrt() / norm
        } else {
            1.0
        };
        let f_rf = scheme.project(&(target * real(scale)))?;
        Ok((f_rf, identity(k) * real(1.0 / scale)))
    }
}

/// Simultaneous OMP over a dictionary, with unscaled least-squares coefficients.
#[derive(Debug, Clone)]
pub struct SompStep<'a> {
    pub dictionary: &'a Dictionary,
    pub n_rf: usize,
}

impl InnerSolver for SompStep<'_> {
    fn solve(&self, target: &CMatrix, _scheme: &HardwareScheme) -> Result<(CMatrix, CMatrix)> {
        let fit = somp(target, &self.dictionary.atoms, self.dictionary, self.n_rf)?;
        Ok((fit.analog(self.dictionary), fit.coeffs))
    }
}

/// Alt-MaG: alternates `inner` on `V Phi T` with the unitary update
/// `T = procrustes(F_BB* F_RF* V Phi)`, then refits `F_BB` by least squares
/// and scales it to full power. The recorded gaps are those of the fits before
/// scaling.
///
/// An inner iterate that would increase the gap is discarded and the loop stops.
pub fn alt_mag(
    opt: &DigitalPrecoderOpt,
    scheme: &HardwareScheme,
    inner: &dyn InnerSolver,
    controls: &SolverControls,
) -> Result<(HybridPrecoder, SolveTrace)> {
    controls.validate()?;
    let x = opt.target();
    let k = x.ncols();
    let wrap = |e: Error| Error::InnerSolverFailure(e.to_string());
    let mut t = identity(k);
    let (mut f_rf, mut f_bb) = inner.solve(&x, scheme).map_err(wrap)?;
    let mut gaps = vec![(&x - &f_rf * &f_bb).norm_squared()];
    let mut stop = StopReason::MaxIters;
    let mut rejected = 0;
    let mut iterations = 0;
    while iterations < controls.max_iters {
        iterations += 1;
        let prev = *gaps.last().expect("initial gap");
        if prev < controls.threshold {
            stop = StopReason::Threshold;
            break;
        }
        let hybrid = &f_rf * &f_bb;
        let t_new = procrustes_unitary(&(hybrid.adjoint() * &x))?;
        let moved = (&t_new - &t).norm();
        t = t_new;
        let xt = &x * &t;
        let mut gap = (&xt - &hybrid).norm_squared();
        let (c_rf, c_bb) = inner.solve(&xt, scheme).map_err(wrap)?;
        let c_gap = (&xt - &c_rf * &c_bb).norm_squared();
        let accepted = c_gap <= gap;
        if accepted {
            f_rf = c_rf;
            f_bb = c_bb;
            gap = c_gap;
        } else {
            rejected += 1;
        }
        gaps.push(gap);
        if !accepted {
            stop = StopReason::RejectedStep;
            break;
        }
        if gap < controls.threshold {
            stop = StopReason::Threshold;
            break;
        }
        if moved <= FIXED_POINT_TOL {
            stop = StopReason::FixedPoint;
            break;
        }
        if prev - gap < controls.stall_tol {
            stop = StopReason::Stalled;
            break;
        }
    }
    let xt = &x * &t;
    let f_bb = ls_digital_precoder(&f_rf, &xt).map_err(wrap)?;
    gaps.push((&xt - &f_rf * &f_bb).norm_squared());
    let f_bb = scale_to_power(&f_rf, f_bb, opt.n_s);
    Ok((
        HybridPrecoder {
            f_rf,
            f_bb,
            scheme: scheme.clone(),
        },
        SolveTrace {
            gaps,
            t,
            iterations,
            stop,
            perturbed: false,
            rejected,
        },
    ))
}

/// Columns chosen by simultaneous OMP and their least-squares coefficients.
#[derive(Debug, Clone)]
pub struct SompFit {
    pub selected: Vec<usize>,
    pub coeffs: CMatrix,
    pub residual: f64,
}

impl SompFit {
    /// The selected dictionary atoms as an analog matrix.
    pub fn analog(&self, dict: &Dictionary) -> CMatrix {
        dict.atoms.select_columns(self.selected.iter())
    }
}

/// Simultaneous OMP: in round `K` pick the admissible, unselected column of
/// `search` with the largest normalized correlation energy
/// `||s_q* R||^2 / ||s_q||^2` against the residual `R`, then refit all
/// coefficients by least squares. Ties go to the lowest index.
///
/// `search` holds the atoms as seen by the fit (for instance, weighted
/// copies of `dict.atoms`); `dict` decides admissibility per round.
pub fn somp(target: &CMatrix, search: &CMatrix, dict: &Dictionary, n_rf: usize) -> Result<SompFit> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if search.ncols() != dict.len() || search.nrows() != target.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary is {}x{}, target has {} rows",
            search.nrows(),
            search.ncols(),
            target.nrows()
        )));
    }
    if n_rf == 0 || n_rf > dict.len() {
        return Err(Error::DictionaryExhausted {
            needed: n_rf,
            available: dict.len(),
        });
    }
    let norms: Vec<f64> = search.column_iter().map(|c| c.norm_squared()).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(n_rf);
    let mut residual = target.clone();
    let mut coeffs = CMatrix::zeros(0, target.ncols());
    for round in 0..n_rf {
        let corr = search.adjoint() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for (q, &norm) in norms.iter().enumerate() {
            if norm == 0.0 || selected.contains(&q) || !dict.admissible(q, round) {
                continue;
            }
            let score = corr.row(q).norm_squared() / norm;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((q, score));
            }
        }
        let (q, _) = best.ok_or(Error::RepeatSelectionExhausted(round))?;
        selected.push(q);
        let basis = search.select_columns(selected.iter());
        coeffs = least_squares(&basis, target, ANALOG_RANK_TOL)?;
        residual = target - basis * &coeffs;
    }
    Ok(SompFit {
        selected,
        residual: residual.norm_squared(),
        coeffs,
    })
}

/// SOMP precoder: greedy fit of `target`, digital stage rescaled to total power `n_s`.
pub fn somp_precoder(
    target: &CMatrix,
    dict: &Dictionary,
    scheme: &HardwareScheme,
    n_rf: usize,
    n_s: usize,
) -> Result<HybridPrecoder> {
    let fit = somp(target, &dict.atoms, dict, n_rf)?;
    let f_rf = fit.analog(dict);
    let f_bb = scale_to_power(&f_rf, fit.coeffs, n_s);
    Ok(HybridPrecoder {
        f_rf,
        f_bb,
        scheme: scheme.clone(),
    })
}
