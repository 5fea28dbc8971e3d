//! Hybrid combiner design.
//!
//! The combiner side maximizes the ratio-trace objective
//! `f(W) = tr(W* A W (W* B W)^{-1})` with `A = H H*` and `B = H H* + R_z`
//! over feasible analog matrices; the digital stage is then the MMSE
//! solution for the chosen analog matrix.

use rayon::prelude::*;

use crate::beamform::{
    mmse_digital_combiner, ratio_trace_optimum, signal_plus_interference, trace_objective,
    HybridCombiner, ANALOG_RANK_TOL, GRAM_REL_TOL,
};
use crate::error::{Error, Result};
use crate::hardware::{Dictionary, HardwareScheme};
use crate::matcore::{
    column_rank_ratio, hermitian_eigen, hermitian_sqrt, hpd_inverse, identity, orth_projector,
    symmetrize, trace_re, CMatrix,
};
use crate::precoder::{quantize_with_retry, somp, SolveTrace, SolverControls};

/// Candidates with `w* D w` at most this fraction of `tr(D) / N` are treated
/// as lying in the span of the columns already chosen.
pub const RANGE_EXCLUSION_TOL: f64 = 1e-10;

/// `W (W* W)^{-1/2}`: the orthonormal-column matrix closest to `W`, spanning the same range.
fn orthonormal_target(w: &CMatrix) -> Result<CMatrix> {
    let gram = symmetrize(&(w.adjoint() * w))?;
    let inv_sqrt = hermitian_sqrt(&gram, true)?
        .inv_sqrt
        .expect("inverse root requested");
    Ok(w * inv_sqrt)
}

/// MaGiQ on the ratio-trace problem: quantizes `B^{-1/2} U S` with unitary `S`.
///
/// Every `B^{-1/2} U S` with invertible `S` is optimal; the loop starts from the
/// member with orthonormal columns. Returns the feasible analog matrix and the
/// loop trace.
pub fn magiq_ratio_trace(
    a: &CMatrix,
    b: &CMatrix,
    scheme: &HardwareScheme,
    n_rf: usize,
    controls: &SolverControls,
) -> Result<(CMatrix, SolveTrace)> {
    let (optimum, _) = ratio_trace_optimum(a, b, n_rf)?;
    let target = orthonormal_target(&optimum)?;
    let (_, q) = quantize_with_retry(&target, scheme, controls, |q, _| {
        let ratio = column_rank_ratio(&q.analog);
        if ratio <= ANALOG_RANK_TOL {
            Err(Error::RankDeficientAnalog(ratio))
        } else {
            Ok(())
        }
    })?;
    Ok((q.analog, q.trace))
}

/// MaGiQ combiner with the MMSE digital stage.
pub fn magiq_combiner(
    h_bar: &CMatrix,
    r_z: &CMatrix,
    scheme: &HardwareScheme,
    n_rf: usize,
    controls: &SolverControls,
) -> Result<(HybridCombiner, SolveTrace)> {
    let a = symmetrize(&(h_bar * h_bar.adjoint()))?;
    let b = signal_plus_interference(h_bar, r_z)?;
    let (w_rf, trace) = magiq_ratio_trace(&a, &b, scheme, n_rf, controls)?;
    let w_bb = mmse_digital_combiner(h_bar, r_z, &w_rf)?;
    Ok((
        HybridCombiner {
            w_rf,
            w_bb,
            scheme: scheme.clone(),
        },
        trace,
    ))
}

/// The matrices of the one-column-ahead reformulation: for `w` outside the
/// span of `W`, the appended objective is increasing in `w* C w / w* D w`.
#[derive(Debug, Clone)]
pub struct Prop2Matrices {
    pub c: CMatrix,
    pub d: CMatrix,
    pub gamma: f64,
    pub g: CMatrix,
}

/// Square roots of `A` and `B` reused across rounds.
#[derive(Debug, Clone)]
pub struct Prop2Context {
    b_half: CMatrix,
    b_inv_half: CMatrix,
    a_half: CMatrix,
}

impl Prop2Context {
    pub fn new(a: &CMatrix, b: &CMatrix) -> Result<Self> {
        let bf = hermitian_sqrt(b, true).map_err(|e| match e {
            Error::SingularForInverse => Error::SingularB,
            other => other,
        })?;
        let a_half = hermitian_sqrt(a, false)?.sqrt;
        Ok(Prop2Context {
            b_half: bf.sqrt,
            b_inv_half: bf.inv_sqrt.expect("inverse root requested"),
            a_half,
        })
    }

    /// `D = B^{1/2}(I - P)B^{1/2}`, `gamma = tr(P B^{-1/2} A^{1/2} B^{-1/2})`,
    /// `G = B^{1/2} P B^{-1/2} A^{1/2} - A^{1/2}`, `C = gamma D + G G*`, with
    /// `P` the orthogonal projector onto the range of `B^{1/2} W`.
    pub fn matrices(&self, w_partial: &CMatrix) -> Result<Prop2Matrices> {
        let n = self.b_half.nrows();
        let p = if w_partial.ncols() == 0 {
            CMatrix::zeros(n, n)
        } else {
            orth_projector(&(&self.b_half * w_partial))?
        };
        let d = symmetrize(&(&self.b_half * (identity(n) - &p) * &self.b_half))?;
        let gamma = trace_re(&(&p * &self.b_inv_half * &self.a_half * &self.b_inv_half));
        let g = &self.b_half * &p * &self.b_inv_half * &self.a_half - &self.a_half;
        let c = &d * num_complex::Complex64::new(gamma, 0.0) + &g * g.adjoint();
        Ok(Prop2Matrices { c, d, gamma, g })
    }
}

pub fn prop2_matrices(w_partial: &CMatrix, a: &CMatrix, b: &CMatrix) -> Result<Prop2Matrices> {
    Prop2Context::new(a, b)?.matrices(w_partial)
}

/// Incremental state of the greedy ratio-trace search: the chosen columns,
/// the inverse Gram matrix `(W* B W)^{-1}` and the current objective.
#[derive(Debug, Clone)]
pub struct GrtmState {
    pub w: CMatrix,
    pub objective: f64,
    aw: CMatrix,
    bw: CMatrix,
    waw: CMatrix,
    q: CMatrix,
    trace_b: f64,
}

/// Per-candidate quantities of the rank-one update.
struct Candidate<'a> {
    w: nalgebra::DVectorView<'a, num_complex::Complex64>,
    aw: nalgebra::DVectorView<'a, num_complex::Complex64>,
    bw: nalgebra::DVectorView<'a, num_complex::Complex64>,
}

impl GrtmState {
    pub fn new(a: &CMatrix, b: &CMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.shape() != (n, n) || b.shape() != (n, n) {
            return Err(Error::DimensionMismatch(
                "A and B must be square of equal size".into(),
            ));
        }
        Ok(GrtmState {
            w: CMatrix::zeros(n, 0),
            objective: 0.0,
            aw: CMatrix::zeros(n, 0),
            bw: CMatrix::zeros(n, 0),
            waw: CMatrix::zeros(0, 0),
            q: CMatrix::zeros(0, 0),
            trace_b: trace_re(b),
        })
    }

    /// Starts from an existing set of columns.
    pub fn with_columns(a: &CMatrix, b: &CMatrix, w: &CMatrix) -> Result<Self> {
        let mut s = Self::new(a, b)?;
        s.set_columns(w.clone(), a * w, b * w)?;
        Ok(s)
    }

    fn set_columns(&mut self, w: CMatrix, aw: CMatrix, bw: CMatrix) -> Result<()> {
        let gram = symmetrize(&(w.adjoint() * &bw))?;
        self.q = hpd_inverse(&gram, GRAM_REL_TOL).ok_or(Error::SingularGram)?;
        self.waw = w.adjoint() * &aw;
        self.objective = trace_re(&(&self.waw * &self.q));
        self.w = w;
        self.aw = aw;
        self.bw = bw;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.w.ncols() == 0
    }

    /// `tr(D)` for the current columns: `tr(B) - tr(Q (BW)* (BW))`.
    fn trace_d(&self) -> f64 {
        if self.is_empty() {
            return self.trace_b;
        }
        self.trace_b - trace_re(&(&self.q * self.bw.adjoint() * &self.bw))
    }

    fn guard(&self) -> f64 {
        RANGE_EXCLUSION_TOL * self.trace_d() / self.w.nrows() as f64
    }

    /// Objective after appending the candidate, via the rank-one inverse update.
    fn score(&self, c: &Candidate<'_>, guard: f64) -> Result<f64> {
        let wbw = c.w.dotc(&c.bw).re;
        let waw = c.w.dotc(&c.aw).re;
        if self.is_empty() {
            if !(wbw > guard) {
                return Err(Error::InRangeSpace);
            }
            return Ok(waw / wbw);
        }
        let bvec = self.bw.adjoint() * c.w;
        let u = &self.q * &bvec;
        let beta = wbw - bvec.dotc(&u).re;
        if !(beta > guard) {
            return Err(Error::InRangeSpace);
        }
        let avec = self.aw.adjoint() * c.w;
        let num = waw - 2.0 * u.dotc(&avec).re + u.dotc(&(&self.waw * &u)).re;
        Ok(self.objective + num / beta)
    }

    /// Objective of `[W w]` without refactoring.
    pub fn appended_objective(&self, w: &CMatrix, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        let aw = a * w;
        let bw = b * w;
        let cand = Candidate {
            w: w.column(0),
            aw: aw.column(0),
            bw: bw.column(0),
        };
        self.score(&cand, self.guard())
    }

    fn push(&mut self, w: &CMatrix, aw: &CMatrix, bw: &CMatrix) -> Result<()> {
        let k = self.len();
        let n = self.w.nrows();
        let mut nw = CMatrix::zeros(n, k + 1);
        let mut naw = CMatrix::zeros(n, k + 1);
        let mut nbw = CMatrix::zeros(n, k + 1);
        nw.columns_mut(0, k).copy_from(&self.w);
        naw.columns_mut(0, k).copy_from(&self.aw);
        nbw.columns_mut(0, k).copy_from(&self.bw);
        nw.set_column(k, &w.column(0));
        naw.set_column(k, &aw.column(0));
        nbw.set_column(k, &bw.column(0));
        self.set_columns(nw, naw, nbw)
    }
}

/// `tr([W w]* A [W w] ([W w]* B [W w])^{-1})` through the rank-one update.
pub fn trace_objective_append(
    w_partial: &CMatrix,
    w: &CMatrix,
    a: &CMatrix,
    b: &CMatrix,
) -> Result<f64> {
    let state = if w_partial.ncols() == 0 {
        GrtmState::new(a, b)?
    } else {
        GrtmState::with_columns(a, b, w_partial)?
    };
    state.appended_objective(w, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GrtmOptions {
    /// Also score every round with the `C`/`D` ratio and count argmax disagreements.
    pub cross_check: bool,
}

#[derive(Debug, Clone)]
pub struct GrtmOutcome {
    pub w_rf: CMatrix,
    pub selected: Vec<usize>,
    /// Objective after each round.
    pub objectives: Vec<f64>,
    /// Rounds in which the `C`/`D` ratio picked a column with a different objective.
    pub cross_check_disagreements: usize,
}

/// Greedy ratio-trace maximization over dictionary columns.
///
/// Each round scores every unselected admissible column by the exact
/// appended objective and keeps the best (lowest index on ties); columns in
/// the span of the chosen ones are skipped.
pub fn grtm(
    a: &CMatrix,
    b: &CMatrix,
    dict: &Dictionary,
    n_rf: usize,
    options: GrtmOptions,
) -> Result<GrtmOutcome> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if dict.antennas() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} rows, A is {}x{}",
            dict.antennas(),
            a.nrows(),
            a.ncols()
        )));
    }
    let atoms = &dict.atoms;
    let a_atoms = a * atoms;
    let b_atoms = b * atoms;
    let prop2 = if options.cross_check {
        Some(Prop2Context::new(a, b)?)
    } else {
        None
    };
    let mut state = GrtmState::new(a, b)?;
    let mut selected = Vec::with_capacity(n_rf);
    let mut objectives = Vec::with_capacity(n_rf);
    let mut disagreements = 0;
    for round in 0..n_rf {
        let guard = state.guard();
        let scores: Vec<Option<f64>> = (0..dict.len())
            .into_par_iter()
            .map(|q| {
                if selected.contains(&q) || !dict.admissible(q, round) {
                    return None;
                }
                let cand = Candidate {
                    w: atoms.column(q),
                    aw: a_atoms.column(q),
                    bw: b_atoms.column(q),
                };
                state.score(&cand, guard).ok()
            })
            .collect();
        let best = argmax(&scores).ok_or(Error::DictionaryExhausted {
            needed: n_rf,
            available: selected.len(),
        })?;
        if let Some(ctx) = &prop2 {
            let m = ctx.matrices(&state.w)?;
            let ratios: Vec<Option<f64>> = scores
                .iter()
                .enumerate()
                .map(|(q, s)| {
                    s.map(|_| {
                        let w = atoms.column(q);
                        (w.dotc(&(&m.c * w))).re / (w.dotc(&(&m.d * w))).re
                    })
                })
                .collect();
            let alt = argmax(&ratios).expect("same candidates as the exact scores");
            let (sb, sa) = (scores[best].unwrap(), scores[alt].unwrap());
            if (sb - sa).abs() > 1e-9 * (1.0 + sb.abs()) {
                disagreements += 1;
            }
        }
        let w = atoms.columns(best, 1).into_owned();
        let aw = a_atoms.columns(best, 1).into_owned();
        let bw = b_atoms.columns(best, 1).into_owned();
        state.push(&w, &aw, &bw)?;
        selected.push(best);
        objectives.push(state.objective);
    }
    Ok(GrtmOutcome {
        w_rf: state.w,
        selected,
        objectives,
        cross_check_disagreements: disagreements,
    })
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (q, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((q, s));
            }
        }
    }
    best.map(|(q, _)| q)
}

/// GRTM combiner with the MMSE digital stage.
pub fn grtm_combiner(
    h_bar: &CMatrix,
    r_z: &CMatrix,
    scheme: &HardwareScheme,
    dict: &Dictionary,
    n_rf: usize,
    options: GrtmOptions,
) -> Result<(HybridCombiner, GrtmOutcome)> {
    let a = symmetrize(&(h_bar * h_bar.adjoint()))?;
    let b = signal_plus_interference(h_bar, r_z)?;
    let out = grtm(&a, &b, dict, n_rf, options)?;
    let w_bb = mmse_digital_combiner(h_bar, r_z, &out.w_rf)?;
    Ok((
        HybridCombiner {
            w_rf: out.w_rf.clone(),
            w_bb,
            scheme: scheme.clone(),
        },
        out,
    ))
}

/// SOMP on the weighted problem `min ||B^{1/2}(W_mmse - W_RF W_BB)||_F`.
/// Returns the analog matrix and the weighted least-squares digital stage.
pub fn somp_weighted(
    w_mmse: &CMatrix,
    b: &CMatrix,
    dict: &Dictionary,
    n_rf: usize,
) -> Result<(CMatrix, CMatrix)> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let b_half = hermitian_sqrt(b, false)?.sqrt;
    let target = &b_half * w_mmse;
    let search = &b_half * &dict.atoms;
    let fit = somp(&target, &search, dict, n_rf)?;
    Ok((fit.analog(dict), fit.coeffs))
}

/// Weighted SOMP combiner; the reported digital stage is the exact MMSE one.
pub fn somp_weighted_combiner(
    h_bar: &CMatrix,
    r_z: &CMatrix,
    scheme: &HardwareScheme,
    dict: &Dictionary,
    n_rf: usize,
) -> Result<HybridCombiner> {
    let b = signal_plus_interference(h_bar, r_z)?;
    let b_inv = hpd_inverse(&b, GRAM_REL_TOL).ok_or(Error::SingularB)?;
    let w_mmse = b_inv * h_bar;
    let (w_rf, _) = somp_weighted(&w_mmse, &b, dict, n_rf)?;
    let w_bb = mmse_digital_combiner(h_bar, r_z, &w_rf)?;
    Ok(HybridCombiner {
        w_rf,
        w_bb,
        scheme: scheme.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct KroneckerDesign {
    pub w_rf: CMatrix,
    /// `tr(W* R^2 W (W* R W)^{-1})`, inversely proportional to the estimation MSE.
    pub mu: f64,
    pub selected: Vec<usize>,
}

fn kronecker_matrices(r_r: &CMatrix, n_rf: usize) -> Result<(CMatrix, CMatrix)> {
    let eig = hermitian_eigen(r_r)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    if let Some(&neg) = eig
        .values
        .iter()
        .find(|&&l| l < -1e-12 * lmax.abs().max(1e-300))
    {
        return Err(Error::NotPsd(neg));
    }
    let positive = eig.values.iter().filter(|&&l| l > 1e-12 * lmax).count();
    if lmax <= 0.0 || positive < n_rf {
        return Err(Error::RankTooLow {
            positive,
            needed: n_rf,
        });
    }
    let b = symmetrize(r_r)?;
    let a = symmetrize(&(&b * &b))?;
    Ok((a, b))
}

/// Channel-estimation combiner for the Kronecker model: GRTM with `A = R_r^2`, `B = R_r`.
pub fn kronecker_combiner(
    r_r: &CMatrix,
    dict: &Dictionary,
    n_rf: usize,
    options: GrtmOptions,
) -> Result<KroneckerDesign> {
    let (a, b) = kronecker_matrices(r_r, n_rf)?;
    let options = GrtmOptions {
        cross_check: options.cross_check && hermitian_sqrt(&b, true).is_ok(),
    };
    let out = grtm(&a, &b, dict, n_rf, options)?;
    let mu = trace_objective(&out.w_rf, &a, &b)?;
    Ok(KroneckerDesign {
        w_rf: out.w_rf,
        mu,
        selected: out.selected,
    })
}

/// MaGiQ variant of the Kronecker design (requires nonsingular `R_r`).
pub fn kronecker_magiq(
    r_r: &CMatrix,
    scheme: &HardwareScheme,
    n_rf: usize,
    controls: &SolverControls,
) -> Result<KroneckerDesign> {
    let (a, b) = kronecker_matrices(r_r, n_rf)?;
    let (w_rf, _) = magiq_ratio_trace(&a, &b, scheme, n_rf, controls)?;
    let mu = trace_objective(&w_rf, &a, &b)?;
    Ok(KroneckerDesign {
        w_rf,
        mu,
        selected: Vec::new(),
    })
}
