//! Analog hardware schemes: feasible sets, projections onto them,
//! dictionaries of feasible columns, and component counts.
//!
//! | scheme | network | entries of an analog column |
//! |--------|---------|-----------------------------|
//! | S1 | phase shifters + on/off switches | each `0` or unit modulus |
//! | S2 | phase shifters | all unit modulus |
//! | S3 | N-to-1 switch | one entry `1`, rest `0` |
//! | S4 | fixed sub-arrays of size G | unit modulus on `S_j`, `0` elsewhere |
//! | S5 | flexible sub-arrays of size G | exactly G unit-modulus entries |

use std::collections::HashSet;
use std::fmt;

use log::warn;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{column, CMatrix};
use crate::random::gaussian_matrix;

/// Attempts per dictionary column before a duplicate is accepted.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum HardwareScheme {
    /// S1: fully connected phase shifters and on/off switches.
    #[serde(rename = "S1")]
    FullPsSwitches,
    /// S2: fully connected phase shifters.
    #[serde(rename = "S2")]
    FullPs,
    /// S3: switching network (antenna selection).
    #[serde(rename = "S3")]
    Switching,
    /// S4: fixed, possibly overlapping, sub-arrays of size `g`.
    ///
    /// Without explicit `subarrays`, column `j` uses the `g` consecutive
    /// antennas starting at `j * g` (wrapping around the array).
    #[serde(rename = "S4")]
    FixedSubarrays {
        g: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subarrays: Option<Vec<Vec<usize>>>,
    },
    /// S5: flexible sub-arrays, each column picks its own `g` antennas.
    #[serde(rename = "S5")]
    FlexibleSubarrays { g: usize },
}

impl fmt::Display for HardwareScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardwareScheme::FullPsSwitches => write!(f, "S1"),
            HardwareScheme::FullPs => write!(f, "S2"),
            HardwareScheme::Switching => write!(f, "S3"),
            HardwareScheme::FixedSubarrays { g, .. } => write!(f, "S4(G={g})"),
            HardwareScheme::FlexibleSubarrays { g } => write!(f, "S5(G={g})"),
        }
    }
}

/// Unit-modulus map `a / |a|`, with zero sent to `1`.
///
/// Values already on the unit circle (to rounding) pass through unchanged so
/// the projections are exactly idempotent.
#[inline]
pub fn unit_phase(a: Complex64) -> Complex64 {
    let n2 = a.norm_sqr();
    if n2 == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if (n2 - 1.0).abs() <= 1e-14 {
        a
    } else {
        a / n2.sqrt()
    }
}

/// Indices of the `g` largest-magnitude entries; ties go to the lowest index.
fn top_indices(col: impl Iterator<Item = Complex64>, g: usize) -> Vec<usize> {
    let mut mags: Vec<(usize, f64)> = col.map(|z| z.norm()).enumerate().collect();
    mags.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut idx: Vec<usize> = mags.into_iter().take(g).map(|(i, _)| i).collect();
    idx.sort_unstable();
    idx
}

impl HardwareScheme {
    pub fn s1() -> Self {
        HardwareScheme::FullPsSwitches
    }
    pub fn s2() -> Self {
        HardwareScheme::FullPs
    }
    pub fn s3() -> Self {
        HardwareScheme::Switching
    }
    pub fn s4(g: usize) -> Self {
        HardwareScheme::FixedSubarrays { g, subarrays: None }
    }
    pub fn s5(g: usize) -> Self {
        HardwareScheme::FlexibleSubarrays { g }
    }

    /// Short tag used in result files (`S1` .. `S5`).
    pub fn tag(&self) -> &'static str {
        match self {
            HardwareScheme::FullPsSwitches => "S1",
            HardwareScheme::FullPs => "S2",
            HardwareScheme::Switching => "S3",
            HardwareScheme::FixedSubarrays { .. } => "S4",
            HardwareScheme::FlexibleSubarrays { .. } => "S5",
        }
    }

    /// Whether a dictionary atom is tied to one analog column (S4 only).
    pub fn is_slotted(&self) -> bool {
        matches!(self, HardwareScheme::FixedSubarrays { .. })
    }

    /// Antenna index set `S_j` of analog column `j` for S4.
    pub fn subarray(&self, n: usize, j: usize) -> Result<Vec<usize>> {
        let HardwareScheme::FixedSubarrays { g, subarrays } = self else {
            return Err(Error::DimensionMismatch(format!(
                "{self} has no sub-arrays"
            )));
        };
        let g = *g;
        if g == 0 || g > n {
            return Err(Error::DimensionMismatch(format!(
                "G={g} with N={n} antennas"
            )));
        }
        let set = match subarrays {
            Some(list) => {
                let s = list.get(j).ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "column {j} has no sub-array ({} given)",
                        list.len()
                    ))
                })?;
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != g || s.iter().any(|&i| i >= n) {
                    return Err(Error::DimensionMismatch(format!(
                        "sub-array {j} must hold {g} distinct indices below {n}"
                    )));
                }
                s
            }
            None => {
                let start = (j * g) % n;
                let mut s: Vec<usize> = (0..g).map(|i| (start + i) % n).collect();
                s.sort_unstable();
                s
            }
        };
        Ok(set)
    }

    fn check(&self, n: usize, cols: usize) -> Result<()> {
        match self {
            HardwareScheme::FlexibleSubarrays { g } if *g == 0 || *g > n => Err(
                Error::DimensionMismatch(format!("G={g} with N={n} antennas")),
            ),
            HardwareScheme::FixedSubarrays { .. } => {
                for j in 0..cols {
                    self.subarray(n, j)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether every column of `m` lies in the scheme's feasible set within `tol`.
    /// For S4, column `j` is checked against sub-array `S_j`.
    pub fn feasible(&self, m: &CMatrix, tol: f64) -> Result<bool> {
        let (n, cols) = m.shape();
        self.check(n, cols)?;
        for j in 0..cols {
            if !self.column_feasible(m, j, j, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Feasibility of column `j` of `m` when wired as analog column `slot`.
    pub fn column_feasible(&self, m: &CMatrix, j: usize, slot: usize, tol: f64) -> Result<bool> {
        let n = m.nrows();
        let col = m.column(j);
        let is_zero = |z: &Complex64| z.norm() <= tol;
        let is_unit = |z: &Complex64| (z.norm() - 1.0).abs() <= tol;
        let ok = match self {
            HardwareScheme::FullPsSwitches => col.iter().all(|z| is_zero(z) || is_unit(z)),
            HardwareScheme::FullPs => col.iter().all(is_unit),
            HardwareScheme::Switching => {
                let ones = col.iter().filter(|z| (**z - 1.0).norm() <= tol).count();
                ones == 1 && col.iter().all(|z| is_zero(z) || (*z - 1.0).norm() <= tol)
            }
            HardwareScheme::FixedSubarrays { .. } => {
                let set = self.subarray(n, slot)?;
                col.iter().enumerate().all(|(i, z)| {
                    if set.binary_search(&i).is_ok() {
                        is_unit(z)
                    } else {
                        is_zero(z)
                    }
                })
            }
            HardwareScheme::FlexibleSubarrays { g } => {
                if *g == 0 || *g > n {
                    return Err(Error::DimensionMismatch(format!(
                        "G={g} with N={n} antennas"
                    )));
                }
                let units = col.iter().filter(|z| is_unit(z)).count();
                units == *g && col.iter().all(|z| is_zero(z) || is_unit(z))
            }
        };
        Ok(ok)
    }

    /// Closest feasible matrix in Frobenius norm (per scheme rule).
    pub fn project(&self, a: &CMatrix) -> Result<CMatrix> {
        let (n, cols) = a.shape();
        self.check(n, cols)?;
        let mut out = CMatrix::zeros(n, cols);
        for j in 0..cols {
            let col = self.project_column(a, j, j)?;
            out.set_column(j, &col.column(0));
        }
        Ok(out)
    }

    /// Projection of column `j` of `a` as analog column `slot`.
    pub fn project_column(&self, a: &CMatrix, j: usize, slot: usize) -> Result<CMatrix> {
        let n = a.nrows();
        let src = a.column(j);
        let mut out = CMatrix::zeros(n, 1);
        match self {
            HardwareScheme::FullPsSwitches => {
                for (i, &z) in src.iter().enumerate() {
                    if z.norm() >= 0.5 {
                        out[(i, 0)] = unit_phase(z);
                    }
                }
            }
            HardwareScheme::FullPs => {
                for (i, &z) in src.iter().enumerate() {
                    out[(i, 0)] = unit_phase(z);
                }
            }
            HardwareScheme::Switching => {
                let best = top_indices(src.iter().copied(), 1)[0];
                out[(best, 0)] = Complex64::new(1.0, 0.0);
            }
            HardwareScheme::FixedSubarrays { .. } => {
                for i in self.subarray(n, slot)? {
                    out[(i, 0)] = unit_phase(src[i]);
                }
            }
            HardwareScheme::FlexibleSubarrays { g } => {
                if *g == 0 || *g > n {
                    return Err(Error::DimensionMismatch(format!(
                        "G={g} with N={n} antennas"
                    )));
                }
                for i in top_indices(src.iter().copied(), *g) {
                    out[(i, 0)] = unit_phase(src[i]);
                }
            }
        }
        Ok(out)
    }

    /// Phase shifter and switch counts for `n` antennas and `n_rf` chains.
    pub fn component_counts(&self, n: usize, n_rf: usize) -> ComponentCounts {
        let (phase_shifters, switches) = match self {
            HardwareScheme::FullPsSwitches => (n * n_rf, n * n_rf),
            HardwareScheme::FullPs => (n * n_rf, 0),
            HardwareScheme::Switching => (0, n_rf),
            HardwareScheme::FixedSubarrays { g, .. } => (g * n_rf, 0),
            HardwareScheme::FlexibleSubarrays { g } => (g * n_rf, g * n_rf),
        };
        ComponentCounts {
            phase_shifters,
            switches,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentCounts {
    pub phase_shifters: usize,
    pub switches: usize,
}

/// Candidate analog columns, every one feasible for the scheme it was built for.
///
/// For S4 each atom is wired to one analog column (`slots[q]`); greedy
/// selectors only consider atoms whose slot matches the column being filled.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub atoms: CMatrix,
    pub slots: Option<Vec<usize>>,
    /// Set when a unique atom could not be produced within the redraw budget.
    pub duplicate_warning: bool,
}

fn atom_key(col: &CMatrix) -> Vec<(u64, u64)> {
    col.iter()
        .map(|z| (z.re.to_bits(), z.im.to_bits()))
        .collect()
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn antennas(&self) -> usize {
        self.atoms.nrows()
    }

    /// Whether atom `q` may fill analog column `slot`.
    pub fn admissible(&self, q: usize, slot: usize) -> bool {
        match &self.slots {
            Some(s) => s[q] == slot,
            None => true,
        }
    }

    /// Projects raw columns onto the scheme's feasible set. For S4 every raw
    /// column is projected once per analog column `0..n_rf`.
    pub fn from_raw(scheme: &HardwareScheme, raw: &CMatrix, n_rf: usize) -> Result<Self> {
        let slots: Vec<usize> = if scheme.is_slotted() {
            (0..n_rf).collect()
        } else {
            vec![0]
        };
        let mut cols = Vec::new();
        let mut tags = Vec::new();
        let mut seen = HashSet::new();
        let mut duplicate_warning = false;
        for &slot in &slots {
            for j in 0..raw.ncols() {
                let c = scheme.project_column(raw, j, slot)?;
                duplicate_warning |= !seen.insert((slot, atom_key(&c)));
                cols.push(c);
                tags.push(slot);
            }
        }
        Ok(Self::assemble(
            raw.nrows(),
            cols,
            tags,
            scheme,
            duplicate_warning,
        ))
    }

    fn assemble(
        n: usize,
        cols: Vec<CMatrix>,
        tags: Vec<usize>,
        scheme: &HardwareScheme,
        duplicate_warning: bool,
    ) -> Self {
        let mut atoms = CMatrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            atoms.set_column(j, &c.column(0));
        }
        Dictionary {
            atoms,
            slots: scheme.is_slotted().then_some(tags),
            duplicate_warning,
        }
    }
}

/// Dictionary from Gaussian randomization: columns drawn from
/// `CN(0, W_opt W_opt*)` and projected onto the feasible set.
///
/// Duplicate atoms are redrawn up to 100 times; a column that is still a
/// duplicate is kept and `duplicate_warning` is set. For S4, `size` atoms are
/// produced for each analog column `0..n_rf`.
pub fn gaussian_dictionary<R: Rng + ?Sized>(
    scheme: &HardwareScheme,
    w_opt: &CMatrix,
    size: usize,
    n_rf: usize,
    rng: &mut R,
) -> Result<Dictionary> {
    if size == 0 {
        return Err(Error::InvalidSize(
            "dictionary size must be at least 1".into(),
        ));
    }
    let n = w_opt.nrows();
    let k = w_opt.ncols();
    let slots: Vec<usize> = if scheme.is_slotted() {
        if n_rf == 0 {
            return Err(Error::InvalidSize("S4 dictionary needs n_rf >= 1".into()));
        }
        (0..n_rf).collect()
    } else {
        vec![0]
    };
    let mut cols = Vec::with_capacity(size * slots.len());
    let mut tags = Vec::with_capacity(size * slots.len());
    let mut duplicate_warning = false;
    for &slot in &slots {
        let mut seen = HashSet::new();
        for _ in 0..size {
            let mut accepted = None;
            for _ in 0..MAX_REDRAWS {
                let x = w_opt * gaussian_matrix(k, 1, rng);
                let c = scheme.project_column(&x, 0, slot)?;
                if seen.insert(atom_key(&c)) {
                    accepted = Some(c);
                    break;
                }
                accepted = Some(c);
            }
            let c = accepted.expect("at least one draw");
            cols.push(c);
            tags.push(slot);
        }
        let unique = seen.len();
        if unique < size {
            duplicate_warning = true;
            warn!("gaussian dictionary: {unique} unique atoms out of {size} for slot {slot}");
        }
    }
    Ok(Dictionary::assemble(
        n,
        cols,
        tags,
        scheme,
        duplicate_warning,
    ))
}

/// Unit-modulus steering dictionary: `sqrt(N) a(phi_q)` with `phi_q = 2 pi q / size`,
/// `q = 1..=size`. Feasible for S2 (and S1) as built.
pub fn steering_dictionary(n: usize, size: usize, d_over_lambda: f64) -> Result<Dictionary> {
    if size == 0 {
        return Err(Error::InvalidSize(
            "dictionary size must be at least 1".into(),
        ));
    }
    let scale = (n as f64).sqrt();
    let mut atoms = CMatrix::zeros(n, size);
    let mut seen = HashSet::new();
    let mut duplicate_warning = false;
    for q in 1..=size {
        let phi = 2.0 * std::f64::consts::PI * q as f64 / size as f64;
        let a = crate::channel::steering_vector(n, phi, d_over_lambda) * Complex64::new(scale, 0.0);
        duplicate_warning |= !seen.insert(atom_key(&a));
        atoms.set_column(q - 1, &a.column(0));
    }
    Ok(Dictionary {
        atoms,
        slots: None,
        duplicate_warning,
    })
}

/// Column `q` of a dictionary as an `N x 1` matrix.
pub fn atom(dict: &Dictionary, q: usize) -> CMatrix {
    column(&dict.atoms, q)
}
