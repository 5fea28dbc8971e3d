//! Declarative Monte Carlo experiments.
//!
//! A scenario fixes the array sizes, a channel model, an interference model,
//! a list of hardware schemes and algorithms, and a sweep over RF-chain
//! counts and SNR values. [`run_scenario`] draws `trials` channel
//! realizations (each from its own random substream, shared by every sweep
//! point, scheme and algorithm), designs the beamformers, and aggregates the
//! per-stream MSE of each design against the fully-digital optimum.
//!
//! Configuration files are TOML:
//!
//! ```toml
//! scenario = "demo"
//! side = "combiner"          # precoder | combiner | kronecker
//! trials = 100
//! seed = 7
//!
//! [dims]
//! n_t = 10
//! n_r = 15
//!
//! [channel]
//! kind = "mmwave"            # mmwave | gaussian | circulant | kronecker
//! n_cl = 6
//! n_ray = 1
//!
//! [interference]
//! kind = "white"             # white | colored
//! sigma2 = 1.0
//!
//! [[schemes]]
//! kind = "S2"
//!
//! [[schemes]]
//! kind = "S4"
//! g = 5
//!
//! [[algorithms]]
//! name = "magiq"
//!
//! [[algorithms]]
//! name = "grtm"
//!
//! [dictionary]
//! source = "auto"            # auto | steering | gaussian
//!
//! [sweep]
//! n_rf = [3]
//! snr_db = [-10.0, 0.0, 10.0]
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{
    analytic_mse, full_digital_mse, optimal_digital_combiner, optimal_digital_precoder,
    ratio_trace_optimum, Allocation, DigitalPrecoderOpt, Estimate, SystemDims,
};
use crate::channel::{
    circulant_channel, gaussian_channel, interference_cov, mmwave_channel, random_correlation,
    Interference, MmWaveParams, HALF_WAVELENGTH,
};
use crate::combiner::{
    grtm_combiner, kronecker_combiner, kronecker_magiq, magiq_combiner, somp_weighted_combiner,
    GrtmOptions,
};
use crate::error::{Error, Result};
use crate::hardware::{gaussian_dictionary, steering_dictionary, Dictionary, HardwareScheme};
use crate::matcore::{identity, real, symmetrize, top_eigvecs, CMatrix};
use crate::precoder::{
    alt_mag, magiq_precoder, pe_altmin_precoder, somp_precoder, MagiqStep, SolverControls, SompStep,
};
use crate::random::{complex_normal, substream};

const SALT_CHANNEL: u64 = 1;
const SALT_INTERFERENCE: u64 = 2;
const SALT_DICTIONARY: u64 = 3;

const STEERING_DICTIONARY_SIZE: usize = 1000;
const GAUSSIAN_DICTIONARY_FACTOR: usize = 10;

/// Which end of the link is designed; the other end is fully digital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Precoder,
    Combiner,
    /// Pilot-based channel estimation under a Kronecker receive correlation.
    Kronecker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayDims {
    pub n_t: usize,
    pub n_r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelSpec {
    Mmwave {
        n_cl: usize,
        #[serde(default = "one")]
        n_ray: usize,
        #[serde(default = "half")]
        d_over_lambda: f64,
    },
    /// i.i.d. CN(0, 1) entries.
    Gaussian,
    /// DFT-structured channel with `paths` CN(0, 1) gains.
    Circulant { paths: usize },
    /// Random receive correlation of the given rank (Kronecker side only).
    Kronecker { rank: usize },
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    HALF_WAVELENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Magiq,
    PeAltmin,
    Somp,
    AltMagSomp,
    AltMagMagiq,
    Grtm {
        #[serde(default)]
        cross_check: bool,
    },
    /// The unconstrained optimum itself, as a reference row.
    FullDigital,
}

impl AlgorithmSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmSpec::Magiq => "magiq",
            AlgorithmSpec::PeAltmin => "pe-altmin",
            AlgorithmSpec::Somp => "somp",
            AlgorithmSpec::AltMagSomp => "alt-mag-somp",
            AlgorithmSpec::AltMagMagiq => "alt-mag-magiq",
            AlgorithmSpec::Grtm { .. } => "grtm",
            AlgorithmSpec::FullDigital => "full-digital",
        }
    }

    fn supports(&self, side: Side) -> bool {
        match side {
            Side::Precoder => !matches!(self, AlgorithmSpec::Grtm { .. }),
            Side::Combiner => matches!(
                self,
                AlgorithmSpec::Magiq
                    | AlgorithmSpec::Somp
                    | AlgorithmSpec::Grtm { .. }
                    | AlgorithmSpec::FullDigital
            ),
            Side::Kronecker => matches!(
                self,
                AlgorithmSpec::Magiq | AlgorithmSpec::Grtm { .. } | AlgorithmSpec::FullDigital
            ),
        }
    }

    fn uses_dictionary(&self) -> bool {
        matches!(
            self,
            AlgorithmSpec::Somp | AlgorithmSpec::AltMagSomp | AlgorithmSpec::Grtm { .. }
        )
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionarySource {
    /// Steering vectors for mmWave channels on S1, S2 and S4; Gaussian
    /// randomization otherwise.
    #[default]
    Auto,
    Steering,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    #[serde(default)]
    pub source: DictionarySource,
    /// Number of atoms (per analog column for S4). Defaults to 1000 steering
    /// vectors or `10 N` Gaussian draws.
    #[serde(default)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n_rf: Vec<usize>,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
}

fn default_snr() -> Vec<f64> {
    vec![0.0]
}

fn default_interference() -> Interference {
    Interference::White { sigma2: 1.0 }
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub side: Side,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Record wall-clock time per design; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
    pub dims: ArrayDims,
    pub channel: ChannelSpec,
    #[serde(default = "default_interference")]
    pub interference: Interference,
    pub schemes: Vec<HardwareScheme>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub controls: SolverControls,
    pub sweep: Sweep,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.n_rf.is_empty() || self.sweep.snr_db.is_empty() {
            return bad("sweep needs at least one n_rf and one snr_db value".into());
        }
        if self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite".into());
        }
        if self.schemes.is_empty() || self.algorithms.is_empty() {
            return bad("at least one scheme and one algorithm are required".into());
        }
        let ArrayDims { n_t, n_r } = self.dims;
        if n_t == 0 || n_r == 0 {
            return bad("n_t and n_r must be positive".into());
        }
        let limit = match self.side {
            Side::Precoder | Side::Combiner => n_t.min(n_r),
            Side::Kronecker => n_r,
        };
        if let Some(&k) = self.sweep.n_rf.iter().find(|&&k| k == 0 || k > limit) {
            return bad(format!("n_rf = {k} must lie in 1..={limit}"));
        }
        for alg in &self.algorithms {
            if !alg.supports(self.side) {
                return bad(format!(
                    "algorithm {alg} is not available on the {:?} side",
                    self.side
                ));
            }
        }
        let n_design = match self.side {
            Side::Precoder => n_t,
            _ => n_r,
        };
        for s in &self.schemes {
            if let HardwareScheme::FixedSubarrays { g, .. }
            | HardwareScheme::FlexibleSubarrays { g } = s
            {
                if *g == 0 || *g > n_design {
                    return bad(format!("{s}: G must lie in 1..={n_design}"));
                }
            }
            if s.is_slotted() {
                let kmax = *self.sweep.n_rf.iter().max().expect("nonempty");
                let probe = CMatrix::zeros(n_design, kmax);
                s.feasible(&probe, 0.0)?;
            }
        }
        if let Some(0) = self.dictionary.size {
            return bad("dictionary size must be at least 1".into());
        }
        self.interference.validate()?;
        self.controls.validate()?;
        match (self.side, self.channel) {
            (Side::Kronecker, ChannelSpec::Kronecker { rank }) => {
                let kmax = *self.sweep.n_rf.iter().max().expect("nonempty");
                if rank < kmax || rank > n_r {
                    return bad(format!("kronecker rank {rank} must lie in {kmax}..={n_r}"));
                }
            }
            (Side::Kronecker, _) | (_, ChannelSpec::Kronecker { .. }) => {
                return bad("the kronecker side and channel go together".into());
            }
            (
                _,
                ChannelSpec::Mmwave {
                    n_cl,
                    n_ray,
                    d_over_lambda,
                },
            ) => MmWaveParams {
                n_t,
                n_r,
                n_cl,
                n_ray,
                d_over_lambda,
            }
            .validate()?,
            (_, ChannelSpec::Circulant { paths }) => {
                if paths == 0 || paths > n_t.min(n_r) {
                    return bad(format!(
                        "circulant paths {paths} must lie in 1..={}",
                        n_t.min(n_r)
                    ));
                }
            }
            (_, ChannelSpec::Gaussian) => {}
        }
        Ok(())
    }
}

/// One aggregated row of output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scenario: String,
    pub algorithm: String,
    pub scheme: String,
    pub n_rf: usize,
    pub snr_db: f64,
    /// Successful trials.
    pub trials: usize,
    /// Mean per-stream MSE of the design.
    pub mse: f64,
    /// Mean per-stream MSE of the fully-digital optimum on the same trials.
    pub mse_opt: f64,
    pub mse_gap: f64,
    /// Standard error of `mse`.
    pub stderr: f64,
    pub failures: usize,
    pub wall_ms: f64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "algorithm",
    "scheme",
    "n_rf",
    "snr_db",
    "trials",
    "mse",
    "mse_opt",
    "mse_gap",
    "stderr",
    "failures",
    "wall_ms",
    "seed",
];

fn fmt_float(x: f64) -> String {
    format!("{x:.9e}")
}

fn record_order(a: &ResultRecord, b: &ResultRecord) -> Ordering {
    a.scenario
        .cmp(&b.scenario)
        .then_with(|| a.algorithm.cmp(&b.algorithm))
        .then_with(|| a.scheme.cmp(&b.scheme))
        .then_with(|| a.n_rf.cmp(&b.n_rf))
        .then_with(|| a.snr_db.total_cmp(&b.snr_db))
}

/// Sorts rows by (scenario, algorithm, scheme, n_rf, snr_db).
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(record_order);
}

fn write_records<W: std::io::Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &sorted {
        w.write_record([
            r.scenario.clone(),
            r.algorithm.clone(),
            r.scheme.clone(),
            r.n_rf.to_string(),
            fmt_float(r.snr_db),
            r.trials.to_string(),
            fmt_float(r.mse),
            fmt_float(r.mse_opt),
            fmt_float(r.mse_gap),
            fmt_float(r.stderr),
            r.failures.to_string(),
            fmt_float(r.wall_ms),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders records as CSV text (sorted, fixed header, 10 significant digits).
pub fn to_csv_string(records: &[ResultRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_csv(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(records, std::io::BufWriter::new(file))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Io(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(io)?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::Io(format!("bad number '{}'", &row[i])))
        };
        let u = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|_| Error::Io(format!("bad integer '{}'", &row[i])))
        };
        out.push(ResultRecord {
            scenario: row[0].to_owned(),
            algorithm: row[1].to_owned(),
            scheme: row[2].to_owned(),
            n_rf: u(3)? as usize,
            snr_db: f(4)?,
            trials: u(5)? as usize,
            mse: f(6)?,
            mse_opt: f(7)?,
            mse_gap: f(8)?,
            stderr: f(9)?,
            failures: u(10)? as usize,
            wall_ms: f(11)?,
            seed: u(12)?,
        });
    }
    Ok(out)
}

/// Label of a scheme in result files, e.g. `S2` or `S4-G5`.
pub fn scheme_label(s: &HardwareScheme) -> String {
    match s {
        HardwareScheme::FixedSubarrays { g, .. } | HardwareScheme::FlexibleSubarrays { g } => {
            format!("{}-G{g}", s.tag())
        }
        _ => s.tag().to_owned(),
    }
}

/// Label used for the fully-digital reference rows.
pub const DIGITAL_LABEL: &str = "digital";

#[derive(Debug, Clone, Copy)]
struct Point {
    n_rf: usize,
    snr_db: f64,
}

#[derive(Debug, Clone, Copy)]
struct Combo {
    point: usize,
    scheme: Option<usize>,
    alg: usize,
}

/// Outcome of one design on one trial: `(mse, mse_opt)` per stream.
type Outcome = std::result::Result<(f64, f64), Error>;

fn enumerate(config: &ExperimentConfig) -> (Vec<Point>, Vec<Combo>) {
    let mut points = Vec::new();
    for &n_rf in &config.sweep.n_rf {
        for &snr_db in &config.sweep.snr_db {
            points.push(Point { n_rf, snr_db });
        }
    }
    let mut combos = Vec::new();
    for p in 0..points.len() {
        for (a, alg) in config.algorithms.iter().enumerate() {
            if matches!(alg, AlgorithmSpec::FullDigital) {
                combos.push(Combo {
                    point: p,
                    scheme: None,
                    alg: a,
                });
            } else {
                for s in 0..config.schemes.len() {
                    combos.push(Combo {
                        point: p,
                        scheme: Some(s),
                        alg: a,
                    });
                }
            }
        }
    }
    (points, combos)
}

/// Channel draw of one trial.
enum Draw {
    Link { h: CMatrix, r_z: CMatrix },
    Kronecker { r_r: CMatrix },
}

fn draw(config: &ExperimentConfig, trial: u64) -> Result<Draw> {
    let ArrayDims { n_t, n_r } = config.dims;
    let mut rng = substream(config.seed, SALT_CHANNEL, trial);
    let h = match config.channel {
        ChannelSpec::Mmwave {
            n_cl,
            n_ray,
            d_over_lambda,
        } => {
            let params = MmWaveParams {
                n_t,
                n_r,
                n_cl,
                n_ray,
                d_over_lambda,
            };
            mmwave_channel(&params, &mut rng)?.h
        }
        ChannelSpec::Gaussian => gaussian_channel(n_t, n_r, &mut rng),
        ChannelSpec::Circulant { paths } => {
            let gains: Vec<_> = (0..paths).map(|_| complex_normal(&mut rng)).collect();
            circulant_channel(&gains, n_t, n_r)?
        }
        ChannelSpec::Kronecker { rank } => {
            return Ok(Draw::Kronecker {
                r_r: random_correlation(n_r, rank, &mut rng)?,
            })
        }
    };
    let mut irng = substream(config.seed, SALT_INTERFERENCE, trial);
    let r_z = interference_cov(&config.interference, n_r, &mut irng)?;
    Ok(Draw::Link { h, r_z })
}

/// Steering dictionaries do not depend on the trial, so they are built once.
struct SteeringCache {
    entries: Vec<((usize, usize), Dictionary)>,
}

impl SteeringCache {
    fn get(&self, scheme: usize, n_rf: usize) -> Option<&Dictionary> {
        self.entries
            .iter()
            .find(|(k, _)| *k == (scheme, n_rf))
            .map(|(_, d)| d)
    }
}

fn uses_steering(config: &ExperimentConfig, scheme: &HardwareScheme) -> bool {
    match config.dictionary.source {
        DictionarySource::Steering => true,
        DictionarySource::Gaussian => false,
        DictionarySource::Auto => {
            matches!(config.channel, ChannelSpec::Mmwave { .. })
                && matches!(
                    scheme,
                    HardwareScheme::FullPsSwitches
                        | HardwareScheme::FullPs
                        | HardwareScheme::FixedSubarrays { .. }
                )
        }
    }
}

fn design_antennas(config: &ExperimentConfig) -> usize {
    match config.side {
        Side::Precoder => config.dims.n_t,
        _ => config.dims.n_r,
    }
}

fn d_over_lambda(config: &ExperimentConfig) -> f64 {
    match config.channel {
        ChannelSpec::Mmwave { d_over_lambda, .. } => d_over_lambda,
        _ => HALF_WAVELENGTH,
    }
}

fn build_steering(config: &ExperimentConfig) -> Result<SteeringCache> {
    let mut entries = Vec::new();
    if !config.algorithms.iter().any(AlgorithmSpec::uses_dictionary) {
        return Ok(SteeringCache { entries });
    }
    let n = design_antennas(config);
    let size = config.dictionary.size.unwrap_or(STEERING_DICTIONARY_SIZE);
    let raw = steering_dictionary(n, size, d_over_lambda(config))?;
    for (s, scheme) in config.schemes.iter().enumerate() {
        if !uses_steering(config, scheme) {
            continue;
        }
        for &n_rf in &config.sweep.n_rf {
            let dict = Dictionary::from_raw(scheme, &raw.atoms, n_rf)?;
            entries.push(((s, n_rf), dict));
        }
    }
    Ok(SteeringCache { entries })
}

struct TrialContext<'a> {
    config: &'a ExperimentConfig,
    steering: &'a SteeringCache,
    trial: u64,
}

impl TrialContext<'_> {
    /// Dictionary for a scheme; Gaussian randomization draws around `w_opt`.
    fn dictionary(&self, scheme_idx: usize, n_rf: usize, w_opt: &CMatrix) -> Result<Dictionary> {
        let scheme = &self.config.schemes[scheme_idx];
        if let Some(d) = self.steering.get(scheme_idx, n_rf) {
            return Ok(d.clone());
        }
        let size = self
            .config
            .dictionary
            .size
            .unwrap_or(GAUSSIAN_DICTIONARY_FACTOR * w_opt.nrows());
        let mut rng = substream(self.config.seed, SALT_DICTIONARY, self.trial);
        let dict = gaussian_dictionary(scheme, w_opt, size, n_rf, &mut rng)?;
        if dict.duplicate_warning {
            debug!(
                "trial {}: dictionary for {scheme} contains duplicates",
                self.trial
            );
        }
        Ok(dict)
    }
}

fn check_feasible(scheme: &HardwareScheme, m: &CMatrix) {
    if log::log_enabled!(log::Level::Debug) {
        let ok = scheme.feasible(m, 1e-9).unwrap_or(false);
        debug!(
            "designed {}x{} analog matrix for {scheme}: feasible = {ok}",
            m.nrows(),
            m.ncols()
        );
        if !ok {
            warn!("analog matrix infeasible for {scheme}");
        }
    }
}

/// Evaluates every design of one trial, in combo order, with per-design elapsed milliseconds.
fn run_trial(ctx: &TrialContext<'_>, points: &[Point], combos: &[Combo]) -> Vec<(Outcome, f64)> {
    let config = ctx.config;
    let drawn = draw(config, ctx.trial);
    let mut out = Vec::with_capacity(combos.len());
    let mut p = 0;
    while p < points.len() {
        let group: Vec<&Combo> = combos.iter().filter(|c| c.point == p).collect();
        let start = Instant::now();
        let shared = drawn
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|d| PointSetup::new(config, d, points[p]));
        let setup_ms = start.elapsed().as_secs_f64() * 1e3;
        for combo in group {
            let start = Instant::now();
            let res = match &shared {
                Ok(s) => s.evaluate(ctx, combo),
                Err(e) => Err(e.clone()),
            };
            if let Err(e) = &res {
                debug!(
                    "trial {} {} n_rf={} snr={}: {e}",
                    ctx.trial, config.algorithms[combo.alg], points[p].n_rf, points[p].snr_db
                );
            }
            out.push((res, setup_ms + start.elapsed().as_secs_f64() * 1e3));
        }
        p += 1;
    }
    out
}

/// Quantities shared by every design at one sweep point of one trial.
enum PointSetup {
    Precoder {
        h_tilde: CMatrix,
        r_z: CMatrix,
        dims: SystemDims,
        opt: DigitalPrecoderOpt,
        mse_opt: f64,
    },
    Combiner {
        h_bar: CMatrix,
        r_z: CMatrix,
        n_rf: usize,
        mse_opt: f64,
    },
    Kronecker {
        r_r: CMatrix,
        n_rf: usize,
        mu_opt: f64,
    },
}

impl PointSetup {
    fn new(config: &ExperimentConfig, drawn: &Draw, point: Point) -> Result<Self> {
        let ArrayDims { n_t, n_r } = config.dims;
        let n_rf = point.n_rf;
        match drawn {
            Draw::Kronecker { r_r } => {
                let (_, values) = top_eigvecs(r_r, n_rf)?;
                Ok(PointSetup::Kronecker {
                    r_r: r_r.clone(),
                    n_rf,
                    mu_opt: values.iter().sum(),
                })
            }
            Draw::Link { h, r_z } => {
                let p_r = config.interference.sigma2() * 10f64.powf(point.snr_db / 10.0);
                let h_tilde = h * real(p_r.sqrt());
                let dims = SystemDims::new(n_t, n_r, n_rf);
                let opt = optimal_digital_precoder(&h_tilde, r_z, &dims, &Allocation::Uniform)?;
                let n_s = n_rf as f64;
                match config.side {
                    Side::Precoder => {
                        let h_bar = &h_tilde * opt.target();
                        let mse_opt = analytic_mse(&h_bar, r_z, &identity(n_r))? / n_s;
                        Ok(PointSetup::Precoder {
                            h_tilde,
                            r_z: r_z.clone(),
                            dims,
                            opt,
                            mse_opt,
                        })
                    }
                    _ => {
                        let h_bar = &h_tilde * opt.target();
                        let mse_opt = full_digital_mse(&h_bar, r_z)? / n_s;
                        Ok(PointSetup::Combiner {
                            h_bar,
                            r_z: r_z.clone(),
                            n_rf,
                            mse_opt,
                        })
                    }
                }
            }
        }
    }

    fn evaluate(&self, ctx: &TrialContext<'_>, combo: &Combo) -> Outcome {
        let config = ctx.config;
        let alg = &config.algorithms[combo.alg];
        let controls = &config.controls;
        match self {
            PointSetup::Precoder {
                h_tilde,
                r_z,
                dims,
                opt,
                mse_opt,
            } => {
                let Some(s) = combo.scheme else {
                    return Ok((*mse_opt, *mse_opt));
                };
                let scheme = &config.schemes[s];
                let n_s = dims.n_s;
                let precoder = match alg {
                    AlgorithmSpec::Magiq => magiq_precoder(opt, scheme, controls)?.0,
                    AlgorithmSpec::PeAltmin => pe_altmin_precoder(opt, scheme, controls)?.0,
                    AlgorithmSpec::AltMagMagiq => alt_mag(opt, scheme, &MagiqStep, controls)?.0,
                    AlgorithmSpec::Somp | AlgorithmSpec::AltMagSomp => {
                        let dict = ctx.dictionary(s, dims.n_rf_t, &opt.target())?;
                        if matches!(alg, AlgorithmSpec::Somp) {
                            somp_precoder(&opt.target(), &dict, scheme, dims.n_rf_t, n_s)?
                        } else {
                            let step = SompStep {
                                dictionary: &dict,
                                n_rf: dims.n_rf_t,
                            };
                            alt_mag(opt, scheme, &step, controls)?.0
                        }
                    }
                    AlgorithmSpec::Grtm { .. } | AlgorithmSpec::FullDigital => {
                        unreachable!("rejected by validation")
                    }
                };
                check_feasible(scheme, &precoder.f_rf);
                let h_bar = h_tilde * precoder.matrix();
                let mse = analytic_mse(&h_bar, r_z, &identity(h_tilde.nrows()))? / n_s as f64;
                Ok((mse, *mse_opt))
            }
            PointSetup::Combiner {
                h_bar,
                r_z,
                n_rf,
                mse_opt,
            } => {
                let Some(s) = combo.scheme else {
                    return Ok((*mse_opt, *mse_opt));
                };
                let scheme = &config.schemes[s];
                let combiner = match alg {
                    AlgorithmSpec::Magiq => magiq_combiner(h_bar, r_z, scheme, *n_rf, controls)?.0,
                    AlgorithmSpec::Grtm { cross_check } => {
                        let w_opt = optimal_digital_combiner(h_bar, r_z, *n_rf)?;
                        let dict = ctx.dictionary(s, *n_rf, &w_opt)?;
                        let options = GrtmOptions {
                            cross_check: *cross_check,
                        };
                        let (c, out) = grtm_combiner(h_bar, r_z, scheme, &dict, *n_rf, options)?;
                        if out.cross_check_disagreements > 0 {
                            warn!(
                                "trial {}: ratio scoring disagreed in {} rounds",
                                ctx.trial, out.cross_check_disagreements
                            );
                        }
                        c
                    }
                    AlgorithmSpec::Somp => {
                        let w_opt = optimal_digital_combiner(h_bar, r_z, *n_rf)?;
                        let dict = ctx.dictionary(s, *n_rf, &w_opt)?;
                        somp_weighted_combiner(h_bar, r_z, scheme, &dict, *n_rf)?
                    }
                    _ => unreachable!("rejected by validation"),
                };
                check_feasible(scheme, &combiner.w_rf);
                let mse = analytic_mse(h_bar, r_z, &combiner.w_rf)? / h_bar.ncols() as f64;
                Ok((mse, *mse_opt))
            }
            PointSetup::Kronecker { r_r, n_rf, mu_opt } => {
                let inv_opt = 1.0 / mu_opt;
                let Some(s) = combo.scheme else {
                    return Ok((inv_opt, inv_opt));
                };
                let scheme = &config.schemes[s];
                let design = match alg {
                    AlgorithmSpec::Magiq => kronecker_magiq(r_r, scheme, *n_rf, controls)?,
                    AlgorithmSpec::Grtm { cross_check } => {
                        let b = symmetrize(r_r)?;
                        let a = symmetrize(&(&b * &b))?;
                        let w_opt = ratio_trace_optimum(&a, &b, *n_rf)
                            .map(|(w, _)| w)
                            .or_else(|_| top_eigvecs(&b, *n_rf).map(|(w, _)| w))?;
                        let dict = ctx.dictionary(s, *n_rf, &w_opt)?;
                        let options = GrtmOptions {
                            cross_check: *cross_check,
                        };
                        kronecker_combiner(r_r, &dict, *n_rf, options)?
                    }
                    _ => unreachable!("rejected by validation"),
                };
                check_feasible(scheme, &design.w_rf);
                Ok((1.0 / design.mu, inv_opt))
            }
        }
    }
}

/// Runs a scenario. With `workers = Some(n)` trials run on a dedicated pool of
/// `n` threads; the output does not depend on the worker count.
pub fn run_scenario(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    match workers {
        Some(n) => {
            if n == 0 {
                return Err(Error::InvalidConfig("workers must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            pool.install(|| run_inner(config))
        }
        None => run_inner(config),
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let (points, combos) = enumerate(config);
    let steering = build_steering(config)?;
    let per_trial: Vec<Vec<(Outcome, f64)>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let ctx = TrialContext {
                config,
                steering: &steering,
                trial,
            };
            run_trial(&ctx, &points, &combos)
        })
        .collect();

    let mut records = Vec::with_capacity(combos.len());
    for (i, combo) in combos.iter().enumerate() {
        let mut mse = Vec::new();
        let mut opt = Vec::new();
        let mut failures = 0;
        let mut wall = 0.0;
        for (trial, outcomes) in per_trial.iter().enumerate() {
            let (res, ms) = &outcomes[i];
            wall += ms;
            match res {
                Ok((e, o)) => {
                    mse.push(*e);
                    opt.push(*o);
                }
                Err(err) => {
                    failures += 1;
                    warn!(
                        "{}: trial {trial} of {} failed: {err}",
                        config.scenario, config.algorithms[combo.alg]
                    );
                }
            }
        }
        let est = Estimate::from_samples(&mse);
        let mean_opt = Estimate::from_samples(&opt).mean;
        let point = points[combo.point];
        records.push(ResultRecord {
            scenario: config.scenario.clone(),
            algorithm: config.algorithms[combo.alg].label().to_owned(),
            scheme: combo
                .scheme
                .map(|s| scheme_label(&config.schemes[s]))
                .unwrap_or_else(|| DIGITAL_LABEL.to_owned()),
            n_rf: point.n_rf,
            snr_db: point.snr_db,
            trials: mse.len(),
            mse: est.mean,
            mse_opt: mean_opt,
            mse_gap: est.mean - mean_opt,
            stderr: est.stderr,
            failures,
            wall_ms: if config.timing { wall } else { 0.0 },
            seed: config.seed,
        });
    }
    sort_records(&mut records);
    Ok(records)
}

/// Names and one-line descriptions of the built-in presets.
pub const PRESETS: [(&str, &str); 9] = [
    (
        "fig2",
        "precoder: MaGiQ vs PE-AltMin on S2, mmWave 10x15, N_RF 1..6",
    ),
    (
        "fig3",
        "precoder: MaGiQ, SOMP, Alt-MaG(SOMP) on S2, mmWave 10x15, N_RF 1..6",
    ),
    ("fig3-s1", "fig3 on S1 (phase shifters and switches)"),
    (
        "fig4",
        "combiner: MaGiQ, GRTM, SOMP on S2, mmWave 10x15, N_RF 1..6",
    ),
    (
        "fig5",
        "combiner: 150 receive antennas, 4 clusters, N_RF 4, SNR sweep",
    ),
    (
        "fig6",
        "combiner: sub-array schemes S4/S5 with G 5, SNR sweep",
    ),
    (
        "fig7",
        "combiner: Gaussian channel, colored interference, S1, SNR sweep",
    ),
    ("fig8", "combiner: MaGiQ on S1..S5 with G 3, SNR sweep"),
    (
        "kron",
        "channel estimation: GRTM and MaGiQ on a Kronecker receive correlation",
    ),
];

fn snr_grid() -> Vec<f64> {
    vec![-10.0, -5.0, 0.0, 5.0, 10.0]
}

fn base(scenario: &str, side: Side, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        scenario: scenario.to_owned(),
        side,
        trials,
        seed: 42,
        output: None,
        timing: false,
        dims: ArrayDims { n_t: 10, n_r: 15 },
        channel: ChannelSpec::Mmwave {
            n_cl: 6,
            n_ray: 1,
            d_over_lambda: HALF_WAVELENGTH,
        },
        interference: default_interference(),
        schemes: vec![HardwareScheme::s2()],
        algorithms: vec![AlgorithmSpec::Magiq],
        dictionary: DictionarySpec::default(),
        controls: SolverControls::default(),
        sweep: Sweep {
            n_rf: (1..=6).collect(),
            snr_db: default_snr(),
        },
    }
}

/// Built-in scenario by name (see [`PRESETS`]).
///
/// `fig3` runs on S2: its figure is captioned with S1 while the comparison is
/// among phase-shifter designs, so the S1 reading is available as `fig3-s1`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let config = match name {
        "fig2" => ExperimentConfig {
            algorithms: vec![AlgorithmSpec::Magiq, AlgorithmSpec::PeAltmin],
            ..base(name, Side::Precoder, 200)
        },
        "fig3" | "fig3-s1" => ExperimentConfig {
            schemes: vec![if name == "fig3" {
                HardwareScheme::s2()
            } else {
                HardwareScheme::s1()
            }],
            algorithms: vec![
                AlgorithmSpec::Magiq,
                AlgorithmSpec::Somp,
                AlgorithmSpec::AltMagSomp,
            ],
            ..base(name, Side::Precoder, 200)
        },
        "fig4" => ExperimentConfig {
            algorithms: vec![
                AlgorithmSpec::Magiq,
                AlgorithmSpec::Grtm { cross_check: false },
                AlgorithmSpec::Somp,
            ],
            dictionary: DictionarySpec {
                source: DictionarySource::Steering,
                size: Some(STEERING_DICTIONARY_SIZE),
            },
            ..base(name, Side::Combiner, 200)
        },
        "fig5" => ExperimentConfig {
            dims: ArrayDims { n_t: 10, n_r: 150 },
            channel: ChannelSpec::Mmwave {
                n_cl: 4,
                n_ray: 1,
                d_over_lambda: HALF_WAVELENGTH,
            },
            algorithms: vec![
                AlgorithmSpec::Magiq,
                AlgorithmSpec::Grtm { cross_check: false },
                AlgorithmSpec::Somp,
                AlgorithmSpec::FullDigital,
            ],
            dictionary: DictionarySpec {
                source: DictionarySource::Steering,
                size: Some(STEERING_DICTIONARY_SIZE),
            },
            sweep: Sweep {
                n_rf: vec![4],
                snr_db: snr_grid(),
            },
            ..base(name, Side::Combiner, 100)
        },
        "fig6" => ExperimentConfig {
            schemes: vec![HardwareScheme::s4(5), HardwareScheme::s5(5)],
            algorithms: vec![
                AlgorithmSpec::Magiq,
                AlgorithmSpec::Grtm { cross_check: false },
                AlgorithmSpec::Somp,
                AlgorithmSpec::FullDigital,
            ],
            sweep: Sweep {
                n_rf: vec![3],
                snr_db: snr_grid(),
            },
            ..base(name, Side::Combiner, 200)
        },
        "fig7" => ExperimentConfig {
            channel: ChannelSpec::Gaussian,
            interference: Interference::Colored {
                sigma2: 1.0,
                condition_target: 100.0,
            },
            schemes: vec![HardwareScheme::s1()],
            algorithms: vec![
                AlgorithmSpec::Magiq,
                AlgorithmSpec::Grtm { cross_check: false },
                AlgorithmSpec::Somp,
                AlgorithmSpec::FullDigital,
            ],
            dictionary: DictionarySpec {
                source: DictionarySource::Gaussian,
                size: None,
            },
            sweep: Sweep {
                n_rf: vec![3],
                snr_db: snr_grid(),
            },
            ..base(name, Side::Combiner, 200)
        },
        "fig8" => ExperimentConfig {
            schemes: vec![
                HardwareScheme::s1(),
                HardwareScheme::s2(),
                HardwareScheme::s3(),
                HardwareScheme::s4(3),
                HardwareScheme::s5(3),
            ],
            algorithms: vec![AlgorithmSpec::Magiq, AlgorithmSpec::FullDigital],
            sweep: Sweep {
                n_rf: vec![3],
                snr_db: snr_grid(),
            },
            ..base(name, Side::Combiner, 200)
        },
        "kron" => ExperimentConfig {
            dims: ArrayDims { n_t: 1, n_r: 16 },
            channel: ChannelSpec::Kronecker { rank: 16 },
            algorithms: vec![
                AlgorithmSpec::Grtm { cross_check: false },
                AlgorithmSpec::Magiq,
                AlgorithmSpec::FullDigital,
            ],
            dictionary: DictionarySpec {
                source: DictionarySource::Gaussian,
                size: Some(160),
            },
            ..base(name, Side::Kronecker, 100)
        },
        other => return Err(Error::UnknownPreset(other.to_owned())),
    };
    Ok(config)
}
