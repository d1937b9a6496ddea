//! Monte-Carlo NMSE sweeps.
//!
//! A sweep is the cartesian product antennas × groups × training × SNR ×
//! algorithm. Every random draw comes from a stream keyed by the master seed
//! and the grid coordinates, so output is identical for any thread count.
//! Channels depend only on (antennas, groups, trial) and noise only on
//! (antennas, groups, training, SNR, trial); algorithms at the same grid
//! point therefore see the same realizations.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{combined_channel, draw_channels, synthesize_pilots, ChannelPair, ReceivedPilots};
use crate::design::{
    default_split, validate_design, validate_identifiability, Algorithm, DesignConfig, ThetaKind, TrainingDesign,
    ValidationReport,
};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::estimators::{estimate, resolve_scaling, BtalsOptions, UpdateForm};
use crate::random::derive_seed;
use crate::tensor::ComplexMatrix;

/// Environment variable read for the worker count when the config sets none.
pub const THREADS_ENV: &str = "BDRIS_THREADS";

const CHANNEL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const DESIGN_STREAM: u64 = 4;

/// `‖C − Ĉ‖²_F / ‖C‖²_F`.
pub fn nmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return dim_err(format!("shapes {:?} and {:?} differ", estimate.shape(), truth.shape()));
    }
    let reference = truth.norm_squared();
    if reference == 0.0 {
        return arg_err("reference matrix is zero");
    }
    Ok((truth - estimate).norm_squared() / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub m_t: usize,
    pub m_r: usize,
    pub nbar: usize,
    pub q: usize,
}

impl Geometry {
    pub fn n(&self) -> usize {
        self.nbar * self.q
    }
}

/// Dominant-term operation count of one estimator run (`T = M_T` pilots).
pub fn flop_estimate(algorithm: Algorithm, geometry: Geometry, k: usize, iterations: usize) -> u64 {
    let Geometry { m_t, m_r, nbar, q } = geometry;
    let [m_t, m_r, nbar, q, k, iterations] = [m_t, m_r, nbar, q, k, iterations].map(|x| x as u64);
    let filtering = m_r * m_t * k * nbar * nbar * q;
    match algorithm {
        Algorithm::Ls => filtering,
        Algorithm::Btkf => filtering + q * nbar * nbar * m_r * m_t,
        Algorithm::Btals => iterations * nbar * nbar * q * k * (m_r + m_t),
    }
}

/// Training length entry of a sweep config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainingSpec {
    /// `K` blocks, split by [`default_split`].
    Blocks(usize),
    /// An explicit split.
    Split { k1: usize, k2: usize },
    /// `"min"`: the shortest identifiable training for each algorithm.
    Named(String),
}

impl TrainingSpec {
    pub fn min() -> Self {
        TrainingSpec::Named("min".into())
    }

    /// `(K₁, K₂)` for `algorithm` at `geometry`.
    ///
    /// `"min"` is `N̄²Q` for LS and BTKF and `max(3, ⌈N / min(M_T, M_R)⌉)` for
    /// BTALS.
    pub fn resolve(&self, algorithm: Algorithm, geometry: Geometry) -> Result<(usize, usize)> {
        let Geometry { m_t, m_r, nbar, q } = geometry;
        let k = match self {
            TrainingSpec::Blocks(k) => *k,
            TrainingSpec::Split { k1, k2 } => return Ok((*k1, *k2)),
            TrainingSpec::Named(name) if name == "min" => match algorithm {
                Algorithm::Ls | Algorithm::Btkf => nbar * nbar * q,
                Algorithm::Btals => (geometry.n().div_ceil(m_t.min(m_r))).max(3),
            },
            TrainingSpec::Named(other) => {
                return Err(Error::Config(format!("unknown training entry '{other}' (expected an integer, \"min\" or {{k1, k2}})")))
            }
        };
        if k == 0 {
            return Err(Error::Config("training length must be positive".into()));
        }
        Ok(default_split(nbar, q, k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtalsSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_eta() -> f64 {
    BtalsOptions::default().eta
}

fn default_max_iters() -> usize {
    BtalsOptions::default().max_iters
}

fn default_trials() -> usize {
    200
}

impl Default for BtalsSection {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            max_iters: default_max_iters(),
        }
    }
}

/// A sweep description, read from TOML.
///
/// ```toml
/// master_seed = 7
/// trials = 200
/// snr_db = [0, 10, 20, inf]
/// algorithms = ["ls", "btkf"]
/// antennas = [[2, 2]]          # [m_t, m_r]
/// groups = [[1, 16], [4, 4]]   # [nbar, q]
/// training = ["min", 64, { k1 = 4, k2 = 8 }]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub snr_db: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub antennas: Vec<[usize; 2]>,
    pub groups: Vec<[usize; 2]>,
    pub training: Vec<TrainingSpec>,
    #[serde(default)]
    pub theta: ThetaKind,
    /// Overrides the per-algorithm rotation default when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotated: Option<bool>,
    #[serde(default)]
    pub btals: BtalsSection,
    /// CSV destination; `"-"` is standard output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Adds a wall-clock column, which makes output nondeterministic.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    /// Structural checks that do not depend on identifiability.
    pub fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be positive".into());
        }
        for (name, empty) in [
            ("snr_db", self.snr_db.is_empty()),
            ("algorithms", self.algorithms.is_empty()),
            ("antennas", self.antennas.is_empty()),
            ("groups", self.groups.is_empty()),
            ("training", self.training.is_empty()),
        ] {
            if empty {
                return fail(format!("{name} must not be empty"));
            }
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return fail(format!("invalid SNR {s}"));
        }
        if self.antennas.iter().flatten().any(|&m| m == 0) {
            return fail("antenna counts must be positive".into());
        }
        if self.groups.iter().flatten().any(|&m| m == 0) {
            return fail("group size and count must be positive".into());
        }
        for t in &self.training {
            if let TrainingSpec::Named(name) = t {
                if name != "min" {
                    return fail(format!("unknown training entry '{name}'"));
                }
            }
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        self.btals_options(0).validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn btals_options(&self, init_seed: u64) -> BtalsOptions {
        BtalsOptions {
            eta: self.btals.eta,
            max_iters: self.btals.max_iters,
            init_seed,
            form: UpdateForm::Full,
        }
    }

    /// Design for one grid point. The rotation seed is shared by every
    /// algorithm at the point.
    pub fn design_config(
        &self,
        algorithm: Algorithm,
        geometry: Geometry,
        training: &TrainingSpec,
        coords: [u64; 3],
    ) -> Result<DesignConfig> {
        let (k1, k2) = training.resolve(algorithm, geometry)?;
        Ok(DesignConfig::new(geometry.nbar, geometry.q, k1, k2)?
            .theta(self.theta)
            .rotated(self.rotated.unwrap_or(algorithm.default_rotated()))
            .seed(derive_seed(self.master_seed, &[DESIGN_STREAM, coords[0], coords[1], coords[2]])))
    }

    fn thread_count(&self) -> Option<usize> {
        self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .filter(|&n| n > 0)
        })
    }
}

/// One CSV line: a grid point and algorithm with trial-averaged metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub geometry: Geometry,
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
    pub algorithm: Algorithm,
    /// Trials that produced an estimate.
    pub trials: usize,
    pub nmse: Option<f64>,
    pub h_nmse: Option<f64>,
    pub g_nmse: Option<f64>,
    pub mean_iters: Option<f64>,
    pub max_iters: Option<usize>,
    pub flops: Option<f64>,
    /// `ok`, `skipped: …` or `failed: …`.
    pub status: String,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    pub fn nmse_db(&self) -> Option<f64> {
        self.nmse.map(|x| 10.0 * x.log10())
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const CSV_HEADER: [&str; 18] = [
    "snr_db", "m_t", "m_r", "nbar", "q", "k", "k1", "k2", "algorithm", "trials", "nmse", "nmse_db", "h_nmse", "g_nmse",
    "mean_iters", "max_iters", "flops", "status",
];

fn sci(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6e}")).unwrap_or_default()
}

/// Writes rows as CSV. The `wall_ms` column is appended only when `timing`.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if timing {
        header.push("wall_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let g = r.geometry;
        let mut rec = vec![
            r.snr_db.to_string(),
            g.m_t.to_string(),
            g.m_r.to_string(),
            g.nbar.to_string(),
            g.q.to_string(),
            r.k.to_string(),
            r.k1.to_string(),
            r.k2.to_string(),
            r.algorithm.to_string(),
            r.trials.to_string(),
            sci(r.nmse),
            r.nmse_db().map(|x| format!("{x:.4}")).unwrap_or_default(),
            sci(r.h_nmse),
            sci(r.g_nmse),
            r.mean_iters.map(|x| format!("{x:.2}")).unwrap_or_default(),
            r.max_iters.map(|x| x.to_string()).unwrap_or_default(),
            sci(r.flops),
            r.status.clone(),
        ];
        if timing {
            rec.push(r.wall_ms.map(|x| format!("{x:.3}")).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
struct TrialOutcome {
    nmse: f64,
    h_nmse: Option<f64>,
    g_nmse: Option<f64>,
    iterations: Option<usize>,
    flops: u64,
    elapsed_ms: f64,
}

struct AlgorithmSlot {
    algorithm: Algorithm,
    /// Index into the deduplicated designs, or the skip reason.
    design: std::result::Result<usize, String>,
    config: Option<DesignConfig>,
}

fn run_trial(
    cfg: &SweepConfig,
    geometry: Geometry,
    designs: &[TrainingDesign],
    slots: &[AlgorithmSlot],
    snr_db: f64,
    coords: [u64; 4],
    trial: u64,
) -> Vec<Option<std::result::Result<TrialOutcome, String>>> {
    let [ai, gi, ti, si] = coords;
    let ch_seed = derive_seed(cfg.master_seed, &[CHANNEL_STREAM, ai, gi, trial]);
    let noise_seed = derive_seed(cfg.master_seed, &[NOISE_STREAM, ai, gi, ti, si, trial]);
    let init_seed = derive_seed(cfg.master_seed, &[INIT_STREAM, ai, gi, ti, si, trial]);
    let channels = draw_channels(geometry.m_t, geometry.m_r, geometry.nbar, geometry.q, ch_seed);
    let channels = match channels {
        Ok(c) => c,
        Err(e) => return slots.iter().map(|_| Some(Err(e.to_string()))).collect(),
    };
    let truth = combined_channel(&channels);
    let pilots: Vec<Result<ReceivedPilots>> = designs
        .iter()
        .map(|d| synthesize_pilots(d, &channels, snr_db, noise_seed))
        .collect();
    let opts = cfg.btals_options(init_seed);

    slots
        .iter()
        .map(|slot| {
            let idx = *slot.design.as_ref().ok()?;
            let outcome = (|| -> Result<TrialOutcome> {
                let y = pilots[idx].as_ref().map_err(|e| Error::Config(e.to_string()))?;
                let start = Instant::now();
                let est = estimate(slot.algorithm, y, &designs[idx], &opts)?;
                let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                let (h_nmse, g_nmse) = per_channel_nmse(&est, &channels)?;
                Ok(TrialOutcome {
                    nmse: nmse(&est.t_hat, &truth)?,
                    h_nmse,
                    g_nmse,
                    iterations: est.iterations,
                    flops: flop_estimate(slot.algorithm, geometry, designs[idx].k(), est.iterations.unwrap_or(1)),
                    elapsed_ms,
                })
            })();
            Some(outcome.map_err(|e| e.to_string()))
        })
        .collect()
}

fn per_channel_nmse(
    est: &crate::estimators::EstimationResult,
    truth: &ChannelPair,
) -> Result<(Option<f64>, Option<f64>)> {
    if est.h_hat.is_none() {
        return Ok((None, None));
    }
    let resolved = resolve_scaling(est, truth)?;
    Ok((
        Some(nmse(resolved.h_hat.as_ref().expect("resolved"), &truth.h)?),
        Some(nmse(resolved.g_hat.as_ref().expect("resolved"), &truth.g)?),
    ))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(
    slot: &AlgorithmSlot,
    snr_db: f64,
    geometry: Geometry,
    outcomes: &[Option<std::result::Result<TrialOutcome, String>>],
    timing: bool,
) -> ResultRow {
    let config = slot.config.as_ref();
    let (k1, k2) = config.map_or((0, 0), |c| (c.k1, c.k2));
    let mut row = ResultRow {
        snr_db,
        geometry,
        k: k1 * k2,
        k1,
        k2,
        algorithm: slot.algorithm,
        trials: 0,
        nmse: None,
        h_nmse: None,
        g_nmse: None,
        mean_iters: None,
        max_iters: None,
        flops: None,
        status: "ok".into(),
        wall_ms: None,
    };
    if let Err(reason) = &slot.design {
        row.status = format!("skipped: {reason}");
        return row;
    }
    let ok: Vec<&TrialOutcome> = outcomes.iter().flatten().filter_map(|o| o.as_ref().ok()).collect();
    let failures: Vec<&String> = outcomes.iter().flatten().filter_map(|o| o.as_ref().err()).collect();
    row.trials = ok.len();
    row.nmse = mean(ok.iter().map(|o| o.nmse));
    row.h_nmse = mean(ok.iter().filter_map(|o| o.h_nmse));
    row.g_nmse = mean(ok.iter().filter_map(|o| o.g_nmse));
    row.mean_iters = mean(ok.iter().filter_map(|o| o.iterations.map(|i| i as f64)));
    row.max_iters = ok.iter().filter_map(|o| o.iterations).max();
    row.flops = mean(ok.iter().map(|o| o.flops as f64));
    if timing {
        row.wall_ms = mean(ok.iter().map(|o| o.elapsed_ms));
    }
    if let Some(first) = failures.first() {
        row.status = format!("failed: {}/{} trials: {first}", failures.len(), outcomes.len());
    }
    row
}

/// Runs every grid point of `cfg`. Points that fail validation produce a
/// `skipped` row; per-trial estimator errors are counted in `status`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    cfg.check()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| sweep_points(cfg))
}

fn sweep_points(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    use rayon::prelude::*;

    let mut rows = Vec::new();
    for (ai, &[m_t, m_r]) in cfg.antennas.iter().enumerate() {
        for (gi, &[nbar, q]) in cfg.groups.iter().enumerate() {
            let geometry = Geometry { m_t, m_r, nbar, q };
            for (ti, training) in cfg.training.iter().enumerate() {
                let coords = [ai as u64, gi as u64, ti as u64];
                let mut designs: Vec<TrainingDesign> = Vec::new();
                let mut slots = Vec::new();
                for &algorithm in &cfg.algorithms {
                    let dc = cfg.design_config(algorithm, geometry, training, coords);
                    let (design, config) = match dc {
                        Err(e) => (Err(e.to_string()), None),
                        Ok(dc) => {
                            let existing = designs.iter().position(|d| d.config() == &dc);
                            let idx = match existing {
                                Some(i) => Ok(i),
                                None => TrainingDesign::build(dc.clone())
                                    .map(|d| {
                                        designs.push(d);
                                        designs.len() - 1
                                    })
                                    .map_err(|e| e.to_string()),
                            };
                            let idx = idx.and_then(|i| {
                                let report = validate_design(&designs[i], m_t, m_r, algorithm);
                                if report.passed() {
                                    Ok(i)
                                } else {
                                    let rules: Vec<&str> = report.violations().map(|c| c.rule.as_str()).collect();
                                    Err(rules.join("; "))
                                }
                            });
                            (idx, Some(dc))
                        }
                    };
                    slots.push(AlgorithmSlot {
                        algorithm,
                        design,
                        config,
                    });
                }

                for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
                    let point = [ai as u64, gi as u64, ti as u64, si as u64];
                    let per_trial: Vec<Vec<Option<std::result::Result<TrialOutcome, String>>>> = (0..cfg.trials as u64)
                        .into_par_iter()
                        .map(|t| run_trial(cfg, geometry, &designs, &slots, snr_db, point, t))
                        .collect();
                    for (a, slot) in slots.iter().enumerate() {
                        let outcomes: Vec<_> = per_trial.iter().map(|v| v[a].clone()).collect();
                        rows.push(summarize(slot, snr_db, geometry, &outcomes, cfg.timing));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Identifiability report for every (antennas, groups, training, algorithm)
/// combination of `cfg`, in sweep order.
pub fn validation_reports(cfg: &SweepConfig) -> Result<Vec<ValidationReport>> {
    cfg.check()?;
    let mut reports = Vec::new();
    for (ai, &[m_t, m_r]) in cfg.antennas.iter().enumerate() {
        for (gi, &[nbar, q]) in cfg.groups.iter().enumerate() {
            let geometry = Geometry { m_t, m_r, nbar, q };
            for (ti, training) in cfg.training.iter().enumerate() {
                for &algorithm in &cfg.algorithms {
                    let dc = cfg.design_config(algorithm, geometry, training, [ai as u64, gi as u64, ti as u64])?;
                    reports.push(validate_identifiability(&dc, m_t, m_r, algorithm));
                }
            }
        }
    }
    Ok(reports)
}

/// Names accepted by [`figure_preset`].
pub const FIGURES: [&str; 8] = ["fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"];

fn preset(
    trials: usize,
    snr_db: Vec<f64>,
    algorithms: &[Algorithm],
    antennas: &[[usize; 2]],
    groups: &[[usize; 2]],
    training: Vec<TrainingSpec>,
) -> SweepConfig {
    SweepConfig {
        master_seed: 2024,
        trials,
        snr_db,
        algorithms: algorithms.to_vec(),
        antennas: antennas.to_vec(),
        groups: groups.to_vec(),
        training,
        theta: ThetaKind::Dft,
        rotated: None,
        btals: BtalsSection::default(),
        output: None,
        threads: None,
        timing: false,
    }
}

/// Desk-scale sweep configs for the standard comparison figures.
///
/// Geometry follows the 64-element surface throughout; only trial counts
/// are reduced (and the complexity figure stops at group size 16).
pub fn figure_preset(name: &str) -> Result<SweepConfig> {
    use Algorithm::{Btals, Btkf, Ls};
    let snr_sweep: Vec<f64> = (0..=6).map(|i| f64::from(i * 5)).collect();
    let n64_lsk = [[1, 64], [2, 32], [4, 16]];
    let n64_all = [[1, 64], [2, 32], [4, 16], [8, 8], [16, 4], [32, 2], [64, 1]];
    let btals_groups = [[1, 64], [4, 16], [8, 8], [16, 4], [32, 2], [64, 1]];
    let k_grid: Vec<TrainingSpec> = [24, 32, 48, 64, 96, 128].into_iter().map(TrainingSpec::Blocks).collect();
    let cfg = match name {
        "fig4" => preset(50, snr_sweep, &[Ls, Btkf], &[[2, 2]], &n64_lsk, vec![TrainingSpec::Blocks(256)]),
        "fig5" => preset(50, snr_sweep, &[Ls, Btkf], &[[2, 2]], &n64_lsk, vec![TrainingSpec::min()]),
        "fig6" => preset(
            50,
            snr_sweep,
            &[Ls, Btkf],
            &[[1, 1], [2, 2], [4, 4], [8, 8]],
            &[[4, 16]],
            vec![TrainingSpec::min()],
        ),
        "fig7" | "fig10" => preset(20, vec![20.0], &[Btals], &[[8, 8]], &btals_groups, k_grid),
        "fig8" => preset(
            20,
            vec![20.0],
            &[Btals],
            &[[2, 2], [4, 4], [8, 8]],
            &n64_all,
            vec![TrainingSpec::Blocks(64)],
        ),
        "fig9" => preset(
            20,
            snr_sweep,
            &[Btals],
            &[[8, 8]],
            &[[1, 64], [4, 16], [16, 4], [64, 1]],
            vec![TrainingSpec::Blocks(32)],
        ),
        "fig11" => {
            let mut cfg = preset(
                5,
                vec![20.0],
                &[Ls, Btkf],
                &[[2, 2]],
                &[[1, 64], [2, 32], [4, 16], [8, 8], [16, 4]],
                vec![TrainingSpec::min()],
            );
            cfg.algorithms.push(Btals);
            cfg.training.push(TrainingSpec::Blocks(32));
            cfg
        }
        other => {
            return Err(Error::Config(format!(
                "unknown figure '{other}' (expected one of {})",
                FIGURES.join(", ")
            )))
        }
    };
    Ok(cfg)
}
