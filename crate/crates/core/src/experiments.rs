//! Simulation configuration, Monte-Carlo orchestration and result files.
//!
//! One trial is one network drop: AP/user positions, shadowing, a channel
//! estimate and `n_err` error realizations. Every random quantity of trial
//! `t` comes from a substream keyed by `(master_seed, purpose, t, index)` and
//! none of them depend on the sweep point, so all schemes and all points of
//! a sweep see the same drops. Per-trial results are collected in trial order
//! and reduced serially, which makes the output independent of the number of
//! worker threads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelSet, NoiseModel};
use crate::clustering;
use crate::error::{Error, Result};
use crate::precoders::{build_scheme_from, PrivateStart, Scheme, DEFAULT_ITERATIONS};
use crate::rates::{allocate_alpha_c, mean_sum_rate, Estimate};
use crate::rng::{substream, Purpose};

/// Environment variable selecting the worker count.
pub const WORKERS_ENV: &str = "RSCF_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_t: usize,
    pub k: usize,
    pub region_side_m: f64,
    pub freq_mhz: f64,
    pub shadow_std_db: f64,
    pub noise: NoiseModel,
    /// CSI error variances of the CSIT-quality sweep.
    pub sigma_e2: Vec<f64>,
    /// SNR points of the SNR sweep, dB.
    pub snr_db: Vec<f64>,
    /// Error variance held fixed in the SNR and iteration sweeps.
    pub fixed_sigma_e2: f64,
    /// SNR held fixed in the CSIT and iteration sweeps, dB.
    pub fixed_snr_db: f64,
    /// Iteration counts of the convergence sweep.
    pub iterations: Vec<usize>,
    /// Also run the convergence sweep from a random start.
    pub random_init: bool,
    pub trials: usize,
    pub n_err: usize,
    pub i_t: usize,
    pub alpha_grid_step: f64,
    pub clustering: bool,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_t: 12,
            k: 3,
            region_side_m: 100.0,
            freq_mhz: 1900.0,
            shadow_std_db: 8.0,
            noise: NoiseModel::default(),
            sigma_e2: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            snr_db: vec![0.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0],
            fixed_sigma_e2: 0.3,
            fixed_snr_db: 22.0,
            iterations: (0..=10).collect(),
            random_init: true,
            trials: 200,
            n_err: 20,
            i_t: DEFAULT_ITERATIONS,
            alpha_grid_step: 0.005,
            clustering: true,
            schemes: Scheme::ALL.to_vec(),
            master_seed: 1,
        }
    }
}

impl SimConfig {
    /// Full-scale Monte-Carlo: 10000 drops with 100 error draws each.
    pub fn full_scale(mut self) -> Self {
        self.trials = 10_000;
        self.n_err = 100;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.n_t < self.k {
            return bad(format!("n_t = {} must be at least k = {}", self.n_t, self.k));
        }
        if self.trials == 0 || self.n_err == 0 {
            return bad("trials and n_err must be at least 1".into());
        }
        if !(self.region_side_m > 0.0 && self.region_side_m.is_finite()) {
            return bad(format!("region_side_m must be positive, got {}", self.region_side_m));
        }
        if !(self.freq_mhz > 0.0 && self.freq_mhz.is_finite()) {
            return bad(format!("freq_mhz must be positive, got {}", self.freq_mhz));
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            return bad(format!("shadow_std_db must be non-negative, got {}", self.shadow_std_db));
        }
        if !(self.alpha_grid_step > 0.0 && self.alpha_grid_step <= 1.0) {
            return bad(format!("alpha_grid_step must lie in (0, 1], got {}", self.alpha_grid_step));
        }
        for &s in self.sigma_e2.iter().chain(std::iter::once(&self.fixed_sigma_e2)) {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("CSI error variance {s} outside [0, 1]"));
            }
        }
        for &s in self.snr_db.iter().chain(std::iter::once(&self.fixed_snr_db)) {
            if !s.is_finite() {
                return bad(format!("SNR {s} is not finite"));
            }
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        channel::noise_variance(&self.noise)?;
        Ok(())
    }

    /// Parses a TOML config; missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::ConfigFile { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn noise_variance(&self) -> f64 {
        channel::noise_variance(&self.noise).expect("validated noise model")
    }
}

/// Operating point of one curve sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub i_t: usize,
    pub random_start: bool,
}

/// Per-scheme outcome of one trial at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Error-averaged sum rate, bits/s/Hz.
    pub sum_rate: f64,
    /// Selected common power as a fraction of `P_t`.
    pub alpha_fraction: f64,
}

/// Large-scale part of a drop plus the channel estimate.
#[derive(Debug, Clone)]
pub struct Drop {
    pub geometry: channel::NetworkGeometry,
    pub zeta: nalgebra::DMatrix<f64>,
    pub g_hat: crate::linalg::CMat,
}

pub fn draw_drop(cfg: &SimConfig, trial: u64) -> Result<Drop> {
    let seed = cfg.master_seed;
    let geometry = channel::place_network(cfg.n_t, cfg.k, cfg.region_side_m, &mut substream(seed, Purpose::Geometry, trial, 0))?;
    let zeta =
        channel::large_scale(&geometry, cfg.freq_mhz, cfg.shadow_std_db, &mut substream(seed, Purpose::Shadowing, trial, 0));
    let g_hat = channel::sample_estimate(&zeta, &mut substream(seed, Purpose::Estimate, trial, 0));
    Ok(Drop { geometry, zeta, g_hat })
}

/// Runs every scheme of `schemes` at every point of `points` for one drop.
/// The result is indexed `[point][scheme]`.
pub fn evaluate_trial(cfg: &SimConfig, trial: u64, points: &[PointSpec], schemes: &[Scheme]) -> Result<Vec<Vec<TrialOutcome>>> {
    let drop = draw_drop(cfg, trial)?;
    let sigma_n2 = cfg.noise_variance();
    let g_eff = if cfg.clustering { clustering::cluster(&drop.zeta, &drop.g_hat).g_bar } else { drop.g_hat.clone() };
    let p_t_at = |snr: f64| channel::pt_for_snr(snr, &drop.zeta, cfg.n_t, cfg.k, sigma_n2);
    let random_key = substream_seed(cfg.master_seed, Purpose::RandomInit, trial);

    points
        .iter()
        .map(|pt| {
            let p_t = p_t_at(pt.snr_db)?;
            let theta = channel::error_covariance(&drop.zeta, pt.sigma_e2);
            let tau = (1.0 + pt.sigma_e2).sqrt();
            let draw = |purpose| {
                (0..cfg.n_err as u64)
                    .map(|e| {
                        let err =
                            channel::sample_error(&drop.zeta, pt.sigma_e2, &mut substream(cfg.master_seed, purpose, trial, e));
                        ChannelSet::from_parts(drop.zeta.clone(), drop.g_hat.clone(), err, pt.sigma_e2)
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let channels = draw(Purpose::Error)?;
            let search_channels = draw(Purpose::SearchError)?;
            let start = if pt.random_start { PrivateStart::Random(random_key) } else { PrivateStart::Mmse };
            schemes
                .iter()
                .map(|&scheme| {
                    let rate_on = |alpha: f64, channels: &[ChannelSet]| {
                        let (ps, _) = build_scheme_from(scheme, &g_eff, &theta, tau, p_t, alpha, sigma_n2, pt.i_t, start)?;
                        Ok(mean_sum_rate(channels, &ps, sigma_n2))
                    };
                    // The common power is chosen on its own error draws so the
                    // reported rate is not biased by the search.
                    let alpha = if scheme.is_rate_splitting() {
                        allocate_alpha_c(p_t, cfg.alpha_grid_step, |a| rate_on(a, &search_channels))?.0
                    } else {
                        0.0
                    };
                    let sum_rate = rate_on(alpha, &channels)?;
                    Ok(TrialOutcome { sum_rate, alpha_fraction: alpha / p_t })
                })
                .collect()
        })
        .collect()
}

fn substream_seed(master: u64, purpose: Purpose, trial: u64) -> u64 {
    use rand::RngCore;
    substream(master, purpose, trial, 0).next_u64()
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Maps `f` over trial indices on a pool of `workers` threads (rayon's
/// default when `None`), returning results in trial order.
pub fn run_trials<T, F>(trials: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let work = || (0..trials as u64).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub sweep: String,
    pub scheme: Scheme,
    pub value: f64,
    pub esr: Estimate,
    pub alpha_fraction: Estimate,
}

/// ESR samples of one sweep for every scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsrCurve {
    pub sweep_name: String,
    pub n_err: usize,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl EsrCurve {
    pub const CSV_HEADER: &'static str = "sweep,scheme,value,esr_bps_hz,ci,trials,n_err,seed";
    pub const ALPHA_CSV_HEADER: &'static str = "sweep,scheme,value,alpha_fraction,ci,trials";

    pub fn get(&self, sweep: &str, scheme: Scheme, value: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.sweep == sweep && p.scheme == scheme && p.value == value)
    }

    pub fn series(&self, sweep: &str, scheme: Scheme) -> Vec<&CurvePoint> {
        self.points.iter().filter(|p| p.sweep == sweep && p.scheme == scheme).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.sweep, p.scheme, p.value, p.esr.mean, p.esr.half_width, p.esr.count, self.n_err, self.seed
            )?;
        }
        Ok(())
    }

    pub fn write_alpha_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::ALPHA_CSV_HEADER)?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.sweep, p.scheme, p.value, p.alpha_fraction.mean, p.alpha_fraction.half_width, p.alpha_fraction.count
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

/// A labeled operating point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub sweep: String,
    pub value: f64,
    pub spec: PointSpec,
}

/// Monte-Carlo estimate of every scheme at every sweep point.
pub fn run_points(
    cfg: &SimConfig,
    name: &str,
    points: &[SweepPoint],
    schemes: &[Scheme],
    workers: Option<usize>,
) -> Result<EsrCurve> {
    cfg.validate()?;
    let specs: Vec<PointSpec> = points.iter().map(|p| p.spec).collect();
    let per_trial = run_trials(cfg.trials, workers, |t| evaluate_trial(cfg, t, &specs, schemes))?;

    let mut out = Vec::with_capacity(points.len() * schemes.len());
    for (pi, point) in points.iter().enumerate() {
        for (si, &scheme) in schemes.iter().enumerate() {
            let rates: Vec<f64> = per_trial.iter().map(|t| t[pi][si].sum_rate).collect();
            let alphas: Vec<f64> = per_trial.iter().map(|t| t[pi][si].alpha_fraction).collect();
            out.push(CurvePoint {
                sweep: point.sweep.clone(),
                scheme,
                value: point.value,
                esr: Estimate::from_samples(&rates),
                alpha_fraction: Estimate::from_samples(&alphas),
            });
        }
    }
    Ok(EsrCurve { sweep_name: name.to_string(), n_err: cfg.n_err, seed: cfg.master_seed, points: out })
}

/// Ergodic sum rate of one scheme at one operating point.
pub fn ergodic_sum_rate(cfg: &SimConfig, scheme: Scheme, spec: PointSpec, workers: Option<usize>) -> Result<Estimate> {
    let point = SweepPoint { sweep: "point".into(), value: 0.0, spec };
    let curve = run_points(cfg, "point", &[point], &[scheme], workers)?;
    Ok(curve.points[0].esr)
}

/// ESR versus SNR at the fixed error variance.
pub fn run_sweep_snr(cfg: &SimConfig, workers: Option<usize>) -> Result<EsrCurve> {
    let points: Vec<SweepPoint> = cfg
        .snr_db
        .iter()
        .map(|&snr| SweepPoint {
            sweep: "snr".into(),
            value: snr,
            spec: PointSpec { snr_db: snr, sigma_e2: cfg.fixed_sigma_e2, i_t: cfg.i_t, random_start: false },
        })
        .collect();
    run_points(cfg, "snr", &points, &cfg.schemes, workers)
}

/// ESR versus CSI error variance at the fixed SNR.
pub fn run_sweep_csit(cfg: &SimConfig, workers: Option<usize>) -> Result<EsrCurve> {
    let points: Vec<SweepPoint> = cfg
        .sigma_e2
        .iter()
        .map(|&s| SweepPoint {
            sweep: "csit".into(),
            value: s,
            spec: PointSpec { snr_db: cfg.fixed_snr_db, sigma_e2: s, i_t: cfg.i_t, random_start: false },
        })
        .collect();
    run_points(cfg, "csit", &points, &cfg.schemes, workers)
}

pub const ITERATIONS_SWEEP: &str = "iterations";
pub const ITERATIONS_RANDOM_SWEEP: &str = "iterations-random-init";

/// ESR of the fully robust RS scheme versus the number of alternating
/// iterations, from the MMSE start and optionally from a random start.
pub fn run_sweep_iterations(cfg: &SimConfig, workers: Option<usize>) -> Result<EsrCurve> {
    let mut points = Vec::new();
    let starts: &[bool] = if cfg.random_init { &[false, true] } else { &[false] };
    for &random_start in starts {
        let sweep = if random_start { ITERATIONS_RANDOM_SWEEP } else { ITERATIONS_SWEEP };
        for &i_t in &cfg.iterations {
            points.push(SweepPoint {
                sweep: sweep.into(),
                value: i_t as f64,
                spec: PointSpec { snr_db: cfg.fixed_snr_db, sigma_e2: cfg.fixed_sigma_e2, i_t, random_start },
            });
        }
    }
    run_points(cfg, "iterations", &points, &[Scheme::RscfMmseRbPcRb], workers)
}

/// Provenance record written next to every result set.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub sweep: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub files: Vec<String>,
    pub config: &'a SimConfig,
}

/// Writes `<name>.csv`, `<name>_alpha.csv` and `<name>_manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, curve: &EsrCurve, cfg: &SimConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = &curve.sweep_name;
    let csv = dir.join(format!("{name}.csv"));
    let alpha = dir.join(format!("{name}_alpha.csv"));
    let manifest = dir.join(format!("{name}_manifest.json"));

    curve.write_csv(std::io::BufWriter::new(fs::File::create(&csv)?))?;
    curve.write_alpha_csv(std::io::BufWriter::new(fs::File::create(&alpha)?))?;
    let record = RunManifest {
        sweep: name,
        version: concat!("rscf ", env!("CARGO_PKG_VERSION")),
        seed: cfg.master_seed,
        files: [&csv, &alpha].iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect(),
        config: cfg,
    };
    fs::write(&manifest, serde_json::to_string_pretty(&record).expect("manifest serializes") + "\n")?;
    Ok(vec![csv, alpha, manifest])
}
