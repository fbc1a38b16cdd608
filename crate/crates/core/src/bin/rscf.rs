//! Command-line front end: Monte-Carlo sweeps, FLOP tables and self-checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rscf::cost::{cost_report, render_table, CostReport};
use rscf::experiments::{self, SimConfig};
use rscf::precoders::{build_scheme_from, PrivateStart, Scheme};
use rscf::{channel, clustering, selftest, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rscf", version, about = "Robust rate-splitting precoding for cell-free MU-MIMO")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML configuration file (missing keys take defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte-Carlo drops
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Error realizations per drop
    #[arg(long, global = true)]
    n_err: Option<usize>,

    /// Output directory
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Precode on the full estimate instead of the clustered one
    #[arg(long, global = true)]
    no_clustering: bool,

    /// Restrict to these schemes (repeatable)
    #[arg(long = "scheme", global = true)]
    schemes: Vec<String>,

    /// 10000 drops with 100 error draws each
    #[arg(long, global = true)]
    full_scale: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ESR versus SNR
    SweepSnr,
    /// ESR versus number of alternating iterations
    SweepIters,
    /// ESR versus CSI error variance
    SweepCsit,
    /// FLOP counts for a grid of dimensions
    CostTable {
        #[arg(long, value_delimiter = ',', default_value = "12")]
        n_t: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "3")]
        k: Vec<u64>,
        #[arg(long = "iters", value_delimiter = ',', default_value = "3")]
        i_t: Vec<u64>,
        /// Print CSV instead of a table
        #[arg(long)]
        csv: bool,
    },
    /// Run the built-in oracle and property checks
    Selftest,
}

fn load_config(args: &CommonArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(n) = args.n_err {
        cfg.n_err = n;
    }
    if args.no_clustering {
        cfg.clustering = false;
    }
    if !args.schemes.is_empty() {
        cfg.schemes = args.schemes.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_trace(cfg: &SimConfig, out: &Path) -> Result<PathBuf> {
    let drop = experiments::draw_drop(cfg, 0)?;
    let sigma_n2 = cfg.noise_variance();
    let g_eff = if cfg.clustering { clustering::cluster(&drop.zeta, &drop.g_hat).g_bar } else { drop.g_hat.clone() };
    let theta = channel::error_covariance(&drop.zeta, cfg.fixed_sigma_e2);
    let tau = (1.0 + cfg.fixed_sigma_e2).sqrt();
    let p_t = channel::pt_for_snr(cfg.fixed_snr_db, &drop.zeta, cfg.n_t, cfg.k, sigma_n2)?;
    let i_t = cfg.iterations.iter().copied().max().unwrap_or(cfg.i_t);
    let (_, trace) = build_scheme_from(Scheme::RscfMmseRbPcRb, &g_eff, &theta, tau, p_t, 0.0, sigma_n2, i_t, PrivateStart::Mmse)?;
    let path = out.join("iterations_trace.csv");
    trace.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CostTable { n_t, k, i_t, csv } => {
            let mut reports: Vec<CostReport> = Vec::new();
            for &n in &n_t {
                for &u in &k {
                    for &i in &i_t {
                        if n == 0 || u == 0 {
                            return Err(Error::Config("dimensions must be at least 1".into()));
                        }
                        reports.push(cost_report(n, u, i));
                    }
                }
            }
            if csv {
                println!("{}", CostReport::CSV_HEADER);
                for r in &reports {
                    println!("{}", r.csv_row());
                }
            } else {
                print!("{}", render_table(&reports));
            }
            Ok(())
        }
        Command::Selftest => {
            let checks = selftest::run();
            let mut ok = true;
            for c in &checks {
                println!("[{}] {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(Error::Domain("self-test failed".into()))
            }
        }
        sweep => {
            let cfg = load_config(&cli.common)?;
            let workers = experiments::workers_from_env();
            std::fs::create_dir_all(&cli.common.out)?;
            let curve = match sweep {
                Command::SweepSnr => experiments::run_sweep_snr(&cfg, workers)?,
                Command::SweepCsit => experiments::run_sweep_csit(&cfg, workers)?,
                Command::SweepIters => {
                    let trace = write_trace(&cfg, &cli.common.out)?;
                    println!("wrote {}", trace.display());
                    experiments::run_sweep_iterations(&cfg, workers)?
                }
                _ => unreachable!(),
            };
            for p in experiments::write_outputs(&cli.common.out, &curve, &cfg)? {
                println!("wrote {}", p.display());
            }
            for p in &curve.points {
                println!(
                    "{:<24} {:<18} {:>6} {:>8.4} ± {:.4}  alpha/P_t {:.3}",
                    p.sweep, p.scheme, p.value, p.esr.mean, p.esr.half_width, p.alpha_fraction.mean
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
