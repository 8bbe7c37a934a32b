//! Batch command-line surface: simulate, fit, gibbs, compare, replicate,
//! bench.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 the fit hit its iteration cap,
//! 4 the two estimators disagree beyond the comparison threshold.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::{build_gmatrices, Flavor, ProfileSpace, QMatrix};
use crate::effects::theta_to_delta;
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit, ChainConfig};
use crate::io;
use crate::metrics::{
    bias_rmse_pi, bias_rmse_theta, classification_rates, monotonicity_check, RecoveryReport,
};
use crate::priors::{default_priors, PriorScheme};
use crate::responses::Responses;
use crate::seeds::sub_seed;
use crate::sim::{
    builtin_qmatrix, gen_item_params, gen_profiles, gen_responses, simulate,
    true_mixing_proportions, BuiltinDesign, SimConfig,
};
use crate::vb::{fit, FitReport, Init, VbConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_ORACLE_DISAGREEMENT: i32 = 4;

#[derive(Parser)]
#[command(
    name = "polydcm",
    version,
    about = "Saturated diagnostic classification models with polytomous attributes: \
             parallel variational Bayes, a Gibbs-sampler oracle, simulation, and recovery metrics",
    after_help = "Profile indices in all outputs follow one canonical order: \
                  lexicographic with the last attribute varying fastest."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth
    Simulate(SimulateArgs),
    /// Variational fit of a response matrix
    Fit(FitArgs),
    /// Gibbs-sampler fit of a response matrix
    Gibbs(GibbsArgs),
    /// Fit both estimators and report their agreement
    Compare(CompareArgs),
    /// Run a multi-replication recovery study
    Replicate(ReplicateArgs),
    /// Time the fit across worker counts
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Collapsed,
    Reduced,
}

impl From<FlavorArg> for Flavor {
    fn from(f: FlavorArg) -> Flavor {
        match f {
            FlavorArg::Collapsed => Flavor::Collapsed,
            FlavorArg::Reduced => Flavor::Reduced,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    /// Weakly informative monotonicity-leaning Beta priors
    Weak,
    /// Flat priors everywhere
    Flat,
}

impl From<PriorArg> for PriorScheme {
    fn from(p: PriorArg) -> PriorScheme {
        match p {
            PriorArg::Weak => PriorScheme::WeaklyInformative,
            PriorArg::Flat => PriorScheme::Noninformative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    K4j60,
    K4j120,
    K7j60,
    K7j120,
    K3j34,
}

impl From<DesignArg> for BuiltinDesign {
    fn from(d: DesignArg) -> BuiltinDesign {
        match d {
            DesignArg::K4j60 => BuiltinDesign::K4J60,
            DesignArg::K4j120 => BuiltinDesign::K4J120,
            DesignArg::K7j60 => BuiltinDesign::K7J60,
            DesignArg::K7j120 => BuiltinDesign::K7J120,
            DesignArg::K3j34 => BuiltinDesign::K3J34,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Q-matrix source: a built-in design or a CSV with its levels sidecar.
#[derive(Args)]
struct QMatrixSource {
    /// Built-in study design
    #[arg(long, value_enum)]
    design: Option<DesignArg>,
    /// Q-matrix CSV (header k1..kK)
    #[arg(long, requires = "levels")]
    qmatrix: Option<PathBuf>,
    /// Levels JSON sidecar ({"levels": [...]})
    #[arg(long)]
    levels: Option<PathBuf>,
}

impl QMatrixSource {
    fn load(&self) -> Result<QMatrix> {
        match (&self.design, &self.qmatrix) {
            (Some(d), None) => Ok(builtin_qmatrix((*d).into())),
            (None, Some(path)) => {
                let levels = self
                    .levels
                    .as_ref()
                    .ok_or_else(|| Error::invalid("--qmatrix needs --levels"))?;
                io::read_qmatrix(path, levels)
            }
            (Some(_), Some(_)) => Err(Error::invalid("pass either --design or --qmatrix, not both")),
            (None, None) => Err(Error::invalid("pass --design or --qmatrix with --levels")),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    q: QMatrixSource,
    /// Number of examinees
    #[arg(long)]
    n: usize,
    /// Correlation among the latent attribute variables
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, value_enum, default_value = "collapsed")]
    flavor: FlavorArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte Carlo draws behind the ground-truth mixing proportions
    #[arg(long, default_value_t = 10_000_000)]
    truth_mc_draws: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VbFlags {
    /// Estimation config JSON; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    flavor: Option<FlavorArg>,
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    /// Stop when the bound changes less than this
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Worker count for the VE and VM steps
    #[arg(long)]
    cores: Option<usize>,
    /// Randomize the responsibility initialization with this seed
    #[arg(long)]
    init_seed: Option<u64>,
}

struct ResolvedVb {
    flavor: Flavor,
    scheme: PriorScheme,
    config: VbConfig,
}

impl VbFlags {
    fn resolve(&self) -> Result<ResolvedVb> {
        let file = match &self.config {
            Some(path) => io::read_config_json(path)?,
            None => io::FileConfig::default(),
        };
        let mut config = VbConfig {
            tol: self.tol.or(file.tol).unwrap_or(1e-4),
            max_iter: self.max_iter.or(file.max_iter).unwrap_or(2000),
            cores: self.cores.or(file.cores).unwrap_or(8),
            init: file.init.unwrap_or_default(),
        };
        if let Some(seed) = self.init_seed {
            config.init = Init::Dirichlet { seed };
        }
        let flavor = self
            .flavor
            .map(Flavor::from)
            .or(file.flavor)
            .unwrap_or(Flavor::Collapsed);
        let scheme = self
            .prior
            .map(PriorScheme::from)
            .or(file.prior_scheme)
            .unwrap_or(PriorScheme::WeaklyInformative);
        Ok(ResolvedVb {
            flavor,
            scheme,
            config,
        })
    }
}

#[derive(Args)]
struct FitArgs {
    /// Response CSV (header x1..xJ, optional id column)
    #[arg(long)]
    responses: PathBuf,
    #[command(flatten)]
    q: QMatrixSource,
    #[command(flatten)]
    vb: VbFlags,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Also export each item's membership matrix as CSV
    #[arg(long)]
    export_gmatrices: bool,
}

#[derive(Args)]
struct GibbsFlags {
    #[arg(long, default_value_t = 3)]
    chains: usize,
    /// Total sweeps per chain, burn-in included
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

#[derive(Args)]
struct GibbsArgs {
    #[arg(long)]
    responses: PathBuf,
    #[command(flatten)]
    q: QMatrixSource,
    #[arg(long, value_enum, default_value = "collapsed")]
    flavor: FlavorArg,
    #[arg(long, value_enum, default_value = "weak")]
    prior: PriorArg,
    #[command(flatten)]
    chains: GibbsFlags,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dump kept draws as CSV, one file per parameter block
    #[arg(long)]
    dump_draws: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    responses: PathBuf,
    #[command(flatten)]
    q: QMatrixSource,
    #[command(flatten)]
    vb: VbFlags,
    #[command(flatten)]
    chains: GibbsFlags,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest tolerated absolute difference in probability estimates
    #[arg(long, default_value_t = 0.03)]
    max_eap_diff: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    q: QMatrixSource,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, value_enum, default_value = "collapsed")]
    flavor: FlavorArg,
    #[arg(long, value_enum, default_value = "weak")]
    prior: PriorArg,
    /// Run both prior schemes on the same data and emit a comparison
    #[arg(long)]
    prior_sweep: bool,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Give each fit this many workers and run replications serially
    /// (default: replications in parallel, one worker per fit)
    #[arg(long)]
    fit_cores: Option<usize>,
    #[arg(long, default_value_t = 10_000_000)]
    truth_mc_draws: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    q: QMatrixSource,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, value_enum, default_value = "collapsed")]
    flavor: FlavorArg,
    /// Worker counts to time, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    cores: Vec<usize>,
    /// Fixed iteration count per timing run
    #[arg(long, default_value_t = 25)]
    iters: usize,
    /// Single-iteration smoke mode
    #[arg(long)]
    dry_run: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses arguments and runs the selected command, returning the exit
/// code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID_INPUT
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Gibbs(args) => cmd_gibbs(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Replicate(args) => cmd_replicate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let started = Instant::now();
    if args.n == 0 {
        return Err(Error::invalid("--n must be positive"));
    }
    let q = args.q.load()?;
    let cfg = SimConfig {
        truth_mc_draws: args.truth_mc_draws,
        ..SimConfig::new(args.n, q.levels().to_vec(), args.rho, args.flavor.into(), args.seed)
    };
    let (truth, x) = simulate(&q, &cfg)?;
    ensure_dir(&args.out_dir)?;
    io::write_qmatrix_csv(&args.out_dir.join("qmatrix.csv"), &q)?;
    io::write_levels_json(&args.out_dir.join("levels.json"), q.levels())?;
    io::write_responses_csv(&args.out_dir.join("responses.csv"), &x)?;
    io::write_truth_json(&args.out_dir.join("truth.json"), &truth, cfg.truth_mc_draws)?;

    let mut manifest = io::RunManifest::new(
        "simulate",
        serde_json::json!({
            "n": args.n,
            "rho": args.rho,
            "flavor": truth.flavor,
            "levels": q.levels(),
            "truth_mc_draws": cfg.truth_mc_draws,
        }),
        Some(args.seed),
    );
    manifest.outputs = ["qmatrix.csv", "levels.json", "responses.csv", "truth.json"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;
    println!(
        "simulated {} examinees x {} items into {}",
        args.n,
        q.n_items(),
        args.out_dir.display()
    );
    Ok(EXIT_OK)
}

fn run_fit_to_files(
    x: &Responses,
    q: &QMatrix,
    resolved: &ResolvedVb,
    out_dir: &Path,
    format: FormatArg,
    export_gmatrices: bool,
) -> Result<FitReport> {
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(q, &space, resolved.flavor);
    let priors = default_priors(&space, &gms, resolved.scheme);
    let report = fit(x, q, resolved.flavor, &priors, &resolved.config)?;
    ensure_dir(out_dir)?;
    let summary = io::SummaryFile::from_fit(&report, &gms, resolved.flavor, q.levels());
    io::write_summary_json(&out_dir.join("fit.json"), &summary)?;
    if matches!(format, FormatArg::Csv) {
        io::write_theta_table_csv(&out_dir.join("theta_table.csv"), &summary.items)?;
    }
    if export_gmatrices {
        let gdir = out_dir.join("gmatrices");
        ensure_dir(&gdir)?;
        for g in &gms {
            io::write_gmatrix_csv(&gdir.join(format!("item{:03}.csv", g.item + 1)), g)?;
        }
    }
    Ok(report)
}

fn cmd_fit(args: FitArgs) -> Result<i32> {
    let started = Instant::now();
    let q = args.q.load()?;
    let x = io::read_responses_csv(&args.responses)?;
    let resolved = args.vb.resolve()?;
    let report = run_fit_to_files(
        &x,
        &q,
        &resolved,
        &args.out_dir,
        args.format,
        args.export_gmatrices,
    )?;

    let mut manifest = io::RunManifest::new(
        "fit",
        serde_json::json!({
            "flavor": resolved.flavor,
            "prior_scheme": resolved.scheme,
            "tol": resolved.config.tol,
            "max_iter": resolved.config.max_iter,
            "cores": resolved.config.cores,
            "init": resolved.config.init,
        }),
        None,
    );
    manifest.inputs = vec![args.responses.display().to_string()];
    manifest.outputs = vec!["fit.json".into()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;

    println!(
        "fit: converged={} iterations={} wall={:.2}s bound={:.4}",
        report.converged,
        report.iterations,
        report.wall_time,
        report.state.vlb_trace.last().copied().unwrap_or(f64::NAN),
    );
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: iteration cap reached before the bound settled");
        Ok(EXIT_NON_CONVERGENCE)
    }
}

fn cmd_gibbs(args: GibbsArgs) -> Result<i32> {
    let started = Instant::now();
    let q = args.q.load()?;
    let x = io::read_responses_csv(&args.responses)?;
    let flavor: Flavor = args.flavor.into();
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(&q, &space, flavor);
    let priors = default_priors(&space, &gms, args.prior.into());
    let cfg = ChainConfig {
        n_chains: args.chains.chains,
        n_iter: args.chains.iters,
        burn_in: args.chains.burn_in,
        thin: args.chains.thin,
        seed: args.seed,
    };
    let run = gibbs_fit(&x, &q, flavor, &priors, &cfg)?;

    let max_rhat = run
        .summary
        .theta_rhat
        .iter()
        .flatten()
        .chain(run.summary.pi_rhat.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    ensure_dir(&args.out_dir)?;
    let summary =
        io::SummaryFile::from_gibbs(&run, &gms, flavor, q.levels(), max_rhat < 1.05, cfg.n_iter);
    io::write_summary_json(&args.out_dir.join("gibbs.json"), &summary)?;
    if args.dump_draws {
        io::write_draws_csv(&args.out_dir.join("draws"), &run)?;
    }

    let mut manifest = io::RunManifest::new(
        "gibbs",
        serde_json::json!({
            "flavor": flavor,
            "chains": cfg.n_chains,
            "iters": cfg.n_iter,
            "burn_in": cfg.burn_in,
            "thin": cfg.thin,
        }),
        Some(args.seed),
    );
    manifest.inputs = vec![args.responses.display().to_string()];
    manifest.outputs = vec!["gibbs.json".into()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;

    println!(
        "gibbs: chains={} kept={} max_rhat={:.4} wall={:.2}s",
        cfg.n_chains,
        run.kept_per_chain,
        max_rhat,
        run.summary.wall_time
    );
    if max_rhat >= 1.05 {
        eprintln!("warning: some parameters have rhat >= 1.05");
    }
    Ok(EXIT_OK)
}

/// Side-by-side agreement report between the two estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub max_abs_theta_eap_diff: f64,
    pub argmax_theta: (usize, usize),
    pub max_abs_theta_sd_diff: f64,
    pub max_abs_pi_eap_diff: f64,
    pub max_abs_pi_sd_diff: f64,
    /// Per-attribute agreement of the assigned profiles.
    pub element_agreement: Vec<f64>,
    pub pattern_agreement: f64,
    pub max_rhat: f64,
    pub rhat_warning: bool,
    pub vb_wall_time_s: f64,
    pub gibbs_wall_time_s: f64,
    /// Sampler wall time over fit wall time.
    pub speedup: f64,
    pub theta_eap_diff: Vec<Vec<f64>>,
    pub theta_sd_diff: Vec<Vec<f64>>,
    pub pi_eap_diff: Vec<f64>,
}

pub fn compare_reports(
    vb: &FitReport,
    gibbs_summary: &crate::gibbs::McmcSummary,
    space: &ProfileSpace,
) -> CompareReport {
    let mut max_theta = 0.0f64;
    let mut argmax = (0usize, 0usize);
    let mut max_theta_sd = 0.0f64;
    let theta_eap_diff: Vec<Vec<f64>> = vb
        .eap_theta
        .iter()
        .zip(&gibbs_summary.theta_eap)
        .enumerate()
        .map(|(j, (v, g))| {
            v.iter()
                .zip(g)
                .enumerate()
                .map(|(p, (&a, &b))| {
                    let d = a - b;
                    if d.abs() > max_theta {
                        max_theta = d.abs();
                        argmax = (j, p);
                    }
                    d
                })
                .collect()
        })
        .collect();
    let theta_sd_diff: Vec<Vec<f64>> = vb
        .sd_theta
        .iter()
        .zip(&gibbs_summary.theta_sd)
        .map(|(v, g)| {
            v.iter()
                .zip(g)
                .map(|(&a, &b)| {
                    let d = a - b;
                    max_theta_sd = max_theta_sd.max(d.abs());
                    d
                })
                .collect()
        })
        .collect();
    let pi_eap_diff: Vec<f64> = vb
        .eap_pi
        .iter()
        .zip(&gibbs_summary.pi_eap)
        .map(|(&a, &b)| a - b)
        .collect();
    let max_pi = pi_eap_diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let max_pi_sd = vb
        .sd_pi
        .iter()
        .zip(&gibbs_summary.pi_sd)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));

    let n = vb.map_profiles.len();
    let k = space.n_attrs();
    let mut element = vec![0usize; k];
    let mut pattern = 0usize;
    for (&a, &b) in vb.map_profiles.iter().zip(&gibbs_summary.profile_modes) {
        if a == b {
            pattern += 1;
        }
        let pa = space.profile(a);
        let pb = space.profile(b);
        for t in 0..k {
            if pa[t] == pb[t] {
                element[t] += 1;
            }
        }
    }
    let element_agreement: Vec<f64> = element.iter().map(|&c| c as f64 / n as f64).collect();
    let pattern_agreement = pattern as f64 / n as f64;

    let max_rhat = gibbs_summary
        .theta_rhat
        .iter()
        .flatten()
        .chain(gibbs_summary.pi_rhat.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    CompareReport {
        max_abs_theta_eap_diff: max_theta,
        argmax_theta: argmax,
        max_abs_theta_sd_diff: max_theta_sd,
        max_abs_pi_eap_diff: max_pi,
        max_abs_pi_sd_diff: max_pi_sd,
        element_agreement,
        pattern_agreement,
        max_rhat,
        rhat_warning: max_rhat >= 1.05,
        vb_wall_time_s: vb.wall_time,
        gibbs_wall_time_s: gibbs_summary.wall_time,
        speedup: gibbs_summary.wall_time / vb.wall_time,
        theta_eap_diff,
        theta_sd_diff,
        pi_eap_diff,
    }
}

fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let started = Instant::now();
    let q = args.q.load()?;
    let x = io::read_responses_csv(&args.responses)?;
    let resolved = args.vb.resolve()?;
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(&q, &space, resolved.flavor);
    let priors = default_priors(&space, &gms, resolved.scheme);

    let vb_report = fit(&x, &q, resolved.flavor, &priors, &resolved.config)?;
    let chain_cfg = ChainConfig {
        n_chains: args.chains.chains,
        n_iter: args.chains.iters,
        burn_in: args.chains.burn_in,
        thin: args.chains.thin,
        seed: args.seed,
    };
    let gibbs_run = gibbs_fit(&x, &q, resolved.flavor, &priors, &chain_cfg)?;

    let report = compare_reports(&vb_report, &gibbs_run.summary, &space);
    ensure_dir(&args.out_dir)?;
    let bytes = serde_json::to_vec_pretty(&report).map_err(|e| Error::Json {
        path: "compare.json".into(),
        message: e.to_string(),
    })?;
    io::write_atomic(&args.out_dir.join("compare.json"), &bytes)?;

    let mut manifest = io::RunManifest::new(
        "compare",
        serde_json::json!({
            "flavor": resolved.flavor,
            "prior_scheme": resolved.scheme,
            "max_eap_diff": args.max_eap_diff,
            "chains": chain_cfg.n_chains,
            "iters": chain_cfg.n_iter,
            "burn_in": chain_cfg.burn_in,
        }),
        Some(args.seed),
    );
    manifest.inputs = vec![args.responses.display().to_string()];
    manifest.outputs = vec!["compare.json".into()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;

    println!(
        "largest absolute EAP difference: {:.4} (item {}, pattern {}); pi: {:.5}",
        report.max_abs_theta_eap_diff,
        report.argmax_theta.0 + 1,
        report.argmax_theta.1 + 1,
        report.max_abs_pi_eap_diff
    );
    println!(
        "profile agreement: element-wise {:?}, pattern-wise {:.4}; sampler/fit wall-time ratio {:.1}",
        report
            .element_agreement
            .iter()
            .map(|v| (v * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        report.pattern_agreement,
        report.speedup
    );
    if report.rhat_warning {
        eprintln!(
            "warning: sampler convergence suspect (max rhat {:.3}); comparison emitted anyway",
            report.max_rhat
        );
    }
    if report.max_abs_theta_eap_diff > args.max_eap_diff {
        eprintln!(
            "estimator disagreement {:.4} exceeds threshold {:.4}",
            report.max_abs_theta_eap_diff, args.max_eap_diff
        );
        return Ok(EXIT_ORACLE_DISAGREEMENT);
    }
    Ok(EXIT_OK)
}

/// Outcome of one replication inside a study.
struct RepOutcome {
    eap_theta: Vec<Vec<f64>>,
    eap_pi: Vec<f64>,
    map_profiles: Vec<usize>,
    profiles_true: Vec<usize>,
    converged: bool,
    wall_time: f64,
}

/// Simulates and fits `reps` datasets against one fixed set of true item
/// parameters, then aggregates recovery metrics.
#[allow(clippy::too_many_arguments)]
pub fn replicate_study(
    q: &QMatrix,
    n: usize,
    rho: f64,
    flavor: Flavor,
    scheme: PriorScheme,
    reps: usize,
    seed: u64,
    config: &VbConfig,
    parallel_reps: bool,
    truth_mc_draws: u64,
) -> Result<(RecoveryReport, Vec<Vec<Vec<f64>>>)> {
    if reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(q, &space, flavor);
    let priors = default_priors(&space, &gms, scheme);
    let theta_true = gen_item_params(q, flavor, sub_seed(seed, "items", 0), (0.05, 0.25), (0.75, 0.95));
    let pi_true = true_mixing_proportions(q.levels(), rho, truth_mc_draws, sub_seed(seed, "truth", 0))?;

    let run_one = |rep: usize| -> Result<RepOutcome> {
        let profiles = gen_profiles(n, q.levels(), rho, sub_seed(seed, "profiles", rep as u64))?;
        let x = gen_responses(
            &profiles,
            q,
            &theta_true,
            flavor,
            sub_seed(seed, "responses", rep as u64),
        )?;
        let report = fit(&x, q, flavor, &priors, config)?;
        Ok(RepOutcome {
            eap_theta: report.eap_theta,
            eap_pi: report.eap_pi,
            map_profiles: report.map_profiles,
            profiles_true: profiles,
            converged: report.converged,
            wall_time: report.wall_time,
        })
    };

    let outcomes: Vec<Result<RepOutcome>> = if parallel_reps {
        (0..reps).into_par_iter().map(run_one).collect()
    } else {
        (0..reps).map(run_one).collect()
    };

    let mut ok = Vec::new();
    let mut converged_count = 0usize;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                if o.converged {
                    converged_count += 1;
                }
                ok.push(o);
            }
            Err(e) => eprintln!("replication {rep} failed: {e}"),
        }
    }
    if ok.is_empty() {
        return Err(Error::invalid("every replication failed"));
    }

    let est_theta: Vec<Vec<Vec<f64>>> = ok.iter().map(|o| o.eap_theta.clone()).collect();
    let est_pi: Vec<Vec<f64>> = ok.iter().map(|o| o.eap_pi.clone()).collect();
    let est_profiles: Vec<Vec<usize>> = ok.iter().map(|o| o.map_profiles.clone()).collect();
    let true_profiles: Vec<Vec<usize>> = ok.iter().map(|o| o.profiles_true.clone()).collect();

    let theta_by_kstar = bias_rmse_theta(&est_theta, &theta_true, q)?;
    let pi = bias_rmse_pi(&est_pi, &pi_true)?;
    let (eacr, pacr) = classification_rates(&est_profiles, &true_profiles, &space)?;
    let mean_wall_time = ok.iter().map(|o| o.wall_time).sum::<f64>() / ok.len() as f64;

    Ok((
        RecoveryReport {
            theta_by_kstar,
            pi,
            eacr,
            pacr,
            convergence_rate: converged_count as f64 / reps as f64,
            mean_wall_time,
            replications: reps,
        },
        est_theta,
    ))
}

fn cmd_replicate(args: ReplicateArgs) -> Result<i32> {
    let started = Instant::now();
    if args.reps == 0 {
        return Err(Error::invalid("--reps must be positive"));
    }
    let q = args.q.load()?;
    let flavor: Flavor = args.flavor.into();
    let parallel_reps = args.fit_cores.is_none();
    let config = VbConfig {
        tol: args.tol.unwrap_or(1e-4),
        max_iter: args.max_iter.unwrap_or(2000),
        cores: args.fit_cores.unwrap_or(1),
        init: Init::Uniform,
    };
    let schemes: Vec<PriorScheme> = if args.prior_sweep {
        vec![PriorScheme::WeaklyInformative, PriorScheme::Noninformative]
    } else {
        vec![args.prior.into()]
    };

    ensure_dir(&args.out_dir)?;
    let mut written = Vec::new();
    for scheme in &schemes {
        let (report, _) = replicate_study(
            &q,
            args.n,
            args.rho,
            flavor,
            *scheme,
            args.reps,
            args.seed,
            &config,
            parallel_reps,
            args.truth_mc_draws,
        )?;
        let dir = if schemes.len() == 1 {
            args.out_dir.clone()
        } else {
            args.out_dir.join(format!("{scheme}"))
        };
        io::write_recovery(&dir, &report)?;
        written.push((*scheme, report));
    }

    let mut manifest = io::RunManifest::new(
        "replicate",
        serde_json::json!({
            "n": args.n,
            "rho": args.rho,
            "flavor": flavor,
            "reps": args.reps,
            "schemes": schemes.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "tol": config.tol,
            "max_iter": config.max_iter,
            "parallel_reps": parallel_reps,
        }),
        Some(args.seed),
    );
    manifest.outputs = vec!["recovery.json".into()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;

    for (scheme, report) in &written {
        println!("[{scheme}] convergence {:.0}%", report.convergence_rate * 100.0);
        for (bucket, cell) in &report.theta_by_kstar {
            println!(
                "  attrs={bucket}: bias {:+.4} rmse {:.4}",
                cell.bias, cell.rmse
            );
        }
        println!(
            "  eacr {:?} pacr {:.3}",
            report
                .eacr
                .iter()
                .map(|v| (v * 1e3).round() / 1e3)
                .collect::<Vec<_>>(),
            report.pacr
        );
    }
    Ok(EXIT_OK)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let started = Instant::now();
    let q = args.q.load()?;
    let flavor: Flavor = args.flavor.into();
    let iters = if args.dry_run { 1 } else { args.iters };
    if args.cores.iter().any(|&c| c == 0) {
        return Err(Error::invalid("core counts must be positive"));
    }
    let cfg = SimConfig {
        truth_mc_draws: 100_000,
        ..SimConfig::new(args.n, q.levels().to_vec(), args.rho, flavor, args.seed)
    };
    let (_truth, x) = simulate(&q, &cfg)?;
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(&q, &space, flavor);
    let priors = default_priors(&space, &gms, PriorScheme::WeaklyInformative);

    let mut rows = Vec::new();
    let mut base_time = None;
    for &cores in &args.cores {
        let config = VbConfig {
            tol: 0.0,
            max_iter: iters,
            cores,
            init: Init::Uniform,
        };
        let t0 = Instant::now();
        let report = fit(&x, &q, flavor, &priors, &config)?;
        let secs = t0.elapsed().as_secs_f64();
        let speedup = base_time.get_or_insert(secs).max(f64::MIN_POSITIVE) / secs.max(1e-12);
        rows.push((cores, secs, speedup, report.iterations));
    }

    ensure_dir(&args.out_dir)?;
    let path = args.out_dir.join("bench.csv");
    {
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        w.write_record(["cores", "seconds", "speedup", "iterations"])
            .map_err(|e| Error::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        for (cores, secs, speedup, its) in &rows {
            w.write_record([
                cores.to_string(),
                format!("{secs:.3}"),
                format!("{speedup:.2}"),
                its.to_string(),
            ])
            .map_err(|e| Error::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        w.flush()
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    let mut manifest = io::RunManifest::new(
        "bench",
        serde_json::json!({
            "n": args.n,
            "rho": args.rho,
            "flavor": flavor,
            "cores": args.cores,
            "iters": iters,
        }),
        Some(args.seed),
    );
    manifest.outputs = vec!["bench.csv".into()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;

    println!("cores  seconds  speedup  ({} iterations each)", iters);
    for (cores, secs, speedup, _) in &rows {
        println!("{cores:>5}  {secs:>7.3}  {speedup:>7.2}");
    }
    Ok(EXIT_OK)
}

/// Per-item effect decompositions from a fitted summary; collapsed-flavor
/// pattern spaces only.
pub fn effects_from_summary(summary: &io::SummaryFile) -> Result<Vec<crate::effects::DeltaEffects>> {
    if summary.flavor != Flavor::Collapsed {
        return Err(Error::invalid(
            "effect decomposition is defined on the collapsed pattern space",
        ));
    }
    summary
        .items
        .iter()
        .map(|item| theta_to_delta(item.item - 1, &item.eap, &item.patterns))
        .collect()
}

/// Convenience wrapper used by examples and tests: monotonicity violations
/// of a fitted report.
pub fn fit_monotonicity(
    report: &FitReport,
    q: &QMatrix,
    flavor: Flavor,
) -> Result<Vec<crate::metrics::MonotonicityViolation>> {
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(q, &space, flavor);
    Ok(monotonicity_check(&report.eap_theta, &gms))
}
