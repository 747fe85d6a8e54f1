use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use merton_cli::{
    format_sig, log_spaced_grid, parse_count, parse_history_csv, parse_value_list,
    write_history_csv, write_json, CliError, CliResult, CompareJson, FamilyArg,
    FamilyCriteria, FitJson, StatsJson, TruthJson, SCHEMA_VERSION,
};
use merton_core::inference::{
    map_fit, pseudo_marginal_mcmc, waic, wbic, FitConfig, KernelFamily,
};
use merton_core::model::{cross_time_default_correlation, map_asset_to_default, tangent_slope_a};
use merton_core::variance::{delta_curve, variance_asymptotic, VarianceCurve};
use merton_core::{DecayKernel, ModelParams, SlopeMode};

#[derive(Parser)]
#[command(
    name = "merton",
    version,
    about = "Default-portfolio toolkit: correlation mapping, estimator-variance analysis, \
             simulation and Bayesian fitting under the single-factor Merton model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Kernel family: exponential or power
    #[arg(long)]
    kernel: String,
    /// Exponential decay parameter in [0,1]
    #[arg(long)]
    theta: Option<f64>,
    /// Power decay exponent >= 0
    #[arg(long)]
    gamma: Option<f64>,
}

impl KernelArgs {
    fn build(&self) -> CliResult<DecayKernel> {
        match FamilyArg::parse(&self.kernel).map_err(CliError::Validation)? {
            FamilyArg::Exponential => {
                let theta = self.theta.ok_or_else(|| {
                    CliError::Validation("exponential kernel needs --theta".into())
                })?;
                Ok(DecayKernel::exponential(theta)?)
            }
            FamilyArg::Power => {
                let gamma = self.gamma.ok_or_else(|| {
                    CliError::Validation("power kernel needs --gamma".into())
                })?;
                Ok(DecayKernel::power(gamma)?)
            }
            FamilyArg::Both => Err(CliError::Validation(
                "this command needs a single kernel family".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
struct BoundsFlags {
    #[arg(long = "p-min", default_value_t = 1e-6)]
    p_min: f64,
    #[arg(long = "p-max", default_value_t = 0.5)]
    p_max: f64,
    #[arg(long = "rho-min", default_value_t = 0.0)]
    rho_min: f64,
    #[arg(long = "rho-max", default_value_t = 0.999)]
    rho_max: f64,
    #[arg(long = "theta-min", default_value_t = 0.0)]
    theta_min: f64,
    #[arg(long = "theta-max", default_value_t = 0.999)]
    theta_max: f64,
    #[arg(long = "gamma-min", default_value_t = 1e-3)]
    gamma_min: f64,
    #[arg(long = "gamma-max", default_value_t = 20.0)]
    gamma_max: f64,
}

impl BoundsFlags {
    fn config(&self, seed: u64, n_paths: usize) -> FitConfig {
        FitConfig {
            n_paths,
            seed,
            p_bounds: (self.p_min, self.p_max),
            rho_a_bounds: (self.rho_min, self.rho_max),
            theta_bounds: (self.theta_min, self.theta_max),
            gamma_bounds: (self.gamma_min, self.gamma_max),
            ..FitConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitFlags {
    /// Monte-Carlo paths per likelihood evaluation
    #[arg(long = "n-paths", default_value_t = 4096)]
    n_paths: usize,
    /// Multistart count for the simplex search
    #[arg(long = "n-starts", default_value_t = 8)]
    n_starts: usize,
    /// Simplex size at which a start counts as converged
    #[arg(long = "simplex-tol", default_value_t = 1e-6)]
    simplex_tol: f64,
    /// Evaluation budget per start
    #[arg(long = "max-evals", default_value_t = 2000)]
    max_evals: usize,
    #[command(flatten)]
    bounds: BoundsFlags,
}

impl FitFlags {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            n_starts: self.n_starts,
            simplex_tol: self.simplex_tol,
            max_evals: self.max_evals,
            ..self.bounds.config(seed, self.n_paths)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Asset-to-default correlation mapping curves with the tangent line
    Mapping {
        /// PD values, comma separated (e.g. 0.5,0.1,0.01)
        #[arg(long)]
        p: String,
        /// Grid points on rho_A in [0,1]
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-time correlation C(t) and V(Z(t)) curves with bounds
    Variance {
        #[arg(long)]
        p: f64,
        #[arg(long = "rhoA")]
        rho_a: f64,
        /// Obligors per year
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Largest horizon
        #[arg(long = "T", value_parser = parse_count)]
        horizon: u64,
        /// Log-spaced sample points along t
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Bracketing constant for the asymptotic column (default:
        /// geometric mean of A*rho_A and rho_D)
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-size scaling exponent delta vs gamma (the phase diagram)
    Scaling {
        /// Gamma sweep: start:stop:step or comma list
        #[arg(long)]
        gammas: String,
        #[arg(long = "T", value_parser = parse_count)]
        horizon: u64,
        #[arg(long)]
        p: f64,
        #[arg(long = "rhoA")]
        rho_a: f64,
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one default-count panel
    Simulate {
        #[arg(long)]
        p: f64,
        #[arg(long = "rhoA")]
        rho_a: f64,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long = "T", value_parser = parse_count)]
        horizon: u64,
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Panel statistics JSON (default: <out>.stats.json)
        #[arg(long = "stats-out")]
        stats_out: Option<PathBuf>,
    },
    /// Generate a synthetic history with a truth sidecar for recovery tests
    Generate {
        /// Long-run PD (default: the 1.51% all-ratings average)
        #[arg(long, default_value_t = 0.0151)]
        p: f64,
        #[arg(long = "rhoA", default_value_t = 0.2)]
        rho_a: f64,
        #[arg(long, default_value = "power")]
        kernel: String,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 0.3)]
        gamma: f64,
        #[arg(long = "T", value_parser = parse_count, default_value = "99")]
        horizon: u64,
        #[arg(long, value_parser = parse_count, default_value = "10000")]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Truth JSON (default: <out>.truth.json)
        #[arg(long = "truth-out")]
        truth_out: Option<PathBuf>,
    },
    /// MAP fit of (p, rho_A, kernel parameter) to a history CSV
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// exponential, power or both
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flags: FitFlags,
        /// Also compute WAIC (posterior chain at beta = 1)
        #[arg(long = "with-waic")]
        with_waic: bool,
        /// Also compute WBIC (tempered chain at beta = 1/log m)
        #[arg(long = "with-wbic")]
        with_wbic: bool,
        /// Posterior draws for --with-waic / --with-wbic
        #[arg(long = "n-draws", default_value_t = 2000)]
        n_draws: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// WAIC and WBIC for both kernel families
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "n-paths", default_value_t = 1024)]
        n_paths: usize,
        #[arg(long = "n-draws", default_value_t = 2000)]
        n_draws: usize,
        #[command(flatten)]
        bounds: BoundsFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_mapping(p_list: &str, points: usize, out: &Path) -> CliResult<()> {
    let ps = parse_value_list(p_list).map_err(CliError::Validation)?;
    if ps.is_empty() || points < 2 {
        return Err(CliError::Validation(
            "mapping needs at least one p and two grid points".into(),
        ));
    }
    let mut csv = String::from("p,rho_A,rho_D,tangent\n");
    for &p in &ps {
        let slope = tangent_slope_a(p, SlopeMode::Plackett)?;
        for i in 0..points {
            let rho = i as f64 / (points - 1) as f64;
            let rho_d = map_asset_to_default(p, rho)?;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                format_sig(p),
                format_sig(rho),
                format_sig(rho_d),
                format_sig(slope * rho)
            ));
        }
    }
    write_text(out, &csv)
}

#[allow(clippy::too_many_arguments)]
fn cmd_variance(
    p: f64,
    rho_a: f64,
    n: u64,
    kernel: DecayKernel,
    horizon: u64,
    points: usize,
    c: Option<f64>,
    out: &Path,
) -> CliResult<()> {
    let params = ModelParams::new(p, rho_a, kernel)?;
    let mut curve = VarianceCurve::new(&params, n)?;
    let mut csv = String::from("t,C_t,V_exact,V_lower,V_upper,V_asymptotic\n");
    for t in log_spaced_grid(horizon, points) {
        let b = curve.breakdown(t)?;
        let c_t = if t >= 1 {
            cross_time_default_correlation(&params, t as usize)
        } else {
            f64::NAN
        };
        let asym = if t >= 2 {
            variance_asymptotic(&params, n, t, c)?.0
        } else {
            f64::NAN
        };
        csv.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            format_sig(c_t),
            format_sig(b.total),
            format_sig(b.lower_bound),
            format_sig(b.upper_bound),
            format_sig(asym)
        ));
    }
    write_text(out, &csv)
}

fn cmd_scaling(
    gammas: &str,
    horizon: u64,
    p: f64,
    rho_a: f64,
    n: u64,
    out: &Path,
) -> CliResult<()> {
    let gammas = parse_value_list(gammas).map_err(CliError::Validation)?;
    let points = delta_curve(p, rho_a, &gammas, n, horizon)?;
    let mut csv = String::from("gamma,delta\n");
    for sp in points {
        csv.push_str(&format!(
            "{},{}\n",
            format_sig(sp.kernel_param),
            format_sig(sp.delta)
        ));
    }
    write_text(out, &csv)
}

fn cmd_simulate(
    params: &ModelParams,
    horizon: u64,
    n: u64,
    seed: u64,
    out: &Path,
    stats_out: Option<PathBuf>,
) -> CliResult<()> {
    let cohorts = vec![n; horizon as usize];
    let history = merton_core::sim::simulate_panel(params, &cohorts, seed)?;
    write_history_csv(out, &history)?;
    let stats = merton_core::sim::estimator_z(&history)?;
    let stats_path = stats_out.unwrap_or_else(|| out.with_extension("stats.json"));
    write_json(
        &stats_path,
        &StatsJson {
            schema_version: SCHEMA_VERSION.to_string(),
            z: stats.z,
            per_year_rates: stats.per_year_rates,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    params: &ModelParams,
    horizon: u64,
    n: u64,
    seed: u64,
    out: &Path,
    truth_out: Option<PathBuf>,
) -> CliResult<()> {
    let cohorts = vec![n; horizon as usize];
    let history = merton_core::sim::simulate_panel(params, &cohorts, seed)?;
    write_history_csv(out, &history)?;
    let family = match params.kernel() {
        DecayKernel::Exponential { .. } => "exponential",
        DecayKernel::Power { .. } => "power",
    };
    let truth = TruthJson {
        schema_version: SCHEMA_VERSION.to_string(),
        family: family.to_string(),
        p: params.p(),
        rho_a: params.rho_a(),
        kernel_param: params.kernel().param(),
        horizon,
        n,
        seed,
    };
    let truth_path = truth_out.unwrap_or_else(|| out.with_extension("truth.json"));
    write_json(&truth_path, &truth)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    input: &Path,
    family_arg: FamilyArg,
    seed: u64,
    flags: &FitFlags,
    with_waic: bool,
    with_wbic: bool,
    n_draws: usize,
    out: &Path,
) -> CliResult<()> {
    let history = parse_history_csv(input)?;
    let config = flags.config(seed);
    let mut results = Vec::new();
    for family in family_arg.families() {
        let mut fit = map_fit(&history, family, &config)?;
        if with_waic {
            let sample = pseudo_marginal_mcmc(&history, family, &config, n_draws, 1.0)?;
            fit.waic = Some(waic(&history, &sample, config.n_paths)?);
        }
        if with_wbic {
            fit.wbic = Some(wbic(&history, family, &config, n_draws)?);
        }
        results.push(FitJson::from_result(&fit, seed, config.n_paths));
    }
    if results.len() == 1 {
        write_json(out, &results[0])
    } else {
        write_json(out, &results)
    }
}

fn cmd_compare(
    input: &Path,
    seed: u64,
    n_paths: usize,
    n_draws: usize,
    bounds: &BoundsFlags,
    out: &Path,
) -> CliResult<()> {
    let history = parse_history_csv(input)?;
    let config = bounds.config(seed, n_paths);
    let mut families = Vec::new();
    for family in [KernelFamily::Exponential, KernelFamily::Power] {
        let sample = pseudo_marginal_mcmc(&history, family, &config, n_draws, 1.0)?;
        let waic_val = waic(&history, &sample, n_paths)?;
        let wbic_val = wbic(&history, family, &config, n_draws)?;
        families.push(FamilyCriteria {
            family: family.name().to_string(),
            waic: waic_val,
            wbic: wbic_val,
        });
    }
    write_json(
        out,
        &CompareJson {
            schema_version: SCHEMA_VERSION.to_string(),
            input: input.display().to_string(),
            seed,
            n_paths,
            n_draws,
            families,
        },
    )
}

fn init_thread_pool() -> CliResult<()> {
    if let Ok(raw) = std::env::var("MERTON_THREADS") {
        let threads: usize = raw.trim().parse().map_err(|_| {
            CliError::Validation(format!("MERTON_THREADS must be a positive integer, got '{raw}'"))
        })?;
        if threads == 0 {
            return Err(CliError::Validation(
                "MERTON_THREADS must be a positive integer".into(),
            ));
        }
        // a second initialization (e.g. in tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Mapping { p, points, out } => cmd_mapping(&p, points, &out),
        Command::Variance {
            p,
            rho_a,
            n,
            kernel,
            horizon,
            points,
            c,
            out,
        } => cmd_variance(p, rho_a, n, kernel.build()?, horizon, points, c, &out),
        Command::Scaling {
            gammas,
            horizon,
            p,
            rho_a,
            n,
            out,
        } => cmd_scaling(&gammas, horizon, p, rho_a, n, &out),
        Command::Simulate {
            p,
            rho_a,
            kernel,
            horizon,
            n,
            seed,
            out,
            stats_out,
        } => {
            let params = ModelParams::new(p, rho_a, kernel.build()?)?;
            cmd_simulate(&params, horizon, n, seed, &out, stats_out)
        }
        Command::Generate {
            p,
            rho_a,
            kernel,
            theta,
            gamma,
            horizon,
            n,
            seed,
            out,
            truth_out,
        } => {
            let kernel = KernelArgs {
                kernel,
                theta,
                gamma: Some(gamma),
            }
            .build()?;
            let params = ModelParams::new(p, rho_a, kernel)?;
            cmd_generate(&params, horizon, n, seed, &out, truth_out)
        }
        Command::Fit {
            input,
            kernel,
            seed,
            flags,
            with_waic,
            with_wbic,
            n_draws,
            out,
        } => {
            let family = FamilyArg::parse(&kernel).map_err(CliError::Validation)?;
            cmd_fit(&input, family, seed, &flags, with_waic, with_wbic, n_draws, &out)
        }
        Command::Compare {
            input,
            seed,
            n_paths,
            n_draws,
            bounds,
            out,
        } => cmd_compare(&input, seed, n_paths, n_draws, &bounds, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool().and_then(|_| run(cli)) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
