//! `stratmc` command-line driver.
//!
//! Exit codes: 0 on success, 1 on runtime errors (including failed bench
//! cells), 2 on usage errors.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use stratmc::bench::{
    self, orders_path, replicate, ConvergenceReport, Experiment, ExperimentConfig,
};
use stratmc::finance::{ASIAN_DEFAULT_RATE, ASIAN_LN_RATE, DEFAULT_STRIKE};
use stratmc::integration::{
    mc_indicator_variance, smc_variance_bound, ss_variance_bound, IndicatorDomain,
};
use stratmc::sampling::{exact_root, sample_count, SamplerKind};
use stratmc::{GbmParams, SeededStream};

use config::ConfigFile;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<stratmc::Error> for CliError {
    fn from(e: stratmc::Error) -> Self {
        match e {
            stratmc::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stratmc",
    version,
    about = "Stratified Monte Carlo simulation of Markov chains",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the measure of a triangle in the unit square.
    Integrate(IntegrateArgs),
    /// Price the European call with a chain of N copies.
    PriceEuropean(PriceArgs),
    /// Price the geometric-average Asian call with a chain of N copies.
    PriceAsian(PriceArgs),
    /// Variance/efficiency sweep over an N schedule; writes CSV with --out.
    Bench(BenchArgs),
    /// Write one point set as CSV.
    DumpPoints(DumpArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// mc, smc, lhs or ss.
    #[arg(long)]
    sampler: Option<String>,
    /// Stratification base; N = n^(s+d).
    #[arg(long = "n", conflicts_with = "count")]
    base: Option<usize>,
    /// Number of points or chain copies.
    #[arg(long = "N")]
    count: Option<usize>,
    /// Independent replications.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// key=value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results CSV path (orders.csv is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    maturity: Option<f64>,
    /// Number of observation times P.
    #[arg(long)]
    steps: Option<usize>,
    /// Asian default rate convention: log10 (default) or ln of 1.09.
    #[arg(long = "asian-rate")]
    asian_rate: Option<String>,
}

#[derive(Args, Debug)]
struct PriceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// triangle ({u2 < u1}) or anti-triangle ({u1 + u2 < 1}).
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// european, asian or integration.
    #[arg(long)]
    experiment: Option<String>,
    /// Comma-separated N list, or `desk` / `full`.
    #[arg(long)]
    schedule: Option<String>,
    /// Comma-separated sampler list (default: all four).
    #[arg(long)]
    samplers: Option<String>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dimension s of the point set.
    #[arg(long)]
    dim: Option<usize>,
}

/// Flag values merged over a config file.
struct Settings {
    file: ConfigFile,
}

impl Settings {
    fn new(common: &CommonArgs) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(Self { file })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key),
        }
    }

    fn sampler(&self, common: &CommonArgs, default: SamplerKind) -> Result<SamplerKind, CliError> {
        let raw = self.pick(common.sampler.clone(), "sampler")?;
        raw.map_or(Ok(default), |s| s.parse().map_err(CliError::from))
    }

    /// N from `--N`, or `n^dim` from `--n`, or `default_base^dim`.
    fn count(
        &self,
        common: &CommonArgs,
        dim: usize,
        default_base: usize,
    ) -> Result<usize, CliError> {
        if let Some(count) = self.pick(common.count, "N")? {
            return Ok(count);
        }
        let n = self.pick(common.base, "n")?.unwrap_or(default_base);
        stratmc::sampling::checked_pow(n, dim).map_err(CliError::from)
    }

    fn reps(&self, common: &CommonArgs) -> Result<usize, CliError> {
        Ok(self.pick(common.reps, "reps")?.unwrap_or(100))
    }

    fn seed(&self, common: &CommonArgs) -> Result<u64, CliError> {
        Ok(self.pick(common.seed, "seed")?.unwrap_or(1))
    }

    fn jobs(&self, common: &CommonArgs) -> Result<Option<usize>, CliError> {
        self.pick(common.jobs, "jobs")
    }

    fn out(&self, common: &CommonArgs) -> Option<PathBuf> {
        common.out.clone()
    }

    fn params(
        &self,
        model: &ModelArgs,
        experiment: Experiment,
    ) -> Result<(GbmParams, f64), CliError> {
        let base = match experiment {
            Experiment::Asian => {
                let convention = self.pick(model.asian_rate.clone(), "asian_rate")?;
                let mut p = GbmParams::asian_default();
                match convention.as_deref() {
                    None | Some("log10") => p.rate = ASIAN_DEFAULT_RATE,
                    Some("ln") => p.rate = ASIAN_LN_RATE,
                    Some(other) => {
                        return Err(CliError::Usage(format!(
                            "--asian-rate must be log10 or ln, got `{other}`"
                        )))
                    }
                }
                p
            }
            _ => GbmParams::european_default(),
        };
        let s0 = self.pick(model.s0, "s0")?.unwrap_or(base.s0);
        let rate = self.pick(model.rate, "rate")?.unwrap_or(base.rate);
        let sigma = self.pick(model.sigma, "sigma")?.unwrap_or(base.sigma);
        let maturity = self
            .pick(model.maturity, "maturity")?
            .unwrap_or(base.maturity);
        let steps = self.pick(model.steps, "steps")?.unwrap_or(base.steps());
        let strike = self.pick(model.strike, "strike")?.unwrap_or(DEFAULT_STRIKE);
        if !(strike >= 0.0) {
            return Err(CliError::Usage(format!("invalid strike {strike}")));
        }
        let params = GbmParams::uniform(s0, rate, sigma, maturity, steps)?;
        Ok((params, strike))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `stratmc --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Integrate(args) => integrate(args),
        Command::PriceEuropean(args) => price(args, Experiment::European),
        Command::PriceAsian(args) => price(args, Experiment::Asian),
        Command::Bench(args) => bench_cmd(args),
        Command::DumpPoints(args) => dump_points(args),
    }
}

fn single_cell(report: &ConvergenceReport) -> Result<&bench::CellResult, CliError> {
    if let Some(err) = report.errors.first() {
        return Err(CliError::Usage(err.message.clone()));
    }
    report
        .cells
        .first()
        .ok_or_else(|| CliError::Runtime("no result produced".into()))
}

fn write_report(report: &ConvergenceReport, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        bench::emit_csv(report, path)?;
        println!(
            "wrote {} and {}",
            path.display(),
            orders_path(path).display()
        );
    }
    Ok(())
}

fn price(args: PriceArgs, experiment: Experiment) -> Result<ExitCode, CliError> {
    let settings = Settings::new(&args.common)?;
    let (params, strike) = settings.params(&args.model, experiment)?;
    let sampler = settings.sampler(&args.common, SamplerKind::Ss)?;
    let default_base = if experiment == Experiment::Asian {
        10
    } else {
        32
    };
    let count = settings.count(&args.common, experiment.point_dim(), default_base)?;
    let mut cfg = ExperimentConfig::new(
        experiment,
        vec![count],
        settings.reps(&args.common)?,
        settings.seed(&args.common)?,
    );
    cfg.samplers = vec![sampler];
    cfg.params = params;
    cfg.strike = strike;
    cfg.jobs = settings.jobs(&args.common)?;
    let report = replicate(&cfg)?;
    let cell = single_cell(&report)?;
    let oracle = cfg.oracle()?;
    let stderr = (cell.variance / cell.reps as f64).sqrt();
    println!("experiment      {experiment}");
    println!("sampler         {sampler}");
    println!("N               {count}");
    println!("replications    {}", cell.reps);
    println!("mean estimate   {:.8}", cell.mean);
    println!("sample variance {:.6e}", cell.variance);
    println!("std error       {stderr:.6e}");
    println!("oracle price    {oracle:.8}");
    println!("abs error       {:.6e}", (cell.mean - oracle).abs());
    println!("cpu seconds     {:.3}", cell.cpu_seconds);
    write_report(&report, settings.out(&args.common).as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn integrate(args: IntegrateArgs) -> Result<ExitCode, CliError> {
    let settings = Settings::new(&args.common)?;
    let sampler = settings.sampler(&args.common, SamplerKind::Ss)?;
    let count = settings.count(&args.common, 2, 32)?;
    let reps = settings.reps(&args.common)?;
    let seed = settings.seed(&args.common)?;
    if reps < 2 {
        return Err(CliError::Usage("need at least 2 replications".into()));
    }
    let domain_name = settings
        .pick(args.domain.clone(), "domain")?
        .unwrap_or_else(|| "triangle".to_string());
    let domain = match domain_name.as_str() {
        "triangle" => IndicatorDomain::triangle(),
        "anti-triangle" => IndicatorDomain::anti_triangle(),
        other => return Err(CliError::Usage(format!("unknown domain `{other}`"))),
    };
    let mut values = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut stream = stratmc::Substreams::new(seed, rep as u64).step(0);
        let ps = sample_count(sampler, 2, count, &mut stream)?;
        values.push(stratmc::integration::estimate(&domain, &ps)?.value);
    }
    let (mean, variance) = bench::mean_and_variance(&values);
    println!("domain          {domain_name} (measure 0.5)");
    println!("sampler         {sampler}");
    println!("N               {count}");
    println!("replications    {reps}");
    println!("mean estimate   {mean:.8}");
    println!("sample variance {variance:.6e}");
    println!("abs error       {:.6e}", (mean - 0.5).abs());
    println!("MC variance     {:.6e}", mc_indicator_variance(0.5, count));
    match sampler {
        SamplerKind::Smc => println!("SMC bound       {:.6e}", smc_variance_bound(1.0, 2, count)),
        SamplerKind::Ss if domain_name == "anti-triangle" => {
            println!("SS bound        {:.6e}", ss_variance_bound(1.0, 2, count))
        }
        _ => {}
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_schedule(raw: &str, experiment: Experiment) -> Result<Vec<usize>, CliError> {
    match raw.trim() {
        "desk" => Ok(desk_schedule(experiment)),
        "full" => Ok(full_schedule(experiment)),
        list => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad schedule entry `{v}`")))
            })
            .collect(),
    }
}

/// Geometric desk-scale schedules.
fn desk_schedule(experiment: Experiment) -> Vec<usize> {
    match experiment {
        Experiment::Asian => (1..=8).map(|m: usize| (5 * m).pow(3)).collect(),
        _ => [16usize, 32, 64, 128, 256].iter().map(|n| n * n).collect(),
    }
}

/// Full-scale schedules: `10^2, 50^2, 100^2, .., 1000^2` and `(5m)^3, m <= 20`.
fn full_schedule(experiment: Experiment) -> Vec<usize> {
    match experiment {
        Experiment::Asian => (1..=20).map(|m: usize| (5 * m).pow(3)).collect(),
        _ => std::iter::once(10usize)
            .chain((1..=20).map(|k| 50 * k))
            .map(|n| n * n)
            .collect(),
    }
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode, CliError> {
    let settings = Settings::new(&args.common)?;
    let experiment: Experiment = settings
        .pick(args.experiment.clone(), "experiment")?
        .unwrap_or_else(|| "european".into())
        .parse()?;
    let schedule = match settings.pick(args.schedule.clone(), "schedule")? {
        Some(raw) => parse_schedule(&raw, experiment)?,
        None => desk_schedule(experiment),
    };
    let mut cfg = ExperimentConfig::new(
        experiment,
        schedule,
        settings.reps(&args.common)?,
        settings.seed(&args.common)?,
    );
    if let Some(list) = settings.pick(args.samplers.clone(), "samplers")? {
        cfg.samplers = list
            .split(',')
            .map(|s| s.parse::<SamplerKind>())
            .collect::<Result<_, _>>()?;
    }
    if experiment != Experiment::Integration {
        let (params, strike) = settings.params(&args.model, experiment)?;
        cfg.params = params;
        cfg.strike = strike;
    }
    cfg.jobs = settings.jobs(&args.common)?;
    let report = replicate(&cfg)?;

    println!(
        "{:<8} {:>9} {:>14} {:>12} {:>10} {:>12}",
        "sampler", "N", "mean", "variance", "cpu_s", "efficiency"
    );
    for c in &report.cells {
        let eff = c.efficiency.map_or("-".to_string(), |e| format!("{e:.4e}"));
        println!(
            "{:<8} {:>9} {:>14.8} {:>12.4e} {:>10.3} {:>12}",
            c.sampler, c.count, c.mean, c.variance, c.cpu_seconds, eff
        );
    }
    for o in &report.orders {
        println!("order {:<4} {:.3}", o.sampler, o.order);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.errors {
        eprintln!("error: {} N={}: {}", e.sampler, e.count, e.message);
    }
    write_report(&report, settings.out(&args.common).as_deref())?;
    Ok(if report.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dump_points(args: DumpArgs) -> Result<ExitCode, CliError> {
    let settings = Settings::new(&args.common)?;
    let sampler = settings.sampler(&args.common, SamplerKind::Ss)?;
    let dim = settings.pick(args.dim, "dim")?.unwrap_or(2);
    let count = settings.count(&args.common, dim, 4)?;
    if sampler.needs_power_count() && exact_root(count, dim).is_none() {
        return Err(CliError::Usage(format!(
            "{sampler} needs N = n^{dim}, got {count}"
        )));
    }
    let mut stream = SeededStream::new(settings.seed(&args.common)?);
    let ps = sample_count(sampler, dim, count, &mut stream)?;
    match settings.out(&args.common) {
        Some(path) => ps.write_csv(BufWriter::new(File::create(path)?))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            // a closed pipe (`| head`) is not an error
            match ps.write_csv(&mut lock).and_then(|_| lock.flush()) {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
