//! Replication harness for the convergence experiments.
//!
//! For every `(sampler, N)` cell the harness runs `R` independent estimates,
//! records their mean and unbiased sample variance together with the CPU time
//! spent, and fits `Var = c N^-alpha` by least squares on `log2` axes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::chain::{mc_run, run, MarkovModel};
use crate::error::{Error, Result};
use crate::finance::{
    black_scholes_price, discounted_payoff, geometric_asian_closed_form, AsianModel, EuropeanModel,
    GbmParams, OptionSpec, OptionStyle, DEFAULT_STRIKE,
};
use crate::integration::{estimate, IndicatorDomain};
use crate::rng::Substreams;
use crate::sampling::{exact_root, sample_count, SamplerKind};

pub const RESULTS_HEADER: &str = "experiment,sampler,N,R,mean,variance,cpu_seconds,efficiency";
pub const ORDERS_HEADER: &str = "experiment,sampler,order,intercept";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// European call on a GBM price chain (`s = d = 1`).
    European,
    /// Geometric-average Asian call (`s = 2, d = 1`).
    Asian,
    /// Measure of the triangle `{u_2 < u_1}` in the unit square.
    Integration,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::European => "european",
            Experiment::Asian => "asian",
            Experiment::Integration => "integration",
        }
    }

    /// Dimension of the point sets drawn per step, `s + d`.
    pub fn point_dim(self) -> usize {
        match self {
            Experiment::European | Experiment::Integration => 2,
            Experiment::Asian => 3,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "european" => Ok(Experiment::European),
            "asian" => Ok(Experiment::Asian),
            "integration" => Ok(Experiment::Integration),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub samplers: Vec<SamplerKind>,
    /// Point counts `N`; SMC and SS need `N = n^(s+d)`.
    pub schedule: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub params: GbmParams,
    pub strike: f64,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Give every replication the same streams. Only useful to test the
    /// variance estimator on a degenerate input.
    pub share_streams: bool,
}

impl ExperimentConfig {
    /// All four samplers on the default parameters of `experiment`.
    pub fn new(experiment: Experiment, schedule: Vec<usize>, reps: usize, seed: u64) -> Self {
        let params = match experiment {
            Experiment::Asian => GbmParams::asian_default(),
            _ => GbmParams::european_default(),
        };
        Self {
            experiment,
            samplers: SamplerKind::ALL.to_vec(),
            schedule,
            reps,
            seed,
            params,
            strike: DEFAULT_STRIKE,
            jobs: None,
            share_streams: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Config("need at least 2 replications".into()));
        }
        if self.schedule.is_empty() || self.samplers.is_empty() {
            return Err(Error::Config("empty schedule or sampler list".into()));
        }
        if self.schedule.contains(&0) {
            return Err(Error::Config("point counts must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form value of the estimated quantity.
    pub fn oracle(&self) -> Result<f64> {
        match self.experiment {
            Experiment::European => Ok(black_scholes_price(&self.params, self.strike)),
            Experiment::Asian => geometric_asian_closed_form(&self.params, self.strike),
            Experiment::Integration => Ok(0.5),
        }
    }

    /// One estimate with `count` points for replication stream `replication`.
    pub fn run_once(&self, sampler: SamplerKind, count: usize, replication: u64) -> Result<f64> {
        let streams = Substreams::new(self.seed, replication);
        match self.experiment {
            Experiment::European => {
                let model = EuropeanModel::new(self.params.clone());
                let spec = OptionSpec::new(self.strike, OptionStyle::European)?;
                self.price_chain(&model, &spec, sampler, count, streams)
            }
            Experiment::Asian => {
                let model = AsianModel::new(self.params.clone());
                let spec = OptionSpec::new(self.strike, OptionStyle::AsianGeometric)?;
                self.price_chain(&model, &spec, sampler, count, streams)
            }
            Experiment::Integration => {
                let domain = IndicatorDomain::triangle();
                let ps = sample_count(sampler, 2, count, &mut streams.step(0))?;
                Ok(estimate(&domain, &ps)?.value)
            }
        }
    }

    fn price_chain<M: MarkovModel>(
        &self,
        model: &M,
        spec: &OptionSpec,
        sampler: SamplerKind,
        count: usize,
        streams: Substreams,
    ) -> Result<f64> {
        let steps = self.params.steps();
        let ensemble = match sampler {
            SamplerKind::Mc => mc_run(model, count, steps, streams)?,
            kind => {
                let dim = model.state_dim() + model.driver_dim();
                let n = exact_root(count, dim).ok_or_else(|| {
                    Error::Config(format!("{kind} needs N = n^{dim}, got N = {count}"))
                })?;
                run(model, n, steps, kind, streams)?
            }
        };
        Ok(discounted_payoff(&ensemble, spec, &self.params))
    }

    fn replication_id(&self, sampler: SamplerKind, count: usize, rep: usize) -> u64 {
        let tag = SamplerKind::ALL
            .iter()
            .position(|&k| k == sampler)
            .unwrap_or(0) as u64;
        let rep = if self.share_streams { 0 } else { rep as u64 };
        (tag << 60) | ((count as u64) << 20) | rep
    }

    fn check_cell(&self, sampler: SamplerKind, count: usize) -> Result<()> {
        let dim = self.experiment.point_dim();
        let stratified_chain =
            sampler != SamplerKind::Mc && self.experiment != Experiment::Integration;
        if (sampler.needs_power_count() || stratified_chain) && exact_root(count, dim).is_none() {
            return Err(Error::Config(format!(
                "{sampler} needs N = n^{dim}, got N = {count}"
            )));
        }
        if count >= 1 << 40 {
            return Err(Error::Config(format!("N = {count} is too large")));
        }
        Ok(())
    }
}

/// Statistics of one `(sampler, N)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub sampler: SamplerKind,
    pub count: usize,
    pub reps: usize,
    pub mean: f64,
    pub variance: f64,
    /// Summed thread CPU time of the `R` replications.
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub efficiency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellError {
    pub sampler: SamplerKind,
    pub count: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    pub sampler: SamplerKind,
    /// `alpha` in `Var = O(N^-alpha)`.
    pub order: f64,
    /// Intercept of the `log2` fit.
    pub intercept: f64,
    pub points: usize,
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub experiment: Experiment,
    pub cells: Vec<CellResult>,
    pub errors: Vec<CellError>,
    pub orders: Vec<OrderFit>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn empty(experiment: Experiment) -> Self {
        Self {
            experiment,
            cells: Vec::new(),
            errors: Vec::new(),
            orders: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn cells_for(&self, sampler: SamplerKind) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.sampler == sampler)
    }

    pub fn cell(&self, sampler: SamplerKind, count: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.sampler == sampler && c.count == count)
    }

    pub fn order(&self, sampler: SamplerKind) -> Option<&OrderFit> {
        self.orders.iter().find(|o| o.sampler == sampler)
    }
}

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Sample mean and unbiased sample variance (divisor `R - 1`).
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// `1 / (variance * cpu_seconds)`, or `None` when either is not positive.
pub fn efficiency(variance: f64, cpu_seconds: f64) -> Option<f64> {
    (variance > 0.0 && cpu_seconds > 0.0).then(|| 1.0 / (variance * cpu_seconds))
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept)`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Precondition(
            "need at least two points to fit a line".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::Precondition("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits `log2 Var = intercept - order * log2 N` over the cells of `sampler`.
/// Cells with zero variance are skipped and counted in `excluded`.
pub fn fit_order_cells<'a>(
    sampler: SamplerKind,
    cells: impl IntoIterator<Item = &'a CellResult>,
) -> Result<OrderFit> {
    let mut excluded = 0;
    let mut points = Vec::new();
    for c in cells {
        if c.variance > 0.0 {
            points.push(((c.count as f64).log2(), c.variance.log2()));
        } else {
            excluded += 1;
        }
    }
    if points.len() < 3 {
        return Err(Error::Precondition(format!(
            "{sampler}: need at least 3 N-values with positive variance, have {}",
            points.len()
        )));
    }
    let (slope, intercept) = least_squares(&points)?;
    Ok(OrderFit {
        sampler,
        order: -slope,
        intercept,
        points: points.len(),
        excluded,
    })
}

pub fn fit_order(report: &ConvergenceReport, sampler: SamplerKind) -> Result<OrderFit> {
    fit_order_cells(sampler, report.cells_for(sampler))
}

/// Slope of `log2(efficiency)` against `log2 N`.
pub fn efficiency_slope(report: &ConvergenceReport, sampler: SamplerKind) -> Result<f64> {
    let points: Vec<(f64, f64)> = report
        .cells_for(sampler)
        .filter_map(|c| c.efficiency.map(|e| ((c.count as f64).log2(), e.log2())))
        .collect();
    least_squares(&points).map(|(slope, _)| slope)
}

/// Runs every `(sampler, N)` cell of the configuration.
///
/// Cells that cannot run (e.g. SMC with `N` not a perfect power) are recorded
/// in `errors`; the other cells still run.
pub fn replicate(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = config.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut report = ConvergenceReport::empty(config.experiment);
    for &sampler in &config.samplers {
        for &count in &config.schedule {
            if let Err(e) = config.check_cell(sampler, count) {
                report.errors.push(CellError {
                    sampler,
                    count,
                    message: e.to_string(),
                });
                continue;
            }
            match run_cell(config, &pool, sampler, count) {
                Ok(cell) => report.cells.push(cell),
                Err(e) => report.errors.push(CellError {
                    sampler,
                    count,
                    message: e.to_string(),
                }),
            }
        }
        match fit_order(&report, sampler) {
            Ok(fit) => {
                if fit.excluded > 0 {
                    report.warnings.push(format!(
                        "{sampler}: {} zero-variance cells left out of the order fit",
                        fit.excluded
                    ));
                }
                report.orders.push(fit);
            }
            Err(e) => report.warnings.push(e.to_string()),
        }
    }
    Ok(report)
}

fn run_cell(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
    sampler: SamplerKind,
    count: usize,
) -> Result<CellResult> {
    let wall = Instant::now();
    let runs: Vec<Result<(f64, f64)>> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let start = thread_cpu_seconds();
                let value =
                    config.run_once(sampler, count, config.replication_id(sampler, count, rep))?;
                Ok((value, thread_cpu_seconds() - start))
            })
            .collect()
    });
    let mut values = Vec::with_capacity(runs.len());
    let mut cpu = 0.0;
    for r in runs {
        let (v, t) = r?;
        values.push(v);
        cpu += t;
    }
    let (mean, variance) = mean_and_variance(&values);
    Ok(CellResult {
        sampler,
        count,
        reps: config.reps,
        mean,
        variance,
        cpu_seconds: cpu,
        wall_seconds: wall.elapsed().as_secs_f64(),
        efficiency: efficiency(variance, cpu),
    })
}

/// Path of the order table written next to `results`.
pub fn orders_path(results: &Path) -> PathBuf {
    results.with_file_name("orders.csv")
}

/// Writes the per-cell table to `path` and the fitted orders to `orders.csv`
/// in the same directory.
pub fn emit_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_results(report, &mut out)?;
    out.flush()?;
    let mut out = BufWriter::new(File::create(orders_path(path))?);
    write_orders(report, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_results<W: Write>(report: &ConvergenceReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for c in &report.cells {
        let eff = c.efficiency.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            report.experiment, c.sampler, c.count, c.reps, c.mean, c.variance, c.cpu_seconds, eff
        )?;
    }
    Ok(())
}

pub fn write_orders<W: Write>(report: &ConvergenceReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ORDERS_HEADER}")?;
    for o in &report.orders {
        writeln!(
            out,
            "{},{},{},{}",
            report.experiment, o.sampler, o.order, o.intercept
        )?;
    }
    Ok(())
}

/// Reads back a results table written by [`write_results`].
pub fn parse_results(text: &str) -> Result<Vec<CellResult>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::Precondition("missing results header".into()));
    }
    let bad = |line: &str| Error::Precondition(format!("malformed row `{line}`"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            Ok(CellResult {
                sampler: f[1].parse()?,
                count: f[2].parse().map_err(|_| bad(line))?,
                reps: f[3].parse().map_err(|_| bad(line))?,
                mean: num(f[4])?,
                variance: num(f[5])?,
                cpu_seconds: num(f[6])?,
                wall_seconds: 0.0,
                efficiency: if f[7].is_empty() {
                    None
                } else {
                    Some(num(f[7])?)
                },
            })
        })
        .collect()
}
