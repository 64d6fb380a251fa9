//! Black–Scholes chains for European and geometric-average Asian calls.
//!
//! Prices follow geometric Brownian motion under the risk-neutral measure,
//! advanced exactly on each observation interval:
//! `S' = S exp((r - sigma^2/2) dt + sigma sqrt(dt) z)`, with `z = Phi^-1(u)`
//! so that one transition consumes exactly one uniform.

use crate::chain::{Ensemble, MarkovModel};
use crate::error::{Error, Result};
use crate::rng::SeededStream;

/// Smallest and largest uniforms fed to the inverse CDF.
const U_MIN: f64 = f64::MIN_POSITIVE;
const U_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard normal quantile `Phi^-1(u)`.
///
/// Wichura's AS 241 rational approximations (about 1e-16 relative error).
/// Inputs outside `(0, 1)` are clamped to the nearest representable interior
/// value.
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
pub fn normal_inverse_cdf(u: f64) -> f64 {
    let p = if u.is_nan() {
        0.5
    } else {
        u.clamp(U_MIN, U_MAX)
    };
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r
            + 67265.770927008700853)
            * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r
            + 39307.89580009271061)
            * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
            + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
            + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Market and discretization parameters of a GBM chain.
#[derive(Clone, Debug, PartialEq)]
pub struct GbmParams {
    pub s0: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
    /// Observation intervals `dt_1..dt_P`, summing to the maturity.
    pub dt: Vec<f64>,
}

impl GbmParams {
    /// `steps` equal intervals of `maturity / steps`.
    pub fn uniform(s0: f64, rate: f64, sigma: f64, maturity: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("need at least one observation time".into()));
        }
        let dt = vec![maturity / steps as f64; steps];
        Self::with_intervals(s0, rate, sigma, maturity, dt)
    }

    pub fn with_intervals(
        s0: f64,
        rate: f64,
        sigma: f64,
        maturity: f64,
        dt: Vec<f64>,
    ) -> Result<Self> {
        if !(s0 > 0.0) || !(sigma >= 0.0) || !(maturity > 0.0) || !rate.is_finite() {
            return Err(Error::Config(format!(
                "invalid GBM parameters: s0={s0}, r={rate}, sigma={sigma}, T={maturity}"
            )));
        }
        if dt.is_empty() || dt.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config(
                "observation intervals must be positive".into(),
            ));
        }
        let total: f64 = dt.iter().sum();
        if (total - maturity).abs() > 1e-9 * maturity {
            return Err(Error::Config(format!(
                "observation intervals sum to {total}, maturity is {maturity}"
            )));
        }
        Ok(Self {
            s0,
            rate,
            sigma,
            maturity,
            dt,
        })
    }

    /// European experiment: `S0=100, r=0.06, sigma=0.2, T=1, P=100`.
    pub fn european_default() -> Self {
        Self::uniform(100.0, 0.06, 0.2, 1.0, 100).expect("valid defaults")
    }

    /// Asian experiment: `S0=100, r=log10(1.09), sigma=0.2, T=240/365, P=10`.
    pub fn asian_default() -> Self {
        Self::uniform(100.0, ASIAN_DEFAULT_RATE, 0.2, 240.0 / 365.0, 10).expect("valid defaults")
    }

    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.maturity / self.steps() as f64;
        self.dt.iter().all(|&d| (d - h).abs() <= 1e-12 * h)
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }
}

/// Rate of the Asian experiment, `log10(1.09)`.
pub const ASIAN_DEFAULT_RATE: f64 = 0.037_426_497_940_623_67;
/// `ln(1.09)`, the natural-log reading of the Asian rate.
pub const ASIAN_LN_RATE: f64 = 0.086_177_696_241_052_41;
/// Strike used by both experiments.
pub const DEFAULT_STRIKE: f64 = 90.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptionStyle {
    European,
    AsianGeometric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptionSpec {
    pub strike: f64,
    pub style: OptionStyle,
}

impl OptionSpec {
    pub fn new(strike: f64, style: OptionStyle) -> Result<Self> {
        if !(strike >= 0.0) {
            return Err(Error::Config(format!("invalid strike {strike}")));
        }
        Ok(Self { strike, style })
    }
}

/// One exact GBM step over `dt` driven by the uniform `u`.
#[inline]
pub fn gbm_step(price: f64, dt: f64, u: f64, params: &GbmParams) -> f64 {
    let sigma = params.sigma;
    let drift = (params.rate - 0.5 * sigma * sigma) * dt;
    price * (drift + sigma * dt.sqrt() * normal_inverse_cdf(u)).exp()
}

/// Price chain `S_{t_p}`: `s = d = 1`, started at the point mass `S0`.
#[derive(Clone, Debug)]
pub struct EuropeanModel {
    pub params: GbmParams,
}

impl EuropeanModel {
    pub fn new(params: GbmParams) -> Self {
        Self { params }
    }
}

impl MarkovModel for EuropeanModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn driver_dim(&self) -> usize {
        1
    }

    fn initial_state(&self, _stream: &mut SeededStream, out: &mut [f64]) {
        out[0] = self.params.s0;
    }

    #[inline]
    fn transition(&self, step: usize, state: &[f64], driver: &[f64], out: &mut [f64]) {
        out[0] = gbm_step(state[0], self.params.dt[step], driver[0], &self.params);
    }
}

/// Chain `(S_{t_p}, (S_{t_1} ... S_{t_p})^(1/p))`: `s = 2, d = 1`, started at `(S0, 1)`.
///
/// The running geometric mean is advanced in log space,
/// `ln G' = (p ln G + ln S') / (p + 1)`; the first step sets `G' = S'`.
#[derive(Clone, Debug)]
pub struct AsianModel {
    pub params: GbmParams,
}

impl AsianModel {
    pub fn new(params: GbmParams) -> Self {
        Self { params }
    }
}

impl MarkovModel for AsianModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn driver_dim(&self) -> usize {
        1
    }

    fn initial_state(&self, _stream: &mut SeededStream, out: &mut [f64]) {
        out[0] = self.params.s0;
        out[1] = 1.0;
    }

    #[inline]
    fn transition(&self, step: usize, state: &[f64], driver: &[f64], out: &mut [f64]) {
        let price = gbm_step(state[0], self.params.dt[step], driver[0], &self.params);
        out[0] = price;
        out[1] = if step == 0 {
            price
        } else {
            let p = step as f64;
            ((p * state[1].ln() + price.ln()) / (p + 1.0)).exp()
        };
    }
}

pub fn european_model(params: &GbmParams) -> EuropeanModel {
    EuropeanModel::new(params.clone())
}

pub fn asian_model(params: &GbmParams) -> AsianModel {
    AsianModel::new(params.clone())
}

/// Value that enters the payoff: the price (European) or the running
/// geometric mean (Asian).
#[inline]
pub fn terminal_value(state: &[f64], style: OptionStyle) -> f64 {
    match style {
        OptionStyle::European => state[0],
        OptionStyle::AsianGeometric => state[1],
    }
}

/// `e^(-rT)` times the ensemble mean of `(terminal value - K)_+`.
pub fn discounted_payoff(e: &Ensemble, spec: &OptionSpec, params: &GbmParams) -> f64 {
    let k = spec.strike;
    let mean = e
        .states()
        .map(|x| (terminal_value(x, spec.style) - k).max(0.0))
        .sum::<f64>()
        / e.len() as f64;
    params.discount() * mean
}

/// Black–Scholes call price. With `sigma = 0` the discounted intrinsic value
/// of the forward is returned.
pub fn black_scholes_price(params: &GbmParams, strike: f64) -> f64 {
    let GbmParams {
        s0,
        rate,
        sigma,
        maturity,
        ..
    } = *params;
    let disc = (-rate * maturity).exp();
    if sigma == 0.0 {
        return (s0 * (rate * maturity).exp() - strike).max(0.0) * disc;
    }
    if strike <= 0.0 {
        return s0;
    }
    let vol = sigma * maturity.sqrt();
    let d1 = ((s0 / strike).ln() + (rate + 0.5 * sigma * sigma) * maturity) / vol;
    let d2 = d1 - vol;
    s0 * normal_cdf(d1) - strike * disc * normal_cdf(d2)
}

/// Closed form for the discretely monitored geometric-average Asian call with
/// equally spaced observations `t_p = pT/P`, `p = 1..P`.
///
/// `ln G` is normal with mean `ln S0 + (r - sigma^2/2) T (P+1)/(2P)` and
/// variance `sigma^2 T (P+1)(2P+1)/(6P^2)`.
pub fn geometric_asian_closed_form(params: &GbmParams, strike: f64) -> Result<f64> {
    if !params.is_uniform() {
        return Err(Error::OutOfScope(
            "the geometric Asian closed form needs equally spaced observations".into(),
        ));
    }
    let p = params.steps() as f64;
    let (r, sigma, t) = (params.rate, params.sigma, params.maturity);
    let mu = params.s0.ln() + (r - 0.5 * sigma * sigma) * t * (p + 1.0) / (2.0 * p);
    let var = sigma * sigma * t * (p + 1.0) * (2.0 * p + 1.0) / (6.0 * p * p);
    let disc = params.discount();
    if var == 0.0 {
        return Ok(disc * (mu.exp() - strike).max(0.0));
    }
    if strike <= 0.0 {
        return Ok(disc * (mu + 0.5 * var).exp());
    }
    let sd = var.sqrt();
    let d1 = (mu + var - strike.ln()) / sd;
    let d2 = d1 - sd;
    Ok(disc * ((mu + 0.5 * var).exp() * normal_cdf(d1) - strike * normal_cdf(d2)))
}
