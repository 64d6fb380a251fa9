//! Indicator integrals over the unit hypercube.
//!
//! All four samplers share the same estimator: the fraction of points that
//! fall inside the domain. This module also carries the reference values used
//! to judge them: exact and brute-force measures, the published variance
//! bounds for SMC and Sudoku sampling, and the exact variance of the Latin
//! hypercube estimator when the domain is an axis-aligned interval.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::{PointSet, SamplerKind};

/// Axis-aligned box `prod [lower_i, upper_i)` inside the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperInterval {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperInterval {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config(
                "interval needs matching, non-empty lower and upper bounds".into(),
            ));
        }
        for (a, b) in lower.iter().zip(&upper) {
            if !(0.0 <= *a && a <= b && *b <= 1.0) {
                return Err(Error::Config(format!(
                    "interval side [{a}, {b}) is not inside [0, 1]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole cube `[0, 1)^s`.
    pub fn unit(s: usize) -> Self {
        Self {
            lower: vec![0.0; s],
            upper: vec![1.0; s],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&a, &b))| a <= v && v < b)
    }
}

pub type BoundaryFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type MembershipFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// The region below the graph of `f` along one axis:
/// `{ u : u[axis] < f(u without u[axis]) }`, with `f` valued in `[0, 1]`.
#[derive(Clone)]
pub struct Subgraph {
    dim: usize,
    axis: usize,
    f: BoundaryFn,
    /// Hardy–Krause variation of `f`, when known.
    pub variation: Option<f64>,
    /// Lipschitz constant (max norm) valid for a representation of the domain
    /// along every axis, when known.
    pub lipschitz: Option<f64>,
}

impl Subgraph {
    pub fn new(dim: usize, axis: usize, f: BoundaryFn) -> Result<Self> {
        if dim < 2 || axis >= dim {
            return Err(Error::Config(format!(
                "subgraph needs dim >= 2 and axis < dim (dim={dim}, axis={axis})"
            )));
        }
        Ok(Self {
            dim,
            axis,
            f,
            variation: None,
            lipschitz: None,
        })
    }

    pub fn with_variation(mut self, v: f64) -> Self {
        self.variation = Some(v);
        self
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        self.lipschitz = Some(k);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn boundary(&self, rest: &[f64]) -> f64 {
        (self.f)(rest)
    }

    /// `scratch` must hold `dim - 1` values.
    #[inline]
    fn contains_with(&self, x: &[f64], scratch: &mut [f64]) -> bool {
        let mut j = 0;
        for (i, &v) in x.iter().enumerate() {
            if i != self.axis {
                scratch[j] = v;
                j += 1;
            }
        }
        x[self.axis] < (self.f)(scratch)
    }
}

impl fmt::Debug for Subgraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subgraph")
            .field("dim", &self.dim)
            .field("axis", &self.axis)
            .field("variation", &self.variation)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
pub struct Predicate {
    dim: usize,
    test: MembershipFn,
}

impl Predicate {
    pub fn new(dim: usize, test: MembershipFn) -> Self {
        Self { dim, test }
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predicate")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// A measurable subset of `[0, 1)^s` whose indicator is integrated.
#[derive(Clone, Debug)]
pub enum IndicatorDomain {
    Interval(HyperInterval),
    Subgraph(Subgraph),
    Predicate(Predicate),
}

impl IndicatorDomain {
    pub fn dim(&self) -> usize {
        match self {
            IndicatorDomain::Interval(i) => i.dim(),
            IndicatorDomain::Subgraph(g) => g.dim,
            IndicatorDomain::Predicate(p) => p.dim,
        }
    }

    /// Triangle `{u_2 < u_1}` in the unit square (measure 1/2, `V(f) = 1`).
    pub fn triangle() -> Self {
        let g = Subgraph::new(2, 1, Arc::new(|u: &[f64]| u[0]))
            .expect("valid subgraph")
            .with_variation(1.0);
        IndicatorDomain::Subgraph(g)
    }

    /// Triangle `{u_1 + u_2 < 1}` (measure 1/2). It is the subgraph of
    /// `1 - u` along either axis, so it has `V(f) = 1` and Lipschitz constant 1
    /// for both axis representations.
    pub fn anti_triangle() -> Self {
        let g = Subgraph::new(2, 1, Arc::new(|u: &[f64]| 1.0 - u[0]))
            .expect("valid subgraph")
            .with_variation(1.0)
            .with_lipschitz(1.0);
        IndicatorDomain::Subgraph(g)
    }

    /// Exact measure, when one is available without quadrature.
    pub fn exact_measure(&self) -> Option<f64> {
        match self {
            IndicatorDomain::Interval(i) => Some(interval_measure(i)),
            _ => None,
        }
    }
}

/// Result of one indicator estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub points_used: usize,
    pub sampler: SamplerKind,
}

/// Fraction of the points of `ps` inside `domain`.
pub fn estimate(domain: &IndicatorDomain, ps: &PointSet) -> Result<EstimateResult> {
    if domain.dim() != ps.dim() {
        return Err(Error::Precondition(format!(
            "domain has dimension {}, point set has dimension {}",
            domain.dim(),
            ps.dim()
        )));
    }
    if ps.is_empty() {
        return Err(Error::Precondition("empty point set".into()));
    }
    let inside = match domain {
        IndicatorDomain::Interval(i) => ps.points().filter(|p| i.contains(p)).count(),
        IndicatorDomain::Subgraph(g) => {
            let mut scratch = vec![0.0; g.dim - 1];
            ps.points()
                .filter(|p| g.contains_with(p, &mut scratch))
                .count()
        }
        IndicatorDomain::Predicate(pred) => ps.points().filter(|p| (pred.test)(p)).count(),
    };
    Ok(EstimateResult {
        value: inside as f64 / ps.len() as f64,
        points_used: ps.len(),
        sampler: ps.sampler(),
    })
}

pub fn interval_measure(domain: &HyperInterval) -> f64 {
    domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(a, b)| b - a)
        .product()
}

/// Midpoint-rule measure of a subgraph on a `grid^(s-1)` lattice.
pub fn subgraph_measure_oracle(domain: &Subgraph, grid: usize) -> Result<f64> {
    if grid < 2 {
        return Err(Error::Config(
            "oracle grid resolution must be at least 2".into(),
        ));
    }
    let m = domain.dim - 1;
    let total = crate::sampling::checked_pow(grid, m)?;
    let h = 1.0 / grid as f64;
    let mut idx = vec![0usize; m];
    let mut mid = vec![0.0; m];
    let mut sum = 0.0;
    for _ in 0..total {
        for (x, &i) in mid.iter_mut().zip(&idx) {
            *x = (i as f64 + 0.5) * h;
        }
        sum += domain.boundary(&mid).clamp(0.0, 1.0);
        for d in idx.iter_mut().rev() {
            *d += 1;
            if *d < grid {
                break;
            }
            *d = 0;
        }
    }
    Ok(sum / total as f64)
}

/// Variance of the plain Monte Carlo indicator estimate, `lambda (1 - lambda) / N`.
pub fn mc_indicator_variance(measure: f64, count: usize) -> f64 {
    measure * (1.0 - measure) / count as f64
}

/// Upper bound on the SMC variance for a subgraph domain with Hardy–Krause
/// variation `variation`: `((s-1)/4 V + 1/2) N^(-1-1/s)`.
pub fn smc_variance_bound(variation: f64, s: usize, count: usize) -> f64 {
    let s_f = s as f64;
    ((s_f - 1.0) / 4.0 * variation + 0.5) * (count as f64).powf(-1.0 - 1.0 / s_f)
}

/// Upper bound on the Sudoku-sampling variance for a domain whose boundary is
/// Lipschitz with constant `kappa` along every axis:
/// `((kappa+2)/4 + 2 s (kappa+2)^2) N^(-1-1/s)`.
pub fn ss_variance_bound(kappa: f64, s: usize, count: usize) -> f64 {
    let s_f = s as f64;
    let k2 = kappa + 2.0;
    (k2 / 4.0 + 2.0 * s_f * k2 * k2) * (count as f64).powf(-1.0 - 1.0 / s_f)
}

/// How one side of an interval sits on the grid of `N` cells: `full` whole
/// cells plus fractional pieces (in cell units) below and above them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellProfile {
    pub full: i64,
    pub below: f64,
    pub above: f64,
}

impl CellProfile {
    /// Side length in cell units.
    pub fn length(&self) -> f64 {
        self.full as f64 + self.below + self.above
    }
}

/// Splits `[a, b)` at the `N`-cell grid.
///
/// The lower end is `(m - 1 - below)/N` and the upper end
/// `(m - 1 + full + above)/N`; an endpoint on a grid line gets a zero
/// fractional part. A side that crosses no grid line collapses to
/// `full = 0, below = length, above = 0`, which has the same overlap profile.
pub fn decompose_side(a: f64, b: f64, count: usize) -> CellProfile {
    let n = count as f64;
    let (lo, hi) = (a * n, b * n);
    let first_line = lo.ceil();
    let last_line = hi.floor();
    if first_line > last_line {
        return CellProfile {
            full: 0,
            below: hi - lo,
            above: 0.0,
        };
    }
    CellProfile {
        full: (last_line - first_line) as i64,
        below: first_line - lo,
        above: hi - last_line,
    }
}

/// Covariance of `1_A(W_k)` and `1_A(W_k')`, `k != k'`, for a Latin hypercube
/// of `N >= 3` points and an interval `A`.
///
/// With each side decomposed as `n_i` full cells plus fractions `x-`, `x+`:
///
/// ```text
/// (N^2 (N-1))^s cov = prod_i N (n_i (n_i + x- + x+ - 1) + (n_i + x-) x+ + (n_i + x+) x-)
///                   - prod_i (N-1) (n_i + x- + x+)^2
/// ```
pub fn lhs_interval_cov_exact(domain: &HyperInterval, count: usize) -> Result<f64> {
    if count < 3 {
        return Err(Error::OutOfScope(format!(
            "the exact LHS covariance needs N >= 3, got {count}"
        )));
    }
    let n = count as f64;
    let mut cross = 1.0;
    let mut square = 1.0;
    for (&a, &b) in domain.lower.iter().zip(&domain.upper) {
        let p = decompose_side(a, b, count);
        let (full, lo, hi) = (p.full as f64, p.below, p.above);
        cross *= n * (full * (full + lo + hi - 1.0) + (full + lo) * hi + (full + hi) * lo);
        square *= (n - 1.0) * p.length().powi(2);
    }
    let s = domain.dim() as i32;
    Ok((cross - square) / (n * n * (n - 1.0)).powi(s))
}

/// Exact variance of the LHS estimate of an interval's measure:
/// `lambda (1 - lambda) / N + (N - 1)/N cov`.
pub fn lhs_interval_variance_exact(domain: &HyperInterval, count: usize) -> Result<f64> {
    let cov = lhs_interval_cov_exact(domain, count)?;
    let lambda = interval_measure(domain);
    let n = count as f64;
    Ok(lambda * (1.0 - lambda) / n + (n - 1.0) / n * cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;
    use crate::sampling::{lhs_sample, smc_sample};
    use approx::assert_relative_eq;

    fn interval(lo: &[f64], hi: &[f64]) -> HyperInterval {
        HyperInterval::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    /// Independent route: `N^s/(N-1)^s prod_i (L_i^2 - Q_i) - lambda^2`, with
    /// `Q_i` the sum of squared cell overlaps on side `i`.
    fn cov_by_overlaps(domain: &HyperInterval, count: usize) -> f64 {
        let n = count as f64;
        let mut prod = 1.0;
        let mut lambda = 1.0;
        for (&a, &b) in domain.lower().iter().zip(domain.upper()) {
            let overlaps: Vec<f64> = (0..count)
                .map(|j| {
                    let (lo, hi) = (j as f64 / n, (j + 1) as f64 / n);
                    (b.min(hi) - a.max(lo)).max(0.0)
                })
                .collect();
            let mut off_diag = 0.0;
            for (j, x) in overlaps.iter().enumerate() {
                for (k, y) in overlaps.iter().enumerate() {
                    if j != k {
                        off_diag += x * y;
                    }
                }
            }
            prod *= off_diag;
            lambda *= b - a;
        }
        (n / (n - 1.0)).powi(domain.dim() as i32) * prod - lambda * lambda
    }

    #[test]
    fn whole_cube_and_empty() {
        let ps = smc_sample(3, 4, &mut SeededStream::new(1)).unwrap();
        let whole = IndicatorDomain::Interval(HyperInterval::unit(3));
        assert_eq!(estimate(&whole, &ps).unwrap().value, 1.0);
        let empty = IndicatorDomain::Interval(interval(&[0.3, 0.0, 0.0], &[0.3, 1.0, 1.0]));
        assert_eq!(estimate(&empty, &ps).unwrap().value, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let ps = smc_sample(3, 2, &mut SeededStream::new(1)).unwrap();
        assert!(matches!(
            estimate(&IndicatorDomain::triangle(), &ps),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn triangle_smc_unbiased() {
        let domain = IndicatorDomain::triangle();
        let reps = 100;
        let values: Vec<f64> = (0..reps)
            .map(|seed| {
                let ps = smc_sample(2, 32, &mut SeededStream::new(seed)).unwrap();
                estimate(&domain, &ps).unwrap().value
            })
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - 0.5).abs() < 4.0 * se.max(1e-12),
            "mean {mean} se {se}"
        );
    }

    #[test]
    fn measures() {
        assert_eq!(interval_measure(&HyperInterval::unit(2)), 1.0);
        assert_eq!(
            interval_measure(&interval(&[0.25, 0.0], &[0.75, 0.5])),
            0.25
        );
        assert_eq!(interval_measure(&interval(&[0.4, 0.0], &[0.4, 1.0])), 0.0);
        assert!(HyperInterval::new(vec![0.5], vec![0.2]).is_err());
        assert!(HyperInterval::new(vec![0.0], vec![1.5]).is_err());
    }

    #[test]
    fn midpoint_oracle() {
        let half = Subgraph::new(2, 1, Arc::new(|_: &[f64]| 0.5)).unwrap();
        assert_eq!(subgraph_measure_oracle(&half, 7).unwrap(), 0.5);
        let lin = Subgraph::new(2, 1, Arc::new(|u: &[f64]| u[0])).unwrap();
        assert!((subgraph_measure_oracle(&lin, 10_000).unwrap() - 0.5).abs() < 1e-8);
        let sq = Subgraph::new(2, 1, Arc::new(|u: &[f64]| u[0] * u[0])).unwrap();
        assert!((subgraph_measure_oracle(&sq, 10_000).unwrap() - 1.0 / 3.0).abs() < 1e-8);
        assert!(subgraph_measure_oracle(&sq, 1).is_err());
    }

    #[test]
    fn bounds_arithmetic() {
        assert_relative_eq!(smc_variance_bound(1.0, 2, 4), 0.09375, max_relative = 1e-15);
        assert_relative_eq!(
            smc_variance_bound(0.0, 1, 16),
            1.0 / 512.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            ss_variance_bound(1.0, 2, 100),
            0.03675,
            max_relative = 1e-13
        );
        assert_relative_eq!(ss_variance_bound(0.0, 1, 4), 0.53125, max_relative = 1e-15);
        for s in 1..5 {
            let mut prev = f64::INFINITY;
            for n in [4, 16, 64, 256] {
                let b = smc_variance_bound(2.0, s, n);
                assert!(b >= 0.0 && b < prev);
                prev = b;
            }
            assert!(ss_variance_bound(0.5, s, 64) < ss_variance_bound(1.5, s, 64));
        }
    }

    #[test]
    fn decompose_grid_aligned() {
        let p = decompose_side(0.0, 0.5, 4);
        assert_eq!(
            p,
            CellProfile {
                full: 2,
                below: 0.0,
                above: 0.0
            }
        );
        let p = decompose_side(0.1, 0.6, 5);
        assert_eq!(p.full, 2);
        assert_relative_eq!(p.below, 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.above, 0.0, epsilon = 1e-12);
        let p = decompose_side(0.1, 0.15, 4);
        assert_eq!(p.full, 0);
        assert_relative_eq!(p.length(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn cov_half_interval() {
        let a = interval(&[0.0], &[0.5]);
        assert_relative_eq!(
            lhs_interval_cov_exact(&a, 4).unwrap(),
            -1.0 / 12.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            lhs_interval_variance_exact(&a, 4).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        for n in [6, 10, 20] {
            assert!(lhs_interval_variance_exact(&a, n).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn cov_empty_is_zero() {
        for (lo, hi) in [(0.3, 0.3), (0.25, 0.25), (0.0, 0.0)] {
            let a = interval(&[lo, 0.1], &[hi, 0.9]);
            assert!(lhs_interval_cov_exact(&a, 7).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn cov_small_n_rejected() {
        let a = interval(&[0.0], &[0.5]);
        assert!(matches!(
            lhs_interval_cov_exact(&a, 2),
            Err(Error::OutOfScope(_))
        ));
    }

    #[test]
    fn cov_matches_overlap_route() {
        let a = interval(&[0.1, 0.2], &[0.6, 0.9]);
        let exact = lhs_interval_cov_exact(&a, 5).unwrap();
        assert_relative_eq!(exact, -0.0325, epsilon = 1e-12);
        let mut stream = SeededStream::new(99);
        for s in 1..=3 {
            for n in [3usize, 4, 5, 7, 10, 20] {
                for _ in 0..20 {
                    let mut lo = Vec::new();
                    let mut hi = Vec::new();
                    for _ in 0..s {
                        let (x, y) = (stream.next_f64(), stream.next_f64());
                        lo.push(x.min(y));
                        hi.push(x.max(y));
                    }
                    let a = interval(&lo, &hi);
                    let fast = lhs_interval_cov_exact(&a, n).unwrap();
                    let slow = cov_by_overlaps(&a, n);
                    assert!((fast - slow).abs() < 1e-12, "s={s} n={n} {fast} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn exact_variance_s2_n7() {
        let a = interval(&[0.0, 0.0], &[0.3, 0.4]);
        assert_relative_eq!(
            lhs_interval_variance_exact(&a, 7).unwrap(),
            0.008806997084548109,
            max_relative = 1e-12
        );
        // Empirical check with a modest replication count.
        let reps = 20_000;
        let domain = IndicatorDomain::Interval(a.clone());
        let mut stream = SeededStream::new(5);
        let vals: Vec<f64> = (0..reps)
            .map(|_| {
                estimate(&domain, &lhs_sample(2, 7, &mut stream).unwrap())
                    .unwrap()
                    .value
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let m4 = vals.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / reps as f64;
        let se = ((m4 - var * var) / reps as f64).sqrt();
        let exact = lhs_interval_variance_exact(&a, 7).unwrap();
        assert!((var - exact).abs() < 4.0 * se, "{var} vs {exact} (se {se})");
    }
}
