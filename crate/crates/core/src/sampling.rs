//! Point sets in the half-open unit hypercube `[0, 1)^s`.
//!
//! Four constructions are provided:
//!
//! * plain Monte Carlo: `N` independent uniform points;
//! * simple stratification (SMC): one uniform point in each of the `n^s`
//!   subcubes of side `1/n`;
//! * Latin hypercube (LHS): on every axis, each of the `N` cells of width `1/N`
//!   holds exactly one projection;
//! * Sudoku sampling (SS): both of the above at once for `N = n^s`.
//!
//! Multi-indices `l = (l_1, .., l_s)` over `{0..n-1}^s` are linearized
//! lexicographically with the last index varying fastest. Points are stored
//! flat, `dim` coordinates per point, in that order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeededStream;

/// Which construction produced a point set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Mc,
    Smc,
    Lhs,
    Ss,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::Mc,
        SamplerKind::Lhs,
        SamplerKind::Smc,
        SamplerKind::Ss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Mc => "mc",
            SamplerKind::Smc => "smc",
            SamplerKind::Lhs => "lhs",
            SamplerKind::Ss => "ss",
        }
    }

    /// SMC and SS need `N = n^s`; MC and LHS accept any count.
    pub fn needs_power_count(self) -> bool {
        matches!(self, SamplerKind::Smc | SamplerKind::Ss)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mc" => Ok(SamplerKind::Mc),
            "smc" => Ok(SamplerKind::Smc),
            "lhs" => Ok(SamplerKind::Lhs),
            "ss" | "sudoku" => Ok(SamplerKind::Ss),
            other => Err(Error::Config(format!("unknown sampler `{other}`"))),
        }
    }
}

/// `N` points of dimension `dim`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    sampler: SamplerKind,
    base: Option<usize>,
}

impl PointSet {
    /// Wraps raw coordinates. Fails if a coordinate is outside `[0, 1)` or the
    /// buffer is not a whole number of points.
    pub fn from_coords(dim: usize, coords: Vec<f64>, sampler: SamplerKind) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !(0.0..1.0).contains(*c)) {
            return Err(Error::Precondition(format!(
                "coordinate {bad} outside [0, 1)"
            )));
        }
        Ok(Self {
            dim,
            coords,
            sampler,
            base: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    /// Stratification base `n` (SMC and SS only).
    pub fn base(&self) -> Option<usize> {
        self.base
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// One row per point, comma separated, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|c| format!("{c:.16e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `base^exp`, or a configuration error on overflow.
pub fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or_else(|| Error::Config(format!("{base}^{exp} overflows the point count")))
}

/// Exact integer `k`-th root of `value`, if it has one.
pub fn exact_root(value: usize, k: usize) -> Option<usize> {
    if k == 0 {
        return None;
    }
    if k == 1 {
        return Some(value);
    }
    let guess = (value as f64).powf(1.0 / k as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&r| checked_pow(r, k).ok() == Some(value))
}

/// Index of the cell of width `1/cells` containing `x`, i.e. `floor(x * cells)`.
///
/// Every generator and every checker in the crate goes through this function,
/// so cell membership is decided by one floating-point rule.
#[inline]
pub fn cell_index(x: f64, cells: usize) -> usize {
    (x * cells as f64) as usize
}

/// Uniform point of cell `cell` at resolution `cells`, given `u` in `[0, 1)`.
#[inline]
fn point_in_cell(cell: usize, u: f64, cells: usize) -> f64 {
    let mut x = (cell as f64 + u) / cells as f64;
    // Rounding of (cell + u) can land on the next grid line.
    while cell_index(x, cells) > cell {
        x = x.next_down();
    }
    while cell_index(x, cells) < cell {
        x = x.next_up();
    }
    x
}

fn check_dim(s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    Ok(())
}

/// `count` i.i.d. uniform points; consumes exactly `count * s` draws.
pub fn mc_sample(s: usize, count: usize, stream: &mut SeededStream) -> Result<PointSet> {
    check_dim(s)?;
    if count == 0 {
        return Err(Error::Config("point count must be at least 1".into()));
    }
    let total = count
        .checked_mul(s)
        .ok_or_else(|| Error::Config("point count overflows".into()))?;
    let coords = (0..total).map(|_| stream.next_f64()).collect();
    Ok(PointSet {
        dim: s,
        coords,
        sampler: SamplerKind::Mc,
        base: None,
    })
}

/// One uniform point in each subcube of side `1/n`; point `l` lies in subcube `l`.
pub fn smc_sample(s: usize, n: usize, stream: &mut SeededStream) -> Result<PointSet> {
    check_dim(s)?;
    if n == 0 {
        return Err(Error::Config(
            "stratification base must be at least 1".into(),
        ));
    }
    let count = checked_pow(n, s)?;
    let mut coords = Vec::with_capacity(count * s);
    let mut digits = vec![0usize; s];
    for _ in 0..count {
        for &d in &digits {
            coords.push(point_in_cell(d, stream.next_f64(), n));
        }
        increment_digits(&mut digits, n);
    }
    Ok(PointSet {
        dim: s,
        coords,
        sampler: SamplerKind::Smc,
        base: Some(n),
    })
}

/// Latin hypercube of `count` points.
///
/// Draws `s` Fisher–Yates permutations of the cells first, then `count * s`
/// uniforms in point order.
pub fn lhs_sample(s: usize, count: usize, stream: &mut SeededStream) -> Result<PointSet> {
    check_dim(s)?;
    if count == 0 {
        return Err(Error::Config("point count must be at least 1".into()));
    }
    let perms: Vec<Vec<usize>> = (0..s)
        .map(|_| {
            let mut p: Vec<usize> = (0..count).collect();
            p.shuffle(stream);
            p
        })
        .collect();
    let mut coords = Vec::with_capacity(count * s);
    for k in 0..count {
        for perm in &perms {
            coords.push(point_in_cell(perm[k], stream.next_f64(), count));
        }
    }
    Ok(PointSet {
        dim: s,
        coords,
        sampler: SamplerKind::Lhs,
        base: None,
    })
}

/// The `s` random bijections used by Sudoku sampling.
///
/// `map(i, j)` is the image of the `j`-th multi-index of `{0..n-1}^(s-1)`
/// (lexicographic order) under the bijection of axis `i`. Everything here is
/// zero-based: images lie in `0..n^(s-1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SudokuBijections {
    n: usize,
    s: usize,
    maps: Vec<Vec<usize>>,
}

impl SudokuBijections {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    /// Size of each bijection's domain, `n^(s-1)`.
    pub fn domain_len(&self) -> usize {
        self.maps.first().map_or(1, Vec::len)
    }

    #[inline]
    pub fn map(&self, axis: usize, index: usize) -> usize {
        self.maps[axis][index]
    }

    pub fn as_slices(&self) -> impl Iterator<Item = &[usize]> {
        self.maps.iter().map(Vec::as_slice)
    }

    /// True when every map hits each of `0..n^(s-1)` exactly once.
    pub fn is_bijective(&self) -> bool {
        let m = self.domain_len();
        self.maps.iter().all(|map| {
            let mut seen = vec![false; m];
            map.len() == m
                && map
                    .iter()
                    .all(|&v| v < m && !std::mem::replace(&mut seen[v], true))
        })
    }
}

/// `s` independent uniform bijections `{0..n-1}^(s-1) -> {0..n^(s-1)-1}`.
pub fn random_bijection(n: usize, s: usize, stream: &mut SeededStream) -> Result<SudokuBijections> {
    check_dim(s)?;
    if n == 0 {
        return Err(Error::Config(
            "stratification base must be at least 1".into(),
        ));
    }
    let m = checked_pow(n, s - 1)?;
    let maps = (0..s)
        .map(|_| {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(stream);
            p
        })
        .collect();
    Ok(SudokuBijections { n, s, maps })
}

/// Sudoku sample of `n^s` points.
///
/// Coordinate `i` of point `l` lies in the cell of width `1/N` numbered
/// `l_i * n^(s-1) + sigma_i(l without l_i)`. The bijections come from a
/// stream split off `stream`; the uniforms are drawn from `stream` afterwards.
/// For `s = 1` this is a Latin hypercube with `N = n`.
pub fn sudoku_sample(s: usize, n: usize, stream: &mut SeededStream) -> Result<PointSet> {
    check_dim(s)?;
    if n < 2 {
        return Err(Error::Config("Sudoku sampling needs a base n >= 2".into()));
    }
    if s == 1 {
        let mut ps = lhs_sample(1, n, stream)?;
        ps.sampler = SamplerKind::Ss;
        ps.base = Some(n);
        return Ok(ps);
    }
    let count = checked_pow(n, s)?;
    let per_slab = count / n;
    let mut bij_stream = stream.split();
    let sigma = random_bijection(n, s, &mut bij_stream)?;

    let strides: Vec<usize> = (0..s).map(|i| n.pow((s - 1 - i) as u32)).collect();
    let mut coords = Vec::with_capacity(count * s);
    for l in 0..count {
        for (axis, &stride) in strides.iter().enumerate() {
            let digit = (l / stride) % n;
            let hat = (l / (stride * n)) * stride + l % stride;
            let cell = digit * per_slab + sigma.map(axis, hat);
            coords.push(point_in_cell(cell, stream.next_f64(), count));
        }
    }
    Ok(PointSet {
        dim: s,
        coords,
        sampler: SamplerKind::Ss,
        base: Some(n),
    })
}

/// Draws a point set of `base^s` points with the given construction.
pub fn sample(
    kind: SamplerKind,
    s: usize,
    base: usize,
    stream: &mut SeededStream,
) -> Result<PointSet> {
    match kind {
        SamplerKind::Mc => mc_sample(s, checked_pow(base, s)?, stream),
        SamplerKind::Lhs => lhs_sample(s, checked_pow(base, s)?, stream),
        SamplerKind::Smc => smc_sample(s, base, stream),
        SamplerKind::Ss => sudoku_sample(s, base, stream),
    }
}

/// Draws a point set of exactly `count` points; SMC and SS require `count = n^s`.
pub fn sample_count(
    kind: SamplerKind,
    s: usize,
    count: usize,
    stream: &mut SeededStream,
) -> Result<PointSet> {
    match kind {
        SamplerKind::Mc => mc_sample(s, count, stream),
        SamplerKind::Lhs => lhs_sample(s, count, stream),
        SamplerKind::Smc | SamplerKind::Ss => {
            let n = exact_root(count, s)
                .ok_or_else(|| Error::Config(format!("{kind} needs N = n^{s}, got N = {count}")))?;
            sample(kind, s, n, stream)
        }
    }
}

/// Exactly one point in every subcube of side `1/n`.
pub fn smc_occupancy_ok(ps: &PointSet, n: usize) -> bool {
    let Ok(count) = checked_pow(n, ps.dim) else {
        return false;
    };
    if ps.len() != count {
        return false;
    }
    let mut hits = vec![false; count];
    ps.points().all(|p| {
        let cell = p.iter().fold(0usize, |acc, &x| acc * n + cell_index(x, n));
        cell < count && !std::mem::replace(&mut hits[cell], true)
    })
}

/// On every axis, exactly one projection in each cell of width `1/N`.
pub fn lhs_marginals_ok(ps: &PointSet) -> bool {
    let count = ps.len();
    (0..ps.dim).all(|axis| {
        let mut hits = vec![false; count];
        ps.points().all(|p| {
            let cell = cell_index(p[axis], count);
            cell < count && !std::mem::replace(&mut hits[cell], true)
        })
    })
}

/// Property P: one point per subcube of side `1/n` and one projection per
/// axis cell of width `1/N`. Errors if `N != n^s`.
pub fn verify_property_p(ps: &PointSet, n: usize) -> Result<bool> {
    let count = checked_pow(n, ps.dim)?;
    if ps.len() != count {
        return Err(Error::Precondition(format!(
            "point set has {} points, expected n^s = {count}",
            ps.len()
        )));
    }
    Ok(smc_occupancy_ok(ps, n) && lhs_marginals_ok(ps))
}

/// Advances a little-endian-last odometer over `{0..n-1}^s`.
fn increment_digits(digits: &mut [usize], n: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < n {
            return;
        }
        *d = 0;
    }
}
