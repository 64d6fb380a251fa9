//! Parallel simulation of `N` copies of a Markov chain.
//!
//! A chain evolves by `x_{p+1} = phi_{p+1}(x_p, u)` with `u` uniform on
//! `[0, 1)^d` and states in `R^s`. The stratified scheme keeps
//! `N = n^(s+d)` copies and advances them in two moves per step:
//!
//! 1. **relabel**: a nested sort giving each state a multi-index
//!    `m = (m_1, .., m_s)`, `m_i < n` for `i < s` and `m_s < n^(1+d)`;
//! 2. **transition**: draw an `(s+d)`-dimensional point set `w_l`; the first
//!    `s` coordinates pick the state `m(w'_l)` to move, the last `d` drive it.
//!
//! The plain Monte Carlo baseline ([`mc_run`]) moves each copy along its own
//! independent path instead.
//!
//! Labels are implicit: after [`relabel`], the state with multi-index `m`
//! sits at the lexicographic position of `m` in the flat state array.

use crate::error::{Error, Result};
use crate::rng::{SeededStream, Substreams};
use crate::sampling::{cell_index, checked_pow, sample, SamplerKind};

/// A discrete-time chain with state space in `R^s` driven by `d` uniforms per step.
pub trait MarkovModel: Sync {
    /// State dimension `s`.
    fn state_dim(&self) -> usize;
    /// Uniforms consumed per transition, `d`.
    fn driver_dim(&self) -> usize;
    /// Draws one state from the initial law into `out`.
    fn initial_state(&self, stream: &mut SeededStream, out: &mut [f64]);
    /// Writes `phi_{step+1}(state, driver)` into `out`.
    fn transition(&self, step: usize, state: &[f64], driver: &[f64], out: &mut [f64]);
}

type InitFn = Box<dyn Fn(&mut SeededStream, &mut [f64]) + Send + Sync>;
type StepFn = Box<dyn Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A [`MarkovModel`] assembled from closures.
pub struct FnModel {
    state_dim: usize,
    driver_dim: usize,
    init: InitFn,
    step: StepFn,
}

impl FnModel {
    pub fn new(
        state_dim: usize,
        driver_dim: usize,
        init: impl Fn(&mut SeededStream, &mut [f64]) + Send + Sync + 'static,
        step: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            driver_dim,
            init: Box::new(init),
            step: Box::new(step),
        }
    }
}

impl MarkovModel for FnModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    fn initial_state(&self, stream: &mut SeededStream, out: &mut [f64]) {
        (self.init)(stream, out)
    }

    fn transition(&self, step: usize, state: &[f64], driver: &[f64], out: &mut [f64]) {
        (self.step)(step, state, driver, out)
    }
}

/// The `N` chain states at step `p`, stored flat (`s` values per state).
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    base: Option<usize>,
    state_dim: usize,
    driver_dim: usize,
    states: Vec<f64>,
    step: usize,
}

impl Ensemble {
    /// Wraps explicit states as a stratified ensemble with base `n`.
    pub fn from_states(
        n: usize,
        state_dim: usize,
        driver_dim: usize,
        states: Vec<f64>,
    ) -> Result<Self> {
        let count = population(n, state_dim, driver_dim)?;
        if states.len() != count * state_dim {
            return Err(Error::Precondition(format!(
                "expected {count} states of dimension {state_dim}, got {} values",
                states.len()
            )));
        }
        Ok(Self {
            base: Some(n),
            state_dim,
            driver_dim,
            states,
            step: 0,
        })
    }

    /// Base `n`; `None` for a plain Monte Carlo ensemble of arbitrary size.
    pub fn base(&self) -> Option<usize> {
        self.base
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of transitions applied so far.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.state_dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }
}

/// `n^(s+d)`, checked.
pub fn population(n: usize, s: usize, d: usize) -> Result<usize> {
    if s == 0 || d == 0 {
        return Err(Error::Config(
            "state and driver dimensions must be >= 1".into(),
        ));
    }
    checked_pow(n, s + d)
}

/// Multi-index of a state: `m_i` in `0..n` for `i < s-1`, `m_s` in `0..n^(1+d)`.
/// Zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    /// Position of the labelled state in a relabelled ensemble.
    pub fn position(&self, n: usize, d: usize) -> usize {
        let last = n.pow(1 + d as u32);
        let (head, tail) = self.0.split_at(self.0.len() - 1);
        head.iter().fold(0usize, |acc, &m| acc * n + m) * last + tail[0]
    }
}

/// `m(u') = (floor(n u_1), .., floor(n u_{s-1}), floor(n^(1+d) u_s))`, zero-based.
pub fn state_selector(u: &[f64], n: usize, d: usize) -> MultiIndex {
    let last = n.pow(1 + d as u32);
    let s = u.len();
    let m = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cells = if i + 1 == s { last } else { n };
            cell_index(x, cells).min(cells - 1)
        })
        .collect();
    MultiIndex(m)
}

/// Flat position selected by `u'`; same as `state_selector(..).position(..)`.
#[inline]
fn selected_position(u: &[f64], n: usize, last: usize) -> usize {
    let (head, tail) = u.split_at(u.len() - 1);
    let hi = head
        .iter()
        .fold(0usize, |acc, &x| acc * n + cell_index(x, n).min(n - 1));
    hi * last + cell_index(tail[0], last).min(last - 1)
}

/// Draws `n^(s+d)` i.i.d. states from the model's initial law.
pub fn init_ensemble<M: MarkovModel + ?Sized>(
    model: &M,
    n: usize,
    stream: &mut SeededStream,
) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::Config(
            "the stratification base must be at least 2".into(),
        ));
    }
    let (s, d) = (model.state_dim(), model.driver_dim());
    let count = population(n, s, d)?;
    let mut states = vec![0.0; count * s];
    for chunk in states.chunks_exact_mut(s) {
        model.initial_state(stream, chunk);
    }
    Ok(Ensemble {
        base: Some(n),
        state_dim: s,
        driver_dim: d,
        states,
        step: 0,
    })
}

/// Nested sort: `n` batches of `N/n` ordered by coordinate 1, each split into
/// `n` batches of `N/n^2` ordered by coordinate 2, and so on, down to
/// batches of `n^(1+d)` ordered by coordinate `s`.
///
/// Every level is a stable sort, so ties keep their previous order.
pub fn relabel(e: &mut Ensemble) -> Result<()> {
    let n = e
        .base
        .ok_or_else(|| Error::Precondition("relabel needs a stratified ensemble".into()))?;
    let s = e.state_dim;
    let count = e.len();
    if count != population(n, s, e.driver_dim)? {
        return Err(Error::Precondition("ensemble size is not n^(s+d)".into()));
    }
    if s == 1 {
        // Equal f64 keys are indistinguishable, so an unstable sort is exact here.
        e.states.sort_unstable_by(f64::total_cmp);
        return Ok(());
    }
    let states = &e.states;
    let mut order: Vec<u32> = (0..count as u32).collect();
    let key = |k: u32, c: usize| states[k as usize * s + c];
    order.sort_by(|&a, &b| key(a, 0).total_cmp(&key(b, 0)));
    let mut batch = count;
    for coord in 1..s {
        batch /= n;
        for chunk in order.chunks_mut(batch) {
            chunk.sort_by(|&a, &b| key(a, coord).total_cmp(&key(b, coord)));
        }
    }
    let mut sorted = Vec::with_capacity(e.states.len());
    for &k in &order {
        sorted.extend_from_slice(e.state(k as usize));
    }
    e.states = sorted;
    Ok(())
}

/// One relabel-then-transition step with a point set of the chosen kind.
pub fn step<M: MarkovModel + ?Sized>(
    e: &mut Ensemble,
    model: &M,
    sampler: SamplerKind,
    stream: &mut SeededStream,
) -> Result<()> {
    advance(e, model, sampler, stream, None)
}

/// As [`step`], also returning for each new state `l` the position of the
/// old state it was moved from.
pub fn step_with_selection<M: MarkovModel + ?Sized>(
    e: &mut Ensemble,
    model: &M,
    sampler: SamplerKind,
    stream: &mut SeededStream,
) -> Result<Vec<usize>> {
    let mut selected = Vec::with_capacity(e.len());
    advance(e, model, sampler, stream, Some(&mut selected))?;
    Ok(selected)
}

fn advance<M: MarkovModel + ?Sized>(
    e: &mut Ensemble,
    model: &M,
    sampler: SamplerKind,
    stream: &mut SeededStream,
    mut selected: Option<&mut Vec<usize>>,
) -> Result<()> {
    let (s, d) = (model.state_dim(), model.driver_dim());
    if e.state_dim != s || e.driver_dim != d {
        return Err(Error::Config("ensemble and model dimensions differ".into()));
    }
    let n = e.base.ok_or_else(|| {
        Error::Config("stratified steps need an ensemble of n^(s+d) states".into())
    })?;
    relabel(e)?;
    let count = e.len();
    let points = sample(sampler, s + d, n, stream)?;
    if points.len() != count {
        return Err(Error::Config(format!(
            "point set has {} points but the ensemble holds {count}",
            points.len()
        )));
    }
    let last = n.pow(1 + d as u32);
    let mut next = vec![0.0; e.states.len()];
    for (w, out) in points.points().zip(next.chunks_exact_mut(s)) {
        let pos = selected_position(&w[..s], n, last);
        model.transition(e.step, e.state(pos), &w[s..], out);
        if let Some(sel) = selected.as_deref_mut() {
            sel.push(pos);
        }
    }
    e.states = next;
    e.step += 1;
    Ok(())
}

/// Initial draw plus `steps` stratified steps, all from the substreams of
/// one replication: the initial states use step slot `-1`, step `p` slot `p`.
pub fn run<M: MarkovModel + ?Sized>(
    model: &M,
    n: usize,
    steps: usize,
    sampler: SamplerKind,
    streams: Substreams,
) -> Result<Ensemble> {
    let mut e = init_ensemble(model, n, &mut streams.initial())?;
    for p in 0..steps {
        step(&mut e, model, sampler, &mut streams.step(p))?;
    }
    Ok(e)
}

/// Mean of `f` over the ensemble.
pub fn estimate_functional<F: Fn(&[f64]) -> f64>(e: &Ensemble, f: F) -> f64 {
    e.states().map(f).sum::<f64>() / e.len() as f64
}

/// Plain Monte Carlo: `count` independent paths of `steps` transitions, path
/// `k` drawing its initial state and all its drivers from its own substream.
pub fn mc_run<M: MarkovModel + ?Sized>(
    model: &M,
    count: usize,
    steps: usize,
    streams: Substreams,
) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let (s, d) = (model.state_dim(), model.driver_dim());
    let mut states = vec![0.0; count * s];
    let mut scratch = vec![0.0; s];
    let mut driver = vec![0.0; d];
    for (k, x) in states.chunks_exact_mut(s).enumerate() {
        let mut stream = streams.path(k);
        model.initial_state(&mut stream, x);
        for p in 0..steps {
            for u in driver.iter_mut() {
                *u = stream.next_f64();
            }
            model.transition(p, x, &driver, &mut scratch);
            x.copy_from_slice(&scratch);
        }
    }
    Ok(Ensemble {
        base: None,
        state_dim: s,
        driver_dim: d,
        states,
        step: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_mass(s: usize, d: usize, value: f64) -> FnModel {
        FnModel::new(
            s,
            d,
            move |_, out| out.fill(value),
            |_, x, _, out| out.copy_from_slice(x),
        )
    }

    fn uniform_init(s: usize, d: usize) -> FnModel {
        FnModel::new(
            s,
            d,
            |st, out| out.iter_mut().for_each(|v| *v = st.next_f64()),
            |_, x, _, out| out.copy_from_slice(x),
        )
    }

    fn plus_one() -> FnModel {
        FnModel::new(
            1,
            1,
            |_, out| out[0] = 0.0,
            |_, x, _, out| out[0] = x[0] + 1.0,
        )
    }

    #[test]
    fn init_point_mass() {
        let e = init_ensemble(&point_mass(1, 1, 100.0), 10, &mut SeededStream::new(1)).unwrap();
        assert_eq!(e.len(), 100);
        assert!(e.states().all(|x| x[0] == 100.0));
        assert!(init_ensemble(&point_mass(1, 1, 0.0), 1, &mut SeededStream::new(1)).is_err());
    }

    #[test]
    fn init_uniform_mean() {
        let m = uniform_init(1, 1);
        let e = init_ensemble(&m, 10, &mut SeededStream::new(3)).unwrap();
        let mean = estimate_functional(&e, |x| x[0]);
        let se = (1.0 / 12.0f64 / 100.0).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se);
        let e2 = init_ensemble(&m, 10, &mut SeededStream::new(3)).unwrap();
        assert_eq!(e, e2);
    }

    #[test]
    fn relabel_one_dim() {
        let mut e = Ensemble::from_states(2, 1, 1, vec![3.0, 1.0, 4.0, 2.0]).unwrap();
        relabel(&mut e).unwrap();
        assert_eq!(e.raw(), &[1.0, 2.0, 3.0, 4.0]);
        relabel(&mut e).unwrap();
        assert_eq!(e.raw(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn relabel_two_dim_small() {
        // n=2, s=2, d=1: two batches of 4 by coord 1, each sorted by coord 2.
        let pts = [
            (0.9, 0.1),
            (0.2, 0.8),
            (0.5, 0.3),
            (0.1, 0.9),
            (0.7, 0.2),
            (0.3, 0.4),
            (0.8, 0.7),
            (0.4, 0.6),
        ];
        let states: Vec<f64> = pts.iter().flat_map(|&(a, b)| [a, b]).collect();
        let mut e = Ensemble::from_states(2, 2, 1, states).unwrap();
        relabel(&mut e).unwrap();
        let got: Vec<(f64, f64)> = e.states().map(|x| (x[0], x[1])).collect();
        assert_eq!(
            got,
            vec![
                (0.3, 0.4),
                (0.4, 0.6),
                (0.2, 0.8),
                (0.1, 0.9),
                (0.9, 0.1),
                (0.7, 0.2),
                (0.5, 0.3),
                (0.8, 0.7),
            ]
        );
    }

    #[test]
    fn relabel_ties_are_stable() {
        let states = vec![
            0.5, 0.3, 0.5, 0.1, 0.5, 0.2, 0.5, 0.0, 0.1, 0.9, 0.1, 0.8, 0.1, 0.7, 0.1, 0.6,
        ];
        let mut e = Ensemble::from_states(2, 2, 1, states).unwrap();
        relabel(&mut e).unwrap();
        let firsts: Vec<f64> = e.states().map(|x| x[0]).collect();
        assert_eq!(firsts, vec![0.1, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn selector_examples() {
        assert_eq!(state_selector(&[0.237], 10, 1), MultiIndex(vec![23]));
        assert_eq!(state_selector(&[0.0, 0.0], 4, 1), MultiIndex(vec![0, 0]));
        assert_eq!(
            state_selector(&[0.999, 0.999], 4, 1),
            MultiIndex(vec![3, 15])
        );
        let below_one = 1.0f64.next_down();
        assert_eq!(
            state_selector(&[below_one, below_one], 4, 1),
            MultiIndex(vec![3, 15])
        );
    }

    #[test]
    fn selector_position_agrees() {
        let mut st = SeededStream::new(8);
        for _ in 0..1000 {
            let u = [st.next_f64(), st.next_f64(), st.next_f64()];
            let m = state_selector(&u, 3, 2);
            assert_eq!(m.position(3, 2), selected_position(&u, 3, 27));
        }
    }

    #[test]
    fn identity_transition_selects_existing_states() {
        let m = uniform_init(1, 1);
        for kind in SamplerKind::ALL {
            let mut e = init_ensemble(&m, 6, &mut SeededStream::new(2)).unwrap();
            let before = e.raw().to_vec();
            step(&mut e, &m, kind, &mut SeededStream::new(5)).unwrap();
            assert_eq!(e.len(), 36);
            assert!(e.raw().iter().all(|x| before.contains(x)), "{kind}");
        }
    }

    #[test]
    fn ss_selection_is_a_permutation_smc_is_not() {
        let m = uniform_init(1, 1);
        let mut e = init_ensemble(&m, 8, &mut SeededStream::new(1)).unwrap();
        let mut sel =
            step_with_selection(&mut e, &m, SamplerKind::Ss, &mut SeededStream::new(2)).unwrap();
        sel.sort();
        assert_eq!(sel, (0..64).collect::<Vec<_>>());

        let mut e = init_ensemble(&m, 2, &mut SeededStream::new(1)).unwrap();
        let seed = (0..100)
            .find(|&seed| {
                let mut e = e.clone();
                let mut sel =
                    step_with_selection(&mut e, &m, SamplerKind::Smc, &mut SeededStream::new(seed))
                        .unwrap();
                sel.sort();
                sel.dedup();
                sel.len() < 4
            })
            .expect("SMC selection collides for some seed");
        let sel = step_with_selection(&mut e, &m, SamplerKind::Smc, &mut SeededStream::new(seed))
            .unwrap();
        assert_eq!(sel.len(), 4);
    }

    #[test]
    fn run_zero_steps_is_init() {
        let m = uniform_init(2, 1);
        let streams = Substreams::new(4, 0);
        let e = run(&m, 3, 0, SamplerKind::Smc, streams).unwrap();
        let i = init_ensemble(&m, 3, &mut streams.initial()).unwrap();
        assert_eq!(e, i);
    }

    #[test]
    fn deterministic_dynamics() {
        for kind in SamplerKind::ALL {
            let e = run(&plus_one(), 4, 3, kind, Substreams::new(1, 0)).unwrap();
            assert!(e.states().all(|x| x[0] == 3.0));
            assert_eq!(e.step_index(), 3);
        }
        let e = mc_run(&plus_one(), 17, 3, Substreams::new(1, 0)).unwrap();
        assert_eq!(e.len(), 17);
        assert!(e.states().all(|x| x[0] == 3.0));
    }

    #[test]
    fn run_is_deterministic() {
        let m = FnModel::new(1, 1, |_, o| o[0] = 0.0, |_, x, u, o| o[0] = x[0] + u[0]);
        let a = run(&m, 5, 4, SamplerKind::Ss, Substreams::new(3, 2)).unwrap();
        let b = run(&m, 5, 4, SamplerKind::Ss, Substreams::new(3, 2)).unwrap();
        assert_eq!(a, b);
        let c = run(&m, 5, 4, SamplerKind::Ss, Substreams::new(3, 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn functional_basics() {
        let e = init_ensemble(&point_mass(2, 1, 2.5), 3, &mut SeededStream::new(1)).unwrap();
        assert_eq!(estimate_functional(&e, |_| 1.0), 1.0);
        assert_eq!(estimate_functional(&e, |x| x[0]), 2.5);
        let ind = estimate_functional(&e, |x| (x[1] < 3.0) as u8 as f64);
        assert!((0.0..=1.0).contains(&ind));
    }

    #[test]
    fn mc_paths_are_independent_of_order() {
        // Path k depends only on its own substream.
        let m = FnModel::new(
            1,
            1,
            |st, o| o[0] = st.next_f64(),
            |_, x, u, o| o[0] = x[0] * u[0],
        );
        let a = mc_run(&m, 10, 5, Substreams::new(9, 0)).unwrap();
        let b = mc_run(&m, 20, 5, Substreams::new(9, 0)).unwrap();
        assert_eq!(a.raw(), &b.raw()[..10]);
    }

    #[test]
    fn mismatched_model_rejected() {
        let m1 = uniform_init(1, 1);
        let m2 = uniform_init(2, 1);
        let mut e = init_ensemble(&m1, 4, &mut SeededStream::new(1)).unwrap();
        assert!(matches!(
            step(&mut e, &m2, SamplerKind::Mc, &mut SeededStream::new(1)),
            Err(Error::Config(_))
        ));
        let mut mc = mc_run(&m1, 16, 0, Substreams::new(1, 0)).unwrap();
        assert!(step(&mut mc, &m1, SamplerKind::Smc, &mut SeededStream::new(1)).is_err());
    }
}
