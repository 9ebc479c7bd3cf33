//! Exact finite-`N` analysis over all `2^N` configurations.
//!
//! Operators are applied matrix-free. Each state index is the packed
//! configuration word, and every output entry is gathered from its at most
//! `4N + 1` predecessors in a fixed order, so results do not depend on the
//! number of worker threads.
//!
//! Memory: one distribution over `N` players takes `8 · 2^N` bytes. The
//! stationary solver keeps three such vectors (the cycle operator needs two
//! more as scratch), so `N = 24` needs about 640 MiB.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rules::{
    check_gamma, reflect_word, rotate_word, word, Configuration, GameParams, SchedulerSpec,
    MIN_PLAYERS,
};

/// Hard cap on the ring size handled by the exact engine.
pub const MAX_EXACT_PLAYERS: usize = 24;

/// Cap for the reachability check, which sweeps every state repeatedly.
pub const MAX_IRREDUCIBLE_PLAYERS: usize = 20;

/// Cap for materializing dense transition matrices.
pub const MAX_DENSE_PLAYERS: usize = 6;

/// Tolerance on `Σ weights − 1` accepted for a distribution.
pub const SUM_TOLERANCE: f64 = 1e-12;

const CHUNK: usize = 4096;

/// Bytes needed for a single vector over `2^n` states.
pub fn vector_bytes(n: usize) -> u128 {
    8u128 << n
}

pub(crate) fn check_exact_size(n: usize, cap: usize) -> Result<()> {
    if n < MIN_PLAYERS {
        return Err(Error::TooFewPlayers(n));
    }
    if n > cap {
        return Err(Error::StateSpaceTooLarge { n, cap });
    }
    Ok(())
}

/// Fills `out[i] = f(i)` in parallel; each entry is computed independently.
fn par_fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    out.par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(i, v)| *v = f(i));
}

/// Sum with a fixed chunking so the result is identical for any thread count.
pub(crate) fn det_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(len);
            (start..end).map(&f).sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    det_sum(a.len(), |i| (a[i] - b[i]).abs())
}

/// A probability vector over all configurations of `n` players, indexed by
/// packed configuration word.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    n: usize,
    weights: Vec<f64>,
}

impl StateDistribution {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        check_exact_size(n, MAX_EXACT_PLAYERS)?;
        if weights.len() != 1 << n {
            return Err(Error::InvalidDistribution(format!(
                "expected {} weights for {n} players, got {}",
                1usize << n,
                weights.len()
            )));
        }
        if let Some(i) = weights
            .iter()
            .position(|w| w.is_nan() || *w < 0.0 || !w.is_finite())
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {} at state {i} is negative or not finite",
                weights[i]
            )));
        }
        let total = det_sum(weights.len(), |i| weights[i]);
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { n, weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_exact_size(n, MAX_EXACT_PLAYERS)?;
        let w = 1.0 / (1u64 << n) as f64;
        Ok(Self {
            n,
            weights: vec![w; 1 << n],
        })
    }

    pub fn point_mass(cfg: &Configuration) -> Result<Self> {
        check_exact_size(cfg.n(), MAX_EXACT_PLAYERS)?;
        let mut weights = vec![0.0; 1 << cfg.n()];
        weights[cfg.word() as usize] = 1.0;
        Ok(Self {
            n: cfg.n(),
            weights,
        })
    }

    // Operators preserve validity, so their outputs skip the O(2^n) checks.
    fn from_parts(n: usize, weights: Vec<f64>) -> Self {
        Self { n, weights }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn prob(&self, cfg: &Configuration) -> f64 {
        self.weights[cfg.word() as usize]
    }

    pub fn total(&self) -> f64 {
        det_sum(self.weights.len(), |i| self.weights[i])
    }

    /// Law of the rotated configuration (see [`Configuration::rotate`]).
    pub fn rotate(&self, k: usize) -> Self {
        let mut weights = vec![0.0; self.weights.len()];
        for (s, &w) in self.weights.iter().enumerate() {
            weights[rotate_word(s as u64, self.n, k) as usize] = w;
        }
        Self::from_parts(self.n, weights)
    }

    /// Law of the mirror image `x ↦ −x`.
    pub fn reflect(&self) -> Self {
        let mut weights = vec![0.0; self.weights.len()];
        for (s, &w) in self.weights.iter().enumerate() {
            weights[reflect_word(s as u64, self.n) as usize] = w;
        }
        Self::from_parts(self.n, weights)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        l1_diff(&self.weights, &other.weights)
    }
}

/// Joint law of the statuses at two sites, `probs[k][l] = P(η(i)=k, η(j)=l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMarginal {
    pub probs: [[f64; 2]; 2],
}

impl PairMarginal {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.probs[k][l]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    /// `Σ_{k,l} P(k, l) · (2p_{2k+l} − 1)`: expected profit of a B toss whose
    /// neighbors have this joint law.
    pub fn drift(&self, params: &GameParams) -> f64 {
        (0..4)
            .map(|m| self.probs[m >> 1][m & 1] * params.drift(m))
            .sum()
    }
}

pub fn pair_marginal(dist: &StateDistribution, i: usize, j: usize) -> Result<PairMarginal> {
    let n = dist.n();
    for x in [i, j] {
        if x >= n {
            return Err(Error::IndexOutOfRange { index: x, n });
        }
    }
    if i == j {
        return Err(Error::InvalidConfiguration(format!(
            "pair marginal needs two distinct sites, got {i} twice"
        )));
    }
    let mut probs = [[0.0; 2]; 2];
    for (s, &w) in dist.weights().iter().enumerate() {
        let s = s as u64;
        probs[word::bit(s, i) as usize][word::bit(s, j) as usize] += w;
    }
    Ok(PairMarginal { probs })
}

/// Marginal of the two neighbors of site 0, `π_{−1,1}`.
pub fn neighbor_marginal(dist: &StateDistribution) -> PairMarginal {
    let n = dist.n();
    pair_marginal(dist, n - 1, 1).expect("sites n-1 and 1 are distinct on a ring")
}

/// A one-step transition operator on `{0,1}^n`.
pub trait Kernel: Sync {
    fn n(&self) -> usize;

    /// `out = dist · P`.
    fn push(&self, dist: &[f64], out: &mut [f64]);

    /// `out = P · g` for a function `g` on states.
    fn pull(&self, g: &[f64], out: &mut [f64]);

    /// Visits every one-step transition out of `state` (targets may repeat).
    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64));
}

/// Game B: a uniform player tosses a `p_{m_x}` coin.
#[derive(Debug, Clone)]
pub struct GameB {
    n: usize,
    rates: [f64; 8],
}

impl GameB {
    pub fn new(n: usize, params: &GameParams) -> Result<Self> {
        check_exact_size(n, MAX_EXACT_PLAYERS)?;
        Ok(Self {
            n,
            rates: params.flip_rate_table(),
        })
    }

    #[inline]
    fn rate(&self, state: u64, x: usize) -> f64 {
        self.rates[word::pattern(state, self.n, x)]
    }
}

impl Kernel for GameB {
    fn n(&self) -> usize {
        self.n
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        let n = self.n;
        let inv_n = 1.0 / n as f64;
        par_fill(out, |z| {
            let z = z as u64;
            let mut inflow = 0.0;
            let mut leave = 0.0;
            for x in 0..n {
                let pred = z ^ (1 << x);
                inflow += dist[pred as usize] * self.rate(pred, x);
                leave += self.rate(z, x);
            }
            (inflow + dist[z as usize] * (n as f64 - leave)) * inv_n
        });
    }

    fn pull(&self, g: &[f64], out: &mut [f64]) {
        let n = self.n;
        let inv_n = 1.0 / n as f64;
        par_fill(out, |e| {
            let s = e as u64;
            let here = g[e];
            let mut acc = 0.0;
            for x in 0..n {
                let c = self.rate(s, x);
                acc += c * g[(s ^ (1 << x)) as usize] + (1.0 - c) * here;
            }
            acc * inv_n
        });
    }

    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64)) {
        let inv_n = 1.0 / self.n as f64;
        for x in 0..self.n {
            let c = self.rate(state, x);
            visit(state ^ (1 << x), c * inv_n);
            visit(state, (1.0 - c) * inv_n);
        }
    }
}

/// Game A′: a uniform player duels a uniform neighbor with a fair coin.
///
/// Every bond `(x, x+1)` ends up as `(1, 0)` or `(0, 1)` with probability
/// `1/(2N)` each, which is the two-term form of the kernel used here.
#[derive(Debug, Clone)]
pub struct GameAprime {
    n: usize,
}

impl GameAprime {
    pub fn new(n: usize) -> Result<Self> {
        check_exact_size(n, MAX_EXACT_PLAYERS)?;
        Ok(Self { n })
    }
}

impl Kernel for GameAprime {
    fn n(&self) -> usize {
        self.n
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        let n = self.n;
        let w = 0.5 / n as f64;
        par_fill(out, |z| {
            let z = z as u64;
            let mut acc = 0.0;
            for x in 0..n {
                let y = word::right(x, n);
                if word::bit(z, x) != word::bit(z, y) {
                    for pair in 0..4u64 {
                        let pred = word::set_pair(z, x, pair >> 1, y, pair & 1);
                        acc += dist[pred as usize];
                    }
                }
            }
            acc * w
        });
    }

    fn pull(&self, g: &[f64], out: &mut [f64]) {
        let n = self.n;
        let w = 0.5 / n as f64;
        par_fill(out, |e| {
            let s = e as u64;
            let mut acc = 0.0;
            for x in 0..n {
                let y = word::right(x, n);
                acc += g[word::set_pair(s, x, 1, y, 0) as usize];
                acc += g[word::set_pair(s, x, 0, y, 1) as usize];
            }
            acc * w
        });
    }

    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64)) {
        let n = self.n;
        let w = 0.5 / n as f64;
        for x in 0..n {
            let y = word::right(x, n);
            visit(word::set_pair(state, x, 1, y, 0), w);
            visit(word::set_pair(state, x, 0, y, 1), w);
        }
    }
}

/// Random mixture `γ·P_{A′} + (1−γ)·P_B`.
#[derive(Debug, Clone)]
pub struct Mixture {
    gamma: f64,
    a: GameAprime,
    b: GameB,
}

impl Mixture {
    pub fn new(n: usize, gamma: f64, params: &GameParams) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            a: GameAprime::new(n)?,
            b: GameB::new(n, params)?,
        })
    }
}

impl Kernel for Mixture {
    fn n(&self) -> usize {
        self.a.n
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.a.push(dist, out);
        self.b.push(dist, &mut tmp);
        let g = self.gamma;
        out.par_iter_mut()
            .with_min_len(CHUNK)
            .zip(tmp.par_iter())
            .for_each(|(o, t)| *o = g * *o + (1.0 - g) * t);
    }

    fn pull(&self, g: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.a.pull(g, out);
        self.b.pull(g, &mut tmp);
        let gm = self.gamma;
        out.par_iter_mut()
            .with_min_len(CHUNK)
            .zip(tmp.par_iter())
            .for_each(|(o, t)| *o = gm * *o + (1.0 - gm) * t);
    }

    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64)) {
        let g = self.gamma;
        self.a.successors(state, &mut |t, p| visit(t, g * p));
        self.b
            .successors(state, &mut |t, p| visit(t, (1.0 - g) * p));
    }
}

/// One full period of the pattern: `P_{A′}^r · P_B^s`.
#[derive(Debug, Clone)]
pub struct Cycle {
    r: usize,
    s: usize,
    a: GameAprime,
    b: GameB,
}

impl Cycle {
    pub fn new(n: usize, r: usize, s: usize, params: &GameParams) -> Result<Self> {
        if r == 0 || s == 0 {
            return Err(Error::InvalidPattern { r, s });
        }
        Ok(Self {
            r,
            s,
            a: GameAprime::new(n)?,
            b: GameB::new(n, params)?,
        })
    }

    pub fn aprime(&self) -> &GameAprime {
        &self.a
    }

    pub fn b(&self) -> &GameB {
        &self.b
    }
}

/// Applies `steps` in order as row-vector products.
fn push_sequence(steps: &[&dyn Kernel], dist: &[f64], out: &mut [f64]) {
    let mut cur = dist.to_vec();
    let mut next = vec![0.0; dist.len()];
    for step in steps {
        step.push(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    out.copy_from_slice(&cur);
}

impl Kernel for Cycle {
    fn n(&self) -> usize {
        self.a.n
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        let mut steps: Vec<&dyn Kernel> = vec![&self.a; self.r];
        steps.extend(std::iter::repeat_n(&self.b as &dyn Kernel, self.s));
        push_sequence(&steps, dist, out);
    }

    fn pull(&self, g: &[f64], out: &mut [f64]) {
        // P_A^r P_B^s g: apply B first to the function.
        let mut cur = g.to_vec();
        let mut next = vec![0.0; g.len()];
        for _ in 0..self.s {
            self.b.pull(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        for _ in 0..self.r {
            self.a.pull(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        out.copy_from_slice(&cur);
    }

    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64)) {
        let mut layer: HashMap<u64, f64> = HashMap::from([(state, 1.0)]);
        let steps = std::iter::repeat_n(&self.a as &dyn Kernel, self.r)
            .chain(std::iter::repeat_n(&self.b as &dyn Kernel, self.s));
        for step in steps {
            let mut next = HashMap::with_capacity(layer.len() * 2 * self.a.n);
            for (&s, &w) in &layer {
                step.successors(s, &mut |t, p| {
                    if p > 0.0 {
                        *next.entry(t).or_insert(0.0) += w * p;
                    }
                });
            }
            layer = next;
        }
        let mut targets: Vec<(u64, f64)> = layer.into_iter().collect();
        targets.sort_unstable_by_key(|&(t, _)| t);
        for (t, p) in targets {
            visit(t, p);
        }
    }
}

/// Any of the chains induced by a [`SchedulerSpec`].
#[derive(Debug, Clone)]
pub enum Operator {
    Aprime(GameAprime),
    B(GameB),
    Mixture(Mixture),
    Cycle(Cycle),
}

impl Operator {
    pub fn for_schedule(n: usize, sched: &SchedulerSpec, params: &GameParams) -> Result<Self> {
        sched.validate()?;
        Ok(match *sched {
            SchedulerSpec::PureAprime => Self::Aprime(GameAprime::new(n)?),
            SchedulerSpec::PureB => Self::B(GameB::new(n, params)?),
            SchedulerSpec::RandomMixture { gamma } => {
                Self::Mixture(Mixture::new(n, gamma, params)?)
            }
            SchedulerSpec::PeriodicPattern { r, s } => Self::Cycle(Cycle::new(n, r, s, params)?),
        })
    }

    fn inner(&self) -> &dyn Kernel {
        match self {
            Self::Aprime(k) => k,
            Self::B(k) => k,
            Self::Mixture(k) => k,
            Self::Cycle(k) => k,
        }
    }
}

impl Kernel for Operator {
    fn n(&self) -> usize {
        self.inner().n()
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        self.inner().push(dist, out)
    }

    fn pull(&self, g: &[f64], out: &mut [f64]) {
        self.inner().pull(g, out)
    }

    fn successors(&self, state: u64, visit: &mut dyn FnMut(u64, f64)) {
        self.inner().successors(state, visit)
    }
}

fn apply(kernel: &dyn Kernel, dist: &StateDistribution) -> StateDistribution {
    let mut out = vec![0.0; dist.weights.len()];
    kernel.push(&dist.weights, &mut out);
    StateDistribution::from_parts(dist.n, out)
}

/// `dist · P_B`.
pub fn apply_p_b(params: &GameParams, dist: &StateDistribution) -> StateDistribution {
    apply(&GameB::new(dist.n, params).expect("size checked"), dist)
}

/// `dist · P_{A′}` using the two-term (per-bond) form of the kernel.
pub fn apply_p_aprime(dist: &StateDistribution) -> StateDistribution {
    apply(&GameAprime::new(dist.n).expect("size checked"), dist)
}

/// `dist · P_{A′}` by scattering over all `4N` duel events
/// `(x, neighbor, outcome)`, each with probability `1/(4N)`.
pub fn apply_p_aprime_four_term(dist: &StateDistribution) -> StateDistribution {
    let n = dist.n;
    let w = 0.25 / n as f64;
    let mut out = vec![0.0; dist.weights.len()];
    for (s, &mass) in dist.weights.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for target in duel_targets(s as u64, n) {
            out[target as usize] += mass * w;
        }
    }
    StateDistribution::from_parts(n, out)
}

fn duel_targets(state: u64, n: usize) -> impl Iterator<Item = u64> {
    (0..n).flat_map(move |x| {
        [word::left(x, n), word::right(x, n)]
            .into_iter()
            .flat_map(move |y| {
                // x loses, then x wins
                [
                    word::set_pair(state, x, 0, y, 1),
                    word::set_pair(state, x, 1, y, 0),
                ]
            })
    })
}

/// Checks that the four-term duel form and the two-term bond form of
/// `P_{A′}` give identical rows for every state, comparing integer event
/// multiplicities so the check is exact.
pub fn aprime_forms_agree(n: usize) -> Result<bool> {
    check_exact_size(n, MAX_EXACT_PLAYERS)?;
    let kernel = GameAprime::new(n)?;
    let agree = (0..1u64 << n).into_par_iter().all(|s| {
        // four-term: count events out of 4N
        let mut four: Vec<u64> = duel_targets(s, n).collect();
        four.sort_unstable();
        // two-term: each event out of 2N counts twice
        let mut two = Vec::with_capacity(4 * n);
        kernel.successors(s, &mut |t, _| {
            two.push(t);
            two.push(t);
        });
        two.sort_unstable();
        four == two
    });
    Ok(agree)
}

pub fn apply_mixture(
    gamma: f64,
    params: &GameParams,
    dist: &StateDistribution,
) -> Result<StateDistribution> {
    Ok(apply(&Mixture::new(dist.n, gamma, params)?, dist))
}

/// `dist · P_{A′}^r · P_B^s`.
pub fn cycle_operator(
    r: usize,
    s: usize,
    params: &GameParams,
    dist: &StateDistribution,
) -> Result<StateDistribution> {
    Ok(apply(&Cycle::new(dist.n, r, s, params)?, dist))
}

/// Stopping rule and limits for [`stationary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Target for `‖πP − π‖₁`.
    pub tol: f64,
    pub max_iters: usize,
    /// Iterations without a new best residual before switching to the damped
    /// iteration `π ↦ (π + πP)/2`.
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iters: 1_000_000,
            stall_window: 2_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stationary {
    pub dist: StateDistribution,
    /// `‖πP − π‖₁` of the returned vector under the undamped operator.
    pub residual: f64,
    pub iterations: usize,
    pub damped: bool,
}

/// Stationary law by power iteration from the uniform distribution.
///
/// Fails with [`Error::NotConverged`] when the residual never reaches
/// `opts.tol`, which usually means the chain is reducible or periodic.
pub fn stationary(kernel: &dyn Kernel, opts: &SolverOptions) -> Result<Stationary> {
    let n = kernel.n();
    let len = 1usize << n;
    let mut cur = vec![1.0 / len as f64; len];
    let mut next = vec![0.0; len];
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut damped = false;
    let mut residual = f64::INFINITY;

    for it in 0..opts.max_iters {
        kernel.push(&cur, &mut next);
        residual = l1_diff(&next, &cur);
        if residual <= opts.tol {
            return Ok(Stationary {
                dist: StateDistribution::from_parts(n, cur),
                residual,
                iterations: it,
                damped,
            });
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if !damped && since_best >= opts.stall_window {
                damped = true;
                since_best = 0;
            }
        }
        if damped {
            next.par_iter_mut()
                .with_min_len(CHUNK)
                .zip(cur.par_iter())
                .for_each(|(nx, c)| *nx = 0.5 * (*nx + c));
        }
        let total = det_sum(len, |i| next[i]);
        let inv = 1.0 / total;
        next.par_iter_mut()
            .with_min_len(CHUNK)
            .for_each(|v| *v *= inv);
        std::mem::swap(&mut cur, &mut next);
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        residual,
    })
}

/// True iff the positive-probability transition graph is strongly connected.
pub fn irreducible(kernel: &dyn Kernel) -> Result<bool> {
    let n = kernel.n();
    check_exact_size(n, MAX_IRREDUCIBLE_PLAYERS)?;
    let len = 1usize << n;

    // forward: everything reachable from state 0
    let mut seen = vec![false; len];
    let mut stack = vec![0u64];
    seen[0] = true;
    while let Some(s) = stack.pop() {
        kernel.successors(s, &mut |t, p| {
            if p > 0.0 && !seen[t as usize] {
                seen[t as usize] = true;
                stack.push(t);
            }
        });
    }
    if seen.iter().any(|v| !v) {
        return Ok(false);
    }

    // backward: everything reaches state 0, by sweeping to a fixed point
    let mut reaches = vec![false; len];
    reaches[0] = true;
    loop {
        let snapshot = &reaches;
        let added: Vec<usize> = (0..len)
            .into_par_iter()
            .filter(|&s| !snapshot[s])
            .filter(|&s| {
                let mut hit = false;
                kernel.successors(s as u64, &mut |t, p| {
                    hit |= p > 0.0 && snapshot[t as usize];
                });
                hit
            })
            .collect();
        if added.is_empty() {
            break;
        }
        for s in added {
            reaches[s] = true;
        }
    }
    Ok(reaches.iter().all(|&v| v))
}

/// Expected profit of one B turn under `dist`:
/// `E[(1/N) Σ_z (2p_{m_z(η)} − 1)]`.
pub fn b_turn_profit(params: &GameParams, dist: &StateDistribution) -> f64 {
    let n = dist.n;
    let drift: [f64; 4] = std::array::from_fn(|m| params.drift(m));
    let w = &dist.weights;
    det_sum(w.len(), |s| {
        if w[s] == 0.0 {
            return 0.0;
        }
        let per_site: f64 = (0..n)
            .map(|z| drift[word::neighbor_index(s as u64, n, z)])
            .sum();
        w[s] * per_site / n as f64
    })
}

/// Equilibrium mean profit per turn `μ^N`, with the diagnostics needed to
/// judge it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanProfit {
    pub n: usize,
    pub mu: f64,
    /// The same quantity through the neighbor pair marginal `π_{−1,1}`, for
    /// schedules where that identity holds.
    pub pair_formula_mu: Option<f64>,
    pub formula_delta: Option<f64>,
    /// Solver residual `‖πP − π‖₁`.
    pub residual: f64,
    pub iterations: usize,
}

/// Disagreement allowed between the full-state and pair-marginal formulas.
pub const FORMULA_TOLERANCE: f64 = 1e-10;

/// `μ^N_{(γ,1−γ)′}` for the random mixture.
pub fn mean_profit_random(
    n: usize,
    gamma: f64,
    params: &GameParams,
    opts: &SolverOptions,
) -> Result<MeanProfit> {
    let kernel = Mixture::new(n, gamma, params)?;
    guard_boundary(&kernel, params)?;
    let st = stationary(&kernel, opts)?;
    profit_from_stationary(n, 1.0 - gamma, params, st)
}

/// Pure game B, i.e. the `γ = 0` end of the mixture.
pub fn mean_profit_b(n: usize, params: &GameParams, opts: &SolverOptions) -> Result<MeanProfit> {
    let kernel = GameB::new(n, params)?;
    guard_boundary(&kernel, params)?;
    let st = stationary(&kernel, opts)?;
    profit_from_stationary(n, 1.0, params, st)
}

/// Interior coins make every chain irreducible. At a boundary point the
/// state graph is checked, and rings too large to check are refused.
fn guard_boundary(kernel: &dyn Kernel, params: &GameParams) -> Result<()> {
    if params.is_interior() {
        return Ok(());
    }
    let n = kernel.n();
    match irreducible(kernel) {
        Ok(true) => Ok(()),
        Ok(false) | Err(Error::StateSpaceTooLarge { .. }) => Err(Error::Reducible { n }),
        Err(e) => Err(e),
    }
}

fn profit_from_stationary(
    n: usize,
    b_weight: f64,
    params: &GameParams,
    st: Stationary,
) -> Result<MeanProfit> {
    let mu = b_weight * b_turn_profit(params, &st.dist);
    let pair_mu = b_weight * neighbor_marginal(&st.dist).drift(params);
    let delta = (mu - pair_mu).abs();
    if delta > FORMULA_TOLERANCE {
        return Err(Error::CrossCheck(format!(
            "full-state mean {mu} and pair-marginal mean {pair_mu} differ by {delta:e}"
        )));
    }
    Ok(MeanProfit {
        n,
        mu,
        pair_formula_mu: Some(pair_mu),
        formula_delta: Some(delta),
        residual: st.residual,
        iterations: st.iterations,
    })
}

/// `μ^N_{[r,s]′} = (1/(r+s)) Σ_{v<s} E_{π P_{A′}^r P_B^v}[(1/N) Σ_z (2p_{m_z} − 1)]`
/// with `π` stationary for the cycle operator.
///
/// The phase convention starts the period at the first A′ turn.
pub fn mean_profit_periodic(
    n: usize,
    r: usize,
    s: usize,
    params: &GameParams,
    opts: &SolverOptions,
) -> Result<MeanProfit> {
    let kernel = Cycle::new(n, r, s, params)?;
    guard_boundary(&kernel, params)?;
    let st = stationary(&kernel, opts)?;
    let mut dist = st.dist.clone();
    for _ in 0..r {
        dist = apply(&kernel.a, &dist);
    }
    let mut acc = 0.0;
    for v in 0..s {
        acc += b_turn_profit(params, &dist);
        if v + 1 < s {
            dist = apply(&kernel.b, &dist);
        }
    }
    Ok(MeanProfit {
        n,
        mu: acc / (r + s) as f64,
        pair_formula_mu: None,
        formula_delta: None,
        residual: st.residual,
        iterations: st.iterations,
    })
}

/// Dispatches on the schedule. Pure A′ never changes collective wealth, so
/// its mean is exactly zero without solving anything.
pub fn mean_profit(
    n: usize,
    sched: &SchedulerSpec,
    params: &GameParams,
    opts: &SolverOptions,
) -> Result<MeanProfit> {
    sched.validate()?;
    match *sched {
        SchedulerSpec::RandomMixture { gamma } => mean_profit_random(n, gamma, params, opts),
        SchedulerSpec::PeriodicPattern { r, s } => mean_profit_periodic(n, r, s, params, opts),
        SchedulerSpec::PureB => mean_profit_b(n, params, opts),
        SchedulerSpec::PureAprime => {
            check_exact_size(n, MAX_EXACT_PLAYERS)?;
            Ok(MeanProfit {
                n,
                mu: 0.0,
                pair_formula_mu: Some(0.0),
                formula_delta: Some(0.0),
                residual: 0.0,
                iterations: 0,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub result: Result<MeanProfit>,
    /// `μ^N − μ^{N'}` against the previous successful row.
    pub delta: Option<f64>,
}

/// Exact `μ^N` for each ring size; a failure at one size is recorded in its
/// row and does not stop the table.
pub fn convergence_table(
    params: &GameParams,
    sched: &SchedulerSpec,
    n_values: &[usize],
    opts: &SolverOptions,
) -> Vec<ConvergenceRow> {
    let mut prev: Option<f64> = None;
    n_values
        .iter()
        .map(|&n| {
            let result = mean_profit(n, sched, params, opts);
            let delta = match (&result, prev) {
                (Ok(mp), Some(p)) => Some(mp.mu - p),
                _ => None,
            };
            if let Ok(mp) = &result {
                prev = Some(mp.mu);
            }
            ConvergenceRow { n, result, delta }
        })
        .collect()
}

/// Dense matrices for small rings, built from [`Kernel::successors`].
pub mod dense {
    use super::*;

    /// Row-stochastic matrix `P[from][to]`.
    pub fn matrix(kernel: &dyn Kernel) -> Result<Vec<Vec<f64>>> {
        let n = kernel.n();
        check_exact_size(n, MAX_DENSE_PLAYERS)?;
        let len = 1usize << n;
        let mut m = vec![vec![0.0; len]; len];
        for (s, row) in m.iter_mut().enumerate() {
            kernel.successors(s as u64, &mut |t, p| row[t as usize] += p);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> GameParams {
        GameParams::new([0.1, 0.6, 0.6, 0.9]).unwrap()
    }

    #[test]
    fn p_b_from_all_zeros() {
        let d = StateDistribution::point_mass(&Configuration::zeros(3).unwrap()).unwrap();
        let out = apply_p_b(&params(), &d);
        assert_abs_diff_eq!(out.weights()[0], 0.9, epsilon = 1e-15);
        for x in 0..3 {
            assert_abs_diff_eq!(out.weights()[1 << x], 0.1 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(out.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn p_aprime_from_all_ones() {
        let d = StateDistribution::point_mass(&Configuration::ones(3).unwrap()).unwrap();
        for out in [apply_p_aprime(&d), apply_p_aprime_four_term(&d)] {
            for s in 0..8u64 {
                let expect = if s.count_ones() == 2 { 1.0 / 3.0 } else { 0.0 };
                assert_abs_diff_eq!(out.weights()[s as usize], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn aprime_forms_agree_small_rings() {
        for n in 3..=10 {
            assert!(aprime_forms_agree(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let p = params();
        for n in [3, 4, 5] {
            let kernels: Vec<Operator> = vec![
                Operator::for_schedule(n, &SchedulerSpec::PureB, &p).unwrap(),
                Operator::for_schedule(n, &SchedulerSpec::PureAprime, &p).unwrap(),
                Operator::for_schedule(n, &SchedulerSpec::mixture(0.3).unwrap(), &p).unwrap(),
            ];
            for k in &kernels {
                for row in dense::matrix(k).unwrap() {
                    assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
                    assert!(row.iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn fair_b_keeps_uniform_but_the_mixture_moves_it() {
        let u = StateDistribution::uniform(4).unwrap();
        let fair = GameParams::fair();
        let out = apply_p_b(&fair, &u);
        assert!(out.l1_distance(&u) < 1e-15);
        // A′ is not doubly stochastic: unequal bonds vary with the state
        let out = apply_mixture(0.5, &fair, &u).unwrap();
        assert!(out.l1_distance(&u) > 0.1);
        let st = stationary(&GameB::new(3, &fair).unwrap(), &SolverOptions::default()).unwrap();
        assert!(st.dist.l1_distance(&StateDistribution::uniform(3).unwrap()) < 1e-13);
    }

    #[test]
    fn mixture_rejects_bad_gamma() {
        let u = StateDistribution::uniform(3).unwrap();
        assert!(matches!(
            apply_mixture(1.0, &params(), &u),
            Err(Error::InvalidGamma(_))
        ));
    }

    #[test]
    fn cycle_one_one_is_composition() {
        let d = StateDistribution::point_mass(&Configuration::new(&[1, 0, 0, 1]).unwrap()).unwrap();
        let lhs = cycle_operator(1, 1, &params(), &d).unwrap();
        let rhs = apply_p_b(&params(), &apply_p_aprime(&d));
        assert!(lhs.l1_distance(&rhs) == 0.0);
    }

    #[test]
    fn pull_is_transpose_of_push() {
        let p = params();
        let n = 5;
        let len = 1 << n;
        let dist: Vec<f64> = (0..len).map(|i| ((i * 7 + 3) % 11) as f64).collect();
        let g: Vec<f64> = (0..len).map(|i| ((i * 5 + 1) % 13) as f64 - 6.0).collect();
        for sched in [
            SchedulerSpec::PureB,
            SchedulerSpec::PureAprime,
            SchedulerSpec::RandomMixture { gamma: 0.4 },
            SchedulerSpec::PeriodicPattern { r: 2, s: 3 },
        ] {
            let k = Operator::for_schedule(n, &sched, &p).unwrap();
            let mut pushed = vec![0.0; len];
            let mut pulled = vec![0.0; len];
            k.push(&dist, &mut pushed);
            k.pull(&g, &mut pulled);
            let a: f64 = pushed.iter().zip(&g).map(|(x, y)| x * y).sum();
            let b: f64 = dist.iter().zip(&pulled).map(|(x, y)| x * y).sum();
            assert_abs_diff_eq!(a, b, epsilon = 1e-11);
        }
    }

    #[test]
    fn irreducibility() {
        let p = params();
        let mix = Mixture::new(5, 0.5, &p).unwrap();
        assert!(irreducible(&mix).unwrap());
        assert!(irreducible(&GameB::new(5, &p).unwrap()).unwrap());
        let dead = GameParams::new([0.0; 4]).unwrap();
        assert!(!irreducible(&GameB::new(3, &dead).unwrap()).unwrap());
        assert!(irreducible(&Cycle::new(4, 2, 1, &p).unwrap()).unwrap());
        assert!(matches!(
            irreducible(&GameB::new(21, &p).unwrap()),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn pair_marginal_examples() {
        let u = StateDistribution::uniform(5).unwrap();
        let pm = pair_marginal(&u, 0, 2).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                assert_abs_diff_eq!(pm.get(k, l), 0.25, epsilon = 1e-15);
            }
        }
        let ones = StateDistribution::point_mass(&Configuration::ones(5).unwrap()).unwrap();
        let pm = pair_marginal(&ones, 4, 1).unwrap();
        assert_eq!(pm.get(1, 1), 1.0);
        assert_eq!(pm.total(), 1.0);
        assert!(pair_marginal(&u, 1, 1).is_err());
        assert!(pair_marginal(&u, 1, 5).is_err());
    }

    #[test]
    fn fair_mean_profit_is_zero() {
        let fair = GameParams::fair();
        let opts = SolverOptions::default();
        for n in 3..=8 {
            assert!(mean_profit_random(n, 0.3, &fair, &opts).unwrap().mu.abs() < 1e-12);
            assert!(
                mean_profit_periodic(n, 2, 3, &fair, &opts)
                    .unwrap()
                    .mu
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn constant_coin_profit() {
        let p = GameParams::new([0.7; 4]).unwrap();
        let mp = mean_profit_random(6, 0.25, &p, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(mp.mu, 0.75 * 0.4, epsilon = 1e-12);
    }

    #[test]
    fn convergence_table_records_failures_per_row() {
        let rows = convergence_table(
            &GameParams::fair(),
            &SchedulerSpec::RandomMixture { gamma: 0.5 },
            &[2, 4, 5],
            &SolverOptions::default(),
        );
        assert_eq!(rows.len(), 3);
        assert!(matches!(rows[0].result, Err(Error::TooFewPlayers(2))));
        assert!(rows[1].delta.is_none());
        assert!(rows[2].delta.unwrap().abs() < 1e-12);
    }

    #[test]
    fn not_converged_is_reported() {
        let opts = SolverOptions {
            tol: 1e-13,
            max_iters: 3,
            stall_window: 10,
        };
        let k = Mixture::new(6, 0.5, &params()).unwrap();
        assert!(matches!(
            stationary(&k, &opts),
            Err(Error::NotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn boundary_reducible_chain_is_refused() {
        let dead = GameParams::new([0.0; 4]).unwrap();
        let opts = SolverOptions::default();
        assert_eq!(
            mean_profit_b(4, &dead, &opts),
            Err(Error::Reducible { n: 4 })
        );
        // a boundary point that stays irreducible is solved
        let edge = GameParams::new([0.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(mean_profit_random(4, 0.5, &edge, &opts).is_ok());
    }

    #[test]
    fn size_cap() {
        assert!(matches!(
            GameB::new(25, &params()),
            Err(Error::StateSpaceTooLarge { n: 25, cap: 24 })
        ));
        assert_eq!(vector_bytes(24), 134_217_728);
    }
}
