//! Generators of the limiting particle system on `{0,1}^Z` and their
//! finite-ring counterparts.
//!
//! Test functions are [`CylinderFunction`]s stored as dense tables over the
//! window `η(−k), …, η(k)`; bit `i` of a table index is the status at site
//! `i − k`. A generator applied to a half-width `k` function yields a
//! half-width `k + 1` function, because a flip or swap at `x` only matters
//! when it touches the window and its rate reads `η(x ± 1)`.
//!
//! Ring functions embed cylinder functions through [`embed_psi`], which reads
//! the centered labels `l_N..=r_N` of the ring and pads every other site with
//! a winner status.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{Cycle, GameAprime, GameB, Kernel, Mixture, MAX_EXACT_PLAYERS};
use crate::rules::{check_gamma, index_of_label, word, GameParams, APRIME_FLIP_RATES};

/// Largest half-width accepted as generator input.
pub const MAX_INPUT_HALF_WIDTH: usize = 3;

/// Largest half-width any table may have.
pub const MAX_TABLE_HALF_WIDTH: usize = 5;

/// Ring cap for single-step discrete generators.
pub const MAX_RING_SINGLE_STEP: usize = 20;

/// Ring cap for the periodic pattern, whose kernel composes `r + s` sweeps.
pub const MAX_RING_PERIODIC: usize = 14;

/// Absolute tolerance used when comparing generator outputs.
pub const GENERATOR_TOLERANCE: f64 = 1e-12;

/// A real function of the `2k + 1` statuses `η(−k..=k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    k: usize,
    table: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(k: usize, table: Vec<f64>) -> Result<Self> {
        if k > MAX_TABLE_HALF_WIDTH {
            return Err(Error::InvalidCylinder(format!(
                "half-width {k} exceeds the cap of {MAX_TABLE_HALF_WIDTH}"
            )));
        }
        let len = window_len(k);
        if table.len() != len {
            return Err(Error::InvalidCylinder(format!(
                "half-width {k} needs {len} entries, got {}",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCylinder("non-finite table entry".into()));
        }
        Ok(Self { k, table })
    }

    pub fn constant(k: usize, c: f64) -> Result<Self> {
        Self::new(k, vec![c; window_len(k)])
    }

    /// `f(η) = η(site)` for `|site| ≤ k`.
    pub fn coordinate(k: usize, site: i64) -> Result<Self> {
        if site.unsigned_abs() as usize > k {
            return Err(Error::InvalidCylinder(format!(
                "site {site} is outside the half-width {k} window"
            )));
        }
        let bit = (site + k as i64) as usize;
        Self::from_fn(k, |w| word::bit(w, bit) as f64)
    }

    /// Table entries drawn uniformly from `[−1, 1]`.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self> {
        let table = (0..window_len(k))
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self::new(k, table)
    }

    pub fn from_fn<F: FnMut(u64) -> f64>(k: usize, mut f: F) -> Result<Self> {
        let table = (0..window_len(k) as u64).map(&mut f).collect();
        Self::new(k, table)
    }

    pub fn half_width(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Value at a window of half-width `h ≥ k` (bit `i` is site `i − h`).
    #[inline]
    pub fn eval_window(&self, window: u64, h: usize) -> f64 {
        debug_assert!(h >= self.k);
        let inner = (window >> (h - self.k)) & word::mask(2 * self.k + 1);
        self.table[inner as usize]
    }

    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same function on a wider window.
    pub fn widen(&self, h: usize) -> Result<Self> {
        if h < self.k {
            return Err(Error::InvalidCylinder(format!(
                "cannot widen half-width {} to {h}",
                self.k
            )));
        }
        Self::from_fn(h, |w| self.eval_window(w, h))
    }

    /// Restricts to half-width `h`, failing unless the table is exactly
    /// independent of every coordinate outside `[−h, h]`.
    pub fn narrow(&self, h: usize) -> Result<Self> {
        if h > self.k {
            return Err(Error::InvalidCylinder(format!(
                "cannot narrow half-width {} to {h}",
                self.k
            )));
        }
        let shift = self.k - h;
        let inner_mask = word::mask(2 * h + 1) << shift;
        let mut out = vec![f64::NAN; window_len(h)];
        for (w, &v) in self.table.iter().enumerate() {
            let inner = ((w as u64 & inner_mask) >> shift) as usize;
            if out[inner].is_nan() {
                out[inner] = v;
            } else if out[inner] != v {
                return Err(Error::InvalidCylinder(format!(
                    "value depends on a coordinate outside half-width {h}"
                )));
            }
        }
        Self::new(h, out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let h = self.k.max(other.k);
        let a = self.widen(h)?;
        let b = other.widen(h)?;
        Ok(a.table
            .iter()
            .zip(&b.table)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }

    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.k, other.k);
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self { k: self.k, table }
    }
}

fn window_len(k: usize) -> usize {
    1 << (2 * k + 1)
}

#[inline]
fn bit_of(site: i64, h: usize) -> usize {
    (site + h as i64) as usize
}

#[inline]
fn pattern_at(w: u64, h: usize, site: i64) -> usize {
    let b = bit_of(site, h);
    ((word::bit(w, b - 1) << 2) | (word::bit(w, b) << 1) | word::bit(w, b + 1)) as usize
}

#[inline]
fn swap_at(w: u64, h: usize, site: i64) -> u64 {
    let b = bit_of(site, h);
    word::set_pair(w, b, word::bit(w, b + 1), b + 1, word::bit(w, b))
}

fn check_input(f: &CylinderFunction) -> Result<usize> {
    if f.k > MAX_INPUT_HALF_WIDTH {
        return Err(Error::InvalidCylinder(format!(
            "generator input half-width {} exceeds {MAX_INPUT_HALF_WIDTH}",
            f.k
        )));
    }
    Ok(f.k)
}

/// Flip part `Σ_x rate(x, η)[f(η_x) − f(η)]` with the rate read from a
/// local-pattern table.
fn flip_part(f: &CylinderFunction, rates: &[f64; 8]) -> Result<CylinderFunction> {
    let k = check_input(f)?;
    let h = k + 1;
    let kk = k as i64;
    CylinderFunction::from_fn(h, |w| {
        let here = f.eval_window(w, h);
        (-kk..=kk)
            .map(|x| {
                let rate = rates[pattern_at(w, h, x)];
                rate * (f.eval_window(w ^ (1 << bit_of(x, h)), h) - here)
            })
            .sum()
    })
}

/// Exclusion part `Σ_x [f(_xη_{x+1}) − f(η)]`.
pub fn swap_part(f: &CylinderFunction) -> Result<CylinderFunction> {
    let k = check_input(f)?;
    let h = k + 1;
    let kk = k as i64;
    CylinderFunction::from_fn(h, |w| {
        let here = f.eval_window(w, h);
        // bonds touching [−k, k]
        (-kk - 1..=kk)
            .map(|x| f.eval_window(swap_at(w, h, x), h) - here)
            .sum()
    })
}

/// `Ω_{A′} f = Σ_x c′(x,η)[f(η_x) − f(η)] + ½ Σ_x [f(_xη_{x+1}) − f(η)]`.
pub fn omega_aprime(f: &CylinderFunction) -> Result<CylinderFunction> {
    let flips = flip_part(f, &APRIME_FLIP_RATES)?;
    let swaps = swap_part(f)?;
    Ok(flips.combine(1.0, &swaps, 0.5))
}

/// `Ω_{A′} f` from the duel description: every player `x` duels each
/// neighbor and wins or loses with weight ¼ each.
///
/// The result is computed on half-width `k + 2` with every duel whose pair
/// fits the window, so that [`CylinderFunction::narrow`] can confirm the
/// output really has half-width `k + 1`.
pub fn omega_aprime_duel_form(f: &CylinderFunction) -> Result<CylinderFunction> {
    let k = check_input(f)?;
    let h = k + 2;
    let hh = h as i64;
    CylinderFunction::from_fn(h, |w| {
        let here = f.eval_window(w, h);
        let mut acc = 0.0;
        for x in -hh..=hh {
            for y in [x - 1, x + 1] {
                if y.abs() > hh {
                    // the pair lies outside [−k, k], so the term vanishes
                    continue;
                }
                let (bx, by) = (bit_of(x, h), bit_of(y, h));
                let lose = word::set_pair(w, bx, 0, by, 1);
                let win = word::set_pair(w, bx, 1, by, 0);
                acc += 0.25 * (f.eval_window(lose, h) - here);
                acc += 0.25 * (f.eval_window(win, h) - here);
            }
        }
        acc
    })
}

/// `Ω_B f = Σ_x c(x,η)[f(η_x) − f(η)]`.
pub fn omega_b(params: &GameParams, f: &CylinderFunction) -> Result<CylinderFunction> {
    flip_part(f, &params.flip_rate_table())
}

/// `Ω_{C′} f = γ Ω_{A′} f + (1−γ) Ω_B f`; the exclusion term carries weight
/// `γ/2`.
pub fn omega_cprime(
    gamma: f64,
    params: &GameParams,
    f: &CylinderFunction,
) -> Result<CylinderFunction> {
    check_gamma(gamma)?;
    Ok(omega_aprime(f)?.combine(gamma, &omega_b(params, f)?, 1.0 - gamma))
}

/// The grouping of `Ω_{C′}` whose exclusion term carries weight `γ` instead
/// of `γ/2`. Kept only for comparison with [`omega_cprime`]; it does not
/// match the discrete generators.
pub fn omega_cprime_full_swap(
    gamma: f64,
    params: &GameParams,
    f: &CylinderFunction,
) -> Result<CylinderFunction> {
    check_gamma(gamma)?;
    let flips = flip_part(f, &APRIME_FLIP_RATES)?;
    let swaps = swap_part(f)?;
    let b = omega_b(params, f)?;
    Ok(flips
        .combine(gamma, &swaps, gamma)
        .combine(1.0, &b, 1.0 - gamma))
}

/// A function on the `2^n` configurations of a ring, indexed by packed word.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFunctionOnRing {
    n: usize,
    values: Vec<f64>,
}

impl WindowFunctionOnRing {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1 << n {
            return Err(Error::InvalidCylinder(format!(
                "ring function on {n} players needs {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `(ψ_N f)(η) = f(…, 1, 1, η(l_N), …, η(r_N), 1, 1, …)`.
pub fn embed_psi(f: &CylinderFunction, n: usize) -> Result<WindowFunctionOnRing> {
    let k = f.k;
    let needed = 2 * k + 1;
    if n < needed {
        return Err(Error::RingTooSmall { n, k, needed });
    }
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::StateSpaceTooLarge {
            n,
            cap: MAX_EXACT_PLAYERS,
        });
    }
    let kk = k as i64;
    // ring index feeding each window bit, or None for padding
    let sources: Vec<Option<usize>> = (-kk..=kk).map(|l| index_of_label(l, n)).collect();
    let values = (0..1u64 << n)
        .map(|s| {
            let w = sources.iter().enumerate().fold(0u64, |w, (i, src)| {
                let b = src.map_or(1, |x| word::bit(s, x));
                w | (b << i)
            });
            f.table[w as usize]
        })
        .collect();
    WindowFunctionOnRing::new(n, values)
}

/// Which discrete-time chain a discrete generator is taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscreteGame {
    Aprime,
    B,
    Mixture { gamma: f64 },
    Periodic { r: usize, s: usize },
}

/// `N·(P g − g)` for single-step games and `N/(r+s)·(P_{A′}^r P_B^s g − g)`
/// for the periodic pattern.
pub fn discrete_omega(
    n: usize,
    game: DiscreteGame,
    params: &GameParams,
    g: &WindowFunctionOnRing,
) -> Result<WindowFunctionOnRing> {
    if g.n != n {
        return Err(Error::InvalidCylinder(format!(
            "ring function has {} players, expected {n}",
            g.n
        )));
    }
    let cap = match game {
        DiscreteGame::Periodic { .. } => MAX_RING_PERIODIC,
        _ => MAX_RING_SINGLE_STEP,
    };
    if n > cap {
        return Err(Error::StateSpaceTooLarge { n, cap });
    }
    let mut pg = vec![0.0; g.values.len()];
    let scale = match game {
        DiscreteGame::Aprime => {
            GameAprime::new(n)?.pull(&g.values, &mut pg);
            n as f64
        }
        DiscreteGame::B => {
            GameB::new(n, params)?.pull(&g.values, &mut pg);
            n as f64
        }
        DiscreteGame::Mixture { gamma } => {
            Mixture::new(n, gamma, params)?.pull(&g.values, &mut pg);
            n as f64
        }
        DiscreteGame::Periodic { r, s } => {
            Cycle::new(n, r, s, params)?.pull(&g.values, &mut pg);
            n as f64 / (r + s) as f64
        }
    };
    let values = pg
        .iter()
        .zip(&g.values)
        .map(|(p, v)| scale * (p - v))
        .collect();
    WindowFunctionOnRing::new(n, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    /// `sup_η |Ω^N ψ_N f − ψ_N Ω f|`.
    pub residual: f64,
    /// Whether `n ≥ 2k + 4`, the ring size for which the identity is claimed.
    pub within_hypothesis: bool,
}

/// Compares the discrete generator of a single-step game applied to `ψ_N f`
/// with `ψ_N` of the limiting generator applied to `f`.
pub fn lemma_check(
    f: &CylinderFunction,
    n: usize,
    game: DiscreteGame,
    params: &GameParams,
) -> Result<LemmaCheck> {
    let limit = match game {
        DiscreteGame::Aprime => omega_aprime(f)?,
        DiscreteGame::B => omega_b(params, f)?,
        DiscreteGame::Mixture { gamma } => omega_cprime(gamma, params, f)?,
        DiscreteGame::Periodic { .. } => {
            return Err(Error::InvalidCylinder(
                "the exact identity is for single-step games; use periodic_residual".into(),
            ))
        }
    };
    let discrete = discrete_omega(n, game, params, &embed_psi(f, n)?)?;
    let embedded = embed_psi(&limit, n)?;
    Ok(LemmaCheck {
        residual: discrete.sup_distance(&embedded),
        within_hypothesis: n >= 2 * f.k + 4,
    })
}

/// `sup_η |Ω^N_{[r,s]′} ψ_N f − ψ_N((r/(r+s)) Ω_{A′} f + (s/(r+s)) Ω_B f)|`,
/// which shrinks like `1/N`.
pub fn periodic_residual(
    f: &CylinderFunction,
    n: usize,
    r: usize,
    s: usize,
    params: &GameParams,
) -> Result<f64> {
    if r == 0 || s == 0 {
        return Err(Error::InvalidPattern { r, s });
    }
    let gamma = r as f64 / (r + s) as f64;
    let limit = omega_aprime(f)?.combine(gamma, &omega_b(params, f)?, 1.0 - gamma);
    let discrete = discrete_omega(
        n,
        DiscreteGame::Periodic { r, s },
        params,
        &embed_psi(f, n)?,
    )?;
    let embedded = embed_psi(&limit, n)?;
    Ok(discrete.sup_distance(&embedded))
}

/// Support requirement of the periodic expansion: a test function of
/// half-width `k` is used with a window bound `K ≥ k + 2`. Returns the
/// smallest admissible `K`, or an error if the supplied one is too small.
pub fn support_margin(f: &CylinderFunction, window_bound: Option<usize>) -> Result<usize> {
    let needed = f.k + 2;
    match window_bound {
        None => Ok(needed),
        Some(big_k) if big_k >= needed => Ok(big_k),
        Some(big_k) => Err(Error::InvalidCylinder(format!(
            "half-width {} needs a window bound of at least {needed}, got {big_k}",
            f.k
        ))),
    }
}
