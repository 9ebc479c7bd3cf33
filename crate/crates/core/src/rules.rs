//! Configurations on the ring and the local rules shared by every engine.
//!
//! Sites are indexed `0..n` with `n − 1` adjacent to `0`. The centered labels
//! `l_N..=r_N` used for the infinite-lattice limit map onto indices by
//! `label ↦ label mod n`, so label 0 is index 0, label −1 is index `n − 1`
//! and label 1 is index 1. See [`label_range`] and [`index_of_label`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest ring on which left and right neighbors are distinct sites.
pub const MIN_PLAYERS: usize = 3;

/// Largest ring a [`Configuration`] can hold in a single machine word.
pub const WORD_PLAYERS: usize = 64;

/// Bit-level helpers on packed configurations; bit `x` of the word is `η(x)`.
pub mod word {
    #[inline]
    pub fn bit(word: u64, x: usize) -> u64 {
        (word >> x) & 1
    }

    #[inline]
    pub fn left(x: usize, n: usize) -> usize {
        if x == 0 {
            n - 1
        } else {
            x - 1
        }
    }

    #[inline]
    pub fn right(x: usize, n: usize) -> usize {
        if x + 1 == n {
            0
        } else {
            x + 1
        }
    }

    /// `m_x(η) = 2·η(x−1) + η(x+1)`.
    #[inline]
    pub fn neighbor_index(word: u64, n: usize, x: usize) -> usize {
        ((bit(word, left(x, n)) << 1) | bit(word, right(x, n))) as usize
    }

    /// Local pattern `4·η(x−1) + 2·η(x) + η(x+1)`, the key of the rate tables.
    #[inline]
    pub fn pattern(word: u64, n: usize, x: usize) -> usize {
        ((bit(word, left(x, n)) << 2) | (bit(word, x) << 1) | bit(word, right(x, n))) as usize
    }

    /// Overwrites sites `x` and `y` with `vx` and `vy`.
    #[inline]
    pub fn set_pair(word: u64, x: usize, vx: u64, y: usize, vy: u64) -> u64 {
        let cleared = word & !((1u64 << x) | (1u64 << y));
        cleared | (vx << x) | (vy << y)
    }

    /// All-ones word of width `n`.
    #[inline]
    pub fn mask(n: usize) -> u64 {
        if n >= 64 {
            u64::MAX
        } else {
            (1u64 << n) - 1
        }
    }
}

/// Which neighbor a player duels in game A′.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Result of a duel from the point of view of the player who initiated it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Lose,
}

/// Win/loss statuses of `n` players on a ring, packed into one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    n: usize,
    bits: u64,
}

impl Configuration {
    /// Builds a configuration from explicit 0/1 statuses.
    pub fn new(statuses: &[u8]) -> Result<Self> {
        let n = statuses.len();
        check_ring_size(n)?;
        let mut bits = 0u64;
        for (x, &s) in statuses.iter().enumerate() {
            match s {
                0 => {}
                1 => bits |= 1 << x,
                other => {
                    return Err(Error::InvalidConfiguration(format!(
                        "status at site {x} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(Self { n, bits })
    }

    /// Wraps a packed word; bits at positions `>= n` must be clear.
    pub fn from_word(n: usize, bits: u64) -> Result<Self> {
        check_ring_size(n)?;
        if bits & !word::mask(n) != 0 {
            return Err(Error::InvalidConfiguration(format!(
                "word {bits:#x} has bits set beyond {n} players"
            )));
        }
        Ok(Self { n, bits })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_word(n, 0)
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::from_word(n, word::mask(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Packed statuses; this is also the state index used by the exact engine.
    pub fn word(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, x: usize) -> Result<u8> {
        self.check(x)?;
        Ok(word::bit(self.bits, x) as u8)
    }

    pub fn statuses(&self) -> Vec<u8> {
        (0..self.n).map(|x| word::bit(self.bits, x) as u8).collect()
    }

    /// Number of winners, `Σ_x η(x)`.
    pub fn winners(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn m_index(&self, x: usize) -> Result<usize> {
        self.check(x)?;
        Ok(word::neighbor_index(self.bits, self.n, x))
    }

    /// Local pattern `4·η(x−1) + 2·η(x) + η(x+1)`.
    pub fn pattern(&self, x: usize) -> Result<usize> {
        self.check(x)?;
        Ok(word::pattern(self.bits, self.n, x))
    }

    /// `η_x`: the configuration with site `x` complemented.
    pub fn flip(&self, x: usize) -> Result<Self> {
        self.check(x)?;
        Ok(Self {
            n: self.n,
            bits: self.bits ^ (1 << x),
        })
    }

    /// Player `x` duels its `side` neighbor; the winner's site becomes 1 and
    /// the loser's 0 regardless of their previous statuses.
    pub fn duel(&self, x: usize, side: Side, outcome: Outcome) -> Result<Self> {
        self.check(x)?;
        let y = match side {
            Side::Left => word::left(x, self.n),
            Side::Right => word::right(x, self.n),
        };
        let (vx, vy) = match outcome {
            Outcome::Win => (1, 0),
            Outcome::Lose => (0, 1),
        };
        Ok(Self {
            n: self.n,
            bits: word::set_pair(self.bits, x, vx, y, vy),
        })
    }

    /// `_xη_{x+1}`: exchanges the statuses at `x` and `x + 1`.
    pub fn swap(&self, x: usize) -> Result<Self> {
        self.check(x)?;
        let y = word::right(x, self.n);
        let (vx, vy) = (word::bit(self.bits, x), word::bit(self.bits, y));
        Ok(Self {
            n: self.n,
            bits: word::set_pair(self.bits, x, vy, y, vx),
        })
    }

    /// Cyclic rotation by `k` sites: the result has `η(x − k)` at site `x`.
    pub fn rotate(&self, k: usize) -> Self {
        Self {
            n: self.n,
            bits: rotate_word(self.bits, self.n, k),
        }
    }

    /// Reflection `x ↦ −x (mod n)`.
    pub fn reflect(&self) -> Self {
        Self {
            n: self.n,
            bits: reflect_word(self.bits, self.n),
        }
    }

    fn check(&self, x: usize) -> Result<()> {
        if x < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: x,
                n: self.n,
            })
        }
    }
}

pub fn rotate_word(bits: u64, n: usize, k: usize) -> u64 {
    let k = k % n;
    if k == 0 {
        return bits;
    }
    ((bits << k) | (bits >> (n - k))) & word::mask(n)
}

pub fn reflect_word(bits: u64, n: usize) -> u64 {
    let mut out = bits & 1;
    for x in 1..n {
        out |= word::bit(bits, x) << (n - x);
    }
    out
}

fn check_ring_size(n: usize) -> Result<()> {
    if n < MIN_PLAYERS {
        return Err(Error::TooFewPlayers(n));
    }
    if n > WORD_PLAYERS {
        return Err(Error::StateSpaceTooLarge {
            n,
            cap: WORD_PLAYERS,
        });
    }
    Ok(())
}

/// `(l_N, r_N)`: the centered labels of the leftmost and rightmost player.
pub fn label_range(n: usize) -> (i64, i64) {
    let n = n as i64;
    if n % 2 == 1 {
        (-(n - 1) / 2, (n - 1) / 2)
    } else {
        (-n / 2, n / 2 - 1)
    }
}

/// Index of a centered label, or `None` if the label is not on the ring.
pub fn index_of_label(label: i64, n: usize) -> Option<usize> {
    let (lo, hi) = label_range(n);
    (lo..=hi)
        .contains(&label)
        .then(|| label.rem_euclid(n as i64) as usize)
}

pub fn label_of_index(index: usize, n: usize) -> i64 {
    let (_, hi) = label_range(n);
    let i = index as i64;
    if i <= hi {
        i
    } else {
        i - n as i64
    }
}

/// The four coin probabilities of game B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    p: [f64; 4],
}

impl GameParams {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        Ok(Self { p })
    }

    /// The three-parameter model: `p1 = p2` (one winning neighbor, either side).
    pub fn symmetric(p0: f64, p_one: f64, p3: f64) -> Result<Self> {
        Self::new([p0, p_one, p_one, p3])
    }

    pub fn fair() -> Self {
        Self { p: [0.5; 4] }
    }

    pub fn p(&self, m: usize) -> f64 {
        self.p[m]
    }

    pub fn q(&self, m: usize) -> f64 {
        1.0 - self.p[m]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.p
    }

    /// True when the model reduces to the three-parameter game (`p1 = p2`).
    pub fn has_equal_middle(&self) -> bool {
        self.p[1] == self.p[2]
    }

    /// True when every coin is strictly random, which makes the B chain
    /// irreducible and aperiodic.
    pub fn is_interior(&self) -> bool {
        self.p.iter().all(|&p| p > 0.0 && p < 1.0)
    }

    /// Parameters of the mirror-image chain under `x ↦ −x`, which swaps the
    /// roles of the left and right neighbor: `(p0, p2, p1, p3)`.
    pub fn reflected(&self) -> Self {
        Self {
            p: [self.p[0], self.p[2], self.p[1], self.p[3]],
        }
    }

    /// Expected profit `2p_m − 1` of a single game-B toss.
    pub fn drift(&self, m: usize) -> f64 {
        2.0 * self.p[m] - 1.0
    }

    /// `c(x, η)` keyed by local pattern `4·η(x−1) + 2·η(x) + η(x+1)`.
    pub fn flip_rate_table(&self) -> [f64; 8] {
        let mut table = [0.0; 8];
        for (pattern, rate) in table.iter_mut().enumerate() {
            let m = ((pattern >> 1) & 2) | (pattern & 1);
            *rate = if pattern & 2 == 0 {
                self.p(m)
            } else {
                self.q(m)
            };
        }
        table
    }
}

/// `c′(x, η)` keyed by local pattern.
pub const APRIME_FLIP_RATES: [f64; 8] = aprime_table();

const fn aprime_table() -> [f64; 8] {
    let mut table = [0.0; 8];
    let mut pattern = 0;
    while pattern < 8 {
        let l = (pattern >> 2) & 1;
        let c = (pattern >> 1) & 1;
        let r = pattern & 1;
        let hits = (c == r) as u8 + (c == l) as u8;
        table[pattern] = hits as f64 * 0.5;
        pattern += 1;
    }
    table
}

/// `c(x, η)`: `p_{m_x(η)}` if `η(x) = 0`, `q_{m_x(η)}` otherwise.
pub fn rate_b(params: &GameParams, cfg: &Configuration, x: usize) -> Result<f64> {
    let m = cfg.m_index(x)?;
    Ok(if cfg.get(x)? == 0 {
        params.p(m)
    } else {
        params.q(m)
    })
}

/// `c′(x, η) = ½[1{η(x)=η(x+1)} + 1{η(x)=η(x−1)}]`.
pub fn rate_aprime(cfg: &Configuration, x: usize) -> Result<f64> {
    let here = cfg.get(x)?;
    let l = cfg.get(word::left(x, cfg.n()))?;
    let r = cfg.get(word::right(x, cfg.n()))?;
    Ok(0.5 * ((here == r) as u8 + (here == l) as u8) as f64)
}

/// How games A′ and B are sequenced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSpec {
    /// Each turn a γ-coin picks A′ (heads) or B.
    RandomMixture { gamma: f64 },
    /// `r` turns of A′ followed by `s` turns of B, repeated.
    PeriodicPattern { r: usize, s: usize },
    /// Degenerate schedule playing only A′.
    PureAprime,
    /// Degenerate schedule playing only B.
    PureB,
}

impl SchedulerSpec {
    pub fn mixture(gamma: f64) -> Result<Self> {
        let spec = Self::RandomMixture { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn periodic(r: usize, s: usize) -> Result<Self> {
        let spec = Self::PeriodicPattern { r, s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RandomMixture { gamma } => check_gamma(gamma),
            Self::PeriodicPattern { r, s } if r == 0 || s == 0 => {
                Err(Error::InvalidPattern { r, s })
            }
            _ => Ok(()),
        }
    }

    /// Long-run fraction of A′ turns.
    pub fn aprime_fraction(&self) -> f64 {
        match *self {
            Self::RandomMixture { gamma } => gamma,
            Self::PeriodicPattern { r, s } => r as f64 / (r + s) as f64,
            Self::PureAprime => 1.0,
            Self::PureB => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::RandomMixture { gamma } => format!("mixture(gamma={gamma})"),
            Self::PeriodicPattern { r, s } => format!("periodic(r={r},s={s})"),
            Self::PureAprime => "pure_aprime".to_string(),
            Self::PureB => "pure_b".to_string(),
        }
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}
