//! Path simulation of the N-player chain for rings too large for the exact
//! engine.
//!
//! Every run derives independent ChaCha8 streams from one root seed: site
//! choice, game choice, neighbor choice, coin tosses and the initial state.
//! Two runs with the same seed but different schedules therefore share their
//! site sequence. Replica `i` uses streams `8i..8i+5`.
//!
//! Statistics are collected after burn-in. The profit CI uses 32 batch means.
//! The neighbor pair law is reported twice: at the fixed pair `(n−1, 1)`
//! around site 0, and as a spatial average over every pair `(x−1, x+1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ergodicity::is_ergodic_cprime;
use crate::error::{Error, Result};
use crate::exact::PairMarginal;
use crate::rules::{GameParams, SchedulerSpec, MIN_PLAYERS};

pub const MAX_SIM_PLAYERS: usize = 10_000_000;
pub const BATCHES: usize = 32;
/// Two-sided 97.5% quantile of Student's t with 31 degrees of freedom.
pub const T_QUANTILE_31: f64 = 2.039_513_446_396_408;

const STREAMS_PER_REPLICA: u64 = 8;
const SITE_STREAM: u64 = 0;
const GAME_STREAM: u64 = 1;
const NEIGHBOR_STREAM: u64 = 2;
const COIN_STREAM: u64 = 3;
const INIT_STREAM: u64 = 4;

/// Heuristic burn-in `⌈10·n·ln(2+n)⌉`.
pub fn default_burnin(n: usize) -> u64 {
    (10.0 * n as f64 * (2.0 + n as f64).ln()).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub sched: SchedulerSpec,
    pub params: GameParams,
    pub turns: u64,
    pub burnin: u64,
    pub seed: u64,
    /// Verify wealth conservation on every turn and fail on a violation.
    #[serde(default)]
    pub check_conservation: bool,
}

impl SimConfig {
    pub fn new(n: usize, sched: SchedulerSpec, params: GameParams, turns: u64, seed: u64) -> Self {
        Self {
            n,
            sched,
            params,
            turns,
            burnin: default_burnin(n),
            seed,
            check_conservation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_PLAYERS {
            return Err(Error::TooFewPlayers(self.n));
        }
        if self.n > MAX_SIM_PLAYERS {
            return Err(Error::InvalidSimConfig(format!(
                "n = {} exceeds the simulation cap of {MAX_SIM_PLAYERS}",
                self.n
            )));
        }
        if self.burnin >= self.turns {
            return Err(Error::InvalidSimConfig(format!(
                "burn-in {} must be smaller than turns {}",
                self.burnin, self.turns
            )));
        }
        if self.turns - self.burnin < BATCHES as u64 {
            return Err(Error::InvalidSimConfig(format!(
                "need at least {BATCHES} measured turns for batch means"
            )));
        }
        self.sched.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimResult {
    pub mu_hat: f64,
    pub ci_halfwidth: f64,
    /// Time-averaged law of `(η(n−1), η(1))`.
    pub pair_marginal_hat: PairMarginal,
    /// Batch-means 95% half-widths for each entry of `pair_marginal_hat`.
    pub pair_marginal_ci: [[f64; 2]; 2],
    /// Time and space average over all pairs `(η(x−1), η(x+1))`.
    pub pair_marginal_spatial: PairMarginal,
    pub turns_used: u64,
    pub aprime_turns: u64,
    pub b_turns: u64,
    /// Sum of payoffs over measured turns.
    pub total_profit: i64,
    /// A′ turns whose payoffs did not cancel. Always zero for a correct chain.
    pub aprime_nonzero_turns: u64,
}

/// Flat bit lattice with neighbor-pair pattern counts kept current.
struct Lattice {
    n: usize,
    words: Vec<u64>,
    /// `counts[2a + b]` = number of `x` with `(η(x−1), η(x+1)) = (a, b)`.
    counts: [u64; 4],
}

impl Lattice {
    fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut words: Vec<u64> = (0..n.div_ceil(64)).map(|_| rng.random()).collect();
        if !n.is_multiple_of(64) {
            let last = words.len() - 1;
            words[last] &= (1u64 << (n % 64)) - 1;
        }
        let mut lat = Self {
            n,
            words,
            counts: [0; 4],
        };
        for x in 0..n {
            lat.counts[lat.pair_pattern(x)] += 1;
        }
        lat
    }

    fn get(&self, x: usize) -> u64 {
        (self.words[x >> 6] >> (x & 63)) & 1
    }

    fn left(&self, x: usize) -> usize {
        if x == 0 {
            self.n - 1
        } else {
            x - 1
        }
    }

    fn right(&self, x: usize) -> usize {
        if x + 1 == self.n {
            0
        } else {
            x + 1
        }
    }

    fn pair_pattern(&self, x: usize) -> usize {
        (2 * self.get(self.left(x)) + self.get(self.right(x))) as usize
    }

    fn set(&mut self, y: usize, v: u64) {
        if self.get(y) == v {
            return;
        }
        // y is the right neighbor of y−1 and the left neighbor of y+1.
        let (a, b) = (self.left(y), self.right(y));
        self.counts[self.pair_pattern(a)] -= 1;
        self.counts[self.pair_pattern(b)] -= 1;
        self.words[y >> 6] ^= 1 << (y & 63);
        self.counts[self.pair_pattern(a)] += 1;
        self.counts[self.pair_pattern(b)] += 1;
    }
}

fn stream(seed: u64, replica: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica * STREAMS_PER_REPLICA + k);
    rng
}

#[derive(Default, Clone, Copy)]
struct Batch {
    turns: u64,
    profit: i64,
    pairs: [u64; 4],
}

fn run(cfg: &SimConfig, replica: u64) -> Result<SimResult> {
    cfg.validate()?;
    let n = cfg.n;
    let mut site_rng = stream(cfg.seed, replica, SITE_STREAM);
    let mut game_rng = stream(cfg.seed, replica, GAME_STREAM);
    let mut neighbor_rng = stream(cfg.seed, replica, NEIGHBOR_STREAM);
    let mut coin_rng = stream(cfg.seed, replica, COIN_STREAM);
    let mut lat = Lattice::random(n, &mut stream(cfg.seed, replica, INIT_STREAM));
    let p = cfg.params.as_array();

    let measured = cfg.turns - cfg.burnin;
    let mut batches = [Batch::default(); BATCHES];
    let mut spatial = [0u128; 4];
    let (mut aprime_turns, mut b_turns, mut aprime_nonzero) = (0u64, 0u64, 0u64);

    for t in 0..cfg.turns {
        let x = site_rng.random_range(0..n);
        let play_aprime = match cfg.sched {
            SchedulerSpec::RandomMixture { gamma } => game_rng.random::<f64>() < gamma,
            SchedulerSpec::PeriodicPattern { r, s } => (t % (r + s) as u64) < r as u64,
            SchedulerSpec::PureAprime => true,
            SchedulerSpec::PureB => false,
        };
        let profit: i64 = if play_aprime {
            let y = if neighbor_rng.random::<bool>() {
                lat.right(x)
            } else {
                lat.left(x)
            };
            let x_wins = coin_rng.random::<bool>();
            lat.set(x, x_wins as u64);
            lat.set(y, !x_wins as u64);
            let (px, py) = if x_wins { (1i64, -1i64) } else { (-1, 1) };
            let net = px + py;
            if net != 0 {
                if cfg.check_conservation {
                    return Err(Error::CrossCheck(format!(
                        "A' turn {t} changed collective wealth by {net}"
                    )));
                }
                if t >= cfg.burnin {
                    aprime_nonzero += 1;
                }
            }
            net
        } else {
            let m = 2 * lat.get(lat.left(x)) + lat.get(lat.right(x));
            let win = coin_rng.random::<f64>() < p[m as usize];
            lat.set(x, win as u64);
            let net = if win { 1 } else { -1 };
            if cfg.check_conservation && net * net != 1 {
                return Err(Error::CrossCheck(format!("B turn {t} paid {net}")));
            }
            net
        };

        if t < cfg.burnin {
            continue;
        }
        let i = t - cfg.burnin;
        if play_aprime {
            aprime_turns += 1;
        } else {
            b_turns += 1;
        }
        let batch = &mut batches[(i as u128 * BATCHES as u128 / measured as u128) as usize];
        batch.turns += 1;
        batch.profit += profit;
        batch.pairs[lat.pair_pattern(0)] += 1;
        for (acc, &c) in spatial.iter_mut().zip(&lat.counts) {
            *acc += c as u128;
        }
    }

    let total_profit: i64 = batches.iter().map(|b| b.profit).sum();
    let mu_hat = total_profit as f64 / measured as f64;
    let ci_halfwidth = batch_ci(batches.iter().map(|b| b.profit as f64 / b.turns as f64));

    let mut fixed = [[0.0; 2]; 2];
    let mut fixed_ci = [[0.0; 2]; 2];
    let mut spatial_probs = [[0.0; 2]; 2];
    for k in 0..4 {
        let hits: u64 = batches.iter().map(|b| b.pairs[k]).sum();
        fixed[k >> 1][k & 1] = hits as f64 / measured as f64;
        fixed_ci[k >> 1][k & 1] =
            batch_ci(batches.iter().map(|b| b.pairs[k] as f64 / b.turns as f64));
        spatial_probs[k >> 1][k & 1] = spatial[k] as f64 / (measured as f64 * n as f64);
    }

    Ok(SimResult {
        mu_hat,
        ci_halfwidth,
        pair_marginal_hat: PairMarginal { probs: fixed },
        pair_marginal_ci: fixed_ci,
        pair_marginal_spatial: PairMarginal {
            probs: spatial_probs,
        },
        turns_used: measured,
        aprime_turns,
        b_turns,
        total_profit,
        aprime_nonzero_turns: aprime_nonzero,
    })
}

fn batch_ci(means: impl Iterator<Item = f64>) -> f64 {
    let means: Vec<f64> = means.collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    T_QUANTILE_31 * (var / k).sqrt()
}

/// Runs one replica of the chain. Identical configs give identical results.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    run(cfg, 0)
}

/// [`simulate`] restricted to periodic schedules: turn `t` plays A′ when
/// `t mod (r+s) < r`, so every period opens with its A′ turns.
pub fn simulate_periodic(cfg: &SimConfig) -> Result<SimResult> {
    match cfg.sched {
        SchedulerSpec::PeriodicPattern { .. } => run(cfg, 0),
        other => Err(Error::InvalidSimConfig(format!(
            "simulate_periodic needs a periodic schedule, got {}",
            other.label()
        ))),
    }
}

/// Independent replicas `0..count` in parallel; replica 0 equals
/// [`simulate`].
pub fn simulate_replicas(cfg: &SimConfig, count: u64) -> Vec<Result<SimResult>> {
    (0..count).into_par_iter().map(|i| run(cfg, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub gamma: f64,
    /// Values taken by each free coordinate.
    pub axis: Vec<f64>,
    /// Tie `p1 = p2`, leaving three free coordinates.
    #[serde(default)]
    pub equal_middle: bool,
}

impl ScanGrid {
    pub fn points(&self) -> Vec<[f64; 4]> {
        let a = &self.axis;
        let mut out = Vec::new();
        for &p0 in a {
            for &p1 in a {
                if self.equal_middle {
                    for &p3 in a {
                        out.push([p0, p1, p1, p3]);
                    }
                } else {
                    for &p2 in a {
                        for &p3 in a {
                            out.push([p0, p1, p2, p3]);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub p: [f64; 4],
    pub mu_b: f64,
    pub ci_b: f64,
    pub mu_c: f64,
    pub ci_c: f64,
    /// `μ_B ≤ 0` within its CI and `μ_C′ > 0` beyond its CI.
    pub effect: bool,
    /// `ε − M` for the mixture; positive when ergodicity is guaranteed.
    pub ergodicity_margin: f64,
    pub error: Option<String>,
}

/// Simulates pure B and the γ-mixture at every grid point with common
/// random numbers. Failures are recorded per point.
pub fn parrondo_scan(grid: &ScanGrid, n: usize, turns: u64, seed: u64) -> Result<Vec<ScanRecord>> {
    if grid.axis.is_empty() {
        return Err(Error::InvalidSimConfig("scan grid is empty".into()));
    }
    let sched_c = SchedulerSpec::mixture(grid.gamma)?;
    Ok(grid
        .points()
        .into_par_iter()
        .map(|p| {
            let mut rec = ScanRecord {
                p,
                mu_b: f64::NAN,
                ci_b: f64::NAN,
                mu_c: f64::NAN,
                ci_c: f64::NAN,
                effect: false,
                ergodicity_margin: f64::NAN,
                error: None,
            };
            let outcome = (|| -> Result<()> {
                let params = GameParams::new(p)?;
                let b = simulate(&SimConfig::new(
                    n,
                    SchedulerSpec::PureB,
                    params,
                    turns,
                    seed,
                ))?;
                let c = simulate(&SimConfig::new(n, sched_c, params, turns, seed))?;
                rec.mu_b = b.mu_hat;
                rec.ci_b = b.ci_halfwidth;
                rec.mu_c = c.mu_hat;
                rec.ci_c = c.ci_halfwidth;
                rec.effect = b.mu_hat <= b.ci_halfwidth && c.mu_hat - c.ci_halfwidth > 0.0;
                rec.ergodicity_margin = is_ergodic_cprime(grid.gamma, &params)?.margin;
                Ok(())
            })();
            if let Err(e) = outcome {
                rec.error = Some(e.to_string());
            }
            rec
        })
        .collect())
}
