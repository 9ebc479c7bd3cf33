//! Sufficient conditions for ergodicity of the limiting particle systems via
//! the basic inequality `M < ε`.
//!
//! The mixture generator has two families of local transitions:
//!
//! - single-site flips at `x` with rate `γc′(x,η) + (1−γ)c(x,η)`;
//! - adjacent swaps of `(x, x+1)` with rate `γ/2` when the two sites differ.
//!
//! [`m_bruteforce`] and [`epsilon_bruteforce`] evaluate the defining suprema
//! and infima directly from these measures over every local window, and are
//! checked against the closed forms [`m_closed`] and [`epsilon_value`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rules::{word, GameParams, APRIME_FLIP_RATES};

/// Agreement required between brute-force and closed-form constants.
pub const CROSSCHECK_TOLERANCE: f64 = 1e-12;

fn check_unit_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

/// Rates of the two transition families of the mixture generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalRateTable {
    pub gamma: f64,
    /// `γc′ + (1−γ)c` keyed by `4·η(x−1) + 2·η(x) + η(x+1)`.
    pub flip_rates: [f64; 8],
    /// Applied to the bond `(x, x+1)` when `η(x) ≠ η(x+1)`.
    pub swap_rate: f64,
}

impl LocalRateTable {
    pub fn new(gamma: f64, params: &GameParams) -> Result<Self> {
        check_unit_gamma(gamma)?;
        let b = params.flip_rate_table();
        let flip_rates =
            std::array::from_fn(|i| gamma * APRIME_FLIP_RATES[i] + (1.0 - gamma) * b[i]);
        Ok(Self {
            gamma,
            flip_rates,
            swap_rate: gamma / 2.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    BruteForce,
}

/// Outcome of the basic-inequality test. The condition is sufficient only:
/// `ergodic == false` means the condition fails, not that the system is
/// non-ergodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicityReport {
    #[serde(rename = "M")]
    pub m: f64,
    pub epsilon: f64,
    /// Left side of the condition written as `LHS < 1`, i.e. `M − γ`.
    pub lhs: f64,
    pub ergodic: bool,
    /// `ε − M`.
    pub margin: f64,
    pub method: Method,
    /// False at `γ ∈ {0, 1}`, where the mixture theorem does not apply.
    pub within_theorem: bool,
    /// `|M_bruteforce − M_closed|` when both were computed.
    pub crosscheck_delta: Option<f64>,
}

impl ErgodicityReport {
    fn new(m: f64, epsilon: f64, gamma: f64, method: Method) -> Self {
        Self {
            m,
            epsilon,
            lhs: m - gamma,
            ergodic: m < epsilon,
            margin: epsilon - m,
            method,
            within_theorem: gamma > 0.0 && gamma < 1.0,
            crosscheck_delta: None,
        }
    }
}

/// `max(|γ/2 + (1−γ)(p0−p1)|, |γ/2 + (1−γ)(p2−p3)|)
///  + max(|γ/2 + (1−γ)(p0−p2)|, |γ/2 + (1−γ)(p1−p3)|) + γ`.
pub fn m_closed(gamma: f64, params: &GameParams) -> Result<f64> {
    check_unit_gamma(gamma)?;
    Ok(influence_sum(gamma, params) + gamma)
}

/// The part of `M` contributed by the flip family; also the left side of the
/// mixture condition `LHS < 1`.
fn influence_sum(gamma: f64, params: &GameParams) -> f64 {
    let [p0, p1, p2, p3] = params.as_array();
    let t = |d: f64| (gamma / 2.0 + (1.0 - gamma) * d).abs();
    t(p0 - p1).max(t(p2 - p3)) + t(p0 - p2).max(t(p1 - p3))
}

/// Left side of the mixture condition, `M − γ`.
pub fn ergodicity_lhs(gamma: f64, params: &GameParams) -> Result<f64> {
    check_unit_gamma(gamma)?;
    Ok(influence_sum(gamma, params))
}

/// `ε = 1 + γ`.
pub fn epsilon_value(gamma: f64) -> Result<f64> {
    check_unit_gamma(gamma)?;
    Ok(1.0 + gamma)
}

// Brute-force evaluation works on windows of half-width 2 around site 0
// (bit i is site i − 2): every rate touching site 0 reads at most sites ±2.
const H: usize = 2;
const WINDOWS: u64 = 1 << (2 * H + 1);

fn bit_of(site: i64) -> usize {
    (site + H as i64) as usize
}

fn site(w: u64, x: i64) -> u64 {
    word::bit(w, bit_of(x))
}

fn pattern(w: u64, x: i64) -> usize {
    ((site(w, x - 1) << 2) | (site(w, x) << 1) | site(w, x + 1)) as usize
}

/// A finite measure on at most four atoms.
type Measure = [f64; 4];

/// `sup_H |μ(H) − ν(H)|` over every subset of the atoms.
fn total_variation(mu: &Measure, nu: &Measure) -> f64 {
    (0..16u32)
        .map(|subset| {
            (0..4)
                .filter(|a| subset & (1 << a) != 0)
                .map(|a| mu[a] - nu[a])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Transition families whose site set contains 0.
#[derive(Debug, Clone, Copy)]
enum Family {
    /// `T = {0}`; atom = new value of `η(0)`.
    Flip,
    /// `T = {0, 1}`; atom = `2ζ(0) + ζ(1)`.
    SwapRight,
    /// `T = {−1, 0}`; atom = `2ζ(−1) + ζ(0)`.
    SwapLeft,
}

const FAMILIES: [Family; 3] = [Family::Flip, Family::SwapRight, Family::SwapLeft];

fn family_measure(family: Family, table: &LocalRateTable, w: u64) -> Measure {
    let mut m = [0.0; 4];
    match family {
        Family::Flip => {
            m[(1 - site(w, 0)) as usize] = table.flip_rates[pattern(w, 0)];
        }
        Family::SwapRight => {
            let (a, b) = (site(w, 0), site(w, 1));
            if a != b {
                m[(2 * b + a) as usize] = table.swap_rate;
            }
        }
        Family::SwapLeft => {
            let (a, b) = (site(w, -1), site(w, 0));
            if a != b {
                m[(2 * b + a) as usize] = table.swap_rate;
            }
        }
    }
    m
}

/// `M = sup_x Σ_{T∋x} Σ_{u≠x} sup_{η} ‖c_T(η,·) − c_T(η_u,·)‖_TV`, by
/// enumeration over every window and every `u` in it.
pub fn m_bruteforce(gamma: f64, params: &GameParams) -> Result<f64> {
    let table = LocalRateTable::new(gamma, params)?;
    let hh = H as i64;
    let mut total = 0.0;
    for family in FAMILIES {
        for u in (-hh..=hh).filter(|&u| u != 0) {
            let sup = (0..WINDOWS)
                .map(|w| {
                    let flipped = w ^ (1 << bit_of(u));
                    total_variation(
                        &family_measure(family, &table, w),
                        &family_measure(family, &table, flipped),
                    )
                })
                .fold(0.0, f64::max);
            total += sup;
        }
    }
    Ok(total)
}

/// `ε = inf_u inf_{η} Σ_{T∋u} [c_T(η, {ζ(u) = 1−η(u)}) + c_T(η_u, {ζ(u) = η(u)})]`
/// by enumeration.
///
/// The flip family is accumulated as separate A′ and B masses and combined
/// as `γ·(A′ mass) + (1−γ)·(B mass)`, so the result is exact in floating
/// point whenever the complementary identities hold.
pub fn epsilon_bruteforce(gamma: f64, params: &GameParams) -> Result<f64> {
    check_unit_gamma(gamma)?;
    let b_rates = params.flip_rate_table();
    let swaps = LocalRateTable::new(gamma, params)?;
    let eps = (0..WINDOWS)
        .map(|w| {
            let flipped = w ^ (1 << bit_of(0));
            let mut aprime_mass = 0.0;
            let mut b_mass = 0.0;
            let mut swap_mass = 0.0;
            for (from, to) in [(w, flipped), (flipped, w)] {
                // from → configuration whose site 0 agrees with `to`
                aprime_mass += APRIME_FLIP_RATES[pattern(from, 0)];
                b_mass += b_rates[pattern(from, 0)];
                let target = site(to, 0);
                for family in [Family::SwapRight, Family::SwapLeft] {
                    let m = family_measure(family, &swaps, from);
                    swap_mass += (0..4)
                        .filter(|&atom| {
                            let new_zero = match family {
                                Family::SwapRight => atom >> 1,
                                _ => atom & 1,
                            };
                            new_zero as u64 == target
                        })
                        .map(|atom| m[atom])
                        .sum::<f64>();
                }
            }
            (gamma * aprime_mass + (1.0 - gamma) * b_mass) + swap_mass
        })
        .fold(f64::INFINITY, f64::min);
    Ok(eps)
}

/// Mixture condition `LHS < 1` with closed-form constants.
pub fn is_ergodic_cprime(gamma: f64, params: &GameParams) -> Result<ErgodicityReport> {
    let m = m_closed(gamma, params)?;
    let eps = epsilon_value(gamma)?;
    Ok(ErgodicityReport::new(m, eps, gamma, Method::ClosedForm))
}

/// Mixture condition from the brute-force constants, with the distance to
/// the closed form recorded.
pub fn is_ergodic_cprime_bruteforce(gamma: f64, params: &GameParams) -> Result<ErgodicityReport> {
    let m = m_bruteforce(gamma, params)?;
    let eps = epsilon_bruteforce(gamma, params)?;
    let mut report = ErgodicityReport::new(m, eps, gamma, Method::BruteForce);
    report.crosscheck_delta = Some((m - m_closed(gamma, params)?).abs());
    Ok(report)
}

/// Spin-system condition for game B alone:
/// `sup_x Σ_{u≠x} sup_η |c(x,η) − c(x,η_u)| < inf_{x,η} [c(x,η) + c(x,η_x)]`,
/// both sides by enumeration.
pub fn is_ergodic_b(params: &GameParams) -> ErgodicityReport {
    let rates = params.flip_rate_table();
    let hh = H as i64;
    let lhs: f64 = (-hh..=hh)
        .filter(|&u| u != 0)
        .map(|u| {
            (0..WINDOWS)
                .map(|w| {
                    let flipped = w ^ (1 << bit_of(u));
                    (rates[pattern(w, 0)] - rates[pattern(flipped, 0)]).abs()
                })
                .fold(0.0, f64::max)
        })
        .sum();
    let rhs = (0..WINDOWS)
        .map(|w| rates[pattern(w, 0)] + rates[pattern(w ^ (1 << bit_of(0)), 0)])
        .fold(f64::INFINITY, f64::min);
    let mut report = ErgodicityReport::new(lhs, rhs, 0.0, Method::BruteForce);
    report.crosscheck_delta = Some((lhs - b_closed(params)).abs());
    report
}

/// `max(|p0−p1|, |p2−p3|) + max(|p0−p2|, |p1−p3|)`.
pub fn b_closed(params: &GameParams) -> f64 {
    let [p0, p1, p2, p3] = params.as_array();
    (p0 - p1).abs().max((p2 - p3).abs()) + (p0 - p2).abs().max((p1 - p3).abs())
}

/// Restriction on the sampled parameter cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeConstraint {
    /// Uniform over `[0,1]^4`.
    None,
    /// Uniform over `[0,1]^3` with `p1 = p2`.
    EqualMiddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Samples per independently seeded block.
pub const VOLUME_BLOCK: u64 = 1 << 16;

fn sample_params<R: Rng>(rng: &mut R, constraint: VolumeConstraint) -> GameParams {
    let p0 = rng.random::<f64>();
    let p1 = rng.random::<f64>();
    let (p2, p3) = match constraint {
        VolumeConstraint::None => (rng.random::<f64>(), rng.random::<f64>()),
        VolumeConstraint::EqualMiddle => (p1, rng.random::<f64>()),
    };
    GameParams::new([p0, p1, p2, p3]).expect("uniform draws lie in [0, 1)")
}

/// Hit-or-miss estimate of the volume where the mixture condition holds.
///
/// Block `b` draws from ChaCha8 stream `b` of `seed`, so results are
/// identical for any thread count and a larger sample extends a smaller one.
pub fn volume_estimate(
    gamma: f64,
    constraint: VolumeConstraint,
    samples: u64,
    seed: u64,
) -> Result<VolumeEstimate> {
    check_unit_gamma(gamma)?;
    if samples == 0 {
        return Err(Error::InvalidSimConfig(
            "volume needs at least one sample".into(),
        ));
    }
    let blocks = samples.div_ceil(VOLUME_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = VOLUME_BLOCK.min(samples - b * VOLUME_BLOCK);
            (0..len)
                .filter(|_| influence_sum(gamma, &sample_params(&mut rng, constraint)) < 1.0)
                .count() as u64
        })
        .sum();
    let estimate = hits as f64 / samples as f64;
    Ok(VolumeEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / samples as f64).sqrt(),
        hits,
        samples,
    })
}

/// Deterministic midpoint-grid estimate of the same volume with
/// `points_per_axis` points along each free axis.
pub fn volume_grid(
    gamma: f64,
    constraint: VolumeConstraint,
    points_per_axis: usize,
) -> Result<f64> {
    check_unit_gamma(gamma)?;
    let k = points_per_axis;
    let mid = |i: usize| (i as f64 + 0.5) / k as f64;
    let hits: u64 = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut count = 0u64;
            for j in 0..k {
                for l in 0..k {
                    match constraint {
                        VolumeConstraint::EqualMiddle => {
                            let p = GameParams::new([mid(i), mid(j), mid(j), mid(l)]).unwrap();
                            count += (influence_sum(gamma, &p) < 1.0) as u64;
                        }
                        VolumeConstraint::None => {
                            for m in 0..k {
                                let p = GameParams::new([mid(i), mid(j), mid(l), mid(m)]).unwrap();
                                count += (influence_sum(gamma, &p) < 1.0) as u64;
                            }
                        }
                    }
                }
            }
            count
        })
        .sum();
    let dims = match constraint {
        VolumeConstraint::None => 4,
        VolumeConstraint::EqualMiddle => 3,
    };
    Ok(hits as f64 / (k as f64).powi(dims))
}
