//! Spatially dependent Parrondo games on a ring of `N` players.
//!
//! Game A′ lets a random player duel a random nearest neighbor with a fair
//! coin, so collective wealth never changes. Game B lets a random player toss
//! a `p_m` coin where `m = 2·η(x−1) + η(x+1)` encodes the win/loss status of
//! both neighbors. Game C′ is a random mixture or a periodic pattern of the
//! two.
//!
//! The crate is organized by the kind of analysis:
//!
//! - [`rules`]: configurations, the local updates (flip, duel, swap) and the
//!   local rates `c` and `c′`.
//! - [`exact`]: matrix-free transition operators on all `2^N` states,
//!   stationary distributions and exact mean profits.
//! - [`generator`]: cylinder functions, the generators of the limiting
//!   particle system and their finite-ring counterparts.
//! - [`ergodicity`]: the basic-inequality constants `M` and `ε` and the
//!   parameter-volume estimates.
//! - [`montecarlo`]: path simulation for rings far beyond the exact cap.

pub mod ergodicity;
pub mod error;
pub mod exact;
pub mod generator;
pub mod montecarlo;
pub mod rules;

pub use error::{Error, Result};
pub use rules::{Configuration, GameParams, SchedulerSpec};
