//! Acceptance criteria. Prints one `criterion N PASS|FAIL` line each and exits
//! non-zero if any criterion or its time limit is missed. Criteria run one at a
//! time so wall-clock limits are not distorted by each other.

use std::process::Command;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use parrondo_core::ergodicity::{epsilon_bruteforce, ergodicity_lhs, m_bruteforce, m_closed};
use parrondo_core::exact::{
    mean_profit, mean_profit_periodic, mean_profit_random, stationary, Cycle, Kernel, Mixture,
    SolverOptions,
};
use parrondo_core::generator::{lemma_check, periodic_residual, CylinderFunction, DiscreteGame};
use parrondo_core::montecarlo::{simulate, SimConfig};
use parrondo_core::rules::{Outcome, Side, APRIME_FLIP_RATES};
use parrondo_core::{Configuration, GameParams, SchedulerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Last criterion that printed its verdict line.
static REPORTED: AtomicU32 = AtomicU32::new(0);

fn verdict(id: u32, title: &str, ok: bool, detail: &str, elapsed: Duration, limit_s: f64) {
    let secs = elapsed.as_secs_f64();
    let pass = ok && secs < limit_s;
    println!(
        "criterion {id:>2} {} {title}: {detail} [{secs:.2}s of {limit_s}s]",
        if pass { "PASS" } else { "FAIL" }
    );
    REPORTED.store(id, Ordering::SeqCst);
    assert!(ok, "criterion {id} ({title}) failed: {detail}");
    assert!(
        secs < limit_s,
        "criterion {id} ({title}) took {secs:.2}s, limit {limit_s}s"
    );
}

fn volume_cli(args: &[&str]) -> (f64, f64) {
    let out = Command::new(env!("CARGO_BIN_EXE_parrondo"))
        .arg("volume")
        .args(args)
        .args(["--format", "json"])
        .output()
        .expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    (
        doc["estimate"].as_f64().unwrap(),
        doc["stderr"].as_f64().unwrap(),
    )
}

fn random_params<R: Rng>(rng: &mut R) -> GameParams {
    GameParams::new(std::array::from_fn(|_| rng.random::<f64>())).unwrap()
}

/// Interior coins and a mixture weight for which the sufficient ergodicity
/// condition holds.
fn ergodic_point<R: Rng>(rng: &mut R, gamma: Option<f64>) -> (f64, GameParams) {
    loop {
        let g = gamma.unwrap_or_else(|| rng.random_range(0.05..0.95));
        let p = GameParams::new(std::array::from_fn(|_| rng.random_range(0.02..0.98))).unwrap();
        if ergodicity_lhs(g, &p).unwrap() < 1.0 {
            return (g, p);
        }
    }
}

fn c01_volume_five_sixths() {
    let t = Instant::now();
    let (est, se) = volume_cli(&["--gamma", "0.5", "--samples", "1e6"]);
    let elapsed = t.elapsed();
    let diff = (est - 5.0 / 6.0).abs();
    verdict(
        1,
        "volume at gamma 1/2 is 5/6",
        diff <= 3.0 * se,
        &format!("estimate {est:.6}, stderr {se:.2e}, |diff| {diff:.2e}"),
        elapsed,
        5.0,
    );
}

fn c02_volume_three_quarters_and_threshold() {
    let t = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for g in ["0.40", "0.50"] {
        let (est, se) = volume_cli(&["--gamma", g, "--samples", "1e6", "--equal-middle"]);
        ok &= (est - 0.75).abs() <= 3.0 * se;
        detail.push(format!("gamma {g}: {est:.6} (se {se:.1e})"));
    }
    let (est, se) = volume_cli(&["--gamma", "0.25", "--samples", "1e6", "--equal-middle"]);
    ok &= 0.75 - est >= 5.0 * se;
    detail.push(format!(
        "gamma 0.25: {est:.6}, gap {:.1} se",
        (0.75 - est) / se
    ));
    verdict(
        2,
        "equal-middle volume 3/4 above gamma 1/3",
        ok,
        &detail.join("; "),
        t.elapsed(),
        10.0,
    );
}

fn c03_influence_sum_crosscheck() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let g = rng.random::<f64>();
        let p = random_params(&mut rng);
        worst = worst.max((m_bruteforce(g, &p).unwrap() - m_closed(g, &p).unwrap()).abs());
    }
    verdict(
        3,
        "brute-force M equals closed form",
        worst <= 1e-12,
        &format!("max delta {worst:.2e} over 10^4 draws"),
        t.elapsed(),
        5.0,
    );
}

fn c04_flip_rate_identities() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for key in 0..8 {
        if APRIME_FLIP_RATES[key] + APRIME_FLIP_RATES[key ^ 2] != 1.0 {
            bad += 1;
        }
    }
    for _ in 0..100 {
        let g = rng.random::<f64>();
        let p = random_params(&mut rng);
        let c = p.flip_rate_table();
        bad += (0..8).filter(|&k| c[k] + c[k ^ 2] != 1.0).count();
        if epsilon_bruteforce(g, &p).unwrap() != 1.0 + g {
            bad += 1;
        }
    }
    verdict(
        4,
        "c + c_bar = 1 and epsilon = 1 + gamma",
        bad == 0,
        &format!("{bad} inexact identities over 8 patterns and 100 draws"),
        t.elapsed(),
        1.0,
    );
}

fn c05_single_step_generator_identity() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = CylinderFunction::random(1, &mut rng).unwrap();
        let p = random_params(&mut rng);
        for game in [
            DiscreteGame::Aprime,
            DiscreteGame::B,
            DiscreteGame::Mixture { gamma: 0.3 },
            DiscreteGame::Mixture { gamma: 0.7 },
        ] {
            for n in [6, 8, 10] {
                worst = worst.max(lemma_check(&f, n, game, &p).unwrap().residual);
            }
        }
    }
    verdict(
        5,
        "discrete generator matches the limit on embedded functions",
        worst <= 1e-12,
        &format!("max residual {worst:.2e}"),
        t.elapsed(),
        30.0,
    );
}

fn c06_periodic_residual_is_order_one_over_n() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let f = CylinderFunction::random(1, &mut rng).unwrap();
    let p = GameParams::new([0.1, 0.6, 0.6, 0.9]).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (r, s) in [(1, 1), (2, 1), (1, 2)] {
        let res: Vec<f64> = [6, 8, 10, 12, 14]
            .iter()
            .map(|&n| periodic_residual(&f, n, r, s, &p).unwrap())
            .collect();
        let ratio = res[3] / res[0];
        ok &= res.windows(2).all(|w| w[1] < w[0]);
        ok &= (0.35..=0.65).contains(&ratio);
        detail.push(format!("[{r},{s}] ratio {ratio:.3}"));
    }
    verdict(
        6,
        "periodic residual decreases like 1/N",
        ok,
        &detail.join(", "),
        t.elapsed(),
        120.0,
    );
}

fn c07_full_state_and_pair_formulas_agree() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<_> = (0..100).map(|_| ergodic_point(&mut rng, None)).collect();
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for n in 5..=10 {
        for (g, p) in &points {
            let mp = mean_profit_random(n, *g, p, &opts).unwrap();
            worst = worst.max((mp.mu - mp.pair_formula_mu.unwrap()).abs());
        }
    }
    verdict(
        7,
        "two formulas for the mean agree",
        worst <= 1e-10,
        &format!("max delta {worst:.2e} over 100 points, N = 5..10"),
        t.elapsed(),
        60.0,
    );
}

// Dense oracle for N = 8: every transition written out from the
// single-configuration rules and solved by LU.

fn dense_b(n: usize, p: &GameParams) -> DMatrix<f64> {
    let len = 1 << n;
    let mut m = DMatrix::zeros(len, len);
    for s in 0..len {
        let c = Configuration::from_word(n, s as u64).unwrap();
        for x in 0..n {
            let pm = p.p(c.m_index(x).unwrap());
            let flipped = c.flip(x).unwrap().word() as usize;
            let (win, lose) = if c.get(x).unwrap() == 1 {
                (s, flipped)
            } else {
                (flipped, s)
            };
            m[(s, win)] += pm / n as f64;
            m[(s, lose)] += (1.0 - pm) / n as f64;
        }
    }
    m
}

fn dense_aprime(n: usize) -> DMatrix<f64> {
    let len = 1 << n;
    let mut m = DMatrix::zeros(len, len);
    for s in 0..len {
        let c = Configuration::from_word(n, s as u64).unwrap();
        for x in 0..n {
            for side in [Side::Left, Side::Right] {
                for outcome in [Outcome::Win, Outcome::Lose] {
                    let t = c.duel(x, side, outcome).unwrap().word() as usize;
                    m[(s, t)] += 0.25 / n as f64;
                }
            }
        }
    }
    m
}

fn dense_stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let len = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(len, len);
    for j in 0..len {
        a[(len - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(len);
    rhs[len - 1] = 1.0;
    a.lu().solve(&rhs).unwrap()
}

fn b_profit(n: usize, p: &GameParams) -> DVector<f64> {
    DVector::from_fn(1 << n, |s, _| {
        let c = Configuration::from_word(n, s as u64).unwrap();
        (0..n)
            .map(|x| 2.0 * p.p(c.m_index(x).unwrap()) - 1.0)
            .sum::<f64>()
            / n as f64
    })
}

fn dense_mu(n: usize, sched: SchedulerSpec, p: &GameParams) -> f64 {
    let (a, b, f) = (dense_aprime(n), dense_b(n, p), b_profit(n, p));
    match sched {
        SchedulerSpec::RandomMixture { gamma } => {
            let pi = dense_stationary(&(&a * gamma + &b * (1.0 - gamma)));
            (1.0 - gamma) * pi.dot(&f)
        }
        SchedulerSpec::PeriodicPattern { r, s } => {
            let mut cycle = DMatrix::identity(1 << n, 1 << n);
            for _ in 0..r {
                cycle = &cycle * &a;
            }
            for _ in 0..s {
                cycle = &cycle * &b;
            }
            let mut row = dense_stationary(&cycle).transpose();
            for _ in 0..r {
                row = &row * &a;
            }
            let mut acc = 0.0;
            for _ in 0..s {
                acc += row.dot(&f.transpose());
                row = &row * &b;
            }
            acc / (r + s) as f64
        }
        _ => unreachable!(),
    }
}

fn c08_simulation_matches_exact_mean() {
    let t = Instant::now();
    let p = GameParams::new([0.1, 0.6, 0.6, 0.9]).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (seed, sched) in [
        (81, SchedulerSpec::mixture(0.5).unwrap()),
        (82, SchedulerSpec::periodic(2, 1).unwrap()),
    ] {
        let exact = dense_mu(8, sched, &p);
        let engine = mean_profit(8, &sched, &p, &SolverOptions::default())
            .unwrap()
            .mu;
        let sim = simulate(&SimConfig::new(8, sched, p, 10_000_000, seed)).unwrap();
        let diff = (sim.mu_hat - exact).abs();
        ok &= (engine - exact).abs() <= 1e-12 && diff <= 3.0 * sim.ci_halfwidth;
        detail.push(format!(
            "{}: exact {exact:.6}, sim {:.6} +- {:.1e}",
            sched.label(),
            sim.mu_hat,
            sim.ci_halfwidth
        ));
    }
    verdict(
        8,
        "simulated mean within 3 ci of exact",
        ok,
        &detail.join("; "),
        t.elapsed(),
        60.0,
    );
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.2e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c09_convergence_trend() {
    let t = Instant::now();
    let opts = SolverOptions {
        tol: 1e-15,
        ..SolverOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let patterns = [(1, 1), (2, 1), (1, 2)];
    let sizes: Vec<usize> = (8..=15).collect();
    let (mut diffs_ok, mut gaps_ok) = (0, 0);
    for case in 0..10 {
        let (r, s) = patterns[case % 3];
        let (g, p) = ergodic_point(&mut rng, Some(r as f64 / (r + s) as f64));
        let (mix, res): (Vec<f64>, Vec<f64>) = sizes
            .iter()
            .map(|&n| {
                let mp = mean_profit_random(n, g, &p, &opts).unwrap();
                (mp.mu, mp.residual)
            })
            .unzip();
        let per: Vec<f64> = sizes
            .iter()
            .map(|&n| mean_profit_periodic(n, r, s, &p, &opts).unwrap().mu)
            .collect();
        let d: Vec<f64> = mix.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let gap: Vec<f64> = mix[..7]
            .iter()
            .zip(&per[..7])
            .map(|(a, b)| (a - b).abs())
            .collect();
        // |drift| ≤ 1, so each solver residual bounds the error it adds to μ
        let d_ok = (0..d.len() - 1).all(|i| d[i + 1] <= d[i] + res[i] + res[i + 1] + res[i + 2]);
        let gap_ok = gap.windows(2).all(|w| w[1] <= w[0]);
        println!(
            "  case {case} [{r},{s}] p {:?}: diffs {} ok {d_ok}; gaps {} ok {gap_ok}",
            p.as_array(),
            sci(&d),
            sci(&gap)
        );
        diffs_ok += d_ok as usize;
        gaps_ok += gap_ok as usize;
    }
    verdict(
        9,
        "successive differences and mixture/periodic gap shrink",
        diffs_ok >= 9 && gaps_ok >= 9,
        &format!("differences non-increasing in {diffs_ok}/10, gap shrinking in {gaps_ok}/10"),
        t.elapsed(),
        600.0,
    );
}

fn c10_fair_coins_are_exactly_fair() {
    let t = Instant::now();
    let fair = GameParams::fair();
    let opts = SolverOptions::default();
    let schedules = [
        SchedulerSpec::mixture(0.25).unwrap(),
        SchedulerSpec::mixture(0.5).unwrap(),
        SchedulerSpec::mixture(0.75).unwrap(),
        SchedulerSpec::periodic(1, 1).unwrap(),
        SchedulerSpec::periodic(2, 1).unwrap(),
        SchedulerSpec::periodic(1, 2).unwrap(),
        SchedulerSpec::periodic(3, 2).unwrap(),
        SchedulerSpec::PureB,
        SchedulerSpec::PureAprime,
    ];
    let mut worst: f64 = 0.0;
    for sched in &schedules {
        for n in 3..=12 {
            worst = worst.max(mean_profit(n, sched, &fair, &opts).unwrap().mu.abs());
        }
    }
    let mut cfg = SimConfig::new(
        1000,
        SchedulerSpec::PureAprime,
        GameParams::new([0.1, 0.6, 0.6, 0.9]).unwrap(),
        1_000_000,
        10,
    );
    cfg.check_conservation = true;
    let sim = simulate(&cfg).unwrap();
    let ok = worst <= 1e-12 && sim.total_profit == 0 && sim.aprime_nonzero_turns == 0;
    verdict(
        10,
        "fair coins give zero mean, A' conserves wealth",
        ok,
        &format!(
            "max |mu| {worst:.2e} over 9 schedules and N = 3..12; A' run: total {}, nonzero turns {}",
            sim.total_profit, sim.aprime_nonzero_turns
        ),
        t.elapsed(),
        60.0,
    );
}

fn c11_stationary_law_is_rotation_invariant() {
    let t = Instant::now();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (g, p) = ergodic_point(&mut rng, None);
        for n in [5, 8] {
            let kernels: [Box<dyn Kernel>; 2] = [
                Box::new(Mixture::new(n, g, &p).unwrap()),
                Box::new(Cycle::new(n, 2, 1, &p).unwrap()),
            ];
            for k in &kernels {
                let pi = stationary(k.as_ref(), &opts).unwrap().dist;
                for shift in 1..n {
                    worst = worst.max(pi.l1_distance(&pi.rotate(shift)));
                }
            }
        }
    }
    verdict(
        11,
        "stationary law commutes with rotation",
        worst <= 10.0 * opts.tol,
        &format!("max L1 distance {worst:.2e}, bound {:.0e}", 10.0 * opts.tol),
        t.elapsed(),
        60.0,
    );
}

fn main() {
    let criteria: [(u32, fn()); 11] = [
        (1, c01_volume_five_sixths),
        (2, c02_volume_three_quarters_and_threshold),
        (3, c03_influence_sum_crosscheck),
        (4, c04_flip_rate_identities),
        (5, c05_single_step_generator_identity),
        (6, c06_periodic_residual_is_order_one_over_n),
        (7, c07_full_state_and_pair_formulas_agree),
        (8, c08_simulation_matches_exact_mean),
        (9, c09_convergence_trend),
        (10, c10_fair_coins_are_exactly_fair),
        (11, c11_stationary_law_is_rotation_invariant),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        if std::panic::catch_unwind(run).is_err() {
            if REPORTED.load(Ordering::SeqCst) != id {
                println!("criterion {id:>2} FAIL: stopped before reaching a verdict");
            }
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
