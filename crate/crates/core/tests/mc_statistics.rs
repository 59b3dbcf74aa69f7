use std::collections::HashMap;

use ysm_core::fokker_planck::{diffusion_m2_dist, drift_m1_dist};
use ysm_core::mc::{
    biased_coin, simulate, transaction_pairing, win_probability, Engine, EngineOptions,
    SimulationOptions,
};
use ysm_core::{ModelParams, Population, RngStream, WealthDistribution};

/// Upper 0.1% quantiles of the chi-square distribution.
fn chi2_999(dof: usize) -> f64 {
    match dof {
        2 => 13.816,
        4 => 18.467,
        _ => unreachable!(),
    }
}

fn chi2(counts: &[u64], p: f64) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 * p;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[test]
fn four_agent_matchings_are_uniform() {
    let pop = Population::equal(4, 4.0).unwrap();
    let mut rng = RngStream::new(11, 0);
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for _ in 0..30_000 {
        let pairs = transaction_pairing(&pop, &mut rng).unwrap();
        let partner_of_0 = pairs
            .iter()
            .find_map(|&(a, b)| match (a, b) {
                (0, x) | (x, 0) => Some(x),
                _ => None,
            })
            .unwrap();
        *counts.entry(partner_of_0).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    let c: Vec<u64> = (1..4).map(|k| counts[&k]).collect();
    let stat = chi2(&c, 1.0 / 3.0);
    assert!(stat < chi2_999(2), "chi2 = {stat}, counts {c:?}");
}

#[test]
fn odd_population_sit_out_is_uniform() {
    let pop = Population::equal(5, 5.0).unwrap();
    let mut rng = RngStream::new(12, 0);
    let mut counts = [0u64; 5];
    for _ in 0..25_000 {
        let pairs = transaction_pairing(&pop, &mut rng).unwrap();
        let mut seen = [false; 5];
        for (a, b) in pairs {
            seen[a] = true;
            seen[b] = true;
        }
        counts[seen.iter().position(|s| !s).unwrap()] += 1;
    }
    let stat = chi2(&counts, 0.2);
    assert!(stat < chi2_999(4), "chi2 = {stat}, counts {counts:?}");
}

#[test]
fn biased_coin_frequency() {
    // bias = 1 * 1 * 0.1 * 5 = 0.5, so P(win) = 0.75
    let params = ModelParams::constant(1.0, 0.0, 10, 10.0);
    let mut rng = RngStream::new(13, 0);
    let trials = 40_000;
    let wins = (0..trials)
        .filter(|_| biased_coin(6.0, 1.0, &params, &mut rng).eta > 0.0)
        .count();
    let freq = wins as f64 / trials as f64;
    let se = (0.75f64 * 0.25 / trials as f64).sqrt();
    assert!((freq - 0.75).abs() < 4.0 * se, "freq {freq}");
}

#[test]
fn coin_is_antisymmetric() {
    let params = ModelParams::constant(0.4, 0.1, 20, 20.0);
    for (z, x) in [(1.0, 2.0), (0.1, 7.5), (3.0, 3.0), (30.0, 0.2)] {
        let (p, _) = win_probability(z, x, &params);
        let (q, _) = win_probability(x, z, &params);
        assert!((p + q - 1.0).abs() < 1e-15);
    }
}

/// Frozen population: the one-step increments of every agent, averaged over many
/// independent steps, reproduce the drift and diffusion coefficients.
#[test]
fn kramers_moyal_coefficients() {
    let n = 40;
    let mut init_rng = RngStream::new(99, 1);
    let pop0 = Population::exponential(n, n as f64, init_rng.inner()).unwrap();
    let dist = WealthDistribution::from_population(&pop0).unwrap();
    let xs = pop0.wealths().to_vec();
    let finite = n as f64 / (n - 1) as f64;

    for (dt, reps) in [(1e-2, 60_000usize), (1e-3, 120_000)] {
        let params = ModelParams::constant(0.3, 0.1, n, n as f64).with_dt(dt);
        let mut engine = Engine::new(
            params.clone(),
            EngineOptions::default(),
            RngStream::new(5, 0),
        )
        .unwrap();
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        let mut s3 = vec![0.0; n];
        let mut sq1 = vec![0.0; n];
        for _ in 0..reps {
            let mut pop = pop0.clone();
            engine.step(&mut pop).unwrap();
            for i in 0..n {
                let d = pop.wealths()[i] - xs[i];
                s1[i] += d;
                sq1[i] += d * d / dt / dt;
                s2[i] += d * d;
                s3[i] += d * d * d;
            }
        }
        let mut chi = 0.0;
        for i in 0..n {
            let z = xs[i];
            let tax = 0.1 * (params.total_wealth / n as f64) - 0.1 * z;
            let m1 = drift_m1_dist(&dist, z, &params).unwrap();
            // Partners exclude the agent itself, whose own exchange term vanishes.
            let expected_m1 = tax + finite * (m1 - tax);
            let mean = s1[i] / reps as f64 / dt;
            let var = sq1[i] / reps as f64 - mean * mean;
            let se = (var / reps as f64).sqrt();
            chi += ((mean - expected_m1) / se).powi(2);

            let m2 = (n as f64 * diffusion_m2_dist(&dist, z).unwrap() - z * z) / (n - 1) as f64;
            let emp_m2 = s2[i] / reps as f64 / dt;
            assert!(
                (emp_m2 - m2).abs() < 0.05 * m2 + 10.0 * dt,
                "dt {dt} agent {i}: M2 {emp_m2} vs {m2}"
            );
            let emp_m3 = s3[i] / reps as f64 / dt;
            assert!(
                emp_m3.abs() < 3.0 * dt.sqrt() * m2.powf(1.5) + 1e-12,
                "dt {dt} agent {i}: third moment {emp_m3}"
            );
        }
        // chi-square with n degrees of freedom, far tail
        assert!(chi < 2.5 * n as f64, "dt {dt}: drift chi2 {chi}");
    }
}

#[test]
fn simulate_is_deterministic_per_stream() {
    let params = ModelParams::constant(0.3, 0.1, 50, 50.0);
    let mut opts = SimulationOptions::new(5.0);
    opts.record_every = 10;
    let run = |stream| {
        simulate(
            &params,
            Population::equal(50, 50.0).unwrap(),
            RngStream::new(3, stream),
            &opts,
            &mut [],
        )
        .unwrap()
    };
    let a = run(0);
    assert_eq!(a, run(0));
    assert_ne!(a.final_wealths, run(1).final_wealths);
}

#[test]
fn million_agent_updates_conserve_wealth() {
    let params = ModelParams::constant(0.3, 0.1, 1000, 1000.0);
    let mut opts = SimulationOptions::new(10.0);
    opts.record_every = 50;
    let r = simulate(
        &params,
        Population::equal(1000, 1000.0).unwrap(),
        RngStream::new(8, 0),
        &opts,
        &mut [],
    )
    .unwrap();
    assert_eq!(r.summary.steps * 1000, 1_000_000);
    assert!(r.summary.max_abs_wealth_residual < 1e-9);
}
