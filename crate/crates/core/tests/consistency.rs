//! Simulated limit distributions against the exact ones, where the two are
//! comparable.

use sinklimit::dynamics::{
    estimate_limit_distribution, exact_limit_distribution, total_variation, EstimateConfig,
    MixedProfile, Prior, ReplicatorParams,
};
use sinklimit::{random_game, Execution, Game, ProfileId, UtilityDistribution};

fn point_mass(n: usize, p: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[p] = 1.0;
    w
}

fn config() -> EstimateConfig {
    EstimateConfig {
        runs_per_sample: 40,
        batch_size: 4,
        max_samples: 40,
        ..EstimateConfig::default()
    }
}

/// Every player has a strictly dominant strategy `dominant[i]`.
fn dominant_game(seed: u64, counts: &[usize], dominant: &[usize]) -> Game {
    let base = random_game(seed, counts, UtilityDistribution::Uniform).unwrap();
    let utilities = (0..base.num_players())
        .map(|i| {
            (0..base.num_profiles())
                .map(|p| {
                    let bonus = if base.strategy_of(ProfileId(p), i) == dominant[i] {
                        2.0
                    } else {
                        0.0
                    };
                    base.utility(i, ProfileId(p)) + bonus
                })
                .collect()
        })
        .collect();
    Game::new(counts.to_vec(), utilities).unwrap()
}

#[test]
fn sink_vertex_priors_match_exact() {
    for seed in 0..10 {
        let game = random_game(seed, &[3, 3], UtilityDistribution::Uniform).unwrap();
        let sinks = sinklimit::sink_equilibria(&game, 0.0);
        for members in &sinks.members {
            let p = members[0];
            let (_, exact) = exact_limit_distribution(&game, &point_mass(9, p.0), 0.0).unwrap();
            let prior = Prior::PointMass(MixedProfile::vertex(&game, p));
            let params = ReplicatorParams {
                rng_seed: seed,
                ..ReplicatorParams::default()
            };
            let est =
                estimate_limit_distribution(&game, &sinks, &prior, &params, &config()).unwrap();
            assert!(total_variation(&est.distribution, &exact.distribution) < 0.05);
        }
    }
}

#[test]
fn near_vertex_starts_match_exact_in_dominance_solvable_games() {
    for seed in 0..6u64 {
        let counts = [2, 3];
        let game = dominant_game(seed, &counts, &[(seed % 2) as usize, (seed % 3) as usize]);
        let sinks = sinklimit::sink_equilibria(&game, 0.0);
        assert_eq!(sinks.len(), 1);
        for p in 0..game.num_profiles() {
            let (_, exact) = exact_limit_distribution(&game, &point_mass(6, p), 0.0).unwrap();
            let prior = Prior::PointMass(MixedProfile::near_vertex(&game, ProfileId(p), 0.05));
            let params = ReplicatorParams {
                rng_seed: seed,
                ..ReplicatorParams::default()
            };
            let est =
                estimate_limit_distribution(&game, &sinks, &prior, &params, &config()).unwrap();
            let tv = total_variation(&est.distribution, &exact.distribution);
            assert!(tv < 0.05, "seed {seed} profile {p}: tv {tv}");
        }
    }
}

#[test]
fn estimates_are_bit_identical_across_execution_modes() {
    let game = random_game(11, &[2, 2, 2], UtilityDistribution::Integer { max: 3 }).unwrap();
    let sinks = sinklimit::sink_equilibria(&game, 0.0);
    let params = ReplicatorParams {
        rng_seed: 99,
        ..ReplicatorParams::default()
    };
    let run = |execution| {
        let cfg = EstimateConfig {
            execution,
            max_samples: 30,
            batch_size: 10,
            runs_per_sample: 5,
            ..EstimateConfig::default()
        };
        estimate_limit_distribution(&game, &sinks, &Prior::Dirichlet(0.5), &params, &cfg).unwrap()
    };
    let serial = run(Execution::Serial);
    let parallel = run(Execution::Parallel);
    assert_eq!(serial, parallel);
    assert_eq!(serial, run(Execution::Serial));
    let total = serial.distribution.iter().sum::<f64>() + serial.non_converged;
    assert!((total - 1.0).abs() < 1e-9);
}
