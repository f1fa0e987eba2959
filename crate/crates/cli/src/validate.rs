//! Validation commands: oracle comparisons and analytic self-checks.

use anyhow::{bail, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pooltest::active::{
    onebody_pool_negative_prob, predictive_entropy, predictive_probability, q_star,
    select_next_pool, PoolSpace, SelectionPolicy,
};
use pooltest::bp::{run_bp, susceptibility_matrix, BpConfig, ClampSet};
use pooltest::graph::{generate_random_design, InitialDesignSpec, PoolingDesign};
use pooltest::model::{generate_ground_truth, sample_outcome_vector, NoiseModel};
use pooltest::oracle::{epsilon_metric, exact_posterior};

/// Compare BP marginals against exhaustive enumeration on random small
/// instances and report the deviation statistics.
pub fn validate_bp(instances: usize, seed: u64) -> Result<()> {
    anyhow::ensure!(instances > 0, "need at least one instance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_choices = [(0.9, 0.05), (0.95, 0.1), (0.8, 0.2)];
    let config = BpConfig::default();

    let mut max_dev = 0.0f64;
    let mut sum_dev = 0.0f64;
    let mut n_entries = 0usize;
    let mut non_converged = 0usize;
    for _ in 0..instances {
        let n = rng.gen_range(4..=12);
        let m = rng.gen_range(1..=8);
        let pools: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let size = rng.gen_range(1..=4usize.min(n));
                sample(&mut rng, n, size).into_vec()
            })
            .collect();
        let design = PoolingDesign::new(n, pools)?;
        let (p_tp, p_fp) = noise_choices[rng.gen_range(0..noise_choices.len())];
        let noise = NoiseModel::new(p_tp, p_fp)?;
        let rho = rng.gen_range(0.05..0.35);
        let truth = generate_ground_truth(n, rho, &mut rng);
        let outcomes = sample_outcome_vector(&truth, &design, &noise, &mut rng);

        let state = run_bp(&design, &outcomes, &noise, rho, &config, &ClampSet::empty());
        non_converged += usize::from(!state.converged);
        let exact = exact_posterior(&design, &outcomes, &noise, rho)?;
        for (bp, ex) in state.marginals.iter().zip(&exact.marginals) {
            let dev = (bp - ex).abs();
            max_dev = max_dev.max(dev);
            sum_dev += dev;
            n_entries += 1;
        }
    }

    println!("instances: {instances}");
    println!("max deviation: {max_dev:.6}");
    println!("mean deviation: {:.6}", sum_dev / n_entries as f64);
    println!("non-converged runs: {non_converged}");
    Ok(())
}

/// Reproduce the susceptibility accuracy table: mean squared deviation of
/// BP susceptibilities from the exact values at enumeration scale.
pub fn validate_chi(realizations: usize, seed: u64) -> Result<()> {
    anyhow::ensure!(realizations > 0, "need at least one realization");
    const N: usize = 20;
    let config = BpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    println!("alpha,p_tp,p_fp,mean_epsilon,max_epsilon");
    for m in [10usize, 20] {
        for (p_tp, p_fp) in [(0.95, 0.05), (0.9, 0.1)] {
            let noise = NoiseModel::new(p_tp, p_fp)?;
            let mut sum_eps = 0.0f64;
            let mut max_eps = 0.0f64;
            for _ in 0..realizations {
                let spec = InitialDesignSpec {
                    n_patients: N,
                    n_pools: m,
                    pool_size: 10,
                };
                let design = generate_random_design(&spec, &mut rng)?;
                let truth = generate_ground_truth(N, 0.1, &mut rng);
                let outcomes = sample_outcome_vector(&truth, &design, &noise, &mut rng);

                let exact = exact_posterior(&design, &outcomes, &noise, 0.1)?;
                let chi_exact: Vec<f64> = (0..N)
                    .flat_map(|i| (i + 1..N).map(move |j| (i, j)))
                    .map(|(i, j)| exact.susceptibility(i, j))
                    .collect();
                let matrix = susceptibility_matrix(&design, &outcomes, &noise, 0.1, &config);
                let eps = epsilon_metric(&chi_exact, &matrix.chi, N);
                sum_eps += eps;
                max_eps = max_eps.max(eps);
            }
            println!(
                "{},{p_tp},{p_fp},{:.3e},{max_eps:.3e}",
                m as f64 / N as f64,
                sum_eps / realizations as f64
            );
        }
    }
    Ok(())
}

/// Check the analytic identities behind the selection criterion.
pub fn selftest() -> Result<()> {
    // The predictive distribution is exactly uniform at the target.
    let mut checked = 0usize;
    for a in 0..40 {
        for b in 0..25 {
            let p_tp = 0.5 + 0.5 * (a as f64 / 39.0);
            let p_fp = 0.499 * (b as f64 / 24.0);
            let noise = NoiseModel::new(p_tp, p_fp)?;
            let q = q_star(&noise);
            if !(0.0..=1.0).contains(&q) {
                bail!("q* = {q} outside [0,1] at p_tp={p_tp}, p_fp={p_fp}");
            }
            let p = predictive_probability(q, &noise);
            if (p - 0.5).abs() > 1e-12 {
                bail!("predictive probability {p} != 0.5 at p_tp={p_tp}, p_fp={p_fp}");
            }
            checked += 1;
        }
    }
    println!("ok: predictive_probability(q*) = 0.5 on {checked} noise models");

    // The predictive entropy peaks at the target and nowhere above ln 2.
    for (p_tp, p_fp) in [(0.9, 0.05), (0.95, 0.1), (0.6, 0.3), (1.0, 0.0)] {
        let noise = NoiseModel::new(p_tp, p_fp)?;
        let target = q_star(&noise);
        let peak = predictive_entropy(target, &noise);
        if (peak - std::f64::consts::LN_2).abs() > 1e-12 {
            bail!("entropy at q* is {peak}, expected ln 2");
        }
        for k in 0..=2000 {
            let q = k as f64 / 2000.0;
            if predictive_entropy(q, &noise) > peak + 1e-12 {
                bail!("entropy exceeds the q* value at q={q}");
            }
        }
    }
    println!("ok: predictive entropy is maximal at q*");

    // Argmin |q - q*| agrees with argmax entropy on random candidate sets.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for round in 0..1000 {
        let n = rng.gen_range(2..10);
        let marginals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let noise = NoiseModel::new(rng.gen_range(0.5..1.0), rng.gen_range(0.0..0.5))?;
        let pool = select_next_pool(
            &marginals,
            &PoolSpace::up_to_pairs(),
            &noise,
            &SelectionPolicy::default(),
            None,
            &mut rng,
        )?;
        let selected = predictive_entropy(onebody_pool_negative_prob(&marginals, &pool), &noise);
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            best = best.max(predictive_entropy(
                onebody_pool_negative_prob(&marginals, &[i]),
                &noise,
            ));
            for j in i + 1..n {
                best = best.max(predictive_entropy(
                    onebody_pool_negative_prob(&marginals, &[i, j]),
                    &noise,
                ));
            }
        }
        if (selected - best).abs() > 1e-12 {
            bail!("selection missed the entropy maximum in round {round}");
        }
    }
    println!("ok: argmin-distance selection attains the entropy maximum on 1000 candidate sets");
    Ok(())
}
