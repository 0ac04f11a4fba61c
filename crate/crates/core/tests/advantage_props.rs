//! Advantage profiles, critical-step selection and fitted value tables.

mod common;

use gpo_core::advantage::{
    advantage_profile, collect_q_dataset, fit_q_table, mc_q_estimate, select_index, AdvantageMode, Gamma,
};
use gpo_core::mdp::{backward_induction, pivotal_chain, sample_trajectory, SoftmaxPolicy};
use gpo_core::rng::Stream;
use gpo_core::stats::chi_square_uniform;
use proptest::prelude::*;

use common::{random_policy, random_small_mdp};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn advantages_telescope_to_last_minus_first(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = Stream::new(seed);
        let mdp = random_small_mdp(&mut rng, 5, 3, 6, false, false);
        let policy = random_policy(&mdp, 1.5, &mut rng);
        let traj = sample_trajectory(&mdp, &policy, seed);
        let p = advantage_profile(&mdp, &policy, &traj, AdvantageMode::MonteCarlo { n_samples: n }, seed).unwrap();
        p.validate().unwrap();
        let last = p.q_hats.last().unwrap().mean;
        prop_assert!((p.telescoped_sum() - (last - p.q_hats[0].mean)).abs() <= 1e-12);
        // The final estimate is the trajectory's own return.
        prop_assert!((last - traj.terminal_reward).abs() <= 1e-12);
    }

    #[test]
    fn argmax_is_invariant_under_positive_affine_maps(
        adv in prop::collection::vec(-1.0f64..1.0, 1..12),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let mut rng = Stream::new(0);
        let base = select_index(&adv, Gamma::Infinite, &mut rng).unwrap();
        let mapped: Vec<f64> = adv.iter().map(|a| scale * a + shift).collect();
        let top = adv[base];
        prop_assert!(adv.iter().all(|&a| a <= top));
        prop_assert!(adv[..base].iter().all(|&a| a < top));
        // Rounding in the map can reorder near ties.
        prop_assume!(adv.iter().enumerate().all(|(i, &a)| i == base || top - a > 1e-9));
        prop_assert_eq!(select_index(&mapped, Gamma::Infinite, &mut rng).unwrap(), base);
    }

    #[test]
    fn expected_advantage_under_policy_is_zero(seed in any::<u64>()) {
        let mut rng = Stream::new(seed);
        let mdp = random_small_mdp(&mut rng, 6, 4, 5, false, false);
        let policy = random_policy(&mdp, 2.0, &mut rng);
        let oracle = backward_induction(&mdp, &policy).unwrap();
        for h in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                let mean: f64 = policy
                    .probs(h, s)
                    .iter()
                    .enumerate()
                    .map(|(a, p)| p * oracle.state_advantage(h, s, a).unwrap())
                    .sum();
                prop_assert!(mean.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn differenced_and_state_advantages_agree_on_deterministic_terminal_mdps(seed in any::<u64>()) {
        let mut rng = Stream::new(seed);
        let mdp = random_small_mdp(&mut rng, 6, 3, 6, true, true);
        let policy = random_policy(&mdp, 2.0, &mut rng);
        let oracle = backward_induction(&mdp, &policy).unwrap();
        let traj = sample_trajectory(&mdp, &policy, seed);
        let p = advantage_profile(&mdp, &policy, &traj, AdvantageMode::Exact(&oracle), 0).unwrap();
        for (i, st) in traj.steps.iter().enumerate() {
            let qv = oracle.q(st.h, st.state, st.action) - oracle.v(st.h, st.state);
            prop_assert!((p.advantages[i] - qv).abs() <= 1e-10);
        }
    }
}

#[test]
fn monte_carlo_estimates_are_unbiased() {
    let mdp = pivotal_chain::<f64>(6, 3, 2, 0.3).unwrap();
    let policy = random_policy(&mdp, 1.0, &mut Stream::new(9));
    let oracle = backward_induction(&mdp, &policy).unwrap();
    let traj = sample_trajectory(&mdp, &policy, 4);
    for i in 0..mdp.horizon() - 1 {
        let st = traj.steps[i];
        let reps: Vec<f64> = (0..200)
            .map(|r| mc_q_estimate(&mdp, &policy, &traj, i, 64, 10_000 + r).unwrap().mean)
            .collect();
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let var = reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
        let se = (var / reps.len() as f64).sqrt().max(1e-12);
        let truth = oracle.q(st.h, st.state, st.action);
        assert!(
            (mean - truth).abs() <= 4.0 * se + 1e-12,
            "step {i}: {mean} vs {truth} (se {se})"
        );
    }
}

#[test]
fn vanishing_gamma_selects_uniformly() {
    let adv = [0.3, -0.2, 0.9, 0.1, 0.5];
    let mut rng = Stream::new(21);
    let mut counts = [0u64; 5];
    for _ in 0..10_000 {
        counts[select_index(&adv, Gamma::Finite(1e-9), &mut rng).unwrap()] += 1;
    }
    let (_, p) = chi_square_uniform(&counts).unwrap();
    assert!(p > 1e-3, "counts {counts:?}, p {p}");
}

#[test]
fn softmax_selection_frequencies_follow_weights() {
    // exp(γ·A) with γ = ln 2 and A = (0, 1, 0) gives weights (1, 2, 1) / 4.
    let adv = [0.0, 1.0, 0.0];
    let n = 40_000;
    let mut rng = Stream::new(22);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[select_index(&adv, Gamma::Finite(std::f64::consts::LN_2), &mut rng).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip([0.25, 0.5, 0.25]) {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - p).abs() <= 4.0 * se, "{counts:?}");
    }
}

#[test]
fn fitted_q_table_concentrates_on_oracle() {
    let mdp = pivotal_chain::<f64>(5, 3, 2, 0.3).unwrap();
    let policy = SoftmaxPolicy::uniform_for(&mdp);
    let oracle = backward_induction(&mdp, &policy).unwrap();
    let data = collect_q_dataset(&mdp, &policy, &oracle, Gamma::Finite(1.0), 20_000, 3).unwrap();
    let table = fit_q_table(mdp.horizon(), mdp.num_states(), mdp.num_actions(), &data).unwrap();
    let mut checked = 0;
    for h in 0..mdp.horizon() {
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let n = table.count(h, s, a);
                if n < 200 {
                    continue;
                }
                // Returns lie in [0, 1]; Hoeffding at δ = 1e-6 per cell.
                let band = ((2.0f64 / 1e-6).ln() / (2.0 * n as f64)).sqrt();
                let got = table.get(h, s, a).unwrap();
                assert!(
                    (got - oracle.q(h, s, a)).abs() <= band,
                    "({h},{s},{a}) {got} vs {}",
                    oracle.q(h, s, a)
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 15, "only {checked} cells had enough samples");
}
