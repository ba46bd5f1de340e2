//! Property tests for numeric building blocks.

use advsim::hybrid::{squash, unsquash};
use advsim::identify::{alive_bonus, gan_reward};
use advsim::ppo::compute_gae;
use proptest::prelude::*;

proptest! {
    #[test]
    fn squash_stays_in_range(u in -1e3f64..1e3, lo in -10.0f64..10.0, width in 1e-3f64..20.0) {
        let c = squash(u, lo, lo + width);
        prop_assert!(c.is_finite());
        prop_assert!(c >= lo && c <= lo + width);
    }

    #[test]
    fn unsquash_inverts_squash(u in -6.0f64..6.0, lo in -5.0f64..5.0, width in 0.1f64..10.0) {
        let back = unsquash(squash(u, lo, lo + width), lo, lo + width);
        prop_assert!((back - u).abs() < 1e-6);
    }

    #[test]
    fn gan_reward_is_antisymmetric(d in 1e-4f64..(1.0 - 1e-4)) {
        prop_assert!((gan_reward(d) + gan_reward(1.0 - d)).abs() < 1e-9);
    }

    #[test]
    fn alive_bonus_sign_follows_lengths(li in 1.0f64..500.0, lr in 1.0f64..500.0) {
        let b = alive_bonus(li, lr).unwrap();
        prop_assert_eq!(b < 0.0, li < lr);
        prop_assert!((b - (li / lr).ln()).abs() < 1e-12);
    }

    #[test]
    fn gae_matches_discounted_sums(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..30),
        seed_values in prop::collection::vec(-5.0f64..5.0, 31),
        gamma in 0.5f64..1.0,
        lambda in 0.0f64..1.0,
        terminal in any::<bool>(),
    ) {
        let n = rewards.len();
        let mut values = seed_values[..=n].to_vec();
        if terminal {
            values[n] = 0.0;
        }
        let mut dones = vec![false; n];
        dones[n - 1] = terminal;
        let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda).unwrap();
        for t in 0..n {
            let mut oracle = 0.0;
            for k in t..n {
                let next = if dones[k] { 0.0 } else { values[k + 1] };
                let delta = rewards[k] + gamma * next - values[k];
                oracle += (gamma * lambda).powi((k - t) as i32) * delta;
            }
            prop_assert!((adv[t] - oracle).abs() < 1e-9);
            prop_assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-9);
        }
    }
}
