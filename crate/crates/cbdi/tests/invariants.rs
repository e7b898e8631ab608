use cbdi::classifier::{classify_infinity, classify_zero, ClassifierConfig, Verdict};
use cbdi::duality_lab::{cb_semigroup, ode_flow};
use cbdi::simulator::{simulate_minimal, simulate_truncated, NoiseBundle, SimConfig, State};
use cbdi::{JumpMeasure, Mechanism};
use proptest::prelude::*;

fn mixed_mechanism() -> impl Strategy<Value = Mechanism> {
    (0.1..2.0f64, 1.2..2.0f64, 0.0..1.0f64, 0.2..0.9f64, 0.0..1.0f64)
        .prop_map(|(a, p, c, q, d)| Mechanism::power_sum(&[(a, p), (-c, q), (d, 1.0)]).unwrap())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_is_a_semigroup(psi in mixed_mechanism(), y in 0.05..20.0f64, s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let two_step = ode_flow(&psi, ode_flow(&psi, y, s), t);
        let one_step = ode_flow(&psi, y, s + t);
        prop_assert!(close(two_step, one_step, 1e-6), "{two_step} vs {one_step}");
    }

    #[test]
    fn flow_is_monotone_in_start(psi in mixed_mechanism(), y in 0.05..20.0f64, dy in 0.01..5.0f64, t in 0.0..2.0f64) {
        prop_assert!(ode_flow(&psi, y, t) <= ode_flow(&psi, y + dy, t) * (1.0 + 1e-9));
    }

    #[test]
    fn semigroup_is_a_laplace_transform(psi in mixed_mechanism(), x in 0.0..5.0f64, y in 0.0..5.0f64, t in 0.0..2.0f64) {
        let v = cb_semigroup(&psi, x, y, t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(cb_semigroup(&psi, x, y + 0.5, t) <= v + 1e-12);
    }

    #[test]
    fn stable_pair_verdicts_mirror(alpha in 0.15..0.85f64, ratio in 0.1..3.0f64) {
        let psi = Mechanism::power_sum(&[(-ratio, alpha)]).unwrap();
        let psi_hat = Mechanism::power_sum(&[(1.0, 2.0 - alpha)]).unwrap();
        let cfg = ClassifierConfig::default();
        let inf = classify_infinity(&psi, &psi_hat, &cfg);
        let zero = classify_zero(&psi_hat, &psi, &cfg);
        let mirrored = match inf.verdict {
            Verdict::Entrance => Verdict::Exit,
            Verdict::Exit => Verdict::Entrance,
            v => v,
        };
        prop_assert_eq!(mirrored, zero.verdict);
        if let (Some(acc), Some(abs)) = (inf.accessible, zero.absorbing) {
            prop_assert_eq!(acc, !abs);
        }
        if let (Some(abs), Some(acc)) = (inf.absorbing, zero.accessible) {
            prop_assert_eq!(abs, !acc);
        }
    }
}

fn jump_pair() -> (Mechanism, Mechanism) {
    let psi = Mechanism::new(JumpMeasure::StableTail { intensity: 0.5, index: 1.5 }, 0.2, 0.3, 0.1).unwrap();
    let psi_hat = Mechanism::power_sum(&[(0.5, 1.5), (-0.3, 0.5)]).unwrap();
    (psi, psi_hat)
}

fn short_run(seed: u64) -> SimConfig {
    SimConfig { dt: 1e-2, horizon: 0.5, epsilon: 0.05, seed, n_paths: 1, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn paths_jump_upward_only(seed in any::<u64>(), idx in 0u64..1000, x0 in 0.01..10.0f64) {
        let (psi, psi_hat) = jump_pair();
        let cfg = short_run(seed);
        let p = simulate_minimal(&psi, &psi_hat, x0, &cfg, &NoiseBundle::new(seed, idx)).unwrap();
        prop_assert!(p.jumps.iter().all(|&(_, u)| u > 0.0));
        prop_assert!(p.states.iter().all(|s| s.as_f64() >= 0.0));
    }

    #[test]
    fn cemetery_states_persist(seed in any::<u64>(), idx in 0u64..1000, x0 in 0.01..3.0f64) {
        let (psi, psi_hat) = jump_pair();
        let cfg = short_run(seed);
        let p = simulate_minimal(&psi, &psi_hat, x0, &cfg, &NoiseBundle::new(seed, idx)).unwrap();
        if let Some(i) = p.states.iter().position(|s| !matches!(s, State::Value(_))) {
            prop_assert!(p.states[i..].iter().all(|s| *s == p.states[i]));
        }
    }

    #[test]
    fn truncated_jumps_are_capped(seed in any::<u64>(), idx in 0u64..1000, n in 1.0..5.0f64) {
        let (psi, psi_hat) = jump_pair();
        let cfg = short_run(seed);
        let p = simulate_truncated(&psi, &psi_hat, n, 1.0, &cfg, &NoiseBundle::new(seed, idx)).unwrap();
        prop_assert!(p.jumps.iter().all(|&(_, u)| u <= n));
        prop_assert!(p.killed_at.is_none());
    }

    #[test]
    fn replay_is_exact(seed in any::<u64>(), idx in 0u64..1000) {
        let (psi, psi_hat) = jump_pair();
        let cfg = short_run(seed);
        let a = simulate_minimal(&psi, &psi_hat, 1.0, &cfg, &NoiseBundle::new(seed, idx)).unwrap();
        let b = simulate_minimal(&psi, &psi_hat, 1.0, &cfg, &NoiseBundle::new(seed, idx)).unwrap();
        prop_assert_eq!(a, b);
    }
}
