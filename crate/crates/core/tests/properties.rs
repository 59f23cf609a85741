//! Randomized property tests for the structural invariants: closed-form
//! bound orderings, derived-constant orderings, exact-rational/float
//! agreement, linear-program feasibility, and machine state invariants under
//! simulated play.

use num_rational::BigRational;
use proptest::prelude::*;
use repcomm::bounds;
use repcomm::constants::{derive_constants, reputation_growth_factor};
use repcomm::equilibrium::{EquilibriumMachine, WeightPreset};
use repcomm::occupation_lp::{check_feasible, solve, ProgramSpec};
use repcomm::simulator::{run, SimConfig, TypeMode};
use repcomm::Scalar;
use repcomm::stage_game::{
    receiver_best_replies, receiver_stage_payoff, CostView, GameParams, MixedSenderAction,
    ReceiverAction, RECEIVER_ACTIONS,
};

/// Random valid game: p_h in (0, 1/2), 2–4 strictly descending costs in
/// (0, 1), full-support prior.
fn arb_params() -> impl Strategy<Value = GameParams> {
    (
        0.05..0.45f64,
        proptest::collection::vec(0.02..0.98f64, 2..=4),
        proptest::collection::vec(0.1..1.0f64, 2..=4),
    )
        .prop_filter_map("degenerate costs", |(p_h, mut costs, raw_prior)| {
            costs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            costs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            if costs.len() < 2 {
                return None;
            }
            let n = costs.len();
            let prior: Vec<f64> = raw_prior.iter().cycle().take(n).cloned().collect();
            let total: f64 = prior.iter().sum();
            let prior: Vec<f64> = prior.iter().map(|p| p / total).collect();
            GameParams::new(p_h, 0.99, costs, prior, CostView::NonConsequentialist).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Entry 1 of the commitment bound is exactly p_h; the three bounds are
    /// ordered v-dagger <= v-star-star and v-star <= v-star-star entrywise,
    /// and all entries dominate the always-honest payoff p_h.
    #[test]
    fn closed_form_bounds_are_ordered(p in arb_params()) {
        let v_star = bounds::v_star(&p).unwrap();
        let v_ss = bounds::v_star_star(&p);
        let v_dag = bounds::v_dagger(&p).unwrap();
        prop_assert!((v_star[0] - p.p_h).abs() < 1e-15);
        for j in 0..p.n_types() {
            prop_assert!(v_star[j] >= p.p_h - 1e-12);
            prop_assert!(v_star[j] <= v_ss[j] + 1e-12);
            prop_assert!(v_dag[j] <= v_ss[j] + 1e-12);
        }
        // Entries increase as the cost falls: lower-cost types earn more.
        for j in 1..p.n_types() {
            prop_assert!(v_star[j] >= v_star[j - 1] - 1e-12);
        }
    }

    /// The closed forms agree between f64 and exact-rational evaluation on
    /// the same binary-float inputs.
    #[test]
    fn rational_and_float_bounds_agree(p in arb_params()) {
        let ph = BigRational::from_f64_exact(p.p_h);
        let costs: Vec<BigRational> =
            p.costs.iter().map(|&c| BigRational::from_f64_exact(c)).collect();
        let exact = bounds::v_star_in(&ph, &costs);
        let float = bounds::v_star(&p).unwrap();
        for (e, f) in exact.iter().zip(float.iter()) {
            let e: f64 = e.to_f64();
            prop_assert!((e - f).abs() < 1e-12, "exact {e} vs float {f}");
        }
    }

    /// The polytope's far vertices have first entry zero, and the basis
    /// identity holds: at the benchmark lie frequency the trusted mixture
    /// recovers the persuasion bound.
    #[test]
    fn polytope_and_basis_identities(p in arb_params()) {
        let poly = bounds::polytope(&p).unwrap();
        prop_assert!(poly.v_bar[0].abs() < 1e-12);
        prop_assert!(poly.v_under[0].abs() < 1e-12);
        let p_star = p.costs[0] * (1.0 - p.p_h) / (p.p_h + p.costs[0] * (1.0 - p.p_h));
        prop_assert!((poly.p_star - p_star).abs() < 1e-12);

        let (v_h, v_l, _) = bounds::payoff_basis(&p);
        let rho_star = p.rho_star();
        let v_ss = bounds::v_star_star(&p);
        for j in 0..p.n_types() {
            let mix = (1.0 - rho_star) * v_h[j] + rho_star * v_l[j];
            prop_assert!((mix - v_ss[j]).abs() < 1e-12);
        }
    }

    /// Derived constants keep the printed ordering
    /// rho <= rho_tilde <= n/l <= rho_hat <= rho_star, and the learning speed
    /// grows reputation below the benchmark frequency and shrinks it above.
    #[test]
    fn derived_constants_are_ordered(p in arb_params(), rho_frac in 0.02..0.95f64) {
        let rho = rho_frac * p.rho_star();
        let c = derive_constants(&p, rho).unwrap();
        let n_over_l = c.n_over_l.0 as f64 / c.n_over_l.1 as f64;
        prop_assert!(rho <= c.rho_tilde + 1e-12);
        prop_assert!(c.rho_tilde <= n_over_l + 1e-12);
        prop_assert!(n_over_l <= c.rho_hat + 1e-12);
        prop_assert!(c.rho_hat <= c.rho_star + 1e-12);
        prop_assert!((c.delta_hat - p.delta * (1.0 - p.p_h) / (1.0 - p.delta * p.p_h)).abs() < 1e-15);
        prop_assert!(c.lambda > 0.0);
        prop_assert!(reputation_growth_factor(c.lambda, c.rho_star, c.rho_hat) > 1.0);
        prop_assert!(reputation_growth_factor(c.lambda, c.rho_star, 1.0) < 1.0);
        prop_assert!(c.eta_star >= (1.0 - c.rho_star) * p.prior[0] - 1e-12);
        prop_assert!(c.eta_star < p.prior[0]);
    }

    /// The occupation-measure optimizer is a feasible distribution whose
    /// value matches the closed form.
    #[test]
    fn lp_optimizer_is_feasible_and_matches_closed_form(p in arb_params()) {
        let j = p.n_types() - 1;
        let (value, gamma) = solve(&p, &ProgramSpec::thm_one(j)).unwrap();
        let v_star = bounds::v_star(&p).unwrap();
        prop_assert!((value - v_star[j]).abs() < 1e-9, "lp {value} vs closed form {}", v_star[j]);
        let report = check_feasible(&gamma, &p, 0.0);
        prop_assert!(report.pass, "{report:?}");
        prop_assert!((gamma.total() - 1.0).abs() < 1e-9);
    }

    /// Receiver best replies maximize the expected stage payoff over the
    /// four pure receiver actions, for any mixed sender action.
    #[test]
    fn best_replies_maximize_receiver_payoff(
        p in arb_params(),
        raw in proptest::collection::vec(0.0..1.0f64, 4),
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-9);
        let mix = MixedSenderAction([raw[0] / total, raw[1] / total, raw[2] / total, raw[3] / total]);
        let brs = receiver_best_replies(&p, &mix).unwrap();
        prop_assert!(!brs.is_empty());
        let best = RECEIVER_ACTIONS
            .iter()
            .map(|&b| receiver_stage_payoff(&p, &mix, b))
            .fold(f64::NEG_INFINITY, f64::max);
        for &b in &RECEIVER_ACTIONS {
            let u = receiver_stage_payoff(&p, &mix, b);
            prop_assert_eq!(brs.contains(&b), (best - u).abs() <= 1e-12, "action {:?}", b);
        }
    }
}

proptest! {
    // Simulation-backed cases are heavier; fewer random draws.
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Simulated play of the constructed equilibrium keeps every machine
    /// invariant (simplex weights, promise keeping, indifference, receiver
    /// best reply, belief martingale) within tolerance, for random admissible
    /// lie frequencies and seeds, with the lowest-cost type fixed.
    #[test]
    fn machine_invariants_hold_on_simulated_play(
        rho_frac in 0.1..0.9f64,
        seed in 0u64..1u64 << 48,
    ) {
        let p = GameParams::new(
            0.25,
            0.99,
            vec![0.5, 0.2],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let rho = rho_frac * p.rho_star();
        let m = EquilibriumMachine::new(p.clone(), rho, WeightPreset::Target).unwrap();
        let config = SimConfig::new(250, 12, seed, TypeMode::Fixed(1)).with_invariant_checks();
        let ensemble = run(&m, &p, &config).unwrap();
        for r in &ensemble.residuals {
            prop_assert!(
                r.worst <= r.tolerance,
                "residual {} = {:.3e} beyond {:.1e} at (path {}, t {})",
                r.name, r.worst, r.tolerance, r.path, r.t
            );
        }
        // Identical configuration reproduces the ensemble bit for bit.
        let again = run(&m, &p, &config).unwrap();
        for (a, b) in ensemble.paths.iter().zip(again.paths.iter()) {
            prop_assert_eq!(a.type_index, b.type_index);
            prop_assert!(a.discounted_payoff == b.discounted_payoff);
        }
    }

    /// The recorded discounted payoff matches an offline recomputation from
    /// the stored trace.
    #[test]
    fn discounted_payoff_matches_trace_recomputation(seed in 0u64..1u64 << 48) {
        let p = GameParams::new(
            0.25,
            0.99,
            vec![0.5, 0.2],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let m = EquilibriumMachine::new(p.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(120, 6, seed, TypeMode::Sampled).with_traces();
        let ensemble = run(&m, &p, &config).unwrap();
        for path in &ensemble.paths {
            let mut disc = 1.0;
            let mut payoff = 0.0;
            for step in &path.steps {
                payoff += (1.0 - p.delta) * disc * step.payoff;
                disc *= p.delta;
            }
            prop_assert!((payoff - path.discounted_payoff).abs() < 1e-12);
        }
    }
}
