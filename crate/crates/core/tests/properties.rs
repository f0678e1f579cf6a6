use lotsizing::demand::{
    build_lag1_mvn, condition_on_prefix, convolution_moments, ts_horizon_mvn, ts_stationary_moments, DemandModel,
    MvnHorizon, TimeSeriesSpec,
};
use lotsizing::experiment::{example_4period, read_csv, run, write_csv, Method, RunConfig};
use lotsizing::loss::{general_loss, std_loss, LossMode, PiecewiseLoss};
use lotsizing::normal;
use lotsizing::policy::{cycle_cost, enumerate_oracle, solve_rs, CostParams, SolverSettings};
use lotsizing::sdp::{solve_sdp, SdpConfig};
use lotsizing::simulate::{simulate_rs, SimOptions};
use proptest::prelude::*;

fn mvn_strategy(max_t: usize) -> impl Strategy<Value = MvnHorizon> {
    (
        prop::collection::vec(1.0f64..60.0, 1..=max_t),
        0.05f64..0.35,
        0.0f64..0.45,
    )
        .prop_map(|(mean, cv, rho)| build_lag1_mvn(&mean, cv, rho).unwrap())
}

fn costs_strategy() -> impl Strategy<Value = CostParams> {
    (0.0f64..300.0, 0.0f64..2.0, 0.2f64..2.0, 5.0f64..25.0, -20.0f64..40.0)
        .prop_map(|(k, c, h, b, i0)| CostParams::new(k, c, h, b, i0).unwrap())
}

fn pw_settings(w: usize) -> SolverSettings {
    SolverSettings::new(PiecewiseLoss::minimax(w).unwrap(), LossMode::Piecewise)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_shapes(x in -5.0f64..5.0) {
        let h = 1e-3;
        let (l0, lh0) = std_loss(x - h);
        let (l1, lh1) = std_loss(x);
        let (l2, lh2) = std_loss(x + h);
        prop_assert!(l2 <= l1 && l1 <= l0);
        prop_assert!(lh0 <= lh1 && lh1 <= lh2);
        prop_assert!(l0 + l2 - 2.0 * l1 >= -1e-12);
        prop_assert!(lh0 + lh2 - 2.0 * lh1 >= -1e-12);
        prop_assert!(lh1 > x.max(0.0));
    }

    #[test]
    fn loss_scaling(x in -300.0f64..300.0, mean in -50.0f64..150.0, sd in 0.5f64..60.0) {
        let pw = PiecewiseLoss::minimax(7).unwrap();
        let (l, lh) = general_loss(x, mean, sd, &pw, LossMode::Exact).unwrap();
        let (sl, slh) = general_loss((x - mean) / sd, 0.0, 1.0, &pw, LossMode::Exact).unwrap();
        prop_assert!((l - sd * sl).abs() <= 1e-12 * l.abs() + 1e-300);
        prop_assert!((lh - sd * slh).abs() <= 1e-12 * lh.abs() + 1e-300);
    }

    #[test]
    fn piecewise_sandwich(w in 2usize..16, x in -7.0f64..7.0) {
        for pw in [PiecewiseLoss::minimax(w).unwrap(), PiecewiseLoss::equal_mass(w).unwrap()] {
            let d = pw.comp_loss(x) - std_loss(x).1;
            prop_assert!(d >= -1e-12 && d <= pw.error() + 1e-12);
        }
    }

    #[test]
    fn loss_derivative(x in -5.0f64..5.0) {
        let h = 1e-4;
        let fd = (std_loss(x + h).1 - std_loss(x - h).1) / (2.0 * h);
        prop_assert!((fd - normal::cdf(x)).abs() <= 1e-6);
    }

    #[test]
    fn convolution_variance_is_block_sum(mvn in mvn_strategy(10)) {
        let t = mvn.horizon();
        for j in 1..=t {
            for k in j..=t {
                let block: f64 = (j - 1..k).flat_map(|a| (j - 1..k).map(move |b| (a, b))).map(|(a, b)| mvn.cov()[(a, b)]).sum();
                let m = convolution_moments(&mvn, j, k).unwrap();
                prop_assert!((m.sd * m.sd - block).abs() <= 1e-9 * block.max(1.0));
                let mean: f64 = mvn.mean()[j - 1..k].iter().sum();
                prop_assert!((m.mean - mean).abs() <= 1e-9 * mean);
            }
        }
    }

    #[test]
    fn independent_conditioning_is_a_no_op(
        mean in prop::collection::vec(1.0f64..60.0, 2..10),
        cv in 0.05f64..0.4,
        frac in 0.0f64..1.0,
        obs in prop::collection::vec(0.0f64..80.0, 9),
    ) {
        let mvn = build_lag1_mvn(&mean, cv, 0.0).unwrap();
        let k = 1 + ((mean.len() - 2) as f64 * frac) as usize;
        let cond = condition_on_prefix(&mvn, &obs[..k]).unwrap();
        prop_assert_eq!(cond.mvn.mean(), &mvn.mean()[k..]);
        for i in 0..mvn.horizon() - k {
            prop_assert_eq!(cond.mvn.cov()[(i, i)], mvn.cov()[(k + i, k + i)]);
        }
    }

    #[test]
    fn solver_equals_oracle(mvn in mvn_strategy(8), costs in costs_strategy(), w in prop::sample::select(vec![4usize, 7, 11])) {
        for settings in [pw_settings(w), SolverSettings::exact()] {
            match (solve_rs(&mvn, &costs, &settings), enumerate_oracle(&mvn, &costs, &settings)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.planned_cost - b.planned_cost).abs() <= 1e-9 * b.planned_cost.abs().max(1.0));
                    prop_assert_eq!(&a.plan, &b.plan);
                    prop_assert!((a.breakdown.total() - a.planned_cost).abs() <= 1e-9 * a.planned_cost.abs().max(1.0));
                    prop_assert!(a.breakdown.fixed >= 0.0 && a.breakdown.holding >= 0.0 && a.breakdown.penalty >= 0.0);
                    prop_assert_eq!(a.order_up_to.len(), a.plan.len());
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "solver {:?} vs oracle {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }

    #[test]
    fn piecewise_cycle_bracket(mvn in mvn_strategy(8), s in -20.0f64..400.0, w in 2usize..12, h in 0.2f64..2.0, b in 5.0f64..25.0) {
        let t = mvn.horizon();
        let p = CostParams::new(0.0, 0.0, h, b, 0.0).unwrap();
        let pw = pw_settings(w);
        let e = PiecewiseLoss::minimax(w).unwrap().error();
        for i in 1..=t {
            for j in i..=t {
                let exact = cycle_cost(&mvn, i, j, s, &p, &SolverSettings::exact(), true).unwrap();
                let approx = cycle_cost(&mvn, i, j, s, &p, &pw, true).unwrap();
                let slack: f64 = (i..=j).map(|k| convolution_moments(&mvn, i, k).unwrap().sd).sum::<f64>() * (h + b) * e;
                prop_assert!(approx >= exact - 1e-9 * exact.max(1.0));
                prop_assert!(approx <= exact + slack + 1e-9 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn fixed_cost_monotonicity(mvn in mvn_strategy(8), c in 0.0f64..2.0, b in 5.0f64..25.0) {
        let mut last_orders = usize::MAX;
        let mut last_cost = f64::MIN;
        for k in [0.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0] {
            let p = CostParams::new(k, c, 1.0, b, 0.0).unwrap();
            let pol = solve_rs(&mvn, &p, &pw_settings(7)).unwrap();
            prop_assert!(pol.plan.len() <= last_orders);
            prop_assert!(pol.planned_cost >= last_cost - 1e-9 * last_cost.abs());
            last_orders = pol.plan.len();
            last_cost = pol.planned_cost;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sdp_dominates_rs(mvn in mvn_strategy(5), k in 20.0f64..300.0, c in 0.0f64..1.0, b in 5.0f64..25.0) {
        let p = CostParams::new(k, c, 1.0, b, 0.0).unwrap();
        let rs = solve_rs(&mvn, &p, &SolverSettings::exact()).unwrap();
        let sdp = solve_sdp(&mvn, &p, &SdpConfig::default()).unwrap();
        prop_assert!(sdp.expected_total_cost <= rs.planned_cost * 1.005);
    }

    #[test]
    fn simulation_identities(mvn in mvn_strategy(8), costs in costs_strategy(), seed in any::<u64>()) {
        let pol = solve_rs(&mvn, &costs, &pw_settings(11)).unwrap();
        let model = DemandModel::Mvn(mvn);
        let r = simulate_rs(&pol, &model, &costs, &SimOptions::new(4_000, seed)).unwrap();
        prop_assert!((r.half_width_95 - 1.96 * r.sd / (4_000f64).sqrt()).abs() <= 1e-12 * r.half_width_95.max(1.0));
        prop_assert!((r.components.total() - r.mean_cost).abs() <= 1e-9 * r.mean_cost.abs().max(1.0));
        let again = simulate_rs(&pol, &model, &costs, &SimOptions::new(4_000, seed)).unwrap();
        prop_assert_eq!(r, again);
    }
}

#[test]
fn half_width_shrinks_with_root_n() {
    let inst = example_4period();
    let model = inst.model().unwrap();
    let pol = solve_rs(&model.planning_mvn().unwrap(), &inst.costs, &pw_settings(11)).unwrap();
    let a = simulate_rs(&pol, &model, &inst.costs, &SimOptions::new(25_000, 5)).unwrap();
    let b = simulate_rs(&pol, &model, &inst.costs, &SimOptions::new(100_000, 5)).unwrap();
    let ratio = a.half_width_95 / b.half_width_95;
    assert!((ratio / 2.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn planned_cost_bounds_simulated_cost() {
    for inst in lotsizing::experiment::generate_mvn_bed(Default::default(), Default::default())
        .iter()
        .step_by(5)
    {
        let model = inst.model().unwrap();
        let pol = solve_rs(
            &model.planning_mvn().unwrap(),
            &inst.costs,
            &inst.solver.settings().unwrap(),
        )
        .unwrap();
        let sim = simulate_rs(&pol, &model, &inst.costs, &SimOptions::new(20_000, 11)).unwrap();
        assert!(
            sim.mean_cost <= pol.planned_cost + 3.0 * sim.half_width_95,
            "{}",
            inst.id
        );
    }
}

#[test]
fn ar_autocovariances_satisfy_yule_walker() {
    for ar in [vec![0.75], vec![0.5, 0.2, 0.1], vec![0.3, -0.2, 0.15, 0.1]] {
        let m = ts_stationary_moments(&TimeSeriesSpec::ar(25.0, ar.clone(), 7.0)).unwrap();
        for k in 1..=10i64 {
            let rhs: f64 = ar
                .iter()
                .enumerate()
                .map(|(p, b)| b * m.autocov(k - 1 - p as i64))
                .sum();
            assert!((m.autocov(k) - rhs).abs() <= 1e-9 * m.variance, "lag {k}");
        }
    }
}

#[test]
fn horizon_variance_converges_to_stationary() {
    for (name, spec, cv_sensitive) in lotsizing::experiment::ts_processes() {
        let mut spec = spec;
        if cv_sensitive {
            spec.innovation_sd = Some(lotsizing::demand::InnovationSd::Constant(0.3 * spec.stationary_mean()));
        }
        let target = ts_stationary_moments(&spec).unwrap().variance;
        let mvn = ts_horizon_mvn(&spec, 200).unwrap();
        let var: Vec<f64> = (0..200).map(|t| mvn.cov()[(t, t)]).collect();
        assert!(var.windows(2).all(|w| w[1] >= w[0] - 1e-9 * target), "{name}");
        assert!((var[199] - target).abs() < 1e-6 * target, "{name}");
    }
}

#[test]
fn csv_round_trip_of_a_run() {
    let cfg = RunConfig {
        methods: vec![Method::Rs, Method::Simulate],
        replications: 2_000,
        ..RunConfig::default()
    };
    let rows = run(&[example_4period()], &cfg);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
}
