use num_traits::Signed;
use proptest::prelude::*;

use ringstab::analytics::{
    closed_form_load, marginal_distribution, stability_verdict, traffic_solution, visit_matrix, Verdict,
};
use ringstab::coupling::{forward, inverse};
use ringstab::sim_mcn::{simulate_mcn, McnState};
use ringstab::sim_ring::{run, RingSimulator, RingModel, RingState};
use ringstab::transient::iteration_map;
use ringstab::{ratio, Exact, ParameterSetting, UniformField};

/// A setting on a grid: `q = a / 20` with `a` in `1..=20`, `p = c / 40`.
#[derive(Debug, Clone)]
struct GridSetting {
    q: Vec<Vec<i64>>,
    p: Vec<i64>,
}

impl GridSetting {
    fn exact(&self) -> ParameterSetting<Exact> {
        ParameterSetting::new(
            self.p.iter().map(|&c| ratio(c, 40)).collect(),
            self.q.iter().map(|row| row.iter().map(|&a| ratio(a, 20)).collect()).collect(),
        )
        .unwrap()
    }

    fn float(&self) -> ParameterSetting<f64> {
        ParameterSetting::new(
            self.p.iter().map(|&c| c as f64 / 40.0).collect(),
            self.q.iter().map(|row| row.iter().map(|&a| a as f64 / 20.0).collect()).collect(),
        )
        .unwrap()
    }

    fn single(&self) -> ParameterSetting<f32> {
        ParameterSetting::new(
            self.p.iter().map(|&c| c as f32 / 40.0).collect(),
            self.q.iter().map(|row| row.iter().map(|&a| a as f32 / 20.0).collect()).collect(),
        )
        .unwrap()
    }
}

fn grid_setting(max_l: usize, max_p: i64) -> impl Strategy<Value = GridSetting> {
    (1..=max_l).prop_flat_map(move |l| {
        (
            prop::collection::vec(prop::collection::vec(1i64..=20, l), l),
            prop::collection::vec(0i64..=max_p, l),
        )
            .prop_map(|(q, p)| GridSetting { q, p })
    })
}

fn ring_state(l: usize, max_queue: u64) -> impl Strategy<Value = RingState> {
    (
        prop::collection::vec(prop::option::of(0..l), l),
        prop::collection::vec(0..=max_queue, l),
    )
        .prop_map(|(cells, queues)| RingState::new(cells, queues).unwrap())
}

fn setting_and_state(max_queue: u64) -> impl Strategy<Value = (GridSetting, RingState)> {
    grid_setting(4, 24).prop_flat_map(move |g| {
        let l = g.p.len();
        (Just(g), ring_state(l, max_queue))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginal_rows_sum_to_one(g in grid_setting(5, 16)) {
        for row in marginal_distribution(&g.exact()).unwrap() {
            let total = row.into_iter().fold(ratio(0, 1), |a, x| a + x);
            prop_assert_eq!(total, ratio(1, 1));
        }
        for row in marginal_distribution(&g.float()).unwrap() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_and_closed_form_loads_agree(g in grid_setting(5, 20)) {
        let ps = g.exact();
        let dense = traffic_solution(&ps).unwrap().rho;
        let closed = closed_form_load(&ps, &visit_matrix(&ps)).unwrap();
        prop_assert_eq!(dense, closed);
    }

    #[test]
    fn region_is_monotone(g in grid_setting(4, 24), shrink in prop::collection::vec(0i64..=24, 4)) {
        let ps = g.exact();
        if stability_verdict(&ps, None).unwrap().verdict == Verdict::Stable {
            let smaller: Vec<Exact> = g.p.iter().zip(&shrink).map(|(&c, &d)| ratio((c - d).max(0), 40)).collect();
            let reduced = ps.with_arrivals(smaller).unwrap();
            prop_assert_eq!(stability_verdict(&reduced, None).unwrap().verdict, Verdict::Stable);
        }
    }

    #[test]
    fn verdict_agrees_across_scalar_types(g in grid_setting(4, 24)) {
        let exact = stability_verdict(&g.exact(), None).unwrap();
        let float = stability_verdict(&g.float(), None).unwrap();
        let single = stability_verdict(&g.single(), None).unwrap();
        let closest = exact.margins.iter().map(|m| m.abs()).min().unwrap();
        prop_assert_eq!(exact.verdict, float.verdict);
        if closest > ratio(1, 10_000) {
            prop_assert_eq!(exact.verdict, single.verdict);
        }
    }

    #[test]
    fn iteration_map_is_antitone(
        g in grid_setting(4, 39),
        v in prop::collection::vec(0.0f64..=1.0, 4),
        bump in prop::collection::vec(0.0f64..=1.0, 4),
    ) {
        let ps = g.float();
        let l = ps.ring_size();
        let b = visit_matrix(&ps);
        let lo: Vec<f64> = v[..l].to_vec();
        let hi: Vec<f64> = lo.iter().zip(&bump).map(|(x, d)| (x + d).min(1.0)).collect();
        let g_lo = iteration_map(&b, ps.arrivals(), &lo);
        let g_hi = iteration_map(&b, ps.arrivals(), &hi);
        for (a, c) in g_lo.iter().zip(&g_hi) {
            prop_assert!(*a >= *c - 1e-12);
        }
    }

    #[test]
    fn bijection_round_trips_large_states(
        (l, cells, queues) in (1usize..=12).prop_flat_map(|l| (
            Just(l),
            prop::collection::vec(prop::option::of(0..l), l),
            prop::collection::vec(0u64..=u64::MAX / 2, l),
        ))
    ) {
        let state = RingState::new(cells, queues).unwrap();
        let mapped = forward(&state);
        prop_assert_eq!(mapped.ring_size(), l);
        prop_assert_eq!(inverse(&mapped), state.clone());
        prop_assert_eq!(forward(&inverse(&mapped)), mapped);
    }

    #[test]
    fn queue_increments_are_unit((g, start) in setting_and_state(6), seed in any::<u64>()) {
        let ps = g.float();
        let mut sim = RingSimulator::new(RingModel::Current, start, &ps, UniformField::new(seed, ps.ring_size())).unwrap();
        let mut before = sim.state().clone();
        for _ in 0..500 {
            let after = sim.advance().clone();
            for (a, b) in before.queues.iter().zip(&after.queues) {
                prop_assert!(a.abs_diff(*b) <= 1);
            }
            before = after;
        }
    }

    #[test]
    fn network_paths_keep_one_ring_customer_per_station((g, start) in setting_and_state(6), seed in any::<u64>()) {
        let ps = g.float();
        let l = ps.ring_size();
        let path = simulate_mcn(forward(&start), &ps, &UniformField::new(seed, l), 500).unwrap();
        for state in &path.states {
            for station in 0..l {
                let ring: u64 = (1..=l).map(|col| state.get(station, col)).sum();
                prop_assert!(ring <= 1);
            }
            prop_assert_eq!(&forward(&inverse(state)), state);
        }
    }

    #[test]
    fn runs_are_reproducible((g, start) in setting_and_state(4), seed in any::<u64>()) {
        let ps = g.float();
        let field = UniformField::new(seed, ps.ring_size());
        let a = run(start.clone(), &ps, &field, 300, 7).unwrap();
        let b = run(start, &ps, &field, 300, 7).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
        let x = simulate_mcn(McnState::empty(ps.ring_size()), &ps, &field, 300).unwrap();
        let y = simulate_mcn(McnState::empty(ps.ring_size()), &ps, &field, 300).unwrap();
        prop_assert_eq!(x, y);
    }
}
