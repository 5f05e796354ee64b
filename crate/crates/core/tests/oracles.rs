//! Library results checked against oracles written independently here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringstab::analytics::{dwell_distribution, stability_region, stability_verdict, visit_matrix, Verdict};
use ringstab::sim_ring::{estimate_marginals, run, RingState};
use ringstab::transient::solve_fixed_point;
use ringstab::{ratio, Exact, ParameterSetting, UniformField};

fn random_q(rng: &mut ChaCha8Rng, l: usize) -> Vec<Vec<f64>> {
    (0..l).map(|_| (0..l).map(|_| rng.gen_range(0.1..=1.0)).collect()).collect()
}

#[test]
fn dwell_law_matches_sampled_dwell_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q = random_q(&mut rng, 3);
    let ps = ParameterSetting::new(vec![0.0; 3], q.clone()).unwrap();
    let n = 200_000;
    for ty in 0..3 {
        let law = dwell_distribution(&ps, ty, 6).unwrap();
        let mut counts = [0u32; 6];
        for _ in 0..n {
            let mut k = 1;
            while rng.gen::<f64>() >= q[(ty + k) % 3][ty] {
                k += 1;
            }
            if k <= 6 {
                counts[k - 1] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = law.probabilities[k];
            let freq = f64::from(c) / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se + 1e-9, "type {ty}, k={}: {freq} vs {p}", k + 1);
        }
    }
}

#[test]
fn single_cell_occupancy_is_p_over_q() {
    // one cell: a vehicle stays a geometric(q) time, so the cell is busy a
    // fraction p / q of the time
    let ps = ParameterSetting::new(vec![0.2], vec![vec![0.6]]).unwrap();
    let traj = run(RingState::empty(1), &ps, &UniformField::new(3, 1), 2_000_000, 10_000).unwrap();
    let freq = estimate_marginals(&traj, 100_000).unwrap();
    assert!((freq[0][1] - 0.2 / 0.6).abs() < 0.005, "{freq:?}");
}

/// `1 - sum_j b_ij min(v_j, p_j)` with `b` from survival products.
fn fixed_point_gap(q: &[Vec<f64>], p: &[f64], v: &[f64]) -> f64 {
    let l = q.len();
    let mut worst: f64 = 0.0;
    let columns: Vec<Vec<f64>> = (0..l)
        .map(|ty| {
            let mut reach = vec![0.0; l];
            let mut survive = 1.0;
            for k in 0..l {
                let cell = (ty + 1 + k) % l;
                reach[cell] = survive;
                survive *= 1.0 - q[cell][ty];
            }
            reach.into_iter().map(|r| r / (1.0 - survive)).collect()
        })
        .collect();
    for i in 0..l {
        let g = 1.0 - (0..l).map(|j| columns[j][i] * v[j].min(p[j])).sum::<f64>();
        worst = worst.max((g - v[i]).abs());
    }
    worst
}

#[test]
fn transient_fixed_points_solve_the_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let l = rng.gen_range(1..=5);
        let q = random_q(&mut rng, l);
        let p: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..0.9)).collect();
        let ps = ParameterSetting::new(p.clone(), q.clone()).unwrap();
        let profile = solve_fixed_point(&ps, 20_000, 1e-12).unwrap();
        assert!(fixed_point_gap(&q, &p, &profile.pi_tilde0) < 1e-9);
        for i in 0..l {
            let expected = (p[i] - profile.pi_tilde0[i]).max(0.0);
            assert!((profile.growth[i] - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn single_queue_growth_rate() {
    // p above 1 / (1 + 1/q): the queue grows at p - q / (1 + q)
    let ps = ParameterSetting::<f64>::new(vec![0.46], vec![vec![0.75]]).unwrap();
    let profile = solve_fixed_point(&ps, 10_000, 1e-14).unwrap();
    assert_eq!(profile.unstable, vec![0]);
    assert!((profile.growth[0] - (0.46 - 3.0 / 7.0)).abs() < 1e-12);
}

#[test]
fn region_membership_matches_verdicts() {
    let q: Vec<Vec<Exact>> = vec![
        vec![ratio(3, 4), ratio(3, 4)],
        vec![ratio(1, 2), ratio(1, 2)],
    ];
    let base = ParameterSetting::new(vec![ratio(0, 1); 2], q).unwrap();
    let region = stability_region(&base, 0);
    for a in 0..40 {
        for c in 0..40 {
            let p = vec![ratio(a, 80), ratio(c, 80)];
            let ps = base.with_arrivals(p.clone()).unwrap();
            let verdict = stability_verdict(&ps, None).unwrap().verdict;
            // the two-cell inequality p1 < (1 - b12 p2) / (1 + b11)
            let b = visit_matrix(&base);
            let one = ratio(1, 1);
            let first = p[0].clone()
                < (one.clone() - b.finite(0, 1).unwrap() * &p[1]) / (one.clone() + b.finite(0, 0).unwrap());
            let second = p[1].clone()
                < (one.clone() - b.finite(1, 0).unwrap() * &p[0]) / (one + b.finite(1, 1).unwrap());
            assert_eq!(region.contains(&p), first && second);
            assert_eq!(verdict == Verdict::Stable, first && second, "p = {p:?}");
        }
    }
}
