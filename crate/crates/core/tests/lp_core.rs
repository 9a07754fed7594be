mod common;

use common::lp_oracle;
use gridplan::lp::{
    solve_lp, solve_lp_with, solve_mip, LpProblem, LpStatus, MipStatus,
    PivotRule, Relation, Sense, SimplexOptions,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut counts = [0usize; 3];
    for k in 0..1000 {
        let p = lp_oracle::random_lp(&mut rng);
        let s = solve_lp(&p).unwrap();
        counts[s.status as usize] += 1;
        if let Err(e) = lp_oracle::check(&p, &s) {
            panic!("instance {k}: {e}\n{p:?}");
        }
    }
    // The generator should exercise every status.
    assert!(counts.iter().all(|&c| c >= 50), "{counts:?}");
}

#[test]
fn pure_bland_matches_the_oracle_too() {
    let opts = SimplexOptions {
        pivot_rule: PivotRule::Bland,
        ..SimplexOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..300 {
        let p = lp_oracle::random_lp(&mut rng);
        let s = solve_lp_with(&p, &opts).unwrap();
        if let Err(e) = lp_oracle::check(&p, &s) {
            panic!("instance {k}: {e}\n{p:?}");
        }
    }
}

#[test]
fn shadow_prices_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..400 {
        let p = lp_oracle::random_lp(&mut rng);
        let s = solve_lp(&p).unwrap();
        if s.status != LpStatus::Optimal {
            continue;
        }
        for i in 0..p.constraints.len() {
            let eps = 1e-4;
            let mut up = p.clone();
            up.constraints[i].rhs += eps;
            let mut down = p.clone();
            down.constraints[i].rhs -= eps;
            let (su, sd) = (solve_lp(&up).unwrap(), solve_lp(&down).unwrap());
            if su.status != LpStatus::Optimal || sd.status != LpStatus::Optimal {
                continue;
            }
            let right = (su.objective - s.objective) / eps;
            let left = (s.objective - sd.objective) / eps;
            // Only compare where the value function is differentiable.
            if (right - left).abs() < 1e-6 {
                assert!((right - s.duals[i]).abs() < 1e-5, "row {i}: {right} vs {}", s.duals[i]);
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn identical_input_gives_identical_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p = lp_oracle::random_lp(&mut rng);
        let (a, b) = (solve_lp(&p).unwrap(), solve_lp(&p).unwrap());
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn knapsack_fixture() {
    let mut p = LpProblem::new(Sense::Maximize, 3);
    p.objective = vec![6.0, 10.0, 12.0];
    p.add_constraint(vec![(0, 1.0), (1, 2.0), (2, 3.0)], Relation::Le, 5.0);
    let s = solve_mip(&p, &[0, 1, 2]).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert!((s.objective - 22.0).abs() < 1e-9);
    assert_eq!(s.x, vec![0.0, 1.0, 1.0]);
}

fn brute_force_binary(p: &LpProblem, bins: &[usize]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << bins.len()) {
        let mut q = p.clone();
        for (k, &b) in bins.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            q.set_bounds(b, v, v);
        }
        let s = solve_lp(&q).unwrap();
        if s.status == LpStatus::Optimal {
            let v = match p.sense {
                Sense::Minimize => s.objective,
                Sense::Maximize => -s.objective,
            };
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best.map(|v| match p.sense {
        Sense::Minimize => v,
        Sense::Maximize => -v,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mip_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = lp_oracle::random_lp(&mut rng);
        // Keep the relaxation bounded so both sides are comparable.
        for j in 0..p.num_vars() {
            if !p.upper[j].is_finite() {
                p.upper[j] = p.lower[j] + 8.0;
            }
        }
        let bins: Vec<usize> = (0..p.num_vars()).filter(|j| j % 2 == 0).collect();
        for &b in &bins {
            p.set_bounds(b, 0.0, 1.0);
        }
        let expect = brute_force_binary(&p, &bins);
        let s = solve_mip(&p, &bins).unwrap();
        match expect {
            None => prop_assert_eq!(s.status, MipStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(s.status, MipStatus::Optimal);
                prop_assert!((s.objective - v).abs() < 1e-6 * (1.0 + v.abs()));
                for &b in &bins {
                    prop_assert!(s.x[b] == 0.0 || s.x[b] == 1.0);
                }
                let relax_ok = match p.sense {
                    Sense::Minimize => s.root_bound <= s.objective + 1e-6,
                    Sense::Maximize => s.root_bound >= s.objective - 1e-6,
                };
                prop_assert!(relax_ok);
            }
        }
    }
}
