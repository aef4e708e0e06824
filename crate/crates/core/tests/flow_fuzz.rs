//! Randomized agreement check between the flow solver and the exhaustive
//! oracle across modes, dimensions and exponents.

use equitransport::domain::{CostSpec, Point};
use equitransport::solver::{brute_force_oracle, solve_raw, SolveMode};
use rand::{Rng, SeedableRng};

#[test]
fn flow_matches_oracle_on_random_instances() {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(20240917);
    let mut checked = 0u32;
    for case in 0..4000 {
        let p = if case % 2 == 0 { 2.0 } else { 1.0 };
        let spec = CostSpec::euclidean(p).unwrap();
        let m = rng.gen_range(1..=7);
        let n = rng.gen_range(1..=3);
        let mode = match case % 3 {
            0 => SolveMode::Coupling,
            1 => SolveMode::SemiSource,
            _ => SolveMode::SemiTarget,
        };
        let sources: Vec<(Point, u64)> = (0..m)
            .map(|_| {
                (
                    Point::new(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).unwrap(),
                    rng.gen_range(1..=5),
                )
            })
            .collect();
        let total_s: u64 = sources.iter().map(|s| s.1).sum();
        let total_t = match mode {
            SolveMode::Coupling => total_s,
            SolveMode::SemiSource => rng.gen_range(1..=total_s),
            SolveMode::SemiTarget => rng.gen_range(total_s..=total_s + 4),
        };
        let mut targets: Vec<(Point, u64)> = Vec::new();
        let mut rem = total_t;
        for i in 0..n {
            let left = (n - 1 - i) as u64;
            let take =
                if left == 0 { rem } else { rng.gen_range(0..=rem.saturating_sub(left)) };
            if take > 0 {
                targets.push((
                    Point::new(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).unwrap(),
                    take,
                ));
            }
            rem -= take;
        }
        if targets.is_empty() {
            continue;
        }
        let (oracle_cost, _) = brute_force_oracle(&targets_clone(&sources), &targets, &spec, mode)
            .expect("oracle accepts desk-size instances");
        let plan = solve_raw(sources, targets, &spec, mode, 16).expect("feasible");
        assert_eq!(plan.cost_units, oracle_cost, "case {case} ({mode:?}, p={p})");
        checked += 1;
    }
    assert!(checked > 3000, "only {checked} instances checked");
}

fn targets_clone(s: &[(Point, u64)]) -> Vec<(Point, u64)> {
    s.to_vec()
}
