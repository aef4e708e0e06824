//! Brute-force transport oracle for desk-size instances.
//!
//! Exhaustive dynamic program over integer-quantum allocations: sources are
//! processed one at a time and the state is the vector of remaining target
//! demands (or capacities). Independent of the flow solver by construction;
//! meant for instances with a handful of sources, at most four targets and
//! small quanta.

use super::{PlanEntry, SolveMode};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive enumeration (work estimate {0})")]
    TooLarge(u128),
    #[error("oracle accepts at most {max} {kind}, got {got}")]
    TooMany { kind: &'static str, max: usize, got: usize },
    #[error("infeasible instance")]
    Infeasible,
}

const MAX_SOURCES: usize = 10;
const MAX_TARGETS: usize = 4;
const MAX_WORK: u128 = 40_000_000;

/// Exact minimum cost and one witness plan by exhaustive enumeration.
///
/// `cost[i * n + j]` are fixed-point unit costs, identical to what the flow
/// solver sees, so agreement checks are exact integer comparisons.
pub fn brute_force(
    supplies: &[u64],
    demands: &[u64],
    cost: &[i64],
    mode: SolveMode,
) -> Result<(i128, Vec<PlanEntry>), OracleError> {
    let m = supplies.len();
    let n = demands.len();
    if m > MAX_SOURCES {
        return Err(OracleError::TooMany { kind: "sources", max: MAX_SOURCES, got: m });
    }
    if n > MAX_TARGETS {
        return Err(OracleError::TooMany { kind: "targets", max: MAX_TARGETS, got: n });
    }
    let supply_total: u64 = supplies.iter().sum();
    let demand_total: u64 = demands.iter().sum();
    let feasible = match mode {
        SolveMode::Coupling => supply_total == demand_total,
        SolveMode::SemiSource => supply_total >= demand_total,
        SolveMode::SemiTarget => demand_total >= supply_total,
    };
    if !feasible {
        return Err(OracleError::Infeasible);
    }

    // state encoding: mixed radix over remaining demands
    let mut radix = vec![0u64; n];
    let mut states: u128 = 1;
    for j in 0..n {
        radix[j] = demands[j] + 1;
        states *= radix[j] as u128;
    }
    let work: u128 = supplies
        .iter()
        .map(|&s| compositions(s, n as u64 + 1) as u128)
        .sum::<u128>()
        .saturating_mul(states);
    if work > MAX_WORK {
        return Err(OracleError::TooLarge(work));
    }

    let encode = |rem: &[u64]| -> u64 {
        let mut code = 0u64;
        for j in 0..n {
            code = code * radix[j] + rem[j];
        }
        code
    };

    // dp[i]: reachable states after sources 0..i with minimal cost
    let mut layers: Vec<HashMap<u64, i128>> = Vec::with_capacity(m + 1);
    let mut current = HashMap::new();
    current.insert(encode(demands), 0i128);
    layers.push(current);
    for i in 0..m {
        let mut next: HashMap<u64, i128> = HashMap::new();
        for (&code, &acc) in &layers[i] {
            let rem = decode(code, &radix);
            enumerate_parts(supplies[i], &rem, mode, &mut |parts| {
                let mut c = acc;
                let mut new_rem = rem.clone();
                for j in 0..n {
                    c += parts[j] as i128 * cost[i * n + j] as i128;
                    new_rem[j] -= parts[j];
                }
                let code = encode(&new_rem);
                let entry = next.entry(code).or_insert(i128::MAX);
                if c < *entry {
                    *entry = c;
                }
            });
        }
        layers.push(next);
    }

    // admissible final states
    let final_ok = |code: u64| -> bool {
        match mode {
            SolveMode::Coupling | SolveMode::SemiSource => code == encode(&vec![0; n]),
            // all supply shipped by construction; leftover capacity is fine
            SolveMode::SemiTarget => true,
        }
    };
    let (&best_code, &best_cost) = layers[m]
        .iter()
        .filter(|(&code, _)| final_ok(code))
        .min_by_key(|(&code, &c)| (c, code))
        .ok_or(OracleError::Infeasible)?;

    // backtrack: at each layer find a predecessor + parts achieving the value
    let mut entries = Vec::new();
    let mut code = best_code;
    let mut need = best_cost;
    for i in (0..m).rev() {
        let rem_after = decode(code, &radix);
        let mut found = None;
        'search: for (&prev_code, &prev_cost) in &layers[i] {
            let rem_before = decode(prev_code, &radix);
            if (0..n).any(|j| rem_before[j] < rem_after[j]) {
                continue;
            }
            let parts: Vec<u64> = (0..n).map(|j| rem_before[j] - rem_after[j]).collect();
            let shipped: u64 = parts.iter().sum();
            let ok = match mode {
                SolveMode::Coupling | SolveMode::SemiTarget => shipped == supplies[i],
                SolveMode::SemiSource => shipped <= supplies[i],
            };
            if !ok {
                continue;
            }
            let step: i128 = (0..n).map(|j| parts[j] as i128 * cost[i * n + j] as i128).sum();
            if prev_cost + step == need {
                found = Some((prev_code, prev_cost, parts));
                break 'search;
            }
        }
        let (prev_code, prev_cost, parts) = found.expect("backtrack step exists");
        for (j, &p) in parts.iter().enumerate() {
            if p > 0 {
                entries.push(PlanEntry { source: i as u32, target: j as u32, mass: p });
            }
        }
        code = prev_code;
        need = prev_cost;
    }
    entries.sort_unstable_by_key(|e| (e.source, e.target));
    Ok((best_cost, entries))
}

fn decode(mut code: u64, radix: &[u64]) -> Vec<u64> {
    let mut rem = vec![0u64; radix.len()];
    for j in (0..radix.len()).rev() {
        rem[j] = code % radix[j];
        code /= radix[j];
    }
    rem
}

/// Number of ways to split `s` into `bins` ordered nonnegative parts.
fn compositions(s: u64, bins: u64) -> u64 {
    // C(s + bins - 1, bins - 1), saturating
    let mut out: u128 = 1;
    for i in 0..bins - 1 {
        out = out.saturating_mul((s + i + 1) as u128) / (i + 1) as u128;
    }
    out.min(u64::MAX as u128) as u64
}

/// Enumerate allocations of one source's supply over targets, respecting
/// remaining demands. Couplings and target-semicouplings ship the full
/// supply; source-semicouplings may withhold.
fn enumerate_parts(supply: u64, rem: &[u64], mode: SolveMode, f: &mut impl FnMut(&[u64])) {
    let n = rem.len();
    let mut parts = vec![0u64; n];
    fn recurse(
        j: usize,
        left: u64,
        rem: &[u64],
        parts: &mut [u64],
        exact: bool,
        f: &mut impl FnMut(&[u64]),
    ) {
        if j == rem.len() {
            if left == 0 || !exact {
                f(parts);
            }
            return;
        }
        let hi = left.min(rem[j]);
        for p in 0..=hi {
            parts[j] = p;
            recurse(j + 1, left - p, rem, parts, exact, f);
        }
        parts[j] = 0;
    }
    let exact = !matches!(mode, SolveMode::SemiSource);
    recurse(0, supply, rem, &mut parts, exact, f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let (cost, plan) = brute_force(&[3], &[3], &[5], SolveMode::Coupling).unwrap();
        assert_eq!(cost, 15);
        assert_eq!(plan, vec![PlanEntry { source: 0, target: 0, mass: 3 }]);
    }

    #[test]
    fn picks_cheaper_semicoupling_subset() {
        // four cells supply 1 each, demand 2: cells 1 and 2 are cheapest
        let (cost, plan) = brute_force(&[1, 1, 1, 1], &[2], &[9, 2, 3, 9], SolveMode::SemiSource)
            .unwrap();
        assert_eq!(cost, 5);
        assert_eq!(plan.len(), 2);
        assert!(plan.iter().all(|e| e.source == 1 || e.source == 2));
    }

    #[test]
    fn capacitated_targets() {
        let (cost, _) = brute_force(&[3], &[2, 2], &[1, 2], SolveMode::SemiTarget).unwrap();
        assert_eq!(cost, 2 * 1 + 1 * 2);
    }

    #[test]
    fn rejects_oversized() {
        let supplies = vec![100u64; 10];
        let demands = vec![250u64; 4];
        let cost = vec![1i64; 40];
        assert!(matches!(
            brute_force(&supplies, &demands, &cost, SolveMode::Coupling),
            Err(OracleError::TooLarge(_))
        ));
    }

    #[test]
    fn rejects_mass_mismatch() {
        assert_eq!(
            brute_force(&[1], &[2], &[1], SolveMode::Coupling).unwrap_err(),
            OracleError::Infeasible
        );
    }
}
