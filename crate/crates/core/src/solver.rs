//! Exact quantized transport solver for couplings and both semicoupling
//! variants, with audit machinery.
//!
//! Masses are integer quanta and unit costs are `2^32` fixed point, so the
//! solver's optimality, the cemetery-reduction equivalence, oracle
//! agreement and superadditivity are all exact integer statements.

mod dual;
mod flow;
mod oracle;

pub use dual::{induced_cost, DualPotentials};
pub use flow::{FlowError, COST_SCALE};
pub use oracle::OracleError;

use crate::domain::{CostSpec, DomainError, LatticePoint, Point, Window};
use crate::randmeas::{DiscreteDensity, Grid, PointConfiguration, Stream};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("marginal mass mismatch: source {supply} vs target {demand} quanta")]
    MassMismatch { supply: u64, demand: u64 },
    #[error("empty target with nonempty source")]
    EmptyTarget,
    #[error("insufficient source mass: {supply} < {demand} quanta")]
    InsufficientSource { supply: u64, demand: u64 },
    #[error("insufficient target capacity: {capacity} < {supply} quanta")]
    InsufficientCapacity { supply: u64, capacity: u64 },
    #[error("quantum mismatch: source 1/{src} vs target 1/{tgt}")]
    QuantumMismatch { src: u64, tgt: u64 },
    #[error("the dual solver supports theta(r)=r^2 only")]
    QuadraticOnly,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Which marginal constraints a solve enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Both marginals exact.
    Coupling,
    /// Target marginal exact, source dominated (untransported mass stays).
    SemiSource,
    /// Source marginal exact, per-target mass capped by atom weight.
    SemiTarget,
}

/// One sparse plan entry: `mass` quanta from source cell `source` to atom
/// `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub source: u32,
    pub target: u32,
    pub mass: u64,
}

/// A transport plan between a quantized source list and a target atom list.
///
/// Entries form a spanning-forest support sorted by `(source, target)`.
/// Cemetery (untransported) mass never appears as an entry; it is implied
/// by `used < supply` on source cells. Translations are bookkept in
/// `offset`, so translating preserves the cached exact cost bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Source positions and supplies (quanta), canonical order.
    pub sources: Vec<(Point, u64)>,
    /// Target positions and weights (quanta), canonical order.
    pub targets: Vec<(Point, u64)>,
    pub entries: Vec<PlanEntry>,
    /// Quanta per unit mass.
    pub quantum: u64,
    /// Exact total cost in fixed-point units (`mass * unit_cost` summed).
    pub cost_units: i128,
    /// Lattice translation applied to the whole plan.
    pub offset: LatticePoint,
    /// Grid frame of the sources when they came from a `DiscreteDensity`.
    pub source_grid: Option<Grid>,
    pub mode: SolveMode,
    /// Set when the cost regime admits a continuum of optima (d=1 linear
    /// cost); uniqueness audits skip such plans.
    pub nonunique_possible: bool,
}

impl TransportPlan {
    /// Absolute source position (translation applied).
    pub fn source_pos(&self, i: usize) -> Point {
        self.sources[i].0.add(&self.offset)
    }

    /// Absolute target position (translation applied).
    pub fn target_pos(&self, j: usize) -> Point {
        self.targets[j].0.add(&self.offset)
    }

    /// Cost in mass x cost units: `cost_units / 2^32 / K`.
    pub fn cost_value(&self) -> f64 {
        self.cost_units as f64 / COST_SCALE / self.quantum as f64
    }

    /// Shift every position by the lattice element `g`. The cost is
    /// unchanged exactly; translating by `g` then `-g` restores the
    /// original plan bit for bit.
    pub fn translate(&self, g: &LatticePoint) -> TransportPlan {
        let mut out = self.clone();
        out.offset = self.offset.add(g);
        out
    }

    /// Transported quanta per source cell.
    pub fn used_per_source(&self) -> Vec<u64> {
        let mut used = vec![0u64; self.sources.len()];
        for e in &self.entries {
            used[e.source as usize] += e.mass;
        }
        used
    }

    /// Received quanta per target atom.
    pub fn received_per_target(&self) -> Vec<u64> {
        let mut rec = vec![0u64; self.targets.len()];
        for e in &self.entries {
            rec[e.target as usize] += e.mass;
        }
        rec
    }

    pub fn total_transported(&self) -> u64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Restriction `1_{M x A} q` to targets whose containing cell lies in
    /// the given cell set (absolute coordinates). Source list and grid are
    /// kept; the exact restricted cost is recomputed from the entries.
    pub fn restrict_to_target_cells(
        &self,
        cells: &[LatticePoint],
        spec: &CostSpec,
    ) -> TransportPlan {
        let set: std::collections::HashSet<&LatticePoint> = cells.iter().collect();
        let keep: Vec<bool> = (0..self.targets.len())
            .map(|j| set.contains(&self.target_pos(j).containing_cell()))
            .collect();
        let mut new_index = vec![u32::MAX; self.targets.len()];
        let mut targets = Vec::new();
        for (j, &k) in keep.iter().enumerate() {
            if k {
                new_index[j] = targets.len() as u32;
                targets.push(self.targets[j]);
            }
        }
        let mut entries = Vec::new();
        let mut cost_units = 0i128;
        for e in &self.entries {
            if keep[e.target as usize] {
                cost_units += e.mass as i128
                    * cost_units_for(
                        spec,
                        &self.sources[e.source as usize].0,
                        &self.targets[e.target as usize].0,
                    ) as i128;
                entries.push(PlanEntry { target: new_index[e.target as usize], ..*e });
            }
        }
        TransportPlan { targets, entries, cost_units, ..self.clone() }
    }

    /// CSV export `src_x[,src_y[,src_z]],tgt_id,tgt_x[,...],mass_quanta`.
    /// Untransported source mass is emitted with `tgt_id = -1` and the
    /// source position repeated as the (cemetery) target columns.
    pub fn to_csv(&self) -> String {
        let dim = self.sources.first().map(|s| s.0.dim()).unwrap_or(1);
        let cols = ["x", "y", "z"];
        let mut out = String::new();
        for c in &cols[..dim] {
            out.push_str(&format!("src_{c},"));
        }
        out.push_str("tgt_id,");
        for c in &cols[..dim] {
            out.push_str(&format!("tgt_{c},"));
        }
        out.push_str("mass_quanta\n");
        {
            let mut row = |src: Point, id: i64, tgt: Point, mass: u64| {
                for v in src.coords() {
                    out.push_str(&format!("{v},"));
                }
                out.push_str(&format!("{id},"));
                for v in tgt.coords() {
                    out.push_str(&format!("{v},"));
                }
                out.push_str(&format!("{mass}\n"));
            };
            for e in &self.entries {
                row(
                    self.source_pos(e.source as usize),
                    e.target as i64,
                    self.target_pos(e.target as usize),
                    e.mass,
                );
            }
            if matches!(self.mode, SolveMode::SemiSource) {
                let used = self.used_per_source();
                for (i, &(_, supply)) in self.sources.iter().enumerate() {
                    if used[i] < supply {
                        let p = self.source_pos(i);
                        row(p, -1, p, supply - used[i]);
                    }
                }
            }
        }
        out
    }
}

/// Fixed-point unit cost, shared by solver, oracle and audits.
pub fn cost_units_for(spec: &CostSpec, x: &Point, y: &Point) -> i64 {
    let c = spec.cost(x, y).expect("matching dimensions") * COST_SCALE;
    debug_assert!(c < 9.0e18, "cost overflow: {c}");
    c.round() as i64
}

fn cost_matrix(spec: &CostSpec, sources: &[(Point, u64)], targets: &[(Point, u64)]) -> Vec<i64> {
    let n = targets.len();
    let mut cost = vec![0i64; sources.len() * n];
    for (i, (x, _)) in sources.iter().enumerate() {
        for (j, (y, _)) in targets.iter().enumerate() {
            cost[i * n + j] = cost_units_for(spec, x, y);
        }
    }
    cost
}

/// Core solve on explicit source/target lists (already canonical).
fn solve_lists(
    sources: Vec<(Point, u64)>,
    source_grid: Option<Grid>,
    targets: Vec<(Point, u64)>,
    spec: &CostSpec,
    mode: SolveMode,
    quantum: u64,
) -> Result<TransportPlan, SolveError> {
    let dim = sources
        .first()
        .map(|s| s.0.dim())
        .or_else(|| targets.first().map(|t| t.0.dim()))
        .unwrap_or(1);
    let supply: u64 = sources.iter().map(|s| s.1).sum();
    let demand: u64 = targets.iter().map(|t| t.1).sum();
    match mode {
        SolveMode::Coupling => {
            if targets.is_empty() && supply > 0 {
                return Err(SolveError::EmptyTarget);
            }
            if supply != demand {
                return Err(SolveError::MassMismatch { supply, demand });
            }
        }
        SolveMode::SemiSource => {
            if supply < demand {
                return Err(SolveError::InsufficientSource { supply, demand });
            }
        }
        SolveMode::SemiTarget => {
            if demand < supply {
                return Err(SolveError::InsufficientCapacity { supply, capacity: demand });
            }
        }
    }
    let flow_value = match mode {
        SolveMode::Coupling | SolveMode::SemiSource => demand,
        SolveMode::SemiTarget => supply,
    };
    let (entries, cost_units) = if flow_value == 0 {
        (Vec::new(), 0)
    } else {
        let cost = cost_matrix(spec, &sources, &targets);
        let supplies: Vec<u64> = sources.iter().map(|s| s.1).collect();
        let demands: Vec<u64> = targets.iter().map(|t| t.1).collect();
        let sol = flow::solve(&flow::Instance {
            supplies: &supplies,
            demands: &demands,
            cost: &cost,
            flow_value,
        })?;
        let entries = sol
            .flows
            .into_iter()
            .map(|(i, j, f)| PlanEntry { source: i, target: j, mass: f })
            .collect();
        (entries, sol.total_cost)
    };
    Ok(TransportPlan {
        nonunique_possible: spec.nonunique_possible(dim),
        offset: LatticePoint::origin(dim),
        sources,
        targets,
        entries,
        quantum,
        cost_units,
        source_grid,
        mode,
    })
}

fn density_sources(src: &DiscreteDensity) -> Vec<(Point, u64)> {
    (0..src.grid.n_cells()).map(|i| (src.grid.cell_center(i), src.masses[i])).collect()
}

fn config_targets(tgt: &PointConfiguration) -> Vec<(Point, u64)> {
    let mut atoms: Vec<(Point, u64)> = tgt.atoms.iter().map(|a| (a.pos, a.quanta)).collect();
    // canonical order: permuting the input must not change the plan
    atoms.sort_by(|a, b| a.0.coords().partial_cmp(b.0.coords()).expect("finite positions"));
    atoms
}

fn check_quanta(src_q: u64, tgt_q: u64) -> Result<(), SolveError> {
    if src_q != tgt_q {
        return Err(SolveError::QuantumMismatch { src: src_q, tgt: tgt_q });
    }
    Ok(())
}

/// Optimal coupling of a quantized density and an atom configuration;
/// requires exactly balanced totals.
pub fn solve_coupling(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
) -> Result<TransportPlan, SolveError> {
    check_quanta(src.quantum, tgt.quantum)?;
    solve_lists(
        density_sources(src),
        Some(src.grid),
        config_targets(tgt),
        spec,
        SolveMode::Coupling,
        src.quantum,
    )
}

/// Optimal semicoupling with exact target marginal: only the demanded mass
/// is shipped, from wherever is cheapest; the rest stays put.
pub fn solve_semicoupling_source(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
) -> Result<TransportPlan, SolveError> {
    check_quanta(src.quantum, tgt.quantum)?;
    solve_lists(
        density_sources(src),
        Some(src.grid),
        config_targets(tgt),
        spec,
        SolveMode::SemiSource,
        src.quantum,
    )
}

/// Optimal semicoupling with exact source marginal and capacitated atoms.
pub fn solve_semicoupling_target(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
) -> Result<TransportPlan, SolveError> {
    check_quanta(src.quantum, tgt.quantum)?;
    solve_lists(
        density_sources(src),
        Some(src.grid),
        config_targets(tgt),
        spec,
        SolveMode::SemiTarget,
        src.quantum,
    )
}

/// Optimal transport between two atom configurations.
pub fn solve_points(
    src: &PointConfiguration,
    tgt: &PointConfiguration,
    spec: &CostSpec,
    mode: SolveMode,
) -> Result<TransportPlan, SolveError> {
    check_quanta(src.quantum, tgt.quantum)?;
    solve_lists(config_targets(src), None, config_targets(tgt), spec, mode, src.quantum)
}

/// Optimal transport on explicit weighted lists (used by audits).
pub fn solve_raw(
    sources: Vec<(Point, u64)>,
    targets: Vec<(Point, u64)>,
    spec: &CostSpec,
    mode: SolveMode,
    quantum: u64,
) -> Result<TransportPlan, SolveError> {
    solve_lists(sources, None, targets, spec, mode, quantum)
}

/// The cemetery reduction made explicit: solve the balanced coupling
/// against the target plus a zero-cost cemetery atom of weight `N - alpha`,
/// then drop cemetery entries. Must agree with [`solve_semicoupling_source`]
/// exactly in cost.
pub fn solve_coupling_with_cemetery(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
) -> Result<TransportPlan, SolveError> {
    check_quanta(src.quantum, tgt.quantum)?;
    let sources = density_sources(src);
    let mut targets = config_targets(tgt);
    let supply: u64 = sources.iter().map(|s| s.1).sum();
    let demand: u64 = targets.iter().map(|t| t.1).sum();
    if supply < demand {
        return Err(SolveError::InsufficientSource { supply, demand });
    }
    let n_real = targets.len();
    let slack = supply - demand;
    // cemetery column: position is irrelevant because its costs are zeroed
    if slack > 0 {
        let anchor = sources.first().map(|s| s.0).unwrap_or_else(|| Point::new(&[0.0]).unwrap());
        targets.push((anchor, slack));
    }
    let supplies: Vec<u64> = sources.iter().map(|s| s.1).collect();
    let demands: Vec<u64> = targets.iter().map(|t| t.1).collect();
    let n = targets.len();
    let mut cost = cost_matrix(spec, &sources, &targets);
    if slack > 0 {
        for i in 0..sources.len() {
            cost[i * n + n_real] = 0;
        }
    }
    let sol = flow::solve(&flow::Instance {
        supplies: &supplies,
        demands: &demands,
        cost: &cost,
        flow_value: supply,
    })?;
    let entries: Vec<PlanEntry> = sol
        .flows
        .into_iter()
        .filter(|&(_, j, _)| (j as usize) < n_real)
        .map(|(i, j, f)| PlanEntry { source: i, target: j, mass: f })
        .collect();
    let cost_units = entries
        .iter()
        .map(|e| e.mass as i128 * cost[e.source as usize * n + e.target as usize] as i128)
        .sum();
    targets.truncate(n_real);
    Ok(TransportPlan {
        nonunique_possible: spec.nonunique_possible(src.grid.dim),
        offset: LatticePoint::origin(src.grid.dim),
        sources,
        targets,
        entries,
        quantum: src.quantum,
        cost_units,
        source_grid: Some(src.grid),
        mode: SolveMode::SemiSource,
    })
}

/// Integral of the cost against the plan, in mass units:
/// `sum mass * theta(d(source, target)) / K`. Cemetery mass contributes 0.
pub fn plan_cost(plan: &TransportPlan, spec: &CostSpec) -> f64 {
    plan.entries
        .iter()
        .map(|e| {
            let c = spec
                .cost(&plan.sources[e.source as usize].0, &plan.targets[e.target as usize].0)
                .expect("matching dimensions");
            e.mass as f64 * c
        })
        .sum::<f64>()
        / plan.quantum as f64
}

/// Exhaustive-enumeration optimum for desk-size instances; the independent
/// oracle the flow solver is checked against.
pub fn brute_force_oracle(
    sources: &[(Point, u64)],
    targets: &[(Point, u64)],
    spec: &CostSpec,
    mode: SolveMode,
) -> Result<(i128, Vec<PlanEntry>), OracleError> {
    let cost = cost_matrix(spec, sources, targets);
    let supplies: Vec<u64> = sources.iter().map(|s| s.1).collect();
    let demands: Vec<u64> = targets.iter().map(|t| t.1).collect();
    oracle::brute_force(&supplies, &demands, &cost, mode)
}

/// Result of sampling cycle inequalities over a plan's support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub cycles_checked: u64,
    pub violations: u64,
    /// Largest `(sum c(x_i,y_i) - sum c(x_i,y_{i+1})) / k` observed;
    /// positive values mean the cycle inequality failed by that much per
    /// support point.
    pub worst_slack: f64,
}

/// Sample `n_cycles` random cycles of length at most `k_max` over the
/// plan's support points and check c-cyclical monotonicity with additive
/// tolerance `tol * k`.
pub fn verify_cyclical_monotonicity(
    plan: &TransportPlan,
    spec: &CostSpec,
    k_max: usize,
    n_cycles: u64,
    tol: f64,
    seed: u64,
) -> MonotonicityReport {
    let support: Vec<(Point, Point)> = plan
        .entries
        .iter()
        .map(|e| (plan.sources[e.source as usize].0, plan.targets[e.target as usize].0))
        .collect();
    let mut report =
        MonotonicityReport { cycles_checked: 0, violations: 0, worst_slack: f64::NEG_INFINITY };
    if support.len() < 2 || k_max < 2 {
        report.worst_slack = 0.0;
        return report;
    }
    let dim = support[0].0.dim();
    let mut rng = crate::randmeas::stream_rng(seed, Stream::Cycles, &LatticePoint::origin(dim));
    for _ in 0..n_cycles {
        let k = rng.gen_range(2..=k_max.min(support.len()));
        let mut picks: Vec<usize> = Vec::with_capacity(k);
        while picks.len() < k {
            let idx = rng.gen_range(0..support.len());
            if !picks.contains(&idx) {
                picks.push(idx);
            }
        }
        let mut lhs = 0.0f64;
        let mut rhs = 0.0f64;
        for a in 0..k {
            let (x, y) = &support[picks[a]];
            let (_, y_next) = &support[picks[(a + 1) % k]];
            lhs += spec.cost(x, y).expect("matching dimensions");
            rhs += spec.cost(x, y_next).expect("matching dimensions");
        }
        let slack = (lhs - rhs) / k as f64;
        if slack > report.worst_slack {
            report.worst_slack = slack;
        }
        if lhs > rhs + tol * k as f64 {
            report.violations += 1;
        }
        report.cycles_checked += 1;
    }
    report
}

/// Efficiency of the plan on the target window `A`: the ratio of the
/// optimal cost of re-transporting the plan's own restricted first marginal
/// onto the atoms in `A`, to the plan's actual restricted cost. Always in
/// `(0,1]`, exactly 1 when the restriction is already optimal; `0/0` is 1.
pub fn efficiency_audit(
    plan: &TransportPlan,
    area: &Window,
    spec: &CostSpec,
) -> Result<f64, SolveError> {
    let cells = area.cells();
    let restricted = plan.restrict_to_target_cells(&cells, spec);
    if restricted.entries.is_empty() {
        return Ok(1.0);
    }
    // first marginal of the restriction, as explicit weighted sources
    let used = restricted.used_per_source();
    let sources: Vec<(Point, u64)> = used
        .iter()
        .enumerate()
        .filter(|&(_, &u)| u > 0)
        .map(|(i, &u)| (restricted.source_pos(i), u))
        .collect();
    let received = restricted.received_per_target();
    let targets: Vec<(Point, u64)> = received
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > 0)
        .map(|(j, &r)| (restricted.target_pos(j), r))
        .collect();
    let optimal = solve_lists(sources, None, targets, spec, SolveMode::Coupling, plan.quantum)?;
    // actual restricted cost over the same absolute positions
    let actual: i128 = restricted
        .entries
        .iter()
        .map(|e| {
            e.mass as i128
                * cost_units_for(
                    spec,
                    &restricted.source_pos(e.source as usize),
                    &restricted.target_pos(e.target as usize),
                ) as i128
        })
        .sum();
    if actual == 0 && optimal.cost_units == 0 {
        return Ok(1.0);
    }
    Ok(optimal.cost_units as f64 / actual as f64)
}

/// Damped-ascent dual solve for quadratic cost; see [`DualPotentials`].
pub fn semidiscrete_dual_solve(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
    tol: f64,
    max_iter: u32,
) -> Result<DualPotentials, SolveError> {
    dual::dual_solve(src, tgt, spec, tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CostSpec, LatticePoint, Point, Window};
    use crate::randmeas::{
        discretize_lebesgue, sample_poisson, Atom, PointConfiguration, DEFAULT_QUANTUM,
    };

    fn pt(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    fn config(atoms: &[(&[f64], u64)], quantum: u64) -> PointConfiguration {
        let mut cfg = PointConfiguration::empty(quantum);
        for (pos, q) in atoms {
            cfg.atoms.push(Atom { pos: pt(pos), quanta: *q });
        }
        cfg
    }

    /// The one-dimensional fixture with a continuum of optimal plans:
    /// Lebesgue on [0,1) against atoms of mass 1/3 at 0 and 2/3 at 1/16,
    /// linear cost. The optimal cost is 11/24 regardless of the optimizer's
    /// choice among the optima.
    #[test]
    fn leb_vs_two_diracs_cost_11_over_24() {
        let quantum = crate::randmeas::adjust_quantum(1 << 20, 192, 1, (1, 1)).unwrap();
        let src = discretize_lebesgue(&[0], &[192], 192, (1, 1), 1 << 20).unwrap();
        assert_eq!(src.quantum, quantum);
        let tgt = config(&[(&[0.0], quantum / 3), (&[0.0625], 2 * quantum / 3)], quantum);
        let spec = CostSpec::euclidean(1.0).unwrap();
        let plan = solve_coupling(&src, &tgt, &spec).unwrap();
        assert!(plan.nonunique_possible);
        let cost = plan.cost_value();
        assert!((cost - 11.0 / 24.0).abs() < 5e-3, "cost {cost}");
        // marginal exactness in quanta
        assert_eq!(plan.received_per_target(), vec![quantum / 3, 2 * quantum / 3]);
        assert_eq!(plan.used_per_source(), src.masses);
    }

    #[test]
    fn single_cell_single_atom() {
        let src = discretize_lebesgue(&[0], &[1], 1, (1, 1), 16).unwrap();
        let tgt = config(&[(&[3.0], 16)], 16);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_coupling(&src, &tgt, &spec).unwrap();
        // cell center 0.5, atom 3.0 -> cost = (2.5)^2
        assert!((plan.cost_value() - 6.25).abs() < 1e-9);
        assert!((plan_cost(&plan, &spec) - 6.25).abs() < 1e-12);
    }

    #[test]
    fn noncrossing_beats_crossing() {
        let sources = vec![(pt(&[0.0]), 8u64), (pt(&[1.0]), 8u64)];
        let targets = vec![(pt(&[0.25]), 8u64), (pt(&[0.75]), 8u64)];
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_raw(sources, targets, &spec, SolveMode::Coupling, 16).unwrap();
        // enumerate both assignments: 0.0625 vs 0.5625 per unit mass
        assert!((plan_cost(&plan, &spec) - 0.0625).abs() < 1e-12);
        assert_eq!(plan.entries.len(), 2);
        assert_eq!(plan.entries[0].target, 0);
        assert_eq!(plan.entries[1].target, 1);
    }

    #[test]
    fn coupling_errors() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 16).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let empty = PointConfiguration::empty(16);
        assert_eq!(solve_coupling(&src, &empty, &spec).unwrap_err(), SolveError::EmptyTarget);
        let off = config(&[(&[0.5], 15)], 16);
        assert!(matches!(
            solve_coupling(&src, &off, &spec).unwrap_err(),
            SolveError::MassMismatch { .. }
        ));
        let wrong_quantum = config(&[(&[0.5], 16)], 32);
        assert!(matches!(
            solve_coupling(&src, &wrong_quantum, &spec).unwrap_err(),
            SolveError::QuantumMismatch { .. }
        ));
    }

    /// Four cells of mass 1/4 at 0.125..0.875 against a single atom of mass
    /// 1/2 at the center: the optimum uses the two middle cells.
    #[test]
    fn semicoupling_uses_middle_cells() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 8).unwrap();
        let tgt = config(&[(&[0.5], 4)], 8);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        assert!((plan.cost_value() - 0.0078125).abs() < 1e-9);
        let used = plan.used_per_source();
        assert_eq!(used, vec![0, 2, 2, 0]);
        // brute force over all integer allocations agrees exactly
        let sources = super::density_sources(&src);
        let targets = super::config_targets(&tgt);
        let (oracle_cost, _) =
            brute_force_oracle(&sources, &targets, &spec, SolveMode::SemiSource).unwrap();
        assert_eq!(oracle_cost, plan.cost_units);
    }

    #[test]
    fn semicoupling_balanced_equals_coupling() {
        let src = discretize_lebesgue(&[0, 0], &[4, 4], 4, (1, 1), 1 << 12).unwrap();
        let tgt = sample_poisson(&Window::new(LatticePoint::origin(2), 0), 1.0, 77, 1 << 12)
            .unwrap();
        // rescale target to exactly the source total
        let mut tgt = tgt;
        if tgt.is_empty() {
            return; // not this seed
        }
        let total = src.total_quanta();
        let per = total / tgt.len() as u64;
        let mut rem = total - per * tgt.len() as u64;
        for a in tgt.atoms.iter_mut() {
            a.quanta = per + if rem > 0 { rem -= 1; 1 } else { 0 };
        }
        let spec = CostSpec::euclidean(2.0).unwrap();
        let semi = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        let full = solve_coupling(&src, &tgt, &spec).unwrap();
        assert_eq!(semi.cost_units, full.cost_units);
        assert_eq!(semi.entries, full.entries);
    }

    #[test]
    fn semicoupling_empty_target_gives_empty_plan() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 16).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan =
            solve_semicoupling_source(&src, &PointConfiguration::empty(16), &spec).unwrap();
        assert!(plan.entries.is_empty());
        assert_eq!(plan.cost_units, 0);
        assert!(plan.used_per_source().iter().all(|&u| u == 0));
    }

    #[test]
    fn cemetery_reduction_matches_direct_semicoupling() {
        let spec = CostSpec::euclidean(2.0).unwrap();
        for seed in 0..10 {
            let src = discretize_lebesgue(&[-1, -1], &[12, 12], 4, (1, 1), 1 << 10).unwrap();
            let w = Window::new(LatticePoint::origin(2), 0);
            let tgt = sample_poisson(&w, 0.8, seed, 1 << 10).unwrap();
            if tgt.total_quanta() > src.total_quanta() {
                continue;
            }
            let direct = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
            let reduced = solve_coupling_with_cemetery(&src, &tgt, &spec).unwrap();
            assert_eq!(direct.cost_units, reduced.cost_units, "seed {seed}");
        }
    }

    #[test]
    fn target_semicoupling_capacities_respected() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 8).unwrap(); // 8 quanta
        let tgt = config(&[(&[0.1], 6), (&[0.9], 6)], 8);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_target(&src, &tgt, &spec).unwrap();
        assert_eq!(plan.used_per_source(), src.masses);
        let rec = plan.received_per_target();
        assert!(rec.iter().zip(&plan.targets).all(|(&r, &(_, cap))| r <= cap));
        assert_eq!(rec.iter().sum::<u64>(), 8);
    }

    #[test]
    fn target_semicoupling_tie_breaks_to_lowest_index() {
        // one source cell, two atoms at equal distance, ample capacity
        let sources = vec![(pt(&[0.0]), 4u64)];
        let targets = vec![(pt(&[-1.0]), 8u64), (pt(&[1.0]), 8u64)];
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_raw(sources, targets, &spec, SolveMode::SemiTarget, 8).unwrap();
        assert_eq!(plan.entries, vec![PlanEntry { source: 0, target: 0, mass: 4 }]);
    }

    #[test]
    fn oracle_agrees_with_solver_on_random_instances() {
        use rand::Rng;
        let spec = CostSpec::euclidean(2.0).unwrap();
        let mut rng = crate::randmeas::stream_rng(1234, Stream::Cycles, &LatticePoint::origin(1));
        for case in 0..30 {
            let m = rng.gen_range(2..=6);
            let n = rng.gen_range(1..=3);
            let mode = match case % 3 {
                0 => SolveMode::Coupling,
                1 => SolveMode::SemiSource,
                _ => SolveMode::SemiTarget,
            };
            let sources: Vec<(Point, u64)> = (0..m)
                .map(|_| (pt(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]), rng.gen_range(1..=5)))
                .collect();
            let total_s: u64 = sources.iter().map(|s| s.1).sum();
            let mut targets: Vec<(Point, u64)> = (0..n)
                .map(|_| (pt(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]), 0u64))
                .collect();
            // distribute a feasible demand total
            let total_t = match mode {
                SolveMode::Coupling => total_s,
                SolveMode::SemiSource => rng.gen_range(1..=total_s),
                SolveMode::SemiTarget => rng.gen_range(total_s..=total_s + 6),
            };
            let mut rem = total_t;
            for (i, t) in targets.iter_mut().enumerate() {
                let left = (n - 1 - i) as u64;
                let take = if left == 0 { rem } else { rng.gen_range(0..=rem.saturating_sub(left)) };
                t.1 = take;
                rem -= take;
            }
            targets.retain(|t| t.1 > 0);
            if targets.is_empty() {
                continue;
            }
            let (oracle_cost, _) = brute_force_oracle(&targets_sources(&sources), &targets, &spec, mode)
                .expect("oracle accepts");
            let plan = solve_raw(sources, targets, &spec, mode, 16).unwrap();
            assert_eq!(plan.cost_units, oracle_cost, "case {case}");
        }

        fn targets_sources(s: &[(Point, u64)]) -> Vec<(Point, u64)> {
            s.to_vec()
        }
    }

    #[test]
    fn support_is_sparse_basis() {
        let w = Window::new(LatticePoint::origin(2), 0);
        let spec_scene = crate::randmeas::SceneSpec::new(
            2,
            crate::randmeas::TargetSpec::Poisson { beta: 1.0 },
            5,
        );
        let src = crate::randmeas::discretize_window(&spec_scene, &w, 1, 4, 1 << 10).unwrap();
        let tgt = sample_poisson(&w, 1.0, 5, 1 << 10).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        let m_used = plan.used_per_source().iter().filter(|&&u| u > 0).count();
        let n_used = plan.targets.len();
        assert!(
            plan.entries.len() <= m_used + n_used - 1,
            "{} entries for {m_used}+{n_used} nodes",
            plan.entries.len()
        );
        // at most (#targets - 1) split sources
        let mut per_source = std::collections::HashMap::new();
        for e in &plan.entries {
            *per_source.entry(e.source).or_insert(0u32) += 1;
        }
        let split = per_source.values().filter(|&&c| c > 1).count();
        assert!(split <= n_used.saturating_sub(1));
    }

    #[test]
    fn translation_preserves_cost_exactly() {
        let src = discretize_lebesgue(&[0], &[16], 16, (1, 1), 1 << 10).unwrap();
        let tgt = config(&[(&[0.3], 512), (&[0.8], 512)], 1 << 10);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_coupling(&src, &tgt, &spec).unwrap();
        let g = LatticePoint::new(&[5]).unwrap();
        let moved = plan.translate(&g);
        assert_eq!(moved.cost_units, plan.cost_units);
        assert_eq!(moved.translate(&g.neg()), plan);
        // identity action
        assert_eq!(plan.translate(&LatticePoint::origin(1)), plan);
        // absolute positions actually move
        assert_eq!(moved.source_pos(0).coords()[0], plan.source_pos(0).coords()[0] + 5.0);
    }

    #[test]
    fn uniqueness_probe_permuted_input() {
        // generic random positions, all pairwise costs distinct: two solves
        // with permuted target order give the same plan up to relabeling
        let src = discretize_lebesgue(&[0, 0], &[8, 8], 8, (1, 1), 1 << 12).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let atoms = [
            (&[0.21647, 0.33412][..], 1u64 << 10),
            (&[0.77234, 0.12988][..], 1u64 << 11),
            (&[0.45821, 0.88673][..], 1u64 << 10),
        ];
        let total: u64 = atoms.iter().map(|a| a.1).sum();
        let mut cfg_a = config(&atoms, 1 << 12);
        // pad the first atom so totals match the (1<<12)-quantum grid mass
        cfg_a.atoms[0].quanta += src.total_quanta() - total;
        let mut cfg_b = cfg_a.clone();
        cfg_b.atoms.reverse();
        let plan_a = solve_coupling(&src, &cfg_a, &spec).unwrap();
        assert!(!plan_a.nonunique_possible);
        // canonicalization sorts atoms, so a reversed input must produce an
        // identical plan once re-solved through the public sampler path;
        // here we re-sort manually to mimic ingestion.
        cfg_b.atoms.sort_by(|a, b| a.pos.coords().partial_cmp(b.pos.coords()).unwrap());
        let plan_b = solve_coupling(&src, &cfg_b, &spec).unwrap();
        assert_eq!(plan_a, plan_b);
    }

    #[test]
    fn monotonicity_zero_violations_on_optimal_plan() {
        let w = Window::new(LatticePoint::origin(2), 0);
        let scene = crate::randmeas::SceneSpec::new(
            2,
            crate::randmeas::TargetSpec::Poisson { beta: 2.0 },
            42,
        );
        let src = crate::randmeas::discretize_window(&scene, &w, 1, 8, 1 << 12).unwrap();
        let tgt = sample_poisson(&w, 2.0, 42, 1 << 12).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        let report = verify_cyclical_monotonicity(&plan, &spec, 5, 2000, 1e-9, 7);
        assert_eq!(report.violations, 0, "worst slack {}", report.worst_slack);
        assert_eq!(report.cycles_checked, 2000);
    }

    #[test]
    fn monotonicity_detects_planted_crossing() {
        let plan = TransportPlan {
            sources: vec![(pt(&[0.0]), 8), (pt(&[1.0]), 8)],
            targets: vec![(pt(&[0.25]), 8), (pt(&[0.75]), 8)],
            entries: vec![
                PlanEntry { source: 0, target: 1, mass: 8 },
                PlanEntry { source: 1, target: 0, mass: 8 },
            ],
            quantum: 8,
            cost_units: 0,
            offset: LatticePoint::origin(1),
            source_grid: None,
            mode: SolveMode::Coupling,
            nonunique_possible: false,
        };
        let spec = CostSpec::euclidean(2.0).unwrap();
        let report = verify_cyclical_monotonicity(&plan, &spec, 2, 50, 1e-9, 3);
        assert!(report.violations > 0);
        assert!((report.worst_slack - 0.5).abs() < 1e-12, "slack {}", report.worst_slack);
    }

    #[test]
    fn monotonicity_vacuous_below_k2() {
        let plan = TransportPlan {
            sources: vec![(pt(&[0.0]), 8)],
            targets: vec![(pt(&[0.25]), 8)],
            entries: vec![PlanEntry { source: 0, target: 0, mass: 8 }],
            quantum: 8,
            cost_units: 0,
            offset: LatticePoint::origin(1),
            source_grid: None,
            mode: SolveMode::Coupling,
            nonunique_possible: false,
        };
        let spec = CostSpec::euclidean(2.0).unwrap();
        let report = verify_cyclical_monotonicity(&plan, &spec, 1, 100, 1e-9, 3);
        assert_eq!(report.cycles_checked, 0);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn efficiency_one_on_optimal_restriction() {
        let w = Window::new(LatticePoint::origin(2), 0);
        let scene = crate::randmeas::SceneSpec::new(
            2,
            crate::randmeas::TargetSpec::Poisson { beta: 2.0 },
            9,
        );
        let src = crate::randmeas::discretize_window(&scene, &w, 1, 8, 1 << 12).unwrap();
        let tgt = sample_poisson(&w, 2.0, 9, 1 << 12).unwrap();
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        let eff = efficiency_audit(&plan, &w, &spec).unwrap();
        assert!((eff - 1.0).abs() < 1e-12, "eff {eff}");
        // single-atom window still re-solves to 1.0
        let atom_cell = plan.target_pos(0).containing_cell();
        let single = Window::new(atom_cell, 0);
        let eff1 = efficiency_audit(&plan, &single, &spec).unwrap();
        assert!((eff1 - 1.0).abs() < 1e-12, "eff {eff1}");
    }

    #[test]
    fn efficiency_below_one_on_swapped_plan() {
        let mut plan = TransportPlan {
            sources: vec![(pt(&[0.1, 0.5]), 8), (pt(&[0.9, 0.5]), 8)],
            targets: vec![(pt(&[0.2, 0.5]), 8), (pt(&[0.8, 0.5]), 8)],
            entries: vec![
                PlanEntry { source: 0, target: 1, mass: 8 },
                PlanEntry { source: 1, target: 0, mass: 8 },
            ],
            quantum: 8,
            cost_units: 0,
            offset: LatticePoint::origin(2),
            source_grid: None,
            mode: SolveMode::Coupling,
            nonunique_possible: false,
        };
        let spec = CostSpec::euclidean(2.0).unwrap();
        plan.cost_units = plan
            .entries
            .iter()
            .map(|e| {
                e.mass as i128
                    * cost_units_for(
                        &spec,
                        &plan.sources[e.source as usize].0,
                        &plan.targets[e.target as usize].0,
                    ) as i128
            })
            .sum();
        let w = Window::new(LatticePoint::origin(2), 0);
        let eff = efficiency_audit(&plan, &w, &spec).unwrap();
        assert!(eff < 1.0, "eff {eff}");
        // cross-check by oracle on the same restricted instance
        let sources = vec![(pt(&[0.1, 0.5]), 8u64), (pt(&[0.9, 0.5]), 8u64)];
        let targets = vec![(pt(&[0.2, 0.5]), 8u64), (pt(&[0.8, 0.5]), 8u64)];
        let (opt, _) =
            brute_force_oracle(&sources, &targets, &spec, SolveMode::Coupling).unwrap();
        let actual = plan.cost_units;
        assert!((eff - opt as f64 / actual as f64).abs() < 1e-12);
    }

    #[test]
    fn dual_single_atom_trivial() {
        let src = discretize_lebesgue(&[0, 0], &[8, 8], 8, (1, 1), 1 << 12).unwrap();
        let tgt = config(&[(&[0.4, 0.6], src.total_quanta())], 1 << 12);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let duals = semidiscrete_dual_solve(&src, &tgt, &spec, 1e-9, 100).unwrap();
        assert!(duals.converged);
        assert_eq!(duals.residual, 0.0);
    }

    #[test]
    fn dual_two_symmetric_atoms_split_evenly() {
        let src = discretize_lebesgue(&[0, 0], &[16, 16], 16, (1, 1), 1 << 12).unwrap();
        let half = src.total_quanta() / 2;
        let tgt = config(&[(&[0.25, 0.5], half), (&[0.75, 0.5], half)], 1 << 12);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let duals = semidiscrete_dual_solve(&src, &tgt, &spec, 1e-9, 200).unwrap();
        assert!(duals.converged, "residual {}", duals.residual);
        assert!((duals.weights[0] - duals.weights[1]).abs() < 1e-9);
        // argmax consistency: assigned atom maximizes Phi at the center
        let atoms: Vec<(Point, u64)> = tgt.atoms.iter().map(|a| (a.pos, a.quanta)).collect();
        for c in 0..src.grid.n_cells() {
            let x = src.grid.cell_center(c);
            let i = duals.assign(&spec, &atoms, &x);
            let phi = |j: usize| {
                let d = spec.geometry.distance(&x, &atoms[j].0);
                duals.weights[j] - d * d
            };
            assert!(phi(i) >= phi(1 - i) - 1e-12);
        }
    }

    #[test]
    fn dual_matches_exact_solver_on_random_atoms() {
        let src = discretize_lebesgue(&[0, 0], &[64, 64], 64, (1, 1), DEFAULT_QUANTUM).unwrap();
        let w = Window::new(LatticePoint::origin(2), 0);
        // 10 binomial atoms in the unit cell region around the origin cell
        let mut tgt = crate::randmeas::sample_binomial(&w, 2, 31, DEFAULT_QUANTUM);
        tgt.atoms.retain(|a| {
            let c = a.pos.coords();
            (0.0..1.0).contains(&c[0]) && (0.0..1.0).contains(&c[1])
        });
        while tgt.atoms.len() > 10 {
            tgt.atoms.pop();
        }
        assert!(!tgt.is_empty());
        let per = src.total_quanta() / tgt.len() as u64;
        let mut rem = src.total_quanta() - per * tgt.len() as u64;
        for a in tgt.atoms.iter_mut() {
            a.quanta = per + if rem > 0 { rem -= 1; 1 } else { 0 };
        }
        let spec = CostSpec::euclidean(2.0).unwrap();
        let duals = semidiscrete_dual_solve(&src, &tgt, &spec, 2e-4, 3000).unwrap();
        assert!(duals.converged, "residual {} after {} iters", duals.residual, duals.iterations);
        let exact = solve_coupling(&src, &tgt, &spec).unwrap();
        let dual_cost = induced_cost(&src, &tgt, &duals, &spec);
        let rel = (dual_cost - exact.cost_value()).abs() / exact.cost_value();
        assert!(rel < 1e-3, "relative gap {rel}");
    }

    #[test]
    fn dual_rejects_non_quadratic() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 16).unwrap();
        let tgt = config(&[(&[0.5], 16)], 16);
        let spec = CostSpec::euclidean(1.0).unwrap();
        assert_eq!(
            semidiscrete_dual_solve(&src, &tgt, &spec, 1e-6, 10).unwrap_err(),
            SolveError::QuadraticOnly
        );
    }

    #[test]
    fn plan_csv_includes_cemetery_rows() {
        let src = discretize_lebesgue(&[0], &[4], 4, (1, 1), 8).unwrap();
        let tgt = config(&[(&[0.5], 4)], 8);
        let spec = CostSpec::euclidean(2.0).unwrap();
        let plan = solve_semicoupling_source(&src, &tgt, &spec).unwrap();
        let csv = plan.to_csv();
        assert!(csv.starts_with("src_x,tgt_id,tgt_x,mass_quanta\n"));
        assert!(csv.lines().any(|l| l.split(',').nth(1) == Some("-1")));
    }
}
