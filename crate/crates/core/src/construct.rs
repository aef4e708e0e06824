//! Per-window optimal semicouplings, the averaged (mixed) plan, cost-per-
//! volume curves, density profiles and transport-map drift diagnostics.
//!
//! A [`WindowSolver`] owns one scene realization (scene spec + seed) and
//! solves the optimal semicoupling onto the targets of any window `hB_r`,
//! with the source measure discretized over an adaptively enlarged box:
//! the margin doubles until the outermost one-cell-thick shell of source
//! cells carries no transported mass, so the boxed solve is a faithful
//! stand-in for the unbounded source. Plans are cached per `(h, r)` and
//! all solves share one adjusted quantum, keeping cross-window comparisons
//! exact in integer arithmetic.

use crate::domain::{CostSpec, LatticePoint, Point, Window, MAX_DIM};
use crate::randmeas::{
    adjust_quantum, discretize_lebesgue, sample_target_cells, DiscreteDensity, MeasureError,
    SceneSpec,
};
use crate::solver::{solve_semicoupling_source, SolveError, TransportPlan};
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("source margin still insufficient at {0} cells")]
    MarginExhausted(u32),
    #[error("plan carries no source grid")]
    NoGrid,
}

/// Largest margin (in fundamental cells) the adaptive loop will try.
const MAX_MARGIN: u32 = 64;

/// Scene-bound window solver with plan cache.
pub struct WindowSolver {
    pub scene: SceneSpec,
    pub cost: CostSpec,
    /// Grid cells per unit length.
    pub grid_k: u32,
    quantum: u64,
    cache: HashMap<(LatticePoint, u32), Rc<TransportPlan>>,
}

impl WindowSolver {
    pub fn new(
        scene: SceneSpec,
        cost: CostSpec,
        grid_k: u32,
        requested_quantum: u64,
    ) -> Result<Self, MeasureError> {
        let quantum = adjust_quantum(requested_quantum, grid_k, scene.dimension, scene.level)?;
        Ok(Self { scene, cost, grid_k, quantum, cache: HashMap::new() })
    }

    /// The adjusted quantum shared by every solve of this instance.
    pub fn quantum(&self) -> u64 {
        self.quantum
    }

    /// Optimal semicoupling onto the targets in `hB_r` (cached).
    pub fn solve_window(
        &mut self,
        h: LatticePoint,
        r: u32,
    ) -> Result<Rc<TransportPlan>, ConstructError> {
        if let Some(plan) = self.cache.get(&(h, r)) {
            return Ok(plan.clone());
        }
        let plan = Rc::new(self.solve_cells(&Window::new(h, r).cells())?);
        self.cache.insert((h, r), plan.clone());
        Ok(plan)
    }

    /// Optimal semicoupling onto the targets in an arbitrary cell set,
    /// with adaptive source margin around the set's bounding box.
    pub fn solve_cells(&mut self, cells: &[LatticePoint]) -> Result<TransportPlan, ConstructError> {
        let mut margin = 1u32;
        loop {
            match self.solve_cells_pinned(cells, margin) {
                Err(ConstructError::MarginExhausted(_)) if margin < MAX_MARGIN => margin *= 2,
                other => return other,
            }
        }
    }

    /// One solve with a fixed margin; fails when the shell check or the
    /// mass balance demands a larger box.
    pub fn solve_cells_pinned(
        &mut self,
        cells: &[LatticePoint],
        margin: u32,
    ) -> Result<TransportPlan, ConstructError> {
        let src = self.source_box(cells, margin)?;
        let tgt = sample_target_cells(&self.scene, cells, self.quantum);
        if tgt.total_quanta() > src.total_quanta() {
            return Err(ConstructError::MarginExhausted(margin));
        }
        let plan = solve_semicoupling_source(&src, &tgt, &self.cost)?;
        // shell certificate: the outermost fundamental-cell ring of source
        // mass must stay untouched, otherwise the box bias could reach in
        let used = plan.used_per_source();
        let shell = src.grid.shell_indices(self.grid_k);
        if shell.iter().any(|&i| used[i] > 0) {
            return Err(ConstructError::MarginExhausted(margin));
        }
        Ok(plan)
    }

    fn source_box(
        &self,
        cells: &[LatticePoint],
        margin: u32,
    ) -> Result<DiscreteDensity, ConstructError> {
        let d = self.scene.dimension;
        let mut lo = [i64::MAX; MAX_DIM];
        let mut hi = [i64::MIN; MAX_DIM];
        for c in cells {
            for (a, &v) in c.coords().iter().enumerate() {
                lo[a] = lo[a].min(v as i64);
                hi[a] = hi[a].max(v as i64);
            }
        }
        let lower: Vec<i64> = (0..d).map(|a| lo[a] - margin as i64).collect();
        let cpa: Vec<u32> = (0..d)
            .map(|a| ((hi[a] - lo[a] + 1 + 2 * margin as i64) as u64 * self.grid_k as u64) as u32)
            .collect();
        Ok(discretize_lebesgue(&lower, &cpa, self.grid_k, self.scene.level, self.quantum)?)
    }

    /// The averaged plan over all window translates `h` in `g Lambda_r`:
    /// each component is `Q_{hB_r}` restricted to targets in the single
    /// fundamental cell `gB_0`, uniformly weighted.
    pub fn mix(&mut self, g: LatticePoint, r: u32) -> Result<MixedPlan, ConstructError> {
        let translates = Window::new(g, r).cells();
        let mut components = Vec::with_capacity(translates.len());
        let center = [g];
        for h in translates {
            let full = self.solve_window(h, r)?;
            components.push((h, full.restrict_to_target_cells(&center, &self.cost)));
        }
        Ok(MixedPlan { g, r, components })
    }

    /// Transported-mass fraction in the central cell's pre-image whose
    /// assignment (atom or cemetery) differs between the window solves at
    /// radii `r1` and `r2`.
    pub fn map_drift(&mut self, g: LatticePoint, r1: u32, r2: u32) -> Result<f64, ConstructError> {
        if r1 == r2 {
            return Ok(0.0);
        }
        let p1 = self.solve_window(g, r1)?;
        let p2 = self.solve_window(g, r2)?;
        Ok(assignment_drift(&p1, &p2, &g))
    }
}

/// The mixed (averaged) plan over the translate set `g Lambda_r`.
#[derive(Debug, Clone)]
pub struct MixedPlan {
    pub g: LatticePoint,
    pub r: u32,
    /// `(h, restriction of Q_{hB_r} to targets in gB_0)`, lexicographic in
    /// `h`. All components carry weight `1 / |Lambda_r|`.
    pub components: Vec<(LatticePoint, TransportPlan)>,
}

impl MixedPlan {
    pub fn weight(&self) -> f64 {
        1.0 / self.components.len() as f64
    }

    /// Unweighted sum of restricted component costs in fixed-point units;
    /// dividing by `|Lambda_r|` gives the mixed restricted cost.
    pub fn restricted_cost_units(&self) -> i128 {
        self.components.iter().map(|(_, p)| p.cost_units).sum()
    }

    /// Mixed restricted cost in mass units.
    pub fn restricted_cost_value(&self) -> f64 {
        let q = self.components.first().map(|(_, p)| p.quantum).unwrap_or(1);
        self.restricted_cost_units() as f64
            / self.components.len() as f64
            / crate::solver::COST_SCALE
            / q as f64
    }

    /// The restricted second marginal of every component, which a valid
    /// mixing must reproduce identically: the atoms of `gB_0` with their
    /// exact masses.
    pub fn component_marginals(&self) -> Vec<Vec<(Point, u64)>> {
        self.components
            .iter()
            .map(|(_, p)| {
                let rec = p.received_per_target();
                p.targets
                    .iter()
                    .zip(rec)
                    .filter(|&(_, r)| r > 0)
                    .map(|(&(pos, _), r)| (pos, r))
                    .collect()
            })
            .collect()
    }
}

/// Exact per-cell decomposition check: the costs of the plan restricted to
/// each cell of the window sum to the plan's total cost. This is the
/// regrouping identity behind the mixing construction, valid per
/// realization for any scene.
pub fn cost_decomposition(
    plan: &TransportPlan,
    cells: &[LatticePoint],
    cost: &CostSpec,
) -> (i128, i128) {
    let per_cell: i128 = cells
        .iter()
        .map(|c| plan.restrict_to_target_cells(&[*c], cost).cost_units)
        .sum();
    (per_cell, plan.cost_units)
}

/// Per-source-cell transported fraction of a semicoupling plan.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub grid: crate::randmeas::Grid,
    pub used: Vec<u64>,
    pub supply: Vec<u64>,
}

impl DensityProfile {
    pub fn rho(&self, idx: usize) -> f64 {
        if self.supply[idx] == 0 {
            0.0
        } else {
            self.used[idx] as f64 / self.supply[idx] as f64
        }
    }

    pub fn transported_quanta(&self) -> u64 {
        self.used.iter().sum()
    }

    /// `(global grid coordinates, used, supply)` per cell.
    pub fn by_global_coords(&self) -> HashMap<[i64; MAX_DIM], (u64, u64)> {
        (0..self.grid.n_cells())
            .map(|i| (global_coords(&self.grid, i), (self.used[i], self.supply[i])))
            .collect()
    }
}

fn global_coords(grid: &crate::randmeas::Grid, idx: usize) -> [i64; MAX_DIM] {
    let c = grid.cell_coords(idx);
    let mut out = [0i64; MAX_DIM];
    for a in 0..grid.dim {
        out[a] = grid.lower[a] * grid.resolution as i64 + c[a] as i64;
    }
    out
}

/// Extract the density profile of a plan produced from a grid source.
pub fn density_profile(plan: &TransportPlan) -> Result<DensityProfile, ConstructError> {
    let grid = plan.source_grid.ok_or(ConstructError::NoGrid)?;
    Ok(DensityProfile {
        grid,
        used: plan.used_per_source(),
        supply: plan.sources.iter().map(|s| s.1).collect(),
    })
}

/// A cell where the nested-window density monotonicity `rho_big >= rho_small`
/// fails, with both fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityViolation {
    pub cell: [i64; MAX_DIM],
    pub rho_small: f64,
    pub rho_big: f64,
}

/// Compare density profiles of a window solve and a strictly larger one on
/// their common cells. Cells absent from the larger grid count as 0; true
/// violations should be confined to fractional (split) cells.
pub fn density_monotonicity_violations(
    small: &DensityProfile,
    big: &DensityProfile,
) -> Vec<MonotonicityViolation> {
    let big_map = big.by_global_coords();
    let mut out = Vec::new();
    for i in 0..small.grid.n_cells() {
        if small.used[i] == 0 {
            continue;
        }
        let key = global_coords(&small.grid, i);
        let (used_big, supply_big) = big_map.get(&key).copied().unwrap_or((0, 1));
        let rho_small = small.rho(i);
        let rho_big = if supply_big == 0 { 0.0 } else { used_big as f64 / supply_big as f64 };
        if rho_big < rho_small {
            out.push(MonotonicityViolation { cell: key, rho_small, rho_big });
        }
    }
    out
}

type AtomKey = [u64; MAX_DIM];

fn point_key(p: &Point) -> AtomKey {
    let mut k = [0u64; MAX_DIM];
    for (a, &c) in p.coords().iter().enumerate() {
        k[a] = c.to_bits();
    }
    k
}

/// Fraction of source mass in the pre-image of the atoms of `gB_0` whose
/// assignment differs between two plans of the same scene. Atoms are
/// matched by exact position (one realization, consistent sampling);
/// untransported mass counts as assigned to the cemetery.
pub fn assignment_drift(p1: &TransportPlan, p2: &TransportPlan, g: &LatticePoint) -> f64 {
    let maps = [cell_assignments(p1), cell_assignments(p2)];
    let caps = [cell_supplies(p1), cell_supplies(p2)];
    // pre-image: cells sending mass to an atom living in gB_0, either plan
    let mut pre_image: std::collections::BTreeSet<[i64; MAX_DIM]> =
        std::collections::BTreeSet::new();
    for (plan, map) in [p1, p2].iter().zip(&maps) {
        for (cell, parts) in map {
            for (key, _) in parts {
                if *key == CEMETERY_KEY {
                    continue;
                }
                let pos = key_to_point(key, plan.sources[0].0.dim());
                if pos.containing_cell() == *g {
                    pre_image.insert(*cell);
                    continue;
                }
            }
        }
    }
    if pre_image.is_empty() {
        return 0.0;
    }
    let mut moved = 0u64;
    let mut total = 0u64;
    for cell in &pre_image {
        let cap = caps[0]
            .get(cell)
            .copied()
            .or_else(|| caps[1].get(cell).copied())
            .unwrap_or(0);
        total += cap;
        let empty = HashMap::new();
        let m1 = maps[0].get(cell).unwrap_or(&empty);
        let m2 = maps[1].get(cell).unwrap_or(&empty);
        let mut l1 = 0u64;
        let keys: std::collections::BTreeSet<&AtomKey> = m1.keys().chain(m2.keys()).collect();
        for key in keys {
            let a = m1.get(key).copied().unwrap_or(0);
            let b = m2.get(key).copied().unwrap_or(0);
            l1 += a.abs_diff(b);
        }
        moved += l1 / 2;
    }
    moved as f64 / total as f64
}

const CEMETERY_KEY: AtomKey = [u64::MAX; MAX_DIM];

fn key_to_point(key: &AtomKey, dim: usize) -> Point {
    let coords: Vec<f64> = key[..dim].iter().map(|&b| f64::from_bits(b)).collect();
    Point::new(&coords).expect("valid key")
}

fn cell_assignments(plan: &TransportPlan) -> HashMap<[i64; MAX_DIM], HashMap<AtomKey, u64>> {
    let grid = plan.source_grid.expect("grid plans only");
    let mut out: HashMap<[i64; MAX_DIM], HashMap<AtomKey, u64>> = HashMap::new();
    for e in &plan.entries {
        let cell = global_coords(&grid, e.source as usize);
        let key = point_key(&plan.targets[e.target as usize].0);
        *out.entry(cell).or_default().entry(key).or_insert(0) += e.mass;
    }
    // cemetery remainder so that every recorded cell's parts sum to supply
    let used = plan.used_per_source();
    for (i, &(_, supply)) in plan.sources.iter().enumerate() {
        if used[i] > 0 && used[i] < supply {
            let cell = global_coords(&grid, i);
            *out.entry(cell).or_default().entry(CEMETERY_KEY).or_insert(0) += supply - used[i];
        }
    }
    out
}

fn cell_supplies(plan: &TransportPlan) -> HashMap<[i64; MAX_DIM], u64> {
    let grid = plan.source_grid.expect("grid plans only");
    plan.sources
        .iter()
        .enumerate()
        .map(|(i, &(_, s))| (global_coords(&grid, i), s))
        .collect()
}

/// One row of the cost-per-volume curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCurveRow {
    pub r: u32,
    pub n_windows: u64,
    pub cost_per_vol: f64,
    pub stddev: f64,
    pub n_seeds: u64,
}

/// Monte Carlo table of window cost per volume against window radius.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostCurve {
    pub rows: Vec<CostCurveRow>,
}

impl CostCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,n_windows,cost_per_vol,stddev,n_seeds\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.r, row.n_windows, row.cost_per_vol, row.stddev, row.n_seeds
            ));
        }
        out
    }
}

/// Monte Carlo estimate of the mean optimal window cost per volume at
/// radius `r`: one window solve per seed, averaged.
pub fn mean_cost_per_volume(
    scene: &SceneSpec,
    cost: &CostSpec,
    grid_k: u32,
    requested_quantum: u64,
    r: u32,
    seeds: &[u64],
) -> Result<CostCurveRow, ConstructError> {
    assert!(!seeds.is_empty());
    let origin = LatticePoint::origin(scene.dimension);
    let vol = Window::new(origin, r).volume();
    let mut values = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut solver = WindowSolver::new(
            SceneSpec { seed, ..scene.clone() },
            cost.clone(),
            grid_k,
            requested_quantum,
        )?;
        let plan = solver.solve_window(origin, r)?;
        values.push(plan.cost_value() / vol);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    Ok(CostCurveRow {
        r,
        n_windows: seeds.len() as u64,
        cost_per_vol: mean,
        stddev: var.sqrt(),
        n_seeds: seeds.len() as u64,
    })
}

/// Drift rows exported as CSV `g,r1,r2,drift_mass_fraction` with the
/// lattice point encoded `c0;c1;...`.
pub fn drift_csv(rows: &[(LatticePoint, u32, u32, f64)]) -> String {
    let mut out = String::from("g,r1,r2,drift_mass_fraction\n");
    for (g, r1, r2, drift) in rows {
        let coords: Vec<String> = g.coords().iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{},{},{}\n", coords.join(";"), r1, r2, drift));
    }
    out
}
