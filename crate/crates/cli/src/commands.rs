//! Command implementations. Every command maps a parsed config to a list
//! of named text artifacts; writing and manifest bookkeeping happen in one
//! place so outputs stay byte-reproducible.

use crate::config::Config;
use equitransport::allocation::{convexity_audit, extract_cells, render_svg, starlike_audit, SvgStyle};
use equitransport::construct::{
    cost_decomposition, mean_cost_per_volume, CostCurve, WindowSolver,
};
use equitransport::domain::{Geometry, Window};
use equitransport::metrics::{wasserstein_metric, wasserstein_window, Mosaic, WindowMeasure};
use equitransport::randmeas::{discretize_lebesgue, sample_target_cells, SceneSpec};
use equitransport::solver::{
    efficiency_audit, solve_coupling, solve_semicoupling_target, verify_cyclical_monotonicity,
    SolveMode, TransportPlan,
};
use equitransport::LatticePoint;
use rayon::prelude::*;

#[derive(Debug)]
pub enum CmdError {
    /// Configuration problems: exit code 2.
    Config(String),
    /// Solver infeasibility: exit code 3.
    Infeasible(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Config(m) => write!(f, "configuration error: {m}"),
            CmdError::Infeasible(m) => write!(f, "solver infeasibility: {m}"),
        }
    }
}

pub type Artifacts = Vec<(String, String)>;
type CmdResult = Result<Artifacts, CmdError>;

fn cfg_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Config(e.to_string())
}

fn solve_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Infeasible(e.to_string())
}

fn window_from(cfg: &Config, origin: &[i32], radius: u32) -> Result<Window, CmdError> {
    Ok(Window::new(cfg.lattice_point(origin).map_err(cfg_err)?, radius))
}

fn make_solver(cfg: &Config) -> Result<WindowSolver, CmdError> {
    WindowSolver::new(
        cfg.scene_spec().map_err(cfg_err)?,
        cfg.cost_spec().map_err(cfg_err)?,
        cfg.grid.k,
        cfg.grid.quantum,
    )
    .map_err(solve_err)
}

pub fn run_sample(cfg: &Config) -> CmdResult {
    let section = cfg.sample.as_ref().ok_or(CmdError::Config("missing [sample] section".into()))?;
    let w = window_from(cfg, &section.origin, section.radius)?;
    let scene = cfg.scene_spec().map_err(cfg_err)?;
    let quantum = actual_quantum(cfg)?;
    let points = scene.sample_target(&w, quantum);
    Ok(vec![("points.csv".into(), points.to_csv())])
}

fn actual_quantum(cfg: &Config) -> Result<u64, CmdError> {
    equitransport::randmeas::adjust_quantum(
        cfg.grid.quantum,
        cfg.grid.k,
        cfg.scene.dimension,
        (cfg.scene.level[0], cfg.scene.level[1]),
    )
    .map_err(cfg_err)
}

fn solve_cells_from_config(cfg: &Config) -> Result<(Vec<LatticePoint>, SolveMode, Option<u32>), CmdError> {
    let section = cfg.solve.as_ref().ok_or(CmdError::Config("missing [solve] section".into()))?;
    let cells: Vec<LatticePoint> = match (&section.cells, &section.origin) {
        (Some(cells), _) => cells
            .iter()
            .map(|c| cfg.lattice_point(c))
            .collect::<Result<_, _>>()
            .map_err(cfg_err)?,
        (None, Some(origin)) => {
            let radius =
                section.radius.ok_or(CmdError::Config("solve.radius required with origin".into()))?;
            window_from(cfg, origin, radius)?.cells()
        }
        (None, None) => {
            return Err(CmdError::Config("solve needs either cells or origin+radius".into()))
        }
    };
    let mode = match section.mode.as_deref() {
        None | Some("semi_source") => SolveMode::SemiSource,
        Some("coupling") => SolveMode::Coupling,
        Some("semi_target") => SolveMode::SemiTarget,
        Some(other) => return Err(CmdError::Config(format!("solve.mode: unknown mode {other}"))),
    };
    Ok((cells, mode, section.margin))
}

fn solve_plan(cfg: &Config) -> Result<TransportPlan, CmdError> {
    let (cells, mode, margin) = solve_cells_from_config(cfg)?;
    match mode {
        SolveMode::SemiSource => {
            let mut solver = make_solver(cfg)?;
            match margin {
                Some(m) => solver.solve_cells_pinned(&cells, m).map_err(solve_err),
                None => solver.solve_cells(&cells).map_err(solve_err),
            }
        }
        SolveMode::Coupling | SolveMode::SemiTarget => {
            let scene = cfg.scene_spec().map_err(cfg_err)?;
            let spec = cfg.cost_spec().map_err(cfg_err)?;
            let quantum = actual_quantum(cfg)?;
            let src = boxed_source(&scene, &cells, margin.unwrap_or(0), cfg.grid.k, quantum)?;
            let tgt = sample_target_cells(&scene, &cells, quantum);
            match mode {
                SolveMode::Coupling => solve_coupling(&src, &tgt, &spec).map_err(solve_err),
                _ => solve_semicoupling_target(&src, &tgt, &spec).map_err(solve_err),
            }
        }
    }
}

fn boxed_source(
    scene: &SceneSpec,
    cells: &[LatticePoint],
    margin: u32,
    k: u32,
    quantum: u64,
) -> Result<equitransport::DiscreteDensity, CmdError> {
    let d = scene.dimension;
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for c in cells {
        for (a, &v) in c.coords().iter().enumerate() {
            lo[a] = lo[a].min(v as i64);
            hi[a] = hi[a].max(v as i64);
        }
    }
    let lower: Vec<i64> = (0..d).map(|a| lo[a] - margin as i64).collect();
    let cpa: Vec<u32> = (0..d)
        .map(|a| ((hi[a] - lo[a] + 1 + 2 * margin as i64) as u64 * k as u64) as u32)
        .collect();
    discretize_lebesgue(&lower, &cpa, k, scene.level, quantum).map_err(cfg_err)
}

pub fn run_solve(cfg: &Config) -> CmdResult {
    let plan = solve_plan(cfg)?;
    let summary = format!(
        "n_sources,n_targets,total_quanta,transported_quanta,cost_units,cost_value\n\
         {},{},{},{},{},{}\n",
        plan.sources.len(),
        plan.targets.len(),
        plan.sources.iter().map(|s| s.1).sum::<u64>(),
        plan.total_transported(),
        plan.cost_units,
        plan.cost_value()
    );
    Ok(vec![("plan.csv".into(), plan.to_csv()), ("summary.csv".into(), summary)])
}

pub fn run_mix(cfg: &Config) -> CmdResult {
    let section = cfg.mix.as_ref().ok_or(CmdError::Config("missing [mix] section".into()))?;
    let g = cfg.lattice_point(&section.g).map_err(cfg_err)?;
    let mut solver = make_solver(cfg)?;
    let mixed = solver.mix(g, section.r).map_err(solve_err)?;
    let mut rows = String::from("h,restricted_cost_units,entries\n");
    for (h, plan) in &mixed.components {
        let coords: Vec<String> = h.coords().iter().map(|c| c.to_string()).collect();
        rows.push_str(&format!("{},{},{}\n", coords.join(";"), plan.cost_units, plan.entries.len()));
    }
    let full = solver.solve_window(g, section.r).map_err(solve_err)?;
    let w = Window::new(g, section.r);
    let (per_cell, total) =
        cost_decomposition(&full, &w.cells(), &solver.cost);
    let summary = format!(
        "translates,mixed_restricted_units,window_cost_units,decomposition_gap_units,mixed_cost_value\n\
         {},{},{},{},{}\n",
        mixed.components.len(),
        mixed.restricted_cost_units(),
        full.cost_units,
        per_cell - total,
        mixed.restricted_cost_value()
    );
    Ok(vec![("mix_components.csv".into(), rows), ("mix_summary.csv".into(), summary)])
}

pub fn run_costcurve(cfg: &Config) -> CmdResult {
    let section =
        cfg.costcurve.as_ref().ok_or(CmdError::Config("missing [costcurve] section".into()))?;
    if section.r_min > section.r_max || section.n_seeds == 0 {
        return Err(CmdError::Config("costcurve: need r_min <= r_max and n_seeds >= 1".into()));
    }
    let scene = cfg.scene_spec().map_err(cfg_err)?;
    let spec = cfg.cost_spec().map_err(cfg_err)?;
    let seeds: Vec<u64> = (0..section.n_seeds).map(|i| scene.seed.wrapping_add(i)).collect();
    let rows: Result<Vec<_>, _> = (section.r_min..=section.r_max)
        .collect::<Vec<u32>>()
        .par_iter()
        .map(|&r| mean_cost_per_volume(&scene, &spec, cfg.grid.k, cfg.grid.quantum, r, &seeds))
        .collect();
    let curve = CostCurve { rows: rows.map_err(solve_err)? };
    Ok(vec![("costcurve.csv".into(), curve.to_csv())])
}

pub fn run_audit(cfg: &Config) -> CmdResult {
    let section = cfg.audit.as_ref().ok_or(CmdError::Config("missing [audit] section".into()))?;
    let w = window_from(cfg, &section.origin, section.radius)?;
    let mut solver = make_solver(cfg)?;
    let plan = solver.solve_window(w.origin, w.radius).map_err(solve_err)?;
    let spec = solver.cost.clone();
    let mut rows = String::from("check,value,threshold,pass\n");
    let mono = verify_cyclical_monotonicity(
        &plan,
        &spec,
        section.k_max,
        section.n_cycles,
        section.tol,
        solver.scene.seed,
    );
    rows.push_str(&format!(
        "cyclical_monotonicity_violations,{},0,{}\n",
        mono.violations,
        mono.violations == 0
    ));
    rows.push_str(&format!(
        "cyclical_monotonicity_worst_slack,{},{},{}\n",
        mono.worst_slack,
        section.tol,
        mono.worst_slack <= section.tol
    ));
    let eff = efficiency_audit(&plan, &w, &spec).map_err(solve_err)?;
    rows.push_str(&format!("efficiency_ratio,{},1,{}\n", eff, (eff - 1.0).abs() < 1e-9));
    let cells = extract_cells(&plan).map_err(solve_err)?;
    let euclidean = matches!(spec.geometry, Geometry::Euclidean);
    if (spec.exponent - 2.0).abs() < 1e-12 && euclidean && spec.scale_table.is_none() {
        let report = convexity_audit(&cells, section.n_chords, solver.scene.seed)
            .map_err(solve_err)?;
        rows.push_str(&format!(
            "convexity_violations,{},0,{}\n",
            report.violations,
            report.violations == 0
        ));
    }
    if (spec.exponent - 1.0).abs() < 1e-12
        && solver.scene.dimension >= 2
        && spec.scale_table.is_none()
    {
        let report = starlike_audit(&cells, &spec.geometry, section.n_rays, solver.scene.seed)
            .map_err(solve_err)?;
        rows.push_str(&format!(
            "starlike_violations,{},0,{}\n",
            report.violations,
            report.violations == 0
        ));
    }
    Ok(vec![("audit.csv".into(), rows)])
}

pub fn run_metric(cfg: &Config) -> CmdResult {
    let section = cfg.metric.as_ref().ok_or(CmdError::Config("missing [metric] section".into()))?;
    let w = window_from(cfg, &section.origin, section.radius)?;
    let scene = cfg.scene_spec().map_err(cfg_err)?;
    let quantum = actual_quantum(cfg)?;
    let p = cfg.cost.p;
    let per_cell = section.per_cell;
    let rows: Result<Vec<(String, String)>, CmdError> = (0..section.n_seeds)
        .collect::<Vec<u64>>()
        .par_iter()
        .map(|&i| {
            let mk = |j: u64| {
                let spec = SceneSpec {
                    seed: scene.seed.wrapping_add(3 * i + j),
                    target: equitransport::randmeas::TargetSpec::Binomial { per_cell },
                    ..scene.clone()
                };
                WindowMeasure::Points(spec.sample_target(&w, quantum))
            };
            let (a, b, c) = (mk(0), mk(1), mk(2));
            let w_ab = wasserstein_window(&a, &b, p, &w).map_err(solve_err)?;
            let w_ac = wasserstein_window(&a, &c, p, &w).map_err(solve_err)?;
            let w_cb = wasserstein_window(&c, &b, p, &w).map_err(solve_err)?;
            let pairs = format!(
                "{i},ab,{w_ab}\n{i},ac,{w_ac}\n{i},cb,{w_cb}\n"
            );
            let slack = wasserstein_metric(&a, &c, p, &w).map_err(solve_err)?
                + wasserstein_metric(&c, &b, p, &w).map_err(solve_err)?
                - wasserstein_metric(&a, &b, p, &w).map_err(solve_err)?;
            Ok((pairs, format!("{i},{slack}\n")))
        })
        .collect();
    let rows = rows?;
    let mut pair_csv = String::from("seed,pair,wpp_per_vol\n");
    let mut tri_csv = String::from("seed,triangle_slack\n");
    for (pairs, slack) in rows {
        pair_csv.push_str(&pairs);
        tri_csv.push_str(&slack);
    }
    Ok(vec![("metric_pairs.csv".into(), pair_csv), ("metric_triangle.csv".into(), tri_csv)])
}

pub fn run_tessellate(cfg: &Config) -> CmdResult {
    let section =
        cfg.tessellate.as_ref().ok_or(CmdError::Config("missing [tessellate] section".into()))?;
    let cells_list: Vec<LatticePoint> = match (&section.cells, &section.origin) {
        (Some(cells), _) => cells
            .iter()
            .map(|c| cfg.lattice_point(c))
            .collect::<Result<_, _>>()
            .map_err(cfg_err)?,
        (None, Some(origin)) => {
            let radius = section
                .radius
                .ok_or(CmdError::Config("tessellate.radius required with origin".into()))?;
            window_from(cfg, origin, radius)?.cells()
        }
        (None, None) => {
            return Err(CmdError::Config("tessellate needs either cells or origin+radius".into()))
        }
    };
    let scene = cfg.scene_spec().map_err(cfg_err)?;
    let spec = cfg.cost_spec().map_err(cfg_err)?;
    let quantum = actual_quantum(cfg)?;
    let plan = match section.mode.as_deref() {
        None | Some("coupling") => {
            let src =
                boxed_source(&scene, &cells_list, section.margin.unwrap_or(0), cfg.grid.k, quantum)?;
            let tgt = sample_target_cells(&scene, &cells_list, quantum);
            solve_coupling(&src, &tgt, &spec).map_err(solve_err)?
        }
        Some("semi_source") => {
            let mut solver = make_solver(cfg)?;
            match section.margin {
                Some(m) => solver.solve_cells_pinned(&cells_list, m).map_err(solve_err)?,
                None => solver.solve_cells(&cells_list).map_err(solve_err)?,
            }
        }
        Some("semi_target") => {
            let src =
                boxed_source(&scene, &cells_list, section.margin.unwrap_or(0), cfg.grid.k, quantum)?;
            let tgt = sample_target_cells(&scene, &cells_list, quantum);
            solve_semicoupling_target(&src, &tgt, &spec).map_err(solve_err)?
        }
        Some(other) => return Err(CmdError::Config(format!("tessellate.mode: unknown {other}"))),
    };
    let cells = extract_cells(&plan).map_err(solve_err)?;
    let svg = render_svg(&cells, &SvgStyle { scale: section.svg_scale, atom_radius: 3.0 })
        .map_err(solve_err)?;
    Ok(vec![("cells.csv".into(), cells.to_csv()), ("tessellation.svg".into(), svg)])
}

pub fn run_mosaic(cfg: &Config) -> CmdResult {
    let section = cfg.mosaic.as_ref().ok_or(CmdError::Config("missing [mosaic] section".into()))?;
    let w = window_from(cfg, &section.origin, section.radius)?;
    let scene = cfg.scene_spec().map_err(cfg_err)?;
    let quantum = actual_quantum(cfg)?;
    let cells_list = w.cells();
    let src = boxed_source(&scene, &cells_list, 0, cfg.grid.k, quantum)?;
    let base = SceneSpec {
        target: equitransport::randmeas::TargetSpec::Binomial { per_cell: section.per_cell },
        ..scene.clone()
    };
    let cfg_points = base.sample_target(&w, quantum);
    let mut mosaic = Mosaic::new(w, cfg.cost.p, src, cfg_points).map_err(solve_err)?;
    let mut rows = String::from("step,sigma,drift_mass_fraction,cost_per_vol\n");
    rows.push_str(&format!(
        "0,0,0,{}\n",
        mosaic.plan.cost_value() / mosaic.window.volume()
    ));
    for step in 1..=section.steps {
        let stats = mosaic.step(section.sigma, scene.seed).map_err(solve_err)?;
        rows.push_str(&format!(
            "{},{},{},{}\n",
            step, stats.sigma, stats.drift_mass_fraction, stats.cost_per_vol
        ));
    }
    Ok(vec![("mosaic.csv".into(), rows)])
}
