//! Semidiscrete dual solver for quadratic cost.
//!
//! For `theta(r) = r^2` the optimal coupling of a grid density and finitely
//! many atoms assigns each grid cell to the atom maximizing
//! `Phi_i(x) = b_i - d^2(x, xi_i)`, a power-diagram (Laguerre) cell. The
//! weights `b` are found by damped gradient ascent on the concave dual of
//! the cell-mass matching problem, with step halving on overshoot.

use crate::domain::{CostSpec, Point};
use crate::randmeas::{DiscreteDensity, PointConfiguration};

use super::SolveError;

/// Converged (or best-effort) dual weights for the power-diagram assignment.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    /// Per-atom weights `b_i`; the induced cell of atom `i` is
    /// `{x : b_i - d^2(x, xi_i) >= b_j - d^2(x, xi_j) for all j}`.
    pub weights: Vec<f64>,
    pub iterations: u32,
    /// Final worst per-atom cell-mass mismatch, in mass units.
    pub residual: f64,
    /// False when `max_iter` ran out before reaching the residual target;
    /// reported, not fatal.
    pub converged: bool,
}

impl DualPotentials {
    /// Atom index whose `Phi_i` is maximal at `x`; ties to the lowest index.
    pub fn assign(&self, spec: &CostSpec, atoms: &[(Point, u64)], x: &Point) -> usize {
        let mut best = 0usize;
        let mut best_phi = f64::NEG_INFINITY;
        for (i, (pos, _)) in atoms.iter().enumerate() {
            let d = spec.geometry.distance(x, pos);
            let phi = self.weights[i] - d * d;
            if phi > best_phi {
                best_phi = phi;
                best = i;
            }
        }
        best
    }
}

pub(super) fn dual_solve(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    spec: &CostSpec,
    tol: f64,
    max_iter: u32,
) -> Result<DualPotentials, SolveError> {
    if spec.scale_table.is_some() || (spec.exponent - 2.0).abs() > 1e-12 {
        return Err(SolveError::QuadraticOnly);
    }
    if src.quantum != tgt.quantum {
        return Err(SolveError::QuantumMismatch { src: src.quantum, tgt: tgt.quantum });
    }
    if src.total_quanta() != tgt.total_quanta() {
        return Err(SolveError::MassMismatch {
            supply: src.total_quanta(),
            demand: tgt.total_quanta(),
        });
    }
    if tgt.is_empty() {
        return Err(SolveError::EmptyTarget);
    }
    let k = tgt.len();
    let quantum = src.quantum as f64;
    let atoms: Vec<(Point, u64)> = tgt.atoms.iter().map(|a| (a.pos, a.quanta)).collect();
    let targets: Vec<f64> = atoms.iter().map(|&(_, q)| q as f64 / quantum).collect();

    // squared distances cell -> atom, cached
    let n_cells = src.grid.n_cells();
    let mut d2 = vec![0.0f64; n_cells * k];
    for c in 0..n_cells {
        let x = src.grid.cell_center(c);
        for (i, (pos, _)) in atoms.iter().enumerate() {
            let d = spec.geometry.distance(&x, pos);
            d2[c * k + i] = d * d;
        }
    }
    let cell_mass: Vec<f64> = src.masses.iter().map(|&m| m as f64 / quantum).collect();

    // dual value and per-atom cell masses for given weights
    let evaluate = |b: &[f64], masses: &mut [f64]| -> f64 {
        masses.iter_mut().for_each(|m| *m = 0.0);
        let mut value = b.iter().zip(&targets).map(|(bi, ai)| bi * ai).sum::<f64>();
        for c in 0..n_cells {
            let row = &d2[c * k..(c + 1) * k];
            let mut best = 0usize;
            let mut best_phi = b[0] - row[0];
            for i in 1..k {
                let phi = b[i] - row[i];
                if phi > best_phi {
                    best_phi = phi;
                    best = i;
                }
            }
            masses[best] += cell_mass[c];
            // dual integrand: min_i (d^2 - b_i) = -max_i (b_i - d^2)
            value -= best_phi * cell_mass[c];
        }
        value
    };

    let mut b = vec![0.0f64; k];
    let mut masses = vec![0.0f64; k];
    let mut value = evaluate(&b, &mut masses);
    let mut residual =
        masses.iter().zip(&targets).map(|(m, a)| (m - a).abs()).fold(0.0f64, f64::max);
    let mean_mass = targets.iter().sum::<f64>() / k as f64;
    let mut step = mean_mass.max(1e-12);
    let mut iterations = 0u32;
    while residual > tol && iterations < max_iter {
        iterations += 1;
        let grad: Vec<f64> = targets.iter().zip(&masses).map(|(a, m)| a - m).collect();
        let mut trial = vec![0.0f64; k];
        let mut trial_masses = vec![0.0f64; k];
        loop {
            for i in 0..k {
                trial[i] = b[i] + step * grad[i];
            }
            let trial_value = evaluate(&trial, &mut trial_masses);
            if trial_value >= value || step < 1e-14 {
                b.copy_from_slice(&trial);
                value = trial_value;
                masses.copy_from_slice(&trial_masses);
                step *= 1.2;
                break;
            }
            step *= 0.5;
        }
        residual =
            masses.iter().zip(&targets).map(|(m, a)| (m - a).abs()).fold(0.0f64, f64::max);
    }
    Ok(DualPotentials { weights: b, iterations, residual, converged: residual <= tol })
}

/// Cost of the assignment induced by the dual weights: every cell's mass
/// goes to its maximizing atom.
pub fn induced_cost(
    src: &DiscreteDensity,
    tgt: &PointConfiguration,
    duals: &DualPotentials,
    spec: &CostSpec,
) -> f64 {
    let atoms: Vec<(Point, u64)> = tgt.atoms.iter().map(|a| (a.pos, a.quanta)).collect();
    let quantum = src.quantum as f64;
    let mut total = 0.0;
    for c in 0..src.grid.n_cells() {
        if src.masses[c] == 0 {
            continue;
        }
        let x = src.grid.cell_center(c);
        let i = duals.assign(spec, &atoms, &x);
        let d = spec.geometry.distance(&x, &atoms[i].0);
        total += src.masses[c] as f64 / quantum * d * d;
    }
    total
}
