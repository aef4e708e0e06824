//! Seeded samplers for point processes, quantized discretization of
//! Lebesgue measure and the compound-Poisson concentration bound.
//!
//! All masses are integer multiples of a quantum `1/K` so that downstream
//! solves and marginal audits are exact. Sampling is keyed per lattice cell
//! by `(seed, stream, cell)`, so restricting one realization to different
//! (even overlapping) windows always yields consistent configurations, and
//! per-window sampling is order-independent and parallel-safe.

use crate::domain::{LatticePoint, Point, Window, MAX_DIM};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default quantum denominator: `2^20` quanta per unit mass.
pub const DEFAULT_QUANTUM: u64 = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("intensity must be positive, got {0}")]
    BadIntensity(f64),
    #[error("level must have positive numerator and denominator")]
    BadLevel,
    #[error("quantum adjustment overflow for k={k}, level={num}/{den}")]
    QuantumOverflow { k: u32, num: u64, den: u64 },
    #[error("rho must lie in (0,1), got {0}")]
    BadRho(f64),
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("need at least one sample")]
    NoSamples,
}

// ---------------------------------------------------------------------------
// Deterministic per-cell random streams
// ---------------------------------------------------------------------------

/// Stream labels separating independent uses of the same scene seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Target point-process sampling (shared by all target kinds so that a
    /// degenerate compound process reduces bit-exactly to the plain one).
    Target = 1,
    /// Tail-bound Monte Carlo.
    Tail = 2,
    /// Cycle sampling in monotonicity audits.
    Cycles = 3,
    /// Chord sampling in convexity audits.
    Chords = 4,
    /// Ray sampling in starlikeness audits.
    Rays = 5,
    /// Atom jitter in stability probes.
    Jitter = 6,
    /// Brownian displacement in the moving-mosaic experiment.
    Mosaic = 7,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator keyed by `(seed, stream, cell)`.
pub fn stream_rng(seed: u64, stream: Stream, cell: &LatticePoint) -> ChaCha12Rng {
    let mut state = seed;
    let mut absorb = |v: u64| {
        state ^= v.wrapping_mul(0xA076_1D64_78BD_642F);
        splitmix(&mut state);
    };
    absorb(stream as u64);
    absorb(cell.dim() as u64);
    for &c in cell.coords() {
        absorb(c as i64 as u64);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

// ---------------------------------------------------------------------------
// Point configurations
// ---------------------------------------------------------------------------

/// One atom of a weighted point configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub pos: Point,
    /// Weight in quanta (weight = quanta / K).
    pub quanta: u64,
}

/// A finite weighted atom list: the restriction of one point-process
/// realization to a sampling frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    pub atoms: Vec<Atom>,
    /// Quanta per unit mass.
    pub quantum: u64,
    /// Largest absolute weight-quantization error, in mass units.
    pub quantization_error: f64,
}

impl PointConfiguration {
    pub fn empty(quantum: u64) -> Self {
        Self { atoms: Vec::new(), quantum, quantization_error: 0.0 }
    }

    pub fn total_quanta(&self) -> u64 {
        self.atoms.iter().map(|a| a.quanta).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_quanta() as f64 / self.quantum as f64
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms whose containing lattice cell equals `cell`.
    pub fn restrict_to_cells(&self, cells: &[LatticePoint]) -> PointConfiguration {
        let set: std::collections::HashSet<&LatticePoint> = cells.iter().collect();
        PointConfiguration {
            atoms: self
                .atoms
                .iter()
                .filter(|a| set.contains(&a.pos.containing_cell()))
                .copied()
                .collect(),
            quantum: self.quantum,
            quantization_error: self.quantization_error,
        }
    }

    /// Canonical form: zero-weight atoms dropped, coincident atoms merged
    /// with summed weights, sorted by position.
    fn canonicalize(&mut self) {
        self.atoms.retain(|a| a.quanta > 0);
        self.atoms.sort_by(|a, b| {
            a.pos
                .coords()
                .partial_cmp(b.pos.coords())
                .expect("atom positions are finite")
        });
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.pos == a.pos => last.quanta += a.quanta,
                _ => merged.push(a),
            }
        }
        self.atoms = merged;
    }

    /// CSV export with header `x[,y[,z]],weight`.
    pub fn to_csv(&self) -> String {
        let dim = self.atoms.first().map(|a| a.pos.dim()).unwrap_or(1);
        let mut out = String::new();
        let cols = ["x", "y", "z"];
        out.push_str(&cols[..dim].join(","));
        out.push_str(",weight\n");
        for a in &self.atoms {
            for c in a.pos.coords() {
                out.push_str(&format!("{},", c));
            }
            out.push_str(&format!("{}\n", a.quanta as f64 / self.quantum as f64));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Scene specification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightDist {
    /// Exponential with mean 1.
    Exp1,
    /// Poisson with mean 1; zero weights drop the atom.
    Poisson1,
    /// Point mass at 1 (reduces to the plain point process).
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetSpec {
    Poisson { beta: f64 },
    /// Fixed atom count per cell; a conditioning device for mass-balanced
    /// metric experiments.
    Binomial { per_cell: u32 },
    CompoundPoisson { beta: f64, weights: WeightDist },
    /// One unit atom at every cell center (periodic scene).
    LatticeCenters,
    /// Explicit atom list `(position, weight)`.
    Deterministic { atoms: Vec<(Vec<f64>, f64)> },
}

/// Full description of a random scene: a quantized Lebesgue source of the
/// given level and a target point process, reproducible from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub dimension: usize,
    /// Source density level as a fraction `num/den` of unit intensity.
    pub level: (u64, u64),
    pub target: TargetSpec,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(dimension: usize, target: TargetSpec, seed: u64) -> Self {
        Self { dimension, level: (1, 1), target, seed }
    }

    /// Sample (the restriction of) the target realization on a window.
    pub fn sample_target(&self, w: &Window, quantum: u64) -> PointConfiguration {
        sample_target_cells(self, &w.cells(), quantum)
    }
}

/// Sample the target realization restricted to an explicit cell set.
pub fn sample_target_cells(
    spec: &SceneSpec,
    cells: &[LatticePoint],
    quantum: u64,
) -> PointConfiguration {
    let d = spec.dimension;
    let mut cfg = PointConfiguration::empty(quantum);
    match &spec.target {
        TargetSpec::Deterministic { atoms } => {
            let set: std::collections::HashSet<&LatticePoint> = cells.iter().collect();
            for (pos, w) in atoms {
                let p = Point::new(pos).expect("valid atom position");
                if set.contains(&p.containing_cell()) {
                    push_atom(&mut cfg, p, *w, quantum);
                }
            }
        }
        TargetSpec::LatticeCenters => {
            for cell in cells {
                let mut c = [0.0f64; MAX_DIM];
                for (i, &v) in cell.coords().iter().enumerate() {
                    c[i] = v as f64 + 0.5;
                }
                let p = Point::new(&c[..d]).expect("valid center");
                cfg.atoms.push(Atom { pos: p, quanta: quantum });
            }
        }
        TargetSpec::Poisson { beta } => {
            for cell in cells {
                let mut rng = stream_rng(spec.seed, Stream::Target, cell);
                let n = sample_poisson_count(&mut rng, *beta);
                for _ in 0..n {
                    let p = uniform_in_cell(&mut rng, cell, d);
                    cfg.atoms.push(Atom { pos: p, quanta: quantum });
                }
            }
        }
        TargetSpec::Binomial { per_cell } => {
            for cell in cells {
                let mut rng = stream_rng(spec.seed, Stream::Target, cell);
                for _ in 0..*per_cell {
                    let p = uniform_in_cell(&mut rng, cell, d);
                    cfg.atoms.push(Atom { pos: p, quanta: quantum });
                }
            }
        }
        TargetSpec::CompoundPoisson { beta, weights } => {
            for cell in cells {
                let mut rng = stream_rng(spec.seed, Stream::Target, cell);
                let n = sample_poisson_count(&mut rng, *beta);
                for _ in 0..n {
                    let p = uniform_in_cell(&mut rng, cell, d);
                    let w = match weights {
                        WeightDist::Unit => 1.0,
                        WeightDist::Exp1 => Exp1.sample(&mut rng),
                        WeightDist::Poisson1 => sample_poisson_count(&mut rng, 1.0) as f64,
                    };
                    push_atom(&mut cfg, p, w, quantum);
                }
            }
        }
    }
    cfg.canonicalize();
    cfg
}

fn sample_poisson_count(rng: &mut ChaCha12Rng, mean: f64) -> u64 {
    debug_assert!(mean > 0.0);
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn uniform_in_cell(rng: &mut ChaCha12Rng, cell: &LatticePoint, d: usize) -> Point {
    let mut c = [0.0f64; MAX_DIM];
    for (i, &v) in cell.coords().iter().enumerate() {
        c[i] = v as f64 + rng.gen::<f64>();
    }
    Point::new(&c[..d]).expect("valid sampled position")
}

fn push_atom(cfg: &mut PointConfiguration, pos: Point, weight: f64, quantum: u64) {
    let quanta = (weight * quantum as f64).round() as u64;
    let err = (quanta as f64 / quantum as f64 - weight).abs();
    if err > cfg.quantization_error {
        cfg.quantization_error = err;
    }
    if quanta > 0 {
        cfg.atoms.push(Atom { pos, quanta });
    }
}

/// Poisson process of intensity `beta` on the window, unit atom weights.
pub fn sample_poisson(
    w: &Window,
    beta: f64,
    seed: u64,
    quantum: u64,
) -> Result<PointConfiguration, MeasureError> {
    if !(beta > 0.0) {
        return Err(MeasureError::BadIntensity(beta));
    }
    let spec = SceneSpec::new(w.dim(), TargetSpec::Poisson { beta }, seed);
    Ok(spec.sample_target(w, quantum))
}

/// Compound Poisson process: Poisson(`beta`) atom locations with i.i.d.
/// weights from `weights`.
pub fn sample_compound_poisson(
    w: &Window,
    beta: f64,
    weights: WeightDist,
    seed: u64,
    quantum: u64,
) -> Result<PointConfiguration, MeasureError> {
    if !(beta > 0.0) {
        return Err(MeasureError::BadIntensity(beta));
    }
    let spec = SceneSpec::new(w.dim(), TargetSpec::CompoundPoisson { beta, weights }, seed);
    Ok(spec.sample_target(w, quantum))
}

/// Fixed-count sampler: exactly `per_cell` unit atoms per cell.
pub fn sample_binomial(w: &Window, per_cell: u32, seed: u64, quantum: u64) -> PointConfiguration {
    let spec = SceneSpec::new(w.dim(), TargetSpec::Binomial { per_cell }, seed);
    spec.sample_target(w, quantum)
}

// ---------------------------------------------------------------------------
// Quantized Lebesgue measure
// ---------------------------------------------------------------------------

/// Regular grid frame: integer lower corner (cell units), cells per axis
/// and resolution `k` (grid cells per unit length). The last axis varies
/// fastest, matching lexicographic cell order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub lower: [i64; MAX_DIM],
    pub cells_per_axis: [u32; MAX_DIM],
    pub resolution: u32,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.cells_per_axis[..self.dim].iter().map(|&n| n as usize).product()
    }

    pub fn cell_volume(&self) -> f64 {
        (self.resolution as f64).powi(-(self.dim as i32))
    }

    pub fn cell_coords(&self, idx: usize) -> [u32; MAX_DIM] {
        let mut rem = idx;
        let mut out = [0u32; MAX_DIM];
        for axis in (0..self.dim).rev() {
            let n = self.cells_per_axis[axis] as usize;
            out[axis] = (rem % n) as u32;
            rem /= n;
        }
        out
    }

    pub fn index_of(&self, coords: &[u32]) -> usize {
        let mut idx = 0usize;
        for axis in 0..self.dim {
            idx = idx * self.cells_per_axis[axis] as usize + coords[axis] as usize;
        }
        idx
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let coords = self.cell_coords(idx);
        let k = self.resolution as f64;
        let mut c = [0.0f64; MAX_DIM];
        for axis in 0..self.dim {
            c[axis] = self.lower[axis] as f64 + (coords[axis] as f64 + 0.5) / k;
        }
        Point::new(&c[..self.dim]).expect("valid center")
    }

    /// Grid cell containing the point, if inside the frame.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let k = self.resolution as f64;
        let mut coords = [0u32; MAX_DIM];
        for axis in 0..self.dim {
            let rel = (p.coords()[axis] - self.lower[axis] as f64) * k;
            let c = rel.floor();
            if c < 0.0 || c >= self.cells_per_axis[axis] as f64 {
                return None;
            }
            coords[axis] = c as u32;
        }
        Some(self.index_of(&coords[..self.dim]))
    }

    /// Cell indices in the outermost ring of thickness `thickness` grid
    /// cells.
    pub fn shell_indices(&self, thickness: u32) -> Vec<usize> {
        (0..self.n_cells())
            .filter(|&i| {
                let c = self.cell_coords(i);
                (0..self.dim).any(|a| {
                    c[a] < thickness || c[a] + thickness >= self.cells_per_axis[a]
                })
            })
            .collect()
    }
}

/// Piecewise-constant density on a regular grid with quantized cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    pub grid: Grid,
    /// Per-cell masses in quanta, row-major (last axis fastest).
    pub masses: Vec<u64>,
    /// Quanta per unit mass (possibly adjusted upward from the request).
    pub quantum: u64,
}

impl DiscreteDensity {
    pub fn total_quanta(&self) -> u64 {
        self.masses.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_quanta() as f64 / self.quantum as f64
    }
}

/// Smallest `K >= requested` such that `level * K / k^d` is an integer.
pub fn adjust_quantum(
    requested: u64,
    k: u32,
    dim: usize,
    level: (u64, u64),
) -> Result<u64, MeasureError> {
    let (num, den) = level;
    if num == 0 || den == 0 {
        return Err(MeasureError::BadLevel);
    }
    let cells: u64 = (k as u64)
        .checked_pow(dim as u32)
        .ok_or(MeasureError::QuantumOverflow { k, num, den })?;
    let denom = den
        .checked_mul(cells)
        .ok_or(MeasureError::QuantumOverflow { k, num, den })?;
    let step = denom / gcd(num, denom);
    let k_adj = requested.div_ceil(step) * step;
    if k_adj == 0 {
        return Err(MeasureError::QuantumOverflow { k, num, den });
    }
    Ok(k_adj)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Quantized restriction of `level * Lebesgue` to a grid box.
///
/// Every cell carries the identical mass `level / k^d`, exact in quanta;
/// the quantum is adjusted upward from `requested_quantum` when needed to
/// make that mass an integer number of quanta.
pub fn discretize_lebesgue(
    lower: &[i64],
    cells_per_axis: &[u32],
    resolution: u32,
    level: (u64, u64),
    requested_quantum: u64,
) -> Result<DiscreteDensity, MeasureError> {
    let dim = lower.len();
    assert!(dim >= 1 && dim <= MAX_DIM && cells_per_axis.len() == dim);
    let quantum = adjust_quantum(requested_quantum, resolution, dim, level)?;
    let per_cell = level.0 * (quantum / (level.1 * (resolution as u64).pow(dim as u32)));
    let mut grid = Grid {
        dim,
        lower: [0; MAX_DIM],
        cells_per_axis: [1; MAX_DIM],
        resolution,
    };
    grid.lower[..dim].copy_from_slice(lower);
    grid.cells_per_axis[..dim].copy_from_slice(cells_per_axis);
    let n = grid.n_cells();
    Ok(DiscreteDensity { grid, masses: vec![per_cell; n], quantum })
}

/// Discretize the Lebesgue source of a scene over a window dilated by
/// `margin` fundamental cells on every side.
pub fn discretize_window(
    spec: &SceneSpec,
    w: &Window,
    margin: u32,
    resolution: u32,
    requested_quantum: u64,
) -> Result<DiscreteDensity, MeasureError> {
    let d = w.dim();
    let reach = w.reach() + margin as i64;
    let lower: Vec<i64> = w.origin.coords().iter().map(|&c| c as i64 - reach).collect();
    let side_units = (2 * reach + 1) as u64;
    let cells = vec![(side_units * resolution as u64) as u32; d];
    discretize_lebesgue(&lower, &cells, resolution, spec.level, requested_quantum)
}

// ---------------------------------------------------------------------------
// Compound-Poisson concentration
// ---------------------------------------------------------------------------

/// The two exponential tail bounds for `Z = sum of N exp(1) weights`,
/// `N ~ Poisson(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    /// `2 exp(-alpha (2 + rho - 2 sqrt(1+rho)))`.
    pub tight: f64,
    /// `2 exp(-alpha (rho^2/4 - rho^3/8))`.
    pub weak: f64,
}

/// Tail bound for `P[|Z - alpha| > alpha rho]`.
pub fn compound_tail_bound(alpha: f64, rho: f64) -> Result<TailBound, MeasureError> {
    if !(alpha > 0.0) {
        return Err(MeasureError::BadAlpha(alpha));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MeasureError::BadRho(rho));
    }
    let tight = 2.0 * (-alpha * (2.0 + rho - 2.0 * (1.0 + rho).sqrt())).exp();
    let weak = 2.0 * (-alpha * (rho * rho / 4.0 - rho * rho * rho / 8.0)).exp();
    Ok(TailBound { tight, weak })
}

/// Monte Carlo frequency of `|Z - alpha| > alpha rho` over `n_samples`
/// independent compound-Poisson draws.
pub fn empirical_tail(
    alpha: f64,
    rho: f64,
    n_samples: u64,
    seed: u64,
) -> Result<f64, MeasureError> {
    if !(alpha > 0.0) {
        return Err(MeasureError::BadAlpha(alpha));
    }
    if n_samples == 0 {
        return Err(MeasureError::NoSamples);
    }
    let mut rng = stream_rng(seed, Stream::Tail, &LatticePoint::origin(1));
    let pois = Poisson::new(alpha).expect("positive alpha");
    let mut hits = 0u64;
    for _ in 0..n_samples {
        let n = pois.sample(&mut rng) as u64;
        let mut z = 0.0f64;
        for _ in 0..n {
            let x: f64 = Exp1.sample(&mut rng);
            z += x;
        }
        if (z - alpha).abs() > alpha * rho {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Window;

    const K: u64 = DEFAULT_QUANTUM;

    fn window(d: usize, r: u32) -> Window {
        Window::new(LatticePoint::origin(d), r)
    }

    #[test]
    fn poisson_mean_count_matches() {
        // d=2, r=1 window would have 25 cells; use a 16-cell frame instead:
        // 4x4 cells via a deterministic cell list.
        let spec = SceneSpec::new(2, TargetSpec::Poisson { beta: 1.0 }, 0);
        let cells: Vec<LatticePoint> = (0..4)
            .flat_map(|i| (0..4).map(move |j| LatticePoint::new(&[i, j]).unwrap()))
            .collect();
        let n_seeds = 1000;
        let mut total = 0u64;
        for seed in 0..n_seeds {
            let spec = SceneSpec { seed, ..spec.clone() };
            total += sample_target_cells(&spec, &cells, K).len() as u64;
        }
        let mean = total as f64 / n_seeds as f64;
        // 3-sigma band around 16 with sigma = 4/sqrt(1000)
        assert!((mean - 16.0).abs() < 0.38, "mean count {mean}");
    }

    #[test]
    fn poisson_tiny_intensity_mostly_empty() {
        let w = window(1, 0);
        let mut empty = 0;
        for seed in 0..100 {
            let cfg = sample_poisson(&w, 1e-9, seed, K).unwrap();
            if cfg.is_empty() {
                empty += 1;
            }
        }
        assert!(empty >= 99, "{empty} empty of 100");
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = window(2, 1);
        let a = sample_poisson(&w, 0.7, 12345, K).unwrap();
        let b = sample_poisson(&w, 0.7, 12345, K).unwrap();
        assert_eq!(a, b);
        let c = sample_poisson(&w, 0.7, 12346, K).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_is_window_consistent() {
        // The restriction of a big-window sample to a subwindow equals the
        // subwindow sample: one realization, not one draw per window.
        let big = window(2, 2);
        let small = window(2, 0);
        let spec = SceneSpec::new(2, TargetSpec::Poisson { beta: 1.3 }, 99);
        let from_big = spec.sample_target(&big, K).restrict_to_cells(&small.cells());
        let direct = spec.sample_target(&small, K);
        assert_eq!(from_big, direct);
    }

    #[test]
    fn compound_exp_mean_total_mass() {
        let spec = SceneSpec::new(
            2,
            TargetSpec::CompoundPoisson { beta: 1.0, weights: WeightDist::Exp1 },
            0,
        );
        let cells: Vec<LatticePoint> = (0..4)
            .flat_map(|i| (0..4).map(move |j| LatticePoint::new(&[i, j]).unwrap()))
            .collect();
        let n_seeds = 1000;
        let mut total = 0.0;
        for seed in 0..n_seeds {
            let spec = SceneSpec { seed, ..spec.clone() };
            total += sample_target_cells(&spec, &cells, K).total_mass();
        }
        let mean = total / n_seeds as f64;
        // Var(Z) = 2*alpha = 32 per seed; 3 sigma of the mean = 0.537
        assert!((mean - 16.0).abs() < 0.537, "mean mass {mean}");
    }

    #[test]
    fn compound_unit_weight_reduces_to_poisson() {
        let w = window(2, 1);
        let plain = sample_poisson(&w, 0.9, 7, K).unwrap();
        let degenerate = sample_compound_poisson(&w, 0.9, WeightDist::Unit, 7, K).unwrap();
        assert_eq!(plain, degenerate);
    }

    #[test]
    fn compound_poisson1_drops_zero_weights() {
        let w = window(2, 2);
        let cfg = sample_compound_poisson(&w, 2.0, WeightDist::Poisson1, 3, K).unwrap();
        assert!(cfg.atoms.iter().all(|a| a.quanta > 0));
        assert!(cfg.atoms.iter().all(|a| a.quanta % K == 0), "integer weights");
    }

    #[test]
    fn disjoint_window_counts_uncorrelated() {
        let a_cells = [LatticePoint::new(&[0]).unwrap()];
        let b_cells = [LatticePoint::new(&[10]).unwrap()];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for seed in 0..1000u64 {
            let spec = SceneSpec::new(1, TargetSpec::Poisson { beta: 1.0 }, seed);
            xs.push(sample_target_cells(&spec, &a_cells, K).len() as f64);
            ys.push(sample_target_cells(&spec, &b_cells, K).len() as f64);
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr.abs() < 0.1, "correlation {corr}");
    }

    #[test]
    fn discretize_unit_interval_k4() {
        let dd = discretize_lebesgue(&[0], &[4], 4, (1, 1), 4).unwrap();
        assert_eq!(dd.masses, vec![1; 4]); // four cells of mass 1/4
        assert_eq!(dd.quantum, 4);
        assert_eq!(dd.total_mass(), 1.0);
    }

    #[test]
    fn discretize_two_by_two_box() {
        // box [0,2)^2 at k=2: 16 cells of mass 1/4, total 4
        let dd = discretize_lebesgue(&[0, 0], &[4, 4], 2, (1, 1), 4).unwrap();
        assert_eq!(dd.masses.len(), 16);
        assert!(dd.masses.iter().all(|&m| m == dd.quantum / 4));
        assert_eq!(dd.total_mass(), 4.0);
    }

    #[test]
    fn discretize_half_level() {
        // level 1/2 on [0,1), k=2, K=4: two cells of mass 1/4, total 1/2
        let dd = discretize_lebesgue(&[0], &[2], 2, (1, 2), 4).unwrap();
        assert_eq!(dd.masses, vec![1, 1]);
        assert_eq!(dd.quantum, 4);
        assert_eq!(dd.total_mass(), 0.5);
    }

    #[test]
    fn quantum_adjusts_to_representable() {
        // K=2^20 is not divisible by 192; the next multiple of 192 is.
        let k = adjust_quantum(1 << 20, 192, 1, (1, 1)).unwrap();
        assert_eq!(k, 192 * 5462);
        assert_eq!(k % 192, 0);
        // already-representable requests pass through unchanged
        assert_eq!(adjust_quantum(1 << 20, 16, 2, (1, 1)).unwrap(), 1 << 20);
    }

    #[test]
    fn mass_is_exact_in_quanta() {
        let dd = discretize_lebesgue(&[0], &[192], 192, (1, 1), 1 << 20).unwrap();
        assert_eq!(dd.total_quanta(), dd.quantum); // exactly one unit of mass
        assert_eq!(dd.total_quanta() % 3, 0); // representable thirds
    }

    #[test]
    fn tail_bound_values() {
        let b = compound_tail_bound(100.0, 0.5).unwrap();
        assert!((b.tight - 0.0128055252489309).abs() < 1e-12, "tight {}", b.tight);
        // exponent arguments: tight 0.050510257... >= weak 0.046875
        assert!((b.weak - 0.0184193632079363).abs() < 1e-12, "weak {}", b.weak);
        assert!(b.tight <= b.weak);
    }

    #[test]
    fn tail_bound_vacuous_as_rho_vanishes() {
        let b = compound_tail_bound(5.0, 1e-9).unwrap();
        assert!((b.tight - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tail_bound_rejects_bad_rho() {
        assert!(compound_tail_bound(1.0, 0.0).is_err());
        assert!(compound_tail_bound(1.0, 1.0).is_err());
        assert!(compound_tail_bound(0.0, 0.5).is_err());
    }

    #[test]
    fn tail_bound_monotone_in_alpha_and_rho() {
        let alphas: Vec<f64> = (1..=20).map(|i| i as f64 * 10.0).collect();
        let rhos: Vec<f64> = (1..=20).map(|i| i as f64 * 0.045).collect();
        for &r in &rhos {
            let mut prev = f64::INFINITY;
            for &a in &alphas {
                let b = compound_tail_bound(a, r).unwrap().tight;
                assert!(b <= prev + 1e-15);
                prev = b;
            }
        }
        for &a in &alphas {
            let mut prev = f64::INFINITY;
            for &r in &rhos {
                let b = compound_tail_bound(a, r).unwrap().tight;
                assert!(b <= prev + 1e-15);
                prev = b;
            }
        }
    }

    #[test]
    fn empirical_tail_deterministic_and_bounded() {
        let f1 = empirical_tail(20.0, 0.5, 2000, 11).unwrap();
        let f2 = empirical_tail(20.0, 0.5, 2000, 11).unwrap();
        assert_eq!(f1, f2);
        assert!((0.0..=1.0).contains(&f1));
        let wide = empirical_tail(20.0, 0.999, 2000, 11).unwrap();
        assert!(wide <= 1.0);
    }

    #[test]
    fn empirical_below_bound_small_grid() {
        for &(a, r) in &[(10.0, 0.5), (50.0, 0.5), (100.0, 0.8)] {
            let bound = compound_tail_bound(a, r).unwrap().tight;
            let n = 20_000u64;
            let freq = empirical_tail(a, r, n, 5).unwrap();
            let slack = 3.0 * (bound / n as f64).sqrt();
            assert!(freq <= bound + slack, "a={a} r={r}: {freq} vs {bound}+{slack}");
        }
    }

    #[test]
    fn csv_export_shape() {
        let w = window(2, 0);
        let cfg = sample_binomial(&w, 1, 4, K);
        let csv = cfg.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x,y,weight");
        assert_eq!(csv.lines().count(), 1 + cfg.len());
    }
}
