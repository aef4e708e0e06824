//! Lattice group action of `Z^d` on `R^d`, cube windows and
//! translation-invariant cost evaluation.
//!
//! The group is `Z^d` acting by translation, the fundamental cell is
//! `[0,1)^d`, and windows are `l-infinity` balls of radius `2^r` in the
//! lattice (cubes of side `2^(r+1)+1` cells). Cubes tile space exactly,
//! which keeps superadditivity and window-growth checks free of boundary
//! slop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("dimension {0} out of range (supported: 1..=3)")]
    BadDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cost exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("torus side must be positive, got {0}")]
    BadTorusSide(f64),
    #[error("scale table must be strictly increasing with theta(0)=0")]
    BadScaleTable,
}

/// A point of the acting lattice `Z^d`.
///
/// Coordinates are in fundamental-cell units (cell side = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl LatticePoint {
    pub fn new(coords: &[i32]) -> Result<Self, DomainError> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(DomainError::BadDimension(coords.len()));
        }
        let mut c = [0i32; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { dim: coords.len() as u8, coords: c })
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&vec![0; dim]).expect("valid dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim, other.dim);
        let mut c = self.coords;
        for i in 0..self.dim() {
            c[i] += other.coords[i];
        }
        Self { dim: self.dim, coords: c }
    }

    pub fn neg(&self) -> LatticePoint {
        let mut c = self.coords;
        for v in c.iter_mut().take(self.dim()) {
            *v = -*v;
        }
        Self { dim: self.dim, coords: c }
    }

    /// `l-infinity` distance in the lattice (word metric of the cube
    /// generating set).
    pub fn linf_dist(&self, other: &LatticePoint) -> u32 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// The point of `R^d` this lattice element translates the origin to.
    pub fn to_point(&self) -> Point {
        let mut c = [0.0f64; MAX_DIM];
        for i in 0..self.dim() {
            c[i] = self.coords[i] as f64;
        }
        Point { dim: self.dim, coords: c }
    }
}

/// A point of `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    dim: u8,
    coords: [f64; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self, DomainError> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(DomainError::BadDimension(coords.len()));
        }
        let mut c = [0.0f64; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { dim: coords.len() as u8, coords: c })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn add(&self, g: &LatticePoint) -> Point {
        debug_assert_eq!(self.dim(), g.dim());
        let mut c = self.coords;
        for i in 0..self.dim() {
            c[i] += g.coords()[i] as f64;
        }
        Self { dim: self.dim, coords: c }
    }

    /// The lattice cell `[g, g+1)^d` containing this point.
    pub fn containing_cell(&self) -> LatticePoint {
        let mut c = [0i32; MAX_DIM];
        for i in 0..self.dim() {
            c[i] = self.coords[i].floor() as i32;
        }
        LatticePoint { dim: self.dim, coords: c }
    }
}

/// Cube window `Lambda_r` around `origin`: all lattice points within
/// `l-infinity` distance `2^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub origin: LatticePoint,
    pub radius: u32,
}

impl Window {
    pub fn new(origin: LatticePoint, radius: u32) -> Self {
        Self { origin, radius }
    }

    pub fn dim(&self) -> usize {
        self.origin.dim()
    }

    /// Half side length `2^r` in cells.
    pub fn reach(&self) -> i64 {
        1i64 << self.radius
    }

    /// Number of lattice cells, `(2^(r+1)+1)^d`.
    pub fn cell_count(&self) -> u64 {
        let side = (2 * self.reach() + 1) as u64;
        side.pow(self.dim() as u32)
    }

    /// Volume of the covered region `B_r` (cells have unit volume).
    pub fn volume(&self) -> f64 {
        self.cell_count() as f64
    }

    /// Side length in cells.
    pub fn side(&self) -> u64 {
        (2 * self.reach() + 1) as u64
    }

    /// All member cells, sorted lexicographically by coordinates.
    pub fn cells(&self) -> Vec<LatticePoint> {
        let reach = self.reach() as i32;
        let d = self.dim();
        let o = self.origin.coords();
        let side = 2 * reach + 1;
        let mut out = Vec::with_capacity(self.cell_count() as usize);
        let mut idx = vec![0i32; d];
        loop {
            let mut c = [0i32; MAX_DIM];
            for i in 0..d {
                c[i] = o[i] - reach + idx[i];
            }
            out.push(LatticePoint { dim: d as u8, coords: c });
            // odometer over the last axis fastest keeps lexicographic order
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < side {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    pub fn contains_cell(&self, g: &LatticePoint) -> bool {
        self.origin.linf_dist(g) as i64 <= self.reach()
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.contains_cell(&p.containing_cell())
    }

    /// Lower corner of the covered region `B_r` in `R^d`.
    pub fn lower_corner(&self) -> Vec<f64> {
        self.origin
            .coords()
            .iter()
            .map(|&c| (c as i64 - self.reach()) as f64)
            .collect()
    }
}

/// All lattice cells of a window, sorted lexicographically.
pub fn window_cells(w: &Window) -> Vec<LatticePoint> {
    w.cells()
}

/// Metric on the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Euclidean,
    /// Flat torus: every axis wraps with the given side length.
    Torus { side: f64 },
}

impl Geometry {
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        debug_assert_eq!(x.dim(), y.dim());
        let mut s = 0.0;
        for i in 0..x.dim() {
            let mut delta = (x.coords()[i] - y.coords()[i]).abs();
            if let Geometry::Torus { side } = self {
                if delta > side / 2.0 {
                    delta = side - delta;
                }
            }
            s += delta * delta;
        }
        s.sqrt()
    }
}

/// Translation-invariant cost `c(x,y) = theta(d(x,y))`.
///
/// The scale function is `theta(r) = r^p` by default; non-power scales are
/// supported through a strictly increasing sample table with linear
/// interpolation between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub geometry: Geometry,
    pub exponent: f64,
    /// Optional `(r, theta(r))` knots; must start at `(0,0)` and be strictly
    /// increasing in both components. Values beyond the last knot
    /// extrapolate linearly along the final segment.
    pub scale_table: Option<Vec<(f64, f64)>>,
}

impl CostSpec {
    pub fn power(geometry: Geometry, exponent: f64) -> Result<Self, DomainError> {
        if !(exponent > 0.0) {
            return Err(DomainError::BadExponent(exponent));
        }
        if let Geometry::Torus { side } = geometry {
            if !(side > 0.0) {
                return Err(DomainError::BadTorusSide(side));
            }
        }
        Ok(Self { geometry, exponent, scale_table: None })
    }

    pub fn euclidean(exponent: f64) -> Result<Self, DomainError> {
        Self::power(Geometry::Euclidean, exponent)
    }

    pub fn torus(side: f64, exponent: f64) -> Result<Self, DomainError> {
        Self::power(Geometry::Torus { side }, exponent)
    }

    pub fn with_table(mut self, table: Vec<(f64, f64)>) -> Result<Self, DomainError> {
        if table.len() < 2 || table[0] != (0.0, 0.0) {
            return Err(DomainError::BadScaleTable);
        }
        for w in table.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(DomainError::BadScaleTable);
            }
        }
        self.scale_table = Some(table);
        Ok(self)
    }

    /// Scale function `theta`.
    pub fn theta(&self, r: f64) -> f64 {
        match &self.scale_table {
            None => r.powf(self.exponent),
            Some(table) => {
                let last = table.len() - 1;
                let seg = match table.iter().position(|&(x, _)| x >= r) {
                    Some(0) => return 0.0,
                    Some(i) => i - 1,
                    None => last - 1,
                };
                let (x0, y0) = table[seg];
                let (x1, y1) = table[seg + 1];
                y0 + (r - x0) / (x1 - x0) * (y1 - y0)
            }
        }
    }

    /// `c(x,y) = theta(d(x,y))`.
    pub fn cost(&self, x: &Point, y: &Point) -> Result<f64, DomainError> {
        if x.dim() != y.dim() {
            return Err(DomainError::DimensionMismatch(x.dim(), y.dim()));
        }
        Ok(self.theta(self.geometry.distance(x, y)))
    }

    /// The d=1, linear-cost case has a continuum of optimal plans; callers
    /// that audit uniqueness check this flag first.
    pub fn nonunique_possible(&self, dim: usize) -> bool {
        dim == 1 && self.scale_table.is_none() && (self.exponent - 1.0).abs() < 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn window_r0_d1_is_three_cells() {
        let w = Window::new(LatticePoint::origin(1), 0);
        let cells = window_cells(&w);
        assert_eq!(cells.len(), 3);
        let got: Vec<i32> = cells.iter().map(|c| c.coords()[0]).collect();
        assert_eq!(got, vec![-1, 0, 1]);
    }

    #[test]
    fn window_r1_d2_is_25_cells() {
        let w = Window::new(LatticePoint::origin(2), 1);
        let cells = window_cells(&w);
        assert_eq!(cells.len(), 25);
        assert_eq!(w.cell_count(), 25);
        // lexicographic order
        let mut sorted = cells.clone();
        sorted.sort();
        assert_eq!(cells, sorted);
    }

    #[test]
    fn window_translated_r0_d1() {
        let w = Window::new(LatticePoint::new(&[3]).unwrap(), 0);
        let got: Vec<i32> = window_cells(&w).iter().map(|c| c.coords()[0]).collect();
        assert_eq!(got, vec![2, 3, 4]);
    }

    #[test]
    fn cost_euclidean_p2() {
        let spec = CostSpec::euclidean(2.0).unwrap();
        let c = spec.cost(&pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap();
        assert_eq!(c, 25.0);
    }

    #[test]
    fn cost_torus_wraparound() {
        let spec = CostSpec::torus(8.0, 1.0).unwrap();
        let c = spec.cost(&pt(&[0.5]), &pt(&[7.5])).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn cost_zero_iff_equal() {
        let spec = CostSpec::euclidean(2.0).unwrap();
        let x = pt(&[1.25, -3.5]);
        assert_eq!(spec.cost(&x, &x).unwrap(), 0.0);
        assert!(spec.cost(&x, &pt(&[1.25, -3.4])).unwrap() > 0.0);
    }

    #[test]
    fn cost_dimension_mismatch() {
        let spec = CostSpec::euclidean(2.0).unwrap();
        assert_eq!(
            spec.cost(&pt(&[0.0]), &pt(&[0.0, 0.0])).unwrap_err(),
            DomainError::DimensionMismatch(1, 2)
        );
    }

    #[test]
    fn scale_table_interpolates() {
        let spec = CostSpec::euclidean(1.0)
            .unwrap()
            .with_table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 6.0)])
            .unwrap();
        assert_eq!(spec.theta(0.5), 1.0);
        assert_eq!(spec.theta(1.5), 4.0);
        assert_eq!(spec.theta(3.0), 10.0); // linear extrapolation
    }

    #[test]
    fn scale_table_must_be_monotone() {
        let bad = CostSpec::euclidean(1.0)
            .unwrap()
            .with_table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]);
        assert!(bad.is_err());
    }

    #[test]
    fn rejects_nonpositive_exponent() {
        assert!(CostSpec::euclidean(0.0).is_err());
        assert!(CostSpec::euclidean(-1.0).is_err());
    }

    #[test]
    fn nonunique_flag_only_for_d1_linear() {
        let p1 = CostSpec::euclidean(1.0).unwrap();
        assert!(p1.nonunique_possible(1));
        assert!(!p1.nonunique_possible(2));
        assert!(!CostSpec::euclidean(2.0).unwrap().nonunique_possible(1));
    }

    proptest! {
        #[test]
        fn window_cardinality_formula(r in 0u32..3, d in 1usize..=3, o in -5i32..5) {
            let origin = LatticePoint::new(&vec![o; d]).unwrap();
            let w = Window::new(origin, r);
            let expected = ((1u64 << (r + 1)) + 1).pow(d as u32);
            prop_assert_eq!(w.cells().len() as u64, expected);
            prop_assert_eq!(w.cell_count(), expected);
        }

        #[test]
        fn cost_symmetry_exact(
            x0 in -10.0f64..10.0, x1 in -10.0f64..10.0,
            y0 in -10.0f64..10.0, y1 in -10.0f64..10.0,
            p in prop::sample::select(vec![1.0f64, 2.0, 4.0]),
        ) {
            let spec = CostSpec::euclidean(p).unwrap();
            let x = Point::new(&[x0, x1]).unwrap();
            let y = Point::new(&[y0, y1]).unwrap();
            prop_assert_eq!(spec.cost(&x, &y).unwrap(), spec.cost(&y, &x).unwrap());
        }

        #[test]
        fn cost_strictly_increasing_along_rays(
            t in prop::collection::vec(0.01f64..5.0, 2..6),
            p in prop::sample::select(vec![1.0f64, 2.0, 3.0]),
        ) {
            let spec = CostSpec::euclidean(p).unwrap();
            let x = Point::new(&[0.0, 0.0]).unwrap();
            let u = [0.6, 0.8]; // unit direction
            let mut ts = t;
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup();
            let costs: Vec<f64> = ts
                .iter()
                .map(|&t| spec.cost(&x, &Point::new(&[t * u[0], t * u[1]]).unwrap()).unwrap())
                .collect();
            for w in costs.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        #[test]
        fn lattice_add_neg_roundtrip(a in -50i32..50, b in -50i32..50, c in -50i32..50) {
            let g = LatticePoint::new(&[a, b, c]).unwrap();
            let h = LatticePoint::new(&[c, a, b]).unwrap();
            prop_assert_eq!(g.add(&h).add(&h.neg()), g);
        }
    }
}
