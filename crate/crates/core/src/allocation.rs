//! Allocation cells extracted from transport plans, geometric audits and
//! SVG rendering.
//!
//! Cells are rasterized sets of source grid cells, not exact polytopes, so
//! the convexity and starlikeness audits are statistical with one grid cell
//! of slack. Fractional (split) cells are reported separately and excluded
//! from sampling; a spanning-forest plan has at most `#atoms - 1` of them
//! from multi-target splits plus at most one partially-used cell per
//! support tree.

use crate::domain::{Geometry, LatticePoint, Point, MAX_DIM};
use crate::randmeas::{stream_rng, Grid, Stream};
use crate::solver::TransportPlan;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("plan carries no source grid; cells need a rasterization frame")]
    NoGrid,
    #[error("cell map has no member cells to sample")]
    EmptyCells,
    #[error("operation requires dimension {need}, got {got}")]
    WrongDimension { need: usize, got: usize },
}

/// A grid cell whose mass is divided among several destinations (or partly
/// kept in place). `part = None` is untransported mass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCell {
    pub cell: u32,
    pub parts: Vec<(Option<u32>, u64)>,
}

/// Per-atom allocation cells over a rasterization grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub grid: Grid,
    /// Raw atom positions and weights in quanta; see [`CellMap::atom_pos`].
    pub atoms: Vec<(Point, u64)>,
    /// Per atom: indices of grid cells transported wholly to that atom.
    pub members: Vec<Vec<u32>>,
    pub split: Vec<SplitCell>,
    /// Received quanta per atom (cell volume in quanta).
    pub volumes: Vec<u64>,
    pub quantum: u64,
    /// Lattice translation applied to the whole map.
    pub offset: LatticePoint,
}

impl CellMap {
    pub fn atom_pos(&self, j: usize) -> Point {
        self.atoms[j].0.add(&self.offset)
    }

    pub fn translate(&self, g: &LatticePoint) -> CellMap {
        CellMap { offset: self.offset.add(g), ..self.clone() }
    }

    /// Total allocated volume in quanta.
    pub fn total_volume(&self) -> u64 {
        self.volumes.iter().sum()
    }

    /// CSV listing `tgt_id,cell_count,volume_quanta,split_flag`.
    pub fn to_csv(&self) -> String {
        let mut touched = vec![false; self.atoms.len()];
        for s in &self.split {
            for &(atom, _) in &s.parts {
                if let Some(a) = atom {
                    touched[a as usize] = true;
                }
            }
        }
        let mut out = String::from("tgt_id,cell_count,volume_quanta,split_flag\n");
        for j in 0..self.atoms.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                j,
                self.members[j].len(),
                self.volumes[j],
                u8::from(touched[j])
            ));
        }
        out
    }
}

/// Group a plan's entries into per-atom cells.
///
/// A grid cell belongs to atom `j` when its entire supply is transported to
/// `j`; cells feeding several atoms or transported only in part are split
/// cells. Cell volumes equal transported mass, exactly in quanta.
pub fn extract_cells(plan: &TransportPlan) -> Result<CellMap, AllocError> {
    let grid = plan.source_grid.ok_or(AllocError::NoGrid)?;
    let n_atoms = plan.targets.len();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_atoms];
    let mut split = Vec::new();
    let mut volumes = vec![0u64; n_atoms];
    // entries are sorted by (source, target): walk runs per source cell
    let mut idx = 0usize;
    while idx < plan.entries.len() {
        let cell = plan.entries[idx].source;
        let mut end = idx;
        let mut used = 0u64;
        while end < plan.entries.len() && plan.entries[end].source == cell {
            volumes[plan.entries[end].target as usize] += plan.entries[end].mass;
            used += plan.entries[end].mass;
            end += 1;
        }
        let supply = plan.sources[cell as usize].1;
        if end == idx + 1 && used == supply {
            members[plan.entries[idx].target as usize].push(cell);
        } else {
            let mut parts: Vec<(Option<u32>, u64)> = plan.entries[idx..end]
                .iter()
                .map(|e| (Some(e.target), e.mass))
                .collect();
            if used < supply {
                parts.push((None, supply - used));
            }
            split.push(SplitCell { cell, parts });
        }
        idx = end;
    }
    Ok(CellMap {
        grid,
        atoms: plan.targets.clone(),
        members,
        split,
        volumes,
        quantum: plan.quantum,
        offset: plan.offset,
    })
}

/// Outcome of a sampled geometric audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GeometryReport {
    pub checked: u64,
    pub violations: u64,
    /// Cells skipped because they wrap more than half way around a torus.
    pub flagged_wraparound: u64,
}

fn member_lookup(cells: &CellMap) -> Vec<i32> {
    // cell index -> owning atom, -1 for split/unassigned
    let mut owner = vec![-1i32; cells.grid.n_cells()];
    for (j, m) in cells.members.iter().enumerate() {
        for &c in m {
            owner[c as usize] = j as i32;
        }
    }
    owner
}

/// `(atom, cell)` pairs for split cells carrying mass of that atom: the
/// rasterized boundary band. Membership tests count them; sampling skips
/// them.
fn split_lookup(cells: &CellMap) -> std::collections::HashSet<(u32, u32)> {
    let mut set = std::collections::HashSet::new();
    for s in &cells.split {
        for &(atom, _) in &s.parts {
            if let Some(a) = atom {
                set.insert((a, s.cell));
            }
        }
    }
    set
}

/// Is the grid cell containing `p` (or any l-infinity neighbor, the
/// one-cell slack) owned by atom `j`, wholly or as a split part?
fn near_member(
    grid: &Grid,
    owner: &[i32],
    split: &std::collections::HashSet<(u32, u32)>,
    p: &Point,
    j: usize,
) -> bool {
    let Some(idx) = grid.locate(p) else { return false };
    let base = grid.cell_coords(idx);
    let d = grid.dim;
    let mut deltas = vec![-1i64; d];
    loop {
        let mut coords = [0u32; MAX_DIM];
        let mut ok = true;
        for a in 0..d {
            let c = base[a] as i64 + deltas[a];
            if c < 0 || c >= grid.cells_per_axis[a] as i64 {
                ok = false;
                break;
            }
            coords[a] = c as u32;
        }
        if ok {
            let cell = grid.index_of(&coords[..d]);
            if owner[cell] == j as i32 || split.contains(&(j as u32, cell as u32)) {
                return true;
            }
        }
        // odometer over {-1,0,1}^d
        let mut axis = 0;
        loop {
            if axis == d {
                return false;
            }
            deltas[axis] += 1;
            if deltas[axis] <= 1 {
                break;
            }
            deltas[axis] = -1;
            axis += 1;
        }
    }
}

/// Chord-sampling convexity audit: midpoints of random member-cell pairs
/// must stay in the cell up to one grid cell of slack. Intended for
/// quadratic cost in Euclidean geometry, where cells are convex polytopes.
pub fn convexity_audit(
    cells: &CellMap,
    n_chords: u64,
    seed: u64,
) -> Result<GeometryReport, AllocError> {
    if cells.members.iter().all(|m| m.is_empty()) {
        return Err(AllocError::EmptyCells);
    }
    let owner = member_lookup(cells);
    let split = split_lookup(cells);
    let mut rng = stream_rng(seed, Stream::Chords, &LatticePoint::origin(cells.grid.dim));
    let mut report = GeometryReport::default();
    for (j, members) in cells.members.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        for _ in 0..n_chords {
            let a = members[rng.gen_range(0..members.len())] as usize;
            let b = members[rng.gen_range(0..members.len())] as usize;
            let pa = cells.grid.cell_center(a);
            let pb = cells.grid.cell_center(b);
            let mid: Vec<f64> = pa
                .coords()
                .iter()
                .zip(pb.coords())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            let mid = Point::new(&mid).expect("valid midpoint");
            report.checked += 1;
            if !near_member(&cells.grid, &owner, &split, &mid, j) {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// Ray-walking starlikeness audit: the segment from a sampled cell point to
/// its atom must stay in the cell up to one grid cell of slack. Intended
/// for linear cost in dimension at least two, where cells are starlike
/// about their atom. On a torus, segments follow the shortest wrap and
/// cells wider than half the torus are flagged instead of failed.
pub fn starlike_audit(
    cells: &CellMap,
    geometry: &Geometry,
    n_rays: u64,
    seed: u64,
) -> Result<GeometryReport, AllocError> {
    let d = cells.grid.dim;
    if d < 2 {
        return Err(AllocError::WrongDimension { need: 2, got: d });
    }
    if cells.members.iter().all(|m| m.is_empty()) {
        return Err(AllocError::EmptyCells);
    }
    let owner = member_lookup(cells);
    let split = split_lookup(cells);
    let mut rng = stream_rng(seed, Stream::Rays, &LatticePoint::origin(d));
    let step = 0.5 / cells.grid.resolution as f64;
    let mut report = GeometryReport::default();
    for (j, members) in cells.members.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let xi = cells.atoms[j].0;
        if let Geometry::Torus { side } = geometry {
            let diam = cell_diameter(cells, j, *side);
            if diam > side / 2.0 {
                report.flagged_wraparound += 1;
                continue;
            }
        }
        for _ in 0..n_rays {
            let z = cells.grid.cell_center(members[rng.gen_range(0..members.len())] as usize);
            // displacement toward the atom, shortest wrap on a torus
            let mut delta = [0.0f64; MAX_DIM];
            for a in 0..d {
                let mut dx = xi.coords()[a] - z.coords()[a];
                if let Geometry::Torus { side } = geometry {
                    if dx > side / 2.0 {
                        dx -= side;
                    } else if dx < -side / 2.0 {
                        dx += side;
                    }
                }
                delta[a] = dx;
            }
            let len = delta[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let n_steps = (len / step).ceil() as usize;
            report.checked += 1;
            let mut ok = true;
            for s in 1..n_steps {
                let t = s as f64 / n_steps as f64;
                let mut q = [0.0f64; MAX_DIM];
                for a in 0..d {
                    q[a] = z.coords()[a] + t * delta[a];
                    if let Geometry::Torus { side } = geometry {
                        let lo = cells.grid.lower[a] as f64;
                        q[a] = lo + (q[a] - lo).rem_euclid(*side);
                    }
                }
                let q = Point::new(&q[..d]).expect("valid ray point");
                if !near_member(&cells.grid, &owner, &split, &q, j) {
                    ok = false;
                    break;
                }
            }
            if !ok {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

fn cell_diameter(cells: &CellMap, j: usize, side: f64) -> f64 {
    // per-axis circular extent of the member cells: side minus the widest
    // unoccupied arc, so seam-straddling but small cells are not flagged
    let d = cells.grid.dim;
    let k = cells.grid.resolution as f64;
    let mut diam: f64 = 0.0;
    for a in 0..d {
        let mut offsets: Vec<f64> = cells.members[j]
            .iter()
            .map(|&c| {
                let p = cells.grid.cell_center(c as usize);
                (p.coords()[a] - cells.grid.lower[a] as f64).rem_euclid(side)
            })
            .collect();
        offsets.sort_by(|x, y| x.partial_cmp(y).expect("finite offsets"));
        if offsets.is_empty() {
            continue;
        }
        let mut max_gap = side - (offsets[offsets.len() - 1] - offsets[0]);
        for w in offsets.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        diam = diam.max(side - max_gap + 1.0 / k);
    }
    diam
}

/// Nearest-atom assignment of every grid cell center; ties go to the
/// lowest atom index. Cell "masses" are one quantum each, so volumes count
/// cells.
pub fn voronoi_reference(atoms: &[(Point, u64)], grid: &Grid, geometry: &Geometry) -> CellMap {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); atoms.len()];
    let mut volumes = vec![0u64; atoms.len()];
    for c in 0..grid.n_cells() {
        let p = grid.cell_center(c);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, (pos, _)) in atoms.iter().enumerate() {
            let d = geometry.distance(&p, pos);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        members[best].push(c as u32);
        volumes[best] += 1;
    }
    CellMap {
        grid: *grid,
        atoms: atoms.to_vec(),
        members,
        split: Vec::new(),
        volumes,
        quantum: 1,
        offset: LatticePoint::origin(grid.dim),
    }
}

/// Mass assigned differently by a plan cell map than by a reference map
/// with whole-cell assignments over the same grid, in quanta of
/// `cell_masses`. Split parts pointing at another atom than the reference
/// owner count in full.
pub fn symmetric_difference_quanta(
    plan_cells: &CellMap,
    reference: &CellMap,
    cell_masses: &[u64],
) -> u64 {
    assert_eq!(plan_cells.grid, reference.grid);
    assert_eq!(plan_cells.atoms.len(), reference.atoms.len());
    let ref_owner = member_lookup(reference);
    let mut diff = 0u64;
    for (j, members) in plan_cells.members.iter().enumerate() {
        for &c in members {
            if ref_owner[c as usize] != j as i32 {
                diff += cell_masses[c as usize];
            }
        }
    }
    for s in &plan_cells.split {
        let owner = ref_owner[s.cell as usize];
        for &(atom, mass) in &s.parts {
            let matches = matches!(atom, Some(a) if a as i32 == owner);
            if !matches {
                diff += mass;
            }
        }
    }
    diff
}

/// SVG rendering options.
#[derive(Debug, Clone, Copy)]
pub struct SvgStyle {
    /// Pixels per unit length.
    pub scale: f64,
    /// Atom marker radius in pixels for a unit-weight atom.
    pub atom_radius: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self { scale: 64.0, atom_radius: 3.0 }
    }
}

fn palette_color(index: usize) -> String {
    // golden-angle hue walk, fixed saturation/lightness
    let hue = (index as f64 * 137.50776405003785).rem_euclid(360.0);
    let (h, s, l) = (hue / 60.0, 0.55f64, 0.62f64);
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    format!(
        "#{:02x}{:02x}{:02x}",
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8
    )
}

/// Render a two-dimensional cell map as SVG: one group of row-run
/// rectangles per atom with a distinct fill, split cells in gray, atoms as
/// dots scaled by weight. Output is deterministic for identical input.
pub fn render_svg(cells: &CellMap, style: &SvgStyle) -> Result<String, AllocError> {
    let d = cells.grid.dim;
    if d != 2 {
        return Err(AllocError::WrongDimension { need: 2, got: d });
    }
    let grid = &cells.grid;
    let k = grid.resolution as f64;
    let px = style.scale / k; // pixels per grid cell
    let width = grid.cells_per_axis[0] as f64 * px;
    let height = grid.cells_per_axis[1] as f64 * px;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{width:.1}\" height=\"{height:.1}\" \
         viewBox=\"0 0 {width:.1} {height:.1}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width:.1}\" height=\"{height:.1}\" \
         fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));
    // axis 0 is the row (vertical) axis, axis 1 the fastest-varying column
    let rect = |row: u32, col_start: usize, col_end: usize, fill: &str| {
        format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
            col_start as f64 * px,
            row as f64 * px,
            (col_end - col_start) as f64 * px,
            px,
            fill
        )
    };
    for (j, members) in cells.members.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let fill = palette_color(j);
        out.push_str(&format!("<g id=\"cell-{j}\">\n"));
        // merge consecutive cells in a row into one rect
        let mut sorted = members.clone();
        sorted.sort_unstable();
        let mut run_start: Option<(u32, usize)> = None;
        let mut prev: Option<(u32, usize)> = None;
        for &c in &sorted {
            let coords = grid.cell_coords(c as usize);
            let (row, col) = (coords[0], coords[1] as usize);
            match (run_start, prev) {
                (Some((r0, c0)), Some((rp, cp))) if rp == row && cp + 1 == col => {
                    prev = Some((row, col));
                    let _ = (r0, c0);
                }
                (Some((r0, c0)), Some((_, cp))) => {
                    out.push_str(&rect(r0, c0, cp + 1, &fill));
                    run_start = Some((row, col));
                    prev = Some((row, col));
                }
                _ => {
                    run_start = Some((row, col));
                    prev = Some((row, col));
                }
            }
        }
        if let (Some((r0, c0)), Some((_, cp))) = (run_start, prev) {
            out.push_str(&rect(r0, c0, cp + 1, &fill));
        }
        out.push_str("</g>\n");
    }
    if !cells.split.is_empty() {
        out.push_str("<g id=\"split-cells\">\n");
        for s in &cells.split {
            let coords = grid.cell_coords(s.cell as usize);
            out.push_str(&rect(coords[0], coords[1] as usize, coords[1] as usize + 1, "#999999"));
        }
        out.push_str("</g>\n");
    }
    out.push_str("<g id=\"atoms\">\n");
    let unit = cells.quantum.max(1) as f64;
    for (pos, quanta) in &cells.atoms {
        let cx = (pos.coords()[1] - grid.lower[1] as f64) * style.scale;
        let cy = (pos.coords()[0] - grid.lower[0] as f64) * style.scale;
        let r = style.atom_radius * (*quanta as f64 / unit).sqrt().max(0.2);
        out.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"black\"/>\n"
        ));
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}
