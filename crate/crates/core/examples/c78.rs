use equitransport::allocation::*;
use equitransport::domain::*;
use equitransport::randmeas::*;
use equitransport::solver::*;

fn main() {
    // criterion 7b: 49 binomial points on a 7x7 torus, p=1, starlike cells
    let scene = SceneSpec::new(2, TargetSpec::Binomial { per_cell: 1 }, 7749);
    let cells_list: Vec<LatticePoint> = (0..7)
        .flat_map(|x| (0..7).map(move |y| LatticePoint::new(&[x, y]).unwrap()))
        .collect();
    let k = 8u32;
    let quantum = adjust_quantum(1 << 20, k, 2, (1, 1)).unwrap();
    let src = discretize_lebesgue(&[0, 0], &[7 * k, 7 * k], k, (1, 1), quantum).unwrap();
    let tgt = sample_target_cells(&scene, &cells_list, quantum);
    let spec = CostSpec::torus(7.0, 1.0).unwrap();
    let t0 = std::time::Instant::now();
    let plan = solve_coupling(&src, &tgt, &spec).unwrap();
    println!("torus solve: {:?}", t0.elapsed());
    let cells = extract_cells(&plan).unwrap();
    let report = starlike_audit(&cells, &spec.geometry, 200, 3).unwrap();
    println!("starlike: {report:?}");

    // criterion 8: beta=64 scaled Poisson, target semicoupling vs Voronoi
    for seed in 0..3 {
        let scene = SceneSpec::new(2, TargetSpec::Poisson { beta: 1.0 }, seed);
        let win_cells: Vec<LatticePoint> = (0..5)
            .flat_map(|x| (0..5).map(move |y| LatticePoint::new(&[x, y]).unwrap()))
            .collect();
        let quantum = adjust_quantum(1 << 20, k, 2, (1, 1)).unwrap();
        let src = discretize_lebesgue(&[0, 0], &[5 * k, 5 * k], k, (1, 1), quantum).unwrap();
        let mut tgt = sample_target_cells(&scene, &win_cells, quantum);
        for a in tgt.atoms.iter_mut() { a.quanta *= 64; }  // beta = 64 scaling
        let spec = CostSpec::torus(5.0, 2.0).unwrap();
        let plan = solve_semicoupling_target(&src, &tgt, &spec).unwrap();
        let cellmap = extract_cells(&plan).unwrap();
        let atoms: Vec<(Point, u64)> = tgt.atoms.iter().map(|a| (a.pos, a.quanta)).collect();
        let reference = voronoi_reference(&atoms, &src.grid, &spec.geometry);
        let masses = src.masses.clone();
        let diff = symmetric_difference_quanta(&cellmap, &reference, &masses);
        let frac = diff as f64 / src.total_quanta() as f64;
        println!("seed {seed}: atoms {}, sym-diff mass fraction {frac}", tgt.len());
    }
}
