use equitransport::allocation::*;
use equitransport::domain::*;
use equitransport::randmeas::*;
use equitransport::solver::*;

fn main() {
    // criterion 7 setup: unit square, 100 atoms, k=64, p=2 coupling
    let scene = SceneSpec::new(2, TargetSpec::Binomial { per_cell: 100 }, 4242);
    let cell = LatticePoint::new(&[0, 0]).unwrap();
    let quantum = adjust_quantum(1 << 20, 64, 2, (100, 1)).unwrap();
    let src = discretize_lebesgue(&[0, 0], &[64, 64], 64, (100, 1), 1 << 20).unwrap();
    let tgt = sample_target_cells(&scene, &[cell], quantum);
    assert_eq!(src.total_quanta(), tgt.total_quanta());
    let spec = CostSpec::euclidean(2.0).unwrap();
    let t0 = std::time::Instant::now();
    let plan = solve_coupling(&src, &tgt, &spec).unwrap();
    println!("solve: {:?}", t0.elapsed());
    let cells = extract_cells(&plan).unwrap();
    println!("atoms {}, split {}", cells.atoms.len(), cells.split.len());
    let sizes: Vec<usize> = cells.members.iter().map(|m| m.len()).collect();
    println!("member sizes min {} max {}", sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    let report = convexity_audit(&cells, 200, 1).unwrap();
    println!("convexity: {:?}", report);
    // also check the Laguerre structure through monotonicity
    let mono = verify_cyclical_monotonicity(&plan, &spec, 5, 2000, 1e-9, 2);
    println!("monotonicity: {:?}", mono);
}
