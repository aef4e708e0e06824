use equitransport::construct::*;
use equitransport::domain::*;
use equitransport::randmeas::*;

fn main() {
    // criterion 11: Poisson beta=1/2, d=2, p=2; central-cell drift r=1 -> r=2
    let t0 = std::time::Instant::now();
    let mut zero = 0;
    let g = LatticePoint::origin(2);
    for seed in 0..20u64 {
        let scene = SceneSpec::new(2, TargetSpec::Poisson { beta: 0.5 }, seed);
        let cost = CostSpec::euclidean(2.0).unwrap();
        let mut solver = WindowSolver::new(scene, cost, 8, 1 << 20).unwrap();
        let drift = solver.map_drift(g, 1, 2).unwrap();
        if drift == 0.0 { zero += 1; }
        println!("seed {seed}: drift {drift:.4}  ({:?})", t0.elapsed());
    }
    println!("zero-drift seeds: {zero}/20");
}
