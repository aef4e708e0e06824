use equitransport::allocation::*;
use equitransport::domain::*;
use equitransport::randmeas::*;
use equitransport::solver::*;
use rand::Rng;

fn main() {
    let scene = SceneSpec::new(2, TargetSpec::Binomial { per_cell: 100 }, 4242);
    let cell = LatticePoint::new(&[0, 0]).unwrap();
    let quantum = adjust_quantum(1 << 20, 64, 2, (100, 1)).unwrap();
    let src = discretize_lebesgue(&[0, 0], &[64, 64], 64, (100, 1), 1 << 20).unwrap();
    let tgt = sample_target_cells(&scene, &[cell], quantum);
    let spec = CostSpec::euclidean(2.0).unwrap();
    let plan = solve_coupling(&src, &tgt, &spec).unwrap();
    let cells = extract_cells(&plan).unwrap();
    // owner map incl splits
    let mut owner = vec![String::new(); cells.grid.n_cells()];
    for (j, m) in cells.members.iter().enumerate() {
        for &c in m { owner[c as usize] = format!("{j}"); }
    }
    for s in &cells.split {
        let mut ids: Vec<String> = s.parts.iter().filter_map(|&(a, _)| a.map(|x| x.to_string())).collect();
        ids.sort();
        owner[s.cell as usize] = format!("[{}]", ids.join("/"));
    }
    // replicate the audit sampling and dump first violation neighborhood
    let mut rng = stream_rng(1, Stream::Chords, &LatticePoint::origin(2));
    let grid = cells.grid;
    for (j, members) in cells.members.iter().enumerate() {
        if members.len() < 2 { continue; }
        for _ in 0..200 {
            let a = members[rng.gen_range(0..members.len())] as usize;
            let b = members[rng.gen_range(0..members.len())] as usize;
            let pa = grid.cell_center(a);
            let pb = grid.cell_center(b);
            let mid: Vec<f64> = pa.coords().iter().zip(pb.coords()).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid = Point::new(&mid).unwrap();
            let idx = grid.locate(&mid).unwrap();
            let bc = grid.cell_coords(idx);
            // manual near-member incl split
            let mut hit = false;
            for dx in -1i64..=1 { for dy in -1i64..=1 {
                let x = bc[0] as i64 + dx; let y = bc[1] as i64 + dy;
                if x < 0 || y < 0 || x >= 64 || y >= 64 { continue; }
                let c = grid.index_of(&[x as u32, y as u32]);
                let o = &owner[c];
                let matched = if let Some(stripped) = o.strip_prefix('[') {
                    stripped.trim_end_matches(']').split('/').any(|id| id == format!("{j}"))
                } else {
                    o == &format!("{j}")
                };
                if matched { hit = true; }
            }}
            if !hit {
                println!("VIOLATION atom {j}: endpoints {:?} {:?} mid {:?} midcell {:?}", pa.coords(), pb.coords(), mid.coords(), &bc[..2]);
                println!("atom pos {:?}", cells.atoms[j].0.coords());
                for dx in -2i64..=2 {
                    let mut row = String::new();
                    for dy in -2i64..=2 {
                        let x = bc[0] as i64 + dx; let y = bc[1] as i64 + dy;
                        let s = if x < 0 || y < 0 || x >= 64 || y >= 64 { "-".into() }
                        else { owner[grid.index_of(&[x as u32, y as u32])].clone() };
                        row.push_str(&format!("{:>8}", s));
                    }
                    println!("{row}");
                }
                return;
            }
        }
    }
    println!("no violations found");
}
