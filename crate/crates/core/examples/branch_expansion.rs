//! Re-expanding an effective potential into branches labelled by the steps
//! that produced it, and walking connected families of rectangles.

use lattice_blockdiag::expansion::{
    build_gamma, check_branch_properties, check_gamma, decompose_components, enumerate_branches, weighted_branch_sum,
};
use lattice_blockdiag::flow::{run_flow_until, FlowOptions};
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::{LatticeSpec, Rect};

fn main() -> lattice_blockdiag::Result<()> {
    let lat = LatticeSpec::new(2, 2)?;
    let spec = random_model(lat, 2, 0.05, 1)?;
    let opts = FlowOptions::default();
    let root = Rect::new(vec![0, 1], vec![2, 1]);
    let target = lat.full();
    let state = run_flow_until(&spec, &opts, Some(&root))?;
    let ex = enumerate_branches(&target, &root, &state, opts.n_max, 16)?;
    println!("potential on {target} after step {root}: {} branches", ex.branches.len());
    for b in &ex.branches {
        let labels: Vec<String> = b.rects.iter().map(|r| r.to_string()).collect();
        println!("  ‖b‖ = {:.3e}  {}", b.op.norm()?, labels.join(" <- "));
    }
    let stored = &state.interactions.get(&target).unwrap().matrix;
    let diff = (&ex.sum() - stored).iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("max |Σ branches − stored| = {diff:.1e}");
    println!("{:?}", check_branch_properties(&ex));
    let (lhs, rhs) = weighted_branch_sum(&ex, &state)?;
    println!("Σ‖b‖ = {lhs:.4e} ≤ weighted bound {rhs:.4e}");

    let family = vec![
        Rect::new(vec![1, 0], vec![1, 1]),
        Rect::new(vec![1, 0], vec![1, 3]),
        Rect::new(vec![0, 2], vec![2, 1]),
        Rect::new(vec![2, 1], vec![2, 2]),
    ];
    let decomp = decompose_components(&family)?;
    for level in &decomp.levels {
        println!("size {}: {} components", level.size, level.components.len());
    }
    let gamma = build_gamma(&decomp)?;
    let path: Vec<String> = gamma.seq.iter().map(|r| r.to_string()).collect();
    println!("path of length {}: {}", gamma.length(), path.join(" -> "));
    println!("{:?}", check_gamma(&gamma, &decomp));
    Ok(())
}
