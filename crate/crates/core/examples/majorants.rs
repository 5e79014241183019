//! The majorant series B_j that bounds the Lie-Schwinger terms, its
//! generating function, and the certified tail, next to the actual term norms
//! of one step.

use lattice_blockdiag::flow::{run_flow, FlowOptions};
use lattice_blockdiag::lie_schwinger::{majorant_constant, majorants};
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    let a = majorant_constant();
    println!("a = {a:.15}");
    let m = majorants(1.0, 12);
    println!("radius a/(4‖v1‖) = {:.6}", m.radius_lower_bound);
    for (j, b) in m.b.iter().enumerate() {
        println!("  B_{:<2} = {b:.6e}   Taylor {:.6e}", j + 1, m.taylor_coefficient(j + 1));
    }
    for t in [0.001, 0.003, 0.005] {
        println!("tail at t={t}: {:.3e}", m.tail(t));
    }

    let spec = random_model(LatticeSpec::new(1, 4)?, 2, 0.004, 1)?;
    let state = run_flow(&spec, &FlowOptions::default())?;
    let r = &state.records[0];
    println!("first step {} at t=0.004, ‖v1‖ = {:.4}", r.rect, r.v1_norm);
    for (j, (v, b)) in r.v_norms.iter().zip(&r.majorants).enumerate() {
        println!("  ‖(V)_{:<2}‖ = {v:.3e} ≤ B = {b:.3e}", j + 1);
    }
    println!("off-diagonal residual {:.3e}, certified tail {:?}", r.offdiag_residual, r.tail_bound);
    Ok(())
}
