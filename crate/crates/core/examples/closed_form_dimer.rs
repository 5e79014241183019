//! Two sites with H = diag(0, 1) and V = σx⊗σx. The effective Hamiltonian
//! has the gap √(1+t²) − t, which the flow reproduces in a single step.

use lattice_blockdiag::flow::{run_flow, FlowOptions};
use lattice_blockdiag::model::{default_onsite, uniform_model};
use lattice_blockdiag::tensor::{kron, pauli};
use lattice_blockdiag::verify::verify_spectrum;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    let lat = LatticeSpec::new(1, 2)?;
    println!("{:>6} {:>16} {:>16} {:>10}", "t", "flow gap", "closed form", "error");
    for t in [0.0, 0.02, 0.05, 0.1, 0.2] {
        let spec = uniform_model(lat, default_onsite(2), kron(&pauli('x'), &pauli('x')), t)?;
        let state = run_flow(&spec, &FlowOptions::default())?;
        let check = verify_spectrum(&spec, &state, 1e-8, 1e-6)?;
        let exact = (1.0f64 + t * t).sqrt() - t;
        println!("{t:>6} {:>16.12} {exact:>16.12} {:>10.1e}", check.gap, (check.gap - exact).abs());
    }
    Ok(())
}
