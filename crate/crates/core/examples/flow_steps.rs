//! Driving the flow one step at a time and checking each step against the
//! conjugation of the whole Hamiltonian by that step's unitary.

use lattice_blockdiag::flow::{apply_step, consistency_check, FlowOptions, FlowState};
use lattice_blockdiag::lattice::enumerate_steps;
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    let lat = LatticeSpec::new(2, 2)?;
    let spec = random_model(lat, 2, 0.05, 3)?;
    let mut state = FlowState::new(&spec)?;
    let opts = FlowOptions::default();
    println!("{:<22} {:>8} {:>10} {:>10} {:>10} {:>8}", "step", "gap", "‖S‖", "tail est", "residual", "regime");
    for j in enumerate_steps(&lat) {
        let before = state.interactions.clone();
        apply_step(&mut state, &j, &opts)?;
        let gen = state.generator_log.last().unwrap();
        let residual = consistency_check(&before, &state.interactions, gen, &state.lat, state.t)?;
        let r = state.records.last().unwrap();
        println!(
            "{:<22} {:>8.5} {:>10.3e} {:>10.2e} {:>10.2e} {:>8}",
            j.to_string(),
            r.g_gap,
            r.s_norm,
            r.tail_estimate,
            residual,
            r.regime.tag()
        );
    }
    println!("{} entries left in the interaction map", state.interactions.len());
    Ok(())
}
