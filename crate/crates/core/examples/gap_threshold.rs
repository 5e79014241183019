//! Largest coupling on a grid for which a seeded model still passes every
//! check. The threshold is a property of the model, not a universal constant.

use lattice_blockdiag::flow::{run_flow, FlowOptions};
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::verify::build_report;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    let lat = LatticeSpec::new(1, 5)?;
    let mut last_pass = None;
    for i in 1..=30 {
        let t = 0.01 * i as f64;
        let spec = random_model(lat, 2, t, 1)?;
        let outcome =
            run_flow(&spec, &FlowOptions::default()).and_then(|state| build_report(&spec, &state, 1e-8, 1e-6));
        match outcome {
            Ok(r) if r.passed() => {
                println!("t={t:.2} pass, gap {:.6}", r.spectral.gap);
                last_pass = Some(t);
            }
            Ok(r) => {
                println!("t={t:.2} fail: {}", r.failures.join("; "));
                break;
            }
            Err(e) => {
                println!("t={t:.2} aborted: {e}");
                break;
            }
        }
    }
    println!("largest passing t on the grid: {last_pass:?}");
    Ok(())
}
