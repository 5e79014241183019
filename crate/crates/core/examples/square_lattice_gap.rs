//! Seeded random model on a d-dimensional lattice, block-diagonalized and
//! checked by exact diagonalization.
//!
//! Usage: `cargo run --release --example square_lattice_gap -- [d] [N] [t] [seed]`
//! (defaults 2 3 0.05 1; d=2 N=3 has dimension 512 and takes a few seconds).

use lattice_blockdiag::flow::{run_flow, ConsistencyMode, FlowOptions};
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::verify::build_report;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let d: usize = arg(0, "2").parse().expect("d");
    let n: usize = arg(1, "3").parse().expect("N");
    let t: f64 = arg(2, "0.05").parse().expect("t");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let spec = random_model(LatticeSpec::new(d, n)?, 2, t, seed)?;
    let opts = FlowOptions { consistency: ConsistencyMode::Final, ..FlowOptions::default() };
    let state = run_flow(&spec, &opts)?;
    let report = build_report(&spec, &state, opts.tol, 1e-6)?;
    let m = &report.spectral;
    println!("d={d} N={n} t={t} seed={seed}: {} steps", report.steps.len());
    println!("ground energy        {:.12}", m.ground_energy);
    println!("gap                  {:.12}", m.gap);
    println!("vacuum overlap       {:.12}", m.vacuum_overlap);
    println!("spectrum mismatch    {:.2e}", m.spectrum_mismatch);
    println!("final consistency    {:.2e}", report.final_consistency_residual.unwrap_or(f64::NAN));
    println!("smallest step gap    {:.6}", report.step_audit.min_g_gap);
    for row in &report.norm_audit.rows {
        println!(
            "r={:<2} max ‖V‖ {:.3e}  bound {:.3e}  {}",
            row.circumference,
            row.max_norm,
            row.bound,
            if row.pass { "ok" } else { "FAIL" }
        );
    }
    println!("status: {}", report.status);
    Ok(())
}
