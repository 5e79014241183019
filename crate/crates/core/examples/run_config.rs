//! The library side of the `blockdiag` binary: parse a TOML config, run it,
//! and emit the JSON report and per-step CSV.

use lattice_blockdiag::cli::{csv_rows, execute, parse_config_str, Overrides};

const CONFIG: &str = r#"
t = 0.05
j_max = 12

[model]
d = 1
n = 4
seed = 7

[checks]
consistency = "every-step"
inequality_suite = true
inequality_max_sites = 4

[[checks.branches]]
target_k = [3]
target_q = [1]
root_k = [2]
root_q = [2]
"#;

fn main() -> lattice_blockdiag::Result<()> {
    let loaded = parse_config_str(CONFIG)?;
    let (report, state) = execute(&loaded, &Overrides::default())?;
    println!("status {}, fingerprint {}", report.run.status, report.run.fingerprint.spec_hash);
    println!("gap {:.9}", report.run.spectral.gap);
    if let Some(s) = &report.inequalities {
        println!("{} projector inequalities, all pass: {}", s.checked, s.pass);
    }
    for b in &report.branches {
        println!("branches of {} at {}: {} ({:?})", b.target, b.root, b.properties.branches, b.reconciliation_error);
    }
    print!("{}", csv_rows(&state));
    Ok(())
}
