//! Projector inequalities behind the gap estimate, checked on every small
//! rectangle: Σ_j P⊥_j ≥ P+_J, and the placement sums bounded by a multiple
//! of Σ_j P⊥_j.

use std::collections::BTreeMap;

use lattice_blockdiag::verify::inequality_suite;
use lattice_blockdiag::LatticeSpec;

fn main() -> lattice_blockdiag::Result<()> {
    for (d, n) in [(1, 10), (2, 5)] {
        let lat = LatticeSpec::new(d, n)?;
        let checks = inequality_suite(&lat, 10);
        let mut by_kind: BTreeMap<String, (usize, f64, usize)> = BTreeMap::new();
        for c in &checks {
            let e = by_kind.entry(format!("{:?}", c.kind)).or_insert((0, f64::INFINITY, 0));
            e.0 += 1;
            e.1 = e.1.min(c.min_eigenvalue);
            e.2 += (!c.pass) as usize;
        }
        println!("d={d} N={n}:");
        for (kind, (count, min, bad)) in by_kind {
            println!("  {kind:<16} {count:>5} checks, smallest minimum eigenvalue {min}, {bad} failures");
        }
    }
    Ok(())
}
