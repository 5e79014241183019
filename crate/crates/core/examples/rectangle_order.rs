//! The order in which rectangles are block-diagonalized, and the rectangles
//! that feed each larger one.

use lattice_blockdiag::lattice::{enumerate_steps, g_set, minimal_rectangle, successor};
use lattice_blockdiag::{LatticeSpec, Rect};

fn main() -> lattice_blockdiag::Result<()> {
    let lat = LatticeSpec::new(2, 3)?;
    let steps = enumerate_steps(&lat);
    println!("{} steps on the 3x3 lattice, starting after {}", steps.len(), lat.initial());
    let mut cur = lat.initial();
    while let Some(next) = successor(&cur, &lat) {
        println!("  {:>2}  |k|={}  {next}", steps.iter().position(|s| s == &next).unwrap(), next.circumference());
        cur = next;
    }

    let a = Rect::new(vec![1, 0], vec![1, 1]);
    let b = Rect::new(vec![0, 1], vec![2, 1]);
    println!("minimal rectangle of {a} and {b}: {}", minimal_rectangle(&a, &b)?);

    let inner = Rect::new(vec![1, 0], vec![1, 2]);
    let target = Rect::new(vec![1, 1], vec![1, 1]);
    println!("rectangles whose minimal rectangle with {inner} is {target}:");
    for r in g_set(&inner, &target, &lat)? {
        println!("  {r}");
    }
    Ok(())
}
