use lattice_blockdiag::expansion::{check_branch_properties, enumerate_branches, weighted_branch_sum};
use lattice_blockdiag::flow::{run_flow_until, FlowOptions};
use lattice_blockdiag::lattice::{all_rects, enumerate_steps};
use lattice_blockdiag::model::random_model;
use lattice_blockdiag::LatticeSpec;

#[test]
fn plaquette_branches_reconcile_at_every_root() {
    let lat = LatticeSpec::new(2, 2).unwrap();
    let spec = random_model(lat, 2, 0.05, 4).unwrap();
    let opts = FlowOptions::default();
    let mut checked = 0;
    for root in enumerate_steps(&lat) {
        let state = run_flow_until(&spec, &opts, Some(&root)).unwrap();
        for target in all_rects(&lat).into_iter().filter(|t| t.circumference() >= 1) {
            let ex = enumerate_branches(&target, &root, &state, opts.n_max, 32).unwrap();
            let stored = state.interactions.get(&target);
            match stored {
                None => assert!(ex.branches.is_empty()),
                Some(op) => {
                    let diff = (&ex.sum() - &op.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    assert!(diff <= 1e-9, "{target} at {root}: {diff}");
                    let p = check_branch_properties(&ex);
                    assert!(p.connected && p.spans_target && p.injective && p.descending && !p.incomplete);
                    let (lhs, rhs) = weighted_branch_sum(&ex, &state).unwrap();
                    assert!(lhs <= rhs);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn depth_limit_marks_incomplete_expansions() {
    let lat = LatticeSpec::new(1, 4).unwrap();
    let spec = random_model(lat, 2, 0.05, 1).unwrap();
    let opts = FlowOptions::default();
    let root = enumerate_steps(&lat)[4].clone();
    let state = run_flow_until(&spec, &opts, Some(&root)).unwrap();
    let ex = enumerate_branches(&lat.full(), &root, &state, opts.n_max, 1).unwrap();
    assert!(ex.incomplete);
    assert!(ex.branches.iter().all(|b| b.rects.len() <= 2));
}
