//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test --release --test acceptance`.

use std::cmp::Ordering;
use std::time::Instant;

use lattice_blockdiag::cli::{execute, parse_config_str, CliReport, Overrides};
use lattice_blockdiag::expansion::{
    build_gamma, check_branch_properties, check_gamma, closed_path, decompose_components, enumerate_branches,
    random_layered_family, weighted_branch_sum,
};
use lattice_blockdiag::flow::{run_flow, run_flow_until, ConsistencyMode, FlowOptions, FlowState, StepRecord};
use lattice_blockdiag::lattice::{
    all_rects, compare_step, count_shapes, enumerate_steps, minimal_rectangle, LatticeSpec, Rect,
};
use lattice_blockdiag::lie_schwinger::{majorant_constant, MajorantSeries};
use lattice_blockdiag::model::{default_onsite, random_model, uniform_model};
use lattice_blockdiag::tensor::{kron, pauli};
use lattice_blockdiag::verify::{inequality_suite, norm_decay_audit, step_audit, verify_spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct MainRun {
    label: String,
    report: CliReport,
    json: String,
    state: FlowState,
}

const SEEDS: [u64; 2] = [1, 2];
const COUPLINGS: [f64; 3] = [0.01, 0.02, 0.05];

fn main_config(d: usize, n: usize, seed: u64, t: f64) -> String {
    format!("t = {t}\n\n[model]\nd = {d}\nn = {n}\nm = 2\nseed = {seed}\n\n[checks]\nconsistency = \"final\"\n")
}

fn main_runs() -> Result<Vec<MainRun>, String> {
    let mut runs = Vec::new();
    for (d, n) in [(1, 6), (2, 3)] {
        for seed in SEEDS {
            for t in COUPLINGS {
                let label = format!("d={d} N={n} seed={seed} t={t}");
                let started = Instant::now();
                let loaded = parse_config_str(&main_config(d, n, seed, t)).map_err(|e| format!("{label}: {e}"))?;
                let (report, state) = execute(&loaded, &Overrides::default()).map_err(|e| format!("{label}: {e}"))?;
                let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
                eprintln!("  ran {label} in {:.1}s", started.elapsed().as_secs_f64());
                runs.push(MainRun { label, report, json, state });
            }
        }
    }
    Ok(runs)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let t = 0.1;
    let lat = LatticeSpec::new(1, 2).unwrap();
    let result = uniform_model(lat, default_onsite(2), kron(&pauli('x'), &pauli('x')), t).and_then(|spec| {
        let state = run_flow(&spec, &FlowOptions::default())?;
        verify_spectrum(&spec, &state, 1e-8, 1e-6)
    });
    let elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(check) => {
            let exact = (1.0f64 + t * t).sqrt() - t;
            let err = (check.gap - exact).abs();
            outcome(
                err <= 1e-9 && elapsed < 1.0,
                format!("gap {:.12} vs {exact:.12}, error {err:.1e}, {elapsed:.3}s", check.gap),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_2(runs: &[MainRun]) -> Outcome {
    let mut worst_gap = f64::INFINITY;
    let mut worst_offdiag: f64 = 0.0;
    let mut worst_spec: f64 = 0.0;
    let mut failed = Vec::new();
    for r in runs {
        let m = &r.report.run.spectral;
        worst_gap = worst_gap.min(m.gap.min(m.separation));
        worst_offdiag = worst_offdiag.max(m.offdiag_norm);
        worst_spec = worst_spec.max(m.spectrum_mismatch);
        let clauses = ["unique ground state", "gap", "vacuum off-diagonal block", "spectrum mismatch"];
        if m.clauses.iter().any(|c| clauses.contains(&c.name.as_str()) && !c.pass) {
            failed.push(r.label.clone());
        }
    }
    outcome(
        failed.is_empty() && !runs.is_empty(),
        format!(
            "{} runs, min gap {worst_gap:.6}, max off-diagonal {worst_offdiag:.1e}, max spectrum mismatch {worst_spec:.1e}{}",
            runs.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {failed:?}") }
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for (d, n) in [(1, 4), (2, 2)] {
        for seed in SEEDS {
            let lat = LatticeSpec::new(d, n).unwrap();
            let opts = FlowOptions { consistency: ConsistencyMode::EveryStep, tol: 1e-9, ..FlowOptions::default() };
            match random_model(lat, 2, 0.05, seed).and_then(|spec| run_flow(&spec, &opts)) {
                Ok(state) => {
                    for r in &state.records {
                        steps += 1;
                        worst = worst.max(r.consistency_residual.unwrap_or(f64::INFINITY));
                    }
                }
                Err(e) => return outcome(false, format!("d={d} N={n} seed={seed}: {e}")),
            }
        }
    }
    outcome(worst <= 1e-9, format!("{steps} steps, max residual {worst:.1e}"))
}

fn criterion_4(runs: &[MainRun]) -> Outcome {
    let mut min_gap = f64::INFINITY;
    let mut max_err: f64 = 0.0;
    for r in runs {
        let a = step_audit(&r.state.records);
        min_gap = min_gap.min(a.min_g_gap);
        max_err = max_err.max(a.max_energy_error);
    }
    outcome(min_gap >= 0.5 && max_err <= 1e-10, format!("min step gap {min_gap:.6}, max |E_J − t·Σ⟨V⟩| {max_err:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut total = 0;
    let mut min = f64::INFINITY;
    let mut bad = 0;
    for (d, n) in [(1, 10), (2, 5)] {
        let lat = LatticeSpec::new(d, n).unwrap();
        for c in inequality_suite(&lat, 10) {
            total += 1;
            min = min.min(c.min_eigenvalue);
            bad += (c.min_eigenvalue < -1e-12) as usize;
        }
    }
    outcome(bad == 0 && total > 0, format!("{total} inequalities, smallest minimum eigenvalue {min}, {bad} violations"))
}

fn majorant_checks(records: &[StepRecord]) -> (usize, usize, usize, f64) {
    let a = majorant_constant();
    let (mut norm_bad, mut tail_bad, mut taylor_bad) = (0, 0, 0);
    let mut worst_taylor: f64 = 0.0;
    for r in records {
        if r.v_norms.iter().zip(&r.majorants).any(|(v, b)| *v > b * (1.0 + 1e-10) + 1e-14) {
            norm_bad += 1;
        }
        if r.offdiag_residual > r.tail_bound.unwrap_or(f64::INFINITY) + 1e-15 {
            tail_bad += 1;
        }
        if r.v1_norm > 0.0 {
            let series = MajorantSeries {
                a,
                b: r.majorants.clone(),
                v1_norm: r.v1_norm,
                radius_lower_bound: r.radius_lower_bound,
            };
            for (i, b) in r.majorants.iter().enumerate() {
                let c = series.taylor_coefficient(i + 1);
                let rel = (b - c).abs() / c.abs();
                worst_taylor = worst_taylor.max(rel);
                if rel > 1e-8 {
                    taylor_bad += 1;
                }
            }
        }
    }
    (norm_bad, tail_bad, taylor_bad, worst_taylor)
}

fn criterion_6(runs: &[MainRun]) -> Outcome {
    let mut records: Vec<StepRecord> = runs.iter().flat_map(|r| r.state.records.iter().cloned()).collect();
    // inside the certified disc the tail bound is finite for every step
    let mut certified_steps = 0;
    let mut finite_tails = 0;
    for (d, n) in [(1, 4), (2, 2)] {
        for seed in SEEDS {
            let lat = LatticeSpec::new(d, n).unwrap();
            let opts = FlowOptions::default();
            match random_model(lat, 2, 0.004, seed).and_then(|spec| run_flow(&spec, &opts)) {
                Ok(state) => {
                    certified_steps += state.records.len();
                    finite_tails += state.records.iter().filter(|r| r.tail_bound.is_some()).count();
                    records.extend(state.records);
                }
                Err(e) => return outcome(false, format!("t=0.004 d={d} N={n}: {e}")),
            }
        }
    }
    let (norm_bad, tail_bad, taylor_bad, worst_taylor) = majorant_checks(&records);
    outcome(
        norm_bad + tail_bad + taylor_bad == 0 && finite_tails == certified_steps,
        format!(
            "{} steps: ‖(V)_j‖ > B_j at {norm_bad}, residual > tail at {tail_bad}, Taylor mismatch {taylor_bad} (worst rel {worst_taylor:.1e}); certified tails finite on {finite_tails}/{certified_steps} steps at t=0.004",
            records.len()
        ),
    )
}

fn criterion_7(runs: &[MainRun]) -> Outcome {
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for r in runs {
        match norm_decay_audit(&r.state) {
            Ok(audit) => {
                for row in audit.iter().filter(|row| row.enforced) {
                    rows += 1;
                    worst = worst.max(row.ratio);
                    if !row.pass {
                        bad.push(format!("{} r={}", r.label, row.circumference));
                    }
                }
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        bad.is_empty() && rows > 0,
        format!(
            "{rows} rows with r ≥ 2, worst ‖V‖/t^((r−1)/4) {worst:.3}{}",
            if bad.is_empty() { String::new() } else { format!(", failing {bad:?}") }
        ),
    )
}

fn check_order(lat: &LatticeSpec) -> Result<usize, String> {
    let rects = all_rects(lat);
    for a in &rects {
        for b in &rects {
            let (ab, ba) = (compare_step(a, b), compare_step(b, a));
            if ab != ba.reverse() || ((ab == Ordering::Equal) != (a == b)) {
                return Err(format!("order not antisymmetric/total on {a}, {b}"));
            }
        }
    }
    for a in &rects {
        for b in &rects {
            if compare_step(a, b) != Ordering::Less {
                continue;
            }
            for c in &rects {
                if compare_step(b, c) == Ordering::Less && compare_step(a, c) != Ordering::Less {
                    return Err(format!("order not transitive on {a}, {b}, {c}"));
                }
            }
        }
    }
    Ok(rects.len())
}

fn check_minimal_rectangles(lat: &LatticeSpec) -> Result<usize, String> {
    let rects = all_rects(lat);
    let mut pairs = 0;
    for a in &rects {
        for b in rects.iter().filter(|b| b.overlaps(a)) {
            pairs += 1;
            let oracle =
                rects.iter().filter(|c| c.contains(a) && c.contains(b)).min_by_key(|c| c.site_count()).unwrap();
            let got = minimal_rectangle(a, b).map_err(|e| e.to_string())?;
            if &got != oracle {
                return Err(format!("minimal rectangle of {a}, {b}: {got} vs scan {oracle}"));
            }
        }
    }
    Ok(pairs)
}

fn check_shape_counts() -> Result<(), String> {
    for d in 1..=4usize {
        for l in 0..=20usize {
            let c = count_shapes(l, d);
            // brute-force count of k ∈ ℕ^d with |k| = l
            let mut brute = 0u128;
            let mut k = vec![0usize; d];
            loop {
                if k.iter().sum::<usize>() == l {
                    brute += 1;
                }
                let mut i = 0;
                while i < d && k[i] == l {
                    k[i] = 0;
                    i += 1;
                }
                if i == d {
                    break;
                }
                k[i] += 1;
            }
            if c != brute || c > ((l + 1) as u128).pow(d as u32 - 1) {
                return Err(format!("count_shapes({l}, {d}) = {c}, brute force {brute}"));
            }
        }
    }
    Ok(())
}

/// Connected family of equal-size rectangles.
fn random_equal_size_family(lat: &LatticeSpec, rng: &mut ChaCha8Rng) -> Vec<Rect> {
    let size = rng.gen_range(1..=3);
    let pool: Vec<Rect> = all_rects(lat).into_iter().filter(|r| r.circumference() == size).collect();
    let want = rng.gen_range(1..=8);
    let mut fam = vec![pool[rng.gen_range(0..pool.len())].clone()];
    while fam.len() < want {
        let next: Vec<&Rect> = pool.iter().filter(|r| !fam.contains(r) && fam.iter().any(|f| f.overlaps(r))).collect();
        if next.is_empty() {
            break;
        }
        fam.push(next[rng.gen_range(0..next.len())].clone());
    }
    fam
}

fn check_paths() -> Result<(), String> {
    let lat = LatticeSpec::new(2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let fam = random_equal_size_family(&lat, &mut rng);
        let p = closed_path(&fam).map_err(|e| e.to_string())?;
        if p.length() != 2 * fam.len() - 2 || !p.is_closed() || !p.is_valid() {
            return Err(format!("closed path over {} rectangles has length {}", fam.len(), p.length()));
        }
    }
    for _ in 0..100 {
        let n = rng.gen_range(2..=9);
        let fam = random_layered_family(&lat, n, 4, &mut rng);
        let decomp = decompose_components(&fam).map_err(|e| e.to_string())?;
        let gamma = build_gamma(&decomp).map_err(|e| e.to_string())?;
        let props = check_gamma(&gamma, &decomp);
        if !props.all() {
            return Err(format!("path properties fail on {fam:?}: {props:?}"));
        }
    }
    Ok(())
}

fn check_branches() -> Result<(usize, usize), String> {
    let mut expansions = 0;
    let mut branches = 0;
    for (d, n) in [(1, 3), (2, 2)] {
        let lat = LatticeSpec::new(d, n).unwrap();
        for seed in SEEDS {
            let spec = random_model(lat, 2, 0.05, seed).map_err(|e| e.to_string())?;
            let opts = FlowOptions::default();
            for root in enumerate_steps(&lat) {
                let state = run_flow_until(&spec, &opts, Some(&root)).map_err(|e| e.to_string())?;
                for target in all_rects(&lat).into_iter().filter(|t| t.circumference() >= 2) {
                    let ex = enumerate_branches(&target, &root, &state, opts.n_max, 32).map_err(|e| e.to_string())?;
                    if ex.branches.is_empty() {
                        continue;
                    }
                    expansions += 1;
                    branches += ex.branches.len();
                    let p = check_branch_properties(&ex);
                    if !(p.connected && p.spans_target && p.injective && p.descending) || p.incomplete {
                        return Err(format!("branch properties fail for {target} at {root}: {p:?}"));
                    }
                    let stored = state.interactions.get(&target).map(|o| o.matrix.clone());
                    let diff = match stored {
                        Some(s) => (&ex.sum() - &s).iter().map(|z| z.norm()).fold(0.0, f64::max),
                        None => f64::INFINITY,
                    };
                    if diff > 1e-9 {
                        return Err(format!(
                            "branches of {target} at {root} do not sum to the stored potential ({diff:e})"
                        ));
                    }
                    let (lhs, rhs) = weighted_branch_sum(&ex, &state).map_err(|e| e.to_string())?;
                    if lhs > rhs {
                        return Err(format!("weighted bound fails for {target} at {root}: {lhs} > {rhs}"));
                    }
                }
            }
        }
    }
    Ok((expansions, branches))
}

fn criterion_8() -> Outcome {
    let result = (|| -> Result<String, String> {
        let rects = check_order(&LatticeSpec::new(2, 3).unwrap())?;
        let pairs = check_minimal_rectangles(&LatticeSpec::new(2, 4).unwrap())?;
        check_shape_counts()?;
        check_paths()?;
        let (expansions, branches) = check_branches()?;
        Ok(format!(
            "order on {rects} rectangles, {pairs} minimal rectangles, shape counts, 200 path families, {expansions} expansions with {branches} branches"
        ))
    })();
    match result {
        Ok(d) => outcome(true, d),
        Err(e) => outcome(false, e),
    }
}

fn criterion_9(runs: &[MainRun]) -> Outcome {
    let mut differing = Vec::new();
    for r in runs {
        let (d, n, seed, t) = (r.report.run.d, r.report.run.n, r.report.run.fingerprint.seed.unwrap(), r.report.run.t);
        let again = parse_config_str(&main_config(d, n, seed, t))
            .and_then(|l| execute(&l, &Overrides::default()))
            .map(|(rep, _)| serde_json::to_string_pretty(&rep).unwrap());
        match again {
            Ok(json) if json == r.json => {}
            Ok(_) => differing.push(r.label.clone()),
            Err(e) => return outcome(false, format!("{}: {e}", r.label)),
        }
    }
    outcome(
        differing.is_empty() && !runs.is_empty(),
        format!("{} reports rerun, {} differ {differing:?}", runs.len(), differing.len()),
    )
}

fn main() {
    let started = Instant::now();
    let runs = main_runs();
    let (runs, run_error) = match runs {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    let fail_all = |name: &str| -> Option<Outcome> {
        run_error.as_ref().map(|e| outcome(false, format!("{name} needs the main runs, which failed: {e}")))
    };
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "closed-form dimer gap", criterion_1()),
        (
            2,
            "spectrum and gap of the block-diagonal form",
            fail_all("criterion 2").unwrap_or_else(|| criterion_2(&runs)),
        ),
        (3, "per-step consistency", criterion_3()),
        (4, "step gaps and ground energies", fail_all("criterion 4").unwrap_or_else(|| criterion_4(&runs))),
        (5, "projector inequalities", criterion_5()),
        (6, "series majorants", fail_all("criterion 6").unwrap_or_else(|| criterion_6(&runs))),
        (7, "norm decay", fail_all("criterion 7").unwrap_or_else(|| criterion_7(&runs))),
        (8, "combinatorics", criterion_8()),
        (9, "determinism", fail_all("criterion 9").unwrap_or_else(|| criterion_9(&runs))),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("criterion {id} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!(
        "{} of {} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
