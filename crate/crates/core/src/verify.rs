//! Checks on a completed flow: the spectral statements about the transformed
//! Hamiltonian, the projector inequalities behind the gap estimate, and the
//! norm decay of effective potentials.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::flow::{assemble_hamiltonian, FlowState, StepRecord};
use crate::lattice::{all_rects, rects_inside, LatticeSpec, Rect};
use crate::model::{build_hamiltonian, ModelSpec};
use crate::tensor::{eigh, hermitian_norm, spectrum};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance of the projector inequalities.
pub const PROJECTOR_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct Clause {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Clause {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value <= bound }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value >= bound }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralCheck {
    pub spectrum_k: Vec<f64>,
    pub spectrum_k_tilde: Vec<f64>,
    pub ground_energy: f64,
    /// Second distinct level of K̃ minus the ground energy.
    pub gap: f64,
    pub gap_from_k: f64,
    /// λ1 − λ0 of K̃ counted with multiplicity.
    pub separation: f64,
    /// ‖P_vac K̃ P_vac^⊥‖
    pub offdiag_norm: f64,
    pub spectrum_mismatch: f64,
    /// |⟨Ω, ψ0⟩|² for the ground vector ψ0 of K̃.
    pub vacuum_overlap: f64,
    pub clauses: Vec<Clause>,
    pub pass: bool,
}

fn second_distinct(spec: &[f64]) -> f64 {
    let e0 = spec[0];
    let scale = 1e-9 * (1.0 + e0.abs());
    spec.iter().copied().find(|x| x - e0 > scale).map(|x| x - e0).unwrap_or(0.0)
}

/// Dense check of the block-diagonal Hamiltonian against the original one.
///
/// `gap_tol` is subtracted from 1/2 in the gap clauses, `tol` bounds the
/// residuals.
pub fn verify_spectrum(spec: &ModelSpec, state: &FlowState, tol: f64, gap_tol: f64) -> Result<SpectralCheck> {
    let k = build_hamiltonian(spec)?;
    let kt = assemble_hamiltonian(state)?;
    let spectrum_k = spectrum(&k.matrix)?;
    let (spectrum_k_tilde, vecs) = eigh(&kt.matrix)?;
    let ground_energy = spectrum_k_tilde[0];
    let gap = second_distinct(&spectrum_k_tilde);
    let gap_from_k = second_distinct(&spectrum_k);
    let separation = if spectrum_k_tilde.len() > 1 { spectrum_k_tilde[1] - spectrum_k_tilde[0] } else { f64::INFINITY };
    let offdiag_norm = crate::lie_schwinger::vacuum_leak(&kt.matrix);
    let spectrum_mismatch = spectrum_k.iter().zip(&spectrum_k_tilde).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let vacuum_overlap = vecs[[0, 0]].norm_sqr();

    let clauses = vec![
        Clause::at_least("unique ground state", separation, 0.5 - gap_tol),
        Clause::at_least("gap", gap, 0.5 - gap_tol),
        Clause::at_most("vacuum off-diagonal block", offdiag_norm, tol),
        Clause::at_most("spectrum mismatch", spectrum_mismatch, tol),
        Clause::at_most("gap from K vs K~", (gap - gap_from_k).abs(), tol),
        Clause::at_least("vacuum overlap", vacuum_overlap, 1.0 - tol),
    ];
    let pass = clauses.iter().all(|c| c.pass);
    Ok(SpectralCheck {
        spectrum_k,
        spectrum_k_tilde,
        ground_energy,
        gap,
        gap_from_k,
        separation,
        offdiag_norm,
        spectrum_mismatch,
        vacuum_overlap,
        clauses,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepAudit {
    pub min_g_gap: f64,
    /// Largest |lowest eigenvalue of G − t·Σ⟨V⟩| over the steps.
    pub max_energy_error: f64,
    pub max_consistency_residual: Option<f64>,
    pub max_offdiag_residual: f64,
    /// Steps with some ‖(V)_j‖ above its majorant B_j.
    pub majorant_violations: Vec<usize>,
    /// Steps whose off-diagonal residual exceeds a finite certified tail.
    pub tail_violations: Vec<usize>,
    pub max_commutator_constant: f64,
    pub max_higher_order_ratio: f64,
}

pub fn step_audit(records: &[StepRecord]) -> StepAudit {
    let mut out = StepAudit {
        min_g_gap: f64::INFINITY,
        max_energy_error: 0.0,
        max_consistency_residual: None,
        max_offdiag_residual: 0.0,
        majorant_violations: Vec::new(),
        tail_violations: Vec::new(),
        max_commutator_constant: 0.0,
        max_higher_order_ratio: 0.0,
    };
    for r in records {
        out.min_g_gap = out.min_g_gap.min(r.g_gap);
        out.max_energy_error = out.max_energy_error.max((r.g_ground - r.e0_expected).abs());
        if let Some(c) = r.consistency_residual {
            out.max_consistency_residual = Some(out.max_consistency_residual.unwrap_or(0.0).max(c));
        }
        out.max_offdiag_residual = out.max_offdiag_residual.max(r.offdiag_residual);
        if r.v_norms.iter().zip(&r.majorants).any(|(v, b)| *v > b * (1.0 + 1e-10) + 1e-14) {
            out.majorant_violations.push(r.index);
        }
        if let Some(tail) = r.tail_bound {
            if r.offdiag_residual > tail + 1e-14 {
                out.tail_violations.push(r.index);
            }
        }
        out.max_commutator_constant = out.max_commutator_constant.max(r.commutator_constant.unwrap_or(0.0));
        out.max_higher_order_ratio = out.max_higher_order_ratio.max(r.higher_order_ratio.unwrap_or(0.0));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct NormAuditRow {
    pub circumference: usize,
    pub max_norm: f64,
    pub bound: f64,
    pub ratio: f64,
    /// Rows of circumference 1 are reported only.
    pub enforced: bool,
    pub pass: bool,
}

/// Largest norm seen on each circumference during the flow, against t^{(r−1)/4}.
pub fn norm_decay_audit(state: &FlowState) -> Result<Vec<NormAuditRow>> {
    let mut maxima: BTreeMap<usize, f64> = state.norm_history.clone();
    for (r, op) in state.interactions.iter() {
        let c = r.circumference();
        if c == 0 {
            continue;
        }
        let n = hermitian_norm(&op.matrix)?;
        let e = maxima.entry(c).or_insert(0.0);
        *e = e.max(n);
    }
    let t = state.t.abs();
    Ok(maxima
        .into_iter()
        .map(|(r, max_norm)| {
            let bound = t.powf((r as f64 - 1.0) / 4.0);
            let enforced = r >= 2;
            let ratio = if bound > 0.0 {
                max_norm / bound
            } else if max_norm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            NormAuditRow { circumference: r, max_norm, bound, ratio, enforced, pass: !enforced || max_norm <= bound }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InequalityKind {
    /// Σ_j P⊥_j − P+_J on one rectangle.
    SingleRectangle,
    /// Π(l_j+1) Σ P⊥ − Σ_placements P+ on a container.
    PlacementsSharp,
    /// (|l|+1)^d Σ P⊥ − Σ_placements P+ on a container.
    Placements,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub kind: InequalityKind,
    pub container: Rect,
    pub shape: Option<Vec<usize>>,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Sites of `inner` as bit positions within `outer`.
fn site_mask(inner: &Rect, outer: &Rect) -> u64 {
    inner.sites().iter().fold(0u64, |m, x| m | (1 << outer.site_index(x)))
}

/// All operators in the suite are diagonal in the product basis, and their
/// diagonal entries depend only on which sites are excited, so the smallest
/// eigenvalue is a minimum over excitation patterns.
fn min_over_patterns(sites: usize, f: impl Fn(u64) -> f64) -> f64 {
    (0u64..(1u64 << sites)).map(f).fold(f64::INFINITY, f64::min)
}

/// Projector inequalities on every rectangle of `lat` with at most `max_sites` sites.
pub fn inequality_suite(lat: &LatticeSpec, max_sites: usize) -> Vec<InequalityCheck> {
    assert!(max_sites < 64);
    let d = lat.d;
    let mut out = Vec::new();
    for j in all_rects(lat).into_iter().filter(|r| r.site_count() <= max_sites) {
        let n = j.site_count();
        let min_eigenvalue = min_over_patterns(n, |p| p.count_ones() as f64 - (p != 0) as u8 as f64);
        out.push(InequalityCheck {
            kind: InequalityKind::SingleRectangle,
            container: j.clone(),
            shape: None,
            min_eigenvalue,
            pass: min_eigenvalue >= -PROJECTOR_TOL,
        });

        let mut by_shape: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
        for inner in rects_inside(&j) {
            by_shape.entry(inner.k.clone()).or_default().push(site_mask(&inner, &j));
        }
        for (shape, masks) in by_shape {
            let placed = |p: u64| masks.iter().filter(|m| p & **m != 0).count() as f64;
            let sharp: f64 = shape.iter().map(|l| (l + 1) as f64).product();
            let coarse = ((shape.iter().sum::<usize>() + 1) as f64).powi(d as i32);
            for (kind, weight) in [(InequalityKind::PlacementsSharp, sharp), (InequalityKind::Placements, coarse)] {
                let min_eigenvalue = min_over_patterns(n, |p| weight * p.count_ones() as f64 - placed(p));
                out.push(InequalityCheck {
                    kind,
                    container: j.clone(),
                    shape: Some(shape.clone()),
                    min_eigenvalue,
                    pass: min_eigenvalue >= -PROJECTOR_TOL,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Fingerprint {
    pub spec_hash: String,
    pub seed: Option<u64>,
}

/// SHA-256 over the lattice, coupling and every matrix entry of the model.
pub fn fingerprint(spec: &ModelSpec) -> Fingerprint {
    let mut h = Sha256::new();
    for x in [spec.lat.d, spec.lat.n, spec.m(), spec.max_range] {
        h.update((x as u64).to_le_bytes());
    }
    h.update(spec.t.to_le_bytes());
    let feed = |h: &mut Sha256, a: &ndarray::Array2<crate::tensor::C64>| {
        for z in a.iter() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    };
    feed(&mut h, &spec.onsite_h);
    for (r, v) in &spec.potentials {
        for x in r.k.iter().chain(&r.q) {
            h.update((*x as u64).to_le_bytes());
        }
        feed(&mut h, v);
    }
    let digest = h.finalize();
    Fingerprint { spec_hash: digest.iter().map(|b| format!("{b:02x}")).collect(), seed: spec.rng_seed }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormAuditSummary {
    pub rows: Vec<NormAuditRow>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisFlags {
    pub gaps_at_least_half: bool,
    pub energies_match: bool,
    pub norm_decay: bool,
    pub majorants_hold: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub status: String,
    pub fingerprint: Fingerprint,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub steps: Vec<StepRecord>,
    pub step_audit: StepAudit,
    pub final_consistency_residual: Option<f64>,
    pub norm_audit: NormAuditSummary,
    pub spectral: SpectralCheck,
    pub hypotheses: HypothesisFlags,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerance on |lowest eigenvalue of G − t·Σ⟨V⟩|.
pub const ENERGY_TOL: f64 = 1e-10;

pub fn build_report(spec: &ModelSpec, state: &FlowState, tol: f64, gap_tol: f64) -> Result<RunReport> {
    let spectral = verify_spectrum(spec, state, tol, gap_tol)?;
    let audit = step_audit(&state.records);
    let rows = norm_decay_audit(state)?;
    let norm_pass = rows.iter().all(|r| r.pass);
    let hypotheses = HypothesisFlags {
        gaps_at_least_half: audit.min_g_gap >= 0.5,
        energies_match: audit.max_energy_error <= ENERGY_TOL,
        norm_decay: norm_pass,
        majorants_hold: audit.majorant_violations.is_empty(),
    };
    let mut failures: Vec<String> = spectral
        .clauses
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {:e} against bound {:e}", c.name, c.value, c.bound))
        .collect();
    if !hypotheses.gaps_at_least_half {
        failures.push(format!("smallest step gap {} below 1/2", audit.min_g_gap));
    }
    if !hypotheses.energies_match {
        failures.push(format!("step ground energy off by {:e}", audit.max_energy_error));
    }
    if let Some(res) = state.final_consistency_residual.filter(|r| *r > tol) {
        failures.push(format!("final consistency residual {res:e}"));
    }
    let status = if failures.is_empty() { "pass" } else { "fail" }.to_string();
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        status,
        fingerprint: fingerprint(spec),
        d: spec.lat.d,
        n: spec.lat.n,
        m: spec.m(),
        t: spec.t,
        steps: state.records.clone(),
        step_audit: audit,
        final_consistency_residual: state.final_consistency_residual,
        norm_audit: NormAuditSummary { rows, pass: norm_pass },
        spectral,
        hypotheses,
        failures,
    })
}
