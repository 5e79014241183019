//! The global driver: one local step per rectangle, in step order.
//!
//! At step `J` the potential stored on `J` is replaced by its block-diagonal
//! transform, and the conjugation by e^{S_J} is pushed onto every larger
//! rectangle `T ⊋ J` that is either already populated or is the minimal
//! rectangle of `J` with a populated rectangle crossing it. All other entries
//! commute with S_J and stay as they are.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bounding_rect, successor, LatticeSpec, Rect};
use crate::lie_schwinger::{
    assemble_g, check_g_gap, lie_schwinger_series, vacuum_leak, Generator, RadiusPolicy, SeriesOptions, StepOperators,
};
use crate::model::{initial_interactions, ModelSpec};
use crate::tensor::{
    adjoint, embed_add, embed_matrix, expm_antihermitian, frobenius, hermitian_norm, norm_bound, spectrum, Layout,
    LocalOp, C64,
};

pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Rectangle → potential. Absent keys are zero.
#[derive(Clone, Debug, Default)]
pub struct InteractionMap {
    entries: BTreeMap<Rect, LocalOp>,
}

impl InteractionMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `op` under its support, or drops the key if `op` is negligible.
    pub fn insert(&mut self, op: LocalOp) {
        if frobenius(&op.matrix) < PRUNE_THRESHOLD {
            self.entries.remove(&op.support);
        } else {
            self.entries.insert(op.support.clone(), op);
        }
    }

    pub fn get(&self, r: &Rect) -> Option<&LocalOp> {
        self.entries.get(r)
    }

    pub fn remove(&mut self, r: &Rect) -> Option<LocalOp> {
        self.entries.remove(r)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Rect, &LocalOp)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Rect> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyMode {
    Never,
    Final,
    EveryStep,
}

impl ConsistencyMode {
    pub fn default_for(lat: &LatticeSpec) -> Self {
        if lat.n <= 3 {
            ConsistencyMode::EveryStep
        } else {
            ConsistencyMode::Final
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub series: SeriesOptions,
    pub n_max: usize,
    pub force: bool,
    pub consistency: ConsistencyMode,
    /// Abort threshold for consistency residuals and series truncation estimates.
    pub tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            series: SeriesOptions::default(),
            n_max: 20,
            force: false,
            consistency: ConsistencyMode::Never,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    R1,
    R2,
    R3,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::R1 => "R1",
            Regime::R2 => "R2",
            Regime::R3 => "R3",
        }
    }
}

fn floor_fourth_root(r: usize) -> usize {
    let mut f = 0usize;
    while (f + 1).pow(4) <= r {
        f += 1;
    }
    f
}

/// Size class of a step rectangle relative to a target rectangle.
pub fn regime_of(step: &Rect, target: &Rect) -> Regime {
    let k = step.circumference();
    let r = target.circumference();
    let f = floor_fourth_root(r);
    if k <= f {
        Regime::R1
    } else if k + f >= r {
        Regime::R3
    } else {
        Regime::R2
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub index: usize,
    pub rect: Rect,
    pub circumference: usize,
    pub g_gap: f64,
    pub e0: f64,
    /// t·Σ⟨Ω, V_T Ω⟩ over the entries strictly inside the step rectangle.
    pub e0_expected: f64,
    /// Lowest eigenvalue of G from a dense eigensolve.
    pub g_ground: f64,
    pub s_norm: f64,
    pub v1_norm: f64,
    /// Norms of the series terms (V)_j.
    pub v_norms: Vec<f64>,
    pub majorants: Vec<f64>,
    pub radius_lower_bound: f64,
    /// Certified tail Σ_{j>j_max} t^{j−1} B_j; `None` outside the certified disc.
    pub tail_bound: Option<f64>,
    pub tail_estimate: f64,
    pub growth_ratio: f64,
    /// ‖P+ e^S (G + t v1) e^{−S} P−‖ on the step rectangle.
    pub offdiag_residual: f64,
    /// Largest omitted-term bound of the ad-series over the updated rectangles.
    pub ad_tail: f64,
    pub targets: usize,
    /// (e^{2‖S‖} − 1)/(|t|‖v1‖), the per-step constant bounding ‖A_J‖.
    pub commutator_constant: Option<f64>,
    /// ‖Σ_{j≥2} t^j (S)_j‖/(t²‖v1‖²)
    pub higher_order_ratio: Option<f64>,
    pub consistency_residual: Option<f64>,
    pub regime: Regime,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub lat: LatticeSpec,
    pub m: usize,
    pub t: f64,
    /// Last completed step; the initial key before any step.
    pub step: Rect,
    pub interactions: InteractionMap,
    pub initial: InteractionMap,
    pub generator_log: Vec<Generator>,
    /// Block-diagonal potential produced at each step, by step rectangle.
    pub diagonalized: BTreeMap<Rect, LocalOp>,
    pub records: Vec<StepRecord>,
    /// Largest norm seen per circumference over all entries touched by any step.
    pub norm_history: BTreeMap<usize, f64>,
    pub final_consistency_residual: Option<f64>,
}

impl FlowState {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let map = initial_interactions(spec)?;
        let mut norm_history = BTreeMap::new();
        for (r, op) in map.iter() {
            if r.circumference() >= 1 {
                let n = hermitian_norm(&op.matrix)?;
                let e = norm_history.entry(r.circumference()).or_insert(0.0f64);
                *e = e.max(n);
            }
        }
        Ok(Self {
            lat: spec.lat,
            m: spec.m(),
            t: spec.t,
            step: spec.lat.initial(),
            initial: map.clone(),
            interactions: map,
            generator_log: Vec::new(),
            diagonalized: BTreeMap::new(),
            records: Vec::new(),
            norm_history,
            final_consistency_residual: None,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.step == self.lat.full()
    }

    pub fn generator(&self, rect: &Rect) -> Option<&Generator> {
        self.generator_log.iter().find(|g| &g.rect == rect)
    }

    fn note_norm(&mut self, rect: &Rect, op: &Array2<C64>) -> Result<()> {
        let r = rect.circumference();
        if r == 0 || frobenius(op) < PRUNE_THRESHOLD {
            return Ok(());
        }
        let bound = self.t.abs().powf((r as f64 - 1.0) / 4.0);
        let cheap = norm_bound(op);
        let value = if r >= 2 && cheap <= bound { cheap } else { hermitian_norm(op)? };
        let e = self.norm_history.entry(r).or_insert(0.0);
        *e = e.max(value);
        Ok(())
    }
}

/// Runs one step on `j`, which must be the successor of the state's last step.
pub fn apply_step(state: &mut FlowState, j: &Rect, opts: &FlowOptions) -> Result<StepOperators> {
    match successor(&state.step, &state.lat) {
        Some(next) if &next == j => {}
        _ => {
            return Err(Error::Precondition(format!("{j} is not the step following {}", state.step)));
        }
    }
    let (m, t) = (state.m, state.t);
    let (g, e0) = assemble_g(j, &state.interactions, t, m)?;
    let gap = check_g_gap(&g, e0)?;
    let g_ground = spectrum(&g.matrix)?[0];
    if gap < 0.5 && !opts.force {
        return Err(Error::GapViolation { rect: j.clone(), gap });
    }
    let e0_expected: f64 = t * state
        .interactions
        .iter()
        .filter(|(r, _)| j.strictly_contains(r) && r.circumference() >= 1)
        .map(|(_, op)| op.matrix[[0, 0]].re)
        .sum::<f64>();

    let v1 = state.interactions.get(j).map(|op| op.matrix.clone()).unwrap_or_else(|| Array2::zeros((g.dim(), g.dim())));
    let ops = lie_schwinger_series(j, &g, e0, &v1, t, &opts.series)?;
    let estimate = match opts.series.radius_policy {
        RadiusPolicy::Certified => ops.tail_bound,
        RadiusPolicy::Estimated => ops.tail_estimate,
    };
    if estimate > opts.tol {
        return Err(Error::Truncation { rect: j.clone(), tail: estimate, tol: opts.tol });
    }
    let offdiag_residual = ops.offdiag_residual(&v1, t)?;

    // rectangles strictly containing J, and minimal rectangles of J with crossing entries
    let mut targets: BTreeMap<Rect, Array2<C64>> = BTreeMap::new();
    let mut ad_tail: f64 = 0.0;
    if !ops.s_total.is_zero() {
        for (rect, op) in state.interactions.iter() {
            let target = if rect.strictly_contains(j) {
                rect.clone()
            } else if rect.crosses(j) {
                bounding_rect([rect, j])
            } else {
                continue;
            };
            let layout = Layout::new(rect, &target, m)?;
            let acc = targets.entry(target).or_insert_with_key(|k| {
                let dim = m.pow(k.site_count() as u32);
                Array2::zeros((dim, dim))
            });
            embed_add(acc, &op.matrix, &layout, C64::new(1.0, 0.0));
        }
        let mut updates = Vec::with_capacity(targets.len());
        for (target, y) in &targets {
            let layout = Layout::new(j, target, m)?;
            let (a, tail) = ops.s_total.ad_series(y, &layout, opts.n_max);
            ad_tail = ad_tail.max(tail);
            let mut v =
                state.interactions.get(target).map(|op| op.matrix.clone()).unwrap_or_else(|| Array2::zeros(a.dim()));
            v += &a;
            updates.push(LocalOp { support: target.clone(), m, matrix: v });
        }
        for op in updates {
            state.note_norm(&op.support, &op.matrix)?;
            state.interactions.insert(op);
        }
    }

    let diag = LocalOp { support: j.clone(), m, matrix: ops.v_diag_total.clone() };
    state.note_norm(j, &diag.matrix)?;
    state.interactions.insert(diag.clone());
    state.diagonalized.insert(j.clone(), diag);
    state.generator_log.push(ops.s_total.clone());
    state.step = j.clone();

    let v1_norm = ops.majorants.v1_norm;
    let s_norm = ops.s_total.norm();
    let tv = t.abs() * v1_norm;
    let record = StepRecord {
        index: state.records.len(),
        rect: j.clone(),
        circumference: j.circumference(),
        g_gap: gap,
        e0,
        e0_expected,
        g_ground,
        s_norm,
        v1_norm,
        v_norms: ops.v_norms.clone(),
        majorants: ops.majorants.b.clone(),
        radius_lower_bound: ops.majorants.radius_lower_bound,
        tail_bound: ops.tail_bound.is_finite().then_some(ops.tail_bound),
        tail_estimate: ops.tail_estimate,
        growth_ratio: ops.growth_ratio,
        offdiag_residual,
        ad_tail,
        targets: targets.len(),
        commutator_constant: (tv > 0.0).then(|| ((2.0 * s_norm).exp() - 1.0) / tv),
        higher_order_ratio: (tv > 0.0).then(|| ops.higher_order_generator(t).norm() / (tv * tv)),
        consistency_residual: None,
        regime: regime_of(j, &state.lat.full()),
    };
    state.records.push(record);
    Ok(ops)
}

/// Σ_i H_i + t Σ_J V_J on the full lattice.
pub fn assemble_hamiltonian(state: &FlowState) -> Result<LocalOp> {
    assemble_map(&state.interactions, &state.lat, state.m, state.t)
}

pub fn assemble_map(map: &InteractionMap, lat: &LatticeSpec, m: usize, t: f64) -> Result<LocalOp> {
    let full = lat.full();
    let mut k = LocalOp::zeros(full.clone(), m);
    for (rect, op) in map.iter() {
        let weight = if rect.circumference() == 0 { 1.0 } else { t };
        let layout = Layout::new(rect, &full, m)?;
        embed_add(&mut k.matrix, &op.matrix, &layout, C64::new(weight, 0.0));
    }
    Ok(k)
}

/// Dense e^{S} of a step generator on the full lattice, from an eigen-decomposition.
pub fn global_unitary(gen: &Generator, lat: &LatticeSpec) -> Result<Array2<C64>> {
    let local = expm_antihermitian(&gen.matrix())?;
    let layout = Layout::new(&gen.rect, &lat.full(), gen.m)?;
    Ok(embed_matrix(&local, &layout))
}

/// ‖K_after − U K_before U†‖ (an upper bound on the operator norm) with U the
/// dense global exponential of the step generator.
pub fn consistency_check(
    before: &InteractionMap,
    after: &InteractionMap,
    gen: &Generator,
    lat: &LatticeSpec,
    t: f64,
) -> Result<f64> {
    let k_before = assemble_map(before, lat, gen.m, t)?.matrix;
    let k_after = assemble_map(after, lat, gen.m, t)?.matrix;
    let u = global_unitary(gen, lat)?;
    let conj = u.dot(&k_before).dot(&adjoint(&u));
    Ok(norm_bound(&(k_after - conj)))
}

pub fn run_flow(spec: &ModelSpec, opts: &FlowOptions) -> Result<FlowState> {
    run_flow_until(spec, opts, None)
}

/// Runs the flow up to and including `stop`, or to the end.
pub fn run_flow_until(spec: &ModelSpec, opts: &FlowOptions, stop: Option<&Rect>) -> Result<FlowState> {
    spec.validate()?;
    let mut state = FlowState::new(spec)?;
    let steps = crate::lattice::enumerate_steps(&spec.lat);
    for j in &steps {
        let before = (opts.consistency == ConsistencyMode::EveryStep).then(|| state.interactions.clone());
        apply_step(&mut state, j, opts)?;
        if let Some(before) = before {
            let gen = state.generator_log.last().unwrap();
            let residual = consistency_check(&before, &state.interactions, gen, &state.lat, state.t)?;
            state.records.last_mut().unwrap().consistency_residual = Some(residual);
            if residual > opts.tol {
                return Err(Error::Consistency { rect: j.clone(), residual, tol: opts.tol });
            }
        }
        if stop == Some(j) {
            break;
        }
    }
    if opts.consistency == ConsistencyMode::Final {
        let residual = final_consistency(spec, &state)?;
        state.final_consistency_residual = Some(residual);
        if residual > opts.tol {
            return Err(Error::Consistency { rect: state.step.clone(), residual, tol: opts.tol });
        }
    }
    Ok(state)
}

/// ‖K̃ − U K U†‖ with U the ordered product of all dense step exponentials.
pub fn final_consistency(spec: &ModelSpec, state: &FlowState) -> Result<f64> {
    let k = crate::model::build_hamiltonian(spec)?.matrix;
    let dim = k.nrows();
    let mut u = Array2::<C64>::eye(dim);
    for gen in &state.generator_log {
        if gen.is_zero() {
            continue;
        }
        u = global_unitary(gen, &state.lat)?.dot(&u);
    }
    let conj = u.dot(&k).dot(&adjoint(&u));
    let k_tilde = assemble_hamiltonian(state)?.matrix;
    Ok(norm_bound(&(k_tilde - conj)))
}

/// Largest ‖P+_J V_J P−_J‖ over entries whose step is complete.
pub fn max_processed_leak(state: &FlowState) -> f64 {
    state
        .interactions
        .iter()
        .filter(|(r, _)| r.circumference() >= 1 && *r <= &state.step)
        .map(|(_, op)| vacuum_leak(&op.matrix))
        .fold(0.0, f64::max)
}
