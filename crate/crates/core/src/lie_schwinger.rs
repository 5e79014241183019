//! A single local block-diagonalization step.
//!
//! On a rectangle `J` the unperturbed operator `G` is block-diagonal for the
//! split into the local vacuum (basis index 0) and its complement. The
//! generator removes the off-diagonal part of `G + t·v1` order by order in
//! `t`. Because the vacuum block is one-dimensional, every generator term has
//! the rank-two form `x e0† − e0 x†` with `x[0] = 0`.

use ndarray::{s, Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::InteractionMap;
use crate::lattice::Rect;
use crate::tensor::{
    adjoint, eigh, embed_add, expm_antihermitian, norm_bound, op_norm, vector_norm, Layout, LocalOp, C64, ONE, ZERO,
};

/// Largest tolerated vacuum-column leak of `G` before a step.
pub const INNER_DIAGONAL_TOL: f64 = 1e-10;

/// Rank-two anti-Hermitian generator `x e0† − e0 x†` on `rect`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub rect: Rect,
    pub m: usize,
    pub x: Array1<C64>,
}

impl Generator {
    pub fn zero(rect: Rect, m: usize) -> Self {
        let dim = m.pow(rect.site_count() as u32);
        Self { rect, m, x: Array1::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Operator norm, which for this rank-two form is ‖x‖.
    pub fn norm(&self) -> f64 {
        vector_norm(&self.x)
    }

    pub fn is_zero(&self) -> bool {
        self.x.iter().all(|z| *z == ZERO)
    }

    pub fn matrix(&self) -> Array2<C64> {
        let dim = self.dim();
        let mut s = Array2::zeros((dim, dim));
        for i in 1..dim {
            s[[i, 0]] = self.x[i];
            s[[0, i]] = -self.x[i].conj();
        }
        s
    }

    pub fn to_local(&self) -> LocalOp {
        LocalOp { support: self.rect.clone(), m: self.m, matrix: self.matrix() }
    }

    /// e^S in closed form: a rotation by angle ‖x‖ in the plane of e0 and x/‖x‖.
    pub fn unitary(&self) -> Array2<C64> {
        let dim = self.dim();
        let theta = self.norm();
        let mut u = Array2::eye(dim);
        if theta == 0.0 {
            return u;
        }
        let xh = self.x.mapv(|z| z / theta);
        let (c, sn) = (theta.cos() - 1.0, theta.sin());
        u[[0, 0]] += C64::new(c, 0.0);
        for i in 1..dim {
            u[[i, 0]] += xh[i] * sn;
            u[[0, i]] -= xh[i].conj() * sn;
            for j in 1..dim {
                u[[i, j]] += xh[i] * xh[j].conj() * c;
            }
        }
        u
    }

    /// ad S (Y) = SY − YS for `Y` on the generator's own support.
    pub fn ad(&self, y: &Array2<C64>) -> Array2<C64> {
        let dim = self.dim();
        let trivial = Layout { sub: (0..dim).collect(), rest: vec![0] };
        self.ad_embedded(y, &trivial)
    }

    /// ad (S ⊗ 1)(Y) for `Y` on a larger support described by `layout`.
    pub fn ad_embedded(&self, y: &Array2<C64>, layout: &Layout) -> Array2<C64> {
        let dim = y.nrows();
        let mut out = Array2::<C64>::zeros((dim, dim));
        if self.is_zero() {
            return out;
        }
        let nz: Vec<(usize, C64)> =
            (1..self.dim()).filter(|&i| self.x[i] != ZERO).map(|i| (layout.sub[i], self.x[i])).collect();
        for &r in &layout.rest {
            let row0 = y.row(r).to_owned();
            let mut w = Array1::<C64>::zeros(dim);
            for &(si, xi) in &nz {
                w.scaled_add(xi.conj(), &y.row(si + r));
                out.row_mut(si + r).scaled_add(xi, &row0);
            }
            out.row_mut(r).scaled_add(-ONE, &w);
        }
        for &r in &layout.rest {
            let col0 = y.column(r).to_owned();
            let mut u = Array1::<C64>::zeros(dim);
            for &(si, xi) in &nz {
                u.scaled_add(xi, &y.column(si + r));
                out.column_mut(si + r).scaled_add(xi.conj(), &col0);
            }
            out.column_mut(r).scaled_add(-ONE, &u);
        }
        out
    }

    /// Σ_{n=1}^{n_max} ad^n S (Y) / n!, with a bound on the omitted terms.
    pub fn ad_series(&self, y: &Array2<C64>, layout: &Layout, n_max: usize) -> (Array2<C64>, f64) {
        let dim = y.nrows();
        let mut acc = Array2::<C64>::zeros((dim, dim));
        if self.is_zero() {
            return (acc, 0.0);
        }
        let mut term = y.clone();
        for n in 1..=n_max {
            term = self.ad_embedded(&term, layout).mapv(|z| z / n as f64);
            acc += &term;
        }
        (acc, ad_series_tail(norm_bound(y), self.norm(), n_max))
    }
}

/// 2‖Y‖ ‖2S‖^{n+1}/(n+1)! e^{2‖S‖}
pub fn ad_series_tail(y_norm: f64, s_norm: f64, n_max: usize) -> f64 {
    let mut frac = 1.0;
    for k in 1..=(n_max + 1) {
        frac *= 2.0 * s_norm / k as f64;
    }
    2.0 * y_norm * frac * (2.0 * s_norm).exp()
}

/// ad^n A (B)
pub fn adjoint_power(a: &Array2<C64>, b: &Array2<C64>, n: usize) -> Result<Array2<C64>> {
    if a.dim() != b.dim() || a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("ad needs equal square operators, got {:?} and {:?}", a.dim(), b.dim())));
    }
    let mut out = b.clone();
    for _ in 0..n {
        out = a.dot(&out) - out.dot(a);
    }
    Ok(out)
}

/// G_J and E_J: all interactions strictly inside `j`, on-site terms with
/// weight 1 and the rest with weight `t`.
pub fn assemble_g(j: &Rect, interactions: &InteractionMap, t: f64, m: usize) -> Result<(LocalOp, f64)> {
    let mut g = LocalOp::zeros(j.clone(), m);
    for (rect, op) in interactions.iter() {
        if !j.strictly_contains(rect) {
            continue;
        }
        let weight = if rect.circumference() == 0 { 1.0 } else { t };
        let layout = Layout::new(rect, j, m)?;
        embed_add(&mut g.matrix, &op.matrix, &layout, C64::new(weight, 0.0));
    }
    let e0 = g.matrix[[0, 0]].re;
    let leak = vacuum_leak(&g.matrix);
    if leak > INNER_DIAGONAL_TOL * (1.0 + e0.abs()) {
        return Err(Error::NotDiagonalized { rect: j.clone(), norm: leak });
    }
    Ok((g, e0))
}

/// ‖P+ A P−‖ for the rank-one vacuum projection P−, i.e. the norm of column 0 below the diagonal.
pub fn vacuum_leak(a: &Array2<C64>) -> f64 {
    a.slice(s![1.., 0]).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// infspec of G on the range of P+, minus `e0`.
pub fn check_g_gap(g: &LocalOp, e0: f64) -> Result<f64> {
    if g.dim() == 1 {
        return Ok(f64::INFINITY);
    }
    let block = g.matrix.slice(s![1.., 1..]).to_owned();
    let ev = crate::tensor::spectrum(&block)?;
    Ok(ev[0] - e0)
}

#[derive(Clone, Debug, Serialize)]
pub struct MajorantSeries {
    pub a: f64,
    pub b: Vec<f64>,
    pub v1_norm: f64,
    pub radius_lower_bound: f64,
}

/// Root of (e^{8a} − 8a − 1)/a + e^{8a} − 1 = 1, by bisection.
pub fn majorant_constant() -> f64 {
    let f = |a: f64| ((8.0 * a).exp() - 8.0 * a - 1.0) / a + (8.0 * a).exp() - 2.0;
    let (mut lo, mut hi) = (1e-9, 1.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn majorants(v1_norm: f64, j_max: usize) -> MajorantSeries {
    let a = majorant_constant();
    let mut b = vec![v1_norm];
    for j in 2..=j_max {
        let sum: f64 = (1..j).map(|l| b[j - l - 1] * b[l - 1]).sum();
        b.push(sum / a);
    }
    let radius_lower_bound = if v1_norm > 0.0 { a / (4.0 * v1_norm) } else { f64::INFINITY };
    MajorantSeries { a, b, v1_norm, radius_lower_bound }
}

impl MajorantSeries {
    /// f(u) = (a/2)(1 − √(1 − 4‖v1‖u/a)), the generating function of the B_j.
    pub fn generating_function(&self, u: f64) -> f64 {
        0.5 * self.a * (1.0 - (1.0 - 4.0 * self.v1_norm * u / self.a).sqrt())
    }

    /// j-th Taylor coefficient of f, from the binomial series of the square root.
    pub fn taylor_coefficient(&self, j: usize) -> f64 {
        // √(1−z) = Σ binom(1/2, n)(−z)^n
        let mut binom = 1.0;
        for n in 0..j {
            binom *= (0.5 - n as f64) / (n as f64 + 1.0);
        }
        let z_coeff = 4.0 * self.v1_norm / self.a;
        -0.5 * self.a * binom * (-z_coeff).powi(j as i32)
    }

    /// Σ_{j>j_max} t^{j−1} B_j, infinite outside the convergence disc of f.
    ///
    /// Evaluated by summing the series of f directly with a geometric
    /// remainder, since the difference f(t) − Σ_{j≤j_max} B_j t^j cancels
    /// catastrophically once the tail is small.
    pub fn tail(&self, t: f64) -> f64 {
        let t = t.abs();
        if self.v1_norm == 0.0 || t == 0.0 {
            return 0.0;
        }
        if t >= self.radius_lower_bound {
            return f64::INFINITY;
        }
        let j_max = self.b.len();
        let rho = t / self.radius_lower_bound;
        // B_j = a·Cat_{j−1}(‖v1‖/a)^j; consecutive ratio 2(2j−1)/(j+1)·‖v1‖/a < 4‖v1‖/a
        let mut term = *self.b.last().unwrap() * t.powi(j_max as i32 - 1);
        let mut sum = 0.0;
        let mut j = j_max;
        loop {
            let ratio = 2.0 * (2.0 * j as f64 - 1.0) / (j as f64 + 1.0) * self.v1_norm / self.a;
            term *= ratio * t;
            j += 1;
            sum += term;
            if term <= 1e-18 * sum || j > j_max + 100_000 {
                return sum + term * rho / (1.0 - rho);
            }
        }
    }

    /// The same tail from the closed form of f; accurate only while the tail
    /// is not negligible against f(t).
    pub fn closed_form_tail(&self, t: f64) -> f64 {
        let t = t.abs();
        if t >= self.radius_lower_bound {
            return f64::INFINITY;
        }
        let partial: f64 = self.b.iter().enumerate().map(|(i, b)| b * t.powi(i as i32 + 1)).sum();
        (self.generating_function(t) - partial) / t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusPolicy {
    /// Reject any coupling at or above the certified radius a/(4‖v1‖).
    Certified,
    /// Reject only when the observed growth of the series terms says it diverges.
    Estimated,
}

#[derive(Clone, Debug)]
pub struct SeriesOptions {
    pub j_max: usize,
    pub radius_policy: RadiusPolicy,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { j_max: 12, radius_policy: RadiusPolicy::Estimated }
    }
}

#[derive(Clone, Debug)]
pub struct StepOperators {
    pub rect: Rect,
    pub g: LocalOp,
    pub e0: f64,
    pub gap: f64,
    /// The vectors x_j of the generator terms (S)_j, j = 1..=j_max.
    pub s_terms: Vec<Array1<C64>>,
    /// (V)_j, j = 1..=j_max.
    pub v_terms: Vec<Array2<C64>>,
    /// ‖(V)_j‖
    pub v_norms: Vec<f64>,
    pub s_total: Generator,
    pub v_diag_total: Array2<C64>,
    pub majorants: MajorantSeries,
    pub tail_bound: f64,
    pub tail_estimate: f64,
    /// Largest observed t‖(V)_j‖/‖(V)_{j−1}‖ over the second half of the terms.
    pub growth_ratio: f64,
}

impl StepOperators {
    pub fn s_term_matrix(&self, j: usize) -> Array2<C64> {
        Generator { rect: self.rect.clone(), m: self.g.m, x: self.s_terms[j - 1].clone() }.matrix()
    }

    /// Σ_{j≥2} t^j (S)_j
    pub fn higher_order_generator(&self, t: f64) -> Generator {
        let mut x = Array1::zeros(self.s_total.dim());
        for (i, xj) in self.s_terms.iter().enumerate().skip(1) {
            x.scaled_add(C64::new(t.powi(i as i32 + 1), 0.0), xj);
        }
        Generator { rect: self.rect.clone(), m: self.g.m, x }
    }

    /// ‖offdiag(e^S (G + t v1) e^{−S})‖ with e^S from a dense eigen-decomposition.
    pub fn offdiag_residual(&self, v1: &Array2<C64>, t: f64) -> Result<f64> {
        if self.s_total.is_zero() {
            let k = &self.g.matrix + &v1.mapv(|z| z * t);
            return Ok(vacuum_leak(&k));
        }
        let u = expm_antihermitian(&self.s_total.matrix())?;
        let k = &self.g.matrix + &v1.mapv(|z| z * t);
        let rotated = u.dot(&k).dot(&adjoint(&u));
        Ok(vacuum_leak(&rotated))
    }
}

/// Resolvent of G on the range of P+, applied to vectors supported there.
struct Resolvent {
    vecs: Array2<C64>,
    inv: Array1<f64>,
}

impl Resolvent {
    fn new(g: &Array2<C64>, e0: f64) -> Result<(Self, f64)> {
        let block = g.slice(s![1.., 1..]).to_owned();
        let (ev, vecs) = eigh(&block)?;
        let gap = ev[0] - e0;
        if gap < 0.25 {
            log::warn!("gap degradation: lowest excited level of G is {gap} above E_J");
        }
        let inv = Array1::from_iter(ev.iter().map(|l| 1.0 / (l - e0)));
        Ok((Self { vecs, inv }, gap))
    }

    /// x with x[0] = 0 and x[1..] = (G₊₊ − E)^{-1} b[1..]
    fn apply(&self, b: &Array1<C64>) -> Array1<C64> {
        let tail = b.slice(s![1..]).to_owned();
        let mut coeffs = adjoint(&self.vecs).dot(&tail);
        for (c, w) in coeffs.iter_mut().zip(self.inv.iter()) {
            *c *= *w;
        }
        let solved = self.vecs.dot(&coeffs);
        let mut x = Array1::zeros(b.len());
        x.slice_mut(s![1..]).assign(&solved);
        x
    }
}

fn diag_part(a: &Array2<C64>) -> Array2<C64> {
    let mut d = a.clone();
    let n = a.nrows();
    for i in 1..n {
        d[[i, 0]] = ZERO;
        d[[0, i]] = ZERO;
    }
    d
}

/// The generator and transformed potential of one step, truncated at `j_max`.
pub fn lie_schwinger_series(
    rect: &Rect,
    g: &LocalOp,
    e0: f64,
    v1: &Array2<C64>,
    t: f64,
    opts: &SeriesOptions,
) -> Result<StepOperators> {
    let dim = g.dim();
    let m = g.m;
    let j_max = opts.j_max.max(1);
    let v1_bound = norm_bound(v1);
    let v1_norm = if v1_bound == 0.0 { 0.0 } else { crate::tensor::hermitian_norm(v1)? };
    let maj = majorants(v1_norm, j_max);
    if opts.radius_policy == RadiusPolicy::Certified && t.abs() >= maj.radius_lower_bound {
        return Err(Error::OutsideRadius(format!(
            "|t| = {} ≥ a/(4‖v1‖) = {} on {rect}",
            t.abs(),
            maj.radius_lower_bound
        )));
    }

    if dim == 1 {
        return Ok(StepOperators {
            rect: rect.clone(),
            g: g.clone(),
            e0,
            gap: f64::INFINITY,
            s_terms: vec![Array1::zeros(1); j_max],
            v_terms: vec![v1.clone()],
            v_norms: vec![v1_norm],
            s_total: Generator::zero(rect.clone(), m),
            v_diag_total: v1.clone(),
            majorants: maj,
            tail_bound: 0.0,
            tail_estimate: 0.0,
            growth_ratio: 0.0,
        });
    }

    let (resolvent, gap) = Resolvent::new(&g.matrix, e0)?;

    // tg[p][n] = Σ_{r1+…+rp=n} ad S_{r1} ⋯ ad S_{rp} (G), likewise tv with v1.
    // Only n ≥ p entries are nonzero; tg[0] is G at n = 0.
    let mut gens: Vec<Generator> = Vec::with_capacity(j_max);
    let mut tg: Vec<Vec<Option<Array2<C64>>>> = vec![vec![None; j_max + 1]; j_max + 1];
    let mut tv: Vec<Vec<Option<Array2<C64>>>> = vec![vec![None; j_max + 1]; j_max + 1];
    tg[0][0] = Some(g.matrix.clone());
    tv[0][0] = Some(v1.clone());

    let mut v_terms = Vec::with_capacity(j_max);
    let mut v_norms = Vec::with_capacity(j_max);
    let mut s_terms = Vec::with_capacity(j_max);
    let mut factorial = vec![1.0f64; j_max + 2];
    for i in 1..factorial.len() {
        factorial[i] = factorial[i - 1] * i as f64;
    }

    let fill = |table: &mut Vec<Vec<Option<Array2<C64>>>>, gens: &[Generator], p: usize, n: usize| {
        let mut acc: Option<Array2<C64>> = None;
        for r in 1..=n {
            if r > gens.len() {
                break;
            }
            let Some(prev) = table[p - 1][n - r].as_ref() else { continue };
            if gens[r - 1].is_zero() {
                continue;
            }
            let term = gens[r - 1].ad(prev);
            match acc.as_mut() {
                Some(a) => *a += &term,
                None => acc = Some(term),
            }
        }
        table[p][n] = acc;
    };

    for j in 1..=j_max {
        // terms of total order j built from S_1..S_{j-1}
        for p in 2..=j {
            fill(&mut tg, &gens, p, j);
        }
        for p in 1..j {
            fill(&mut tv, &gens, p, j - 1);
        }
        let mut vj = Array2::<C64>::zeros((dim, dim));
        for p in 2..=j {
            if let Some(x) = &tg[p][j] {
                vj.scaled_add(C64::new(1.0 / factorial[p], 0.0), x);
            }
        }
        for p in 0..j {
            if let Some(x) = &tv[p][j - 1] {
                vj.scaled_add(C64::new(1.0 / factorial[p], 0.0), x);
            }
        }
        let b = vj.column(0).to_owned();
        let x = resolvent.apply(&b);
        let gen = Generator { rect: rect.clone(), m, x: x.clone() };
        gens.push(gen);
        // first-order term in the new generator: ad S_j (G)
        fill(&mut tg, &gens, 1, j);
        v_norms.push(op_norm(&vj)?);
        v_terms.push(vj);
        s_terms.push(x);
    }

    let mut x_total = Array1::<C64>::zeros(dim);
    for (i, xj) in s_terms.iter().enumerate() {
        x_total.scaled_add(C64::new(t.powi(i as i32 + 1), 0.0), xj);
    }
    let s_total = Generator { rect: rect.clone(), m, x: x_total };

    let mut v_diag_total = Array2::<C64>::zeros((dim, dim));
    for (i, vj) in v_terms.iter().enumerate() {
        v_diag_total.scaled_add(C64::new(t.powi(i as i32), 0.0), &diag_part(vj));
    }

    let (growth_ratio, tail_estimate) = estimate_tail(&v_norms, t);
    if opts.radius_policy == RadiusPolicy::Estimated && growth_ratio >= 1.0 {
        return Err(Error::OutsideRadius(format!(
            "series terms on {rect} grow by a factor {growth_ratio:.3} per order at t = {t}"
        )));
    }
    let tail_bound = maj.tail(t);

    Ok(StepOperators {
        rect: rect.clone(),
        g: g.clone(),
        e0,
        gap,
        s_terms,
        v_terms,
        v_norms,
        s_total,
        v_diag_total,
        majorants: maj,
        tail_bound,
        tail_estimate,
        growth_ratio,
    })
}

/// Geometric extrapolation of Σ_{j>j_max} t^{j−1}‖(V)_j‖ from the last terms.
fn estimate_tail(v_norms: &[f64], t: f64) -> (f64, f64) {
    let n = v_norms.len();
    if n < 2 || t == 0.0 {
        return (0.0, 0.0);
    }
    let start = (n / 2).max(1);
    let mut ratio: f64 = 0.0;
    for j in start..n {
        let (prev, cur) = (v_norms[j - 1], v_norms[j]);
        if prev > 1e-300 && cur > 0.0 {
            ratio = ratio.max(t.abs() * cur / prev);
        }
    }
    let last = v_norms[n - 1] * t.abs().powi(n as i32 - 1);
    if last == 0.0 {
        return (ratio, 0.0);
    }
    if ratio >= 1.0 {
        return (ratio, f64::INFINITY);
    }
    (ratio, last * ratio / (1.0 - ratio))
}
