//! Operators on tensor products of site spaces, and the maps that move them
//! between supports.
//!
//! Every support uses the same basis convention: sites in lexicographic order,
//! the first site the most significant Kronecker factor, and the vacuum state
//! at basis index 0 of every site.

use ndarray::ShapeBuilder;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{EigValsh, Eigh, SVD, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, Rect};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpace {
    pub m: usize,
}

impl SiteSpace {
    pub const OMEGA_INDEX: usize = 0;

    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Model(format!("on-site dimension M must be at least 2, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn dim_of(&self, r: &Rect) -> usize {
        self.m.pow(r.site_count() as u32)
    }
}

/// A dense operator supported on a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    pub support: Rect,
    pub m: usize,
    pub matrix: Array2<C64>,
}

impl LocalOp {
    pub fn new(support: Rect, m: usize, matrix: Array2<C64>) -> Result<Self> {
        let dim = m.pow(support.site_count() as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "operator on {support} needs a {dim}x{dim} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { support, m, matrix })
    }

    pub fn zeros(support: Rect, m: usize) -> Self {
        let dim = m.pow(support.site_count() as u32);
        Self { support, m, matrix: Array2::zeros((dim, dim)) }
    }

    pub fn identity(support: Rect, m: usize) -> Self {
        let dim = m.pow(support.site_count() as u32);
        Self { support, m, matrix: Array2::eye(dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { support: self.support.clone(), m: self.m, matrix: adjoint(&self.matrix) }
    }

    pub fn embed(&self, into: &Rect) -> Result<Self> {
        embed(self, into)
    }

    pub fn norm(&self) -> Result<f64> {
        op_norm(&self.matrix)
    }
}

/// Index maps for an inner support `S` inside an outer support `T`: the
/// outer basis index of (inner state `s`, remaining state `r`) is
/// `sub[s] + rest[r]`.
#[derive(Clone, Debug)]
pub struct Layout {
    pub sub: Vec<usize>,
    pub rest: Vec<usize>,
}

impl Layout {
    pub fn new(inner: &Rect, outer: &Rect, m: usize) -> Result<Self> {
        if !outer.contains(inner) {
            return Err(Error::NotContained { support: inner.clone(), into: outer.clone() });
        }
        let outer_sites = outer.sites();
        let n_out = outer_sites.len();
        let stride = |pos: usize| m.pow((n_out - 1 - pos) as u32);
        let mut inner_pos = Vec::new();
        let mut rest_pos = Vec::new();
        for (p, x) in outer_sites.iter().enumerate() {
            if inner.contains_site(x) {
                inner_pos.push(p);
            } else {
                rest_pos.push(p);
            }
        }
        let offsets = |positions: &[usize]| -> Vec<usize> {
            let count = m.pow(positions.len() as u32);
            (0..count)
                .map(|mut s| {
                    let mut off = 0;
                    for &p in positions.iter().rev() {
                        off += (s % m) * stride(p);
                        s /= m;
                    }
                    off
                })
                .collect()
        };
        Ok(Self { sub: offsets(&inner_pos), rest: offsets(&rest_pos) })
    }

    pub fn inner_dim(&self) -> usize {
        self.sub.len()
    }

    pub fn outer_dim(&self) -> usize {
        self.sub.len() * self.rest.len()
    }
}

pub fn embed(op: &LocalOp, into: &Rect) -> Result<LocalOp> {
    if &op.support == into {
        return Ok(op.clone());
    }
    let layout = Layout::new(&op.support, into, op.m)?;
    Ok(LocalOp { support: into.clone(), m: op.m, matrix: embed_matrix(&op.matrix, &layout) })
}

pub fn embed_matrix(a: &Array2<C64>, layout: &Layout) -> Array2<C64> {
    let dim = layout.outer_dim();
    let mut out = Array2::zeros((dim, dim));
    for &r in &layout.rest {
        for (i, &si) in layout.sub.iter().enumerate() {
            for (j, &sj) in layout.sub.iter().enumerate() {
                out[[si + r, sj + r]] = a[[i, j]];
            }
        }
    }
    out
}

/// Adds `scale * (a ⊗ 1)` into `acc`.
pub fn embed_add(acc: &mut Array2<C64>, a: &Array2<C64>, layout: &Layout, scale: C64) {
    for &r in &layout.rest {
        for (i, &si) in layout.sub.iter().enumerate() {
            for (j, &sj) in layout.sub.iter().enumerate() {
                acc[[si + r, sj + r]] += scale * a[[i, j]];
            }
        }
    }
}

pub fn projector_minus(j: &Rect, m: usize) -> LocalOp {
    let mut p = LocalOp::zeros(j.clone(), m);
    p.matrix[[0, 0]] = ONE;
    p
}

pub fn projector_plus(j: &Rect, m: usize) -> LocalOp {
    let mut p = LocalOp::identity(j.clone(), m);
    p.matrix[[0, 0]] = ZERO;
    p
}

pub fn vacuum_projector(lat: &LatticeSpec, m: usize) -> LocalOp {
    projector_minus(&lat.full(), m)
}

/// Projection onto the non-vacuum states of a single site.
pub fn site_excitation(site: &[usize], m: usize) -> LocalOp {
    let mut p = LocalOp::identity(Rect::point(site.to_vec()), m);
    p.matrix[[0, 0]] = ZERO;
    p
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let z = a[[i, j]];
            if z != ZERO {
                out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]).assign(&b.mapv(|w| z * w));
            }
        }
    }
    out
}

pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vector_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn op_norm(a: &Array2<C64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.iter().all(|z| *z == ZERO) {
        return Ok(0.0);
    }
    let (_, sv, _) = packed(a).svd(false, false)?;
    Ok(sv.iter().cloned().fold(0.0, f64::max))
}

/// Operator norm of a Hermitian matrix from its spectrum.
pub fn hermitian_norm(a: &Array2<C64>) -> Result<f64> {
    if a.iter().all(|z| *z == ZERO) {
        return Ok(0.0);
    }
    let ev = packed(a).eigvalsh(UPLO::Lower)?;
    Ok(ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Cheap upper bound on the operator norm: the smaller of the Frobenius norm
/// and sqrt(‖A‖₁‖A‖∞).
pub fn norm_bound(a: &Array2<C64>) -> f64 {
    let row_max = a.axis_iter(Axis(0)).map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let col_max = a.axis_iter(Axis(1)).map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    frobenius(a).min((row_max * col_max).sqrt())
}

/// Largest column 2-norm; a lower bound on the operator norm.
pub fn norm_lower_bound(a: ArrayView2<C64>) -> f64 {
    a.axis_iter(Axis(1)).map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

pub fn hermitian_defect(a: &Array2<C64>) -> f64 {
    norm_bound(&(a - &adjoint(a)))
}

fn require_hermitian(a: &Array2<C64>) -> Result<()> {
    let defect = hermitian_defect(a);
    let scale = norm_lower_bound(a.view());
    if defect > 1e-10 * scale.max(f64::MIN_POSITIVE) && defect > 0.0 {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

/// All eigenvalues in ascending order.
pub fn hermitian_spectrum(op: &LocalOp) -> Result<Vec<f64>> {
    spectrum(&op.matrix)
}

pub fn spectrum(a: &Array2<C64>) -> Result<Vec<f64>> {
    require_hermitian(a)?;
    Ok(packed(a).eigvalsh(UPLO::Lower)?.to_vec())
}

// Column-major copy for LAPACK. ndarray-linalg 0.16 conjugates the
// eigenvectors of row-major complex input, and rejects the degenerate strides
// ndarray may leave on length-1 axes.
fn packed(a: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros(a.raw_dim().f());
    out.assign(a);
    out
}

/// Eigenvalues ascending with eigenvectors as columns.
pub fn eigh(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    require_hermitian(a)?;
    let (ev, vecs) = packed(a).eigh(UPLO::Lower)?;
    Ok((ev.to_vec(), vecs))
}

/// exp(a) for anti-Hermitian `a`, from the spectral decomposition of `i·a`.
pub fn expm_antihermitian(a: &Array2<C64>) -> Result<Array2<C64>> {
    let h = a.mapv(|z| z * C64::new(0.0, 1.0));
    let (ev, v) = eigh(&h)?;
    // exp(a) = exp(-i h) = V diag(exp(-i λ)) V†
    let mut scaled = v.clone();
    for (j, lambda) in ev.iter().enumerate() {
        let phase = C64::new(0.0, -lambda).exp();
        scaled.column_mut(j).mapv_inplace(|z| z * phase);
    }
    Ok(scaled.dot(&adjoint(&v)))
}

pub fn identity(dim: usize) -> Array2<C64> {
    Array2::eye(dim)
}

pub fn real_diag(values: &[f64]) -> Array2<C64> {
    Array2::from_diag(&Array1::from_iter(values.iter().map(|x| C64::new(*x, 0.0))))
}

/// The standard Pauli matrices x, y, z.
pub fn pauli(which: char) -> Array2<C64> {
    let i = C64::new(0.0, 1.0);
    let (a, b, c, d) = match which {
        'x' => (ZERO, ONE, ONE, ZERO),
        'y' => (ZERO, -i, i, ZERO),
        'z' => (ONE, ZERO, ZERO, -ONE),
        _ => panic!("unknown Pauli matrix {which}"),
    };
    ndarray::arr2(&[[a, b], [c, d]])
}
