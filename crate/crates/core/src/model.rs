//! Model data: on-site Hamiltonian, bounded interaction potentials, coupling.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::InteractionMap;
use crate::lattice::{all_rects, LatticeSpec, Rect};
use crate::tensor::{
    adjoint, eigh, embed_add, hermitian_defect, hermitian_norm, real_diag, spectrum, Layout, LocalOp, SiteSpace, C64,
};

const TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub lat: LatticeSpec,
    pub site: SiteSpace,
    pub onsite_h: Array2<C64>,
    pub potentials: Vec<(Rect, Array2<C64>)>,
    pub t: f64,
    pub rng_seed: Option<u64>,
    /// Largest allowed circumference of a potential's support.
    pub max_range: usize,
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        self.site.m
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.site.m;
        if self.onsite_h.dim() != (m, m) {
            return Err(Error::Model(format!("on-site Hamiltonian must be {m}x{m}")));
        }
        if hermitian_defect(&self.onsite_h) > TOL {
            return Err(Error::Model("on-site Hamiltonian is not Hermitian".into()));
        }
        let vac_leak = (1..m).map(|i| self.onsite_h[[i, 0]].norm()).fold(self.onsite_h[[0, 0]].norm(), f64::max);
        if vac_leak > TOL {
            return Err(Error::Model(format!(
                "on-site Hamiltonian does not annihilate the vacuum (|H Ω| = {vac_leak:e})"
            )));
        }
        let excited = self.onsite_h.slice(s![1.., 1..]).to_owned();
        let lowest = spectrum(&excited)?[0];
        if lowest < 1.0 - TOL {
            return Err(Error::Model(format!("onsite gap < 1 (lowest excitation {lowest})")));
        }
        if !self.t.is_finite() {
            return Err(Error::Model("coupling t must be finite".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (rect, v) in &self.potentials {
            rect.validate(&self.lat)?;
            if rect.circumference() == 0 || rect.circumference() > self.max_range {
                return Err(Error::Model(format!(
                    "potential on {rect} has circumference {}, allowed range is 1..={}",
                    rect.circumference(),
                    self.max_range
                )));
            }
            if !seen.insert(rect.clone()) {
                return Err(Error::Model(format!("duplicate potential on {rect}")));
            }
            let dim = self.site.dim_of(rect);
            if v.dim() != (dim, dim) {
                return Err(Error::Model(format!("potential on {rect} must be {dim}x{dim}, got {:?}", v.dim())));
            }
            if hermitian_defect(v) > TOL {
                return Err(Error::Model(format!("potential on {rect} is not Hermitian")));
            }
            let norm = hermitian_norm(v)?;
            if norm > 1.0 + TOL {
                return Err(Error::Model(format!(
                    "potential on {rect} has norm {norm} > 1; interaction potentials must satisfy ‖V_J‖ ≤ 1"
                )));
            }
        }
        if self.t < 0.0 {
            log::warn!("negative coupling t = {} is outside the analysed range t ≥ 0", self.t);
        }
        Ok(())
    }

    /// Rotates the on-site basis so that the on-site ground state is the
    /// vacuum at index 0 and shifts it to energy 0. Potentials are rotated
    /// along. Returns the per-site energy shift that was removed.
    pub fn canonicalize(&mut self) -> Result<f64> {
        let m = self.site.m;
        let (ev, vecs) = eigh(&self.onsite_h)?;
        if m > 1 && ev[1] - ev[0] < 1.0 - TOL {
            return Err(Error::Model(format!("onsite gap < 1 (gap {})", ev[1] - ev[0])));
        }
        let already = (1..m).all(|i| self.onsite_h[[i, 0]].norm() <= TOL) && self.onsite_h[[0, 0]].norm() <= TOL;
        if already {
            return Ok(0.0);
        }
        let shift = ev[0];
        self.onsite_h = real_diag(&ev.iter().map(|x| x - shift).collect::<Vec<_>>());
        let u_dag = adjoint(&vecs);
        for (rect, v) in self.potentials.iter_mut() {
            let mut u_all = Array2::<C64>::eye(1);
            for _ in 0..rect.site_count() {
                u_all = crate::tensor::kron(&u_all, &u_dag);
            }
            *v = u_all.dot(&*v).dot(&adjoint(&u_all));
        }
        Ok(shift)
    }
}

/// Nearest-neighbour edges of the lattice in step order.
pub fn edges(lat: &LatticeSpec) -> Vec<Rect> {
    let mut out: Vec<Rect> = all_rects(lat).into_iter().filter(|r| r.circumference() == 1).collect();
    out.sort();
    out
}

/// The same potential on every nearest-neighbour edge.
pub fn uniform_model(
    lat: LatticeSpec,
    onsite_h: Array2<C64>,
    edge_potential: Array2<C64>,
    t: f64,
) -> Result<ModelSpec> {
    let m = onsite_h.nrows();
    let spec = ModelSpec {
        lat,
        site: SiteSpace::new(m)?,
        onsite_h,
        potentials: edges(&lat).into_iter().map(|e| (e, edge_potential.clone())).collect(),
        t,
        rng_seed: None,
        max_range: 1,
    };
    spec.validate()?;
    Ok(spec)
}

/// Seeded random Hermitian edge potentials of operator norm exactly 1 and
/// the on-site Hamiltonian diag(0, 1, …, 1).
pub fn random_model(lat: LatticeSpec, m: usize, t: f64, seed: u64) -> Result<ModelSpec> {
    let site = SiteSpace::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut potentials = Vec::new();
    for e in edges(&lat) {
        let dim = m * m;
        let a = Array2::from_shape_fn((dim, dim), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = (&a + &adjoint(&a)).mapv(|z| z * 0.5);
        let norm = hermitian_norm(&h)?;
        potentials.push((e, h.mapv(|z| z / norm)));
    }
    let spec = ModelSpec { lat, site, onsite_h: default_onsite(m), potentials, t, rng_seed: Some(seed), max_range: 1 };
    spec.validate()?;
    Ok(spec)
}

pub fn default_onsite(m: usize) -> Array2<C64> {
    let mut d = vec![1.0; m];
    d[0] = 0.0;
    real_diag(&d)
}

/// K_N(t) on the full lattice.
pub fn build_hamiltonian(spec: &ModelSpec) -> Result<LocalOp> {
    spec.validate()?;
    let full = spec.lat.full();
    let m = spec.m();
    let mut k = LocalOp::zeros(full.clone(), m);
    for x in full.sites() {
        let layout = Layout::new(&Rect::point(x), &full, m)?;
        embed_add(&mut k.matrix, &spec.onsite_h, &layout, C64::new(1.0, 0.0));
    }
    for (rect, v) in &spec.potentials {
        let layout = Layout::new(rect, &full, m)?;
        embed_add(&mut k.matrix, v, &layout, C64::new(spec.t, 0.0));
    }
    Ok(k)
}

/// The interactions before the first step: H on every point, the given
/// potentials on their supports, nothing else.
pub fn initial_interactions(spec: &ModelSpec) -> Result<InteractionMap> {
    spec.validate()?;
    let m = spec.m();
    let mut map = InteractionMap::new();
    for x in spec.lat.full().sites() {
        map.insert(LocalOp::new(Rect::point(x), m, spec.onsite_h.clone())?);
    }
    for (rect, v) in &spec.potentials {
        map.insert(LocalOp::new(rect.clone(), m, v.clone())?);
    }
    Ok(map)
}
