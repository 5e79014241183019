//! Rectangles in the finite lattice {1..N}^d and the step order of the flow.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d: usize,
    pub n: usize,
}

impl LatticeSpec {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidLattice("dimension d must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidLattice("side vertex count N must be at least 2".into()));
        }
        Ok(Self { d, n })
    }

    pub fn site_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// The rectangle covering the whole lattice, which is also the final step.
    pub fn full(&self) -> Rect {
        Rect::new(vec![self.n - 1; self.d], vec![1; self.d])
    }

    /// The degenerate key preceding every step.
    pub fn initial(&self) -> Rect {
        Rect::new(vec![0; self.d], vec![self.n; self.d])
    }
}

/// A rectangle with side lengths `k` and base corner `q` (1-based); it covers
/// the sites `x` with `q_j <= x_j <= q_j + k_j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub k: Vec<usize>,
    pub q: Vec<usize>,
}

impl Rect {
    pub fn new(k: Vec<usize>, q: Vec<usize>) -> Self {
        assert_eq!(k.len(), q.len(), "k and q must have the same length");
        Self { k, q }
    }

    pub fn point(q: Vec<usize>) -> Self {
        Self::new(vec![0; q.len()], q)
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn circumference(&self) -> usize {
        self.k.iter().sum()
    }

    pub fn site_count(&self) -> usize {
        self.k.iter().map(|k| k + 1).product()
    }

    pub fn lo(&self, j: usize) -> usize {
        self.q[j]
    }

    pub fn hi(&self, j: usize) -> usize {
        self.q[j] + self.k[j]
    }

    pub fn fits(&self, lat: &LatticeSpec) -> bool {
        self.dim() == lat.d && (0..lat.d).all(|j| self.q[j] >= 1 && self.hi(j) <= lat.n)
    }

    pub fn validate(&self, lat: &LatticeSpec) -> Result<()> {
        if self.fits(lat) {
            Ok(())
        } else {
            Err(Error::InvalidRect {
                rect: self.clone(),
                reason: format!("does not fit in a d={} N={} lattice", lat.d, lat.n),
            })
        }
    }

    pub fn contains(&self, other: &Rect) -> bool {
        (0..self.dim()).all(|j| self.lo(j) <= other.lo(j) && other.hi(j) <= self.hi(j))
    }

    pub fn strictly_contains(&self, other: &Rect) -> bool {
        self != other && self.contains(other)
    }

    pub fn contains_site(&self, x: &[usize]) -> bool {
        (0..self.dim()).all(|j| self.lo(j) <= x[j] && x[j] <= self.hi(j))
    }

    /// True when the two rectangles share at least one lattice site.
    pub fn overlaps(&self, other: &Rect) -> bool {
        (0..self.dim()).all(|j| self.lo(j) <= other.hi(j) && other.lo(j) <= self.hi(j))
    }

    /// Overlapping, but neither contains the other.
    pub fn crosses(&self, other: &Rect) -> bool {
        self.overlaps(other) && !self.contains(other) && !other.contains(self)
    }

    /// Sites in lexicographic order of coordinates.
    pub fn sites(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.site_count());
        let mut x = self.q.clone();
        loop {
            out.push(x.clone());
            let mut j = self.dim();
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if x[j] < self.hi(j) {
                    x[j] += 1;
                    break;
                }
                x[j] = self.lo(j);
            }
        }
    }

    /// Position of a site in `sites()`.
    pub fn site_index(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.k).zip(&self.q).fold(0, |idx, ((&xj, &kj), &qj)| idx * (kj + 1) + (xj - qj))
    }

    /// True when the rectangle touches a face of `outer`.
    pub fn touches_boundary_of(&self, outer: &Rect) -> bool {
        (0..self.dim()).any(|j| self.lo(j) == outer.lo(j) || self.hi(j) == outer.hi(j))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "(k=({});q=({}))", join(&self.k), join(&self.q))
    }
}

/// The step order: `Greater` means "succeeds".
///
/// Larger circumference succeeds. At equal circumference the rectangle whose
/// first differing side length is smaller succeeds. At equal shape, the base
/// corners are compared from the last coordinate down and the larger one
/// succeeds.
pub fn compare_step(a: &Rect, b: &Rect) -> Ordering {
    let by_size = a.circumference().cmp(&b.circumference());
    if by_size != Ordering::Equal {
        return by_size;
    }
    for (ka, kb) in a.k.iter().zip(&b.k) {
        if ka != kb {
            return kb.cmp(ka);
        }
    }
    for (qa, qb) in a.q.iter().zip(&b.q).rev() {
        if qa != qb {
            return qa.cmp(qb);
        }
    }
    Ordering::Equal
}

impl Ord for Rect {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_step(self, other)
    }
}

impl PartialOrd for Rect {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn circumference(r: &Rect) -> usize {
    r.circumference()
}

/// Every rectangle of the lattice, points included, in no particular order.
pub fn all_rects(lat: &LatticeSpec) -> Vec<Rect> {
    let mut per_axis: Vec<Vec<(usize, usize)>> = Vec::with_capacity(lat.d);
    for _ in 0..lat.d {
        let mut v = Vec::new();
        for q in 1..=lat.n {
            for k in 0..=(lat.n - q) {
                v.push((k, q));
            }
        }
        per_axis.push(v);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; lat.d];
    loop {
        let k = (0..lat.d).map(|j| per_axis[j][idx[j]].0).collect();
        let q = (0..lat.d).map(|j| per_axis[j][idx[j]].1).collect();
        out.push(Rect::new(k, q));
        let mut j = lat.d;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < per_axis[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// All rectangles with positive circumference, sorted ascending by the step order.
pub fn enumerate_steps(lat: &LatticeSpec) -> Vec<Rect> {
    let mut steps: Vec<Rect> = all_rects(lat).into_iter().filter(|r| r.circumference() >= 1).collect();
    steps.sort();
    steps
}

/// The next step after `r`, or `None` once the whole lattice has been reached.
pub fn successor(r: &Rect, lat: &LatticeSpec) -> Option<Rect> {
    let steps = enumerate_steps(lat);
    let pos = steps.partition_point(|s| s <= r);
    steps.get(pos).cloned()
}

pub fn minimal_rectangle(a: &Rect, b: &Rect) -> Result<Rect> {
    if !a.overlaps(b) {
        return Err(Error::Disjoint(a.clone(), b.clone()));
    }
    Ok(bounding_rect([a, b]))
}

/// Smallest rectangle containing all inputs, with no overlap requirement.
pub fn bounding_rect<'a, I: IntoIterator<Item = &'a Rect>>(rects: I) -> Rect {
    let mut it = rects.into_iter();
    let first = it.next().expect("bounding_rect needs at least one rectangle");
    let mut lo = first.q.clone();
    let mut hi: Vec<usize> = (0..first.dim()).map(|j| first.hi(j)).collect();
    for r in it {
        for j in 0..r.dim() {
            lo[j] = lo[j].min(r.lo(j));
            hi[j] = hi[j].max(r.hi(j));
        }
    }
    let k = (0..lo.len()).map(|j| hi[j] - lo[j]).collect();
    Rect::new(k, lo)
}

/// Rectangles `J'` other than `target` whose minimal rectangle with `inner` is `target`.
pub fn g_set(inner: &Rect, target: &Rect, lat: &LatticeSpec) -> Result<Vec<Rect>> {
    if !target.strictly_contains(inner) {
        return Err(Error::NotStrictlyContained { inner: inner.clone(), target: target.clone() });
    }
    inner.validate(lat)?;
    target.validate(lat)?;
    let mut out: Vec<Rect> = rects_inside(target)
        .into_iter()
        .filter(|c| c != target && c.overlaps(inner) && bounding_rect([inner, c]) == *target)
        .collect();
    out.sort();
    Ok(out)
}

/// All rectangles contained in `outer`, points included.
pub fn rects_inside(outer: &Rect) -> Vec<Rect> {
    let d = outer.dim();
    let per_axis: Vec<Vec<(usize, usize)>> = (0..d)
        .map(|j| {
            let mut v = Vec::new();
            for q in outer.lo(j)..=outer.hi(j) {
                for hi in q..=outer.hi(j) {
                    v.push((hi - q, q));
                }
            }
            v
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let k = (0..d).map(|j| per_axis[j][idx[j]].0).collect();
        let q = (0..d).map(|j| per_axis[j][idx[j]].1).collect();
        out.push(Rect::new(k, q));
        let mut j = d;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < per_axis[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Number of side-length vectors with `d` nonnegative entries summing to `l`.
pub fn count_shapes(l: usize, d: usize) -> u128 {
    // C(l + d - 1, d - 1)
    let n = (l + d - 1) as u128;
    let r = (d - 1) as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(k: &[usize], q: &[usize]) -> Rect {
        Rect::new(k.to_vec(), q.to_vec())
    }

    #[test]
    fn circumference_examples() {
        assert_eq!(r(&[2, 3], &[1, 1]).circumference(), 5);
        assert_eq!(r(&[0, 0], &[1, 1]).circumference(), 0);
        assert_eq!(r(&[1, 0, 2], &[1, 1, 1]).circumference(), 3);
    }

    #[test]
    fn order_matches_footnote_examples() {
        assert_eq!(compare_step(&r(&[1, 1], &[1, 2]), &r(&[1, 1], &[2, 1])), Ordering::Greater);
        assert_eq!(compare_step(&r(&[1, 2], &[1, 1]), &r(&[2, 1], &[1, 1])), Ordering::Greater);
        assert_eq!(compare_step(&r(&[2, 0], &[1, 1]), &r(&[1, 0], &[1, 1])), Ordering::Greater);
    }

    #[test]
    fn order_is_strict_total_on_d2_n3() {
        let lat = LatticeSpec::new(2, 3).unwrap();
        let all = all_rects(&lat);
        for a in &all {
            for b in &all {
                let ab = compare_step(a, b);
                assert_eq!(ab, compare_step(b, a).reverse());
                assert_eq!(ab == Ordering::Equal, a == b);
            }
        }
        for a in &all {
            for b in &all {
                if compare_step(a, b) != Ordering::Greater {
                    continue;
                }
                for c in &all {
                    if compare_step(b, c) == Ordering::Greater {
                        assert_eq!(compare_step(a, c), Ordering::Greater);
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_small_cases() {
        let l1 = LatticeSpec::new(1, 2).unwrap();
        assert_eq!(enumerate_steps(&l1), vec![r(&[1], &[1])]);
        let l3 = LatticeSpec::new(1, 3).unwrap();
        assert_eq!(enumerate_steps(&l3), vec![r(&[1], &[1]), r(&[1], &[2]), r(&[2], &[1])]);

        // independent double loop over (k, q) per axis
        let l22 = LatticeSpec::new(2, 2).unwrap();
        let mut count = 0;
        for k1 in 0..2 {
            for k2 in 0..2 {
                for q1 in 1..=2 {
                    for q2 in 1..=2 {
                        if k1 + k2 >= 1 && q1 + k1 <= 2 && q2 + k2 <= 2 {
                            count += 1;
                        }
                    }
                }
            }
        }
        let steps = enumerate_steps(&l22);
        assert_eq!(steps.len(), count);
        assert_eq!(count, 5);
        assert_eq!(steps.last().unwrap(), &l22.full());
        assert_eq!(steps[0].circumference(), 1);
    }

    #[test]
    fn successor_examples() {
        let lat = LatticeSpec::new(2, 3).unwrap();
        assert_eq!(successor(&lat.initial(), &lat), Some(r(&[1, 0], &[1, 1])));
        assert_eq!(successor(&lat.full(), &lat), None);
        let l3 = LatticeSpec::new(1, 3).unwrap();
        assert_eq!(successor(&r(&[1], &[1]), &l3), Some(r(&[1], &[2])));
        assert_eq!(successor(&r(&[2], &[1]), &l3), None);
    }

    #[test]
    fn initial_key_is_the_largest_point() {
        let lat = LatticeSpec::new(2, 3).unwrap();
        let init = lat.initial();
        for p in all_rects(&lat).iter().filter(|p| p.circumference() == 0) {
            assert!(p <= &init);
        }
        assert!(init < enumerate_steps(&lat)[0]);
    }

    #[test]
    fn minimal_rectangle_examples() {
        let a = r(&[1, 0], &[1, 1]);
        let b = r(&[0, 1], &[2, 1]);
        assert_eq!(minimal_rectangle(&a, &b).unwrap(), r(&[1, 1], &[1, 1]));
        assert_eq!(minimal_rectangle(&a, &a).unwrap(), a);
        let far = r(&[0, 0], &[3, 3]);
        let err = minimal_rectangle(&a, &far).unwrap_err();
        assert!(err.to_string().contains("no minimal rectangle defined"));
    }

    fn smallest_container_by_scan(a: &Rect, b: &Rect, lat: &LatticeSpec) -> Rect {
        all_rects(lat).into_iter().filter(|c| c.contains(a) && c.contains(b)).min_by_key(|c| c.site_count()).unwrap()
    }

    #[test]
    fn minimal_rectangle_matches_scan_oracle_d2_n4() {
        let lat = LatticeSpec::new(2, 4).unwrap();
        let all = all_rects(&lat);
        for a in &all {
            for b in all.iter().filter(|b| b.overlaps(a)) {
                let m = minimal_rectangle(a, b).unwrap();
                assert_eq!(m, smallest_container_by_scan(a, b, &lat));
                assert_eq!(m, minimal_rectangle(b, a).unwrap());
            }
        }
    }

    #[test]
    fn g_set_examples() {
        let l3 = LatticeSpec::new(1, 3).unwrap();
        let g = g_set(&r(&[1], &[1]), &r(&[2], &[1]), &l3).unwrap();
        // brute force: every interval J' != target with [inner ∪ J'] = target
        let brute: Vec<Rect> = all_rects(&l3)
            .into_iter()
            .filter(|c| c != &r(&[2], &[1]) && minimal_rectangle(&r(&[1], &[1]), c).ok() == Some(r(&[2], &[1])))
            .collect();
        let mut brute = brute;
        brute.sort();
        assert_eq!(g, brute);
        assert_eq!(g, vec![r(&[1], &[2])]);

        let l5 = LatticeSpec::new(2, 5).unwrap();
        let inner = r(&[0, 0], &[3, 3]);
        let target = r(&[4, 4], &[1, 1]);
        assert!(g_set(&inner, &target, &l5).unwrap().is_empty());

        assert!(g_set(&target, &inner, &l5).is_err());
        assert!(g_set(&target, &target, &l5).is_err());
    }

    #[test]
    fn g_set_members_touch_a_face_and_obey_the_count_bound() {
        for n in 2..=4 {
            for d in 1..=2 {
                let lat = LatticeSpec::new(d, n).unwrap();
                let all = all_rects(&lat);
                for target in &all {
                    let rr = target.circumference();
                    let bound: u128 = 2
                        * d as u128
                        * (rr as u128 + 1).pow(d as u32 - 1)
                        * (1..=rr).map(|k| (k as u128 + 1).pow(d as u32 - 1)).sum::<u128>();
                    for inner in all.iter().filter(|i| target.strictly_contains(i)) {
                        let g = g_set(inner, target, &lat).unwrap();
                        assert!(g.len() as u128 <= bound);
                        for m in &g {
                            assert!(m.touches_boundary_of(target));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn count_shapes_examples() {
        assert_eq!(count_shapes(0, 3), 1);
        assert_eq!(count_shapes(3, 2), 4);
        let mut brute = 0;
        for a in 0..=2 {
            for b in 0..=2 {
                for c in 0..=2 {
                    if a + b + c == 2 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(count_shapes(2, 3), brute);
        for l in 0..=20u32 {
            for d in 1..=4u32 {
                assert!(count_shapes(l as usize, d as usize) <= (l as u128 + 1).pow(d - 1));
            }
        }
    }

    #[test]
    fn sites_are_lexicographic_and_indexed() {
        let rect = r(&[1, 2], &[2, 1]);
        let s = rect.sites();
        assert_eq!(s.len(), 6);
        let mut sorted = s.clone();
        sorted.sort();
        assert_eq!(s, sorted);
        for (i, x) in s.iter().enumerate() {
            assert_eq!(rect.site_index(x), i);
        }
    }

    fn rect_in(d: usize, n: usize) -> impl Strategy<Value = Rect> {
        proptest::collection::vec((1..=n, 1..=n), d).prop_map(|v| {
            let q = v.iter().map(|(a, b)| *a.min(b)).collect();
            let k = v.iter().map(|(a, b)| a.max(b) - a.min(b)).collect();
            Rect::new(k, q)
        })
    }

    proptest! {
        #[test]
        fn minimal_rectangle_is_commutative_and_monotone(a in rect_in(3, 5), b in rect_in(3, 5)) {
            prop_assume!(a.overlaps(&b));
            let m = minimal_rectangle(&a, &b).unwrap();
            prop_assert_eq!(&m, &minimal_rectangle(&b, &a).unwrap());
            prop_assert!(m.contains(&a) && m.contains(&b));
            prop_assert_eq!(minimal_rectangle(&m, &m).unwrap(), m);
        }

        #[test]
        fn larger_circumference_succeeds(a in rect_in(3, 5), b in rect_in(3, 5)) {
            if a.circumference() > b.circumference() {
                prop_assert!(a > b);
            }
        }
    }
}
