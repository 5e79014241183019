//! Re-expansion of effective potentials into branches, and paths over
//! connected families of rectangles.
//!
//! The potential on a rectangle `T` after step `L` is the potential after the
//! previous step, plus, when the step rectangle `J_L` sits strictly inside
//! `T`, the ad-series of `S_{J_L}` applied to the previous potentials on `T`
//! and on every rectangle whose minimal rectangle with `J_L` is `T`.
//! Unrolling this recursion down to potentials that were already
//! block-diagonalized (or to the initial data) gives a sum over branches,
//! each labelled by the ordered rectangles it passed through.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::rc::Rc;

use ndarray::Array2;
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowState, PRUNE_THRESHOLD};
use crate::lattice::{all_rects, bounding_rect, enumerate_steps, g_set, LatticeSpec, Rect};
use crate::tensor::{embed_matrix, frobenius, op_norm, Layout, LocalOp, C64};

#[derive(Clone, Debug)]
pub struct Branch {
    /// Step rectangles of the labelled edges from the root down, then the leaf.
    pub rects: Vec<Rect>,
    pub leaf: Rect,
    /// Operator norm of the potential the branch starts from.
    pub leaf_norm: f64,
    /// Branch operator on the target rectangle.
    pub op: LocalOp,
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub target: Rect,
    pub root: Rect,
    pub branches: Vec<Branch>,
    /// Set when the depth limit cut off part of the tree.
    pub incomplete: bool,
}

impl Expansion {
    pub fn sum(&self) -> Array2<C64> {
        let dim = self.branches.first().map(|b| b.op.dim()).unwrap_or(0);
        let mut acc = Array2::zeros((dim, dim));
        for b in &self.branches {
            acc += &b.op.matrix;
        }
        acc
    }
}

#[derive(Clone)]
struct Part {
    rects: Vec<Rect>,
    op: Array2<C64>,
    leaf_norm: f64,
}

struct Expander<'a> {
    state: &'a FlowState,
    steps: Vec<Rect>,
    n_max: usize,
    incomplete: bool,
    memo: HashMap<(usize, Rect, usize), Rc<Vec<Part>>>,
}

impl<'a> Expander<'a> {
    /// Level 0 is the initial data; level `l ≥ 1` is after `steps[l-1]`.
    fn expand(&mut self, level: usize, target: &Rect, depth: usize) -> Result<Rc<Vec<Part>>> {
        let key = (level, target.clone(), depth);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let parts = self.expand_uncached(level, target, depth)?;
        let parts = Rc::new(parts);
        self.memo.insert(key, parts.clone());
        Ok(parts)
    }

    fn leaf(&self, target: &Rect, op: Option<&LocalOp>) -> Result<Vec<Part>> {
        match op {
            Some(op) if frobenius(&op.matrix) >= PRUNE_THRESHOLD => {
                Ok(vec![Part { rects: vec![target.clone()], op: op.matrix.clone(), leaf_norm: op_norm(&op.matrix)? }])
            }
            _ => Ok(Vec::new()),
        }
    }

    fn expand_uncached(&mut self, level: usize, target: &Rect, depth: usize) -> Result<Vec<Part>> {
        if level == 0 || target.circumference() == 0 {
            return self.leaf(target, self.state.initial.get(target));
        }
        if target <= &self.steps[level - 1] {
            return self.leaf(target, self.state.diagonalized.get(target));
        }
        // the latest step at or below `level` that sits strictly inside the target
        let Some(l) = (1..=level).rev().find(|&l| target.strictly_contains(&self.steps[l - 1])) else {
            return self.leaf(target, self.state.initial.get(target));
        };
        let step = self.steps[l - 1].clone();
        let mut out: Vec<Part> = self.expand(l - 1, target, depth)?.as_ref().clone();
        let gen = self.state.generator(&step).cloned();
        let Some(gen) = gen.filter(|g| !g.is_zero()) else {
            return Ok(out);
        };
        if depth == 0 {
            self.incomplete = true;
            return Ok(out);
        }
        let m = self.state.m;
        let step_layout = Layout::new(&step, target, m)?;
        let mut sources = g_set(&step, target, &self.state.lat)?;
        sources.push(target.clone());
        for src in sources {
            let children = self.expand(l - 1, &src, depth - 1)?;
            if children.is_empty() {
                continue;
            }
            let layout = Layout::new(&src, target, m)?;
            for child in children.iter() {
                let y = embed_matrix(&child.op, &layout);
                let (a, _) = gen.ad_series(&y, &step_layout, self.n_max);
                if frobenius(&a) < PRUNE_THRESHOLD {
                    continue;
                }
                let mut rects = Vec::with_capacity(child.rects.len() + 1);
                rects.push(step.clone());
                rects.extend(child.rects.iter().cloned());
                out.push(Part { rects, op: a, leaf_norm: child.leaf_norm });
            }
        }
        Ok(out)
    }
}

/// Expands the potential on `target` after step `root` into branches.
///
/// `depth_limit` caps the number of labelled edges per branch; deeper
/// contributions are dropped and the result is flagged incomplete.
pub fn enumerate_branches(
    target: &Rect,
    root: &Rect,
    state: &FlowState,
    n_max: usize,
    depth_limit: usize,
) -> Result<Expansion> {
    target.validate(&state.lat)?;
    if root > &state.step {
        return Err(Error::Precondition(format!("root {root} is later than the last completed step {}", state.step)));
    }
    let steps = enumerate_steps(&state.lat);
    let level = if root.circumference() == 0 { 0 } else { steps.iter().position(|s| s == root).unwrap() + 1 };
    let mut ex = Expander { state, steps, n_max, incomplete: false, memo: HashMap::new() };
    let parts = ex.expand(level, target, depth_limit)?;
    let branches = parts
        .iter()
        .map(|p| {
            let leaf = p.rects.last().unwrap().clone();
            let op = LocalOp { support: target.clone(), m: state.m, matrix: p.op.clone() };
            Branch { rects: p.rects.clone(), leaf, leaf_norm: p.leaf_norm, op }
        })
        .collect();
    Ok(Expansion { target: target.clone(), root: root.clone(), branches, incomplete: ex.incomplete })
}

/// Connectivity of the union of `rects` as a lattice set.
pub fn is_connected(rects: &[Rect]) -> bool {
    if rects.is_empty() {
        return true;
    }
    let mut seen = vec![false; rects.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..rects.len() {
            if !seen[j] && rects[i].overlaps(&rects[j]) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BranchProperties {
    pub branches: usize,
    /// Union and every suffix union connected.
    pub connected: bool,
    /// Minimal rectangle of each branch union equals the target.
    pub spans_target: bool,
    /// No two branches share the same rectangle sequence.
    pub injective: bool,
    /// Labels strictly descending in step order.
    pub descending: bool,
    pub incomplete: bool,
}

pub fn check_branch_properties(ex: &Expansion) -> BranchProperties {
    let mut props = BranchProperties {
        branches: ex.branches.len(),
        connected: true,
        spans_target: true,
        injective: true,
        descending: true,
        incomplete: ex.incomplete,
    };
    let mut seen = HashSet::new();
    for b in &ex.branches {
        for start in 0..b.rects.len() {
            if !is_connected(&b.rects[start..]) {
                props.connected = false;
            }
        }
        if bounding_rect(b.rects.iter()) != ex.target {
            props.spans_target = false;
        }
        if !seen.insert(b.rects.clone()) {
            props.injective = false;
        }
        if b.rects[..b.rects.len() - 1].windows(2).any(|w| w[0] <= w[1]) {
            props.descending = false;
        }
    }
    props
}

/// Σ‖b‖ against Σ (c·t)^{|R_b|−1} ‖V_leaf‖ Π_i ‖v1 at step J_i‖, with `c`
/// the largest per-step (e^{2‖S‖} − 1)/(|t|‖v1‖) of the flow.
pub fn weighted_branch_sum(ex: &Expansion, state: &FlowState) -> Result<(f64, f64)> {
    let c = measured_commutator_constant(state);
    let t = state.t.abs();
    let v1: BTreeMap<&Rect, f64> = state.records.iter().map(|r| (&r.rect, r.v1_norm)).collect();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for b in &ex.branches {
        lhs += op_norm(&b.op.matrix)?;
        let labels = &b.rects[..b.rects.len() - 1];
        let mut w = b.leaf_norm;
        for j in labels {
            w *= c * t * v1.get(j).copied().unwrap_or(0.0);
        }
        rhs += w;
    }
    Ok((lhs, rhs))
}

pub fn measured_commutator_constant(state: &FlowState) -> f64 {
    state.records.iter().filter_map(|r| r.commutator_constant).fold(0.0, f64::max)
}

/// Smallest |R_b|·k/r over the branches, with k the smallest labelled circumference and r the target's.
pub fn min_size_ratio(ex: &Expansion) -> Option<f64> {
    let r = ex.target.circumference() as f64;
    ex.branches
        .iter()
        .filter_map(|b| {
            let k = b.rects.iter().map(|x| x.circumference()).max()? as f64;
            (k > 0.0).then(|| b.rects.len() as f64 * k / r)
        })
        .reduce(f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeLevel {
    pub size: usize,
    /// Connected components; each is a sorted list of rectangles.
    pub components: Vec<Vec<Rect>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentDecomposition {
    pub levels: Vec<SizeLevel>,
}

impl ComponentDecomposition {
    pub fn lowest_is_single(&self) -> bool {
        self.levels.first().map(|l| l.components.len() == 1).unwrap_or(true)
    }

    pub fn total(&self) -> usize {
        self.levels.iter().flat_map(|l| &l.components).map(|c| c.len()).sum()
    }

    fn components(&self) -> impl Iterator<Item = (usize, &Vec<Rect>)> {
        self.levels.iter().flat_map(|l| l.components.iter().map(move |c| (l.size, c)))
    }
}

/// Groups rectangles by circumference and splits each group into connected components.
pub fn decompose_components(rects: &[Rect]) -> Result<ComponentDecomposition> {
    let set: BTreeSet<Rect> = rects.iter().cloned().collect();
    let all: Vec<Rect> = set.into_iter().collect();
    if all.is_empty() {
        return Ok(ComponentDecomposition { levels: Vec::new() });
    }
    if !is_connected(&all) {
        return Err(Error::Disconnected);
    }
    let mut by_size: BTreeMap<usize, Vec<Rect>> = BTreeMap::new();
    for r in all {
        by_size.entry(r.circumference()).or_default().push(r);
    }
    let mut levels = Vec::new();
    for (size, group) in by_size {
        let mut uf = UnionFind::<usize>::new(group.len());
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                if group[i].overlaps(&group[j]) {
                    uf.union(i, j);
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<Rect>> = BTreeMap::new();
        for (i, r) in group.iter().enumerate() {
            comps.entry(uf.find(i)).or_default().push(r.clone());
        }
        let mut components: Vec<Vec<Rect>> = comps.into_values().collect();
        for c in components.iter_mut() {
            c.sort();
        }
        components.sort();
        levels.push(SizeLevel { size, components });
    }
    Ok(ComponentDecomposition { levels })
}

/// A sequence of rectangles in which consecutive entries overlap and differ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathOfRects {
    pub seq: Vec<Rect>,
}

impl PathOfRects {
    pub fn length(&self) -> usize {
        self.seq.len().saturating_sub(1)
    }

    pub fn steps(&self) -> Vec<(&Rect, &Rect)> {
        self.seq.windows(2).map(|w| (&w[0], &w[1])).collect()
    }

    pub fn support(&self) -> BTreeSet<Rect> {
        self.seq.iter().cloned().collect()
    }

    pub fn is_closed(&self) -> bool {
        self.seq.first() == self.seq.last()
    }

    pub fn is_valid(&self) -> bool {
        self.seq.windows(2).all(|w| w[0] != w[1] && w[0].overlaps(&w[1]))
    }
}

/// Closed path through equal-size rectangles with a connected union, of
/// length 2n − 2: each rectangle is attached by a step out of a rectangle
/// already on the path and a step back.
pub fn closed_path(rects: &[Rect]) -> Result<PathOfRects> {
    closed_path_from(rects, None)
}

fn closed_path_from(rects: &[Rect], start: Option<&Rect>) -> Result<PathOfRects> {
    let set: BTreeSet<Rect> = rects.iter().cloned().collect();
    let rects: Vec<Rect> = set.into_iter().collect();
    if rects.is_empty() {
        return Err(Error::Precondition("closed path needs at least one rectangle".into()));
    }
    let size = rects[0].circumference();
    if rects.iter().any(|r| r.circumference() != size) {
        return Err(Error::Precondition("closed path needs rectangles of one size".into()));
    }
    if !is_connected(&rects) {
        return Err(Error::Disconnected);
    }
    let root = match start {
        Some(s) => {
            rects.iter().position(|r| r == s).ok_or_else(|| Error::Precondition(format!("{s} not in family")))?
        }
        None => 0,
    };
    let mut seq = vec![rects[root].clone()];
    let mut seen = vec![false; rects.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(p) = queue.pop_front() {
        for c in 0..rects.len() {
            if seen[c] || !rects[p].overlaps(&rects[c]) {
                continue;
            }
            seen[c] = true;
            queue.push_back(c);
            let at = seq.iter().position(|r| r == &rects[p]).unwrap();
            seq.insert(at + 1, rects[p].clone());
            seq.insert(at + 1, rects[c].clone());
        }
    }
    Ok(PathOfRects { seq })
}

/// Path through all rectangles of a decomposition, built size by size: the
/// path so far is walked and, at the first rectangle touching a component not
/// yet visited, a turning step enters that component's closed path and
/// returns.
pub fn build_gamma(decomp: &ComponentDecomposition) -> Result<PathOfRects> {
    let comps: Vec<(usize, &Vec<Rect>)> = decomp.components().collect();
    if comps.is_empty() {
        return Ok(PathOfRects { seq: Vec::new() });
    }
    let mut visited = vec![false; comps.len()];
    let mut seq: Vec<Rect> = closed_path(comps[0].1)?.seq;
    visited[0] = true;
    // components reachable only through larger rectangles are picked up on a later pass
    while visited.iter().any(|v| !v) {
        let mut progressed = false;
        for (ci, (_, comp)) in comps.iter().enumerate() {
            if visited[ci] {
                continue;
            }
            let hit = seq.iter().enumerate().find_map(|(i, g)| comp.iter().find(|z| z.overlaps(g)).map(|z| (i, z)));
            let Some((i, z0)) = hit else { continue };
            let inner = closed_path_from(comp, Some(z0))?.seq;
            let back = seq[i].clone();
            let mut spliced = Vec::with_capacity(seq.len() + inner.len() + 1);
            spliced.extend_from_slice(&seq[..=i]);
            spliced.extend(inner);
            spliced.push(back);
            spliced.extend_from_slice(&seq[i + 1..]);
            seq = spliced;
            visited[ci] = true;
            progressed = true;
        }
        if !progressed {
            return Err(Error::Disconnected);
        }
    }
    Ok(PathOfRects { seq })
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaProperties {
    /// Support is the whole family.
    pub a: bool,
    /// At most 2n − 2 steps inside each component.
    pub b: bool,
    /// Per component, at most one step in from a smaller size and one step out to a smaller size.
    pub c: bool,
    pub length: usize,
    pub length_bound: usize,
    pub closed: bool,
    pub valid: bool,
}

impl GammaProperties {
    pub fn all(&self) -> bool {
        self.a && self.b && self.c && self.length <= self.length_bound && self.valid
    }
}

pub fn check_gamma(gamma: &PathOfRects, decomp: &ComponentDecomposition) -> GammaProperties {
    let mut owner: HashMap<&Rect, usize> = HashMap::new();
    let comps: Vec<(usize, &Vec<Rect>)> = decomp.components().collect();
    for (ci, (_, comp)) in comps.iter().enumerate() {
        for r in comp.iter() {
            owner.insert(r, ci);
        }
    }
    let family: BTreeSet<Rect> = owner.keys().map(|r| (*r).clone()).collect();
    let a = gamma.support() == family;
    let mut inside = vec![0usize; comps.len()];
    let mut from_lower = vec![0usize; comps.len()];
    let mut to_lower = vec![0usize; comps.len()];
    for (x, y) in gamma.steps() {
        let (cx, cy) = (owner.get(x).copied(), owner.get(y).copied());
        if let (Some(cx), Some(cy)) = (cx, cy) {
            if cx == cy {
                inside[cx] += 1;
            }
            if x.circumference() < y.circumference() {
                from_lower[cy] += 1;
            }
            if y.circumference() < x.circumference() {
                to_lower[cx] += 1;
            }
        }
    }
    let b = comps.iter().enumerate().all(|(ci, (_, comp))| inside[ci] + 2 <= 2 * comp.len());
    let c = (0..comps.len()).all(|ci| from_lower[ci] <= 1 && to_lower[ci] <= 1);
    let n = decomp.total();
    GammaProperties {
        a,
        b,
        c,
        length: gamma.length(),
        length_bound: (2 * n).saturating_sub(2),
        closed: gamma.is_closed(),
        valid: gamma.is_valid(),
    }
}

/// Largest number of rectangles of circumference `s_prime` that overlap a
/// single rectangle of circumference `s`, other than itself.
pub fn direction_count(s: usize, s_prime: usize, lat: &LatticeSpec) -> usize {
    let all = all_rects(lat);
    all.iter()
        .filter(|a| a.circumference() == s)
        .map(|a| all.iter().filter(|b| b.circumference() == s_prime && *b != a && b.overlaps(a)).count())
        .max()
        .unwrap_or(0)
}

/// Random family built by adding rectangles in nondecreasing size, each new
/// one overlapping the union of those before it.
pub fn random_layered_family<R: rand::Rng>(lat: &LatticeSpec, count: usize, max_size: usize, rng: &mut R) -> Vec<Rect> {
    let all: Vec<Rect> = all_rects(lat).into_iter().filter(|r| r.circumference() >= 1).collect();
    let mut family: Vec<Rect> = Vec::new();
    let mut size = 1 + rng.gen_range(0..max_size.min(2));
    while family.len() < count {
        let candidates: Vec<&Rect> = all
            .iter()
            .filter(|r| r.circumference() == size && !family.contains(r))
            .filter(|r| family.is_empty() || family.iter().any(|f| f.overlaps(r)))
            .collect();
        if candidates.is_empty() || (rng.gen_bool(0.3) && size < max_size) {
            if size >= max_size {
                break;
            }
            size += 1;
            continue;
        }
        family.push(candidates[rng.gen_range(0..candidates.len())].clone());
    }
    family
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run_flow, run_flow_until, FlowOptions};
    use crate::model::random_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(k: &[usize], q: &[usize]) -> Rect {
        Rect::new(k.to_vec(), q.to_vec())
    }

    fn max_abs(a: &Array2<C64>) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Component count by breadth-first search on the overlap graph of each size class.
    fn bfs_component_count(rects: &[Rect]) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        let sizes: BTreeSet<usize> = rects.iter().map(|r| r.circumference()).collect();
        for s in sizes {
            let group: Vec<&Rect> = rects.iter().filter(|r| r.circumference() == s).collect();
            let mut seen = vec![false; group.len()];
            let mut count = 0;
            for start in 0..group.len() {
                if seen[start] {
                    continue;
                }
                count += 1;
                let mut stack = vec![start];
                seen[start] = true;
                while let Some(i) = stack.pop() {
                    for j in 0..group.len() {
                        if !seen[j] && group[i].overlaps(group[j]) {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            out.insert(s, count);
        }
        out
    }

    #[test]
    fn components_examples() {
        let same = vec![r(&[1, 0], &[1, 1]), r(&[1, 0], &[2, 1]), r(&[0, 1], &[3, 1])];
        let d = decompose_components(&same).unwrap();
        assert_eq!(d.levels.len(), 1);
        assert_eq!(d.levels[0].components.len(), 1);

        // two edges joined only through a plaquette
        let two = vec![r(&[1, 0], &[1, 1]), r(&[1, 0], &[1, 3]), r(&[0, 2], &[2, 1])];
        let d = decompose_components(&two).unwrap();
        assert_eq!(d.levels[0].size, 1);
        assert_eq!(d.levels[0].components.len(), 2);
        assert!(!d.lowest_is_single());

        let apart = vec![r(&[1, 0], &[1, 1]), r(&[1, 0], &[1, 3])];
        assert!(matches!(decompose_components(&apart), Err(Error::Disconnected)));
    }

    #[test]
    fn component_counts_match_bfs_oracle() {
        let lat = LatticeSpec::new(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let fam = random_layered_family(&lat, 7, 3, &mut rng);
            let d = decompose_components(&fam).unwrap();
            let oracle = bfs_component_count(&fam);
            for level in &d.levels {
                assert_eq!(level.components.len(), oracle[&level.size]);
            }
        }
    }

    #[test]
    fn closed_path_examples() {
        let one = closed_path(&[r(&[1], &[1])]).unwrap();
        assert_eq!(one.length(), 0);
        let a = r(&[1], &[1]);
        let b = r(&[1], &[2]);
        let two = closed_path(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(two.seq, vec![a.clone(), b, a]);
        assert!(closed_path(&[r(&[1], &[1]), r(&[2], &[1])]).is_err());
    }

    #[test]
    fn closed_paths_on_random_families() {
        let lat = LatticeSpec::new(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = 1 + rand::Rng::gen_range(&mut rng, 0..8);
            let fam = random_layered_family(&lat, n, 1, &mut rng);
            let p = closed_path(&fam).unwrap();
            assert_eq!(p.length(), 2 * fam.len() - 2);
            assert!(p.is_closed() && p.is_valid());
            assert_eq!(p.support(), fam.iter().cloned().collect());
        }
    }

    #[test]
    fn gamma_on_random_layered_families() {
        let lat = LatticeSpec::new(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let fam = random_layered_family(&lat, 8, 4, &mut rng);
            let d = decompose_components(&fam).unwrap();
            assert!(d.lowest_is_single());
            let g = build_gamma(&d).unwrap();
            let props = check_gamma(&g, &d);
            assert!(props.all(), "{props:?}");
            assert!(props.closed);
        }
    }

    #[test]
    fn gamma_of_single_component_is_its_closed_path() {
        let fam = vec![r(&[1, 0], &[1, 1]), r(&[0, 1], &[2, 1]), r(&[1, 0], &[2, 2])];
        let d = decompose_components(&fam).unwrap();
        assert_eq!(build_gamma(&d).unwrap(), closed_path(&fam).unwrap());
    }

    #[test]
    fn direction_counts() {
        let big = LatticeSpec::new(1, 12).unwrap();
        assert_eq!(direction_count(1, 1, &big), 2);
        for sp in 1..=3 {
            let counts: Vec<usize> = (1..=4).map(|s| direction_count(s, sp, &big)).collect();
            assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        }
    }

    #[test]
    fn empty_history_gives_no_branches() {
        let lat = LatticeSpec::new(1, 3).unwrap();
        let spec = random_model(lat, 2, 0.05, 1).unwrap();
        let state = crate::flow::FlowState::new(&spec).unwrap();
        let ex = enumerate_branches(&r(&[2], &[1]), &lat.initial(), &state, 20, 8).unwrap();
        assert!(ex.branches.is_empty());
    }

    #[test]
    fn branches_reconcile_with_stored_potentials_on_chain() {
        let lat = LatticeSpec::new(1, 3).unwrap();
        let spec = random_model(lat, 2, 0.05, 1).unwrap();
        let o = FlowOptions::default();
        let root = r(&[1], &[2]);
        let state = run_flow_until(&spec, &o, Some(&root)).unwrap();
        let target = r(&[2], &[1]);
        let ex = enumerate_branches(&target, &root, &state, o.n_max, 16).unwrap();
        assert!(!ex.branches.is_empty());
        let stored = &state.interactions.get(&target).unwrap().matrix;
        assert!(max_abs(&(ex.sum() - stored)) < 1e-9);
        let props = check_branch_properties(&ex);
        assert!(props.connected && props.spans_target && props.injective && props.descending);
        let (lhs, rhs) = weighted_branch_sum(&ex, &state).unwrap();
        assert!(lhs <= rhs);
    }

    #[test]
    fn processed_target_is_a_single_leaf() {
        let lat = LatticeSpec::new(2, 2).unwrap();
        let spec = random_model(lat, 2, 0.05, 2).unwrap();
        let state = run_flow(&spec, &FlowOptions::default()).unwrap();
        let ex = enumerate_branches(&lat.full(), &lat.full(), &state, 20, 8).unwrap();
        assert_eq!(ex.branches.len(), 1);
        assert_eq!(ex.branches[0].rects, vec![lat.full()]);
    }
}
