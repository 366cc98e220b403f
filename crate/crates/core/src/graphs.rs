//! Feynman graphs on numbered vertices, their symmetry factors, superficial
//! degrees of divergence and Epstein-Glaser classification, together with
//! the graph expansion of products of several functionals.

use std::sync::Arc;

use crate::algebra::ContractionKernel;
use crate::functional::{falling, Factor, PolyFunctional, Term, Vertex, MAX_DEGREE};
use crate::model::Grid;
use crate::{Error, Result, C64};

/// A multigraph without self-loops on vertices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    /// Multiplicities of the pairs `(i, j)`, `i < j`, in lexicographic order.
    mult: Vec<u32>,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph { n, mult: vec![0; n * n.saturating_sub(1) / 2] }
    }

    /// Builds a graph from `(i, j, multiplicity)` triples.
    pub fn new(n: usize, edges: &[(usize, usize, u32)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j, l) in edges {
            if i == j {
                return Err(Error::Invalid(format!("self-loop at vertex {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::Invalid(format!("edge ({i}, {j}) outside {n} vertices")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            g.mult[pair_index(n, a, b)] += l;
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> u32 {
        self.mult.iter().sum()
    }

    pub fn multiplicity(&self, i: usize, j: usize) -> u32 {
        if i == j {
            return 0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.mult[pair_index(self.n, a, b)]
    }

    /// `(i, j, multiplicity)` for every pair with at least one line.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let l = self.multiplicity(i, j);
                if l > 0 {
                    out.push((i, j, l));
                }
            }
        }
        out
    }

    pub fn degree(&self, v: usize) -> u32 {
        (0..self.n).map(|u| self.multiplicity(v, u)).sum()
    }

    /// Number of connected components among the vertices in `alive`.
    fn components(&self, alive: &[bool], skip_edge: Option<(usize, usize)>) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if !alive[start] || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for u in 0..self.n {
                    if !alive[u] || seen[u] {
                        continue;
                    }
                    let mut l = self.multiplicity(v, u);
                    if let Some((a, b)) = skip_edge {
                        if (a, b) == (v.min(u), v.max(u)) {
                            l -= 1;
                        }
                    }
                    if l > 0 {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    fn induced(&self, keep: &[bool]) -> Graph {
        let idx: Vec<usize> = (0..self.n).filter(|&v| keep[v]).collect();
        let mut edges = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate().skip(a + 1) {
                let l = self.multiplicity(i, j);
                if l > 0 {
                    edges.push((a, b, l));
                }
            }
        }
        Graph::new(idx.len(), &edges).expect("induced subgraph is valid")
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components(&vec![true; self.n], None) == 1
    }

    pub fn has_bridge(&self) -> bool {
        let all = vec![true; self.n];
        let base = self.components(&all, None);
        self.edges().iter().any(|&(i, j, l)| l == 1 && self.components(&all, Some((i, j))) > base)
    }

    pub fn has_articulation_vertex(&self) -> bool {
        if self.n < 3 {
            return false;
        }
        let base = self.components(&vec![true; self.n], None);
        (0..self.n).any(|v| {
            let mut alive = vec![true; self.n];
            alive[v] = false;
            self.components(&alive, None) > base
        })
    }

    /// Connected, without bridges and without articulation vertices.
    pub fn is_irreducible(&self) -> bool {
        self.is_connected() && !self.has_bridge() && !self.has_articulation_vertex()
    }
}

/// All graphs on `n` vertices with at most `cap` lines, ordered by line
/// count and then lexicographically by multiplicities.
pub fn enumerate_graphs(n: usize, cap: u32) -> Vec<Graph> {
    let pairs = n * n.saturating_sub(1) / 2;
    let mut out = Vec::new();
    for total in 0..=cap {
        let mut cur = vec![0u32; pairs];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, n: usize, out: &mut Vec<Graph>) {
            if i == cur.len() {
                if left == 0 {
                    out.push(Graph { n, mult: cur.clone() });
                }
                return;
            }
            for x in (0..=left).rev() {
                cur[i] = x;
                rec(i + 1, left - x, cur, n, out);
            }
            cur[i] = 0;
        }
        if pairs == 0 {
            if total == 0 {
                out.push(Graph::empty(n));
            }
            continue;
        }
        rec(0, total, &mut cur, n, &mut out);
    }
    out
}

/// `Sym(G) = prod_{i<j} l_ij!`.
pub fn symmetry_factor(g: &Graph) -> u128 {
    g.mult.iter().map(|&l| (1..=l as u128).product::<u128>()).product()
}

/// Superficial degree of divergence `(d - 2)|E| - d(|V| - 1)`.
pub fn divergence_degree(g: &Graph, d: i64) -> i64 {
    (d - 2) * g.edge_count() as i64 - d * (g.vertex_count() as i64 - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphClass {
    Disconnected,
    /// Connected with a bridge.
    OneParticleReducible,
    /// Bridgeless with an articulation vertex.
    OneVertexReducible,
    /// Irreducible and containing a nontrivial irreducible subgraph.
    IrreducibleNonPrimitive,
    /// Irreducible without nontrivial irreducible subgraphs.
    Primitive,
}

/// Epstein-Glaser classification. Subgraphs are taken on proper vertex
/// subsets with at least two vertices; an induced subgraph is irreducible
/// exactly when some edge subset on the same vertices is.
pub fn classify(g: &Graph) -> GraphClass {
    if !g.is_connected() {
        return GraphClass::Disconnected;
    }
    if g.has_bridge() {
        return GraphClass::OneParticleReducible;
    }
    if g.has_articulation_vertex() {
        return GraphClass::OneVertexReducible;
    }
    let n = g.n;
    for mask in 1u64..(1u64 << n) - 1 {
        let keep: Vec<bool> = (0..n).map(|v| mask >> v & 1 == 1).collect();
        if keep.iter().filter(|&&k| k).count() < 2 {
            continue;
        }
        let sub = g.induced(&keep);
        if sub.edge_count() > 0 && sub.is_irreducible() {
            return GraphClass::IrreducibleNonPrimitive;
        }
    }
    GraphClass::Primitive
}

/// `sum over graphs G with |E| <= cap of hbar^|E| / Sym(G) <P^G, d_G (F_1 (x) .. (x) F_n)>`,
/// returned by powers of `hbar`. Lines between `F_i` and `F_j`, `i < j`, carry `P(x_i, x_j)`.
pub fn graph_expansion(
    fs: &[PolyFunctional],
    kernel: &ContractionKernel,
    grid: &Grid,
    cap: u32,
) -> Result<Vec<PolyFunctional>> {
    let n = kernel.n();
    let mut out = vec![PolyFunctional::zero(n); cap as usize + 1];
    for g in enumerate_graphs(fs.len(), cap) {
        let amp = graph_amplitude(&g, fs, kernel)?;
        let e = g.edge_count() as usize;
        out[e] = out[e].add(&amp.simplify(grid));
    }
    Ok(out)
}

/// `1/Sym(G) <P^G, d_G (F_1 (x) .. (x) F_n)>` for a single graph.
pub fn graph_amplitude(g: &Graph, fs: &[PolyFunctional], kernel: &ContractionKernel) -> Result<PolyFunctional> {
    if fs.len() != g.n {
        return Err(Error::Dimension { expected: g.n, got: fs.len() });
    }
    let n = kernel.n();
    for f in fs {
        if f.n() != n {
            return Err(Error::Dimension { expected: n, got: f.n() });
        }
    }
    // Each line k joins slot (i, k) of F_i to slot (j, k) of F_j.
    let mut lines: Vec<(usize, usize)> = Vec::new();
    for (i, j, l) in g.edges() {
        for _ in 0..l {
            lines.push((i, j));
        }
    }
    let slots: Vec<Vec<usize>> = (0..g.n)
        .map(|v| lines.iter().enumerate().filter(|(_, &(i, j))| i == v || j == v).map(|(k, _)| k).collect())
        .collect();
    let sym = symmetry_factor(g) as f64;
    let mut terms = Vec::new();
    let mut choice = vec![0usize; g.n];
    let data: &Arc<[C64]> = kernel.data();
    loop {
        let chosen: Vec<&Term> = (0..g.n).map(|i| &fs[i].terms()[choice[i]]).collect();
        if chosen.iter().zip(&slots).all(|(t, s)| t.degree() as usize >= s.len()) {
            let deg: u32 = chosen.iter().map(|t| t.degree()).sum::<u32>() - 2 * lines.len() as u32;
            if deg > MAX_DEGREE {
                return Err(Error::DegreeCap { degree: deg, cap: MAX_DEGREE });
            }
            expand_assignments(&chosen, &slots, &lines, data, sym, &mut terms);
        }
        let mut d = g.n;
        let mut done = true;
        while d > 0 {
            d -= 1;
            choice[d] += 1;
            if choice[d] < fs[d].terms().len() {
                done = false;
                break;
            }
            choice[d] = 0;
        }
        if done || fs.iter().any(|f| f.terms().is_empty()) {
            break;
        }
    }
    Ok(PolyFunctional::from_terms(n, terms).merged())
}

fn expand_assignments(
    chosen: &[&Term],
    slots: &[Vec<usize>],
    lines: &[(usize, usize)],
    kernel: &Arc<[C64]>,
    sym: f64,
    out: &mut Vec<Term>,
) {
    let m = chosen.len();
    let offsets: Vec<usize> = chosen
        .iter()
        .scan(0usize, |acc, t| {
            let o = *acc;
            *acc += t.vertices.len();
            Some(o)
        })
        .collect();
    // Per functional: all ordered maps from its slots to its vertices.
    let per: Vec<Vec<Vec<usize>>> = (0..m)
        .map(|i| {
            let nv = chosen[i].vertices.len();
            let k = slots[i].len();
            let mut maps = Vec::new();
            for code in 0..nv.pow(k as u32) {
                let mut c = code;
                let mut map = vec![0usize; k];
                for s in map.iter_mut().rev() {
                    *s = c % nv;
                    c /= nv;
                }
                let mut used = vec![0u32; nv];
                for &v in &map {
                    used[v] += 1;
                }
                if used.iter().zip(&chosen[i].vertices).all(|(u, v)| *u <= v.power) {
                    maps.push(map);
                }
            }
            maps
        })
        .collect();
    if per.iter().any(|p| p.is_empty()) {
        return;
    }
    let mut pick = vec![0usize; m];
    loop {
        let mut weight = 1.0 / sym;
        let mut vertices = Vec::new();
        let mut factors = Vec::new();
        let mut endpoint = vec![[0usize; 2]; lines.len()];
        let mut coeff = C64::new(1.0, 0.0);
        for i in 0..m {
            let t = chosen[i];
            let map = &per[i][pick[i]];
            let mut used = vec![0u32; t.vertices.len()];
            for (s, &v) in map.iter().enumerate() {
                used[v] += 1;
                let line = slots[i][s];
                let side = if lines[line].0 == i { 0 } else { 1 };
                endpoint[line][side] = offsets[i] + v;
            }
            for (v, vert) in t.vertices.iter().enumerate() {
                weight *= falling(vert.power, used[v]);
                vertices.push(Vertex { density: vert.density.clone(), power: vert.power - used[v] });
            }
            factors.extend(t.factors.iter().map(|f| Factor {
                vars: f.vars.iter().map(|x| x + offsets[i]).collect(),
                data: f.data.clone(),
            }));
            coeff *= t.coeff;
        }
        for e in &endpoint {
            factors.push(Factor { vars: vec![e[0], e[1]], data: kernel.clone() });
        }
        out.push(Term { coeff: coeff * weight, vertices, factors });
        let mut d = m;
        let mut done = true;
        while d > 0 {
            d -= 1;
            pick[d] += 1;
            if pick[d] < per[d].len() {
                done = false;
                break;
            }
            pick[d] = 0;
        }
        if done {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_graphs(2, 2).len(), 3);
        assert_eq!(enumerate_graphs(3, 1).len(), 4);
        // stars and bars: C(cap + pairs, pairs)
        assert_eq!(enumerate_graphs(3, 3).len(), 20);
        assert_eq!(enumerate_graphs(4, 2).len(), 28);
    }

    #[test]
    fn symmetry_factors() {
        let g = Graph::new(2, &[(0, 1, 3)]).unwrap();
        assert_eq!(symmetry_factor(&g), 6);
        let g = Graph::new(3, &[(0, 1, 2), (1, 2, 2), (0, 2, 1)]).unwrap();
        assert_eq!(symmetry_factor(&g), 4);
    }

    #[test]
    fn divergence_degrees() {
        let triangle = Graph::new(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        assert_eq!(divergence_degree(&triangle, 6), 0);
        let fish = Graph::new(2, &[(0, 1, 2)]).unwrap();
        assert_eq!(divergence_degree(&fish, 4), 0);
        assert_eq!(divergence_degree(&fish, 1), -3);
        let sunset = Graph::new(2, &[(0, 1, 3)]).unwrap();
        assert_eq!(divergence_degree(&sunset, 4), 2);
    }

    #[test]
    fn classification_examples() {
        let fish = Graph::new(2, &[(0, 1, 2)]).unwrap();
        assert_eq!(classify(&fish), GraphClass::Primitive);
        let two_fish = Graph::new(4, &[(0, 1, 2), (2, 3, 2), (1, 2, 1)]).unwrap();
        assert_eq!(classify(&two_fish), GraphClass::OneParticleReducible);
        let bowtie = Graph::new(3, &[(0, 1, 2), (1, 2, 2)]).unwrap();
        assert_eq!(classify(&bowtie), GraphClass::OneVertexReducible);
        let triangle = Graph::new(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        assert_eq!(classify(&triangle), GraphClass::Primitive);
        let fat = Graph::new(3, &[(0, 1, 2), (1, 2, 1), (0, 2, 1)]).unwrap();
        assert_eq!(classify(&fat), GraphClass::IrreducibleNonPrimitive);
        assert_eq!(classify(&Graph::empty(2)), GraphClass::Disconnected);
        assert!(Graph::new(2, &[(1, 1, 1)]).is_err());
    }

    /// Brute-force oracle: irreducibility by removing single lines and
    /// single vertices, nontrivial subgraphs by all line subsets.
    fn oracle_class(g: &Graph) -> GraphClass {
        fn connected(n: usize, alive: &[bool], m: &dyn Fn(usize, usize) -> u32) -> bool {
            let start = match (0..n).find(|&v| alive[v]) {
                Some(s) => s,
                None => return true,
            };
            let mut seen = vec![false; n];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    if alive[u] && !seen[u] && m(v, u) > 0 {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            (0..n).all(|v| !alive[v] || seen[v])
        }
        fn irreducible(n: usize, alive: &[bool], mult: &[Vec<u32>]) -> bool {
            let m = |a: usize, b: usize| mult[a][b];
            if !connected(n, alive, &m) {
                return false;
            }
            for a in 0..n {
                for b in a + 1..n {
                    if alive[a] && alive[b] && mult[a][b] > 0 {
                        let cut = |x: usize, y: usize| {
                            if (x.min(y), x.max(y)) == (a, b) {
                                mult[x][y] - 1
                            } else {
                                mult[x][y]
                            }
                        };
                        if !connected(n, alive, &cut) {
                            return false;
                        }
                    }
                }
            }
            if alive.iter().filter(|&&x| x).count() >= 3 {
                for v in 0..n {
                    if alive[v] {
                        let mut rest = alive.to_vec();
                        rest[v] = false;
                        if !connected(n, &rest, &m) {
                            return false;
                        }
                    }
                }
            }
            true
        }
        let n = g.vertex_count();
        let mult: Vec<Vec<u32>> = (0..n).map(|i| (0..n).map(|j| g.multiplicity(i, j)).collect()).collect();
        let all = vec![true; n];
        let m = |a: usize, b: usize| mult[a][b];
        if !connected(n, &all, &m) {
            return GraphClass::Disconnected;
        }
        if !irreducible(n, &all, &mult) {
            // distinguish a bridge from an articulation vertex
            let bridge = g.edges().iter().any(|&(a, b, l)| {
                l == 1 && !connected(n, &all, &|x, y| if (x.min(y), x.max(y)) == (a, b) { 0 } else { mult[x][y] })
            });
            return if bridge { GraphClass::OneParticleReducible } else { GraphClass::OneVertexReducible };
        }
        let edges = g.edges();
        let mut sub = vec![0u32; edges.len()];
        loop {
            let mut smult = vec![vec![0u32; n]; n];
            let mut alive = vec![false; n];
            for (k, &(a, b, _)) in edges.iter().enumerate() {
                smult[a][b] = sub[k];
                smult[b][a] = sub[k];
                if sub[k] > 0 {
                    alive[a] = true;
                    alive[b] = true;
                }
            }
            let count = alive.iter().filter(|&&x| x).count();
            if count >= 2 && count < n && irreducible(n, &alive, &smult) {
                return GraphClass::IrreducibleNonPrimitive;
            }
            let mut k = 0;
            loop {
                if k == edges.len() {
                    return GraphClass::Primitive;
                }
                sub[k] += 1;
                if sub[k] <= edges[k].2 {
                    break;
                }
                sub[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn classification_matches_oracle() {
        for n in 2..=4 {
            for g in enumerate_graphs(n, 5) {
                assert_eq!(classify(&g), oracle_class(&g), "{g:?}");
            }
        }
    }

    #[test]
    fn expansion_matches_iterated_product() {
        use crate::algebra::Product;
        use crate::model::{build_model, ModelSpec};
        use crate::sampling::{bump_density, probes};
        use crate::functional::probe_distance;
        let model = build_model(ModelSpec::qm(1.0, 2.0, 17)).unwrap();
        let grid = &model.grid;
        let fs = [
            PolyFunctional::local(grid.len(), &bump_density(grid, 0, -0.8, 0.6), 3),
            PolyFunctional::local(grid.len(), &bump_density(grid, 0, 0.0, 0.7), 2)
                .add(&PolyFunctional::local(grid.len(), &bump_density(grid, 0, 0.1, 0.5), 1)),
            PolyFunctional::local(grid.len(), &bump_density(grid, 0, 0.9, 0.6), 3),
        ];
        let kernel = ContractionKernel::feynman(&model);
        let cap = 4;
        let graphs = graph_expansion(&fs, &kernel, grid, cap).unwrap();
        let prod = Product::new(kernel, grid);
        let ab = prod.apply(&fs[0], &fs[1], cap).unwrap();
        let abc = prod.series(&ab, &fs[2].to_series(cap, 0)).unwrap();
        let pr = probes(grid, 5, 4);
        for k in 0..=cap {
            let d = probe_distance(&graphs[k as usize], abc.get(k, 0).unwrap(), grid, &pr);
            assert!(d < 1e-12, "order {k}: {d}");
        }
    }

    #[test]
    fn amplitude_vanishes_without_enough_legs() {
        let model = crate::model::build_model(crate::model::ModelSpec::qm(1.0, 2.0, 9)).unwrap();
        let n = model.grid.len();
        let f = PolyFunctional::local(n, &vec![1.0; n], 1);
        let g = Graph::new(2, &[(0, 1, 2)]).unwrap();
        let amp = graph_amplitude(&g, &[f.clone(), f], &ContractionKernel::causal(&model)).unwrap();
        assert!(amp.is_zero());
    }
}
