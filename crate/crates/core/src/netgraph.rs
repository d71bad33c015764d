//! Weighted digraphs, Laplacians, condensation into lower block-triangular
//! (Frobenius) form, incidence factorization and exact Laplacian essential phases.

use nalgebra::SVD;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};
use crate::linalg::{ones_complement, to_complex, RMatrix};
use crate::phasecore::{self, essential_phase, EssentialOptions, EssentialPhaseResult, PhaseOptions};

/// Positivity tolerance for the left null vector of a Laplacian.
pub const PERRON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Tail: the node whose output is transmitted.
    pub from: usize,
    /// Head: the node that receives it.
    pub to: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl WeightedDigraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidGraph(format!("edge {}->{} references a node outside 0..{n}", e.from, e.to)));
            }
            if e.from == e.to {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.from)));
            }
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(Error::InvalidGraph(format!("edge {}->{} has non-positive weight {}", e.from, e.to, e.w)));
            }
        }
        Ok(WeightedDigraph { n, edges })
    }

    /// Directed graph from `(from, to, w)` triples.
    pub fn directed(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(n, edges.iter().map(|&(from, to, w)| Edge { from, to, w }).collect())
    }

    /// Undirected graph: each pair is stored as two opposite directed edges.
    pub fn undirected(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .flat_map(|&(a, b, w)| [Edge { from: a, to: b, w }, Edge { from: b, to: a, w }])
            .collect();
        Self::new(n, edges)
    }

    /// Summed weights per ordered pair `(from, to)`.
    pub fn weight_map(&self) -> BTreeMap<(usize, usize), f64> {
        let mut map = BTreeMap::new();
        for e in &self.edges {
            *map.entry((e.from, e.to)).or_insert(0.0) += e.w;
        }
        map
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected_pairs().is_ok()
    }

    /// Unordered pairs `(i < j, w)` of an undirected graph.
    pub fn undirected_pairs(&self) -> Result<Vec<(usize, usize, f64)>> {
        let map = self.weight_map();
        let mut pairs = Vec::new();
        for (&(a, b), &w) in &map {
            let back = map.get(&(b, a)).copied().unwrap_or(0.0);
            if (w - back).abs() > 1e-12 * w.max(back) {
                return Err(Error::Asymmetric(format!("edge {}->{} has weight {w}, reverse has {back}", a + 1, b + 1)));
            }
            if a < b {
                pairs.push((a, b, w));
            }
        }
        Ok(pairs)
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.edges.iter().filter(|e| e.to == i).map(|e| e.w).sum()
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        self.edges.iter().filter(|e| e.from == i).map(|e| e.w).sum()
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> WeightedDigraph {
        let pos: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|e| match (pos.get(&e.from), pos.get(&e.to)) {
                (Some(&f), Some(&t)) => Some(Edge { from: f, to: t, w: e.w }),
                _ => None,
            })
            .collect();
        WeightedDigraph { n: nodes.len(), edges }
    }

    fn petgraph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::with_capacity(self.n, self.edges.len());
        let idx: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(idx[e.from], idx[e.to], ());
        }
        g
    }

    /// Strongly connected components, each sorted by node index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        tarjan_scc(&self.petgraph())
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
                v.sort_unstable();
                v
            })
            .collect()
    }
}

/// `L = D_in - A` with `l_ij = -a_ij` for the edge `j -> i`.
pub fn laplacian(g: &WeightedDigraph) -> RMatrix {
    let mut l = RMatrix::zeros(g.n, g.n);
    for e in &g.edges {
        l[(e.to, e.from)] -= e.w;
        l[(e.to, e.to)] += e.w;
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connectivity {
    pub has_spanning_tree: bool,
    pub strongly_connected: bool,
    pub weight_balanced: bool,
}

struct Condensation {
    comps: Vec<Vec<usize>>,
    /// Condensation edges `(from_comp, to_comp)`, deduplicated.
    links: Vec<(usize, usize)>,
}

fn condense(g: &WeightedDigraph) -> Condensation {
    let comps = g.components();
    let mut comp_of = vec![0; g.n];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of[v] = k;
        }
    }
    let mut links: Vec<(usize, usize)> = g
        .edges
        .iter()
        .map(|e| (comp_of[e.from], comp_of[e.to]))
        .filter(|(a, b)| a != b)
        .collect();
    links.sort_unstable();
    links.dedup();
    Condensation { comps, links }
}

impl Condensation {
    fn sources(&self) -> Vec<usize> {
        (0..self.comps.len()).filter(|&k| !self.links.iter().any(|&(_, t)| t == k)).collect()
    }
}

pub fn connectivity(g: &WeightedDigraph) -> Connectivity {
    let cond = condense(g);
    let balanced = (0..g.n).all(|i| {
        let (a, b) = (g.in_degree(i), g.out_degree(i));
        (a - b).abs() <= 1e-12 * a.max(b).max(1.0)
    });
    Connectivity {
        has_spanning_tree: cond.sources().len() == 1,
        strongly_connected: cond.comps.len() == 1,
        weight_balanced: balanced,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianBlock {
    /// Original node indices in this strongly connected component, ascending.
    pub nodes: Vec<usize>,
    /// Row/column range `[start, end)` in the permuted Laplacian.
    pub start: usize,
    pub end: usize,
    /// Diagonal block of the full Laplacian.
    pub l_kk: RMatrix,
    /// Laplacian of the subgraph induced by the component.
    pub l_tilde: RMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianDecomposition {
    pub l: RMatrix,
    /// `permutation[k]` is the original index of the node at position `k`.
    pub permutation: Vec<usize>,
    /// `P' L P`, lower block triangular with the root block first.
    pub permuted: RMatrix,
    pub blocks: Vec<LaplacianBlock>,
    pub roots_first: bool,
}

impl LaplacianDecomposition {
    pub fn block_of(&self, node: usize) -> usize {
        self.blocks.iter().position(|b| b.nodes.contains(&node)).expect("every node belongs to a block")
    }
}

/// Orders strongly connected components topologically, root component first,
/// breaking ties by the smallest node index.
pub fn frobenius_form(g: &WeightedDigraph) -> Result<LaplacianDecomposition> {
    let cond = condense(g);
    let sources = cond.sources();
    if sources.len() != 1 {
        return Err(Error::NoSpanningTree { sources: sources.len() });
    }
    let k = cond.comps.len();
    let mut indeg = vec![0usize; k];
    for &(_, t) in &cond.links {
        indeg[t] += 1;
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        sources.iter().map(|&s| Reverse((cond.comps[s][0], s))).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(Reverse((_, c))) = heap.pop() {
        order.push(c);
        for &(f, t) in &cond.links {
            if f == c {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    heap.push(Reverse((cond.comps[t][0], t)));
                }
            }
        }
    }
    debug_assert_eq!(order.len(), k);

    let l = laplacian(g);
    let mut permutation = Vec::with_capacity(g.n);
    let mut blocks = Vec::with_capacity(k);
    for &c in &order {
        let nodes = cond.comps[c].clone();
        let start = permutation.len();
        permutation.extend_from_slice(&nodes);
        let l_kk = RMatrix::from_fn(nodes.len(), nodes.len(), |i, j| l[(nodes[i], nodes[j])]);
        let l_tilde = laplacian(&g.induced(&nodes));
        blocks.push(LaplacianBlock { nodes, start, end: permutation.len(), l_kk, l_tilde });
    }
    let permuted = RMatrix::from_fn(g.n, g.n, |i, j| l[(permutation[i], permutation[j])]);
    Ok(LaplacianDecomposition { l, permutation, permuted, blocks, roots_first: true })
}

fn laplacian_graph(l: &RMatrix) -> WeightedDigraph {
    let n = l.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && l[(i, j)] < 0.0 {
                edges.push(Edge { from: j, to: i, w: -l[(i, j)] });
            }
        }
    }
    WeightedDigraph { n, edges }
}

/// Left null vector `v' L = 0` of a strongly connected Laplacian, max entry 1.
pub fn left_perron_vector(l: &RMatrix) -> Result<Vec<f64>> {
    let n = l.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let svd = SVD::new(l.transpose(), false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    let peak = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    for x in &mut v {
        *x /= peak;
    }
    let low = v.iter().copied().fold(f64::INFINITY, f64::min);
    if low <= PERRON_TOL {
        return Err(Error::NotPositive(low));
    }
    Ok(v)
}

/// Exact largest essential phase of the Laplacian of a strongly connected graph,
/// read off the compression of `diag(v) L` onto the complement of the ones vector.
pub fn essential_phase_laplacian(l: &RMatrix) -> Result<EssentialPhaseResult> {
    let n = crate::linalg::ensure_square(l)?;
    if !connectivity(&laplacian_graph(l)).strongly_connected {
        return Err(Error::NotStronglyConnected);
    }
    let v = left_perron_vector(l)?;
    let scaling = v.iter().map(|x| 1.0 / x.sqrt()).collect();
    if n == 1 {
        return Ok(EssentialPhaseResult { value: 0.0, scaling, exact: true });
    }
    let vl = RMatrix::from_fn(n, n, |i, j| v[i] * l[(i, j)]);
    let q = ones_complement(n);
    let reduced = q.transpose() * vl * &q;
    let profile = phasecore::phases(&to_complex(&reduced), &PhaseOptions::default())?;
    Ok(EssentialPhaseResult { value: profile.max().max(0.0), scaling, exact: true })
}

/// Phase bounds `theta_k` per component: exact for the root component, the
/// component-Laplacian bound for the others, optionally tightened by the
/// numeric scaling search on the diagonal block.
pub fn component_phase_bounds(dec: &LaplacianDecomposition, refine: bool) -> Result<Vec<f64>> {
    dec.blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let bound = essential_phase_laplacian(&b.l_tilde)?.value;
            if k == 0 || !refine || b.nodes.len() == 1 {
                return Ok(bound);
            }
            match essential_phase(&to_complex(&b.l_kk), &EssentialOptions::default()) {
                Ok(r) => Ok(bound.min(r.value)),
                Err(_) => Ok(bound),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceFactorization {
    /// `n x l`, column `k` has +1 at the head and -1 at the tail of edge `k`.
    pub e: RMatrix,
    /// Undirected edge `(tail, head)` for each column.
    pub edge_order: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

impl IncidenceFactorization {
    pub fn laplacian(&self) -> RMatrix {
        let d = RMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.weights.clone()));
        &self.e * d * self.e.transpose()
    }
}

pub fn incidence(g: &WeightedDigraph) -> Result<IncidenceFactorization> {
    let pairs = g.undirected_pairs()?;
    let mut e = RMatrix::zeros(g.n, pairs.len());
    for (k, &(a, b, _)) in pairs.iter().enumerate() {
        e[(b, k)] = 1.0;
        e[(a, k)] = -1.0;
    }
    Ok(IncidenceFactorization {
        e,
        edge_order: pairs.iter().map(|&(a, b, _)| (a, b)).collect(),
        weights: pairs.iter().map(|&(_, _, w)| w).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_eigenvalues;
    use std::f64::consts::PI;

    fn cycle3() -> WeightedDigraph {
        WeightedDigraph::directed(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let g = WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(laplacian(&g), RMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let l = laplacian(&cycle3());
        assert_eq!(l, RMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]));
        for i in 0..3 {
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn invalid_graphs() {
        assert!(WeightedDigraph::directed(2, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedDigraph::directed(2, &[(0, 1, 0.0)]).is_err());
        assert!(WeightedDigraph::directed(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn connectivity_examples() {
        assert_eq!(
            connectivity(&cycle3()),
            Connectivity { has_spanning_tree: true, strongly_connected: true, weight_balanced: true }
        );
        let iso = WeightedDigraph::directed(2, &[]).unwrap();
        assert_eq!(
            connectivity(&iso),
            Connectivity { has_spanning_tree: false, strongly_connected: false, weight_balanced: true }
        );
        let star = WeightedDigraph::directed(3, &[(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(
            connectivity(&star),
            Connectivity { has_spanning_tree: true, strongly_connected: false, weight_balanced: false }
        );
    }

    #[test]
    fn frobenius_cycle_feeding_tail() {
        let g = WeightedDigraph::directed(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (2, 3, 2.5)]).unwrap();
        let dec = frobenius_form(&g).unwrap();
        assert_eq!(dec.blocks.len(), 2);
        assert_eq!(dec.blocks[0].nodes, vec![0, 1, 2]);
        assert_eq!(dec.blocks[1].nodes, vec![3]);
        assert_eq!(dec.blocks[1].l_kk[(0, 0)], 2.5);
        assert_eq!(dec.blocks[1].l_tilde[(0, 0)], 0.0);
    }

    #[test]
    fn frobenius_orders_root_first() {
        // root is node 3 (0-based), feeding a 2-cycle {0,1} and a singleton {2}
        let g = WeightedDigraph::directed(4, &[(3, 2, 1.0), (3, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let dec = frobenius_form(&g).unwrap();
        let order: Vec<_> = dec.blocks.iter().map(|b| b.nodes.clone()).collect();
        assert_eq!(order, vec![vec![3], vec![2], vec![0, 1]]);
        for i in 0..4 {
            for j in (i + 1)..4 {
                if dec.block_of(dec.permutation[j]) > dec.block_of(dec.permutation[i]) {
                    assert_eq!(dec.permuted[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn frobenius_two_sources() {
        let g = WeightedDigraph::directed(3, &[(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(matches!(frobenius_form(&g), Err(Error::NoSpanningTree { sources: 2 })));
    }

    #[test]
    fn strongly_connected_single_block() {
        let dec = frobenius_form(&cycle3()).unwrap();
        assert_eq!(dec.blocks.len(), 1);
        assert_eq!(dec.blocks[0].l_kk, dec.l);
    }

    #[test]
    fn essential_phase_of_three_cycle() {
        let r = essential_phase_laplacian(&laplacian(&cycle3())).unwrap();
        assert!((r.value - PI / 6.0).abs() < 1e-9);
        assert!(r.exact);
    }

    #[test]
    fn essential_phase_of_undirected_path_is_zero() {
        let g = WeightedDigraph::undirected(4, &[(0, 1, 0.3), (1, 2, 2.0), (2, 3, 7.5)]).unwrap();
        assert!(essential_phase_laplacian(&laplacian(&g)).unwrap().value < 1e-12);
    }

    #[test]
    fn essential_phase_requires_strong_connectivity() {
        let g = WeightedDigraph::directed(2, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(essential_phase_laplacian(&laplacian(&g)), Err(Error::NotStronglyConnected)));
    }

    #[test]
    fn weighted_cycle_bounds_eigen_angles() {
        let g = WeightedDigraph::directed(4, &[(0, 1, 1.0), (1, 2, 3.0), (2, 3, 0.5), (3, 0, 2.0), (2, 0, 1.0)]).unwrap();
        let l = laplacian(&g);
        let r = essential_phase_laplacian(&l).unwrap();
        assert!(r.value < PI / 2.0);
        for lam in real_eigenvalues(&l).unwrap() {
            if lam.norm() > 1e-9 {
                assert!(lam.arg().abs() <= r.value + 1e-9);
            }
        }
        // the scaled matrix attains the value
        let d = &r.scaling;
        let scaled = RMatrix::from_fn(4, 4, |i, j| l[(i, j)] * d[j] / d[i]);
        let q = ones_complement(4);
        let p = phasecore::phases(&to_complex(&(q.transpose() * scaled * q)), &PhaseOptions::default()).unwrap();
        assert!(p.max() >= r.value - 1e-9);
    }

    #[test]
    fn component_bounds_cycle_and_pair() {
        let g = WeightedDigraph::directed(
            5,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 3, 1.0)],
        )
        .unwrap();
        let dec = frobenius_form(&g).unwrap();
        let th = component_phase_bounds(&dec, false).unwrap();
        assert_eq!(th.len(), 2);
        assert!((th[0] - PI / 6.0).abs() < 1e-9);
        assert!(th[1].abs() < 1e-12);
        let refined = component_phase_bounds(&dec, true).unwrap();
        assert!(refined[1] <= th[1] + 1e-12);
    }

    #[test]
    fn incidence_examples() {
        let g = WeightedDigraph::undirected(2, &[(0, 1, 3.0)]).unwrap();
        let f = incidence(&g).unwrap();
        assert_eq!(f.laplacian(), RMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
        let tri = WeightedDigraph::undirected(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 4.0)]).unwrap();
        let f = incidence(&tri).unwrap();
        assert!((f.laplacian() - laplacian(&tri)).norm() < 1e-14);
        for col in f.e.column_iter() {
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&x| x == -1.0).count(), 1);
        }
        assert!(matches!(incidence(&cycle3()), Err(Error::Asymmetric(_))));
    }
}
