//! Undirected communication graphs, k-hop neighborhoods and the observer
//! coupling matrices built on them.
//!
//! Agents are indexed from `0` internally. The text and JSON formats use
//! `1`-based agent numbers; conversion happens only at the I/O boundary.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix, SymEigen, SymMatrix};
use crate::tol;

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph over `n` agents from `0`-based edges. Self-loops,
    /// duplicate edges and out-of-range indices are rejected.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on agent {}", a + 1)));
            }
            if adjacency[a].contains(&b) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {{{}, {}}}",
                    a + 1,
                    b + 1
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { adjacency })
    }

    /// Same as [`Graph::new`] with `1`-based agent numbers.
    pub fn from_one_based<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut zero_based = Vec::new();
        for (a, b) in edges {
            if a == 0 || b == 0 {
                return Err(Error::IndexOutOfRange { index: 0, n });
            }
            zero_based.push((a - 1, b - 1));
        }
        Self::new(n, zero_based)
    }

    /// Parses the edge-list format: first line `n`, then one `i j` pair
    /// (1-based) per line. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("expected agent count, found {header:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected `i j`", lineno + 1)))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad agent index", lineno + 1)))
            };
            let (a, b) = (next()?, next()?);
            if parts.next().is_some() {
                return Err(Error::Parse(format!(
                    "line {}: trailing tokens",
                    lineno + 1
                )));
            }
            edges.push((a, b));
        }
        Self::from_one_based(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n());
        for (a, b) in self.edges() {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs three agents");
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
            .expect("valid complete graph")
    }

    /// Star with agent `0` as hub and `leaves` spokes.
    pub fn star(leaves: usize) -> Self {
        Self::new(leaves + 1, (1..=leaves).map(|j| (0, j))).expect("valid star")
    }

    /// Random connected graph: a random spanning tree plus every other pair
    /// independently with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for pos in 1..n {
            let parent = order[rng.random_range(0..pos)];
            edges.push((parent.min(order[pos]), parent.max(order[pos])));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !edges.contains(&(i, j)) && rng.random_bool(extra_edge_prob) {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges).expect("generated graph is simple")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, lexicographically ordered.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            })
        } else {
            Ok(())
        }
    }

    /// Breadth-first hop distances from `source`; `None` if unreachable.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued vertices have a distance");
            for &w in &self.adjacency[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(Option::is_some)
    }

    pub fn laplacian(&self) -> SymMatrix {
        let n = self.n();
        let mut l = Matrix::zeros(n, n);
        for (a, list) in self.adjacency.iter().enumerate() {
            l[(a, a)] = list.len() as f64;
            for &b in list {
                l[(a, b)] = -1.0;
            }
        }
        SymMatrix::new(l).expect("graph Laplacian is symmetric")
    }

    /// Smallest Laplacian eigenvalue above [`tol::LAPLACIAN_ZERO`]
    /// (the algebraic connectivity for connected graphs).
    pub fn algebraic_connectivity(&self) -> Result<f64> {
        let eig = sym_eig(&self.laplacian())?;
        eig.values
            .into_iter()
            .find(|&v| v > tol::LAPLACIAN_ZERO)
            .ok_or(Error::GraphNotConnected)
    }

    /// Number of connected components of the subgraph induced by `nodes`.
    pub fn induced_components(&self, nodes: &[usize]) -> Vec<Vec<usize>> {
        let mut seen = vec![false; nodes.len()];
        let mut out = Vec::new();
        for start in 0..nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![nodes[start]];
            let mut stack = vec![start];
            while let Some(p) = stack.pop() {
                for (q, &node) in nodes.iter().enumerate() {
                    if !seen[q] && self.has_edge(nodes[p], node) {
                        seen[q] = true;
                        comp.push(node);
                        stack.push(q);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

fn intersection_count(a: &[usize], b: &[usize]) -> usize {
    // both sorted
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// The agents at hop distance `2..=k` from `agent`, in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KHopNeighborhood {
    pub agent: usize,
    pub k: usize,
    pub members: Vec<usize>,
    pub one_hop: Vec<usize>,
}

impl KHopNeighborhood {
    #[inline]
    pub fn eta(&self) -> usize {
        self.members.len()
    }

    /// Slot of global agent `l` in this member list.
    #[inline]
    pub fn position(&self, l: usize) -> Option<usize> {
        self.members.binary_search(&l).ok()
    }

    pub fn contains(&self, l: usize) -> bool {
        self.position(l).is_some()
    }
}

pub fn khop_set(g: &Graph, i: usize, k: usize) -> Result<KHopNeighborhood> {
    g.check_index(i)?;
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "hop horizon must be at least 2, got {k}"
        )));
    }
    let dist = g.distances_from(i);
    let mut members = Vec::new();
    for (j, d) in dist.iter().enumerate() {
        match d {
            None => return Err(Error::GraphNotConnected),
            Some(d) if (2..=k).contains(d) => members.push(j),
            Some(_) => {}
        }
    }
    Ok(KHopNeighborhood {
        agent: i,
        k,
        members,
        one_hop: g.neighbors(i).to_vec(),
    })
}

/// `L` (induced-subgraph Laplacian), `H` (common one-hop neighbor counts)
/// and `M = L + H` for one agent, together with the spectrum of `M`.
#[derive(Clone, Debug)]
pub struct ObserverCoupling {
    pub agent: usize,
    pub laplacian: SymMatrix,
    pub overlap: SymMatrix,
    pub m: SymMatrix,
    pub spectrum: SymEigen,
}

impl ObserverCoupling {
    pub fn lambda_min(&self) -> f64 {
        self.spectrum.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.max()
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }
}

pub fn coupling_matrices(g: &Graph, nb: &KHopNeighborhood) -> Result<ObserverCoupling> {
    let eta = nb.eta();
    if eta == 0 {
        return Err(Error::EmptyNeighborhood { agent: nb.agent });
    }
    let mut l = Matrix::zeros(eta, eta);
    let mut h = Matrix::zeros(eta, eta);
    for (p, &a) in nb.members.iter().enumerate() {
        for (q, &b) in nb.members.iter().enumerate() {
            if p != q && g.has_edge(a, b) {
                l[(p, q)] = -1.0;
                l[(p, p)] += 1.0;
            }
        }
        h[(p, p)] = intersection_count(g.neighbors(a), &nb.one_hop) as f64;
    }
    let m = l.add(&h)?;
    let m = SymMatrix::new(m)?;
    let spectrum = sym_eig(&m)?;
    Ok(ObserverCoupling {
        agent: nb.agent,
        laplacian: SymMatrix::new(l)?,
        overlap: SymMatrix::new(h)?,
        m,
        spectrum,
    })
}

/// Index-list realization of the selection matrices: `khop_rows` picks the
/// estimated agents' blocks, `onehop_rows` the one-hop neighbors' blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMap {
    pub agent: usize,
    pub khop_rows: Vec<usize>,
    pub onehop_rows: Vec<usize>,
    pub state_dim: usize,
}

impl SelectionMap {
    pub fn new(nb: &KHopNeighborhood, state_dim: usize) -> Self {
        Self {
            agent: nb.agent,
            khop_rows: nb.members.clone(),
            onehop_rows: nb.one_hop.clone(),
            state_dim,
        }
    }

    fn gather(&self, rows: &[usize], stacked: &[f64]) -> Vec<f64> {
        let d = self.state_dim;
        rows.iter()
            .flat_map(|&r| stacked[r * d..(r + 1) * d].iter().copied())
            .collect()
    }

    /// The stacked states of the k-hop members, in member order.
    pub fn gather_khop(&self, stacked: &[f64]) -> Vec<f64> {
        self.gather(&self.khop_rows, stacked)
    }

    pub fn gather_onehop(&self, stacked: &[f64]) -> Vec<f64> {
        self.gather(&self.onehop_rows, stacked)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorEntry {
    pub estimator: usize,
    pub member: usize,
    /// `|N_member ∩ khop(estimator)|`
    pub khop_overlap: usize,
    /// `|N_member ∩ N_estimator|`
    pub onehop_overlap: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorReport {
    pub agent: usize,
    pub entries: Vec<AnchorEntry>,
    pub components: Vec<Vec<usize>>,
    /// One anchor per component: a member with a common one-hop neighbor.
    pub anchors: Vec<usize>,
}

/// Checks the neighborhood-overlap property for every agent.
///
/// Every k-hop member must share a neighbor with the estimator or with
/// another member. Every connected component of the induced subgraph must
/// contain a member with a common one-hop neighbor; in components of two or
/// more agents that member also has a neighbor inside the member set.
pub fn check_anchoring(g: &Graph, k: usize) -> Result<Vec<AnchorReport>> {
    if !g.is_connected() {
        return Err(Error::GraphNotConnected);
    }
    let mut reports = Vec::with_capacity(g.n());
    for j in 0..g.n() {
        let nb = khop_set(g, j, k)?;
        let entries: Vec<AnchorEntry> = nb
            .members
            .iter()
            .map(|&i| AnchorEntry {
                estimator: j,
                member: i,
                khop_overlap: intersection_count(g.neighbors(i), &nb.members),
                onehop_overlap: intersection_count(g.neighbors(i), &nb.one_hop),
            })
            .collect();
        for e in &entries {
            if e.khop_overlap == 0 && e.onehop_overlap == 0 {
                return Err(Error::AnchoringViolation(format!(
                    "agent {} in the k-hop set of agent {} has no neighbor in either set",
                    e.member + 1,
                    j + 1
                )));
            }
        }
        let components = g.induced_components(&nb.members);
        let mut anchors = Vec::with_capacity(components.len());
        for comp in &components {
            let anchor = comp.iter().copied().find(|&i| {
                let e = &entries[nb.position(i).expect("component member")];
                e.onehop_overlap > 0 && (comp.len() == 1 || e.khop_overlap > 0)
            });
            match anchor {
                Some(a) => anchors.push(a),
                None => {
                    return Err(Error::AnchoringViolation(format!(
                        "component {:?} of agent {} has no member with a common neighbor",
                        comp.iter().map(|v| v + 1).collect::<Vec<_>>(),
                        j + 1
                    )))
                }
            }
        }
        reports.push(AnchorReport {
            agent: j,
            entries,
            components,
            anchors,
        });
    }
    Ok(reports)
}

/// Coordinate permutation between the estimator-grouped error stack
/// `[e^1; ...; e^n]` and the target-grouped stack `[e_1; ...; e_n]`.
///
/// Block `p` of `e^i` is agent `i`'s estimate of `members(i)[p]`; block `q`
/// of `e_l` is the estimate of `l` made by `members(l)[q]`.
#[derive(Clone, Debug)]
pub struct ErrorLayout {
    block: usize,
    offsets: Vec<usize>,
    /// Estimator-grouped block index -> target-grouped block index.
    forward: Vec<usize>,
}

impl ErrorLayout {
    pub fn new(nbs: &[KHopNeighborhood], block: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(nbs.len() + 1);
        let mut acc = 0;
        for nb in nbs {
            offsets.push(acc);
            acc += nb.eta();
        }
        offsets.push(acc);
        let mut forward = Vec::with_capacity(acc);
        for (i, nb) in nbs.iter().enumerate() {
            for &l in &nb.members {
                let slot = nbs
                    .get(l)
                    .and_then(|other| other.position(i))
                    .ok_or_else(|| {
                        Error::ProtocolError(format!(
                            "k-hop sets are not symmetric: {} lists {} but not vice versa",
                            i + 1,
                            l + 1
                        ))
                    })?;
                forward.push(offsets[l] + slot);
            }
        }
        Ok(Self {
            block,
            offsets,
            forward,
        })
    }

    /// Total length of either stack.
    pub fn len(&self) -> usize {
        self.forward.len() * self.block
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Range of agent `i`'s blocks within either stack.
    pub fn agent_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i] * self.block..self.offsets[i + 1] * self.block
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionError {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn to_target_order(&self, by_estimator: &[f64]) -> Result<Vec<f64>> {
        self.check(by_estimator)?;
        let b = self.block;
        let mut out = vec![0.0; by_estimator.len()];
        for (src, &dst) in self.forward.iter().enumerate() {
            out[dst * b..(dst + 1) * b].copy_from_slice(&by_estimator[src * b..(src + 1) * b]);
        }
        Ok(out)
    }

    pub fn to_estimator_order(&self, by_target: &[f64]) -> Result<Vec<f64>> {
        self.check(by_target)?;
        let b = self.block;
        let mut out = vec![0.0; by_target.len()];
        for (dst, &src) in self.forward.iter().enumerate() {
            out[dst * b..(dst + 1) * b].copy_from_slice(&by_target[src * b..(src + 1) * b]);
        }
        Ok(out)
    }
}

/// Regroups `[e^1; ...; e^n]` (by estimator) into `[e_1; ...; e_n]` (by
/// estimated agent).
pub fn reorder_errors(
    nbs: &[KHopNeighborhood],
    stacked_by_estimator: &[f64],
    state_dim: usize,
) -> Result<Vec<f64>> {
    ErrorLayout::new(nbs, state_dim)?.to_target_order(stacked_by_estimator)
}

/// All k-hop structure of one graph: neighborhoods, couplings and the error
/// layout.
#[derive(Clone, Debug)]
pub struct KHopNetwork {
    pub graph: Graph,
    pub k: usize,
    pub neighborhoods: Vec<KHopNeighborhood>,
    /// `None` for agents with an empty k-hop set.
    pub couplings: Vec<Option<ObserverCoupling>>,
}

impl KHopNetwork {
    pub fn new(graph: Graph, k: usize) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::GraphNotConnected);
        }
        let neighborhoods = (0..graph.n())
            .map(|i| khop_set(&graph, i, k))
            .collect::<Result<Vec<_>>>()?;
        let couplings = neighborhoods
            .iter()
            .map(|nb| {
                if nb.eta() == 0 {
                    Ok(None)
                } else {
                    coupling_matrices(&graph, nb).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph,
            k,
            neighborhoods,
            couplings,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn layout(&self, state_dim: usize) -> ErrorLayout {
        ErrorLayout::new(&self.neighborhoods, state_dim).expect("k-hop sets are symmetric")
    }

    pub fn total_estimates(&self) -> usize {
        self.neighborhoods.iter().map(KHopNeighborhood::eta).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path4() -> Graph {
        Graph::path(4)
    }

    #[test]
    fn path_khop_members() {
        // agents 1..4 are 0..3 here
        let nb = khop_set(&path4(), 0, 3).unwrap();
        assert_eq!(nb.members, vec![2, 3]);
        assert_eq!(nb.eta(), 2);
        assert_eq!(nb.one_hop, vec![1]);
    }

    #[test]
    fn complete_graph_has_no_khop_members() {
        let g = Graph::complete(4);
        for i in 0..4 {
            assert_eq!(khop_set(&g, i, 3).unwrap().eta(), 0);
        }
    }

    #[test]
    fn cycle_six_matches_floyd_warshall() {
        let g = Graph::cycle(6);
        let n = g.n();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for (a, b) in g.edges() {
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][m] + d[m][j]);
                }
            }
        }
        let brute: Vec<usize> = (0..n).filter(|&j| (2..=2).contains(&d[0][j])).collect();
        let nb = khop_set(&g, 0, 2).unwrap();
        assert_eq!(nb.members, brute);
        assert_eq!(nb.members, vec![2, 4]);
    }

    #[test]
    fn khop_errors() {
        let disconnected = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            khop_set(&disconnected, 0, 2),
            Err(Error::GraphNotConnected)
        ));
        assert!(matches!(
            khop_set(&path4(), 7, 2),
            Err(Error::IndexOutOfRange { index: 7, n: 4 })
        ));
        assert!(khop_set(&path4(), 0, 1).is_err());
    }

    #[test]
    fn graph_construction_rejects_bad_edges() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn coupling_of_path_agent_two_is_scalar_one() {
        let g = path4();
        let c = coupling_matrices(&g, &khop_set(&g, 1, 3).unwrap()).unwrap();
        assert_eq!(c.m.as_slice(), &[1.0]);
        assert_eq!(c.lambda_min(), 1.0);
        assert_eq!(c.lambda_max(), 1.0);
    }

    #[test]
    fn coupling_of_path_agent_one() {
        let g = path4();
        let c = coupling_matrices(&g, &khop_set(&g, 0, 3).unwrap()).unwrap();
        assert_eq!(c.laplacian.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(c.overlap.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.m.as_slice(), &[2.0, -1.0, -1.0, 1.0]);
        let s5 = 5.0_f64.sqrt();
        assert_abs_diff_eq!(c.lambda_min(), (3.0 - s5) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.lambda_max(), (3.0 + s5) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_isolated_member_with_one_common_neighbor() {
        // 0 - 1 - 2: agent 0's only 2-hop member is 2, reached through 1
        let g = Graph::path(3);
        let c = coupling_matrices(&g, &khop_set(&g, 0, 2).unwrap()).unwrap();
        assert_eq!(c.laplacian.as_slice(), &[0.0]);
        assert_eq!(c.overlap.as_slice(), &[1.0]);
        assert_eq!(c.m.as_slice(), &[1.0]);
    }

    #[test]
    fn empty_neighborhood_has_no_coupling() {
        let g = Graph::complete(3);
        assert!(matches!(
            coupling_matrices(&g, &khop_set(&g, 0, 2).unwrap()),
            Err(Error::EmptyNeighborhood { agent: 0 })
        ));
    }

    #[test]
    fn anchoring_on_path() {
        let reports = check_anchoring(&path4(), 3).unwrap();
        let r = &reports[0];
        // member 3 (index 2): N_3 ∩ N_1 = {2}, N_3 ∩ khop(1) = {4}
        let e = r.entries.iter().find(|e| e.member == 2).unwrap();
        assert_eq!((e.onehop_overlap, e.khop_overlap), (1, 1));
        assert_eq!(r.anchors, vec![2]);
    }

    #[test]
    fn anchoring_star_hub_is_vacuous() {
        let reports = check_anchoring(&Graph::star(3), 2).unwrap();
        assert!(reports[0].entries.is_empty());
        assert!(reports[0].components.is_empty());
    }

    #[test]
    fn selection_map_gathers_member_blocks() {
        let g = path4();
        let nb = khop_set(&g, 0, 3).unwrap();
        let sel = SelectionMap::new(&nb, 2);
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        assert_eq!(sel.gather_khop(&x), vec![4.0, 5.0, 6.0, 7.0]);
        assert_eq!(sel.gather_onehop(&x), vec![2.0, 3.0]);
        assert_eq!(sel.khop_rows.len(), nb.eta());
    }

    #[test]
    fn reorder_on_path() {
        let g = path4();
        let nbs: Vec<_> = (0..4).map(|i| khop_set(&g, i, 3).unwrap()).collect();
        // estimator order: 1:{3,4} 2:{4} 3:{1} 4:{1,2}
        // target order:    1:{3,4} 2:{4} 3:{1} 4:{1,2}  (estimators of each)
        let by_est = [13.0, 14.0, 24.0, 31.0, 41.0, 42.0];
        let by_tgt = reorder_errors(&nbs, &by_est, 1).unwrap();
        // e_1 = [est 3 of 1, est 4 of 1], e_2 = [est 4 of 2], e_3 = [est 1 of 3], e_4 = [est 1 of 4, est 2 of 4]
        assert_eq!(by_tgt, vec![31.0, 41.0, 42.0, 13.0, 14.0, 24.0]);
        let layout = ErrorLayout::new(&nbs, 1).unwrap();
        assert_eq!(layout.to_estimator_order(&by_tgt).unwrap(), by_est.to_vec());
    }

    #[test]
    fn reorder_empty_and_mismatch() {
        let g = Graph::path(2);
        let nbs: Vec<_> = (0..2).map(|i| khop_set(&g, i, 2).unwrap()).collect();
        assert!(reorder_errors(&nbs, &[], 3).unwrap().is_empty());
        assert!(matches!(
            reorder_errors(&nbs, &[1.0], 3),
            Err(Error::DimensionError { .. })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# path\n4\n1 2\n2 3\n\n3 4 # last\n";
        let g = Graph::parse_edge_list(text).unwrap();
        assert_eq!(g, path4());
        assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
        assert!(Graph::parse_edge_list("3\n1 4\n").is_err());
        assert!(Graph::parse_edge_list("x\n").is_err());
        assert!(Graph::parse_edge_list("3\n1 2 3\n").is_err());
    }

    #[test]
    fn algebraic_connectivity_of_cycle() {
        // C_4 spectrum {0, 2, 2, 4}
        assert_abs_diff_eq!(
            Graph::cycle(4).algebraic_connectivity().unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }
}
