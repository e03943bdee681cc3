//! Hop-count routing between participants.
//!
//! Messages are routed along the path with the fewest hops; ties are broken
//! by the lexicographically smallest node sequence so that a fixed graph and
//! pair always yield the same route (the chosen path stays fixed across all
//! messages of a pair). The second-shortest path is the next-best simple
//! path under the same order that differs from the shortest as a node
//! sequence; it may share edges.

use crate::error::{Result, TomoError};
use crate::graph::{Graph, NodeId};
use std::collections::VecDeque;

/// A concrete routed path: the node sequence, its hop count, and the exact
/// sum of edge lengths along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub node_sequence: Vec<NodeId>,
    pub hop_count: usize,
    pub length: f64,
}

/// Index-compressed adjacency for the BFS-heavy all-pairs loops. Row
/// neighbor order is ascending by node id, and ids are sorted, so
/// lexicographic comparisons on indices match comparisons on ids.
pub(crate) struct Csr {
    pub ids: Vec<NodeId>,
    pub offs: Vec<u32>,
    pub nbrs: Vec<u32>,
    pub lens: Vec<f64>,
}

impl Csr {
    pub fn build(g: &Graph) -> Csr {
        let ids: Vec<NodeId> = g.nodes().collect();
        let idx_of = |v: NodeId| ids.binary_search(&v).unwrap() as u32;
        let mut offs = Vec::with_capacity(ids.len() + 1);
        let mut nbrs = Vec::new();
        let mut lens = Vec::new();
        offs.push(0u32);
        for &v in &ids {
            for (u, l) in g.neighbors(v) {
                nbrs.push(idx_of(u));
                lens.push(l);
            }
            offs.push(nbrs.len() as u32);
        }
        Csr { ids, offs, nbrs, lens }
    }

    pub fn idx(&self, v: NodeId) -> Option<u32> {
        self.ids.binary_search(&v).ok().map(|i| i as u32)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, v: u32) -> std::ops::Range<usize> {
        self.offs[v as usize] as usize..self.offs[v as usize + 1] as usize
    }

    pub fn edge_len(&self, u: u32, v: u32) -> Option<f64> {
        let r = self.row(u);
        self.nbrs[r.clone()]
            .binary_search(&v)
            .ok()
            .map(|k| self.lens[r.start + k])
    }
}

pub(crate) const UNREACHED: u32 = u32::MAX;

/// Reusable BFS scratch; `touched` makes resets proportional to the
/// explored region instead of the whole graph.
pub(crate) struct BfsScratch {
    pub dist: Vec<u32>,
    touched: Vec<u32>,
    queue: VecDeque<u32>,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        BfsScratch {
            dist: vec![UNREACHED; n],
            touched: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        for &t in &self.touched {
            self.dist[t as usize] = UNREACHED;
        }
        self.touched.clear();
        self.queue.clear();
    }

    /// Hop BFS from `src`, exploring at most `max_hops` levels. `banned`
    /// nodes are not entered; `banned_edge` is skipped in both directions.
    pub fn run(
        &mut self,
        csr: &Csr,
        src: u32,
        max_hops: u32,
        banned: Option<&[bool]>,
        banned_edge: Option<(u32, u32)>,
    ) {
        self.reset();
        self.dist[src as usize] = 0;
        self.touched.push(src);
        self.queue.push_back(src);
        while let Some(v) = self.queue.pop_front() {
            let d = self.dist[v as usize];
            if d >= max_hops {
                continue;
            }
            for k in csr.row(v) {
                let u = csr.nbrs[k];
                if self.dist[u as usize] != UNREACHED {
                    continue;
                }
                if let Some(b) = banned {
                    if b[u as usize] {
                        continue;
                    }
                }
                if let Some((x, y)) = banned_edge {
                    if (v == x && u == y) || (v == y && u == x) {
                        continue;
                    }
                }
                self.dist[u as usize] = d + 1;
                self.touched.push(u);
                self.queue.push_back(u);
            }
        }
    }
}

/// Walks from `from` toward `to` along a breadth-first distance field
/// (`dist_to[v]` = hops from v to `to`), picking the smallest admissible
/// neighbor at every step. Returns the index sequence including both ends.
fn lex_walk(
    csr: &Csr,
    from: u32,
    to: u32,
    dist_to: &[u32],
    banned: Option<&[bool]>,
    banned_edge: Option<(u32, u32)>,
) -> Vec<u32> {
    let mut seq = vec![from];
    let mut cur = from;
    while cur != to {
        let d = dist_to[cur as usize];
        let mut next = None;
        for k in csr.row(cur) {
            let u = csr.nbrs[k];
            if dist_to[u as usize] != d - 1 {
                continue;
            }
            if let Some(b) = banned {
                if b[u as usize] {
                    continue;
                }
            }
            if let Some((x, y)) = banned_edge {
                if (cur == x && u == y) || (cur == y && u == x) {
                    continue;
                }
            }
            next = Some(u);
            break; // rows are ascending: first admissible is smallest
        }
        cur = next.expect("distance field admits a next step");
        seq.push(cur);
    }
    seq
}

pub(crate) struct PathFinder<'a> {
    csr: &'a Csr,
    fwd: BfsScratch,
    spur: BfsScratch,
    banned: Vec<bool>,
}

impl<'a> PathFinder<'a> {
    pub fn new(csr: &'a Csr) -> Self {
        let n = csr.n();
        PathFinder {
            csr,
            fwd: BfsScratch::new(n),
            spur: BfsScratch::new(n),
            banned: vec![false; n],
        }
    }

    /// Minimum-hop path `i -> j`, lexicographically smallest node sequence
    /// among ties; `None` when disconnected (or farther than `max_hops`).
    pub fn shortest(&mut self, i: u32, j: u32, max_hops: u32) -> Option<Vec<u32>> {
        self.fwd.run(self.csr, j, max_hops, None, None);
        if self.fwd.dist[i as usize] == UNREACHED {
            return None;
        }
        Some(lex_walk(self.csr, i, j, &self.fwd.dist, None, None))
    }

    /// Second-best simple path under the (hops, sequence) order, given the
    /// already-computed shortest `a1`. Yen's deviation scheme with k = 2.
    pub fn second(&mut self, _i: u32, j: u32, a1: &[u32], max_hops: u32) -> Option<Vec<u32>> {
        let mut best: Option<Vec<u32>> = None;
        for k in 0..a1.len() - 1 {
            let spur_node = a1[k];
            for &b in &a1[..k] {
                self.banned[b as usize] = true;
            }
            let banned_edge = Some((a1[k], a1[k + 1]));
            // Suffix budget: a candidate must not exceed max_hops, nor be
            // worse than the current best (equal is fine — lex may win).
            let budget = {
                let cap = max_hops.saturating_sub(k as u32);
                match &best {
                    Some(b) => cap.min((b.len() as u32 - 1).saturating_sub(k as u32)),
                    None => cap,
                }
            };
            self.spur
                .run(self.csr, j, budget, Some(&self.banned), banned_edge);
            if self.spur.dist[spur_node as usize] != UNREACHED {
                let tail = lex_walk(
                    self.csr,
                    spur_node,
                    j,
                    &self.spur.dist,
                    Some(&self.banned),
                    banned_edge,
                );
                let mut cand = a1[..k].to_vec();
                cand.extend_from_slice(&tail);
                let better = match &best {
                    None => true,
                    Some(b) => (cand.len(), &cand) < (b.len(), b),
                };
                if better {
                    best = Some(cand);
                }
            }
            for &b in &a1[..k] {
                self.banned[b as usize] = false;
            }
        }
        best
    }
}

fn route_from_indices(csr: &Csr, seq: &[u32]) -> Route {
    let node_sequence: Vec<NodeId> = seq.iter().map(|&k| csr.ids[k as usize]).collect();
    let mut length = 0.0;
    for w in seq.windows(2) {
        length += csr.edge_len(w[0], w[1]).expect("walked edges exist");
    }
    Route {
        hop_count: node_sequence.len() - 1,
        node_sequence,
        length,
    }
}

/// Minimum-hop simple path between two participants, or `None` when they
/// are disconnected.
pub fn shortest_path(g: &Graph, i: NodeId, j: NodeId) -> Result<Option<Route>> {
    if i == j {
        return Err(TomoError::InvalidParameter("shortest_path: i = j".into()));
    }
    let csr = Csr::build(g);
    let (ii, jj) = match (csr.idx(i), csr.idx(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TomoError::InvalidParameter("node not in graph".into())),
    };
    let mut pf = PathFinder::new(&csr);
    Ok(pf
        .shortest(ii, jj, u32::MAX - 1)
        .map(|seq| route_from_indices(&csr, &seq)))
}

/// The minimum-hop simple path that differs from `shortest_path(g, i, j)`
/// as a node sequence; `None` when no second simple path exists (trees).
pub fn second_shortest_path(g: &Graph, i: NodeId, j: NodeId) -> Result<Option<Route>> {
    if i == j {
        return Err(TomoError::InvalidParameter(
            "second_shortest_path: i = j".into(),
        ));
    }
    let csr = Csr::build(g);
    let (ii, jj) = match (csr.idx(i), csr.idx(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TomoError::InvalidParameter("node not in graph".into())),
    };
    let mut pf = PathFinder::new(&csr);
    let a1 = match pf.shortest(ii, jj, u32::MAX - 1) {
        Some(p) => p,
        None => return Ok(None),
    };
    Ok(pf
        .second(ii, jj, &a1, u32::MAX - 1)
        .map(|seq| route_from_indices(&csr, &seq)))
}

/// Exact additive length of a route: the sum of its edge lengths.
pub fn route_length(g: &Graph, r: &Route) -> Result<f64> {
    if r.node_sequence.len() < 2 {
        return Err(TomoError::InvalidRoute("route has no edges".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &v in &r.node_sequence {
        if !seen.insert(v) {
            return Err(TomoError::InvalidRoute(format!("node {v} repeats")));
        }
    }
    let mut total = 0.0;
    for w in r.node_sequence.windows(2) {
        match g.edge_len(w[0], w[1]) {
            Some(l) => total += l,
            None => {
                return Err(TomoError::InvalidRoute(format!(
                    "({}, {}) is not an edge",
                    w[0], w[1]
                )))
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn unit(g: &[(NodeId, NodeId)]) -> Graph {
        let mut out = Graph::new();
        for &(u, v) in g {
            out.add_edge(u, v, 1.0);
        }
        out
    }

    #[test]
    fn direct_edge_is_shortest() {
        let g = unit(&[(0, 1)]);
        let r = shortest_path(&g, 0, 1).unwrap().unwrap();
        assert_eq!(r.node_sequence, vec![0, 1]);
        assert_eq!(r.hop_count, 1);
    }

    #[test]
    fn disconnected_pair_is_absent() {
        let mut g = unit(&[(0, 1)]);
        g.add_node(5);
        assert!(shortest_path(&g, 0, 5).unwrap().is_none());
    }

    #[test]
    fn same_endpoints_rejected() {
        let g = unit(&[(0, 1)]);
        assert!(shortest_path(&g, 1, 1).is_err());
        assert!(second_shortest_path(&g, 1, 1).is_err());
    }

    #[test]
    fn square_ties_break_lexicographically() {
        // i=0, a=1, b=2, j=3: 0-1-3 and 0-2-3 both 2 hops.
        let g = unit(&[(0, 1), (1, 3), (0, 2), (2, 3)]);
        let r = shortest_path(&g, 0, 3).unwrap().unwrap();
        assert_eq!(r.node_sequence, vec![0, 1, 3]);
        let r2 = second_shortest_path(&g, 0, 3).unwrap().unwrap();
        assert_eq!(r2.node_sequence, vec![0, 2, 3]);
        assert_eq!(r2.hop_count, 2);
    }

    #[test]
    fn tree_has_no_second_path() {
        let g = unit(&[(0, 1), (1, 2), (1, 3), (3, 4)]);
        for &(i, j) in &[(0, 2), (0, 4), (2, 4), (0, 1)] {
            assert!(second_shortest_path(&g, i, j).unwrap().is_none(), "({i},{j})");
        }
    }

    #[test]
    fn triangle_second_path() {
        let g = unit(&[(0, 1), (0, 2), (2, 1)]);
        let r2 = second_shortest_path(&g, 0, 1).unwrap().unwrap();
        assert_eq!(r2.node_sequence, vec![0, 2, 1]);
        assert_eq!(r2.hop_count, 2);
    }

    #[test]
    fn route_length_sums_edges() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 2.5);
        let r = Route {
            node_sequence: vec![0, 1],
            hop_count: 1,
            length: 0.0,
        };
        assert_eq!(route_length(&g, &r).unwrap(), 2.5);

        let g3 = unit(&[(0, 1), (1, 2), (2, 3)]);
        let r3 = shortest_path(&g3, 0, 3).unwrap().unwrap();
        assert_eq!(route_length(&g3, &r3).unwrap(), 3.0);
    }

    #[test]
    fn route_length_matches_brute_force_sum() {
        let mut g = generate_er(80, 3.0, 11).unwrap();
        for (u, v, _) in g.clone().edges() {
            g.add_edge(u, v, 0.25 + ((u * 13 + v * 7) % 10) as f64 / 4.0);
        }
        if let Some(r) = shortest_path(&g, 0, 40).unwrap() {
            let mut brute = 0.0;
            for w in r.node_sequence.windows(2) {
                brute += g.edge_len(w[0], w[1]).unwrap();
            }
            assert!((route_length(&g, &r).unwrap() - brute).abs() < 1e-12);
            assert!((r.length - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn route_length_rejects_non_edges() {
        let g = unit(&[(0, 1), (1, 2)]);
        let bad = Route {
            node_sequence: vec![0, 2],
            hop_count: 1,
            length: 0.0,
        };
        assert!(route_length(&g, &bad).is_err());
    }

    /// Independent oracle: plain BFS hop distance.
    fn bfs_hops(g: &Graph, s: NodeId) -> std::collections::BTreeMap<NodeId, usize> {
        let mut d = std::collections::BTreeMap::new();
        d.insert(s, 0);
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            let dv = d[&v];
            for (u, _) in g.neighbors(v) {
                if !d.contains_key(&u) {
                    d.insert(u, dv + 1);
                    q.push_back(u);
                }
            }
        }
        d
    }

    #[test]
    fn shortest_hops_match_bfs_oracle() {
        for seed in 0..5u64 {
            let g = generate_er(200, 3.0, 77 + seed).unwrap();
            let nodes: Vec<NodeId> = g.nodes().collect();
            for &s in nodes.iter().step_by(29) {
                let oracle = bfs_hops(&g, s);
                for &t in nodes.iter().step_by(17) {
                    if s == t {
                        continue;
                    }
                    let r = shortest_path(&g, s, t).unwrap();
                    match (r, oracle.get(&t)) {
                        (Some(route), Some(&h)) => assert_eq!(route.hop_count, h),
                        (None, None) => {}
                        (a, b) => panic!("mismatch at ({s},{t}): {a:?} vs {b:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn second_path_never_shorter_and_is_deterministic() {
        for seed in 0..4u64 {
            let g = generate_er(120, 3.2, 1234 + seed).unwrap();
            let nodes: Vec<NodeId> = g.nodes().collect();
            for &s in nodes.iter().step_by(31) {
                for &t in nodes.iter().step_by(23) {
                    if s == t {
                        continue;
                    }
                    let r1 = shortest_path(&g, s, t).unwrap();
                    let r2 = second_shortest_path(&g, s, t).unwrap();
                    if let (Some(r1), Some(r2)) = (&r1, &r2) {
                        assert!(r2.hop_count >= r1.hop_count);
                        assert_ne!(r2.node_sequence, r1.node_sequence);
                        let again = second_shortest_path(&g, s, t).unwrap().unwrap();
                        assert_eq!(again.node_sequence, r2.node_sequence);
                    }
                }
            }
        }
    }

    /// Exhaustive oracle: enumerate every simple path and take the second
    /// best under the (hops, sequence) order.
    #[test]
    fn second_path_matches_exhaustive_enumeration() {
        fn all_paths(
            g: &Graph,
            cur: NodeId,
            to: NodeId,
            path: &mut Vec<NodeId>,
            out: &mut Vec<Vec<NodeId>>,
        ) {
            if cur == to {
                out.push(path.clone());
                return;
            }
            for (u, _) in g.neighbors(cur) {
                if !path.contains(&u) {
                    path.push(u);
                    all_paths(g, u, to, path, out);
                    path.pop();
                }
            }
        }
        for seed in 0..30u64 {
            let g = generate_er(9, 2.8, 400 + seed).unwrap();
            let nodes: Vec<NodeId> = g.nodes().collect();
            for &s in &nodes {
                for &t in &nodes {
                    if s >= t {
                        continue;
                    }
                    let mut paths = Vec::new();
                    all_paths(&g, s, t, &mut vec![s], &mut paths);
                    paths.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
                    let r1 = shortest_path(&g, s, t).unwrap();
                    let r2 = second_shortest_path(&g, s, t).unwrap();
                    match paths.len() {
                        0 => assert!(r1.is_none()),
                        1 => {
                            assert_eq!(r1.unwrap().node_sequence, paths[0]);
                            assert!(r2.is_none());
                        }
                        _ => {
                            assert_eq!(r1.unwrap().node_sequence, paths[0]);
                            assert_eq!(r2.unwrap().node_sequence, paths[1]);
                        }
                    }
                }
            }
        }
    }
}
