//! Undirected weighted graphs with labeled (participant) and unlabeled
//! (hidden) nodes.
//!
//! Edge weights are delay variances ("lengths") and are additive along
//! paths. This module owns Erdős–Rényi generation, giant-component
//! extraction, the minimal representation (iterative removal/contraction of
//! low-degree hidden nodes), and the structural statistics used as
//! ground-truth oracles elsewhere.

use crate::error::{Result, TomoError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

pub type NodeId = u32;

/// Whether a node reports measurements (participant) or merely forwards
/// traffic (hidden).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Participant,
    Hidden,
}

/// Simple undirected graph with positive edge lengths and a designated
/// participant set.
///
/// Invariants: no self-loops, no parallel edges, symmetric adjacency,
/// `participants ⊆ nodes`. Node ids are stable: operations that derive new
/// graphs (giant component, minimal representation) keep the surviving
/// nodes' ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    participants: BTreeSet<NodeId>,
    /// Bounds (f, g) on original edge lengths, when known.
    bounds: Option<(f64, f64)>,
    /// Largest number of original edges merged into a single edge by
    /// contraction. 1 for graphs untouched by `minimal_representation`.
    max_chain: u32,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            adj: BTreeMap::new(),
            participants: BTreeSet::new(),
            bounds: None,
            max_chain: 1,
        }
    }

    pub fn with_nodes(n: NodeId) -> Self {
        let mut g = Graph::new();
        for v in 0..n {
            g.add_node(v);
        }
        g
    }

    pub fn add_node(&mut self, v: NodeId) {
        self.adj.entry(v).or_default();
    }

    pub fn has_node(&self, v: NodeId) -> bool {
        self.adj.contains_key(&v)
    }

    /// Inserts or overwrites the edge (u, v). Self-loops are ignored.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId, len: f64) {
        if u == v {
            return;
        }
        self.add_node(u);
        self.add_node(v);
        self.adj.get_mut(&u).unwrap().insert(v, len);
        self.adj.get_mut(&v).unwrap().insert(u, len);
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) {
        if let Some(m) = self.adj.get_mut(&u) {
            m.remove(&v);
        }
        if let Some(m) = self.adj.get_mut(&v) {
            m.remove(&u);
        }
    }

    /// Removes a node and its incident edges. Participant membership is
    /// dropped as well.
    pub fn remove_node(&mut self, v: NodeId) {
        if let Some(nbrs) = self.adj.remove(&v) {
            for (u, _) in nbrs {
                if let Some(m) = self.adj.get_mut(&u) {
                    m.remove(&v);
                }
            }
        }
        self.participants.remove(&v);
    }

    pub fn edge_len(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.adj.get(&u).and_then(|m| m.get(&v)).copied()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_len(u, v).is_some()
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj.get(&v).map_or(0, |m| m.len())
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adj
            .get(&v)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&u, &l)| (u, l)))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|m| m.len()).sum::<usize>() / 2
    }

    /// Edges as (u, v, len) with u < v, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adj.iter().flat_map(|(&u, m)| {
            m.iter()
                .filter(move |(&v, _)| u < v)
                .map(move |(&v, &l)| (u, v, l))
        })
    }

    pub fn set_participants<I: IntoIterator<Item = NodeId>>(&mut self, ids: I) {
        self.participants = ids.into_iter().collect();
        for &p in self.participants.clone().iter() {
            self.add_node(p);
        }
    }

    pub fn participants(&self) -> &BTreeSet<NodeId> {
        &self.participants
    }

    pub fn is_participant(&self, v: NodeId) -> bool {
        self.participants.contains(&v)
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        if self.is_participant(v) {
            NodeKind::Participant
        } else {
            NodeKind::Hidden
        }
    }

    pub fn set_bounds(&mut self, f: f64, g: f64) {
        self.bounds = Some((f, g));
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    /// Effective length bounds after contraction: (f, g·max_chain).
    pub fn effective_bounds(&self) -> Option<(f64, f64)> {
        self.bounds.map(|(f, g)| (f, g * self.max_chain as f64))
    }

    pub fn max_chain(&self) -> u32 {
        self.max_chain
    }

    /// Sets every edge length to `len`.
    pub fn set_uniform_lengths(&mut self, len: f64) {
        for m in self.adj.values_mut() {
            for l in m.values_mut() {
                *l = len;
            }
        }
        self.bounds = Some((len, len));
    }

    /// Connected components as sorted node lists, ordered by their smallest
    /// node id.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = vec![start];
            seen.insert(start);
            while let Some(v) = queue.pop() {
                for (u, _) in self.neighbors(v) {
                    if seen.insert(u) {
                        comp.push(u);
                        queue.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Induced subgraph on `keep`, preserving ids, lengths, bounds, and the
    /// participant set restricted to `keep`.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Graph {
        let mut g = Graph::new();
        g.bounds = self.bounds;
        g.max_chain = self.max_chain;
        for &v in keep {
            if self.has_node(v) {
                g.add_node(v);
            }
        }
        for (u, v, l) in self.edges() {
            if keep.contains(&u) && keep.contains(&v) {
                g.add_edge(u, v, l);
            }
        }
        g.set_participants(self.participants.intersection(keep).copied());
        g
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

/// Samples G(n, c/n): each of the C(n,2) node pairs is an edge
/// independently with probability c/n. Deterministic given `seed`. Edge
/// lengths are initialized to 1.0 (reassigned later by the delay model for
/// non-unit experiments).
///
/// Uses geometric skip sampling, so the cost is proportional to the number
/// of edges rather than the number of pairs.
pub fn generate_er(n: u32, c: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(TomoError::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    if c < 0.0 || c >= n as f64 {
        return Err(TomoError::InvalidParameter(format!(
            "c = {c}, need 0 <= c < n"
        )));
    }
    let p = c / n as f64;
    let mut g = Graph::with_nodes(n);
    g.set_bounds(1.0, 1.0);
    if p == 0.0 {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lq = (1.0 - p).ln();
    // Batagelj-Brandes skip walk over the strictly-lower-triangular pairs.
    let mut v: u64 = 1;
    let mut w: i64 = -1;
    let n64 = n as u64;
    while v < n64 {
        let r: f64 = rng.gen::<f64>();
        let skip = ((1.0 - r).ln() / lq).floor() as i64;
        w += 1 + skip;
        while v < n64 && w >= v as i64 {
            w -= v as i64;
            v += 1;
        }
        if v < n64 {
            g.add_edge(w as NodeId, v as NodeId, 1.0);
        }
    }
    Ok(g)
}

/// Uniform random labeled tree on n nodes (Prüfer sequence), unit lengths.
pub fn random_tree(n: u32, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(TomoError::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    let mut g = Graph::with_nodes(n);
    g.set_bounds(1.0, 1.0);
    if n == 2 {
        g.add_edge(0, 1, 1.0);
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prufer: Vec<u32> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut deg = vec![1u32; n as usize];
    for &v in &prufer {
        deg[v as usize] += 1;
    }
    let mut leaves: BTreeSet<u32> = (0..n).filter(|&v| deg[v as usize] == 1).collect();
    for &v in &prufer {
        let leaf = *leaves.iter().next().unwrap();
        leaves.remove(&leaf);
        g.add_edge(leaf, v, 1.0);
        deg[v as usize] -= 1;
        if deg[v as usize] == 1 {
            leaves.insert(v);
        }
    }
    let rest: Vec<u32> = leaves.into_iter().collect();
    g.add_edge(rest[0], rest[1], 1.0);
    Ok(g)
}

/// Induced subgraph on the largest connected component; ties broken by the
/// smallest contained node id. The empty graph maps to itself.
pub fn giant_component(g: &Graph) -> Graph {
    let comps = g.components();
    match comps.iter().max_by_key(|c| (c.len(), std::cmp::Reverse(c[0]))) {
        None => Graph::new(),
        Some(best) => g.induced(&best.iter().copied().collect()),
    }
}

/// Iteratively removes hidden nodes of degree <= 1 and contracts hidden
/// nodes of degree 2, replacing their two incident edges by one edge whose
/// length is the sum, until no hidden node has degree <= 2. Participants
/// are never removed or contracted.
///
/// If a contraction would create a parallel edge, the shorter edge is kept;
/// a would-be self-loop drops both edges. The result records the longest
/// contracted chain so callers can derive effective length bounds.
pub fn minimal_representation(g: &Graph, participants: &BTreeSet<NodeId>) -> Graph {
    let mut out = g.clone();
    out.set_participants(participants.iter().copied());
    // Per-edge count of original edges merged into it.
    let mut chain: BTreeMap<(NodeId, NodeId), u32> = out.edges().map(|(u, v, _)| ((u, v), 1)).collect();
    let key = |a: NodeId, b: NodeId| (a.min(b), a.max(b));

    let mut work: BTreeSet<NodeId> = out
        .nodes()
        .filter(|&v| !out.is_participant(v) && out.degree(v) <= 2)
        .collect();

    while let Some(&h) = work.iter().next() {
        work.remove(&h);
        if !out.has_node(h) || out.is_participant(h) {
            continue;
        }
        let nbrs: Vec<(NodeId, f64)> = out.neighbors(h).collect();
        match nbrs.len() {
            0 | 1 => {
                for &(u, _) in &nbrs {
                    chain.remove(&key(h, u));
                }
                out.remove_node(h);
                for &(u, _) in &nbrs {
                    if !out.is_participant(u) && out.has_node(u) && out.degree(u) <= 2 {
                        work.insert(u);
                    }
                }
            }
            2 => {
                let (x, lx) = nbrs[0];
                let (y, ly) = nbrs[1];
                let cx = chain.remove(&key(h, x)).unwrap_or(1);
                let cy = chain.remove(&key(h, y)).unwrap_or(1);
                out.remove_node(h);
                let merged_len = lx + ly;
                let merged_chain = cx + cy;
                match out.edge_len(x, y) {
                    Some(existing) if existing <= merged_len => {
                        // Parallel edge: keep the shorter (the existing one).
                    }
                    _ => {
                        out.add_edge(x, y, merged_len);
                        chain.insert(key(x, y), merged_chain);
                    }
                }
                for &u in &[x, y] {
                    if !out.is_participant(u) && out.has_node(u) && out.degree(u) <= 2 {
                        work.insert(u);
                    }
                }
            }
            _ => {}
        }
    }

    out.max_chain = chain.values().copied().max().unwrap_or(1).max(g.max_chain);
    out
}

/// Per-length counts of simple cycles and of generalized cycles (connected
/// subgraphs with l nodes and l edges), for l up to the enumeration cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleCensus {
    pub max_len: usize,
    /// simple[l] = number of simple cycles with exactly l nodes (index 0..=max_len; entries < 3 are zero).
    pub simple: Vec<u64>,
    /// generalized[l] = number of connected subgraphs with l nodes and l edges.
    pub generalized: Vec<u64>,
}

const CENSUS_CAP: usize = 12;

/// Exhaustive cycle counts up to `max_len` (cap 12).
pub fn cycle_census(g: &Graph, max_len: usize) -> Result<CycleCensus> {
    if max_len > CENSUS_CAP {
        return Err(TomoError::Budget(format!(
            "cycle census capped at length {CENSUS_CAP}, requested {max_len}"
        )));
    }
    let mut simple = vec![0u64; max_len + 1];
    let mut cycles: Vec<Vec<NodeId>> = Vec::new();

    // Simple cycles, each enumerated once: rooted at their smallest node,
    // walking only through larger nodes, and keeping the direction where the
    // second node is smaller than the last.
    let node_list: Vec<NodeId> = g.nodes().collect();
    for &s in &node_list {
        let mut path = vec![s];
        let mut on_path: BTreeSet<NodeId> = [s].into_iter().collect();
        dfs_cycles(g, s, s, &mut path, &mut on_path, max_len, &mut |cyc| {
            simple[cyc.len()] += 1;
            cycles.push(cyc.to_vec());
        });
    }

    // Generalized cycles: grow tree attachments from each simple cycle. A
    // connected subgraph with l nodes and l edges has exactly one cycle, so
    // every such subgraph is counted under its unique base cycle.
    let mut generalized = vec![0u64; max_len + 1];
    for cyc in &cycles {
        let k = cyc.len();
        generalized[k] += 1;
        if k < max_len {
            let budget = max_len - k;
            let mut seen: BTreeSet<Vec<(NodeId, NodeId)>> = BTreeSet::new();
            let base: BTreeSet<NodeId> = cyc.iter().copied().collect();
            let mut extra_edges: Vec<(NodeId, NodeId)> = Vec::new();
            grow_trees(g, &base.clone(), base, budget, &mut extra_edges, &mut seen, &mut generalized);
        }
    }

    Ok(CycleCensus {
        max_len,
        simple,
        generalized,
    })
}

fn dfs_cycles(
    g: &Graph,
    root: NodeId,
    v: NodeId,
    path: &mut Vec<NodeId>,
    on_path: &mut BTreeSet<NodeId>,
    max_len: usize,
    emit: &mut impl FnMut(&[NodeId]),
) {
    for (u, _) in g.neighbors(v) {
        if u == root && path.len() >= 3 {
            // Count each cycle once by fixing the traversal direction.
            if path[1] < path[path.len() - 1] {
                emit(path);
            }
        }
        if u > root && !on_path.contains(&u) && path.len() < max_len {
            path.push(u);
            on_path.insert(u);
            dfs_cycles(g, root, u, path, on_path, max_len, emit);
            on_path.remove(&u);
            path.pop();
        }
    }
}

fn grow_trees(
    g: &Graph,
    nodes: &BTreeSet<NodeId>,
    base: BTreeSet<NodeId>,
    budget: usize,
    extra: &mut Vec<(NodeId, NodeId)>,
    seen: &mut BTreeSet<Vec<(NodeId, NodeId)>>,
    out: &mut [u64],
) {
    if budget == 0 {
        return;
    }
    // Candidate tree edges: from any current node to a fresh vertex.
    let mut cands: Vec<(NodeId, NodeId)> = Vec::new();
    for &v in nodes {
        for (u, _) in g.neighbors(v) {
            if !nodes.contains(&u) {
                cands.push((v.min(u), v.max(u)));
            }
        }
    }
    cands.sort_unstable();
    cands.dedup();
    for (v, u) in cands {
        let fresh = if nodes.contains(&v) { u } else { v };
        extra.push((v, u));
        let mut sig = extra.clone();
        sig.sort_unstable();
        if seen.insert(sig) {
            out[nodes.len() + 1] += 1;
            let mut next = nodes.clone();
            next.insert(fresh);
            grow_trees(g, &next, base.clone(), budget - 1, extra, seen, out);
        }
        extra.pop();
    }
}

/// Layer sizes |Γ_l(v)| for l = 0..=max_hops via breadth-first layering.
pub fn neighborhood_sizes(g: &Graph, v: NodeId, max_hops: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; max_hops + 1];
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
    dist.insert(v, 0);
    sizes[0] = 1;
    let mut frontier = vec![v];
    for hop in 1..=max_hops {
        let mut next = Vec::new();
        for &x in &frontier {
            for (u, _) in g.neighbors(x) {
                if !dist.contains_key(&u) {
                    dist.insert(u, hop);
                    next.push(u);
                }
            }
        }
        sizes[hop] = next.len();
        frontier = next;
    }
    sizes
}

/// Formats a length with 9 significant digits; round-trips through
/// `parse::<f64>()` unchanged at that precision.
pub fn fmt_len(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.8e}")
    }
}

/// Serializes in the interchange format: a `n <count>` header, one
/// `participants <id...>` line, then `edge <u> <v> <length>` records.
pub fn write_graph(g: &Graph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {}", g.node_count());
    let parts: Vec<String> = g.participants().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(s, "participants {}", parts.join(" "));
    for (u, v, l) in g.edges() {
        let _ = writeln!(s, "edge {u} {v} {}", fmt_len(l));
    }
    s
}

/// Parses the interchange format. The node set is reconstructed from the
/// participant and edge records; if the header count exceeds it, the
/// difference is restored as isolated hidden nodes with fresh ids (hidden
/// ids carry no cross-graph meaning).
pub fn read_graph(text: &str) -> Result<Graph> {
    let mut g = Graph::new();
    let mut declared: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().unwrap();
        let err = |msg: &str| TomoError::Parse(format!("line {}: {msg}", lineno + 1));
        match tag {
            "n" => {
                let c: usize = it
                    .next()
                    .ok_or_else(|| err("missing count"))?
                    .parse()
                    .map_err(|_| err("bad count"))?;
                declared = Some(c);
            }
            "participants" => {
                let ids: Vec<NodeId> = it
                    .map(|t| t.parse().map_err(|_| err("bad participant id")))
                    .collect::<Result<_>>()?;
                g.set_participants(ids);
            }
            "edge" => {
                let u: NodeId = it
                    .next()
                    .ok_or_else(|| err("missing u"))?
                    .parse()
                    .map_err(|_| err("bad u"))?;
                let v: NodeId = it
                    .next()
                    .ok_or_else(|| err("missing v"))?
                    .parse()
                    .map_err(|_| err("bad v"))?;
                let l: f64 = it
                    .next()
                    .ok_or_else(|| err("missing length"))?
                    .parse()
                    .map_err(|_| err("bad length"))?;
                if !(l.is_finite() && l > 0.0) {
                    return Err(err("length must be positive and finite"));
                }
                g.add_edge(u, v, l);
            }
            _ => return Err(err(&format!("unknown record `{tag}`"))),
        }
    }
    if let Some(count) = declared {
        let have = g.node_count();
        if have > count {
            return Err(TomoError::Parse(format!(
                "header declares {count} nodes but records mention {have}"
            )));
        }
        let mut next = g.nodes().max().map_or(0, |m| m + 1);
        for _ in have..count {
            g.add_node(next);
            next += 1;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: u32) -> Graph {
        let mut g = Graph::with_nodes(n);
        for v in 0..n - 1 {
            g.add_edge(v, v + 1, 1.0);
        }
        g
    }

    #[test]
    fn er_zero_probability_gives_empty_graph() {
        let g = generate_er(2, 0.0, 7).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn er_rejects_bad_parameters() {
        assert!(generate_er(1, 1.0, 0).is_err());
        assert!(generate_er(10, 10.0, 0).is_err());
        assert!(generate_er(10, -1.0, 0).is_err());
    }

    #[test]
    fn er_is_deterministic() {
        let a = generate_er(200, 3.0, 42).unwrap();
        let b = generate_er(200, 3.0, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_er(200, 3.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn er_mean_edge_count_matches_binomial_oracle() {
        // Oracle: E = C(n,2) * c/n, SE from per-trial binomial variance.
        let n = 5000u32;
        let c = 3.0;
        let trials = 200;
        let pairs = (n as f64) * (n as f64 - 1.0) / 2.0;
        let p = c / n as f64;
        let expect = pairs * p;
        let sd = (pairs * p * (1.0 - p)).sqrt();
        let se = sd / (trials as f64).sqrt();
        let mut total = 0usize;
        for s in 0..trials {
            total += generate_er(n, c, s as u64).unwrap().edge_count();
        }
        let mean = total as f64 / trials as f64;
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs {expect} (3se = {})",
            3.0 * se
        );
    }

    /// Fixed-point oracle for the giant-component survival probability:
    /// the positive root of x = 1 - exp(-c x).
    fn survival_fraction(c: f64) -> f64 {
        let mut x = 0.5;
        for _ in 0..200 {
            x = 1.0 - (-c * x).exp();
        }
        x
    }

    #[test]
    fn giant_fraction_matches_fixed_point_oracle() {
        let n = 1000u32;
        let c = 2.0;
        let trials = 200;
        let mut acc = 0.0;
        for s in 0..trials {
            let g = generate_er(n, c, 1000 + s as u64).unwrap();
            acc += giant_component(&g).node_count() as f64 / n as f64;
        }
        let mean = acc / trials as f64;
        let oracle = survival_fraction(c);
        assert!((oracle - 0.7968).abs() < 1e-3, "oracle sanity: {oracle}");
        assert!((mean - oracle).abs() < 0.02, "mean {mean} vs oracle {oracle}");
    }

    #[test]
    fn giant_component_is_large_at_c3() {
        let mut hits = 0;
        for s in 0..100u64 {
            let g = generate_er(1000, 3.0, 5000 + s).unwrap();
            if giant_component(&g).node_count() > 900 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "giant > 900 nodes in only {hits}/100 trials");
    }

    #[test]
    fn giant_component_of_connected_graph_is_itself() {
        let g = path_graph(5);
        assert_eq!(giant_component(&g), g);
    }

    #[test]
    fn giant_component_picks_larger() {
        let mut g = Graph::new();
        for v in 0..7 {
            g.add_edge(v, (v + 1) % 7, 1.0); // 7-cycle
        }
        g.add_edge(10, 11, 1.0);
        g.add_edge(11, 12, 1.0);
        let giant = giant_component(&g);
        assert_eq!(giant.node_count(), 7);
        assert!(giant.has_node(0) && !giant.has_node(10));
    }

    #[test]
    fn minimal_contracts_degree_two_chain() {
        // p1 - h1 - h2 - p2 with unit lengths -> single edge of length 3.
        let mut g = Graph::new();
        g.add_edge(0, 10, 1.0);
        g.add_edge(10, 11, 1.0);
        g.add_edge(11, 1, 1.0);
        let parts: BTreeSet<NodeId> = [0, 1].into_iter().collect();
        let m = minimal_representation(&g, &parts);
        assert_eq!(m.node_count(), 2);
        assert_eq!(m.edge_len(0, 1), Some(3.0));
        assert_eq!(m.max_chain(), 3);
    }

    #[test]
    fn minimal_removes_hidden_leaf() {
        let mut g = Graph::new();
        g.add_edge(0, 5, 1.0);
        let parts: BTreeSet<NodeId> = [0].into_iter().collect();
        let m = minimal_representation(&g, &parts);
        assert_eq!(m.node_count(), 1);
        assert_eq!(m.edge_count(), 0);
    }

    #[test]
    fn minimal_keeps_high_degree_star() {
        let mut g = Graph::new();
        for leaf in 0..4 {
            g.add_edge(100, leaf, 1.0);
        }
        let parts: BTreeSet<NodeId> = (0..4).collect();
        let m = minimal_representation(&g, &parts);
        assert_eq!(m, {
            let mut e = g.clone();
            e.set_participants(parts.clone());
            e
        });
    }

    #[test]
    fn minimal_parallel_edge_keeps_shorter() {
        // Hidden node on a 2-path shadowing a direct participant edge.
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(0, 9, 0.3);
        g.add_edge(9, 1, 0.3);
        let parts: BTreeSet<NodeId> = [0, 1].into_iter().collect();
        let m = minimal_representation(&g, &parts);
        assert_eq!(m.node_count(), 2);
        assert_eq!(m.edge_len(0, 1), Some(0.6));

        // And the other way: the chain is longer, the direct edge stays.
        let mut g2 = Graph::new();
        g2.add_edge(0, 1, 1.0);
        g2.add_edge(0, 9, 2.0);
        g2.add_edge(9, 1, 2.0);
        let m2 = minimal_representation(&g2, &parts);
        assert_eq!(m2.edge_len(0, 1), Some(1.0));
    }

    #[test]
    fn minimal_is_idempotent_and_leaves_no_low_degree_hidden() {
        for seed in 0..30u64 {
            let g = generate_er(60, 2.5, seed).unwrap();
            let parts: BTreeSet<NodeId> = g.nodes().filter(|v| v % 3 == 0).collect();
            let m1 = minimal_representation(&g, &parts);
            let p1 = m1.participants().clone();
            let m2 = minimal_representation(&m1, &p1);
            assert_eq!(m1.adj, m2.adj, "idempotence failed at seed {seed}");
            for v in m1.nodes() {
                if !m1.is_participant(v) {
                    assert!(m1.degree(v) >= 3, "hidden {v} has degree {}", m1.degree(v));
                }
            }
        }
    }

    #[test]
    fn random_tree_is_a_tree() {
        for seed in 0..40u64 {
            let n = 2 + (seed as u32 * 7) % 60;
            let t = random_tree(n, seed).unwrap();
            assert_eq!(t.node_count() as u32, n);
            assert_eq!(t.edge_count() as u32, n - 1);
            assert!(t.is_connected());
        }
    }

    #[test]
    fn census_triangle() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 0, 1.0);
        let c = cycle_census(&g, 3).unwrap();
        assert_eq!(c.simple[3], 1);
        assert_eq!(c.generalized[3], 1);
    }

    #[test]
    fn census_tree_is_zero() {
        let g = path_graph(10);
        let c = cycle_census(&g, 8).unwrap();
        assert!(c.simple.iter().all(|&x| x == 0));
        assert!(c.generalized.iter().all(|&x| x == 0));
    }

    #[test]
    fn census_generalized_counts_pendants() {
        // Triangle 0-1-2 plus pendant 3 attached to 0:
        // one 3-cycle, and one generalized 4-cycle (triangle + pendant edge).
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 0, 1.0);
        g.add_edge(0, 3, 1.0);
        let c = cycle_census(&g, 4).unwrap();
        assert_eq!(c.simple[3], 1);
        assert_eq!(c.simple[4], 0);
        assert_eq!(c.generalized[3], 1);
        assert_eq!(c.generalized[4], 1);
    }

    #[test]
    fn census_rejects_big_budget() {
        let g = path_graph(4);
        assert!(cycle_census(&g, 13).is_err());
    }

    #[test]
    fn census_four_cycles_match_counting_formula() {
        // Counting-argument oracle: E[#C4] = C(n,4) * 4!/(2*4) * (c/n)^4.
        let n = 500u32;
        let c = 3.0;
        let trials = 500;
        let nn = n as f64;
        let expect = nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0) / 24.0 * 3.0 * (c / nn).powi(4);
        let mut counts = Vec::with_capacity(trials);
        for s in 0..trials {
            let g = generate_er(n, c, 90_000 + s as u64).unwrap();
            counts.push(cycle_census(&g, 4).unwrap().simple[4] as f64);
        }
        let mean: f64 = counts.iter().sum::<f64>() / trials as f64;
        let var: f64 =
            counts.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs {expect} (3se {})",
            3.0 * se
        );
    }

    #[test]
    fn neighborhood_isolated_node() {
        let mut g = Graph::new();
        g.add_node(0);
        assert_eq!(neighborhood_sizes(&g, 0, 3), vec![1, 0, 0, 0]);
    }

    #[test]
    fn neighborhood_path_middle() {
        let g = path_graph(5);
        assert_eq!(neighborhood_sizes(&g, 2, 2), vec![1, 2, 2]);
    }

    #[test]
    fn graph_file_round_trip() {
        let mut g = generate_er(40, 2.0, 3).unwrap();
        g.set_participants([0, 3, 17]);
        for (u, v, _) in g.clone().edges() {
            g.add_edge(u, v, 0.5 + ((u * 7 + v) % 13) as f64 / 3.0);
        }
        let text = write_graph(&g);
        let h = read_graph(&text).unwrap();
        assert_eq!(g.participants(), h.participants());
        let ge: Vec<_> = g.edges().collect();
        let he: Vec<_> = h.edges().collect();
        assert_eq!(ge.len(), he.len());
        for ((u1, v1, l1), (u2, v2, l2)) in ge.iter().zip(he.iter()) {
            assert_eq!((u1, v1), (u2, v2));
            // Bit-faithful at 9 significant digits.
            assert_eq!(fmt_len(*l1), fmt_len(*l2));
        }
        assert_eq!(g.node_count(), h.node_count());
    }

    #[test]
    fn graph_file_restores_isolated_nodes() {
        let mut g = Graph::with_nodes(6);
        g.add_edge(0, 1, 1.0);
        g.set_participants([0, 1]);
        let h = read_graph(&write_graph(&g)).unwrap();
        assert_eq!(h.node_count(), 6);
        assert_eq!(h.edge_count(), 1);
    }
}
