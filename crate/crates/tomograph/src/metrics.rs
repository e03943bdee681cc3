//! Edit distance between graphs with shared labeled nodes, and the
//! non-identifiability search.
//!
//! The edit distance is the minimum L1 difference of full adjacency
//! matrices over bijections of the unlabeled (hidden) nodes, labeled nodes
//! held fixed; the smaller hidden set is padded with isolated unlabeled
//! nodes. Each differing undirected adjacency entry counts twice (full
//! symmetric matrix). Edge lengths are ignored.

use crate::error::{Result, TomoError};
use crate::graph::{Graph, NodeId};
use std::collections::{BTreeSet, HashMap};

/// Outcome of an edit-distance computation. Exact mode has
/// `lower == upper`; bounds mode sandwiches the true value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditDistanceResult {
    pub lower: u64,
    pub upper: u64,
    /// Hidden-node matching achieving `upper`; `None` entries are padding
    /// (isolated unlabeled nodes added to the smaller side).
    pub matching: Vec<(Option<NodeId>, Option<NodeId>)>,
    /// Number of isolated unlabeled padding nodes added.
    pub padded: usize,
}

impl EditDistanceResult {
    pub fn exact(&self) -> Option<u64> {
        (self.lower == self.upper).then_some(self.lower)
    }
}

const EXACT_HIDDEN_BUDGET: usize = 14;

/// Multi-word bitset helpers for hidden-hidden adjacency rows.
#[inline]
fn bit(row: &[u64], j: usize) -> u64 {
    row[j / 64] >> (j % 64) & 1
}

fn set_bit(row: &mut [u64], j: usize) {
    row[j / 64] |= 1 << (j % 64);
}

fn iter_bits(row: &[u64]) -> impl Iterator<Item = usize> + '_ {
    row.iter().enumerate().flat_map(|(w, &word)| {
        let mut word = word;
        std::iter::from_fn(move || {
            if word == 0 {
                None
            } else {
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + b)
            }
        })
    })
}

/// Bitset rows over labeled columns plus hidden-hidden adjacency rows;
/// everything the matcher needs, index-compressed.
struct MatchInstance {
    labeled: Vec<NodeId>,
    hidden_f: Vec<NodeId>,
    hidden_g: Vec<NodeId>,
    /// padded common hidden count
    h: usize,
    lab_rows_f: Vec<Vec<u64>>,
    lab_rows_g: Vec<Vec<u64>>,
    hid_adj_f: Vec<Vec<u64>>,
    hid_adj_g: Vec<Vec<u64>>,
    deg_f: Vec<u32>,
    deg_g: Vec<u32>,
    /// unordered labeled-labeled differences
    lab_lab: u64,
}

fn build_instance(f: &Graph, g: &Graph, labeled: &BTreeSet<NodeId>) -> Result<MatchInstance> {
    for &v in labeled {
        if !f.has_node(v) || !g.has_node(v) {
            return Err(TomoError::InvalidParameter(format!(
                "labeled node {v} missing from one of the graphs"
            )));
        }
    }
    let labeled_v: Vec<NodeId> = labeled.iter().copied().collect();
    let hidden_f: Vec<NodeId> = f.nodes().filter(|v| !labeled.contains(v)).collect();
    let hidden_g: Vec<NodeId> = g.nodes().filter(|v| !labeled.contains(v)).collect();
    let h = hidden_f.len().max(hidden_g.len());
    let lab_chunks = labeled_v.len().div_ceil(64);
    let hid_chunks = h.div_ceil(64).max(1);

    // Edge-driven fill: one pass over each graph's edges.
    let fill = |graph: &Graph,
                hidden: &[NodeId]|
     -> (Vec<Vec<u64>>, Vec<Vec<u64>>, BTreeSet<(NodeId, NodeId)>) {
        let hid_idx: HashMap<NodeId, usize> =
            hidden.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let lab_idx: HashMap<NodeId, usize> =
            labeled_v.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut lab_rows = vec![vec![0u64; lab_chunks]; h];
        let mut hid_adj = vec![vec![0u64; hid_chunks]; h];
        let mut lab_edges = BTreeSet::new();
        for (u, v, _) in graph.edges() {
            match (hid_idx.get(&u), hid_idx.get(&v)) {
                (Some(&i), Some(&j)) => {
                    set_bit(&mut hid_adj[i], j);
                    set_bit(&mut hid_adj[j], i);
                }
                (Some(&i), None) => set_bit(&mut lab_rows[i], lab_idx[&v]),
                (None, Some(&j)) => set_bit(&mut lab_rows[j], lab_idx[&u]),
                (None, None) => {
                    lab_edges.insert((u.min(v), u.max(v)));
                }
            }
        }
        (lab_rows, hid_adj, lab_edges)
    };

    let (lab_rows_f, hid_adj_f, lab_edges_f) = fill(f, &hidden_f);
    let (lab_rows_g, hid_adj_g, lab_edges_g) = fill(g, &hidden_g);
    let total_deg = |rows: &[Vec<u64>], adj: &[Vec<u64>]| -> Vec<u32> {
        (0..h)
            .map(|i| {
                rows[i].iter().map(|w| w.count_ones()).sum::<u32>()
                    + adj[i].iter().map(|w| w.count_ones()).sum::<u32>()
            })
            .collect()
    };
    let deg_f = total_deg(&lab_rows_f, &hid_adj_f);
    let deg_g = total_deg(&lab_rows_g, &hid_adj_g);
    let lab_lab = lab_edges_f.symmetric_difference(&lab_edges_g).count() as u64;

    Ok(MatchInstance {
        labeled: labeled_v,
        hidden_f,
        hidden_g,
        h,
        lab_rows_f,
        lab_rows_g,
        hid_adj_f,
        hid_adj_g,
        deg_f,
        deg_g,
        lab_lab,
    })
}

impl MatchInstance {
    fn lab_diff(&self, x: usize, y: usize) -> u64 {
        self.lab_rows_f[x]
            .iter()
            .zip(&self.lab_rows_g[y])
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum()
    }

    /// Unordered cost of a complete assignment perm[x] = y. Hidden-hidden
    /// differences counted as e_f + e_g − 2·(f-edges mapping onto g-edges).
    fn assignment_cost(&self, perm: &[usize]) -> u64 {
        let mut cost = self.lab_lab;
        for (x, &y) in perm.iter().enumerate() {
            cost += self.lab_diff(x, y);
        }
        let mut ef = 0u64;
        let mut eg = 0u64;
        let mut matched = 0u64;
        for x1 in 0..self.h {
            ef += self.hid_adj_f[x1].iter().map(|w| w.count_ones() as u64).sum::<u64>();
            eg += self.hid_adj_g[x1].iter().map(|w| w.count_ones() as u64).sum::<u64>();
            for x2 in iter_bits(&self.hid_adj_f[x1]) {
                if bit(&self.hid_adj_g[perm[x1]], perm[x2]) == 1 {
                    matched += 1;
                }
            }
        }
        cost + (ef + eg) / 2 - matched
    }

    fn result(&self, perm: &[usize], lower: u64, upper: u64) -> EditDistanceResult {
        let matching = perm
            .iter()
            .enumerate()
            .map(|(x, &y)| {
                (
                    self.hidden_f.get(x).copied(),
                    self.hidden_g.get(y).copied(),
                )
            })
            .collect();
        EditDistanceResult {
            lower,
            upper,
            matching,
            padded: 2 * self.h - self.hidden_f.len() - self.hidden_g.len(),
        }
    }
}

/// Exact edit distance by branch-and-bound over hidden-node bijections,
/// ordered by descending degree, with labeled-row and degree-alignment
/// admissible bounds. Hidden counts above the budget are an error directing
/// the caller to [`edit_distance_bounds`].
pub fn edit_distance_exact(
    f: &Graph,
    g: &Graph,
    labeled: &BTreeSet<NodeId>,
) -> Result<EditDistanceResult> {
    let inst = build_instance(f, g, labeled)?;
    if inst.h > EXACT_HIDDEN_BUDGET {
        return Err(TomoError::Budget(format!(
            "{} hidden nodes exceeds the exact budget of {EXACT_HIDDEN_BUDGET}; use edit_distance_bounds",
            inst.h
        )));
    }
    if inst.h == 0 {
        let cost = 2 * inst.lab_lab;
        return Ok(inst.result(&[], cost, cost));
    }

    // Process high-degree nodes first.
    let mut order: Vec<usize> = (0..inst.h).collect();
    order.sort_by_key(|&x| std::cmp::Reverse(inst.deg_f[x]));

    // Greedy warm start in that order.
    let mut greedy = vec![usize::MAX; inst.h];
    let mut used = vec![false; inst.h];
    for &x in &order {
        let mut best = (u64::MAX, usize::MAX);
        for y in 0..inst.h {
            if !used[y] {
                let d = inst.lab_diff(x, y)
                    + inst.deg_f[x].abs_diff(inst.deg_g[y]) as u64;
                if (d, y) < best {
                    best = (d, y);
                }
            }
        }
        greedy[x] = best.1;
        used[best.1] = true;
    }
    let mut best_cost = inst.assignment_cost(&greedy);
    let mut best_perm = greedy;

    struct Ctx<'a> {
        inst: &'a MatchInstance,
        order: &'a [usize],
        perm: Vec<usize>,
        used: u64,
        assigned: Vec<usize>, // f-indices in assignment order
    }

    fn bound_remaining(c: &Ctx, depth: usize) -> u64 {
        let inst = c.inst;
        let mut lab_min = 0u64;
        let mut degs_f: Vec<u32> = Vec::with_capacity(inst.h - depth);
        let mut degs_g: Vec<u32> = Vec::with_capacity(inst.h - depth);
        for &x in &c.order[depth..] {
            let mut m = u64::MAX;
            for y in 0..inst.h {
                if c.used >> y & 1 == 0 {
                    m = m.min(inst.lab_diff(x, y));
                }
            }
            lab_min += m;
            degs_f.push(inst.deg_f[x]);
        }
        for y in 0..inst.h {
            if c.used >> y & 1 == 0 {
                degs_g.push(inst.deg_g[y]);
            }
        }
        degs_f.sort_unstable();
        degs_g.sort_unstable();
        let aligned: u64 = degs_f
            .iter()
            .zip(&degs_g)
            .map(|(a, b)| a.abs_diff(*b) as u64)
            .sum();
        lab_min.max(aligned / 2)
    }

    fn descend(c: &mut Ctx, depth: usize, partial: u64, best_cost: &mut u64, best_perm: &mut Vec<usize>) {
        if depth == c.inst.h {
            if partial < *best_cost {
                *best_cost = partial;
                *best_perm = c.perm.clone();
            }
            return;
        }
        if partial + bound_remaining(c, depth) >= *best_cost {
            return;
        }
        let x = c.order[depth];
        for y in 0..c.inst.h {
            if c.used >> y & 1 == 1 {
                continue;
            }
            let mut delta = c.inst.lab_diff(x, y);
            for &x2 in &c.assigned {
                let ef = bit(&c.inst.hid_adj_f[x], x2);
                let eg = bit(&c.inst.hid_adj_g[y], c.perm[x2]);
                delta += (ef ^ eg) as u64;
            }
            let next = partial + delta;
            if next >= *best_cost {
                continue;
            }
            c.perm[x] = y;
            c.used |= 1 << y;
            c.assigned.push(x);
            descend(c, depth + 1, next, best_cost, best_perm);
            c.assigned.pop();
            c.used &= !(1 << y);
        }
        c.perm[x] = usize::MAX;
    }

    let mut ctx = Ctx {
        inst: &inst,
        order: &order,
        perm: vec![usize::MAX; inst.h],
        used: 0,
        assigned: Vec::with_capacity(inst.h),
    };
    descend(&mut ctx, 0, inst.lab_lab, &mut best_cost, &mut best_perm);

    let value = 2 * best_cost;
    Ok(inst.result(&best_perm, value, value))
}

/// Certified bounds for instances beyond the exact budget: the lower bound
/// is the larger of the edge-count bound and the labeled-submatrix exact
/// difference; the upper bound comes from greedy matching on neighborhood
/// signatures (sorted hop distances to labeled nodes) refined by local
/// swaps until no improving swap exists.
pub fn edit_distance_bounds(
    f: &Graph,
    g: &Graph,
    labeled: &BTreeSet<NodeId>,
) -> Result<EditDistanceResult> {
    let inst = build_instance(f, g, labeled)?;
    let lower = {
        let ef = f.edge_count() as i64;
        let eg = g.edge_count() as i64;
        (2 * (ef - eg).unsigned_abs()).max(2 * inst.lab_lab)
    };
    if inst.h == 0 {
        let cost = 2 * inst.lab_lab;
        return Ok(inst.result(&[], lower.min(cost), cost));
    }

    // Signature: sorted hop distances to labeled nodes (truncated), plus
    // degree. BFS once per labeled node.
    let sig = |graph: &Graph, hidden: &[NodeId], h: usize| -> Vec<Vec<u32>> {
        let mut sigs = vec![Vec::new(); h];
        let mut per_hidden: HashMap<NodeId, Vec<u32>> = hidden.iter().map(|&v| (v, Vec::new())).collect();
        for &l in &inst.labeled {
            if !graph.has_node(l) {
                continue;
            }
            let mut dist: HashMap<NodeId, u32> = HashMap::new();
            dist.insert(l, 0);
            let mut q = std::collections::VecDeque::from([l]);
            while let Some(v) = q.pop_front() {
                let dv = dist[&v];
                for (u, _) in graph.neighbors(v) {
                    if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                        e.insert(dv + 1);
                        q.push_back(u);
                    }
                }
            }
            for (&v, d) in per_hidden.iter_mut() {
                if let Some(&x) = dist.get(&v) {
                    d.push(x);
                }
            }
        }
        const SIG_LEN: usize = 12;
        for (i, &v) in hidden.iter().enumerate() {
            let mut d = per_hidden.remove(&v).unwrap();
            d.sort_unstable();
            d.truncate(SIG_LEN);
            sigs[i] = d;
        }
        sigs // padding rows stay empty
    };
    let sig_f = sig(f, &inst.hidden_f, inst.h);
    let sig_g = sig(g, &inst.hidden_g, inst.h);
    let sig_dist = |a: &[u32], b: &[u32]| -> u64 {
        let mut s = 0u64;
        let n = a.len().max(b.len());
        for k in 0..n {
            let x = a.get(k).copied().unwrap_or(1000);
            let y = b.get(k).copied().unwrap_or(1000);
            s += x.abs_diff(y) as u64;
        }
        s
    };

    let mut order: Vec<usize> = (0..inst.h).collect();
    order.sort_by_key(|&x| std::cmp::Reverse(inst.deg_f[x]));
    let mut perm = vec![usize::MAX; inst.h];
    let mut used = vec![false; inst.h];
    for &x in &order {
        let mut best = (u64::MAX, usize::MAX);
        for y in 0..inst.h {
            if !used[y] {
                let d = sig_dist(&sig_f[x], &sig_g[y]) * 4
                    + inst.lab_diff(x, y)
                    + inst.deg_f[x].abs_diff(inst.deg_g[y]) as u64;
                if (d, y) < best {
                    best = (d, y);
                }
            }
        }
        perm[x] = best.1;
        used[best.1] = true;
    }

    // Local swap refinement on the true objective. Only nodes adjacent to
    // x1, x2 or their images can change the hidden-hidden terms, so each
    // delta costs O(degree) rather than O(h).
    let mut inv = vec![usize::MAX; inst.h];
    for (x, &y) in perm.iter().enumerate() {
        inv[y] = x;
    }
    let mut cost = inst.assignment_cost(&perm);
    let pair_delta = |perm: &[usize], inv: &[usize], x1: usize, x2: usize| -> i64 {
        let (y1, y2) = (perm[x1], perm[x2]);
        let mut delta = inst.lab_diff(x1, y2) as i64 + inst.lab_diff(x2, y1) as i64
            - inst.lab_diff(x1, y1) as i64
            - inst.lab_diff(x2, y2) as i64;
        let mut touched: Vec<usize> = iter_bits(&inst.hid_adj_f[x1])
            .chain(iter_bits(&inst.hid_adj_f[x2]))
            .chain(iter_bits(&inst.hid_adj_g[y1]).map(|y3| inv[y3]))
            .chain(iter_bits(&inst.hid_adj_g[y2]).map(|y3| inv[y3]))
            .filter(|&x3| x3 != x1 && x3 != x2)
            .collect();
        touched.sort_unstable();
        touched.dedup();
        for x3 in touched {
            let y3 = perm[x3];
            let e1 = bit(&inst.hid_adj_f[x1], x3);
            let e2 = bit(&inst.hid_adj_f[x2], x3);
            let old1 = bit(&inst.hid_adj_g[y1], y3);
            let old2 = bit(&inst.hid_adj_g[y2], y3);
            delta += ((e1 ^ old2) as i64 - (e1 ^ old1) as i64)
                + ((e2 ^ old1) as i64 - (e2 ^ old2) as i64);
        }
        // The (x1,x2) pair itself is symmetric under the swap.
        delta
    };
    for _pass in 0..8 {
        let mut improved = false;
        for x1 in 0..inst.h {
            for x2 in (x1 + 1)..inst.h {
                let d = pair_delta(&perm, &inv, x1, x2);
                if d < 0 {
                    inv.swap(perm[x1], perm[x2]);
                    perm.swap(x1, x2);
                    cost = (cost as i64 + d) as u64;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let upper = 2 * cost;
    Ok(inst.result(&perm, lower.min(upper), upper))
}

/// Maximum relative length error over edges matched by `matching`, for
/// reporting alongside the adjacency-only edit distance.
pub fn max_length_error(
    f: &Graph,
    g: &Graph,
    labeled: &BTreeSet<NodeId>,
    matching: &[(Option<NodeId>, Option<NodeId>)],
) -> f64 {
    let mut map: HashMap<NodeId, NodeId> = labeled.iter().map(|&v| (v, v)).collect();
    for &(a, b) in matching {
        if let (Some(a), Some(b)) = (a, b) {
            map.insert(a, b);
        }
    }
    let mut worst = 0.0f64;
    for (u, v, lf) in f.edges() {
        if let (Some(&gu), Some(&gv)) = (map.get(&u), map.get(&v)) {
            if let Some(lg) = g.edge_len(gu, gv) {
                worst = worst.max((lf - lg).abs() / lg.max(1e-12));
            }
        }
    }
    worst
}

/// Samples `trials` fresh draws of G(n, c/n) and reports the exact edit
/// distance of each from `fixed` with no labeled nodes: the desk-scale
/// companion of the random-graph distance floor.
pub fn random_graph_distance_floor(
    n: u32,
    c: f64,
    trials: u32,
    fixed: &Graph,
    seed: u64,
) -> Result<Vec<u64>> {
    if n > 12 {
        return Err(TomoError::Budget(format!(
            "exact mode is capped at n = 12 (asked for {n})"
        )));
    }
    let empty = BTreeSet::new();
    let mut out = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let g = crate::graph::generate_er(n, c, seed.wrapping_add(t as u64))?;
        out.push(edit_distance_exact(fixed, &g, &empty)?.exact().expect("exact mode"));
    }
    Ok(out)
}

/// A pair of non-isomorphic minimal unit-length graphs with identical
/// all-simple-path length profiles between the shared labeled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguousPair {
    pub first: Graph,
    pub second: Graph,
}

const SEARCH_NODE_BUDGET: u32 = 8;

/// Exhaustive search for a witness that distinct topologies can be
/// indistinguishable even given every path length between participants.
///
/// Enumerates connected unit-length minimal graphs (hidden degrees >= 3)
/// in phases of (participants p, hidden h), p from `min_participants`
/// upward and h ascending, comparing all-simple-path length multisets per
/// labeled pair within and across phases. Returns the first equal-profile
/// non-isomorphic pair, or `None` when the envelope holds none.
///
/// Phases with h = 0 cannot contribute: the number of length-1 paths
/// between a labeled pair is the adjacency bit, so fully labeled graphs
/// with equal profiles are identical.
pub fn identifiability_search(
    max_nodes: u32,
    min_participants: u32,
) -> Result<Option<AmbiguousPair>> {
    if max_nodes > SEARCH_NODE_BUDGET {
        return Err(TomoError::Budget(format!(
            "identifiability search capped at {SEARCH_NODE_BUDGET} nodes (asked for {max_nodes})"
        )));
    }
    if min_participants < 2 || min_participants > max_nodes {
        return Err(TomoError::InvalidParameter(format!(
            "need 2 <= min_participants <= max_nodes, got {min_participants}/{max_nodes}"
        )));
    }
    // Cumulative (cheap key, phase index, mask) across phases, kept sorted.
    let mut seen: Vec<(u64, u32, u64)> = Vec::new();
    let mut phases: Vec<Phase> = Vec::new();
    for p in min_participants..=max_nodes {
        for h in 1..=(max_nodes - p) {
            let phase = Phase::new(p, h);
            let idx = phases.len() as u32;
            let mut fresh: Vec<(u64, u32, u64)> = Vec::new();
            phase.enumerate(|mask, adj| {
                fresh.push((cheap_key(adj, p), idx, mask));
            });
            fresh.sort_unstable();
            if let Some(pair) = scan_collisions(&fresh, &seen, &phases, &phase)? {
                return Ok(Some(pair));
            }
            let mut merged = Vec::with_capacity(seen.len() + fresh.len());
            merged.extend_from_slice(&seen);
            merged.extend_from_slice(&fresh);
            merged.sort_unstable();
            seen = merged;
            phases.push(phase);
        }
    }
    Ok(None)
}

/// Bit layout for one (p, h) phase: participant-participant pairs first,
/// then participant-hidden bits (grouped per participant), then
/// hidden-hidden pairs. Hidden permutations act within the per-participant
/// groups and on the hidden-pair block, so canonicalization is a handful
/// of table lookups.
struct Phase {
    p: u32,
    h: u32,
    pp_bits: u32,
    ph_bits: u32,
    hh_bits: u32,
    pp_pairs: Vec<(u32, u32)>,
    hh_pairs: Vec<(u32, u32)>,
    /// Per permutation: remap table for a participant's h-bit hidden group.
    perm_ph: Vec<Vec<u16>>,
    /// Per permutation: remap table for the hidden-pair block.
    perm_hh: Vec<Vec<u16>>,
}

impl Phase {
    fn new(p: u32, h: u32) -> Phase {
        let pp_pairs: Vec<(u32, u32)> =
            (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).collect();
        let hh_pairs: Vec<(u32, u32)> =
            (0..h).flat_map(|a| ((a + 1)..h).map(move |b| (a, b))).collect();
        let pp_bits = pp_pairs.len() as u32;
        let ph_bits = p * h;
        let hh_bits = hh_pairs.len() as u32;

        let mut perms: Vec<Vec<u32>> = Vec::new();
        let mut idx: Vec<u32> = (0..h).collect();
        permutations(&mut idx, 0, &mut perms);
        let hh_index = |a: u32, b: u32| -> usize {
            let (a, b) = (a.min(b), a.max(b));
            hh_pairs.iter().position(|&x| x == (a, b)).unwrap()
        };
        let mut perm_ph = Vec::new();
        let mut perm_hh = Vec::new();
        for perm in &perms {
            let mut tbl_ph = vec![0u16; 1 << h];
            for bits in 0..(1u32 << h) {
                let mut out = 0u32;
                for a in 0..h {
                    if bits >> a & 1 == 1 {
                        out |= 1 << perm[a as usize];
                    }
                }
                tbl_ph[bits as usize] = out as u16;
            }
            let mut tbl_hh = vec![0u16; 1 << hh_bits];
            for bits in 0..(1u32 << hh_bits) {
                let mut out = 0u32;
                for (t, &(a, b)) in hh_pairs.iter().enumerate() {
                    if bits >> t & 1 == 1 {
                        out |= 1 << hh_index(perm[a as usize], perm[b as usize]);
                    }
                }
                tbl_hh[bits as usize] = out as u16;
            }
            perm_ph.push(tbl_ph);
            perm_hh.push(tbl_hh);
        }
        Phase {
            p,
            h,
            pp_bits,
            ph_bits,
            hh_bits,
            pp_pairs,
            hh_pairs,
            perm_ph,
            perm_hh,
        }
    }

    fn ph_bit(&self, i: u32, a: u32) -> u32 {
        self.pp_bits + i * self.h + a
    }

    /// Smallest mask over hidden relabelings.
    fn canonical(&self, mask: u64) -> u64 {
        if self.h < 2 {
            return mask;
        }
        let pp = mask & ((1u64 << self.pp_bits) - 1);
        let hh = mask >> (self.pp_bits + self.ph_bits);
        let mut best = mask;
        for (tbl_ph, tbl_hh) in self.perm_ph.iter().zip(&self.perm_hh) {
            let mut m = pp;
            for i in 0..self.p {
                let grp = (mask >> self.ph_bit(i, 0)) & ((1u64 << self.h) - 1);
                m |= (tbl_ph[grp as usize] as u64) << self.ph_bit(i, 0);
            }
            m |= (tbl_hh[hh as usize] as u64) << (self.pp_bits + self.ph_bits);
            if m < best {
                best = m;
            }
        }
        best
    }

    fn adjacency(&self, mask: u64) -> [u32; 8] {
        let mut adj = [0u32; 8];
        let mut link = |x: u32, y: u32| {
            adj[x as usize] |= 1 << y;
            adj[y as usize] |= 1 << x;
        };
        for (t, &(i, j)) in self.pp_pairs.iter().enumerate() {
            if mask >> t & 1 == 1 {
                link(i, j);
            }
        }
        for i in 0..self.p {
            for a in 0..self.h {
                if mask >> self.ph_bit(i, a) & 1 == 1 {
                    link(i, self.p + a);
                }
            }
        }
        for (t, &(a, b)) in self.hh_pairs.iter().enumerate() {
            if mask >> (self.pp_bits + self.ph_bits + t as u32) & 1 == 1 {
                link(self.p + a, self.p + b);
            }
        }
        adj
    }

    fn graph(&self, mask: u64) -> Graph {
        let adj = self.adjacency(mask);
        let k = self.p + self.h;
        let mut g = Graph::new();
        for v in 0..k {
            g.add_node(v);
        }
        for x in 0..k {
            for y in (x + 1)..k {
                if adj[x as usize] >> y & 1 == 1 {
                    g.add_edge(x, y, 1.0);
                }
            }
        }
        g.set_participants(0..self.p);
        g
    }

    /// Enumerates canonical connected minimal graphs: hidden rows are drawn
    /// from precomputed degree-feasible lists, adjacency is assembled
    /// incrementally, and only masks that are canonical under hidden
    /// relabeling are emitted.
    fn enumerate(&self, mut emit: impl FnMut(u64, &[u32; 8])) {
        let p = self.p;
        let h = self.h;
        // Participant-bit masks with popcount >= d, for d = 0..=3.
        let rows_by_min: Vec<Vec<u32>> = (0..=3u32)
            .map(|d| (0..(1u32 << p)).filter(|m| m.count_ones() >= d).collect())
            .collect();
        let full: u32 = (1 << (p + h)) - 1;
        for hh in 0..(1u64 << self.hh_bits) {
            let mut d_hh = vec![0u32; h as usize];
            for (t, &(a, b)) in self.hh_pairs.iter().enumerate() {
                if hh >> t & 1 == 1 {
                    d_hh[a as usize] += 1;
                    d_hh[b as usize] += 1;
                }
            }
            let needs: Vec<&Vec<u32>> = (0..h)
                .map(|a| &rows_by_min[3usize.saturating_sub(d_hh[a as usize] as usize)])
                .collect();
            // Base adjacency from the hidden-hidden block.
            let mut base = [0u32; 8];
            for (t, &(a, b)) in self.hh_pairs.iter().enumerate() {
                if hh >> t & 1 == 1 {
                    base[(p + a) as usize] |= 1 << (p + b);
                    base[(p + b) as usize] |= 1 << (p + a);
                }
            }
            let mut rows = vec![0u32; h as usize];
            self.rows_recurse(0, &needs, &mut rows, &base, hh, full, &mut emit);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rows_recurse(
        &self,
        a: u32,
        needs: &[&Vec<u32>],
        rows: &mut Vec<u32>,
        adj: &[u32; 8],
        hh: u64,
        full: u32,
        emit: &mut impl FnMut(u64, &[u32; 8]),
    ) {
        if a == self.h {
            // Participant-participant bits are free; hidden structure is
            // fixed here, so hoist connectivity pieces where possible.
            for pp in 0..(1u64 << self.pp_bits) {
                let mut final_adj = *adj;
                for (t, &(i, j)) in self.pp_pairs.iter().enumerate() {
                    if pp >> t & 1 == 1 {
                        final_adj[i as usize] |= 1 << j;
                        final_adj[j as usize] |= 1 << i;
                    }
                }
                if !connected(&final_adj, self.p + self.h) {
                    continue;
                }
                let mut mask = pp;
                for i in 0..self.p {
                    for (aa, &row) in rows.iter().enumerate() {
                        if row >> i & 1 == 1 {
                            mask |= 1u64 << self.ph_bit(i, aa as u32);
                        }
                    }
                }
                mask |= hh << (self.pp_bits + self.ph_bits);
                if self.canonical(mask) != mask {
                    continue;
                }
                emit(mask, &final_adj);
            }
            return;
        }
        for &row in needs[a as usize] {
            let mut next = *adj;
            for i in 0..self.p {
                if row >> i & 1 == 1 {
                    next[i as usize] |= 1 << (self.p + a);
                    next[(self.p + a) as usize] |= 1 << i;
                }
            }
            rows[a as usize] = row;
            self.rows_recurse(a + 1, needs, rows, &next, hh, full, emit);
        }
        rows[a as usize] = 0;
    }
}

fn permutations(idx: &mut Vec<u32>, k: usize, out: &mut Vec<Vec<u32>>) {
    if k == idx.len() {
        out.push(idx.clone());
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permutations(idx, k + 1, out);
        idx.swap(k, i);
    }
}

fn connected(adj: &[u32; 8], k: u32) -> bool {
    let mut seen: u32 = 1;
    let mut frontier: u32 = 1;
    while frontier != 0 {
        let v = frontier.trailing_zeros();
        frontier &= frontier - 1;
        let fresh = adj[v as usize] & !seen;
        seen |= fresh;
        frontier |= fresh;
    }
    seen.count_ones() == k
}

/// Profile-determined invariant, cheap to compute: counts of simple paths
/// of lengths 1, 2 and 3 for every labeled pair, hashed. Equal profiles
/// imply equal keys, so grouping by key loses no candidate pairs.
fn cheap_key(adj: &[u32; 8], p: u32) -> u64 {
    let mut hsh: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u32| {
        hsh ^= b as u64;
        hsh = hsh.wrapping_mul(0x1_0000_0193);
    };
    for i in 0..p {
        for j in (i + 1)..p {
            let c1 = adj[i as usize] >> j & 1;
            let c2 = (adj[i as usize] & adj[j as usize]).count_ones();
            let mut c3 = 0u32;
            let mut ks = adj[i as usize] & !(1 << j);
            while ks != 0 {
                let k = ks.trailing_zeros();
                ks &= ks - 1;
                c3 += (adj[k as usize] & adj[j as usize] & !(1 << i) & !(1 << k)).count_ones();
            }
            eat(c1);
            eat(c2);
            eat(c3);
        }
    }
    hsh
}

/// Sorted multiset of simple-path lengths for every labeled pair.
fn full_profile(adj: &[u32; 8], p: u32) -> Vec<Vec<u8>> {
    let mut profile = Vec::with_capacity((p * (p - 1) / 2) as usize);
    for i in 0..p {
        for j in (i + 1)..p {
            let mut lens: Vec<u8> = Vec::new();
            dfs_paths(adj, i, j, 1 << i, 0, &mut lens);
            lens.sort_unstable();
            profile.push(lens);
        }
    }
    profile
}

fn dfs_paths(adj: &[u32; 8], cur: u32, target: u32, visited: u32, len: u8, out: &mut Vec<u8>) {
    let mut next = adj[cur as usize] & !visited;
    while next != 0 {
        let v = next.trailing_zeros();
        next &= next - 1;
        if v == target {
            out.push(len + 1);
        } else {
            dfs_paths(adj, v, target, visited | (1 << v), len + 1, out);
        }
    }
}

/// Checks key collisions inside the fresh phase and against earlier
/// phases; verifies candidates by full profile and returns the earliest
/// confirmed pair. Distinct canonical masks within a phase are
/// non-isomorphic by construction; graphs from different phases have
/// different hidden counts with no isolated hidden nodes, so they are
/// never isomorphic either.
fn scan_collisions(
    fresh: &[(u64, u32, u64)],
    seen: &[(u64, u32, u64)],
    phases: &[Phase],
    current: &Phase,
) -> Result<Option<AmbiguousPair>> {
    let phase_of = |idx: u32| -> &Phase {
        if (idx as usize) < phases.len() {
            &phases[idx as usize]
        } else {
            current
        }
    };
    // Participant counts must match for profiles to be comparable.
    let mut candidates: Vec<((u32, u64), (u32, u64))> = Vec::new();
    let mut i = 0;
    while i < fresh.len() {
        let mut j = i + 1;
        while j < fresh.len() && fresh[j].0 == fresh[i].0 {
            j += 1;
        }
        // in-phase groups
        for x in i..j {
            for y in (x + 1)..j {
                candidates.push(((fresh[x].1, fresh[x].2), (fresh[y].1, fresh[y].2)));
            }
        }
        // against earlier phases
        let key = fresh[i].0;
        let lo = seen.partition_point(|e| e.0 < key);
        let hi = seen.partition_point(|e| e.0 <= key);
        for old in &seen[lo..hi] {
            if phase_of(old.1).p == current.p {
                for x in i..j {
                    candidates.push(((old.1, old.2), (fresh[x].1, fresh[x].2)));
                }
            }
        }
        i = j;
    }
    candidates.sort_unstable_by_key(|&(a, b)| (b, a));
    for ((pa, ma), (pb, mb)) in candidates {
        let ph_a = phase_of(pa);
        let ph_b = phase_of(pb);
        let adj_a = ph_a.adjacency(ma);
        let adj_b = ph_b.adjacency(mb);
        if full_profile(&adj_a, ph_a.p) == full_profile(&adj_b, ph_b.p) {
            let first = ph_a.graph(ma);
            let second = ph_b.graph(mb);
            debug_assert_ne!(
                edit_distance_exact(&first, &second, &(0..ph_a.p).collect())?.exact(),
                Some(0)
            );
            return Ok(Some(AmbiguousPair { first, second }));
        }
    }
    Ok(None)
}

/// Re-derives the all-paths profile of a unit-length graph for independent
/// verification of a returned pair.
pub fn all_paths_profile(g: &Graph, labeled: &BTreeSet<NodeId>) -> Vec<(NodeId, NodeId, Vec<u32>)> {
    fn dfs(
        g: &Graph,
        cur: NodeId,
        target: NodeId,
        visited: &mut BTreeSet<NodeId>,
        len: u32,
        out: &mut Vec<u32>,
    ) {
        for (u, _) in g.neighbors(cur) {
            if u == target {
                out.push(len + 1);
            } else if !visited.contains(&u) {
                visited.insert(u);
                dfs(g, u, target, visited, len + 1, out);
                visited.remove(&u);
            }
        }
    }
    let ids: Vec<NodeId> = labeled.iter().copied().collect();
    let mut profile = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let mut lens = Vec::new();
            let mut visited: BTreeSet<NodeId> = [i].into_iter().collect();
            dfs(g, i, j, &mut visited, 0, &mut lens);
            lens.sort_unstable();
            profile.push((i, j, lens));
        }
    }
    profile
}
