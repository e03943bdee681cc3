//! Four-point (quartet) tests over participant distances.
//!
//! For four endpoints with the six pairwise distances, the three pairings
//! s₁ = d(a,b)+d(u,v), s₂ = d(a,u)+d(b,v), s₃ = d(a,v)+d(b,u) decide the
//! quartet: one pairing strictly smallest and the two larger ones equal
//! means the points realize Q(ab|uv) with a positive middle edge; all three
//! equal means a star (zero-length middle); the two larger pairings
//! disagreeing is an inconsistency — the signature of a cycle crossing the
//! middle of the quartet, and the reason the equality form of the test is
//! used here rather than the inequality form alone.

use crate::delay::DistanceEstimates;
use crate::error::{Result, TomoError};
use crate::graph::NodeId;

/// Which endpoint (by sorted position) pairs with the smallest endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Partition {
    /// {e0,e1} | {e2,e3}
    P01,
    /// {e0,e2} | {e1,e3}
    P02,
    /// {e0,e3} | {e1,e2}
    P03,
    /// All three pairings agree: zero-length middle edge.
    Star,
}

/// Outcome of the four-point test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourPoint {
    Split(Partition),
    Star,
    /// The two larger pairings differ beyond tolerance: no additive-metric
    /// quartet explains these distances.
    Inconsistent,
}

/// Pair order for sorted endpoints [e0,e1,e2,e3]:
/// (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub fn pair_index(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        (2, 3) => 5,
        _ => panic!("positions must be distinct and < 4"),
    }
}

/// Classifies six pairwise distances (in [`PAIRS`] order).
pub fn four_point_classify(d: &[f64; 6], tol: f64) -> Result<FourPoint> {
    if d.iter().any(|x| !x.is_finite()) || !(tol > 0.0) {
        return Err(TomoError::InvalidParameter(
            "four-point test needs finite distances and tol > 0".into(),
        ));
    }
    let sums = [d[0] + d[5], d[1] + d[4], d[2] + d[3]];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| sums[x].total_cmp(&sums[y]));
    let (lo, mid, hi) = (sums[order[0]], sums[order[1]], sums[order[2]]);
    if hi - lo <= tol {
        return Ok(FourPoint::Star);
    }
    if hi - mid <= tol {
        let p = match order[0] {
            0 => Partition::P01,
            1 => Partition::P02,
            _ => Partition::P03,
        };
        return Ok(FourPoint::Split(p));
    }
    Ok(FourPoint::Inconsistent)
}

/// A classified quartet: endpoints, partition, the six input distances,
/// which matrix each came from, the five solved internal lengths, and the
/// residual of the overdetermined linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct Quartet {
    /// Sorted ascending.
    pub endpoints: [NodeId; 4],
    pub partition: Partition,
    /// Input distances in [`PAIRS`] order.
    pub dists: [f64; 6],
    /// Bit k set means pair k's distance came from the second-shortest
    /// matrix.
    pub kinds: u8,
    /// (a,h1), (b,h1), (h1,h2), (h2,u), (h2,v) where (a,b) is the side
    /// containing the smallest endpoint.
    pub internal: [f64; 5],
    /// Max absolute violation across the six path-sum equations.
    pub residual: f64,
}

impl Quartet {
    /// Side roles (a, b, u, v) as positions into `endpoints`: (a,b) is the
    /// side containing position 0.
    pub fn side_positions(&self) -> ([usize; 2], [usize; 2]) {
        match self.partition {
            Partition::P01 | Partition::Star => ([0, 1], [2, 3]),
            Partition::P02 => ([0, 2], [1, 3]),
            Partition::P03 => ([0, 3], [1, 2]),
        }
    }

    pub fn middle(&self) -> f64 {
        self.internal[2]
    }

    /// Arm length from an endpoint (by position) to its hidden junction.
    pub fn arm(&self, pos: usize) -> f64 {
        let (s0, s1) = self.side_positions();
        if pos == s0[0] {
            self.internal[0]
        } else if pos == s0[1] {
            self.internal[1]
        } else if pos == s1[0] {
            self.internal[3]
        } else if pos == s1[1] {
            self.internal[4]
        } else {
            panic!("position out of range")
        }
    }

    /// Distance between two endpoints as implied by the solved internal
    /// lengths (same side: sum of arms; across: arms plus middle).
    pub fn implied(&self, p: usize, q: usize) -> f64 {
        let (s0, _s1) = self.side_positions();
        let same_side = (s0.contains(&p) && s0.contains(&q)) || (!s0.contains(&p) && !s0.contains(&q));
        if same_side {
            self.arm(p) + self.arm(q)
        } else {
            self.arm(p) + self.middle() + self.arm(q)
        }
    }

    /// Input distance between endpoint positions.
    pub fn dist(&self, p: usize, q: usize) -> f64 {
        self.dists[pair_index(p, q)]
    }
}

/// Solves the five internal lengths from the six distances for a given
/// partition. The middle edge is (d(a,u)+d(b,v)−d(a,b)−d(u,v))/2; arms
/// average the two redundant route solutions (the least-squares resolution
/// of the overdetermined system). Arms negative beyond `tol` are a
/// degenerate-quartet error; small negatives clamp to zero.
pub fn solve_quartet_lengths(
    endpoints: [NodeId; 4],
    d: &[f64; 6],
    partition: Partition,
    kinds: u8,
    tol: f64,
) -> Result<Quartet> {
    let (s0, s1) = match partition {
        Partition::P01 | Partition::Star => ([0usize, 1], [2usize, 3]),
        Partition::P02 => ([0, 2], [1, 3]),
        Partition::P03 => ([0, 3], [1, 2]),
    };
    let (a, b, u, v) = (s0[0], s0[1], s1[0], s1[1]);
    let dab = d[pair_index(a, b)];
    let duv = d[pair_index(u, v)];
    let dau = d[pair_index(a, u)];
    let dav = d[pair_index(a, v)];
    let dbu = d[pair_index(b, u)];
    let dbv = d[pair_index(b, v)];

    let middle = if partition == Partition::Star {
        0.0
    } else {
        0.5 * (dau + dbv - dab - duv)
    };
    let arm_a = 0.25 * (2.0 * dab + dau + dav - dbu - dbv);
    let arm_b = dab - arm_a;
    let arm_u = 0.25 * (2.0 * duv + dau + dbu - dav - dbv);
    let arm_v = duv - arm_u;

    let mut lengths = [arm_a, arm_b, middle, arm_u, arm_v];
    for x in &mut lengths {
        if *x < -tol {
            return Err(TomoError::DegenerateQuartet(format!(
                "negative internal length {x} (tol {tol})"
            )));
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let [arm_a, arm_b, middle, arm_u, arm_v] = lengths;

    let mut residual = 0.0f64;
    for (pair, expect) in [
        ((a, b), arm_a + arm_b),
        ((u, v), arm_u + arm_v),
        ((a, u), arm_a + middle + arm_u),
        ((a, v), arm_a + middle + arm_v),
        ((b, u), arm_b + middle + arm_u),
        ((b, v), arm_b + middle + arm_v),
    ] {
        residual = residual.max((d[pair_index(pair.0, pair.1)] - expect).abs());
    }

    Ok(Quartet {
        endpoints,
        partition,
        dists: *d,
        kinds,
        internal: lengths,
        residual,
    })
}

/// Streaming enumeration of short quartets in canonical order (sorted by
/// endpoint ids, then partition). `use_s2` switches on the scenario-2
/// combination search over shortest/second-shortest assignments.
pub(crate) fn for_each_quartet(
    est: &DistanceEstimates,
    bound: f64,
    tol: f64,
    use_s2: bool,
    mut emit: impl FnMut(Quartet),
) {
    let parts: Vec<NodeId> = est.participants().to_vec();
    let k = parts.len();
    if k < 4 {
        return;
    }
    // close[p] = positions q > p usable under the bound.
    let usable = |i: NodeId, j: NodeId| -> bool {
        est.shortest(i, j) < bound || (use_s2 && est.second(i, j) < bound)
    };
    let mut close: Vec<Vec<u32>> = vec![Vec::new(); k];
    for p in 0..k {
        for q in (p + 1)..k {
            if usable(parts[p], parts[q]) {
                close[p].push(q as u32);
            }
        }
    }
    let mut inter_b: Vec<u32> = Vec::new();
    let mut inter_u: Vec<u32> = Vec::new();
    for pa in 0..k {
        let ca = &close[pa];
        for (ib, &pb) in ca.iter().enumerate() {
            inter_b.clear();
            intersect_after(&ca[ib + 1..], &close[pb as usize], &mut inter_b);
            for (iu, &pu) in inter_b.iter().enumerate() {
                inter_u.clear();
                intersect_after(&inter_b[iu + 1..], &close[pu as usize], &mut inter_u);
                for &pv in &inter_u {
                    evaluate_subset(
                        est,
                        [pa as u32, pb, pu, pv],
                        &parts,
                        bound,
                        tol,
                        use_s2,
                        &mut emit,
                    );
                }
            }
        }
    }
}

/// Intersection of two ascending position lists (`a` already restricted to
/// a tail).
fn intersect_after(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
}

fn evaluate_subset(
    est: &DistanceEstimates,
    pos: [u32; 4],
    parts: &[NodeId],
    bound: f64,
    tol: f64,
    use_s2: bool,
    emit: &mut impl FnMut(Quartet),
) {
    let ids = [
        parts[pos[0] as usize],
        parts[pos[1] as usize],
        parts[pos[2] as usize],
        parts[pos[3] as usize],
    ];
    let mut d1 = [0.0f64; 6];
    let mut d2 = [f64::INFINITY; 6];
    for (t, &(x, y)) in PAIRS.iter().enumerate() {
        d1[t] = est.shortest(ids[x], ids[y]);
        if use_s2 {
            d2[t] = est.second(ids[x], ids[y]);
        }
    }

    if !use_s2 {
        if d1.iter().any(|&x| x >= bound) {
            return;
        }
        if let Ok(FourPoint::Split(p)) = four_point_classify(&d1, tol) {
            if let Ok(q) = solve_quartet_lengths(ids, &d1, p, 0, tol) {
                emit(q);
            }
        }
        return;
    }

    // Scenario 2: all admissible shortest/second assignments; per
    // partition, keep the one with the smallest middle edge.
    let mut forced: u8 = 0; // pairs where only the second distance fits
    let mut free: u8 = 0; // pairs where both fit
    for t in 0..6 {
        let s_ok = d1[t] < bound;
        let s2_ok = d2[t] < bound;
        match (s_ok, s2_ok) {
            (true, true) => free |= 1 << t,
            (true, false) => {}
            (false, true) => forced |= 1 << t,
            (false, false) => return,
        }
    }
    let mut best: [Option<Quartet>; 3] = [None, None, None];
    // Submask walk of `free`, including the empty mask.
    let mut sub: u8 = free;
    loop {
        let mask = sub | forced;
        let mut d = [0.0f64; 6];
        for t in 0..6 {
            d[t] = if mask & (1 << t) != 0 { d2[t] } else { d1[t] };
        }
        if let Ok(FourPoint::Split(p)) = four_point_classify(&d, tol) {
            if let Ok(q) = solve_quartet_lengths(ids, &d, p, mask, tol) {
                let slot = match p {
                    Partition::P01 => 0,
                    Partition::P02 => 1,
                    Partition::P03 => 2,
                    Partition::Star => unreachable!(),
                };
                let better = match &best[slot] {
                    None => true,
                    Some(cur) => q.middle() < cur.middle() - 1e-15,
                };
                if better {
                    best[slot] = Some(q);
                }
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
    for q in best.into_iter().flatten() {
        emit(q);
    }
}

/// All 4-subsets of participants whose six shortest distances fall under
/// `bound` and classify to a non-star, non-degenerate partition, in
/// canonical order.
pub fn enumerate_short_quartets(est: &DistanceEstimates, bound: f64, tol: f64) -> Vec<Quartet> {
    let mut out = Vec::new();
    for_each_quartet(est, bound, tol, false, |q| out.push(q));
    out
}

/// Scenario-2 combination search: for every 4-subset, tries all admissible
/// assignments of shortest/second-shortest distances per pair, and retains
/// at most one quartet per (subset, partition) — the one with the shortest
/// middle edge.
pub fn combine_s2_quartets(est: &DistanceEstimates, bound: f64, tol: f64) -> Result<Vec<Quartet>> {
    if !est.has_second() {
        return Err(TomoError::InvalidParameter(
            "combine_s2_quartets needs second-shortest estimates".into(),
        ));
    }
    let mut out = Vec::new();
    for_each_quartet(est, bound, tol, true, |q| out.push(q));
    Ok(out)
}
