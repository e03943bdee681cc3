//! Per-edge delay distributions, end-to-end delay sampling along fixed
//! routes, and variance ("distance") estimation.
//!
//! These produce the only inputs the reconstruction algorithms see: for
//! every participant pair, the estimated variance of the end-to-end delay
//! along its fixed shortest (and, under scenario 2, second-shortest) route.
//! Variances are additive along routes, so they act as an additive metric.
//!
//! Seeding is hierarchical: master seed → per-pair stream → per-message
//! draw. Adding pairs never perturbs the samples of existing pairs.

use crate::error::{Result, TomoError};
use crate::graph::{fmt_len, Graph, NodeId};
use crate::routing::{Csr, PathFinder, Route};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;

/// Delay distribution families with closed-form variances. Every family is
/// parameterized per edge so the delay variance equals the edge length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayFamily {
    /// Degenerate: zero variance. Always rejected (edge variances must be
    /// positive).
    Constant,
    /// Uniform on [0, w] with w = sqrt(12 v).
    Uniform,
    /// Exponential with rate 1/sqrt(v).
    Exponential,
    /// Gaussian with mean 3σ truncated to [0, 6σ], σ chosen so the
    /// truncated variance is v.
    TruncatedGaussian,
}

/// Variance of a standard normal truncated to ±3σ, relative to σ².
const TRUNC3_VAR_FACTOR: f64 = 0.973_336_924_662_541_5;

/// Family plus the admissible variance band [f, g] for edge lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySpec {
    pub family: DelayFamily,
    pub f: f64,
    pub g: f64,
}

impl DelaySpec {
    pub fn new(family: DelayFamily, f: f64, g: f64) -> Result<Self> {
        if !(f.is_finite() && g.is_finite() && 0.0 < f && f <= g) {
            return Err(TomoError::InvalidParameter(format!(
                "need 0 < f <= g < inf, got f = {f}, g = {g}"
            )));
        }
        Ok(DelaySpec { family, f, g })
    }

    pub fn unit(family: DelayFamily) -> Self {
        DelaySpec { family, f: 1.0, g: 1.0 }
    }
}

/// Per-edge samplers with known variances. Owns a copy of the graph whose
/// edge lengths are the realized variances.
#[derive(Debug, Clone)]
pub struct DelayModel {
    graph: Graph,
    family: DelayFamily,
}

impl DelayModel {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn family(&self) -> DelayFamily {
        self.family
    }

    fn draw(&self, variance: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.family {
            DelayFamily::Constant => unreachable!("constant family is rejected at assignment"),
            DelayFamily::Uniform => {
                let w = (12.0 * variance).sqrt();
                rng.gen::<f64>() * w
            }
            DelayFamily::Exponential => {
                let mean = variance.sqrt(); // 1/λ with λ = 1/sqrt(v)
                let u: f64 = rng.gen::<f64>();
                -mean * (1.0 - u).ln()
            }
            DelayFamily::TruncatedGaussian => {
                let sigma = (variance / TRUNC3_VAR_FACTOR).sqrt();
                let normal = Normal::new(3.0 * sigma, sigma).expect("finite parameters");
                loop {
                    let x = normal.sample(rng);
                    if (0.0..=6.0 * sigma).contains(&x) {
                        return x;
                    }
                }
            }
        }
    }
}

/// Assigns an independent delay sampler to every edge. Edge lengths already
/// inside [f, g] are kept as the true variances; lengths outside the band
/// are redrawn uniformly from [f, g] (and written back). Deterministic
/// given `seed`.
pub fn assign_delays(g: &Graph, spec: &DelaySpec, seed: u64) -> Result<DelayModel> {
    if spec.family == DelayFamily::Constant {
        return Err(TomoError::InvalidParameter(
            "constant delays have zero variance; edge variances must be positive".into(),
        ));
    }
    if !(spec.f > 0.0 && spec.f <= spec.g) {
        return Err(TomoError::InvalidParameter(format!(
            "bad variance band [{}, {}]",
            spec.f, spec.g
        )));
    }
    let mut graph = g.clone();
    for (u, v, len) in g.edges() {
        if len < spec.f || len > spec.g {
            let mut rng = ChaCha8Rng::seed_from_u64(mix3(seed, u as u64, v as u64));
            let fresh = spec.f + rng.gen::<f64>() * (spec.g - spec.f);
            graph.add_edge(u, v, fresh);
        }
    }
    graph.set_bounds(spec.f, spec.g);
    Ok(DelayModel {
        graph,
        family: spec.family,
    })
}

/// m i.i.d. end-to-end delays along a fixed route: each message sums
/// independent per-edge draws.
pub fn sample_end_to_end(model: &DelayModel, route: &Route, m: u32, seed: u64) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(TomoError::InvalidParameter(format!(
            "m = {m}: the variance estimator needs m >= 2"
        )));
    }
    let vars: Vec<f64> = route
        .node_sequence
        .windows(2)
        .map(|w| {
            model
                .graph
                .edge_len(w[0], w[1])
                .ok_or_else(|| TomoError::InvalidRoute(format!("({}, {}) not an edge", w[0], w[1])))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m)
        .map(|_| vars.iter().map(|&v| model.draw(v, &mut rng)).sum())
        .collect())
}

/// Standard unbiased variance estimator: Σ(Dₖ − D̄)² / (m − 1).
pub fn estimate_variance(samples: &[f64]) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(TomoError::InvalidParameter(
            "variance estimation needs at least 2 samples".into(),
        ));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    Ok(samples.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (m as f64 - 1.0))
}

/// Which routes a scenario measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Shortest-path delays only.
    S1,
    /// Shortest plus second-shortest path delays.
    S2,
}

/// Symmetric participant-pair distance estimates, with hop counts as
/// routing metadata. Missing entries (disconnected pairs, no second path)
/// are the infinity sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimates {
    participants: Vec<NodeId>,
    shortest: Vec<f64>,
    second: Option<Vec<f64>>,
    shortest_hops: Vec<u16>,
    second_hops: Option<Vec<u16>>,
    pub m: u32,
    pub exact: bool,
}

pub const NO_PATH_HOPS: u16 = u16::MAX;

impl DistanceEstimates {
    fn empty(participants: Vec<NodeId>, with_second: bool, m: u32, exact: bool) -> Self {
        let k = participants.len();
        DistanceEstimates {
            participants,
            shortest: vec![f64::INFINITY; k * k],
            second: with_second.then(|| vec![f64::INFINITY; k * k]),
            shortest_hops: vec![NO_PATH_HOPS; k * k],
            second_hops: with_second.then(|| vec![NO_PATH_HOPS; k * k]),
            m,
            exact,
        }
    }

    pub fn participants(&self) -> &[NodeId] {
        &self.participants
    }

    pub fn has_second(&self) -> bool {
        self.second.is_some()
    }

    pub fn pos(&self, v: NodeId) -> Option<usize> {
        self.participants.binary_search(&v).ok()
    }

    fn at(&self, i: NodeId, j: NodeId) -> Option<usize> {
        let a = self.pos(i)?;
        let b = self.pos(j)?;
        Some(a * self.participants.len() + b)
    }

    /// Estimated shortest-route distance; 0 on the diagonal, ∞ when absent.
    pub fn shortest(&self, i: NodeId, j: NodeId) -> f64 {
        if i == j {
            return 0.0;
        }
        self.at(i, j).map_or(f64::INFINITY, |k| self.shortest[k])
    }

    /// Estimated second-shortest-route distance; ∞ when no second path
    /// exists or the scenario did not measure it.
    pub fn second(&self, i: NodeId, j: NodeId) -> f64 {
        match (&self.second, self.at(i, j)) {
            (Some(mat), Some(k)) if i != j => mat[k],
            _ => f64::INFINITY,
        }
    }

    pub fn shortest_hops(&self, i: NodeId, j: NodeId) -> u16 {
        self.at(i, j).map_or(NO_PATH_HOPS, |k| self.shortest_hops[k])
    }

    pub fn second_hops(&self, i: NodeId, j: NodeId) -> u16 {
        match (&self.second_hops, self.at(i, j)) {
            (Some(mat), Some(k)) => mat[k],
            _ => NO_PATH_HOPS,
        }
    }

    fn set(&mut self, i: NodeId, j: NodeId, kind: Scenario, val: f64, hops: u16) {
        let k = self.at(i, j).expect("participant pair");
        let k2 = self.at(j, i).expect("participant pair");
        match kind {
            Scenario::S1 => {
                self.shortest[k] = val;
                self.shortest[k2] = val;
                self.shortest_hops[k] = hops;
                self.shortest_hops[k2] = hops;
            }
            Scenario::S2 => {
                if let (Some(mat), Some(hm)) = (self.second.as_mut(), self.second_hops.as_mut()) {
                    mat[k] = val;
                    mat[k2] = val;
                    hm[k] = hops;
                    hm[k2] = hops;
                }
            }
        }
    }

    /// Sub-matrix over a participant subset (same kinds, m, exactness).
    pub fn restrict(&self, ids: &BTreeSet<NodeId>) -> DistanceEstimates {
        let keep: Vec<NodeId> = self
            .participants
            .iter()
            .copied()
            .filter(|v| ids.contains(v))
            .collect();
        let mut out = DistanceEstimates::empty(keep.clone(), self.has_second(), self.m, self.exact);
        for (a, &i) in keep.iter().enumerate() {
            for &j in &keep[a + 1..] {
                out.set(i, j, Scenario::S1, self.shortest(i, j), self.shortest_hops(i, j));
                if self.has_second() {
                    out.set(i, j, Scenario::S2, self.second(i, j), self.second_hops(i, j));
                }
            }
        }
        out
    }

    /// CSV serialization: `i,j,kind{S,S2},estimate,m` with `inf` for absent
    /// paths. Estimates round-trip bit-faithfully at 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,kind,estimate,m\n");
        for (a, &i) in self.participants.iter().enumerate() {
            for &j in &self.participants[a + 1..] {
                out.push_str(&format!("{i},{j},S,{},{}\n", fmt_len(self.shortest(i, j)), self.m));
                if self.has_second() {
                    out.push_str(&format!(
                        "{i},{j},S2,{},{}\n",
                        fmt_len(self.second(i, j)),
                        self.m
                    ));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<DistanceEstimates> {
        let mut rows: Vec<(NodeId, NodeId, bool, f64, u32)> = Vec::new();
        let mut ids = BTreeSet::new();
        let mut any_second = false;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("i,") {
                continue;
            }
            let err = |m: &str| TomoError::Parse(format!("csv line {}: {m}", no + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let i: NodeId = f[0].parse().map_err(|_| err("bad i"))?;
            let j: NodeId = f[1].parse().map_err(|_| err("bad j"))?;
            let is_second = match f[2] {
                "S" => false,
                "S2" => true,
                _ => return Err(err("kind must be S or S2")),
            };
            let est: f64 = if f[3] == "inf" {
                f64::INFINITY
            } else {
                f[3].parse().map_err(|_| err("bad estimate"))?
            };
            let m: u32 = f[4].parse().map_err(|_| err("bad m"))?;
            any_second |= is_second;
            ids.insert(i);
            ids.insert(j);
            rows.push((i, j, is_second, est, m));
        }
        let m = rows.first().map_or(0, |r| r.4);
        let mut est =
            DistanceEstimates::empty(ids.into_iter().collect(), any_second, m, m == 0);
        for (i, j, is_second, val, _) in rows {
            let kind = if is_second { Scenario::S2 } else { Scenario::S1 };
            est.set(i, j, kind, val, NO_PATH_HOPS);
        }
        Ok(est)
    }
}

fn check_participants(g: &Graph, participants: &BTreeSet<NodeId>) -> Result<Vec<NodeId>> {
    for &p in participants {
        if !g.has_node(p) {
            return Err(TomoError::InvalidParameter(format!(
                "participant {p} is not a node of the graph"
            )));
        }
    }
    Ok(participants.iter().copied().collect())
}

fn min_edge_len(g: &Graph) -> f64 {
    g.edges().map(|(_, _, l)| l).fold(f64::INFINITY, f64::min)
}

fn hop_budget(bound: Option<f64>, min_len: f64) -> u32 {
    match bound {
        None => u32::MAX - 1,
        Some(b) => {
            let h = (b / min_len.max(1e-12)).ceil();
            if h >= (u32::MAX - 1) as f64 {
                u32::MAX - 1
            } else {
                (h as u32).max(1)
            }
        }
    }
}

/// Walks every participant pair's fixed route(s) and calls `record` with
/// (i, j, kind, route). Routes are deterministic (lexicographic tie-break).
fn for_each_route(
    g: &Graph,
    participants: &[NodeId],
    scenario: Scenario,
    s2_bound: Option<f64>,
    mut record: impl FnMut(NodeId, NodeId, Scenario, &Csr, &[u32]),
) {
    let csr = Csr::build(g);
    let mut pf = PathFinder::new(&csr);
    let s2_hops = hop_budget(s2_bound, min_edge_len(g));
    for (a, &i) in participants.iter().enumerate() {
        let ii = csr.idx(i).expect("participant in graph");
        for &j in &participants[a + 1..] {
            let jj = csr.idx(j).expect("participant in graph");
            let a1 = match pf.shortest(ii, jj, u32::MAX - 1) {
                Some(p) => p,
                None => continue, // disconnected: stays at the ∞ sentinel
            };
            record(i, j, Scenario::S1, &csr, &a1);
            if scenario == Scenario::S2 {
                let skip = match s2_bound {
                    Some(b) => route_len_of(&csr, &a1) >= b,
                    None => false,
                };
                if !skip {
                    if let Some(a2) = pf.second(ii, jj, &a1, s2_hops) {
                        record(i, j, Scenario::S2, &csr, &a2);
                    }
                }
            }
        }
    }
}

fn route_len_of(csr: &Csr, seq: &[u32]) -> f64 {
    seq.windows(2)
        .map(|w| csr.edge_len(w[0], w[1]).expect("edge"))
        .sum()
}

/// Estimated distances from m sampled messages per pair and route.
pub fn build_distance_estimates(
    g: &Graph,
    model: &DelayModel,
    participants: &BTreeSet<NodeId>,
    m: u32,
    scenario: Scenario,
    seed: u64,
) -> Result<DistanceEstimates> {
    build_distance_estimates_bounded(g, model, participants, m, scenario, seed, None)
}

/// As [`build_distance_estimates`], but skips second-shortest measurement
/// for pairs whose shortest distance is at least `s2_bound` (they are out
/// of reach of the reconstruction thresholds).
pub fn build_distance_estimates_bounded(
    _g: &Graph,
    model: &DelayModel,
    participants: &BTreeSet<NodeId>,
    m: u32,
    scenario: Scenario,
    seed: u64,
    s2_bound: Option<f64>,
) -> Result<DistanceEstimates> {
    if m < 2 {
        return Err(TomoError::InvalidParameter(format!(
            "m = {m}: the variance estimator needs m >= 2"
        )));
    }
    let graph = model.graph();
    let parts = check_participants(graph, participants)?;
    let mut est = DistanceEstimates::empty(parts.clone(), scenario == Scenario::S2, m, false);
    let mut failure: Option<TomoError> = None;
    for_each_route(graph, &parts, scenario, s2_bound, |i, j, kind, csr, seq| {
        if failure.is_some() {
            return;
        }
        let route = Route {
            node_sequence: seq.iter().map(|&k| csr.ids[k as usize]).collect(),
            hop_count: seq.len() - 1,
            length: route_len_of(csr, seq),
        };
        let stream = mix3(seed, pair_key(i, j), kind as u64 + 1);
        match sample_end_to_end(model, &route, m, stream).and_then(|s| estimate_variance(&s)) {
            Ok(v) => est.set(i, j, kind, v, (seq.len() - 1) as u16),
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(est),
    }
}

/// Exact route-length distances (the m → ∞ limit): oracle mode.
pub fn exact_distances(
    g: &Graph,
    participants: &BTreeSet<NodeId>,
    scenario: Scenario,
) -> Result<DistanceEstimates> {
    exact_distances_bounded(g, participants, scenario, None)
}

/// As [`exact_distances`] with the second-shortest cutoff of
/// [`build_distance_estimates_bounded`].
pub fn exact_distances_bounded(
    g: &Graph,
    participants: &BTreeSet<NodeId>,
    scenario: Scenario,
    s2_bound: Option<f64>,
) -> Result<DistanceEstimates> {
    let parts = check_participants(g, participants)?;
    let mut est = DistanceEstimates::empty(parts.clone(), scenario == Scenario::S2, 0, true);
    for_each_route(g, &parts, scenario, s2_bound, |i, j, kind, csr, seq| {
        est.set(i, j, kind, route_len_of(csr, seq), (seq.len() - 1) as u16);
    });
    Ok(est)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(a) ^ b) ^ c)
}

fn pair_key(i: NodeId, j: NodeId) -> u64 {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    ((a as u64) << 32) | b as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;
    use crate::routing::shortest_path;

    fn unit_edge_graph() -> Graph {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g
    }

    #[test]
    fn constant_family_is_rejected() {
        let g = unit_edge_graph();
        let spec = DelaySpec::new(DelayFamily::Constant, 1.0, 1.0).unwrap();
        assert!(assign_delays(&g, &spec, 0).is_err());
    }

    #[test]
    fn spec_rejects_zero_f() {
        assert!(DelaySpec::new(DelayFamily::Uniform, 0.0, 1.0).is_err());
    }

    #[test]
    fn moment_identities_hold_for_unit_band() {
        // Exponential with f = g = 1 forces rate 1 (mean 1); uniform forces
        // width sqrt(12). Checked through realized sample moments.
        let g = unit_edge_graph();
        let route = shortest_path(&g, 0, 1).unwrap().unwrap();
        for (family, mean) in [
            (DelayFamily::Exponential, 1.0),
            (DelayFamily::Uniform, (12.0f64).sqrt() / 2.0),
        ] {
            let model = assign_delays(&g, &DelaySpec::unit(family), 5).unwrap();
            let s = sample_end_to_end(&model, &route, 100_000, 99).unwrap();
            let m_hat = s.iter().sum::<f64>() / s.len() as f64;
            // 3σ band for the sample mean, σ = 1 per draw.
            assert!(
                (m_hat - mean).abs() < 3.0 / (s.len() as f64).sqrt() + 0.01,
                "{family:?}: {m_hat} vs {mean}"
            );
            let v_hat = estimate_variance(&s).unwrap();
            assert!((v_hat - 1.0).abs() < 0.05, "{family:?} variance {v_hat}");
        }
    }

    #[test]
    fn truncated_gaussian_hits_target_variance() {
        let g = unit_edge_graph();
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::TruncatedGaussian), 5).unwrap();
        let route = shortest_path(&g, 0, 1).unwrap().unwrap();
        let s = sample_end_to_end(&model, &route, 200_000, 3).unwrap();
        let v_hat = estimate_variance(&s).unwrap();
        assert!((v_hat - 1.0).abs() < 0.02, "variance {v_hat}");
        assert!(s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn additivity_of_route_variance() {
        // Three independent unit-variance edges: end-to-end variance ≈ 3.
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 3, 1.0);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 1).unwrap();
        let route = shortest_path(&g, 0, 3).unwrap().unwrap();
        let s = sample_end_to_end(&model, &route, 200_000, 17).unwrap();
        let v = estimate_variance(&s).unwrap();
        assert!((v - 3.0).abs() < 0.1, "variance {v}");
    }

    #[test]
    fn disjoint_streams_are_uncorrelated() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(2, 3, 1.0);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 9).unwrap();
        let ra = shortest_path(&g, 0, 1).unwrap().unwrap();
        let rb = shortest_path(&g, 2, 3).unwrap().unwrap();
        let m = 20_000;
        let a = sample_end_to_end(&model, &ra, m, 1001).unwrap();
        let b = sample_end_to_end(&model, &rb, m, 1002).unwrap();
        let ma = a.iter().sum::<f64>() / m as f64;
        let mb = b.iter().sum::<f64>() / m as f64;
        let cov: f64 =
            a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (m as f64 - 1.0);
        let corr = cov / (estimate_variance(&a).unwrap() * estimate_variance(&b).unwrap()).sqrt();
        assert!(corr.abs() < 4.0 / (m as f64).sqrt() + 0.01, "corr {corr}");
    }

    #[test]
    fn estimator_hand_cases() {
        assert_eq!(estimate_variance(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(estimate_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(estimate_variance(&[1.0]).is_err());
        assert!(sample_end_to_end(
            &assign_delays(&unit_edge_graph(), &DelaySpec::unit(DelayFamily::Exponential), 0)
                .unwrap(),
            &shortest_path(&unit_edge_graph(), 0, 1).unwrap().unwrap(),
            1,
            0
        )
        .is_err());
    }

    #[test]
    fn estimator_is_unbiased_monte_carlo() {
        // 10^4 repetitions of m = 50: mean of estimates within 2% of truth.
        for family in [DelayFamily::Exponential, DelayFamily::Uniform] {
            let g = unit_edge_graph();
            let model = assign_delays(&g, &DelaySpec::unit(family), 2).unwrap();
            let route = shortest_path(&g, 0, 1).unwrap().unwrap();
            let reps = 10_000;
            let mut acc = 0.0;
            for k in 0..reps {
                let s = sample_end_to_end(&model, &route, 50, 7_000 + k).unwrap();
                acc += estimate_variance(&s).unwrap();
            }
            let mean = acc / reps as f64;
            assert!((mean - 1.0).abs() < 0.02, "{family:?}: mean {mean}");
        }
    }

    #[test]
    fn estimator_scale_consistency() {
        let base = [0.4, 1.7, 2.2, 0.9, 3.1];
        let v = estimate_variance(&base).unwrap();
        for s in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = base.iter().map(|x| x * s).collect();
            let vs = estimate_variance(&scaled).unwrap();
            assert!((vs - s * s * v).abs() < 1e-12 * (1.0 + vs));
        }
    }

    #[test]
    fn s1_single_edge_estimate_near_variance() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.set_participants([0, 1]);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 4).unwrap();
        let est =
            build_distance_estimates(&g, &model, g.participants(), 20_000, Scenario::S1, 8)
                .unwrap();
        assert!((est.shortest(0, 1) - 1.0).abs() < 0.05);
        assert!(!est.has_second());
        assert!(!est.exact);
    }

    #[test]
    fn s2_on_tree_has_no_second_entries() {
        let mut g = Graph::new();
        for (u, v) in [(0, 4), (4, 1), (4, 5), (5, 2), (5, 3)] {
            g.add_edge(u, v, 1.0);
        }
        g.set_participants([0, 1, 2, 3]);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Uniform), 6).unwrap();
        let est =
            build_distance_estimates(&g, &model, g.participants(), 100, Scenario::S2, 9).unwrap();
        assert!(est.has_second());
        let ps: Vec<_> = est.participants().to_vec();
        for (a, &i) in ps.iter().enumerate() {
            for &j in &ps[a + 1..] {
                assert!(est.second(i, j).is_infinite(), "({i},{j})");
            }
        }
    }

    #[test]
    fn estimation_error_shrinks_with_m() {
        // Fixed 200-node instance: median (over 5 reps) of the max pairwise
        // error strictly decreases across m ∈ {100, 1000, 10000}.
        let g0 = generate_er(200, 3.0, 31).unwrap();
        let g = crate::graph::giant_component(&g0);
        let participants: BTreeSet<NodeId> = g.nodes().filter(|v| v % 11 == 0).collect();
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 13).unwrap();
        let exact = exact_distances(&g, &participants, Scenario::S1).unwrap();
        let parts: Vec<_> = exact.participants().to_vec();
        let mut medians = Vec::new();
        for m in [100u32, 1_000, 10_000] {
            let mut errs = Vec::new();
            for rep in 0..5u64 {
                let est = build_distance_estimates(
                    &g,
                    &model,
                    &participants,
                    m,
                    Scenario::S1,
                    1000 * rep + m as u64,
                )
                .unwrap();
                let mut worst = 0.0f64;
                for (a, &i) in parts.iter().enumerate() {
                    for &j in &parts[a + 1..] {
                        let d = (est.shortest(i, j) - exact.shortest(i, j)).abs();
                        worst = worst.max(d);
                    }
                }
                errs.push(worst);
            }
            errs.sort_by(f64::total_cmp);
            medians.push(errs[errs.len() / 2]);
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians {medians:?}"
        );
    }

    #[test]
    fn exact_distances_on_unit_triangle() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 0, 1.0);
        g.set_participants([0, 1, 2]);
        let est = exact_distances(&g, g.participants(), Scenario::S2).unwrap();
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(est.shortest(i, j), 1.0);
            assert_eq!(est.second(i, j), 2.0);
            assert_eq!(est.shortest_hops(i, j), 1);
            assert_eq!(est.second_hops(i, j), 2);
        }
    }

    #[test]
    fn exact_distance_single_edge() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 2.5);
        g.set_participants([0, 1]);
        let est = exact_distances(&g, g.participants(), Scenario::S1).unwrap();
        assert_eq!(est.shortest(0, 1), 2.5);
    }

    #[test]
    fn estimates_converge_to_exact() {
        let g0 = generate_er(60, 2.5, 77).unwrap();
        let g = crate::graph::giant_component(&g0);
        let participants: BTreeSet<NodeId> = g.nodes().take(6).collect();
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Uniform), 3).unwrap();
        let exact = exact_distances(&g, &participants, Scenario::S1).unwrap();
        let est =
            build_distance_estimates(&g, &model, &participants, 40_000, Scenario::S1, 21).unwrap();
        for (a, &i) in exact.participants().iter().enumerate() {
            for &j in &exact.participants()[a + 1..] {
                if exact.shortest(i, j).is_finite() {
                    assert!(
                        (est.shortest(i, j) - exact.shortest(i, j)).abs() < 0.25,
                        "({i},{j}): {} vs {}",
                        est.shortest(i, j),
                        exact.shortest(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_faithful() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 0, 1.0);
        g.add_edge(2, 7, 1.0);
        g.set_participants([0, 1, 7]);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 10).unwrap();
        let est =
            build_distance_estimates(&g, &model, g.participants(), 250, Scenario::S2, 5).unwrap();
        let text = est.to_csv();
        let back = DistanceEstimates::from_csv(&text).unwrap();
        assert_eq!(text, back.to_csv());
        assert_eq!(back.m, 250);
    }

    #[test]
    fn adding_pairs_preserves_existing_streams() {
        let mut g = Graph::new();
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 3, 1.0);
        let model = assign_delays(&g, &DelaySpec::unit(DelayFamily::Exponential), 0).unwrap();
        let small: BTreeSet<NodeId> = [0, 1].into_iter().collect();
        let big: BTreeSet<NodeId> = [0, 1, 3].into_iter().collect();
        let e1 = build_distance_estimates(&g, &model, &small, 500, Scenario::S1, 42).unwrap();
        let e2 = build_distance_estimates(&g, &model, &big, 500, Scenario::S1, 42).unwrap();
        assert_eq!(e1.shortest(0, 1), e2.shortest(0, 1));
    }
}
