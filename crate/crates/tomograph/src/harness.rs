//! Parameter calculators and seeded end-to-end experiment pipelines:
//! generate → sample participants → measure → reconstruct → score.
//!
//! Every trial is fully determined by the master seed and its trial index;
//! trials are independent units, and aggregation is order-independent.

use crate::delay::{
    assign_delays, build_distance_estimates_bounded, exact_distances_bounded, mix3, DelayFamily,
    DelaySpec, Scenario,
};
use crate::error::{Result, TomoError};
use crate::graph::{generate_er, giant_component, minimal_representation, Graph, NodeId};
use crate::metrics::{edit_distance_bounds, edit_distance_exact, max_length_error};
use crate::reconstruct::{rgest1, rgest2, AlgoParams, BadQuartet, BadReason};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Derived algorithm parameters for a given scale, with the feasibility
/// flags of the participant-fraction constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub n: u32,
    pub c: f64,
    pub beta: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Midpoint of [r_min, r_max] unless overridden downstream.
    pub r: f64,
    pub r_prime: f64,
    pub xi: f64,
    pub gamma: f64,
    pub mu: f64,
    pub f_bound: f64,
    pub g_bound: f64,
    /// Whether r_min <= r_max (the window is empty at small n).
    pub window_ok: bool,
    /// Whether gamma > 2·beta.
    pub gamma_ok: bool,
}

/// Scale-dependent parameter formulas: the quartet radius window
/// [R_min, R_max], the degree-conditioned branching constant ξ(c), and the
/// exponents γ and μ controlled by it.
pub fn compute_params(n: u32, c: f64, beta: f64, g_bound: f64, f_bound: f64) -> Result<ParamRecord> {
    if c <= 1.0 {
        return Err(TomoError::SubCritical(c));
    }
    if n < 10 {
        return Err(TomoError::InvalidParameter(format!("n = {n}, need n >= 10")));
    }
    if !(f_bound > 0.0 && g_bound >= f_bound) {
        return Err(TomoError::InvalidParameter("need 0 < f <= g".into()));
    }
    let ln_n = (n as f64).ln();
    let r_min = 2.0 * (9.0 * ln_n / (c.sqrt() - 1.0).powi(2)).ln() / 3.0f64.ln();
    let r_max = 6.0 * ln_n / (5.0 * c.ln());
    let r = 0.5 * (r_min + r_max);
    let xi = xi_of(c);
    let gamma = c.ln() / ln_n * (r - r_min);
    let mu = r * (c / xi).ln() / ln_n;
    Ok(ParamRecord {
        n,
        c,
        beta,
        r_min,
        r_max,
        r,
        r_prime: r * g_bound / f_bound,
        xi,
        gamma,
        mu,
        f_bound,
        g_bound,
        window_ok: r_min <= r_max,
        gamma_ok: gamma > 2.0 * beta,
    })
}

/// ξ(c) = 1 − e^{−c} − c·e^{−c} − 0.5·c²·e^{−c}.
pub fn xi_of(c: f64) -> f64 {
    1.0 - (-c).exp() * (1.0 + c + 0.5 * c * c)
}

/// Estimator error bound fed to the sampled-mode tolerances:
/// scale · g · sqrt(R′³ · ln|V| / m).
pub fn estimator_error_bound(scale: f64, g_bound: f64, r_prime: f64, v: usize, m: u32) -> f64 {
    scale * g_bound * (r_prime.powi(3) * (v.max(2) as f64).ln() / m as f64).sqrt()
}

fn default_err_scale() -> f64 {
    6.0
}

fn default_f() -> f64 {
    1.0
}

fn default_g() -> f64 {
    1.0
}

fn default_trials() -> u32 {
    1
}

fn default_family() -> DelayFamily {
    DelayFamily::Exponential
}

/// One experiment: scale, participation, scenario, measurement mode, and
/// optional algorithm-parameter overrides. Flat JSON on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: u32,
    pub c: f64,
    /// Participant exponent: ρ = n^{−β}. Exactly one of `beta`, `rho`.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    pub scenario: Scenario,
    /// Messages per pair; absent means exact (oracle) distances.
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default = "default_family")]
    pub family: DelayFamily,
    #[serde(default = "default_f")]
    pub f_bound: f64,
    #[serde(default = "default_g")]
    pub g_bound: f64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
    /// Overrides; `r` defaults to the midpoint of [R_min, R_max].
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_prime: Option<f64>,
    #[serde(default)]
    pub classify_tol: Option<f64>,
    #[serde(default = "default_err_scale")]
    pub err_scale: f64,
    /// Sample a fixed-size uniform participant subset instead of
    /// independent Bernoulli participation.
    #[serde(default)]
    pub exact_count: bool,
    /// Skip second-shortest measurement beyond this distance (None = full).
    #[serde(default)]
    pub s2_bound: Option<f64>,
    /// Serialize per-pair route hop counts per trial.
    #[serde(default)]
    pub emit_routes: bool,
}

impl ExperimentConfig {
    pub fn exact(n: u32, c: f64, rho: f64, scenario: Scenario) -> Self {
        ExperimentConfig {
            n,
            c,
            beta: None,
            rho: Some(rho),
            scenario,
            m: None,
            family: default_family(),
            f_bound: 1.0,
            g_bound: 1.0,
            trials: 1,
            seed: 0,
            r: None,
            tau: None,
            eps: None,
            eps_prime: None,
            classify_tol: None,
            err_scale: default_err_scale(),
            exact_count: false,
            s2_bound: None,
            emit_routes: false,
        }
    }

    pub fn rho_value(&self) -> Result<f64> {
        let rho = match (self.rho, self.beta) {
            (Some(r), None) => r,
            (None, Some(b)) => (self.n as f64).powf(-b),
            _ => {
                return Err(TomoError::InvalidParameter(
                    "specify exactly one of rho, beta".into(),
                ))
            }
        };
        if !(0.0 < rho && rho <= 1.0) {
            return Err(TomoError::InvalidParameter(format!("rho = {rho}")));
        }
        let expected = rho * f64::from(self.n);
        if expected < 4.0 {
            return Err(TomoError::InvalidParameter(format!(
                "rho*n = {expected} < 4: no quartet can form"
            )));
        }
        Ok(rho)
    }

    pub fn beta_value(&self) -> f64 {
        match (self.rho, self.beta) {
            (_, Some(b)) => b,
            (Some(r), None) => -r.ln() / (self.n as f64).ln(),
            _ => f64::NAN,
        }
    }

    /// The algorithm parameters this config resolves to, given the
    /// participant count of a concrete trial.
    pub fn algo_params(&self, participants: usize) -> Result<(AlgoParams, ParamRecord)> {
        let record = compute_params(self.n, self.c, self.beta_value(), self.g_bound, self.f_bound)?;
        let r = self.r.unwrap_or(record.r);
        let mut p = match self.m {
            None => AlgoParams::exact(r, self.f_bound, self.g_bound),
            Some(m) => {
                let err = estimator_error_bound(
                    self.err_scale,
                    self.g_bound,
                    r * self.g_bound / self.f_bound,
                    participants,
                    m,
                );
                AlgoParams::sampled(r, self.f_bound, self.g_bound, err)
            }
        };
        if let Some(tau) = self.tau {
            p.tau = tau;
        }
        if let Some(eps) = self.eps {
            p.eps = eps;
        }
        if let Some(ep) = self.eps_prime {
            p.eps_prime = ep;
        }
        if let Some(ct) = self.classify_tol {
            p.classify_tol = ct;
        }
        p.validate()?;
        Ok((p, ParamRecord { r, r_prime: p.r_prime(), ..record }))
    }
}

/// Everything measured about one trial. `wall_ms` is diagnostic only and
/// excluded from the deterministic CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u32,
    pub seed: u64,
    pub skipped: Option<String>,
    pub n: u32,
    pub giant: u32,
    pub participants: u32,
    pub hidden_target: u32,
    pub hidden_out: u32,
    pub edit_exact: Option<u64>,
    pub edit_lo: u64,
    pub edit_hi: u64,
    pub max_len_err: f64,
    pub bad_short_cycle: u32,
    pub bad_inconsistent: u32,
    pub bad_no_witness: u32,
    pub bad_degenerate: u32,
    pub r: f64,
    pub r_prime: f64,
    pub tau: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub xi: f64,
    pub gamma: f64,
    pub mu: f64,
    #[serde(default)]
    pub wall_ms: f64,
}

impl TrialResult {
    pub fn bad_total(&self) -> u32 {
        self.bad_short_cycle + self.bad_inconsistent + self.bad_no_witness + self.bad_degenerate
    }

    /// The scored edit distance: exact when available, else the certified
    /// upper bound (an achieved matching).
    pub fn edit_score(&self) -> u64 {
        self.edit_exact.unwrap_or(self.edit_hi)
    }

    pub const CSV_HEADER: &'static str = "trial,seed,skipped,n,giant,participants,hidden_target,hidden_out,edit_exact,edit_lo,edit_hi,max_len_err,bad_short_cycle,bad_inconsistent,bad_no_witness,bad_degenerate,r,r_prime,tau,eps,eps_prime,xi,gamma,mu";

    /// Deterministic CSV row (wall time deliberately not included).
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            self.skipped.as_deref().unwrap_or(""),
            self.n,
            self.giant,
            self.participants,
            self.hidden_target,
            self.hidden_out,
            self.edit_exact.map_or(String::new(), |v| v.to_string()),
            self.edit_lo,
            self.edit_hi,
            crate::graph::fmt_len(self.max_len_err),
            self.bad_short_cycle,
            self.bad_inconsistent,
            self.bad_no_witness,
            self.bad_degenerate,
            crate::graph::fmt_len(self.r),
            crate::graph::fmt_len(self.r_prime),
            crate::graph::fmt_len(self.tau),
            crate::graph::fmt_len(self.eps),
            crate::graph::fmt_len(self.eps_prime),
            crate::graph::fmt_len(self.xi),
            crate::graph::fmt_len(self.gamma),
            crate::graph::fmt_len(self.mu),
        )
    }
}

fn count_reason(bad: &[BadQuartet], reason: BadReason) -> u32 {
    bad.iter().filter(|b| b.reason == reason).count() as u32
}

/// Uniform participant sampling over the giant component: independent
/// Bernoulli(ρ) per node, or a fixed-size uniform subset in exact-count
/// mode.
pub fn sample_participants(
    giant: &Graph,
    rho: f64,
    exact_count: bool,
    seed: u64,
) -> BTreeSet<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<NodeId> = giant.nodes().collect();
    if exact_count {
        let want = ((rho * nodes.len() as f64).round() as usize).min(nodes.len());
        let mut idx: Vec<usize> = (0..nodes.len()).collect();
        // Partial Fisher-Yates.
        for i in 0..want {
            let j = i + rng.gen_range(0..idx.len() - i);
            idx.swap(i, j);
        }
        idx[..want].iter().map(|&i| nodes[i]).collect()
    } else {
        nodes
            .into_iter()
            .filter(|_| rng.gen::<f64>() < rho)
            .collect()
    }
}

/// Full pipeline for one seeded trial: generate, restrict to the giant
/// component, sample participants, assign delays, measure distances,
/// reconstruct, and score against the minimal representation.
pub fn run_trial(cfg: &ExperimentConfig, trial: u32) -> Result<TrialResult> {
    let t0 = std::time::Instant::now();
    let rho = cfg.rho_value()?;
    let graph_seed = mix3(cfg.seed, trial as u64, 1);
    let part_seed = mix3(cfg.seed, trial as u64, 2);
    let delay_seed = mix3(cfg.seed, trial as u64, 3);
    let sample_seed = mix3(cfg.seed, trial as u64, 4);

    let g = generate_er(cfg.n, cfg.c, graph_seed)?;
    let giant = giant_component(&g);
    let participants = sample_participants(&giant, rho, cfg.exact_count, part_seed);

    let mut skipped_result = |reason: String| -> TrialResult {
        TrialResult {
            trial,
            seed: cfg.seed,
            skipped: Some(reason),
            n: cfg.n,
            giant: giant.node_count() as u32,
            participants: participants.len() as u32,
            hidden_target: 0,
            hidden_out: 0,
            edit_exact: None,
            edit_lo: 0,
            edit_hi: 0,
            max_len_err: 0.0,
            bad_short_cycle: 0,
            bad_inconsistent: 0,
            bad_no_witness: 0,
            bad_degenerate: 0,
            r: 0.0,
            r_prime: 0.0,
            tau: 0.0,
            eps: 0.0,
            eps_prime: 0.0,
            xi: xi_of(cfg.c),
            gamma: 0.0,
            mu: 0.0,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        }
    };
    if participants.len() < 4 {
        return Ok(skipped_result(format!(
            "{} participants in giant component (need 4)",
            participants.len()
        )));
    }

    let spec = DelaySpec::new(cfg.family, cfg.f_bound, cfg.g_bound)?;
    let model = assign_delays(&giant, &spec, delay_seed)?;
    let routed = model.graph();
    let target = minimal_representation(routed, &participants);

    let (params, record) = cfg.algo_params(participants.len())?;
    let est = match cfg.m {
        None => exact_distances_bounded(routed, &participants, cfg.scenario, cfg.s2_bound)?,
        Some(m) => build_distance_estimates_bounded(
            routed,
            &model,
            &participants,
            m,
            cfg.scenario,
            sample_seed,
            cfg.s2_bound,
        )?,
    };
    let (out, bad) = match cfg.scenario {
        Scenario::S1 => rgest1(&est, &params)?,
        Scenario::S2 => rgest2(&est, &params)?,
    };

    let hidden_target = target.node_count() - participants.len();
    let hidden_out = out.node_count() - participants.len();
    let ed = if hidden_target.max(hidden_out) <= 14 {
        edit_distance_exact(&target, &out, &participants)?
    } else {
        edit_distance_bounds(&target, &out, &participants)?
    };
    let max_len_err = max_length_error(&out, &target, &participants, &ed.matching);

    Ok(TrialResult {
        trial,
        seed: cfg.seed,
        skipped: None,
        n: cfg.n,
        giant: giant.node_count() as u32,
        participants: participants.len() as u32,
        hidden_target: hidden_target as u32,
        hidden_out: hidden_out as u32,
        edit_exact: ed.exact(),
        edit_lo: ed.lower,
        edit_hi: ed.upper,
        max_len_err,
        bad_short_cycle: count_reason(&bad, BadReason::ShortCycle),
        bad_inconsistent: count_reason(&bad, BadReason::InconsistentWitness),
        bad_no_witness: count_reason(&bad, BadReason::NoWitness),
        bad_degenerate: count_reason(&bad, BadReason::DegenerateLengths),
        r: record.r,
        r_prime: record.r_prime,
        tau: params.tau,
        eps: params.eps,
        eps_prime: params.eps_prime,
        xi: record.xi,
        gamma: record.gamma,
        mu: record.mu,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub se: f64,
}

pub fn stats_of(values: &[f64]) -> Stats {
    if values.is_empty() {
        return Stats { mean: f64::NAN, median: f64::NAN, se: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Stats { mean, median, se: (var / n).sqrt() }
}

/// Order-independent aggregate of an experiment's trials. Medians are
/// reported alongside means because edit distance is heavy-tailed across
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: u32,
    pub completed: u32,
    pub skipped: u32,
    pub edit: Stats,
    pub bad_quartets: Stats,
    pub hidden_out: Stats,
    pub max_len_err: Stats,
}

/// Runs all trials of a config and aggregates. Results come back indexed
/// by trial, so any execution order yields identical output.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<TrialResult>, ExperimentSummary)> {
    if cfg.trials < 1 {
        return Err(TomoError::InvalidParameter("trials >= 1 required".into()));
    }
    let mut results = Vec::with_capacity(cfg.trials as usize);
    for t in 0..cfg.trials {
        results.push(run_trial(cfg, t)?);
    }
    let summary = summarize(&results);
    Ok((results, summary))
}

pub fn summarize(results: &[TrialResult]) -> ExperimentSummary {
    let done: Vec<&TrialResult> = results.iter().filter(|r| r.skipped.is_none()).collect();
    let collect = |f: &dyn Fn(&TrialResult) -> f64| -> Vec<f64> { done.iter().map(|r| f(r)).collect() };
    ExperimentSummary {
        trials: results.len() as u32,
        completed: done.len() as u32,
        skipped: (results.len() - done.len()) as u32,
        edit: stats_of(&collect(&|r| r.edit_score() as f64)),
        bad_quartets: stats_of(&collect(&|r| r.bad_total() as f64)),
        hidden_out: stats_of(&collect(&|r| r.hidden_out as f64)),
        max_len_err: stats_of(&collect(&|r| r.max_len_err)),
    }
}

pub fn trials_csv(results: &[TrialResult]) -> String {
    let mut s = String::from(TrialResult::CSV_HEADER);
    s.push('\n');
    for r in results {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[ignore = "probe: run explicitly"]
    fn probe_big_trial() {
        for (rho, scen) in [(0.3, Scenario::S1), (0.3, Scenario::S2), (0.5, Scenario::S1)] {
            let mut cfg = ExperimentConfig::exact(2000, 3.0, rho, scen);
            cfg.seed = 42;
            cfg.r = Some(3.5);
            cfg.s2_bound = Some(2.0 * 3.5 + 1.0);
            let t0 = std::time::Instant::now();
            let r = run_trial(&cfg, 0).unwrap();
            eprintln!(
                "rho {rho} {scen:?}: {:?} | giant {} parts {} hid_t {} hid_o {} edit {:?}/{}/{} bad {} | {:?}",
                t0.elapsed(),
                r.giant,
                r.participants,
                r.hidden_target,
                r.hidden_out,
                r.edit_exact,
                r.edit_lo,
                r.edit_hi,
                r.bad_total(),
                r.skipped
            );
        }
    }

    #[test]
    fn xi_at_three_matches_hand_evaluation() {
        // Independent evaluation: 1 - e^{-3}(1 + 3 + 4.5) = 0.576810...
        let xi = xi_of(3.0);
        assert!((xi - 0.576_810).abs() < 1e-6, "xi = {xi}");
    }

    #[test]
    fn xi_tends_to_one_for_large_c() {
        assert!(xi_of(50.0) > 1.0 - 1e-12);
        // and mu then approaches R ln c / ln n
        let rec = compute_params(10_000, 50.0, 0.1, 1.0, 1.0).unwrap();
        let mu_limit = rec.r * 50.0f64.ln() / (10_000.0f64).ln();
        assert!((rec.mu - mu_limit).abs() < 1e-9);
    }

    #[test]
    fn r_max_matches_arithmetic() {
        // n = 10^4, c = 4: R_max = 6 ln n / (5 ln c) ≈ 7.97.
        let rec = compute_params(10_000, 4.0, 0.1, 1.0, 1.0).unwrap();
        assert!((rec.r_max - 7.9727).abs() < 1e-3, "r_max = {}", rec.r_max);
    }

    #[test]
    fn subcritical_degrees_are_rejected() {
        assert!(matches!(
            compute_params(100, 0.9, 0.1, 1.0, 1.0),
            Err(TomoError::SubCritical(_))
        ));
        assert!(compute_params(5, 3.0, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn params_echo_is_reproducible() {
        let a = compute_params(2_000, 3.0, 0.2, 1.0, 1.0).unwrap();
        let b = compute_params(2_000, 3.0, 0.2, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trial_is_deterministic() {
        let mut cfg = ExperimentConfig::exact(200, 3.0, 0.4, Scenario::S1);
        cfg.seed = 11;
        cfg.r = Some(3.0);
        let a = run_trial(&cfg, 0).unwrap();
        let b = run_trial(&cfg, 0).unwrap();
        assert_eq!(a.csv_row(), b.csv_row());
    }

    #[test]
    fn tree_like_exact_trial_scores_zero() {
        // Scan seeds for an instance whose giant component is a tree with
        // at least 4 participants; its reconstruction must be exact.
        let mut found = false;
        for seed in 0..200u64 {
            let mut cfg = ExperimentConfig::exact(50, 1.3, 0.9, Scenario::S1);
            cfg.seed = seed;
            cfg.r = Some(60.0);
            let g = generate_er(cfg.n, cfg.c, mix3(cfg.seed, 0, 1)).unwrap();
            let giant = giant_component(&g);
            let acyclic = giant.edge_count() + 1 == giant.node_count();
            if !acyclic || giant.node_count() < 8 {
                continue;
            }
            let r = run_trial(&cfg, 0).unwrap();
            if r.skipped.is_some() {
                continue;
            }
            found = true;
            assert_eq!(r.edit_score(), 0, "seed {seed}: {r:?}");
            break;
        }
        assert!(found, "no tree-like instance located in the seed scan");
    }

    #[test]
    fn skipped_trials_are_accounted() {
        let mut cfg = ExperimentConfig::exact(60, 1.2, 0.12, Scenario::S1);
        cfg.trials = 8;
        cfg.seed = 3;
        let (results, summary) = run_experiment(&cfg).unwrap();
        assert_eq!(results.len(), 8);
        assert_eq!(summary.trials, summary.completed + summary.skipped);
        assert!(summary.skipped > 0, "tiny rho should skip some trials");
    }

    #[test]
    fn single_trial_summary_equals_trial() {
        let mut cfg = ExperimentConfig::exact(150, 3.0, 0.5, Scenario::S1);
        cfg.seed = 5;
        cfg.r = Some(2.5);
        let (results, summary) = run_experiment(&cfg).unwrap();
        assert_eq!(results.len(), 1);
        if results[0].skipped.is_none() {
            assert_eq!(summary.edit.mean, results[0].edit_score() as f64);
            assert_eq!(summary.edit.median, summary.edit.mean);
        }
    }

    #[test]
    fn aggregation_is_order_independent() {
        let mut cfg = ExperimentConfig::exact(120, 3.0, 0.5, Scenario::S1);
        cfg.trials = 6;
        cfg.seed = 9;
        cfg.r = Some(2.5);
        let (mut results, summary) = run_experiment(&cfg).unwrap();
        results.reverse();
        results.sort_by_key(|r| r.trial);
        assert_eq!(summarize(&results), summary);
    }

    #[test]
    fn config_round_trips_as_json() {
        let mut cfg = ExperimentConfig::exact(500, 3.0, 0.2, Scenario::S2);
        cfg.m = Some(1000);
        cfg.trials = 3;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n, 500);
        assert_eq!(back.m, Some(1000));
        assert!(matches!(back.scenario, Scenario::S2));
    }

    #[test]
    fn bernoulli_and_exact_count_sampling() {
        let g = generate_er(400, 3.0, 1).unwrap();
        let giant = giant_component(&g);
        let a = sample_participants(&giant, 0.3, false, 7);
        let b = sample_participants(&giant, 0.3, true, 7);
        let expect = 0.3 * giant.node_count() as f64;
        assert_eq!(b.len(), expect.round() as usize);
        assert!((a.len() as f64 - expect).abs() < 5.0 * (expect * 0.7).sqrt());
        // determinism
        assert_eq!(a, sample_participants(&giant, 0.3, false, 7));
    }
}
