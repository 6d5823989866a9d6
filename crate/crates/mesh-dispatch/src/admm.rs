//! Synchronous decentralized rounds: dynamic average tracking of the
//! supply/demand mismatch and of the price multipliers, plus the per-hub
//! penalized solves.
//!
//! Every round, each node
//!
//! 1. mixes its neighbors' trackers: `sigma_i = sum_j w_ij e_j`,
//!    `phi_i = sum_j w_ij mu_j`;
//! 2. solves its local subproblem anchored at the round-k decision;
//! 3. updates the tracker `e_i' = sigma_i + (r_i' - r_i) - (M u_i' - M u_i)`
//!    and the multiplier `mu_i' = phi_i + rho e_i'`.
//!
//! All reads use round-k snapshots, so node updates within a round are
//! independent; they run in parallel and the results are collected in
//! node order, which keeps runs bit-reproducible regardless of scheduling.
//!
//! Two exact bookkeeping identities are tracked every round and surface in
//! the trace: conservation (`sum e_i = sum (r_i - M u_i)`, with the
//! matching mean-multiplier recursion) and the disagreement recursion of
//! the tracker (its deviation from the mean contracts through the
//! zero-row-sum part of the weight matrix).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::hub::{recover, EnergyVector, ExtendedDecision, HubParameters};
use crate::network::{metropolis_weights, neighbor_sum, Topology, WeightMatrix};
use crate::solver::{solve_local, Subproblem};

/// Parameters of one decentralized run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Penalty factor of the proximal term (and multiplier step size).
    pub rho: f64,
    /// Per-node stopping threshold on the round-to-round deltas.
    pub epsilon: f64,
    /// Minimum number of rounds before the threshold may stop the run.
    pub n_min: usize,
    /// Hard cap on rounds; reaching it flags the run as non-converged.
    pub n_max: usize,
    /// Seed for the initial decision draw.
    pub seed: u64,
    /// Tolerance handed to the per-hub solver.
    pub inner_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rho: 0.1,
            epsilon: 0.05,
            n_min: 300,
            n_max: 1000,
            seed: 42,
            inner_tol: 1e-8,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config(format!(
                "rho must be positive and finite, got {}",
                self.rho
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.n_min < 1 {
            return Err(Error::config("n_min must be at least 1"));
        }
        if self.n_max < self.n_min {
            return Err(Error::config(format!(
                "n_max = {} must be at least n_min = {}",
                self.n_max, self.n_min
            )));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol.is_finite()) {
            return Err(Error::config(format!(
                "inner_tol must be positive and finite, got {}",
                self.inner_tol
            )));
        }
        Ok(())
    }
}

/// One node's full round state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub r: EnergyVector,
    pub u: ExtendedDecision,
    pub mu: EnergyVector,
    pub e: EnergyVector,
    pub sigma: EnergyVector,
    pub phi: EnergyVector,
    pub s: EnergyVector,
    pub d: EnergyVector,
    pub alpha: f64,
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Round index, starting at 1.
    pub k: usize,
    /// Per-node round-to-round deltas.
    pub delta_r: Vec<f64>,
    pub delta_s: Vec<f64>,
    pub delta_d: Vec<f64>,
    pub delta_alpha: Vec<f64>,
    /// Aggregate supply/demand mismatch `sum_i (r_i - M u_i)`.
    pub mismatch: EnergyVector,
    /// `max_i |mu_i - mean(mu)|`.
    pub mu_spread: f64,
    /// `max_i |e_i - mean(e)|`.
    pub e_spread: f64,
    /// `max_i |e_i|`.
    pub e_norm_max: f64,
    /// Worst violation of the conservation identity and the
    /// mean-multiplier recursion this round.
    pub lemma1_residual: f64,
    /// Violation of the tracker disagreement recursion this round.
    pub tracker_residual: f64,
    /// Global objective `sum_i (cost_i(r_i) - utility_i(d_i))`.
    pub welfare: f64,
    /// Fleet-average multiplier.
    pub mu_mean: EnergyVector,
    /// Tracker disagreement energy `sum_i |e_i - mean(e)|^2`.
    pub e_energy: f64,
}

impl IterationRecord {
    /// True when every per-node delta of this round is below `epsilon`.
    pub fn within_epsilon(&self, epsilon: f64) -> bool {
        let below = |v: &[f64]| v.iter().all(|x| *x < epsilon);
        below(&self.delta_r)
            && below(&self.delta_s)
            && below(&self.delta_d)
            && below(&self.delta_alpha)
    }
}

/// Full history of a run plus its termination status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// True when the run stopped through the epsilon criterion.
    pub converged: bool,
    /// Rounds completed.
    pub iterations: usize,
    /// First round whose deltas were all below epsilon, if any.
    pub first_eps_iteration: Option<usize>,
}

/// Draws the initial decisions: `r` and supply uniformly inside their
/// boxes, the dispatch split uniformly in `[0, 1]`, demand derived through
/// the conversion stage so the coupling equalities hold exactly, and
/// `e = r - M u` per the tracker's base case. Multipliers start at zero.
pub fn init(hubs: &[HubParameters], cfg: &RunConfig) -> Result<Vec<NodeState>, Error> {
    if hubs.is_empty() {
        return Err(Error::model("cannot initialize a run with zero hubs"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = Vec::with_capacity(hubs.len());
    for hub in hubs {
        hub.validate()?;
        let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let r = EnergyVector::new(
            draw(&mut rng, hub.r_lo.e, hub.r_hi.e),
            draw(&mut rng, hub.r_lo.g, hub.r_hi.g),
        );
        let s = EnergyVector::new(
            draw(&mut rng, hub.s_lo.e, hub.s_hi.e),
            draw(&mut rng, hub.s_lo.g, hub.s_hi.g),
        );
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let l = crate::hub::lift(&s, alpha)?;
        let ops = hub.operators();
        let d_vec = ops.b * nalgebra::SVector::<f64, 3>::from(l);
        let u = ExtendedDecision::new([l[0], l[1], l[2], d_vec[0], d_vec[1]]);
        let e = r - u.supply();
        states.push(NodeState {
            r,
            u,
            mu: EnergyVector::ZERO,
            e,
            sigma: EnergyVector::ZERO,
            phi: EnergyVector::ZERO,
            s,
            d: EnergyVector::new(d_vec[0], d_vec[1]),
            alpha,
        });
    }
    Ok(states)
}

/// One synchronous round. Every node reads only round-k values; the local
/// solves run in parallel and errors carry the offending node id.
pub fn step(
    states: &[NodeState],
    w: &WeightMatrix,
    hubs: &[HubParameters],
    cfg: &RunConfig,
) -> Result<Vec<NodeState>, Error> {
    let n = states.len();
    if hubs.len() != n {
        return Err(Error::model(format!(
            "{} states but {} hubs",
            n,
            hubs.len()
        )));
    }
    if w.size() != n {
        return Err(Error::topology(format!(
            "{}x{} weights for {} nodes",
            w.size(),
            w.size(),
            n
        )));
    }

    let e_snapshot: Vec<EnergyVector> = states.iter().map(|s| s.e).collect();
    let mu_snapshot: Vec<EnergyVector> = states.iter().map(|s| s.mu).collect();
    let mut mixed = Vec::with_capacity(n);
    for i in 0..n {
        mixed.push((
            neighbor_sum(w, i, &e_snapshot)?,
            neighbor_sum(w, i, &mu_snapshot)?,
        ));
    }

    let solved: Vec<Result<NodeState, Error>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (sigma, phi) = mixed[i];
            let sp = Subproblem {
                hub: hubs[i].clone(),
                rho: cfg.rho,
                r_anchor: states[i].r,
                u_anchor: states[i].u,
                sigma,
                phi,
            };
            let sol = solve_local(&sp, cfg.inner_tol).map_err(|err| {
                Error::Numerical(format!("node {}: local solve failed: {err}", i + 1))
            })?;
            let e_next = sigma + (sol.r - states[i].r) - (sol.u.supply() - states[i].u.supply());
            let mu_next = phi + e_next * cfg.rho;
            let (s, d, alpha) = recover(&sol.u, states[i].alpha);
            Ok(NodeState {
                r: sol.r,
                u: sol.u,
                mu: mu_next,
                e: e_next,
                sigma,
                phi,
                s,
                d,
                alpha,
            })
        })
        .collect();

    let mut next = Vec::with_capacity(n);
    for result in solved {
        next.push(result?);
    }
    Ok(next)
}

/// Conservation residual `| sum_i e_i - sum_i (r_i - M u_i) |_inf`.
pub fn check_lemma1(states: &[NodeState]) -> f64 {
    let mut e_sum = EnergyVector::ZERO;
    let mut mismatch = EnergyVector::ZERO;
    for st in states {
        e_sum += st.e;
        mismatch += st.r - st.u.supply();
    }
    (e_sum - mismatch).norm_inf()
}

/// Mean-multiplier recursion residual
/// `| mean(mu') - mean(mu) - rho * mean(e') |_inf` across one round.
pub fn mu_mean_residual(prev: &[NodeState], next: &[NodeState], rho: f64) -> f64 {
    let n = prev.len() as f64;
    let mut acc = EnergyVector::ZERO;
    for (p, q) in prev.iter().zip(next) {
        acc += q.mu - p.mu - q.e * rho;
    }
    (acc * (1.0 / n)).norm_inf()
}

/// Tracker disagreement recursion residual: with `W1` the zero-row-sum
/// part of the weights and `delta_i = (r_i - M u_i) - mean`, checks
/// `e' - mean(e') = W1 e + (delta' - delta)` componentwise across one
/// round.
pub fn tracker_recursion_residual(
    prev: &[NodeState],
    next: &[NodeState],
    w: &WeightMatrix,
) -> Result<f64, Error> {
    let n = prev.len();
    if next.len() != n || w.size() != n {
        return Err(Error::model(
            "tracker residual needs matching state and weight dimensions",
        ));
    }
    let mean = |f: &dyn Fn(&NodeState) -> EnergyVector, states: &[NodeState]| {
        let mut acc = EnergyVector::ZERO;
        for st in states {
            acc += f(st);
        }
        acc * (1.0 / n as f64)
    };
    let e_prev: Vec<EnergyVector> = prev.iter().map(|s| s.e).collect();
    let e_mean_prev = mean(&|s: &NodeState| s.e, prev);
    let e_mean_next = mean(&|s: &NodeState| s.e, next);
    let m_of = |s: &NodeState| s.r - s.u.supply();
    let m_mean_prev = mean(&m_of, prev);
    let m_mean_next = mean(&m_of, next);

    let mut worst = 0.0f64;
    for i in 0..n {
        let mixed = neighbor_sum(w, i, &e_prev)?;
        let predicted =
            (mixed - e_mean_prev) + (m_of(&next[i]) - m_mean_next) - (m_of(&prev[i]) - m_mean_prev);
        let actual = next[i].e - e_mean_next;
        worst = worst.max((actual - predicted).norm_inf());
    }
    Ok(worst)
}

fn global_objective(hubs: &[HubParameters], states: &[NodeState]) -> f64 {
    hubs.iter()
        .zip(states)
        .map(|(hub, st)| crate::hub::cost(hub, &st.r) - crate::hub::utility(hub, &st.d))
        .sum()
}

fn record_round(
    k: usize,
    prev: &[NodeState],
    next: &[NodeState],
    hubs: &[HubParameters],
    w: &WeightMatrix,
    rho: f64,
) -> Result<IterationRecord, Error> {
    let n = next.len();
    let mut delta_r = Vec::with_capacity(n);
    let mut delta_s = Vec::with_capacity(n);
    let mut delta_d = Vec::with_capacity(n);
    let mut delta_alpha = Vec::with_capacity(n);
    let mut mismatch = EnergyVector::ZERO;
    for (p, q) in prev.iter().zip(next) {
        delta_r.push((q.r - p.r).norm());
        delta_s.push((q.s - p.s).norm());
        delta_d.push((q.d - p.d).norm());
        delta_alpha.push((q.alpha - p.alpha).abs());
        mismatch += q.r - q.u.supply();
    }
    let (mu_spread, e_spread) = crate::analysis::consensus_spread(next);
    let e_norm_max = next.iter().map(|s| s.e.norm()).fold(0.0f64, f64::max);
    let lemma1_residual = check_lemma1(next).max(mu_mean_residual(prev, next, rho));
    let tracker_residual = tracker_recursion_residual(prev, next, w)?;
    let inv_n = 1.0 / n as f64;
    let mut mu_mean = EnergyVector::ZERO;
    let mut e_mean = EnergyVector::ZERO;
    for st in next {
        mu_mean += st.mu;
        e_mean += st.e;
    }
    mu_mean = mu_mean * inv_n;
    e_mean = e_mean * inv_n;
    let e_energy = next
        .iter()
        .map(|st| (st.e - e_mean).dot(&(st.e - e_mean)))
        .sum();
    Ok(IterationRecord {
        k,
        delta_r,
        delta_s,
        delta_d,
        delta_alpha,
        mismatch,
        mu_spread,
        e_spread,
        e_norm_max,
        lemma1_residual,
        tracker_residual,
        welfare: global_objective(hubs, next),
        mu_mean,
        e_energy,
    })
}

/// Runs the decentralized iteration on `hubs` over the communication graph
/// `t` until every node's round-to-round deltas drop below `epsilon` (but
/// not before `n_min` rounds) or the hard cap `n_max` is reached, in which
/// case the trace is flagged non-converged.
pub fn run(
    hubs: &[HubParameters],
    t: &Topology,
    cfg: &RunConfig,
) -> Result<(RunTrace, Vec<NodeState>), Error> {
    cfg.validate()?;
    if hubs.len() != t.node_count() {
        return Err(Error::topology(format!(
            "{} hubs for a {}-node topology",
            hubs.len(),
            t.node_count()
        )));
    }
    let w = metropolis_weights(t)?;
    let mut states = init(hubs, cfg)?;
    let mut records = Vec::new();
    let mut first_eps_iteration = None;
    let mut converged = false;

    let mut k = 0;
    while k < cfg.n_max {
        k += 1;
        let next = step(&states, &w, hubs, cfg)?;
        let record = record_round(k, &states, &next, hubs, &w, cfg.rho)?;
        states = next;
        let within = record.within_epsilon(cfg.epsilon);
        records.push(record);
        if within && first_eps_iteration.is_none() {
            first_eps_iteration = Some(k);
        }
        if within && k >= cfg.n_min {
            converged = true;
            break;
        }
    }

    let trace = RunTrace {
        records,
        converged,
        iterations: k,
        first_eps_iteration,
    };
    Ok((trace, states))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hub::tests::node1;

    /// Three-hub test fleet: the 14-bus node-1 hub plus two coefficient
    /// variations, all with comfortably feasible boxes.
    pub(crate) fn trio() -> Vec<HubParameters> {
        let mut a = node1();
        let mut b = node1();
        b.cost_e.c1 = 13.5;
        b.cost_g.c1 = 5.0;
        b.util_e.c2 = 0.14;
        b.util_g.c2 = 0.024;
        let mut c = node1();
        c.cost_e.c2 = 0.08;
        c.util_e.c1 = 8.5;
        c.s_hi = EnergyVector::new(110.0, 120.0);
        c.d_hi = EnergyVector::new(100.0, 60.0);
        a.welfare_constant = 0.0;
        b.welfare_constant = 0.0;
        c.welfare_constant = 0.0;
        vec![a, b, c]
    }

    fn k3() -> Topology {
        Topology::new(3, &[(1, 2), (2, 3), (1, 3)]).unwrap()
    }

    fn quick_cfg() -> RunConfig {
        RunConfig {
            rho: 0.1,
            epsilon: 1e9,
            n_min: 5,
            n_max: 10,
            seed: 42,
            inner_tol: 1e-8,
        }
    }

    #[test]
    fn init_is_reproducible_and_satisfies_base_identities() {
        let hubs = trio();
        let cfg = RunConfig::default();
        let a = init(&hubs, &cfg).unwrap();
        let b = init(&hubs, &cfg).unwrap();
        assert_eq!(a, b);
        for st in &a {
            // e0 = r0 - M u0 holds exactly.
            assert_eq!((st.e - (st.r - st.u.supply())).norm_inf(), 0.0);
            assert_eq!(st.mu, EnergyVector::ZERO);
            assert_eq!(st.sigma, EnergyVector::ZERO);
            assert_eq!(st.phi, EnergyVector::ZERO);
            // Conversion equalities hold exactly for the drawn decision.
            let ops = hubs[0].operators();
            let res = ops.b_bar * st.u.as_vector() - ops.m1 * st.u.as_vector();
            assert!(res.amax() <= 1e-12);
        }
        assert_eq!(check_lemma1(&a), 0.0);
    }

    #[test]
    fn init_seeds_differ() {
        let hubs = trio();
        let a = init(
            &hubs,
            &RunConfig {
                seed: 1,
                ..RunConfig::default()
            },
        )
        .unwrap();
        let b = init(
            &hubs,
            &RunConfig {
                seed: 2,
                ..RunConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn init_rejects_empty_fleet() {
        assert!(matches!(
            init(&[], &RunConfig::default()),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn single_node_round_collapses_to_classic_admm() {
        let hubs = vec![node1()];
        let t = Topology::new(1, &[]).unwrap();
        let w = metropolis_weights(&t).unwrap();
        let cfg = quick_cfg();
        let states = init(&hubs, &cfg).unwrap();
        let next = step(&states, &w, &hubs, &cfg).unwrap();
        // With W = [[1]], sigma and phi are the node's own previous values.
        assert_eq!(next[0].sigma, states[0].e);
        assert_eq!(next[0].phi, states[0].mu);
        // e tracks r - M u exactly in the single-node case.
        assert!((next[0].e - (next[0].r - next[0].u.supply())).norm_inf() <= 1e-12);
    }

    #[test]
    fn single_node_run_drives_mismatch_to_zero() {
        let hubs = vec![node1()];
        let t = Topology::new(1, &[]).unwrap();
        let cfg = RunConfig {
            n_min: 60,
            n_max: 60,
            ..quick_cfg()
        };
        let (trace, states) = run(&hubs, &t, &cfg).unwrap();
        let last = trace.records.last().unwrap();
        assert!(
            last.mismatch.norm() < 1e-2,
            "supply should meet demand at the fixed point, mismatch {:?}",
            last.mismatch
        );
        assert!((states[0].r - states[0].s).norm() < 1e-2);
    }

    #[test]
    fn bookkeeping_identities_hold_across_rounds() {
        let hubs = trio();
        let t = k3();
        let w = metropolis_weights(&t).unwrap();
        let cfg = quick_cfg();
        let mut states = init(&hubs, &cfg).unwrap();
        for _ in 0..8 {
            let next = step(&states, &w, &hubs, &cfg).unwrap();
            assert!(check_lemma1(&next) <= 1e-9);
            assert!(mu_mean_residual(&states, &next, cfg.rho) <= 1e-9);
            assert!(tracker_recursion_residual(&states, &next, &w).unwrap() <= 1e-9);
            states = next;
        }
    }

    #[test]
    fn corrupted_tracker_breaks_conservation() {
        let hubs = trio();
        let cfg = quick_cfg();
        let mut states = init(&hubs, &cfg).unwrap();
        states[1].e.e += 3.0;
        assert!(check_lemma1(&states) >= 2.9);
    }

    #[test]
    fn huge_epsilon_stops_exactly_at_n_min() {
        let hubs = trio();
        let t = k3();
        let cfg = RunConfig {
            epsilon: 1e9,
            n_min: 5,
            n_max: 50,
            ..RunConfig::default()
        };
        let (trace, _) = run(&hubs, &t, &cfg).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations, 5);
        assert_eq!(trace.records.len(), 5);
        assert_eq!(trace.first_eps_iteration, Some(1));
    }

    #[test]
    fn tiny_epsilon_hits_the_cap_and_flags_non_convergence() {
        let hubs = trio();
        let t = k3();
        let cfg = RunConfig {
            epsilon: 1e-12,
            n_min: 1,
            n_max: 4,
            ..RunConfig::default()
        };
        let (trace, _) = run(&hubs, &t, &cfg).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations, 4);
    }

    #[test]
    fn identical_configs_give_identical_traces() {
        let hubs = trio();
        let t = k3();
        let cfg = RunConfig {
            epsilon: 1e9,
            n_min: 6,
            n_max: 6,
            ..RunConfig::default()
        };
        let (ta, sa) = run(&hubs, &t, &cfg).unwrap();
        let (tb, sb) = run(&hubs, &t, &cfg).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(sa, sb);
    }

    #[test]
    fn states_remain_finite_and_consistent_with_recover() {
        let hubs = trio();
        let t = k3();
        let cfg = RunConfig {
            epsilon: 1e9,
            n_min: 6,
            n_max: 6,
            ..RunConfig::default()
        };
        let (_, states) = run(&hubs, &t, &cfg).unwrap();
        for st in &states {
            assert!(st.r.is_finite() && st.u.is_finite() && st.mu.is_finite());
            let (s, d, alpha) = recover(&st.u, st.alpha);
            assert_eq!(s, st.s);
            assert_eq!(d, st.d);
            assert_eq!(alpha, st.alpha);
        }
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let bad_rho = RunConfig {
            rho: 0.0,
            ..RunConfig::default()
        };
        assert!(bad_rho.validate().is_err());
        let bad_eps = RunConfig {
            epsilon: -1.0,
            ..RunConfig::default()
        };
        assert!(bad_eps.validate().is_err());
        let bad_order = RunConfig {
            n_min: 10,
            n_max: 5,
            ..RunConfig::default()
        };
        assert!(bad_order.validate().is_err());
        let bad_inner = RunConfig {
            inner_tol: 0.0,
            ..RunConfig::default()
        };
        assert!(bad_inner.validate().is_err());
    }
}
