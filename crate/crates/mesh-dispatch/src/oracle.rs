//! Centralized reference solver.
//!
//! The coupled welfare problem — minimize `sum_i [cost_i(r_i) -
//! utility_i(M1 u_i)]` subject to `sum_i r_i = sum_i M u_i` and the
//! per-hub polytopes — separates once the balance constraint is priced:
//! for a price vector `mu` each hub solves its own priced subproblem, and
//! the concave dual function's exact gradient is the aggregate mismatch.
//! Dual ascent on the 2-dimensional price with backtracking then drives
//! the mismatch to tolerance.
//!
//! Reusing the per-hub solver for the inner minimizations keeps the
//! oracle and the decentralized path on one code base; tests compare both
//! against an independent brute-force grid on small instances.
//!
//! Strict convexity of the fleet's cost and utility quadratics makes the
//! inner minimizers unique, hence the dual differentiable; merely convex
//! fleets are outside this oracle's scope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::hub::{recover, EnergyVector, ExtendedDecision, HubParameters};
use crate::solver::solve_priced;

/// Outer dual-ascent iteration cap.
pub const DUAL_ITERATION_CAP: usize = 500;

/// Smallest backtracking step before the ascent declares a stall.
const STEP_FLOOR: f64 = 1e-10;

/// Centralized optimum with its quality residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSolution {
    pub r_star: Vec<EnergyVector>,
    pub u_star: Vec<ExtendedDecision>,
    /// Optimal global objective `sum_i [cost_i - utility_i]`.
    pub f_star: f64,
    /// Balance price at the optimum.
    pub mu_star: EnergyVector,
    /// Norm of the aggregate mismatch at the returned allocation.
    pub feasibility_residual: f64,
    /// Gap between the dual value and the primal objective at the
    /// returned allocation.
    pub dual_gap: f64,
}

impl CentralSolution {
    /// Per-node supply, demand, and dispatch split recovered from `u_star`.
    pub fn physical_allocations(&self) -> Vec<(EnergyVector, EnergyVector, f64)> {
        self.u_star.iter().map(|u| recover(u, 0.0)).collect()
    }
}

/// One dual evaluation: per-hub priced solutions, the dual value, and the
/// aggregate mismatch (the dual gradient).
struct DualPoint {
    solutions: Vec<(EnergyVector, ExtendedDecision)>,
    value: f64,
    gradient: EnergyVector,
}

fn evaluate_dual(hubs: &[HubParameters], mu: &EnergyVector, tol: f64) -> Result<DualPoint, Error> {
    let solved: Vec<Result<_, Error>> = hubs
        .par_iter()
        .map(|hub| {
            let sol = solve_priced(hub, mu, tol)?;
            Ok((sol.r, sol.u, sol.objective))
        })
        .collect();
    let mut solutions = Vec::with_capacity(hubs.len());
    let mut value = 0.0;
    let mut gradient = EnergyVector::ZERO;
    for (i, result) in solved.into_iter().enumerate() {
        let (r, u, objective) =
            result.map_err(|err| Error::Numerical(format!("hub {}: {err}", i + 1)))?;
        value += objective;
        gradient += r - u.supply();
        solutions.push((r, u));
    }
    Ok(DualPoint {
        solutions,
        value,
        gradient,
    })
}

/// Necessary aggregate feasibility screen: the fleet's total purchases
/// and total supplies must admit a common value per carrier.
fn aggregate_preflight(hubs: &[HubParameters]) -> Result<(), Error> {
    let mut r_lo = EnergyVector::ZERO;
    let mut r_hi = EnergyVector::ZERO;
    let mut s_lo = EnergyVector::ZERO;
    let mut s_hi = EnergyVector::ZERO;
    for p in hubs {
        r_lo += p.r_lo;
        r_hi += p.r_hi;
        s_lo += p.s_lo;
        s_hi += p.s_hi;
    }
    for (carrier, (rl, rh, sl, sh)) in [
        ("electricity", (r_lo.e, r_hi.e, s_lo.e, s_hi.e)),
        ("gas", (r_lo.g, r_hi.g, s_lo.g, s_hi.g)),
    ] {
        if rh < sl || rl > sh {
            return Err(Error::infeasible(format!(
                "aggregate {carrier} balance impossible: purchases span [{rl}, {rh}] \
                 but supplies span [{sl}, {sh}]"
            )));
        }
    }
    Ok(())
}

fn primal_objective(
    hubs: &[HubParameters],
    allocation: &[(EnergyVector, ExtendedDecision)],
) -> f64 {
    hubs.iter()
        .zip(allocation)
        .map(|(hub, (r, u))| crate::hub::cost(hub, r) - crate::hub::utility(hub, &u.demand()))
        .sum()
}

/// Solves the coupled problem by dual ascent to mismatch norm `tol`.
pub fn solve_centralized(hubs: &[HubParameters], tol: f64) -> Result<CentralSolution, Error> {
    if hubs.is_empty() {
        return Err(Error::model("cannot solve a zero-hub fleet"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::config(format!(
            "oracle tolerance must be positive, got {tol}"
        )));
    }
    for hub in hubs {
        hub.validate()?;
    }
    aggregate_preflight(hubs)?;

    let inner_tol = 1e-8;
    let mut mu = EnergyVector::ZERO;
    let mut point = evaluate_dual(hubs, &mu, inner_tol)?;
    let mut stalled = false;

    for _ in 0..DUAL_ITERATION_CAP {
        if point.gradient.norm() <= tol {
            return Ok(finish(hubs, mu, point));
        }
        // Ascent with Armijo backtracking from a unit step: the dual is
        // concave with gradient equal to the mismatch.
        let g = point.gradient;
        let slope = g.dot(&g);
        let mut step = 1.0;
        let mut advanced = false;
        while step >= STEP_FLOOR {
            let cand = mu + g * step;
            let cand_point = evaluate_dual(hubs, &cand, inner_tol)?;
            if cand_point.value >= point.value + 1e-4 * step * slope {
                mu = cand;
                point = cand_point;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            // The inner solver's precision floor has been reached; no
            // usable ascent direction remains.
            stalled = true;
            break;
        }
    }

    let grad_norm = point.gradient.norm();
    if grad_norm <= tol {
        return Ok(finish(hubs, mu, point));
    }
    let reason = if stalled {
        "stalled at the inner precision floor"
    } else {
        "hit the iteration cap"
    };
    Err(Error::NoConvergence(format!(
        "dual ascent {reason} with mismatch norm {grad_norm:.3e} > {tol:.3e} \
         at price ({:.6}, {:.6})",
        mu.e, mu.g
    )))
}

fn finish(hubs: &[HubParameters], mu: EnergyVector, point: DualPoint) -> CentralSolution {
    let f_star = primal_objective(hubs, &point.solutions);
    let (r_star, u_star) = point.solutions.into_iter().unzip();
    CentralSolution {
        r_star,
        u_star,
        f_star,
        mu_star: mu,
        feasibility_residual: point.gradient.norm(),
        dual_gap: (point.value - f_star).abs(),
    }
}

/// Global objective of an explicit allocation, after verifying every node
/// is inside its feasible set.
pub fn global_welfare(
    hubs: &[HubParameters],
    allocation: &[(EnergyVector, ExtendedDecision)],
) -> Result<f64, Error> {
    if hubs.len() != allocation.len() {
        return Err(Error::model(format!(
            "{} hubs but {} allocation entries",
            hubs.len(),
            allocation.len()
        )));
    }
    let mut violations = Vec::new();
    for (i, (hub, (r, u))) in hubs.iter().zip(allocation).enumerate() {
        if !crate::hub::in_omega(hub, r, u, 1e-6) {
            violations.push(format!("node {}", i + 1));
        }
    }
    if !violations.is_empty() {
        return Err(Error::infeasible(format!(
            "allocation violates feasible sets at {}",
            violations.join(", ")
        )));
    }
    Ok(primal_objective(hubs, allocation))
}
