//! Per-hub subproblem solver.
//!
//! Every round, each hub minimizes
//!
//! ```text
//!   F_i(r, u) + phi' (r - M u) + (rho/2) | (r - r_k) - M (u - u_k) + sigma |^2
//! ```
//!
//! over its feasible polytope `Omega_i`, where `F_i = cost(r) - utility(M1 u)`
//! and `(r_k, u_k, sigma, phi)` come from the round state. The conversion
//! equalities `u4 = eta_ee u1 + eta_ce u2`, `u5 = eta_ch u2 + eta_gh u3`
//! are eliminated up front, leaving a strictly convex 5-variable QP
//! `x = (r_e, r_g, u1, u2, u3)` under 14 halfspaces (three box pairs, the
//! demand image box, and the two gas-port signs).
//!
//! The QP is solved with a log-barrier interior-point scheme: Newton
//! centering stages with the barrier weight divided by 10 per stage until
//! the duality-gap bound reaches the target. The schedule is fixed and
//! deterministic, so equal subproblems produce bit-identical solutions.
//! A tiny ridge on the two gas ports pins the one direction the penalty
//! and welfare terms cannot see (they only depend on `u2 + u3`); the
//! perturbation is far below reporting precision.
//!
//! Solution quality is certified by [`kkt_residual`]: the projected
//! gradient of the objective at the candidate, measured through an exact
//! (active-set-polished) Euclidean projection onto `Omega_i`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::hub::{EnergyVector, ExtendedDecision, HubParameters};

/// Curvature added on the two gas ports to make the reduced Hessian
/// strictly positive definite even without the round penalty.
pub const RIDGE: f64 = 1e-10;

/// Default duality-gap / KKT tolerance for subproblem solves.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Default feasibility slack for membership checks on returned solutions.
pub const DEFAULT_FEAS_TOL: f64 = 1e-8;

/// Step length used by the projected-gradient KKT residual. Chosen large
/// enough that the interior-point centering error (which enters the
/// residual divided by this step) stays well below the certified
/// tolerances, and small enough that curvature effects do not.
const KKT_STEP: f64 = 1e-2;

const NEWTON_DECREMENT_TOL: f64 = 1e-12;
const NEWTON_ITERATION_CAP: usize = 60;
const BACKTRACK_CAP: usize = 60;
const FRACTION_TO_BOUNDARY: f64 = 0.99;

/// One hub's round subproblem: the hub model, the penalty factor, the
/// anchors `(r_k, u_k)`, the mixed tracker `sigma`, and the mixed
/// multiplier `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub hub: HubParameters,
    pub rho: f64,
    pub r_anchor: EnergyVector,
    pub u_anchor: ExtendedDecision,
    pub sigma: EnergyVector,
    pub phi: EnergyVector,
}

impl Subproblem {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rho > 0.0) {
            return Err(Error::model(format!(
                "penalty factor rho = {} must be > 0",
                self.rho
            )));
        }
        if !(self.r_anchor.is_finite()
            && self.u_anchor.is_finite()
            && self.sigma.is_finite()
            && self.phi.is_finite())
        {
            return Err(Error::model("subproblem anchors must be finite"));
        }
        Ok(())
    }
}

/// A certified subproblem solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub r: EnergyVector,
    pub u: ExtendedDecision,
    /// Projected-gradient norm at `(r, u)`; small means the point is a
    /// numerical minimizer over the polytope.
    pub kkt_residual: f64,
    /// Value of the round objective at `(r, u)`.
    pub objective: f64,
}

/// The eliminated-coordinate QP data: objective
/// `x' Q x / 2 + q' x + k0` under `G x <= h`, plus the conversion rows
/// used to restore `u4, u5`.
struct ReducedQp {
    q_mat: SMatrix<f64, 5, 5>,
    q_lin: SVector<f64, 5>,
    k0: f64,
    g: SMatrix<f64, 14, 5>,
    h: SVector<f64, 14>,
    /// Demand map rows: `d = conv * (u1, u2, u3)`.
    conv: SMatrix<f64, 2, 3>,
}

/// Penalty configuration for the shared QP builder: the round's proximal
/// term, or pure pricing for the centralized oracle's inner solves.
enum PriceTerm {
    /// `phi' (r - M u) + (rho/2) |(r - M u) - c|^2` with `c` precomputed
    /// from the anchors.
    Penalized {
        phi: EnergyVector,
        rho: f64,
        c: EnergyVector,
    },
    /// `mu' (r - M u)` only.
    Priced { mu: EnergyVector },
}

fn demand_map(p: &HubParameters) -> SMatrix<f64, 2, 3> {
    let eff = &p.efficiencies;
    SMatrix::<f64, 2, 3>::new(eff.eta_ee, eff.eta_ce, 0.0, 0.0, eff.eta_ch, eff.eta_gh)
}

fn build_qp(p: &HubParameters, price: &PriceTerm) -> ReducedQp {
    let conv = demand_map(p);
    let theta = p.taguchi_theta;
    let d_hat = p.d_hat.unwrap_or(EnergyVector::ZERO);

    let mut q_mat = SMatrix::<f64, 5, 5>::zeros();
    let mut q_lin = SVector::<f64, 5>::zeros();
    let mut k0 = p.cost_e.c0 + p.cost_g.c0 - p.util_e.c0 - p.util_g.c0;

    // Purchase cost.
    q_mat[(0, 0)] += 2.0 * p.cost_e.c2;
    q_mat[(1, 1)] += 2.0 * p.cost_g.c2;
    q_lin[0] += p.cost_e.c1;
    q_lin[1] += p.cost_g.c1;

    // Minus utility of the served demand d = conv * (u1, u2, u3), including
    // the optional Taguchi dissatisfaction:
    //   -U(d) = (g1 + th) d^2 - (g2 + 2 th d_hat) d + th d_hat^2 - g3.
    let curv = [2.0 * (p.util_e.c2 + theta), 2.0 * (p.util_g.c2 + theta)];
    let lin = [
        p.util_e.c1 + 2.0 * theta * d_hat.e,
        p.util_g.c1 + 2.0 * theta * d_hat.g,
    ];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = 0.0;
            for carrier in 0..2 {
                acc += conv[(carrier, a)] * curv[carrier] * conv[(carrier, b)];
            }
            q_mat[(2 + a, 2 + b)] += acc;
        }
        q_lin[2 + a] -= conv[(0, a)] * lin[0] + conv[(1, a)] * lin[1];
    }
    k0 += theta * (d_hat.e * d_hat.e + d_hat.g * d_hat.g);

    // Ridge pinning the (u2, u3) direction that every other term sees only
    // through u2 + u3.
    q_mat[(3, 3)] += 2.0 * RIDGE;
    q_mat[(4, 4)] += 2.0 * RIDGE;

    // Trade direction r - M u in eliminated coordinates.
    let ge = SVector::<f64, 5>::from([1.0, 0.0, -1.0, 0.0, 0.0]);
    let gg = SVector::<f64, 5>::from([0.0, 1.0, 0.0, -1.0, -1.0]);
    match price {
        PriceTerm::Penalized { phi, rho, c } => {
            q_lin += ge * phi.e + gg * phi.g;
            q_mat += (ge * ge.transpose() + gg * gg.transpose()) * *rho;
            q_lin -= ge * (rho * c.e) + gg * (rho * c.g);
            k0 += 0.5 * rho * (c.e * c.e + c.g * c.g);
        }
        PriceTerm::Priced { mu } => {
            q_lin += ge * mu.e + gg * mu.g;
        }
    }

    // Constraint rows G x <= h.
    let mut g = SMatrix::<f64, 14, 5>::zeros();
    let mut h = SVector::<f64, 14>::zeros();
    let mut row = 0;
    let mut bound = |g: &mut SMatrix<f64, 14, 5>,
                     h: &mut SVector<f64, 14>,
                     coeffs: [f64; 5],
                     lo: f64,
                     hi: f64| {
        for (j, c) in coeffs.iter().enumerate() {
            g[(row, j)] = *c;
            g[(row + 1, j)] = -*c;
        }
        h[row] = hi;
        h[row + 1] = -lo;
        row += 2;
    };
    bound(
        &mut g,
        &mut h,
        [1.0, 0.0, 0.0, 0.0, 0.0],
        p.r_lo.e,
        p.r_hi.e,
    );
    bound(
        &mut g,
        &mut h,
        [0.0, 1.0, 0.0, 0.0, 0.0],
        p.r_lo.g,
        p.r_hi.g,
    );
    bound(
        &mut g,
        &mut h,
        [0.0, 0.0, 1.0, 0.0, 0.0],
        p.s_lo.e,
        p.s_hi.e,
    );
    bound(
        &mut g,
        &mut h,
        [0.0, 0.0, 0.0, 1.0, 1.0],
        p.s_lo.g,
        p.s_hi.g,
    );
    bound(
        &mut g,
        &mut h,
        [0.0, 0.0, conv[(0, 0)], conv[(0, 1)], conv[(0, 2)]],
        p.d_lo.e,
        p.d_hi.e,
    );
    bound(
        &mut g,
        &mut h,
        [0.0, 0.0, conv[(1, 0)], conv[(1, 1)], conv[(1, 2)]],
        p.d_lo.g,
        p.d_hi.g,
    );
    g[(12, 3)] = -1.0; // u2 >= 0
    g[(13, 4)] = -1.0; // u3 >= 0

    ReducedQp {
        q_mat,
        q_lin,
        k0,
        g,
        h,
        conv,
    }
}

impl ReducedQp {
    fn value(&self, x: &SVector<f64, 5>) -> f64 {
        0.5 * (self.q_mat * x).dot(x) + self.q_lin.dot(x) + self.k0
    }

    fn gradient(&self, x: &SVector<f64, 5>) -> SVector<f64, 5> {
        self.q_mat * x + self.q_lin
    }

    fn slacks(&self, x: &SVector<f64, 5>) -> SVector<f64, 14> {
        self.h - self.g * x
    }

    fn expand(&self, x: &SVector<f64, 5>) -> (EnergyVector, ExtendedDecision) {
        let r = EnergyVector::new(x[0], x[1]);
        let ports = SVector::<f64, 3>::new(x[2], x[3], x[4]);
        let d = self.conv * ports;
        let u = ExtendedDecision::new([x[2], x[3], x[4], d[0], d[1]]);
        (r, u)
    }

    fn reduce(r: &EnergyVector, u: &ExtendedDecision) -> SVector<f64, 5> {
        SVector::<f64, 5>::new(r.e, r.g, u.u[0], u.u[1], u.u[2])
    }
}

/// Quick necessary feasibility screen by interval arithmetic: ordered
/// boxes, and each demand box overlapping the interval of demands reachable
/// from the supply box. Passing this screen does not prove feasibility
/// (the two demand carriers share the CHP port); phase-I below is the
/// complete check.
fn interval_preflight(p: &HubParameters) -> Result<(), Error> {
    let eff = &p.efficiencies;
    let de_reach = (
        eff.eta_ee * p.s_lo.e,
        eff.eta_ee * p.s_hi.e + eff.eta_ce * p.s_hi.g,
    );
    if de_reach.1 < p.d_lo.e || de_reach.0 > p.d_hi.e {
        return Err(Error::infeasible(format!(
            "electric demand box [{}, {}] unreachable: supply box yields [{}, {}]",
            p.d_lo.e, p.d_hi.e, de_reach.0, de_reach.1
        )));
    }
    let gmin = eff.eta_ch.min(eff.eta_gh);
    let gmax = eff.eta_ch.max(eff.eta_gh);
    let dg_reach = (gmin * p.s_lo.g, gmax * p.s_hi.g);
    if dg_reach.1 < p.d_lo.g || dg_reach.0 > p.d_hi.g {
        return Err(Error::infeasible(format!(
            "heat demand box [{}, {}] unreachable: gas supply box yields [{}, {}]",
            p.d_lo.g, p.d_hi.g, dg_reach.0, dg_reach.1
        )));
    }
    Ok(())
}

/// Barrier minimization of `x' Q x / 2 + q' x` under `G x <= h` from a
/// strictly feasible start. Newton centering with Armijo backtracking and a
/// fraction-to-boundary cap; the barrier weight grows tenfold per stage
/// until `m / t` reaches `gap_target`.
fn barrier_minimize<const N: usize, const M: usize>(
    q_mat: &SMatrix<f64, N, N>,
    q_lin: &SVector<f64, N>,
    g: &SMatrix<f64, M, N>,
    h: &SVector<f64, M>,
    start: SVector<f64, N>,
    gap_target: f64,
    // Optional early exit: stop as soon as the iterate satisfies this.
    early_stop: Option<&dyn Fn(&SVector<f64, N>) -> bool>,
) -> Result<SVector<f64, N>, Error> {
    let m = M as f64;
    let mut x = start;
    {
        let slacks = h - g * x;
        if slacks.min() <= 0.0 {
            return Err(Error::Numerical(
                "barrier start is not strictly feasible".into(),
            ));
        }
    }

    let merit = |x: &SVector<f64, N>, t: f64| -> f64 {
        let slacks = h - g * x;
        let mut barrier = 0.0;
        for i in 0..M {
            if slacks[i] <= 0.0 {
                return f64::INFINITY;
            }
            barrier -= slacks[i].ln();
        }
        t * (0.5 * (q_mat * x).dot(x) + q_lin.dot(x)) + barrier
    };

    let mut t = 1.0;
    loop {
        for _ in 0..NEWTON_ITERATION_CAP {
            if let Some(stop) = early_stop {
                if stop(&x) {
                    return Ok(x);
                }
            }
            let slacks = h - g * x;
            // Newton system: (t Q + G' S^-2 G) dx = -(t (Qx + q) + G' S^-1 1).
            let mut hess = *q_mat * t;
            let mut grad = (q_mat * x + q_lin) * t;
            for i in 0..M {
                let inv = 1.0 / slacks[i];
                let row = g.row(i);
                grad += row.transpose() * inv;
                hess += row.transpose() * row * (inv * inv);
            }

            let dx = solve_spd_with_jitter(hess, -grad)?;
            let decrement = -grad.dot(&dx);
            if decrement <= 2.0 * NEWTON_DECREMENT_TOL {
                break;
            }

            // Longest step keeping strict feasibility.
            let gdx = g * dx;
            let mut alpha: f64 = 1.0;
            for i in 0..M {
                if gdx[i] > 0.0 {
                    alpha = alpha.min(FRACTION_TO_BOUNDARY * slacks[i] / gdx[i]);
                }
            }

            let base = merit(&x, t);
            let slope = grad.dot(&dx);
            let mut accepted = false;
            for _ in 0..BACKTRACK_CAP {
                let cand = x + dx * alpha;
                if merit(&cand, t) <= base + 0.25 * alpha * slope {
                    x = cand;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Progress stalled at numerical precision for this stage;
                // the current center is as good as this stage can deliver.
                break;
            }
        }
        if m / t <= gap_target {
            return Ok(x);
        }
        t *= 10.0;
    }
}

/// Cholesky solve with escalating diagonal jitter for nearly singular
/// Newton systems (the barrier Hessian can lose definiteness to rounding
/// near very tight slacks).
fn solve_spd_with_jitter<const N: usize>(
    mut hess: SMatrix<f64, N, N>,
    rhs: SVector<f64, N>,
) -> Result<SVector<f64, N>, Error> {
    let base = hess.trace().abs().max(1e-300) / N as f64;
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut attempt = hess;
        if jitter > 0.0 {
            for i in 0..N {
                attempt[(i, i)] += jitter;
            }
        }
        if let Some(chol) = attempt.cholesky() {
            return Ok(chol.solve(&rhs));
        }
        jitter = if jitter == 0.0 {
            1e-12 * base
        } else {
            jitter * 100.0
        };
        hess = attempt;
    }
    Err(Error::Numerical(
        "Newton system remained singular after jitter escalation".into(),
    ))
}

/// Deterministic strictly-interior point of the reduced polytope: a coarse
/// scan over supply levels and gas splits, falling back to a phase-I
/// barrier when the scan finds nothing with a safe margin.
fn interior_start(p: &HubParameters, qp: &ReducedQp) -> Result<SVector<f64, 5>, Error> {
    let margin_of = |x: &SVector<f64, 5>| qp.slacks(x).min();
    let scale = 1.0 + qp.h.amax();

    let fractions = [0.5, 0.25, 0.75, 0.05, 0.95];
    let mut best: Option<(f64, SVector<f64, 5>)> = None;
    let r = SVector::<f64, 2>::new(0.5 * (p.r_lo.e + p.r_hi.e), 0.5 * (p.r_lo.g + p.r_hi.g));
    for fe in fractions {
        let u1 = p.s_lo.e + fe * (p.s_hi.e - p.s_lo.e);
        for fg in fractions {
            let sg = p.s_lo.g + fg * (p.s_hi.g - p.s_lo.g);
            for alpha in fractions {
                let x = SVector::<f64, 5>::new(r[0], r[1], u1, alpha * sg, (1.0 - alpha) * sg);
                let margin = margin_of(&x);
                if best.as_ref().map_or(true, |(m, _)| margin > *m) {
                    best = Some((margin, x));
                }
            }
        }
    }
    if let Some((margin, x)) = best {
        if margin > 1e-7 * scale {
            return Ok(x);
        }
    }

    // Phase I: minimize the worst violation tau over (x, tau); any iterate
    // with tau comfortably negative is a usable interior point.
    let x0 = best.map(|(_, x)| x).unwrap_or_else(SVector::zeros);
    let tau0 = -margin_of(&x0) + 1.0;
    let mut lifted_g = SMatrix::<f64, 15, 6>::zeros();
    let mut lifted_h = SVector::<f64, 15>::zeros();
    for i in 0..14 {
        for j in 0..5 {
            lifted_g[(i, j)] = qp.g[(i, j)];
        }
        lifted_g[(i, 5)] = -1.0;
        lifted_h[i] = qp.h[i];
    }
    // Keep tau bounded above so the lifted polytope has a nonempty, bounded
    // barrier domain in the tau direction.
    lifted_g[(14, 5)] = 1.0;
    lifted_h[14] = tau0 + 1.0;

    let q_mat = SMatrix::<f64, 6, 6>::zeros();
    let mut q_lin = SVector::<f64, 6>::zeros();
    q_lin[5] = 1.0;
    let mut start = SVector::<f64, 6>::zeros();
    for j in 0..5 {
        start[j] = x0[j];
    }
    start[5] = tau0;

    let needed = 1e-6 * scale;
    let deep_enough = move |z: &SVector<f64, 6>| z[5] < -2.0 * needed;
    let z = barrier_minimize(
        &q_mat,
        &q_lin,
        &lifted_g,
        &lifted_h,
        start,
        1e-9 * scale,
        Some(&deep_enough),
    )?;
    let x = SVector::<f64, 5>::new(z[0], z[1], z[2], z[3], z[4]);
    if margin_of(&x) <= needed * 0.5 {
        return Err(Error::infeasible(
            "local feasible set has no interior point (phase-I minimum is nonnegative)",
        ));
    }
    Ok(x)
}

fn penalty_term(sp: &Subproblem) -> PriceTerm {
    let supply_anchor = sp.u_anchor.supply();
    let c = (sp.r_anchor - supply_anchor) - sp.sigma;
    PriceTerm::Penalized {
        phi: sp.phi,
        rho: sp.rho,
        c,
    }
}

fn run_reduced(
    p: &HubParameters,
    price: &PriceTerm,
    tol: f64,
) -> Result<(ReducedQp, SVector<f64, 5>), Error> {
    interval_preflight(p)?;
    let qp = build_qp(p, price);
    let start = interior_start(p, &qp)?;
    let gap_target = (tol * 1e-2).clamp(1e-13, 1e-6);
    let x = barrier_minimize(&qp.q_mat, &qp.q_lin, &qp.g, &qp.h, start, gap_target, None)?;
    Ok((qp, x))
}

/// Solves the round subproblem to (at least) duality gap `tol * 1e-2` and
/// returns the solution together with its projected-gradient certificate.
pub fn solve_local(sp: &Subproblem, tol: f64) -> Result<LocalSolution, Error> {
    sp.validate()?;
    let price = penalty_term(sp);
    let (qp, x) = run_reduced(&sp.hub, &price, tol)?;
    let (r, u) = qp.expand(&x);
    let residual = kkt_residual(sp, &r, &u)?;
    Ok(LocalSolution {
        r,
        u,
        kkt_residual: residual,
        objective: qp.value(&x),
    })
}

/// Oracle entry: minimizes `F_i + mu' (r - M u)` over the same polytope
/// (no proximal penalty, no anchors), as used by the centralized dual
/// ascent.
pub fn solve_priced(
    p: &HubParameters,
    mu: &EnergyVector,
    tol: f64,
) -> Result<LocalSolution, Error> {
    let price = PriceTerm::Priced { mu: *mu };
    let (qp, x) = run_reduced(p, &price, tol)?;
    let (r, u) = qp.expand(&x);
    Ok(LocalSolution {
        r,
        u,
        kkt_residual: f64::NAN,
        objective: qp.value(&x),
    })
}

/// Value of the round objective at an arbitrary point, in full
/// `(r, u)` coordinates (the conversion equalities need not hold).
pub fn objective(sp: &Subproblem, r: &EnergyVector, u: &ExtendedDecision) -> f64 {
    let p = &sp.hub;
    let d = u.demand();
    let supply = u.supply();
    let trade = *r - supply;
    let supply_anchor = sp.u_anchor.supply();
    let c = (sp.r_anchor - supply_anchor) - sp.sigma;
    let dev = trade - c;
    crate::hub::cost(p, r) - crate::hub::utility(p, &d)
        + sp.phi.dot(&trade)
        + 0.5 * sp.rho * dev.dot(&dev)
        + RIDGE * (u.u[1] * u.u[1] + u.u[2] * u.u[2])
}

/// Analytic gradient of [`objective`] with respect to `(r, u)`, in full
/// coordinates.
pub fn objective_gradient(
    sp: &Subproblem,
    r: &EnergyVector,
    u: &ExtendedDecision,
) -> (EnergyVector, [f64; 5]) {
    let p = &sp.hub;
    let d = u.demand();
    let supply = u.supply();
    let supply_anchor = sp.u_anchor.supply();
    let c = (sp.r_anchor - supply_anchor) - sp.sigma;
    let dev = (*r - supply) - c;

    // d cost / d r + pricing and penalty through r.
    let grad_r = EnergyVector::new(
        2.0 * p.cost_e.c2 * r.e + p.cost_e.c1 + sp.phi.e + sp.rho * dev.e,
        2.0 * p.cost_g.c2 * r.g + p.cost_g.c1 + sp.phi.g + sp.rho * dev.g,
    );

    // -dU/dd at the demand components, including the Taguchi term.
    let theta = p.taguchi_theta;
    let d_hat = p.d_hat.unwrap_or(EnergyVector::ZERO);
    let dneg_e = 2.0 * (p.util_e.c2 + theta) * d.e - (p.util_e.c1 + 2.0 * theta * d_hat.e);
    let dneg_g = 2.0 * (p.util_g.c2 + theta) * d.g - (p.util_g.c1 + 2.0 * theta * d_hat.g);

    // Pricing and penalty reach u only through M u = (u1, u2 + u3).
    let through_supply_e = -(sp.phi.e + sp.rho * dev.e);
    let through_supply_g = -(sp.phi.g + sp.rho * dev.g);

    let grad_u = [
        through_supply_e,
        through_supply_g + 2.0 * RIDGE * u.u[1],
        through_supply_g + 2.0 * RIDGE * u.u[2],
        dneg_e,
        dneg_g,
    ];
    (grad_r, grad_u)
}

/// Projected-gradient optimality residual of the round objective at a
/// feasible candidate: `|cand - P(cand - step * grad)| / step` in the
/// eliminated coordinates, with `P` the Euclidean projection onto the
/// polytope.
pub fn kkt_residual(sp: &Subproblem, r: &EnergyVector, u: &ExtendedDecision) -> Result<f64, Error> {
    let price = penalty_term(sp);
    let qp = build_qp(&sp.hub, &price);
    let x = ReducedQp::reduce(r, u);
    let grad = qp.gradient(&x);
    let target = x - grad * KKT_STEP;
    let projected = project_onto_polytope(&sp.hub, &qp, &target)?;
    Ok((x - projected).norm() / KKT_STEP)
}

/// Euclidean projection onto the reduced polytope: an interior-point solve
/// of `min |z - y|^2` followed by an exact polish on the identified active
/// set. The polish solves the equality-constrained projection with a
/// pseudo-inverse (degenerate corners are rank-deficient) and is accepted
/// only if it reproduces a feasible point with nonnegative multipliers.
fn project_onto_polytope(
    p: &HubParameters,
    qp: &ReducedQp,
    y: &SVector<f64, 5>,
) -> Result<SVector<f64, 5>, Error> {
    let q_mat = SMatrix::<f64, 5, 5>::identity() * 2.0;
    let q_lin = -y * 2.0;
    let start = interior_start(p, qp)?;
    let z = barrier_minimize(&q_mat, &q_lin, &qp.g, &qp.h, start, 1e-10, None)?;

    // Identify active rows from the interior-point slacks.
    let scale = 1.0 + qp.h.amax();
    let slacks = qp.slacks(&z);
    let mut active: Vec<usize> = (0..14).filter(|&i| slacks[i] < 1e-6 * scale).collect();

    // Drop rows whose multiplier comes out negative and re-polish; a
    // correct active set yields lambda >= 0 for this projection.
    for _ in 0..6 {
        if active.is_empty() {
            return Ok(*y);
        }
        let k = active.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(k, 5);
        let mut viol = nalgebra::DVector::<f64>::zeros(k);
        for (row, &i) in active.iter().enumerate() {
            for j in 0..5 {
                a[(row, j)] = qp.g[(i, j)];
            }
            let gy: f64 = (0..5).map(|j| qp.g[(i, j)] * y[j]).sum();
            viol[row] = gy - qp.h[i];
        }
        let gram = &a * a.transpose();
        let svd = gram.svd(true, true);
        let lambda = svd
            .solve(&viol, 1e-10)
            .map_err(|e| Error::Numerical(format!("projection polish failed: {e}")))?;

        if let Some(worst) = (0..k).filter(|&i| lambda[i] < -1e-9).min_by(|&i, &j| {
            lambda[i]
                .partial_cmp(&lambda[j])
                .unwrap_or(std::cmp::Ordering::Equal)
        }) {
            active.remove(worst);
            continue;
        }

        let mut polished = *y;
        for (row, &i) in active.iter().enumerate() {
            for j in 0..5 {
                polished[j] -= lambda[row] * qp.g[(i, j)];
            }
        }
        let ok_feasible = qp.slacks(&polished).min() >= -1e-9 * scale;
        let ok_close = (polished - z).norm() <= 1e-4 * scale;
        if ok_feasible && ok_close {
            return Ok(polished);
        }
        break;
    }
    // The polish did not certify; the interior-point projection is still a
    // valid approximation.
    Ok(z)
}
