//! Energy-hub domain model.
//!
//! A hub buys electricity and gas from the grid (`r`), trades the surplus or
//! deficit against its own supply `s`, and converts supply into served
//! electricity and heat demand `d` through three devices: a transformer
//! (efficiency `eta_ee`), a combined heat-and-power unit (`eta_ce` electric,
//! `eta_ch` thermal), and a gas furnace (`eta_gh`). A dispatch factor
//! `alpha` splits the gas stream between CHP and furnace, which makes the
//! raw conversion map bilinear in `(alpha, s)`.
//!
//! The module removes that bilinearity by splitting the gas input into two
//! hypothetical ports carrying `alpha*s_g` and `(1-alpha)*s_g`. The lifted
//! port vector `l = (s_e, alpha*s_g, (1-alpha)*s_g)` makes conversion the
//! fixed linear map `B`, and the extended decision `u = (l, d)` turns each
//! hub's feasible set into a polytope `Omega` described by box bounds and
//! the conversion balance `B_bar u = M1 u`.

use nalgebra::{Matrix2, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Denominator threshold below which the dispatch factor of a recovered
/// decision is considered undefined (no gas flows at all).
pub const DEFAULT_TIEBREAK_TOL: f64 = 1e-9;

/// A two-carrier quantity: electricity in `e`, gas or heat in `g`
/// (which carrier `g` means follows from context: gas on the supply side,
/// heat on the demand side). Also used for the multiplier/tracker pairs
/// that live in the same 2-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyVector {
    pub e: f64,
    pub g: f64,
}

impl EnergyVector {
    pub const ZERO: EnergyVector = EnergyVector { e: 0.0, g: 0.0 };

    pub fn new(e: f64, g: f64) -> Self {
        EnergyVector { e, g }
    }

    pub fn norm(&self) -> f64 {
        self.e.hypot(self.g)
    }

    pub fn norm_inf(&self) -> f64 {
        self.e.abs().max(self.g.abs())
    }

    pub fn dot(&self, other: &EnergyVector) -> f64 {
        self.e * other.e + self.g * other.g
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.g.is_finite()
    }

    /// Componentwise `lo <= self <= hi`, with slack `tol` on both sides.
    pub fn within(&self, lo: &EnergyVector, hi: &EnergyVector, tol: f64) -> bool {
        self.e >= lo.e - tol && self.e <= hi.e + tol && self.g >= lo.g - tol && self.g <= hi.g + tol
    }
}

impl std::ops::Add for EnergyVector {
    type Output = EnergyVector;
    fn add(self, rhs: EnergyVector) -> EnergyVector {
        EnergyVector::new(self.e + rhs.e, self.g + rhs.g)
    }
}

impl std::ops::Sub for EnergyVector {
    type Output = EnergyVector;
    fn sub(self, rhs: EnergyVector) -> EnergyVector {
        EnergyVector::new(self.e - rhs.e, self.g - rhs.g)
    }
}

impl std::ops::Mul<f64> for EnergyVector {
    type Output = EnergyVector;
    fn mul(self, k: f64) -> EnergyVector {
        EnergyVector::new(self.e * k, self.g * k)
    }
}

impl std::ops::AddAssign for EnergyVector {
    fn add_assign(&mut self, rhs: EnergyVector) {
        self.e += rhs.e;
        self.g += rhs.g;
    }
}

/// Conversion efficiencies of the three devices; `eta_ce`/`eta_ch` are the
/// CHP's gas-to-electricity and gas-to-heat efficiencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySet {
    pub eta_ee: f64,
    pub eta_ce: f64,
    pub eta_ch: f64,
    pub eta_gh: f64,
}

impl EfficiencySet {
    pub fn new(eta_ee: f64, eta_ce: f64, eta_ch: f64, eta_gh: f64) -> Result<Self, Error> {
        let set = EfficiencySet {
            eta_ee,
            eta_ce,
            eta_ch,
            eta_gh,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("eta_ee", self.eta_ee),
            ("eta_ce", self.eta_ce),
            ("eta_ch", self.eta_ch),
            ("eta_gh", self.eta_gh),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::model(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// One quadratic `c2*x^2 + c1*x + c0`. Cost curves use it directly; utility
/// curves store their concavity coefficient as a positive `c2` and are
/// evaluated as `-c2*x^2 + c1*x + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticCoeffs {
    pub c2: f64,
    pub c1: f64,
    #[serde(default)]
    pub c0: f64,
}

impl QuadraticCoeffs {
    pub fn new(c2: f64, c1: f64, c0: f64) -> Self {
        QuadraticCoeffs { c2, c1, c0 }
    }
}

/// Prices at which hubs settle mutual trades; they cancel out of the system
/// objective (total trade sums to zero) and only affect reported per-hub
/// welfare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradePrice {
    pub zeta_e: f64,
    pub zeta_g: f64,
}

impl TradePrice {
    pub fn new(zeta_e: f64, zeta_g: f64) -> Result<Self, Error> {
        if zeta_e < 0.0 || zeta_g < 0.0 {
            return Err(Error::model(format!(
                "trade prices must be nonnegative, got ({zeta_e}, {zeta_g})"
            )));
        }
        Ok(TradePrice { zeta_e, zeta_g })
    }
}

/// The extended per-hub decision `u = (l1, l2, l3, d_e, d_h)`: the three
/// hypothetical input ports followed by the served demands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedDecision {
    pub u: [f64; 5],
}

impl ExtendedDecision {
    pub fn new(u: [f64; 5]) -> Self {
        ExtendedDecision { u }
    }

    /// Total supply seen at the grid interface: `M u = (l1, l2 + l3)`.
    pub fn supply(&self) -> EnergyVector {
        EnergyVector::new(self.u[0], self.u[1] + self.u[2])
    }

    /// Served demand: `M1 u = (d_e, d_h)`.
    pub fn demand(&self) -> EnergyVector {
        EnergyVector::new(self.u[3], self.u[4])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite())
    }

    pub fn as_vector(&self) -> SVector<f64, 5> {
        SVector::from(self.u)
    }
}

/// The constant matrices of the lifted formulation, fixed once the
/// efficiencies are known:
///
/// - `b` converts ports to demand: `B = [[eta_ee, eta_ce, 0], [0, eta_ch, eta_gh]]`;
/// - `b_bar = [B, 0]` applies the same map to an extended decision;
/// - `m` selects supply, `m1` selects demand, `m2`/`m3` select the two gas
///   ports (whose nonnegativity encodes `alpha` in `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperators {
    pub b: SMatrix<f64, 2, 3>,
    pub b_bar: SMatrix<f64, 2, 5>,
    pub m: SMatrix<f64, 2, 5>,
    pub m1: SMatrix<f64, 2, 5>,
    pub m2: SMatrix<f64, 1, 5>,
    pub m3: SMatrix<f64, 1, 5>,
}

impl CouplingOperators {
    pub fn new(eff: &EfficiencySet) -> Self {
        let b = SMatrix::<f64, 2, 3>::new(eff.eta_ee, eff.eta_ce, 0.0, 0.0, eff.eta_ch, eff.eta_gh);
        let mut b_bar = SMatrix::<f64, 2, 5>::zeros();
        b_bar.view_mut((0, 0), (2, 3)).copy_from(&b);
        #[rustfmt::skip]
        let m = SMatrix::<f64, 2, 5>::new(
            1.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 1.0, 0.0, 0.0,
        );
        #[rustfmt::skip]
        let m1 = SMatrix::<f64, 2, 5>::new(
            0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0,
        );
        let m2 = SMatrix::<f64, 1, 5>::new(0.0, 1.0, 0.0, 0.0, 0.0);
        let m3 = SMatrix::<f64, 1, 5>::new(0.0, 0.0, 1.0, 0.0, 0.0);
        CouplingOperators {
            b,
            b_bar,
            m,
            m1,
            m2,
            m3,
        }
    }
}

/// Everything that defines one hub: conversion efficiencies, box bounds on
/// grid purchases `r`, supply `s`, and demand `d`, the quadratic cost and
/// utility coefficients per carrier, and the optional Taguchi
/// dissatisfaction term `taguchi_theta * |d - d_hat|^2`.
///
/// `welfare_constant` carries the per-hub constant offset reported with
/// welfare values; it never influences any optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubParameters {
    pub efficiencies: EfficiencySet,
    pub r_lo: EnergyVector,
    pub r_hi: EnergyVector,
    pub s_lo: EnergyVector,
    pub s_hi: EnergyVector,
    pub d_lo: EnergyVector,
    pub d_hi: EnergyVector,
    pub cost_e: QuadraticCoeffs,
    pub cost_g: QuadraticCoeffs,
    pub util_e: QuadraticCoeffs,
    pub util_g: QuadraticCoeffs,
    #[serde(default)]
    pub taguchi_theta: f64,
    #[serde(default)]
    pub d_hat: Option<EnergyVector>,
    #[serde(default)]
    pub welfare_constant: f64,
}

impl HubParameters {
    /// Checks the sign and ordering requirements: positive curvature on
    /// cost and utility (strict convexity/concavity), ordered bounds, valid
    /// efficiencies, nonnegative dissatisfaction weight.
    pub fn validate(&self) -> Result<(), Error> {
        self.efficiencies.validate()?;
        for (name, lo, hi) in [
            ("r", &self.r_lo, &self.r_hi),
            ("s", &self.s_lo, &self.s_hi),
            ("d", &self.d_lo, &self.d_hi),
        ] {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::model(format!("{name} bounds must be finite")));
            }
            if lo.e > hi.e || lo.g > hi.g {
                return Err(Error::model(format!(
                    "{name} bounds are reversed: lo=({}, {}), hi=({}, {})",
                    lo.e, lo.g, hi.e, hi.g
                )));
            }
        }
        for (name, q) in [("cost_e", &self.cost_e), ("cost_g", &self.cost_g)] {
            if !(q.c2 > 0.0) {
                return Err(Error::model(format!("{name}.c2 = {} must be > 0", q.c2)));
            }
        }
        for (name, q) in [("util_e", &self.util_e), ("util_g", &self.util_g)] {
            if !(q.c2 > 0.0) {
                return Err(Error::model(format!("{name}.c2 = {} must be > 0", q.c2)));
            }
        }
        if self.taguchi_theta < 0.0 {
            return Err(Error::model(format!(
                "taguchi_theta = {} must be >= 0",
                self.taguchi_theta
            )));
        }
        if self.taguchi_theta > 0.0 && self.d_hat.is_none() {
            return Err(Error::model("taguchi_theta set without d_hat"));
        }
        Ok(())
    }

    pub fn operators(&self) -> CouplingOperators {
        CouplingOperators::new(&self.efficiencies)
    }
}

/// Supply-to-demand conversion map at a fixed dispatch factor:
/// `A(alpha) = [[eta_ee, alpha*eta_ce], [0, alpha*eta_ch + (1-alpha)*eta_gh]]`.
pub fn coupling_matrix(eff: &EfficiencySet, alpha: f64) -> Result<Matrix2<f64>, Error> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::model(format!(
            "dispatch factor {alpha} outside [0, 1]"
        )));
    }
    Ok(Matrix2::new(
        eff.eta_ee,
        alpha * eff.eta_ce,
        0.0,
        alpha * eff.eta_ch + (1.0 - alpha) * eff.eta_gh,
    ))
}

/// Splits a supply vector into hypothetical ports:
/// `l = (s_e, alpha*s_g, (1-alpha)*s_g)`. For every efficiency set,
/// `B l = A(alpha) s`.
pub fn lift(s: &EnergyVector, alpha: f64) -> Result<[f64; 3], Error> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::model(format!(
            "dispatch factor {alpha} outside [0, 1]"
        )));
    }
    Ok([s.e, alpha * s.g, (1.0 - alpha) * s.g])
}

/// Reads supply, demand, and dispatch factor back out of an extended
/// decision: `s = (u1, u2+u3)`, `d = (u4, u5)`, `alpha = u2/(u2+u3)`.
/// When the gas ports carry (numerically) nothing, `alpha` is undefined and
/// `alpha_fallback` is reported instead.
pub fn recover(u: &ExtendedDecision, alpha_fallback: f64) -> (EnergyVector, EnergyVector, f64) {
    let s = u.supply();
    let d = u.demand();
    let total_gas = u.u[1] + u.u[2];
    let alpha = if total_gas > DEFAULT_TIEBREAK_TOL {
        u.u[1] / total_gas
    } else {
        alpha_fallback
    };
    (s, d, alpha)
}

/// Purchase cost `C(r)`: one convex quadratic per carrier.
pub fn cost(p: &HubParameters, r: &EnergyVector) -> f64 {
    let qe = &p.cost_e;
    let qg = &p.cost_g;
    qe.c2 * r.e * r.e + qe.c1 * r.e + qe.c0 + qg.c2 * r.g * r.g + qg.c1 * r.g + qg.c0
}

/// Consumption utility `U(d)`: one concave quadratic per carrier, minus the
/// optional Taguchi dissatisfaction `theta * |d - d_hat|^2`.
pub fn utility(p: &HubParameters, d: &EnergyVector) -> f64 {
    let qe = &p.util_e;
    let qg = &p.util_g;
    let mut v = -qe.c2 * d.e * d.e + qe.c1 * d.e + qe.c0 - qg.c2 * d.g * d.g + qg.c1 * d.g + qg.c0;
    if p.taguchi_theta > 0.0 {
        let d_hat = p.d_hat.unwrap_or(EnergyVector::ZERO);
        let diff = *d - d_hat;
        v -= p.taguchi_theta * (diff.e * diff.e + diff.g * diff.g);
    }
    v
}

/// Per-hub welfare: utility minus cost minus the settlement for net trade
/// `s - r` at prices `zeta`, plus the hub's reporting constant. The trade
/// terms cancel when summed over all hubs of a balanced system, so this is
/// a reporting quantity, not an optimization objective.
pub fn local_welfare(
    p: &HubParameters,
    zeta: &TradePrice,
    r: &EnergyVector,
    s: &EnergyVector,
    d: &EnergyVector,
) -> f64 {
    let trade = zeta.zeta_e * (s.e - r.e) + zeta.zeta_g * (s.g - r.g);
    utility(p, d) - cost(p, r) - trade + p.welfare_constant
}

/// Membership test for the hub's lifted feasible polytope `Omega`: box
/// bounds on `r`, `M u`, and `M1 u`; nonnegative gas ports; and the
/// conversion balance `B_bar u = M1 u`, all with slack `tol`.
pub fn in_omega(p: &HubParameters, r: &EnergyVector, u: &ExtendedDecision, tol: f64) -> bool {
    if !(r.is_finite() && u.is_finite()) {
        return false;
    }
    if !r.within(&p.r_lo, &p.r_hi, tol) {
        return false;
    }
    let s = u.supply();
    if !s.within(&p.s_lo, &p.s_hi, tol) {
        return false;
    }
    let d = u.demand();
    if !d.within(&p.d_lo, &p.d_hi, tol) {
        return false;
    }
    if u.u[1] < -tol || u.u[2] < -tol {
        return false;
    }
    let ops = p.operators();
    let residual = ops.b_bar * u.as_vector() - ops.m1 * u.as_vector();
    residual.amax() <= tol
}
