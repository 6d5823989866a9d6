//! Built-in 14-bus case study and randomized instance generation.
//!
//! The shipped case couples 14 energy hubs over the standard IEEE 14-bus
//! branch list. Hub coefficients follow the published parameter table of
//! the case study, with all power bounds scaled to per-unit by a factor
//! of 10; each hub also carries its tabulated constant welfare offset.
//! The same efficiencies apply at every hub.
//!
//! [`random_case`] builds connected instances of any size for property
//! tests: a random spanning tree plus extra edges, coefficients sampled
//! from table-like ranges, and boxes constructed around an interior
//! witness so every node's feasible set is guaranteed nonempty.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admm::RunConfig;
use crate::error::Error;
use crate::hub::{
    coupling_matrix, EfficiencySet, EnergyVector, HubParameters, QuadraticCoeffs, TradePrice,
};
use crate::network::Topology;

/// A complete coordination scenario: who talks to whom, every hub's
/// economics, the settlement price, and the run defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudy {
    pub topology: Topology,
    pub hubs: Vec<HubParameters>,
    pub zeta: TradePrice,
    pub defaults: RunConfig,
}

/// Conversion efficiencies shared by all hubs of the built-in case.
pub fn standard_efficiencies() -> EfficiencySet {
    EfficiencySet::new(0.9, 0.7, 0.5, 0.4).expect("constant efficiencies are valid")
}

/// IEEE 14-bus branch list (1-based node pairs).
pub const IEEE14_BRANCHES: [(usize, usize); 20] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (2, 4),
    (2, 5),
    (3, 4),
    (4, 5),
    (4, 7),
    (4, 9),
    (5, 6),
    (6, 11),
    (6, 12),
    (6, 13),
    (7, 8),
    (7, 9),
    (9, 10),
    (9, 14),
    (10, 11),
    (12, 13),
    (13, 14),
];

// Per-hub welfare coefficients: electricity purchase cost (quadratic,
// linear), gas purchase cost, electricity demand utility, gas demand
// utility, and the constant offset of the local welfare function.
const COST_E: [(f64, f64); 14] = [
    (0.11, 12.0),
    (0.05, 13.5),
    (0.08, 11.5),
    (0.03, 12.5),
    (0.06, 11.7),
    (0.07, 11.9),
    (0.04, 12.6),
    (0.12, 12.8),
    (0.11, 11.6),
    (0.06, 13.3),
    (0.09, 13.2),
    (0.05, 13.0),
    (0.07, 12.7),
    (0.08, 12.1),
];
const COST_G: [(f64, f64); 14] = [
    (0.033, 5.6),
    (0.042, 5.0),
    (0.033, 5.5),
    (0.021, 6.6),
    (0.034, 5.7),
    (0.025, 5.5),
    (0.028, 5.3),
    (0.036, 6.1),
    (0.030, 6.4),
    (0.029, 6.0),
    (0.023, 5.8),
    (0.027, 5.9),
    (0.026, 5.1),
    (0.031, 5.2),
];
const UTIL_E: [(f64, f64); 14] = [
    (0.13, 7.2),
    (0.14, 7.3),
    (0.11, 8.5),
    (0.09, 7.4),
    (0.15, 7.7),
    (0.16, 8.1),
    (0.10, 8.2),
    (0.12, 7.9),
    (0.13, 8.0),
    (0.08, 7.5),
    (0.11, 7.6),
    (0.07, 7.4),
    (0.11, 7.8),
    (0.10, 8.3),
];
const UTIL_G: [(f64, f64); 14] = [
    (0.023, 3.4),
    (0.024, 3.3),
    (0.030, 4.5),
    (0.028, 3.7),
    (0.015, 3.8),
    (0.017, 4.1),
    (0.020, 3.2),
    (0.022, 3.9),
    (0.016, 4.3),
    (0.018, 3.6),
    (0.021, 3.8),
    (0.017, 4.0),
    (0.026, 3.9),
    (0.010, 3.9),
];
const WELFARE_CONSTANTS: [f64; 14] = [
    0.57, 0.33, 0.50, 0.58, 0.21, 0.24, 0.72, 0.15, 0.78, 0.22, 0.40, 0.56, 0.42, 0.53,
];

// Electricity and gas bound intervals before the x10 per-unit scaling;
// each applies alike to purchases, supplies, and demands at that hub.
const BOUNDS_E: [(f64, f64); 14] = [
    (2.0, 9.0),
    (4.0, 15.0),
    (1.0, 10.0),
    (2.0, 14.0),
    (2.0, 14.0),
    (3.0, 15.0),
    (3.0, 15.0),
    (4.0, 16.0),
    (2.0, 15.0),
    (0.0, 9.0),
    (5.0, 13.0),
    (2.0, 15.0),
    (2.0, 15.0),
    (3.0, 16.0),
];
const BOUNDS_G: [(f64, f64); 14] = [
    (3.0, 10.0),
    (2.0, 16.0),
    (1.0, 12.0),
    (2.0, 14.0),
    (3.0, 16.0),
    (4.0, 17.0),
    (3.0, 15.0),
    (3.0, 16.0),
    (2.0, 14.0),
    (0.0, 10.0),
    (5.0, 15.0),
    (1.0, 14.0),
    (2.0, 16.0),
    (3.0, 16.0),
];

const PU_SCALE: f64 = 10.0;

/// The built-in 14-hub case with its documented run defaults.
pub fn ieee14_case() -> CaseStudy {
    let topology = Topology::new(14, &IEEE14_BRANCHES).expect("branch list is connected");
    let mut hubs = Vec::with_capacity(14);
    for i in 0..14 {
        let (e_lo, e_hi) = (BOUNDS_E[i].0 * PU_SCALE, BOUNDS_E[i].1 * PU_SCALE);
        let (g_lo, g_hi) = (BOUNDS_G[i].0 * PU_SCALE, BOUNDS_G[i].1 * PU_SCALE);
        let lo = EnergyVector::new(e_lo, g_lo);
        let hi = EnergyVector::new(e_hi, g_hi);
        let hub = HubParameters {
            efficiencies: standard_efficiencies(),
            r_lo: lo,
            r_hi: hi,
            s_lo: lo,
            s_hi: hi,
            d_lo: lo,
            d_hi: hi,
            cost_e: QuadraticCoeffs::new(COST_E[i].0, COST_E[i].1, 0.0),
            cost_g: QuadraticCoeffs::new(COST_G[i].0, COST_G[i].1, 0.0),
            util_e: QuadraticCoeffs::new(UTIL_E[i].0, UTIL_E[i].1, 0.0),
            util_g: QuadraticCoeffs::new(UTIL_G[i].0, UTIL_G[i].1, 0.0),
            taguchi_theta: 0.0,
            d_hat: None,
            welfare_constant: WELFARE_CONSTANTS[i],
        };
        debug_assert!(hub.validate().is_ok());
        hubs.push(hub);
    }
    CaseStudy {
        topology,
        hubs,
        zeta: TradePrice::new(1.1, 0.6).expect("constant settlement price is valid"),
        defaults: RunConfig::default(),
    }
}

/// Sampling ranges for [`random_case`], loosely shaped like the built-in
/// parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseRanges {
    /// Quadratic cost coefficient interval.
    pub cost_quad: (f64, f64),
    /// Linear cost coefficient interval.
    pub cost_lin: (f64, f64),
    /// Quadratic utility coefficient interval.
    pub util_quad: (f64, f64),
    /// Linear utility coefficient interval.
    pub util_lin: (f64, f64),
    /// Box lower-corner interval.
    pub box_lo: (f64, f64),
    /// Box width interval.
    pub box_width: (f64, f64),
    /// Margin carved around the demand witness.
    pub demand_slack: (f64, f64),
}

impl Default for CaseRanges {
    fn default() -> Self {
        CaseRanges {
            cost_quad: (0.02, 0.15),
            cost_lin: (5.0, 14.0),
            util_quad: (0.01, 0.17),
            util_lin: (3.0, 9.0),
            box_lo: (0.0, 60.0),
            box_width: (30.0, 120.0),
            demand_slack: (8.0, 35.0),
        }
    }
}

/// A connected random instance with every hub feasible by construction:
/// the demand box is placed around the image of an interior supply
/// witness, so the witness certifies a nonempty feasible set.
pub fn random_case(n: usize, seed: u64, ranges: &CaseRanges) -> Result<CaseStudy, Error> {
    if n < 1 {
        return Err(Error::model("a case needs at least one hub"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Random spanning tree by parent attachment, then a few extra edges.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for child in 2..=n {
        let parent = rng.random_range(1..child);
        edges.push((parent, child));
    }
    let extras = n / 2;
    let mut attempts = 0;
    while attempts < 10 * extras.max(1) && edges.len() < (n - 1) + extras {
        attempts += 1;
        if n < 2 {
            break;
        }
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == key) {
            edges.push(key);
        }
    }
    let topology = Topology::new(n, &edges)?;

    let eff = standard_efficiencies();
    let mut hubs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut interval = |lo: (f64, f64), width: (f64, f64)| {
            let a = rng.random_range(lo.0..lo.1);
            let w = rng.random_range(width.0..width.1);
            (a, a + w)
        };
        let (re_lo, re_hi) = interval(ranges.box_lo, ranges.box_width);
        let (rg_lo, rg_hi) = interval(ranges.box_lo, ranges.box_width);
        let (se_lo, se_hi) = interval(ranges.box_lo, ranges.box_width);
        let (sg_lo, sg_hi) = interval(ranges.box_lo, ranges.box_width);

        // Interior supply witness and its demand image.
        let fe = rng.random_range(0.3..0.7);
        let fg = rng.random_range(0.3..0.7);
        let alpha = rng.random_range(0.2..0.8);
        let witness = EnergyVector::new(se_lo + fe * (se_hi - se_lo), sg_lo + fg * (sg_hi - sg_lo));
        let a_alpha = coupling_matrix(&eff, alpha)?;
        let image = a_alpha * nalgebra::Vector2::new(witness.e, witness.g);
        let slack_e = rng.random_range(ranges.demand_slack.0..ranges.demand_slack.1);
        let slack_g = rng.random_range(ranges.demand_slack.0..ranges.demand_slack.1);

        let mut quad = |range: (f64, f64)| rng.random_range(range.0..range.1);
        let hub = HubParameters {
            efficiencies: eff,
            r_lo: EnergyVector::new(re_lo, rg_lo),
            r_hi: EnergyVector::new(re_hi, rg_hi),
            s_lo: EnergyVector::new(se_lo, sg_lo),
            s_hi: EnergyVector::new(se_hi, sg_hi),
            d_lo: EnergyVector::new(image[0] - slack_e, image[1] - slack_g),
            d_hi: EnergyVector::new(image[0] + slack_e, image[1] + slack_g),
            cost_e: QuadraticCoeffs::new(quad(ranges.cost_quad), quad(ranges.cost_lin), 0.0),
            cost_g: QuadraticCoeffs::new(quad(ranges.cost_quad), quad(ranges.cost_lin), 0.0),
            util_e: QuadraticCoeffs::new(quad(ranges.util_quad), quad(ranges.util_lin), 0.0),
            util_g: QuadraticCoeffs::new(quad(ranges.util_quad), quad(ranges.util_lin), 0.0),
            taguchi_theta: 0.0,
            d_hat: None,
            welfare_constant: 0.0,
        };
        hub.validate()?;
        hubs.push(hub);
    }

    Ok(CaseStudy {
        topology,
        hubs,
        zeta: TradePrice::new(1.1, 0.6).expect("constant settlement price is valid"),
        defaults: RunConfig::default(),
    })
}
