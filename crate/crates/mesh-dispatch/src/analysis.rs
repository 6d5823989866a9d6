//! Run metrics, consensus diagnostics, and the numerical contraction
//! certificate for the tracker dynamics.
//!
//! The certificate examines the averaging matrix alone. With `W1` the
//! zero-row-sum part of the weights (lifted to act on per-node 2-vectors)
//! and `Wt = [[W1, W1], [0, W1]]` the one-round map of the stacked
//! disagreement state, it constructs the closed-form quadratic form
//!
//! ```text
//!   P = [[2 I, G - 2 I], [G - 2 I, G^2 - 2 G + 2 I]],   G = (I - W1)^-1
//! ```
//!
//! and verifies numerically that (a) `P` reproduces the state-output
//! identity `It' P (I - Wt) = H` used in the Lyapunov difference, (b) the
//! contraction form `P - Wt' P Wt` is positive definite, and (c) `P`
//! itself is positive definite. All three together with `Gamma(W1) < 1`
//! certify that tracker disagreement decays on this graph, regardless of
//! the hub data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::admm::{IterationRecord, NodeState};
use crate::error::Error;
use crate::hub::EnergyVector;
use crate::network::WeightMatrix;

/// Eigenvalue threshold below which a symmetric matrix is not accepted as
/// positive definite.
pub const DEFINITENESS_THRESHOLD: f64 = 1e-10;

/// Outcome of the graph-level contraction certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Spectral radius of the zero-row-sum part of the weights.
    pub gamma_w1: f64,
    /// Smallest eigenvalue of the certificate form `P`; absent when the
    /// premise `gamma_w1 < 1` already failed.
    pub p_min_eig: Option<f64>,
    /// Smallest eigenvalue of `P - Wt' P Wt`.
    pub contraction_min_eig: Option<f64>,
    /// Frobenius residual of the state-output identity `It' P (I - Wt) = H`.
    pub identity_residual: Option<f64>,
    pub verdict: bool,
}

/// Aggregate supply/demand mismatch `sum_i (r_i - M u_i)` per carrier.
pub fn mismatch(states: &[NodeState]) -> EnergyVector {
    let mut acc = EnergyVector::ZERO;
    for st in states {
        acc += st.r - st.u.supply();
    }
    acc
}

/// Euclidean error of `x_k` against a reference, relative when the
/// reference has positive norm; flagged absolute otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetric {
    pub value: f64,
    /// True when the reference was zero and `value` is the absolute norm.
    pub zero_reference: bool,
}

pub fn relative_error(x_k: &[f64], x_star: &[f64]) -> ErrorMetric {
    assert_eq!(x_k.len(), x_star.len(), "mismatched metric dimensions");
    let diff: f64 = x_k
        .iter()
        .zip(x_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let reference: f64 = x_star.iter().map(|b| b * b).sum::<f64>().sqrt();
    if reference > 0.0 {
        ErrorMetric {
            value: diff / reference,
            zero_reference: false,
        }
    } else {
        ErrorMetric {
            value: diff,
            zero_reference: true,
        }
    }
}

/// Signed relative gap `(F_k - F*) / F*`; callers guarantee `F* != 0`.
pub fn welfare_gap(f_k: f64, f_star: f64) -> f64 {
    (f_k - f_star) / f_star
}

/// `(max_i |mu_i - mean(mu)|, max_i |e_i - mean(e)|)` over the fleet.
pub fn consensus_spread(states: &[NodeState]) -> (f64, f64) {
    let n = states.len().max(1) as f64;
    let mut mu_mean = EnergyVector::ZERO;
    let mut e_mean = EnergyVector::ZERO;
    for st in states {
        mu_mean += st.mu;
        e_mean += st.e;
    }
    mu_mean = mu_mean * (1.0 / n);
    e_mean = e_mean * (1.0 / n);
    let mut mu_spread = 0.0f64;
    let mut e_spread = 0.0f64;
    for st in states {
        mu_spread = mu_spread.max((st.mu - mu_mean).norm());
        e_spread = e_spread.max((st.e - e_mean).norm());
    }
    (mu_spread, e_spread)
}

/// Fraction of rounds (after `skip` transient rounds) in which the
/// Lyapunov surrogate `|mean(mu) - mu_star|^2 + sum_i |e_i - mean(e)|^2`
/// did not increase. The surrogate needs the centralized price, so this is
/// a diagnostic against the oracle, not something nodes can evaluate.
pub fn descent_fraction(records: &[IterationRecord], mu_star: &EnergyVector, skip: usize) -> f64 {
    let values: Vec<f64> = records
        .iter()
        .skip(skip)
        .map(|rec| {
            let drift = rec.mu_mean - *mu_star;
            drift.dot(&drift) + rec.e_energy
        })
        .collect();
    if values.len() < 2 {
        return 1.0;
    }
    let good = values
        .windows(2)
        .filter(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12)
        .count();
    good as f64 / (values.len() - 1) as f64
}

/// Spectral radius of `W - averaging projector` via symmetric
/// eigendecomposition.
fn disagreement_radius(w: &WeightMatrix) -> f64 {
    let n = w.size();
    let mut base = w.as_matrix().clone();
    for i in 0..n {
        for j in 0..n {
            base[(i, j)] -= 1.0 / n as f64;
        }
    }
    let sym = (&base + base.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Kronecker lift of an `n x n` matrix to act on stacked per-node
/// 2-vectors.
fn lift_per_carrier(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(2 * i, 2 * j)] = a[(i, j)];
            out[(2 * i + 1, 2 * j + 1)] = a[(i, j)];
        }
    }
    out
}

/// Builds `(P, Wt)` for the certificate, or `None` when the premise
/// `Gamma(W1) < 1` fails (the construction needs `I - W1` invertible).
pub(crate) fn certificate_matrices(
    w: &WeightMatrix,
) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>, Error> {
    let gamma = disagreement_radius(w);
    if gamma >= 1.0 - 1e-9 {
        return Ok(None);
    }
    let n = w.size();
    let mut base = w.as_matrix().clone();
    for i in 0..n {
        for j in 0..n {
            base[(i, j)] -= 1.0 / n as f64;
        }
    }
    let w1 = lift_per_carrier(&base);
    let dim = 2 * n;
    let eye = DMatrix::<f64>::identity(dim, dim);
    let g = (&eye - &w1).try_inverse().ok_or_else(|| {
        Error::Numerical(format!(
            "certificate construction failed: I - W1 numerically singular at gamma = {gamma}"
        ))
    })?;

    let tl = &eye * 2.0;
    let off = &g - &eye * 2.0;
    let br = &g * &g - &g * 2.0 + &eye * 2.0;
    let mut p = DMatrix::zeros(2 * dim, 2 * dim);
    p.view_mut((0, 0), (dim, dim)).copy_from(&tl);
    p.view_mut((0, dim), (dim, dim)).copy_from(&off);
    p.view_mut((dim, 0), (dim, dim)).copy_from(&off);
    p.view_mut((dim, dim), (dim, dim)).copy_from(&br);

    let mut wt = DMatrix::zeros(2 * dim, 2 * dim);
    wt.view_mut((0, 0), (dim, dim)).copy_from(&w1);
    wt.view_mut((0, dim), (dim, dim)).copy_from(&w1);
    wt.view_mut((dim, dim), (dim, dim)).copy_from(&w1);
    Ok(Some((p, wt)))
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, l| acc.min(*l))
}

/// Runs the full graph-level contraction certificate.
pub fn lyapunov_certificate(w: &WeightMatrix, tol: f64) -> Result<CertificateReport, Error> {
    let gamma = disagreement_radius(w);
    let Some((p, wt)) = certificate_matrices(w)? else {
        return Ok(CertificateReport {
            gamma_w1: gamma,
            p_min_eig: None,
            contraction_min_eig: None,
            identity_residual: None,
            verdict: false,
        });
    };

    let dim = p.nrows(); // 4n
    let half = dim / 2;
    // It stacks two identities; H picks the first block row. The identity
    // It' P (I - Wt) = H ties P to the linear output map of the stacked
    // disagreement dynamics.
    let full_eye = DMatrix::<f64>::identity(dim, dim);
    let lhs_full = p.clone() * (&full_eye - &wt);
    let mut residual_sq = 0.0;
    for col in 0..dim {
        for row in 0..half {
            // (It' A)[row, col] = A[row, col] + A[row + half, col].
            let value = lhs_full[(row, col)] + lhs_full[(row + half, col)];
            let target = if row == col { 1.0 } else { 0.0 };
            residual_sq += (value - target) * (value - target);
        }
    }
    let identity_residual = residual_sq.sqrt();

    let contraction = &p - wt.transpose() * &p * &wt;
    let p_min = min_eigenvalue(&p);
    let s_min = min_eigenvalue(&contraction);

    let verdict = gamma < 1.0
        && p_min > DEFINITENESS_THRESHOLD
        && s_min > DEFINITENESS_THRESHOLD
        && identity_residual <= tol;
    Ok(CertificateReport {
        gamma_w1: gamma,
        p_min_eig: Some(p_min),
        contraction_min_eig: Some(s_min),
        identity_residual: Some(identity_residual),
        verdict,
    })
}
