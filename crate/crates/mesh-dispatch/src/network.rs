//! Communication graph and doubly stochastic mixing weights.
//!
//! Hubs exchange trackers and multipliers only with graph neighbors. The
//! mixing matrix `W` must be symmetric and doubly stochastic with the
//! sparsity of the graph; those conditions make neighbor averaging preserve
//! sums (the conservation identity the round engine relies on) and, when
//! the spectral radius of `W` minus the averaging projector is below one,
//! drive all nodes to consensus.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::hub::EnergyVector;

/// Iteration cap for the spectral-radius power iteration.
const POWER_ITERATION_CAP: usize = 200_000;
/// Relative tolerance at which the power iteration's eigenvalue estimate is
/// considered converged.
const POWER_ITERATION_RTOL: f64 = 1e-10;

/// An undirected communication graph over hubs `1..=n`, stored as a
/// deduplicated edge list. Construction requires connectivity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from 1-based node pairs. Rejects self-loops,
    /// duplicate edges, out-of-range ids, and disconnected graphs
    /// (a single node with no edges is the one connected edgeless case).
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, Error> {
        if n == 0 {
            return Err(Error::topology("node count must be at least 1"));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::topology(format!("self-loop at node {a}")));
            }
            if a < 1 || a > n || b < 1 || b > n {
                return Err(Error::topology(format!(
                    "edge ({a}, {b}) references a node outside 1..={n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::topology("duplicate edge"));
        }

        let t = Topology {
            n,
            edges: normalized,
        };
        if !t.is_connected() {
            return Err(Error::topology("graph is not connected"));
        }
        Ok(t)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Normalized (low, high), 1-based, sorted edge list.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Node degrees, indexed 0-based.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(a, b) in &self.edges {
            deg[a - 1] += 1;
            deg[b - 1] += 1;
        }
        deg
    }

    fn is_connected(&self) -> bool {
        let mut adjacency = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adjacency[a - 1].push(b - 1);
            adjacency[b - 1].push(a - 1);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// A symmetric doubly stochastic mixing matrix. The type guarantees the
/// stochasticity conditions at construction; matching a particular graph's
/// sparsity is checked separately by [`validate_weights`] so that matrices
/// can also be built directly for diagnostics (e.g. deliberately
/// disconnected blocks for certificate tests).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    /// Wraps a raw matrix, checking squareness, entry range, symmetry, and
    /// row/column sums (tolerance 1e-9).
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, Error> {
        const TOL: f64 = 1e-9;
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(Error::model(format!(
                "weight matrix must be square and nonempty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let n = w.nrows();
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let v = w[(i, j)];
                if !(-TOL..=1.0 + TOL).contains(&v) {
                    return Err(Error::model(format!(
                        "weight w[{i}][{j}] = {v} outside [0, 1]"
                    )));
                }
                if (v - w[(j, i)]).abs() > TOL {
                    return Err(Error::model(format!(
                        "weight matrix not symmetric at ({i}, {j})"
                    )));
                }
                row_sum += v;
            }
            if (row_sum - 1.0).abs() > TOL {
                return Err(Error::model(format!(
                    "row {i} sums to {row_sum}, expected 1"
                )));
            }
        }
        Ok(WeightMatrix { w })
    }

    pub fn size(&self) -> usize {
        self.w.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// Metropolis weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, the
/// self-weight absorbing the remainder. Satisfies all stochasticity
/// conditions from local degree information alone.
pub fn metropolis_weights(t: &Topology) -> Result<WeightMatrix, Error> {
    let n = t.node_count();
    let deg = t.degrees();
    let mut w = DMatrix::zeros(n, n);
    for &(a, b) in t.edges() {
        let (i, j) = (a - 1, b - 1);
        let weight = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::from_matrix(w)
}

/// Checks that `w` is a valid mixing matrix *for the given graph*:
/// symmetric, doubly stochastic (sums within `tol` of 1), entries in
/// `[0, 1]`, and zero off-diagonal entries wherever the graph has no edge.
pub fn validate_weights(w: &WeightMatrix, t: &Topology, tol: f64) -> bool {
    let n = w.size();
    if n != t.node_count() {
        return false;
    }
    let mut has_edge = vec![false; n * n];
    for &(a, b) in t.edges() {
        has_edge[(a - 1) * n + (b - 1)] = true;
        has_edge[(b - 1) * n + (a - 1)] = true;
    }
    for i in 0..n {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..n {
            let v = w.entry(i, j);
            if !(-tol..=1.0 + tol).contains(&v) {
                return false;
            }
            if (v - w.entry(j, i)).abs() > tol {
                return false;
            }
            if i != j && !has_edge[i * n + j] && v.abs() > tol {
                return false;
            }
            row += v;
            col += w.entry(j, i);
        }
        if (row - 1.0).abs() > tol || (col - 1.0).abs() > tol {
            return false;
        }
    }
    true
}

/// Spectral radius of `W - O_n` (the mixing matrix minus the all-`1/n`
/// averaging projector), the quantity that must be `< 1` for consensus.
///
/// Computed by power iteration on `(W - O_n)^2` — squaring makes the
/// iterate matrix positive semidefinite, so eigenvalue pairs `±lambda`
/// cannot stall the iteration — from a fixed seeded start vector.
pub fn spectral_gap(w: &WeightMatrix) -> Result<f64, Error> {
    let n = w.size();
    let avg = 1.0 / n as f64;
    let a = w.as_matrix() - DMatrix::from_element(n, n, avg);

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("degenerate power-iteration start".into()));
    }
    v /= norm;

    let mut lambda_sq_prev = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let av = &a * &v;
        let aav = &a * &av;
        let norm = aav.norm();
        if norm <= f64::MIN_POSITIVE {
            // (W - O)^2 annihilates the start vector: the non-averaging
            // spectrum is numerically zero (complete graphs, n = 1).
            return Ok(0.0);
        }
        // Rayleigh quotient of A^2 at the current unit iterate.
        let lambda_sq = v.dot(&aav);
        v = aav / norm;
        if (lambda_sq - lambda_sq_prev).abs() <= POWER_ITERATION_RTOL * lambda_sq.abs().max(1e-300)
        {
            return Ok(lambda_sq.max(0.0).sqrt());
        }
        lambda_sq_prev = lambda_sq;
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not settle within {POWER_ITERATION_CAP} iterations"
    )))
}

/// Weighted neighborhood average `sum_j w_ij * values[j]` for the 0-based
/// node index `i`, accumulated in ascending node order so repeated runs
/// produce bit-identical floating-point results.
pub fn neighbor_sum(
    w: &WeightMatrix,
    i: usize,
    values: &[EnergyVector],
) -> Result<EnergyVector, Error> {
    if values.len() != w.size() {
        return Err(Error::model(format!(
            "neighbor_sum: {} values for a {}-node weight matrix",
            values.len(),
            w.size()
        )));
    }
    if i >= w.size() {
        return Err(Error::model(format!(
            "neighbor_sum: node index {i} out of range"
        )));
    }
    let mut acc = EnergyVector::ZERO;
    for (j, value) in values.iter().enumerate() {
        acc += *value * w.entry(i, j);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> Topology {
        Topology::new(3, &[(1, 2), (1, 3), (2, 3)]).unwrap()
    }

    fn path3() -> Topology {
        Topology::new(3, &[(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn topology_validation() {
        assert!(Topology::new(1, &[]).is_ok());
        assert!(Topology::new(2, &[]).is_err()); // disconnected
        assert!(Topology::new(2, &[(1, 1)]).is_err()); // self-loop
        assert!(Topology::new(2, &[(1, 2), (2, 1)]).is_err()); // duplicate
        assert!(Topology::new(2, &[(1, 3)]).is_err()); // out of range
        assert!(Topology::new(4, &[(1, 2), (3, 4)]).is_err()); // two components
    }

    #[test]
    fn metropolis_on_small_graphs() {
        // Complete triangle: every degree is 2, all entries 1/3.
        let w = metropolis_weights(&k3()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.entry(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }

        // Single edge: [[1/2, 1/2], [1/2, 1/2]].
        let pair = Topology::new(2, &[(1, 2)]).unwrap();
        let w2 = metropolis_weights(&pair).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((w2.entry(i, j) - 0.5).abs() < 1e-15);
            }
        }

        // Single node.
        let solo = Topology::new(1, &[]).unwrap();
        let w1 = metropolis_weights(&solo).unwrap();
        assert_eq!(w1.entry(0, 0), 1.0);
    }

    #[test]
    fn metropolis_passes_validation_tightly() {
        for t in [k3(), path3()] {
            let w = metropolis_weights(&t).unwrap();
            assert!(validate_weights(&w, &t, 1e-12));
        }
    }

    #[test]
    fn validate_rejects_non_doubly_stochastic_and_wrong_sparsity() {
        // Row-stochastic only (asymmetric).
        let m = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.5, 0.5]);
        assert!(WeightMatrix::from_matrix(m).is_err());

        // Identity is doubly stochastic; it validates even though mixing is
        // degenerate (that is spectral_gap's job to flag).
        let eye = WeightMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert!(validate_weights(&eye, &path3(), 1e-12));
        assert!(spectral_gap(&eye).unwrap() > 1.0 - 1e-9);

        // Weight on a non-edge: K3 Metropolis weights against the path.
        let w = metropolis_weights(&k3()).unwrap();
        assert!(!validate_weights(&w, &path3(), 1e-12));
    }

    #[test]
    fn spectral_gap_known_values() {
        // K3 and K2 Metropolis equal the averaging projector up to rounding.
        assert!(spectral_gap(&metropolis_weights(&k3()).unwrap()).unwrap() < 1e-12);
        let pair = Topology::new(2, &[(1, 2)]).unwrap();
        assert!(spectral_gap(&metropolis_weights(&pair).unwrap()).unwrap() < 1e-12);

        // Path on 3 nodes: W - O has eigenvalues {0, 1/3, 2/3}... computed
        // analytically: W = [[2/3,1/3,0],[1/3,1/3,1/3],[0,1/3,2/3]], whose
        // spectrum is {1, 2/3, 0}; removing the averaging eigenvalue leaves
        // radius 2/3.
        let gap = spectral_gap(&metropolis_weights(&path3()).unwrap()).unwrap();
        assert!((gap - 2.0 / 3.0).abs() < 1e-9);

        // Any connected Metropolis graph stays strictly below 1.
        let ring5 = Topology::new(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (1, 5)]).unwrap();
        let g5 = spectral_gap(&metropolis_weights(&ring5).unwrap()).unwrap();
        assert!(g5 > 0.0 && g5 < 1.0);
    }

    #[test]
    fn neighbor_sum_examples() {
        let pair = Topology::new(2, &[(1, 2)]).unwrap();
        let w = metropolis_weights(&pair).unwrap();
        let values = [EnergyVector::new(2.0, 0.0), EnergyVector::new(0.0, 2.0)];
        let mixed = neighbor_sum(&w, 0, &values).unwrap();
        assert!((mixed - EnergyVector::new(1.0, 1.0)).norm() < 1e-15);

        // Row-stochastic fixed point: identical values are preserved.
        let w3 = metropolis_weights(&k3()).unwrap();
        let same = [EnergyVector::new(1.5, -2.0); 3];
        let out = neighbor_sum(&w3, 1, &same).unwrap();
        assert!((out - EnergyVector::new(1.5, -2.0)).norm() < 1e-12);

        // Identity matrix returns the node's own value.
        let eye = WeightMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let vals = [
            EnergyVector::new(1.0, 2.0),
            EnergyVector::new(3.0, 4.0),
            EnergyVector::new(5.0, 6.0),
        ];
        assert_eq!(
            neighbor_sum(&eye, 2, &vals).unwrap(),
            EnergyVector::new(5.0, 6.0)
        );

        // Dimension mismatch.
        assert!(neighbor_sum(&w3, 0, &values).is_err());
    }

    #[test]
    fn neighbor_sums_preserve_totals() {
        // Double stochasticity: summing the mixed values over nodes equals
        // summing the originals.
        let t = Topology::new(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (2, 5)]).unwrap();
        let w = metropolis_weights(&t).unwrap();
        let values: Vec<EnergyVector> = (0..5)
            .map(|i| EnergyVector::new(i as f64 * 1.3 - 2.0, (i * i) as f64))
            .collect();
        let mut total_in = EnergyVector::ZERO;
        let mut total_out = EnergyVector::ZERO;
        for i in 0..5 {
            total_in += values[i];
            total_out += neighbor_sum(&w, i, &values).unwrap();
        }
        assert!((total_in - total_out).norm() < 1e-9);
    }
}
