//! Gauss-Legendre quadrature on [0, 1].
//!
//! The k-point rule integrates polynomials up to degree 2k−1 exactly; it is
//! what turns the continuous-stage coefficient integrals into a concrete
//! k-stage method. Nodes are the roots of the degree-k shifted Legendre
//! polynomial, found by Newton iteration from Chebyshev initial guesses;
//! weights come from the standard derivative formula.

use crate::error::{Error, Result};

const MAX_NODES: usize = 64;
const NEWTON_MAX_ITER: usize = 100;

/// Nodes and weights of a quadrature rule on [0, 1].
///
/// Constructed either as a Gauss-Legendre rule via [`gauss_rule`] or from
/// externally supplied node/weight pairs via [`GaussLegendreRule::from_parts`],
/// so other sufficiently accurate rules can be injected without code changes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendreRule {
    /// Wraps user-supplied nodes and weights after basic validation:
    /// matching lengths, strictly increasing nodes inside (0, 1), and
    /// positive weights.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "rule needs matching non-empty nodes/weights, got {} nodes and {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        for pair in nodes.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidParameter(
                    "quadrature nodes must be strictly increasing".into(),
                ));
            }
        }
        if nodes[0] <= 0.0 || *nodes.last().unwrap() >= 1.0 {
            return Err(Error::InvalidParameter(
                "quadrature nodes must lie strictly inside (0, 1)".into(),
            ));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter(
                "quadrature weights must be positive".into(),
            ));
        }
        Ok(Self { nodes, weights })
    }

    /// Number of nodes.
    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Σ_i w_i g(c_i).
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * g(c))
            .sum()
    }
}

/// Classical Legendre value and derivative at y via the joint recurrence.
fn legendre_with_derivative(k: usize, y: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut curr = y;
    if k == 0 {
        return (1.0, 0.0);
    }
    for m in 1..k {
        let next = ((2 * m + 1) as f64 * y * curr - m as f64 * prev) / (m + 1) as f64;
        prev = curr;
        curr = next;
    }
    // P'_k(y) = k (y P_k − P_{k−1}) / (y² − 1), |y| < 1 at every Gauss node
    let deriv = k as f64 * (y * curr - prev) / (y * y - 1.0);
    (curr, deriv)
}

/// The k-point Gauss-Legendre rule on [0, 1], 1 ≤ k ≤ 64.
pub fn gauss_rule(k: usize) -> Result<GaussLegendreRule> {
    if !(1..=MAX_NODES).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "node count k = {k} outside the supported range 1..={MAX_NODES}"
        )));
    }
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];

    // Roots of P_k on [-1, 1] come in ± pairs; solve the positive half and
    // mirror so the symmetry invariants hold exactly.
    for i in 0..k.div_ceil(2) {
        // Chebyshev-based initial guess, largest root first.
        let mut y = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (val, d) = legendre_with_derivative(k, y);
            let delta = val / d;
            y -= delta;
            if delta.abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadratureNonConvergence { k });
        }
        // One polishing step at the converged point.
        let (val, d) = legendre_with_derivative(k, y);
        y -= val / d;
        let deriv = legendre_with_derivative(k, y).1;

        let w = 1.0 / ((1.0 - y * y) * deriv * deriv);
        let c_hi = (1.0 + y) / 2.0;
        nodes[k - 1 - i] = c_hi;
        weights[k - 1 - i] = w;
        nodes[i] = 1.0 - c_hi;
        weights[i] = w;
    }
    if k % 2 == 1 {
        // middle root is exactly zero by symmetry
        let (_, d) = legendre_with_derivative(k, 0.0);
        nodes[k / 2] = 0.5;
        weights[k / 2] = 1.0 / (d * d);
    }
    Ok(GaussLegendreRule { nodes, weights })
}
