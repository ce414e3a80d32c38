//! Orthonormal shifted Legendre basis on [0, 1] and the banded spectral
//! matrices built from it.
//!
//! The basis {P_j} satisfies ∫_0^1 P_i(c) P_j(c) dc = δ_ij with the sign
//! convention P_j(1) > 0. Evaluation runs the classical three-term
//! recurrence for the shifted family and normalizes by sqrt(2j+1).
//!
//! Integration acts on the coefficient vectors through the banded matrix
//! X built from ξ_i = 1 / (2 sqrt(|4i² − 1|)): the primitives satisfy
//! ∫_0^c P_j = ξ_{j+1} P_{j+1}(c) − ξ_j P_{j−1}(c) for j ≥ 1.

use crate::error::{Error, Result};

/// Band coefficient ξ_i = 1 / (2 sqrt(|4i² − 1|)).
pub fn xi(i: usize) -> f64 {
    let n = 4 * (i as i64) * (i as i64) - 1;
    1.0 / (2.0 * (n.unsigned_abs() as f64).sqrt())
}

/// Classical (unnormalized) Legendre values Q_0(y), ..., Q_n(y) on [-1, 1]
/// via the three-term recurrence (m+1) Q_{m+1} = (2m+1) y Q_m − m Q_{m−1}.
fn classical_through(n: usize, y: f64) -> Vec<f64> {
    let mut q = Vec::with_capacity(n + 1);
    q.push(1.0);
    if n == 0 {
        return q;
    }
    q.push(y);
    for m in 1..n {
        let next = ((2 * m + 1) as f64 * y * q[m] - m as f64 * q[m - 1]) / (m + 1) as f64;
        q.push(next);
    }
    q
}

/// Values P_0(c), ..., P_jmax(c) of the orthonormal shifted basis.
pub(crate) fn p_values(jmax: usize, c: f64) -> Vec<f64> {
    let q = classical_through(jmax, 2.0 * c - 1.0);
    q.iter()
        .enumerate()
        .map(|(j, &v)| ((2 * j + 1) as f64).sqrt() * v)
        .collect()
}

/// Primitives ∫_0^c P_0, ..., ∫_0^c P_jmax.
///
/// For j ≥ 1 the primitive is (Q_{j+1}(y) − Q_{j−1}(y)) / (2 sqrt(2j+1))
/// with y = 2c − 1, which equals ξ_{j+1} P_{j+1}(c) − ξ_j P_{j−1}(c) and
/// vanishes exactly at c = 0 and c = 1 (the recurrence is exact at y = ∓1).
pub(crate) fn i_values(jmax: usize, c: f64) -> Vec<f64> {
    let q = classical_through(jmax + 1, 2.0 * c - 1.0);
    let mut out = Vec::with_capacity(jmax + 1);
    out.push(c);
    for j in 1..=jmax {
        out.push((q[j + 1] - q[j - 1]) / (2.0 * ((2 * j + 1) as f64).sqrt()));
    }
    out
}

/// Evaluator of the orthonormal shifted Legendre polynomials up to a fixed
/// highest degree. Evaluations beyond `max_degree` are an error rather than
/// a silent extension, which catches runaway truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LegendreBasis {
    max_degree: usize,
}

impl Default for LegendreBasis {
    fn default() -> Self {
        Self { max_degree: 64 }
    }
}

impl LegendreBasis {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    fn check(&self, degree: usize) -> Result<()> {
        if degree > self.max_degree {
            Err(Error::DegreeOverflow {
                degree,
                max_degree: self.max_degree,
            })
        } else {
            Ok(())
        }
    }

    /// P_j(c).
    pub fn eval_p(&self, j: usize, c: f64) -> Result<f64> {
        self.check(j)?;
        Ok(p_values(j, c)[j])
    }

    /// ∫_0^c P_j(x) dx. Needs degree j+1 of the basis.
    pub fn eval_i(&self, j: usize, c: f64) -> Result<f64> {
        self.check(j + 1)?;
        Ok(i_values(j, c)[j])
    }
}

/// The banded spectral matrices of size s: the integration band X (s×s),
/// its extension X̂ ((s+1)×s), and the product X̂·X.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrices {
    pub s: usize,
    /// Tridiagonal band: X[0][0] = ξ_0, X[j][j−1] = ξ_j, X[j−1][j] = −ξ_j.
    pub x: Vec<Vec<f64>>,
    /// X stacked over the extra row (0, ..., 0, ξ_s).
    pub x_hat: Vec<Vec<f64>>,
    /// Exact matrix product X̂·X, (s+1)×s.
    pub x_hat_x: Vec<Vec<f64>>,
}

pub(crate) fn x_matrix(s: usize) -> Vec<Vec<f64>> {
    let mut x = vec![vec![0.0; s]; s];
    x[0][0] = xi(0);
    for j in 1..s {
        x[j][j - 1] = xi(j);
        x[j - 1][j] = -xi(j);
    }
    x
}

/// Builds the spectral matrices for truncation size s ≥ 1.
pub fn build_spectral(s: usize) -> SpectralMatrices {
    assert!(s >= 1, "spectral truncation requires s >= 1");
    let x = x_matrix(s);
    let mut x_hat = x.clone();
    let mut last = vec![0.0; s];
    last[s - 1] = xi(s);
    x_hat.push(last);

    let mut x_hat_x = vec![vec![0.0; s]; s + 1];
    for (i, row) in x_hat.iter().enumerate() {
        for j in 0..s {
            x_hat_x[i][j] = (0..s).map(|l| row[l] * x[l][j]).sum();
        }
    }
    SpectralMatrices {
        s,
        x,
        x_hat,
        x_hat_x,
    }
}

/// Truncated continuous coefficient a^(s)_{cτ} = Σ_{j<s} ∫_0^c P_j · P_j(τ),
/// summed left to right so that raising s appends exactly one term.
pub fn a_s(c: f64, tau: f64, s: usize) -> f64 {
    assert!(s >= 1, "a_s requires s >= 1");
    let iv = i_values(s - 1, c);
    let pv = p_values(s - 1, tau);
    let mut acc = 0.0;
    for j in 0..s {
        acc += iv[j] * pv[j];
    }
    acc
}

/// The ξ-telescoped closed form of a^(s)_{cτ}:
/// c + Σ_{j=1}^{s−1} [ξ_{j+1} P_{j+1}(c) − ξ_j P_{j−1}(c)] P_j(τ).
pub fn a_s_telescoped(c: f64, tau: f64, s: usize) -> f64 {
    assert!(s >= 1, "a_s requires s >= 1");
    let pc = p_values(s, c);
    let pt = p_values(s - 1, tau);
    let mut acc = c;
    for j in 1..s {
        acc += (xi(j + 1) * pc[j + 1] - xi(j) * pc[j - 1]) * pt[j];
    }
    acc
}

/// Truncated Nystrom coefficient ā^(s)_{cτ} = I_s(c)ᵀ X_s P_s(τ).
///
/// Only defined for s ≥ 2: with s = 1 the secondary weight function
/// degenerates to the constant 1 instead of 1 − c.
pub fn abar_s(c: f64, tau: f64, s: usize) -> Result<f64> {
    if s < 2 {
        return Err(Error::UnsupportedTruncation { s });
    }
    let iv = i_values(s - 1, c);
    let pt = p_values(s - 1, tau);
    let x = x_matrix(s);
    let mut acc = 0.0;
    for j in 0..s {
        let row: f64 = (0..s).map(|r| x[j][r] * pt[r]).sum();
        acc += iv[j] * row;
    }
    Ok(acc)
}

/// ā^(s)_{cτ} through the equivalent factorization P_{s+1}(c)ᵀ (X̂_s X_s) P_s(τ).
pub fn abar_s_spectral(c: f64, tau: f64, s: usize) -> Result<f64> {
    if s < 2 {
        return Err(Error::UnsupportedTruncation { s });
    }
    let sm = build_spectral(s);
    let pc = p_values(s, c);
    let pt = p_values(s - 1, tau);
    let mut acc = 0.0;
    for i in 0..=s {
        let row: f64 = (0..s).map(|j| sm.x_hat_x[i][j] * pt[j]).sum();
        acc += pc[i] * row;
    }
    Ok(acc)
}
