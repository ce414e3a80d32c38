//! Discrete Butcher tableaus of the HBVM(k,s) family.
//!
//! A k-point Gauss-Legendre rule (c, b) turns the continuous coefficient
//! functions into k-stage methods:
//!
//! - first order:  A = I_s P_sᵀ Ω,  entries a_ij = a^(s)_{c_i c_j} b_j
//! - second order: Ā = I_s X_s P_sᵀ Ω with secondary weights b̄ = b ∘ (1 − c)
//! - low-rank symplectic variant: A = P_s X_s P_sᵀ Ω
//!
//! with Ω = diag(b), I_s and P_r the primitive/value matrices at the nodes.
//! For k = s the first-order tableau is the s-stage Gauss collocation
//! method, which [`gauss_collocation`] also constructs independently through
//! Lagrange interpolation as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{i_values, p_values, x_matrix};
use crate::quadrature::{gauss_rule, GaussLegendreRule};

/// Which first-order coefficient matrix a tableau carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkFamily {
    /// A = I_s P_sᵀ Ω; the HBVM(k,s) method proper.
    Hbvm,
    /// A = P_s X_s P_sᵀ Ω; constructed for export and inspection only, the
    /// row-sum identity A·1 = c does not hold for this family.
    LowRankSymplectic,
}

/// Discrete first-order tableau (c, b, A).
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableauRk {
    pub family: RkFamily,
    pub k: usize,
    pub s: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

/// Discrete second-order tableau (c, b̄, b, Ā) for q̈ = f(q).
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableauRkn {
    pub k: usize,
    pub s: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub a_bar: Vec<Vec<f64>>,
}

/// The node-sampled matrices entering every tableau product: the weight
/// diagonal Ω (stored as its diagonal), the primitive matrix I_s (k×s) and
/// the value matrix P_r (k×r, r = s or s+1).
#[derive(Debug, Clone, PartialEq)]
pub struct TableauMatrices {
    pub omega: Vec<f64>,
    pub i_mat: Vec<Vec<f64>>,
    pub p_mat: Vec<Vec<f64>>,
}

impl TableauMatrices {
    pub fn new(rule: &GaussLegendreRule, s: usize, r: usize) -> Self {
        let i_mat = rule.nodes().iter().map(|&c| i_values(s - 1, c)).collect();
        let p_mat = rule.nodes().iter().map(|&c| p_values(r - 1, c)).collect();
        TableauMatrices {
            omega: rule.weights().to_vec(),
            i_mat,
            p_mat,
        }
    }
}

fn check_k_s(k: usize, s: usize) -> Result<()> {
    if s < 1 {
        return Err(Error::InvalidParameter("s must be at least 1".into()));
    }
    if k < s {
        return Err(Error::InvalidParameter(format!(
            "k >= s required, got k = {k} < s = {s}"
        )));
    }
    Ok(())
}

/// HBVM(k,s) tableau: A = I_s P_sᵀ Ω over the k-point Gauss rule.
pub fn build_rk(k: usize, s: usize) -> Result<ButcherTableauRk> {
    check_k_s(k, s)?;
    let rule = gauss_rule(k)?;
    let m = TableauMatrices::new(&rule, s, s);
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let kernel: f64 = (0..s).map(|r| m.i_mat[i][r] * m.p_mat[j][r]).sum();
            a[i][j] = kernel * m.omega[j];
        }
    }
    Ok(ButcherTableauRk {
        family: RkFamily::Hbvm,
        k,
        s,
        c: rule.nodes().to_vec(),
        b: rule.weights().to_vec(),
        a,
    })
}

/// HBVM(k,s) Nystrom tableau: Ā = I_s X_s P_sᵀ Ω, b̄ = b ∘ (1 − c).
pub fn build_rkn(k: usize, s: usize) -> Result<ButcherTableauRkn> {
    if s < 2 {
        return Err(Error::UnsupportedTruncation { s });
    }
    check_k_s(k, s)?;
    let rule = gauss_rule(k)?;
    let m = TableauMatrices::new(&rule, s, s);
    let x = x_matrix(s);
    // rows of I_s X_s at the nodes
    let ix: Vec<Vec<f64>> = m
        .i_mat
        .iter()
        .map(|row| {
            (0..s)
                .map(|j| (0..s).map(|r| row[r] * x[r][j]).sum())
                .collect()
        })
        .collect();
    let mut a_bar = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let kernel: f64 = (0..s).map(|r| ix[i][r] * m.p_mat[j][r]).sum();
            a_bar[i][j] = kernel * m.omega[j];
        }
    }
    let c = rule.nodes().to_vec();
    let b = rule.weights().to_vec();
    let b_bar = b.iter().zip(&c).map(|(&bi, &ci)| bi * (1.0 - ci)).collect();
    Ok(ButcherTableauRkn {
        k,
        s,
        c,
        b,
        b_bar,
        a_bar,
    })
}

/// Low-rank symplectic variant: A = P_s X_s P_sᵀ Ω with the k-rule's (c, b).
pub fn build_lowrank_symplectic(k: usize, s: usize) -> Result<ButcherTableauRk> {
    check_k_s(k, s)?;
    let rule = gauss_rule(k)?;
    let m = TableauMatrices::new(&rule, s, s);
    let x = x_matrix(s);
    let px: Vec<Vec<f64>> = m
        .p_mat
        .iter()
        .map(|row| {
            (0..s)
                .map(|j| (0..s).map(|r| row[r] * x[r][j]).sum())
                .collect()
        })
        .collect();
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let kernel: f64 = (0..s).map(|r| px[i][r] * m.p_mat[j][r]).sum();
            a[i][j] = kernel * m.omega[j];
        }
    }
    Ok(ButcherTableauRk {
        family: RkFamily::LowRankSymplectic,
        k,
        s,
        c: rule.nodes().to_vec(),
        b: rule.weights().to_vec(),
        a,
    })
}

/// The s-stage Gauss collocation tableau built the classical way:
/// A[i][j] = ∫_0^{c_i} ℓ_j(τ) dτ with ℓ_j the Lagrange cardinal polynomials
/// on the Gauss nodes. Deliberately avoids the Legendre factorization so it
/// can serve as an independent oracle for `build_rk(s, s)`.
pub fn gauss_collocation(s: usize) -> Result<ButcherTableauRk> {
    if !(1..=10).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "collocation construction supports 1 <= s <= 10, got {s}"
        )));
    }
    let rule = gauss_rule(s)?;
    let c = rule.nodes().to_vec();
    let mut a = vec![vec![0.0; s]; s];
    for j in 0..s {
        // monomial coefficients of ℓ_j by multiplying out the linear factors
        let mut coeffs = vec![1.0];
        for (r, &cr) in c.iter().enumerate() {
            if r == j {
                continue;
            }
            let scale = 1.0 / (c[j] - cr);
            let mut next = vec![0.0; coeffs.len() + 1];
            for (m, &am) in coeffs.iter().enumerate() {
                next[m + 1] += am * scale;
                next[m] -= cr * am * scale;
            }
            coeffs = next;
        }
        for i in 0..s {
            a[i][j] = coeffs
                .iter()
                .enumerate()
                .map(|(m, &am)| am * c[i].powi(m as i32 + 1) / (m as f64 + 1.0))
                .sum();
        }
    }
    Ok(ButcherTableauRk {
        family: RkFamily::Hbvm,
        k: s,
        s,
        c,
        b: rule.weights().to_vec(),
        a,
    })
}

/// Either tableau kind, for uniform serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Tableau {
    Rk(ButcherTableauRk),
    Rkn(ButcherTableauRkn),
}

/// Serialization formats for tableaus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

const FAMILY_RK: &str = "hbvm-rk";
const FAMILY_RKN: &str = "hbvm-rkn";
const FAMILY_LOWRANK: &str = "lowrank-symplectic";

fn family_name(t: &Tableau) -> &'static str {
    match t {
        Tableau::Rk(t) => match t.family {
            RkFamily::Hbvm => FAMILY_RK,
            RkFamily::LowRankSymplectic => FAMILY_LOWRANK,
        },
        Tableau::Rkn(_) => FAMILY_RKN,
    }
}

#[derive(Serialize, Deserialize)]
struct TableauJson {
    family: String,
    k: usize,
    s: usize,
    c: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b_bar: Option<Vec<f64>>,
    #[serde(rename = "A_bar", skip_serializing_if = "Option::is_none")]
    a_bar: Option<Vec<Vec<f64>>>,
}

/// Serializes a tableau. Floats are written as shortest round-trip decimal
/// strings in both formats, so import reproduces every bit.
pub fn export_tableau(t: &Tableau, format: ExportFormat) -> Result<Vec<u8>> {
    match format {
        ExportFormat::Json => {
            let doc = match t {
                Tableau::Rk(rk) => TableauJson {
                    family: family_name(t).to_string(),
                    k: rk.k,
                    s: rk.s,
                    c: rk.c.clone(),
                    b: rk.b.clone(),
                    a: Some(rk.a.clone()),
                    b_bar: None,
                    a_bar: None,
                },
                Tableau::Rkn(rkn) => TableauJson {
                    family: family_name(t).to_string(),
                    k: rkn.k,
                    s: rkn.s,
                    c: rkn.c.clone(),
                    b: rkn.b.clone(),
                    a: None,
                    b_bar: Some(rkn.b_bar.clone()),
                    a_bar: Some(rkn.a_bar.clone()),
                },
            };
            let mut bytes = serde_json::to_vec_pretty(&doc)
                .map_err(|e| Error::MalformedTableau(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ExportFormat::Csv => {
            let mut out = String::new();
            out.push_str(&format!("family,{}\n", family_name(t)));
            let (k, s) = match t {
                Tableau::Rk(t) => (t.k, t.s),
                Tableau::Rkn(t) => (t.k, t.s),
            };
            out.push_str(&format!("k,{k}\ns,{s}\n"));
            let vector = |name: &str, v: &[f64], out: &mut String| {
                out.push_str(&format!("vector,{name}\ni,value\n"));
                let mut buf = ryu::Buffer::new();
                for (i, &x) in v.iter().enumerate() {
                    out.push_str(&format!("{i},{}\n", buf.format(x)));
                }
            };
            let matrix = |name: &str, m: &[Vec<f64>], out: &mut String| {
                out.push_str(&format!("matrix,{name}\ni,j,value\n"));
                let mut buf = ryu::Buffer::new();
                for (i, row) in m.iter().enumerate() {
                    for (j, &x) in row.iter().enumerate() {
                        out.push_str(&format!("{i},{j},{}\n", buf.format(x)));
                    }
                }
            };
            match t {
                Tableau::Rk(rk) => {
                    vector("c", &rk.c, &mut out);
                    vector("b", &rk.b, &mut out);
                    matrix("A", &rk.a, &mut out);
                }
                Tableau::Rkn(rkn) => {
                    vector("c", &rkn.c, &mut out);
                    vector("b", &rkn.b, &mut out);
                    vector("b_bar", &rkn.b_bar, &mut out);
                    matrix("A_bar", &rkn.a_bar, &mut out);
                }
            }
            Ok(out.into_bytes())
        }
    }
}

/// Parses bytes produced by [`export_tableau`] back into a tableau.
pub fn import_tableau(bytes: &[u8], format: ExportFormat) -> Result<Tableau> {
    match format {
        ExportFormat::Json => {
            let doc: TableauJson = serde_json::from_slice(bytes)
                .map_err(|e| Error::MalformedTableau(e.to_string()))?;
            from_parts(
                &doc.family,
                doc.k,
                doc.s,
                doc.c,
                doc.b,
                doc.a,
                doc.b_bar,
                doc.a_bar,
            )
        }
        ExportFormat::Csv => import_csv(bytes),
    }
}

#[allow(clippy::too_many_arguments)]
fn from_parts(
    family: &str,
    k: usize,
    s: usize,
    c: Vec<f64>,
    b: Vec<f64>,
    a: Option<Vec<Vec<f64>>>,
    b_bar: Option<Vec<f64>>,
    a_bar: Option<Vec<Vec<f64>>>,
) -> Result<Tableau> {
    let expect_square = |m: &Vec<Vec<f64>>, name: &str| -> Result<()> {
        if m.len() != k || m.iter().any(|row| row.len() != k) {
            return Err(Error::MalformedTableau(format!("{name} is not {k}x{k}")));
        }
        Ok(())
    };
    if c.len() != k || b.len() != k {
        return Err(Error::MalformedTableau(format!(
            "c and b must have length k = {k}"
        )));
    }
    match family {
        FAMILY_RK | FAMILY_LOWRANK => {
            let a = a.ok_or_else(|| Error::MalformedTableau("missing matrix A".into()))?;
            expect_square(&a, "A")?;
            Ok(Tableau::Rk(ButcherTableauRk {
                family: if family == FAMILY_RK {
                    RkFamily::Hbvm
                } else {
                    RkFamily::LowRankSymplectic
                },
                k,
                s,
                c,
                b,
                a,
            }))
        }
        FAMILY_RKN => {
            let a_bar =
                a_bar.ok_or_else(|| Error::MalformedTableau("missing matrix A_bar".into()))?;
            let b_bar =
                b_bar.ok_or_else(|| Error::MalformedTableau("missing vector b_bar".into()))?;
            expect_square(&a_bar, "A_bar")?;
            if b_bar.len() != k {
                return Err(Error::MalformedTableau("b_bar must have length k".into()));
            }
            Ok(Tableau::Rkn(ButcherTableauRkn {
                k,
                s,
                c,
                b,
                b_bar,
                a_bar,
            }))
        }
        other => Err(Error::MalformedTableau(format!("unknown family {other:?}"))),
    }
}

fn import_csv(bytes: &[u8]) -> Result<Tableau> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::MalformedTableau("csv data is not valid UTF-8".into()))?;
    let bad = |msg: &str| Error::MalformedTableau(msg.to_string());

    let mut family = None;
    let mut k = None;
    let mut s = None;
    let mut vectors: Vec<(String, Vec<f64>)> = Vec::new();
    type MatrixEntries = Vec<(usize, usize, f64)>;
    let mut matrices: Vec<(String, MatrixEntries)> = Vec::new();
    enum Section {
        None,
        Vector(usize),
        Matrix(usize),
    }
    let mut section = Section::None;

    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "family" => family = Some(fields.get(1).ok_or_else(|| bad("family"))?.to_string()),
            "k" => k = Some(fields[1].parse().map_err(|_| bad("k"))?),
            "s" => s = Some(fields[1].parse().map_err(|_| bad("s"))?),
            "vector" => {
                vectors.push((fields[1].to_string(), Vec::new()));
                section = Section::Vector(vectors.len() - 1);
            }
            "matrix" => {
                matrices.push((fields[1].to_string(), Vec::new()));
                section = Section::Matrix(matrices.len() - 1);
            }
            "i" => {} // header rows
            _ => match section {
                Section::Vector(idx) => {
                    let value: f64 = fields
                        .get(1)
                        .ok_or_else(|| bad("vector row"))?
                        .parse()
                        .map_err(|_| bad("vector value"))?;
                    vectors[idx].1.push(value);
                }
                Section::Matrix(idx) => {
                    if fields.len() != 3 {
                        return Err(bad("matrix row"));
                    }
                    let i = fields[0].parse().map_err(|_| bad("matrix i"))?;
                    let j = fields[1].parse().map_err(|_| bad("matrix j"))?;
                    let v = fields[2].parse().map_err(|_| bad("matrix value"))?;
                    matrices[idx].1.push((i, j, v));
                }
                Section::None => return Err(bad("row outside any section")),
            },
        }
    }

    let family = family.ok_or_else(|| bad("missing family"))?;
    let k: usize = k.ok_or_else(|| bad("missing k"))?;
    let s: usize = s.ok_or_else(|| bad("missing s"))?;
    let take_vec = |name: &str| -> Result<Vec<f64>> {
        vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| bad(&format!("missing vector {name}")))
    };
    let take_mat = |name: &str| -> Result<Vec<Vec<f64>>> {
        let entries = matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| bad(&format!("missing matrix {name}")))?;
        let mut m = vec![vec![0.0; k]; k];
        for (i, j, v) in entries {
            if i >= k || j >= k {
                return Err(bad(&format!("matrix {name} index out of range")));
            }
            m[i][j] = v;
        }
        Ok(m)
    };

    let c = take_vec("c")?;
    let b = take_vec("b")?;
    if family == FAMILY_RKN {
        from_parts(
            &family,
            k,
            s,
            c,
            b,
            None,
            Some(take_vec("b_bar")?),
            Some(take_mat("A_bar")?),
        )
    } else {
        from_parts(&family, k, s, c, b, Some(take_mat("A")?), None, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{a_s, abar_s};

    const SQRT_3: f64 = 1.7320508075688772;

    #[test]
    fn rk_one_one_is_implicit_midpoint() {
        let t = build_rk(1, 1).unwrap();
        assert_eq!(t.c, vec![0.5]);
        assert_eq!(t.b, vec![1.0]);
        assert!((t.a[0][0] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn rk_two_two_is_gauss_collocation_matrix() {
        let t = build_rk(2, 2).unwrap();
        let expected = [[0.25, 0.25 - SQRT_3 / 6.0], [0.25 + SQRT_3 / 6.0, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (t.a[i][j] - expected[i][j]).abs() < 1e-15,
                    "({i},{j}): {} vs {}",
                    t.a[i][j],
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn rk_three_one_is_rank_one() {
        let t = build_rk(3, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.a[i][j] - t.c[i] * t.b[j]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn rk_entries_match_kernel_times_weight() {
        for s in 1..=5usize {
            for k in s..=8usize {
                let t = build_rk(k, s).unwrap();
                for i in 0..k {
                    for j in 0..k {
                        let expected = a_s(t.c[i], t.c[j], s) * t.b[j];
                        assert!(
                            (t.a[i][j] - expected).abs() <= 1e-13,
                            "k={k} s={s} ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hatted_factorization_reproduces_both_families() {
        // A = P_{s+1} X̂_s P_sᵀ Ω and Ā = P_{s+1} (X̂_s X_s) P_sᵀ Ω
        use crate::legendre::build_spectral;
        for s in 1..=4usize {
            for k in s.max(2)..=6usize {
                let rule = gauss_rule(k).unwrap();
                let m = TableauMatrices::new(&rule, s, s + 1);
                let sm = build_spectral(s);
                let rk = build_rk(k, s).unwrap();
                let rkn = (s >= 2).then(|| build_rkn(k, s).unwrap());
                for i in 0..k {
                    for j in 0..k {
                        let mut a = 0.0;
                        let mut a_bar = 0.0;
                        for r in 0..s {
                            let mut hat = 0.0;
                            let mut hat_x = 0.0;
                            for l in 0..=s {
                                hat += m.p_mat[i][l] * sm.x_hat[l][r];
                                hat_x += m.p_mat[i][l] * sm.x_hat_x[l][r];
                            }
                            a += hat * m.p_mat[j][r];
                            a_bar += hat_x * m.p_mat[j][r];
                        }
                        a *= m.omega[j];
                        a_bar *= m.omega[j];
                        assert!((a - rk.a[i][j]).abs() <= 1e-13, "A k={k} s={s} ({i},{j})");
                        if let Some(rkn) = &rkn {
                            assert!(
                                (a_bar - rkn.a_bar[i][j]).abs() <= 1e-13,
                                "A_bar k={k} s={s} ({i},{j})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rk_row_sums_are_nodes() {
        for s in 1..=5usize {
            for k in s..=8usize {
                let t = build_rk(k, s).unwrap();
                for i in 0..k {
                    let sum: f64 = t.a[i].iter().sum();
                    assert!((sum - t.c[i]).abs() <= 1e-13, "k={k} s={s} row {i}");
                }
            }
        }
    }

    #[test]
    fn rkn_two_two_weights() {
        let t = build_rkn(2, 2).unwrap();
        assert!((t.b_bar[0] - 0.39433756729740643).abs() < 1e-15);
        assert!((t.b_bar[1] - 0.10566243270259354).abs() < 1e-15);
        let sums: Vec<f64> = t.a_bar.iter().map(|row| row.iter().sum()).collect();
        assert!((sums[0] - t.c[0] * t.c[0] / 2.0).abs() < 1e-15);
        assert!((sums[1] - t.c[1] * t.c[1] / 2.0).abs() < 1e-15);
        assert!((sums[0] - 0.02232909936926).abs() < 1e-11);
        assert!((sums[1] - 0.31100423396407).abs() < 1e-11);
    }

    #[test]
    fn rkn_invariants_across_grid() {
        for s in 2..=5usize {
            for k in s..=8usize {
                let t = build_rkn(k, s).unwrap();
                for i in 0..k {
                    // secondary weights exactly as computed
                    assert_eq!(t.b_bar[i], t.b[i] * (1.0 - t.c[i]));
                    let sum: f64 = t.a_bar[i].iter().sum();
                    assert!(
                        (sum - t.c[i] * t.c[i] / 2.0).abs() <= 1e-13,
                        "k={k} s={s} row {i}"
                    );
                    for j in 0..k {
                        let expected = abar_s(t.c[i], t.c[j], s).unwrap() * t.b[j];
                        assert!(
                            (t.a_bar[i][j] - expected).abs() <= 1e-13,
                            "k={k} s={s} ({i},{j})"
                        );
                    }
                }
                let total: f64 = t.b_bar.iter().sum();
                assert!((total - 0.5).abs() <= 1e-14, "k={k} s={s} sum b_bar");
            }
        }
    }

    #[test]
    fn rkn_rejects_s_one_and_k_below_s() {
        assert!(matches!(
            build_rkn(3, 1),
            Err(Error::UnsupportedTruncation { s: 1 })
        ));
        assert!(matches!(build_rkn(2, 3), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_rk(1, 2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lowrank_examples() {
        let t = build_lowrank_symplectic(1, 1).unwrap();
        assert!((t.a[0][0] - 0.5).abs() < 1e-16);
        assert_eq!(t.family, RkFamily::LowRankSymplectic);

        let t = build_lowrank_symplectic(2, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.a[i][j] - 0.25).abs() < 1e-15);
            }
        }

        let t = build_lowrank_symplectic(2, 2).unwrap();
        let x = crate::legendre::x_matrix(2);
        for i in 0..2 {
            for j in 0..2 {
                let pi = crate::legendre::p_values(1, t.c[i]);
                let pj = crate::legendre::p_values(1, t.c[j]);
                let mut kernel = 0.0;
                for r in 0..2 {
                    for l in 0..2 {
                        kernel += pi[r] * x[r][l] * pj[l];
                    }
                }
                assert!((t.a[i][j] - kernel * t.b[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn collocation_matches_legendre_factorization() {
        for s in 1..=5usize {
            let colloc = gauss_collocation(s).unwrap();
            let rk = build_rk(s, s).unwrap();
            for i in 0..s {
                for j in 0..s {
                    assert!(
                        (colloc.a[i][j] - rk.a[i][j]).abs() <= 1e-12,
                        "s={s} ({i},{j}): {} vs {}",
                        colloc.a[i][j],
                        rk.a[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn collocation_two_stage_analytic() {
        let t = gauss_collocation(2).unwrap();
        assert!((t.a[0][0] - 0.25).abs() < 1e-14);
        assert!((t.a[0][1] - (0.25 - SQRT_3 / 6.0)).abs() < 1e-14);
        assert!((t.a[1][0] - (0.25 + SQRT_3 / 6.0)).abs() < 1e-14);
        assert!((t.a[1][1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn collocation_one_stage_is_midpoint() {
        let t = gauss_collocation(1).unwrap();
        assert_eq!(t.c, vec![0.5]);
        assert!((t.a[0][0] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn lagrange_integrals_reproduce_weights() {
        // ∫_0^1 ℓ_j(τ) dτ = b_j: evaluate via the collocation matrix at c = 1
        // by integrating each cardinal polynomial over the whole interval.
        for s in 1..=6usize {
            let rule = gauss_rule(s).unwrap();
            let c = rule.nodes();
            for j in 0..s {
                let mut coeffs = vec![1.0];
                for (r, &cr) in c.iter().enumerate() {
                    if r == j {
                        continue;
                    }
                    let scale = 1.0 / (c[j] - cr);
                    let mut next = vec![0.0; coeffs.len() + 1];
                    for (m, &am) in coeffs.iter().enumerate() {
                        next[m + 1] += am * scale;
                        next[m] -= cr * am * scale;
                    }
                    coeffs = next;
                }
                let integral: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, &am)| am / (m as f64 + 1.0))
                    .sum();
                assert!(
                    (integral - rule.weights()[j]).abs() <= 1e-13,
                    "s={s} j={j}: {integral} vs {}",
                    rule.weights()[j]
                );
            }
        }
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let cases = vec![
            Tableau::Rk(build_rk(3, 2).unwrap()),
            Tableau::Rk(build_lowrank_symplectic(3, 2).unwrap()),
            Tableau::Rkn(build_rkn(4, 2).unwrap()),
        ];
        for t in cases {
            let bytes = export_tableau(&t, ExportFormat::Json).unwrap();
            let back = import_tableau(&bytes, ExportFormat::Json).unwrap();
            assert_eq!(t, back);
            match (&t, &back) {
                (Tableau::Rk(a), Tableau::Rk(b)) => {
                    assert_eq!(bits(&a.c), bits(&b.c));
                    assert_eq!(bits(&a.b), bits(&b.b));
                    for (ra, rb) in a.a.iter().zip(&b.a) {
                        assert_eq!(bits(ra), bits(rb));
                    }
                }
                (Tableau::Rkn(a), Tableau::Rkn(b)) => {
                    assert_eq!(bits(&a.b_bar), bits(&b.b_bar));
                    for (ra, rb) in a.a_bar.iter().zip(&b.a_bar) {
                        assert_eq!(bits(ra), bits(rb));
                    }
                }
                _ => panic!("family changed in round trip"),
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let cases = vec![
            Tableau::Rk(build_rk(4, 3).unwrap()),
            Tableau::Rk(build_lowrank_symplectic(2, 2).unwrap()),
            Tableau::Rkn(build_rkn(3, 2).unwrap()),
        ];
        for t in cases {
            let bytes = export_tableau(&t, ExportFormat::Csv).unwrap();
            let back = import_tableau(&bytes, ExportFormat::Csv).unwrap();
            assert_eq!(t, back);
        }
    }

    #[test]
    fn json_schema_keys() {
        let bytes =
            export_tableau(&Tableau::Rk(build_rk(1, 1).unwrap()), ExportFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let obj = value.as_object().unwrap();
        for key in ["family", "k", "s", "c", "b", "A"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert!(!obj.contains_key("b_bar"));
        assert_eq!(obj["family"], "hbvm-rk");

        let bytes =
            export_tableau(&Tableau::Rkn(build_rkn(2, 2).unwrap()), ExportFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let obj = value.as_object().unwrap();
        for key in ["family", "k", "s", "c", "b", "b_bar", "A_bar"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert!(!obj.contains_key("A"));
    }

    #[test]
    fn unknown_format_is_rejected() {
        use std::str::FromStr;
        assert!(matches!(
            ExportFormat::from_str("yaml"),
            Err(Error::UnknownFormat(_))
        ));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(import_tableau(b"{}", ExportFormat::Json).is_err());
        assert!(import_tableau(b"family,hbvm-rk\n", ExportFormat::Csv).is_err());
        assert!(import_tableau(b"nonsense", ExportFormat::Csv).is_err());
    }
}
