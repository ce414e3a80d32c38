//! The experiment drivers behind the CLI: convergence-order studies,
//! energy-drift records, and the first-order/Nystrom equivalence check.

use hbvm::error::{Error, Result};
use hbvm::integrator::{integrate, integrate_second_order, SolverConfig};
use hbvm::problems::{energy_series, EnergySample, HamiltonianProblem};

/// One row of a convergence study; the order column pairs this row with the
/// next one and is `None` for the last row or when an error vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStudyRow {
    pub h: f64,
    pub error: f64,
    pub observed_order: Option<f64>,
}

fn solver_cfg(h: f64, n_steps: usize, tol: f64) -> Result<SolverConfig> {
    SolverConfig::new(h, n_steps)?.with_tol(tol)
}

fn check_method(k: usize, s: usize) -> Result<()> {
    if s < 1 || k < s {
        return Err(Error::InvalidParameter(format!(
            "k >= s >= 1 required, got k = {k}, s = {s}"
        )));
    }
    Ok(())
}

/// Runs the problem over a fixed total time T = h_list[0]·steps for every
/// step size in the list and reports terminal errors and consecutive-pair
/// observed orders. The reference is the exact solution when the problem
/// has one, otherwise the same method at h = h_min/10 with tol 1e-14.
pub fn run_order_study(
    problem: &HamiltonianProblem,
    s: usize,
    k: usize,
    h_list: &[f64],
    steps_at_coarsest: usize,
    tol: f64,
) -> Result<Vec<OrderStudyRow>> {
    check_method(k, s)?;
    if h_list.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "order study needs at least 4 step sizes, got {}",
            h_list.len()
        )));
    }
    for pair in h_list.windows(2) {
        if pair[0] <= pair[1] {
            return Err(Error::InvalidParameter(
                "h-list must be strictly decreasing".into(),
            ));
        }
    }
    if steps_at_coarsest == 0 {
        return Err(Error::InvalidParameter(
            "order study needs at least one step at the coarsest h".into(),
        ));
    }
    let t_total = h_list[0] * steps_at_coarsest as f64;
    let mut step_counts = Vec::with_capacity(h_list.len());
    for &h in h_list {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step size {h} must be positive"
            )));
        }
        let n = (t_total / h).round();
        if n < 1.0 || (n * h - t_total).abs() > 1e-8 * t_total {
            return Err(Error::InvalidParameter(format!(
                "step size {h} does not divide the total time {t_total}"
            )));
        }
        step_counts.push(n as usize);
    }

    let ivp = problem.as_first_order();
    // terminal reference state at t = T
    let reference: Vec<f64> = if problem.has_exact() {
        let (q, p) = problem.exact_at(t_total).expect("has_exact checked");
        q.into_iter().chain(p).collect()
    } else {
        let h_ref = h_list[h_list.len() - 1] / 10.0;
        let n_ref = (t_total / h_ref).round() as usize;
        let cfg = solver_cfg(h_ref, n_ref, 1e-14)?;
        let traj = integrate(&ivp, k, s, &cfg).map_err(Error::from)?;
        traj.final_state().to_vec()
    };

    let mut errors = Vec::with_capacity(h_list.len());
    for (&h, &n) in h_list.iter().zip(&step_counts) {
        let cfg = solver_cfg(h, n, tol)?;
        let traj = integrate(&ivp, k, s, &cfg).map_err(Error::from)?;
        let err = traj
            .final_state()
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errors.push(err);
    }

    let rows = h_list
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let observed_order = if i + 1 < errors.len() {
                let (e0, e1) = (errors[i], errors[i + 1]);
                if e0 > 0.0 && e1 > 0.0 {
                    Some((e0 / e1).ln() / (h_list[i] / h_list[i + 1]).ln())
                } else {
                    None
                }
            } else {
                None
            };
            OrderStudyRow {
                h,
                error: errors[i],
                observed_order,
            }
        })
        .collect();
    Ok(rows)
}

/// Integrates the problem with HBVM(k,s) and returns the energy record
/// along the trajectory.
pub fn run_drift_study(
    problem: &HamiltonianProblem,
    s: usize,
    k: usize,
    h: f64,
    n_steps: usize,
    tol: f64,
) -> Result<Vec<EnergySample>> {
    check_method(k, s)?;
    let cfg = solver_cfg(h, n_steps, tol)?;
    let traj = integrate(&problem.as_first_order(), k, s, &cfg).map_err(Error::from)?;
    energy_series(problem, &traj)
}

/// Largest deviation between the partitioned first-order run and the
/// Nystrom run under identical settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RknEquivReport {
    pub max_q_deviation: f64,
    pub max_p_deviation: f64,
    pub n_steps: usize,
}

/// Both integrations discretize the same continuous method, so their (q, p)
/// records should agree to solver tolerance and round-off.
pub fn run_rkn_equiv(
    problem: &HamiltonianProblem,
    s: usize,
    k: usize,
    h: f64,
    n_steps: usize,
    tol: f64,
) -> Result<RknEquivReport> {
    if s < 2 {
        return Err(Error::UnsupportedTruncation { s });
    }
    check_method(k, s)?;
    let cfg = solver_cfg(h, n_steps, tol)?;
    let first_order = integrate(&problem.as_first_order(), k, s, &cfg).map_err(Error::from)?;
    let nystrom =
        integrate_second_order(&problem.as_second_order(), k, s, &cfg).map_err(Error::from)?;
    let m = problem.dim();
    let mut max_q: f64 = 0.0;
    let mut max_p: f64 = 0.0;
    for (a, b) in first_order.states.iter().zip(&nystrom.states) {
        for u in 0..m {
            max_q = max_q.max((a[u] - b[u]).abs());
            max_p = max_p.max((a[m + u] - b[m + u]).abs());
        }
    }
    Ok(RknEquivReport {
        max_q_deviation: max_q,
        max_p_deviation: max_p,
        n_steps,
    })
}
