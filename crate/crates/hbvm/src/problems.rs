//! Built-in Hamiltonian benchmark problems.
//!
//! Every built-in is separable, H(q, p) = |p|²/2 + U(q), so each one can be
//! integrated both as the partitioned first-order system and through the
//! Nystrom one-step map.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrator::{as_first_order, FirstOrderIvp, SecondOrderIvp, Trajectory};

type EnergyFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type ForceFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
/// Closed-form flow t ↦ (q, p).
pub type ExactFn = dyn Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A Hamiltonian test problem: energy functional, force field −∇U, initial
/// data, and (where available) the exact flow.
#[derive(Clone)]
pub struct HamiltonianProblem {
    name: String,
    dim: usize,
    energy: Arc<EnergyFn>,
    force: Arc<ForceFn>,
    q0: Vec<f64>,
    p0: Vec<f64>,
    exact: Option<Arc<ExactFn>>,
}

impl HamiltonianProblem {
    /// Assembles a problem from its pieces. The energy must be finite at
    /// the initial data, and `force` must write exactly `dim` components.
    pub fn new(
        name: impl Into<String>,
        q0: Vec<f64>,
        p0: Vec<f64>,
        energy: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        force: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        exact: Option<Arc<ExactFn>>,
    ) -> Result<Self> {
        if q0.len() != p0.len() {
            return Err(Error::DimensionMismatch(format!(
                "q0 has length {} but p0 has length {}",
                q0.len(),
                p0.len()
            )));
        }
        let h0 = energy(&q0, &p0);
        if !h0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "energy at the initial data is not finite ({h0})"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim: q0.len(),
            energy: Arc::new(energy),
            force: Arc::new(force),
            q0,
            p0,
            exact,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degrees of freedom m.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial_position(&self) -> &[f64] {
        &self.q0
    }

    pub fn initial_velocity(&self) -> &[f64] {
        &self.p0
    }

    /// H(q, p).
    pub fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        (self.energy)(q, p)
    }

    /// Energy of a stacked (q, p) state.
    pub fn energy_of_state(&self, state: &[f64]) -> f64 {
        (self.energy)(&state[..self.dim], &state[self.dim..])
    }

    pub fn force_into(&self, q: &[f64], acc: &mut [f64]) {
        (self.force)(q, acc)
    }

    pub fn force(&self, q: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        (self.force)(q, &mut acc);
        acc
    }

    /// Exact (q, p) at time t when the problem has a closed-form flow.
    pub fn exact_at(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        self.exact.as_ref().map(|f| f(t))
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// The problem as a special second-order system q̈ = force(q).
    pub fn as_second_order(&self) -> SecondOrderIvp {
        let force = self.force.clone();
        SecondOrderIvp::new(self.q0.clone(), self.p0.clone(), move |q, acc| {
            force(q, acc)
        })
        .expect("built-in initial data has matching dimensions")
    }

    /// The problem as the partitioned first-order system on (q, p).
    pub fn as_first_order(&self) -> FirstOrderIvp {
        as_first_order(&self.as_second_order())
    }
}

/// Harmonic oscillator: H = (p² + q²)/2, exact flow a rotation.
pub fn make_harmonic() -> HamiltonianProblem {
    HamiltonianProblem {
        name: "harmonic".into(),
        dim: 1,
        energy: Arc::new(|q, p| 0.5 * (p[0] * p[0] + q[0] * q[0])),
        force: Arc::new(|q, acc| acc[0] = -q[0]),
        q0: vec![1.0],
        p0: vec![0.0],
        exact: Some(Arc::new(|t| (vec![t.cos()], vec![-t.sin()]))),
    }
}

/// Pendulum: H = p²/2 − cos q.
pub fn make_pendulum() -> HamiltonianProblem {
    HamiltonianProblem {
        name: "pendulum".into(),
        dim: 1,
        energy: Arc::new(|q, p| 0.5 * p[0] * p[0] - q[0].cos()),
        force: Arc::new(|q, acc| acc[0] = -q[0].sin()),
        q0: vec![1.0],
        p0: vec![0.0],
        exact: None,
    }
}

/// Kepler problem with eccentricity 0 ≤ e < 1: H = |p|²/2 − 1/|q|,
/// started at perihelion with period 2π and energy −1/2.
pub fn make_kepler(e: f64) -> Result<HamiltonianProblem> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidParameter(format!(
            "eccentricity must satisfy 0 <= e < 1, got {e}"
        )));
    }
    Ok(HamiltonianProblem {
        name: format!("kepler:{e}"),
        dim: 2,
        energy: Arc::new(|q, p| {
            let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
            0.5 * (p[0] * p[0] + p[1] * p[1]) - 1.0 / r
        }),
        force: Arc::new(|q, acc| {
            let r2 = q[0] * q[0] + q[1] * q[1];
            let inv_r3 = 1.0 / (r2 * r2.sqrt());
            acc[0] = -q[0] * inv_r3;
            acc[1] = -q[1] * inv_r3;
        }),
        q0: vec![1.0 - e, 0.0],
        p0: vec![0.0, ((1.0 + e) / (1.0 - e)).sqrt()],
        exact: None,
    })
}

/// Polynomial oscillator: H = p²/2 + q^d/d for even degree d, the quartic
/// and higher cases exercise exact energy conservation under silent stages.
pub fn make_poly_oscillator(degree: u32) -> Result<HamiltonianProblem> {
    if !(2..=10).contains(&degree) || !degree.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "oscillator degree must be even and within 2..=10, got {degree}"
        )));
    }
    let d = degree as i32;
    Ok(HamiltonianProblem {
        name: format!("polyosc:{degree}"),
        dim: 1,
        energy: Arc::new(move |q, p| 0.5 * p[0] * p[0] + q[0].powi(d) / d as f64),
        force: Arc::new(move |q, acc| acc[0] = -q[0].powi(d - 1)),
        q0: vec![1.0],
        p0: vec![0.0],
        exact: None,
    })
}

/// Henon-Heiles: H = |p|²/2 + (q1² + q2²)/2 + q1²q2 − q2³/3, initial data
/// inside the bounded-motion regime.
pub fn make_henon_heiles() -> HamiltonianProblem {
    HamiltonianProblem {
        name: "henonheiles".into(),
        dim: 2,
        energy: Arc::new(|q, p| {
            0.5 * (p[0] * p[0] + p[1] * p[1])
                + 0.5 * (q[0] * q[0] + q[1] * q[1])
                + q[0] * q[0] * q[1]
                - q[1] * q[1] * q[1] / 3.0
        }),
        force: Arc::new(|q, acc| {
            acc[0] = -q[0] - 2.0 * q[0] * q[1];
            acc[1] = -q[1] - q[0] * q[0] + q[1] * q[1];
        }),
        q0: vec![0.0, 0.45],
        p0: vec![0.42, 0.0],
        exact: None,
    }
}

/// Resolves a CLI problem name: harmonic | pendulum | kepler:e | polyosc:d
/// | henonheiles.
pub fn from_name(name: &str) -> Result<HamiltonianProblem> {
    match name {
        "harmonic" => Ok(make_harmonic()),
        "pendulum" => Ok(make_pendulum()),
        "henonheiles" => Ok(make_henon_heiles()),
        _ => {
            if let Some(e) = name.strip_prefix("kepler:") {
                let e: f64 = e.parse().map_err(|_| {
                    Error::InvalidParameter(format!("cannot parse eccentricity in {name:?}"))
                })?;
                make_kepler(e)
            } else if let Some(d) = name.strip_prefix("polyosc:") {
                let d: u32 = d.parse().map_err(|_| {
                    Error::InvalidParameter(format!("cannot parse degree in {name:?}"))
                })?;
                make_poly_oscillator(d)
            } else {
                Err(Error::InvalidParameter(format!(
                    "unknown problem {name:?} (expected harmonic | pendulum | kepler:e | \
                     polyosc:d | henonheiles)"
                )))
            }
        }
    }
}

/// One row of an energy record along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub time: f64,
    pub energy: f64,
    /// H − H(0); the first entry is exactly zero.
    pub drift: f64,
}

/// Evaluates H along a stacked (q, p) trajectory.
pub fn energy_series(prob: &HamiltonianProblem, traj: &Trajectory) -> Result<Vec<EnergySample>> {
    let expected = 2 * prob.dim;
    if traj.states.iter().any(|st| st.len() != expected) {
        return Err(Error::DimensionMismatch(format!(
            "trajectory states must stack (q, p) with length {expected} for {}",
            prob.name
        )));
    }
    let h0 = prob.energy_of_state(&traj.states[0]);
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&time, state)| {
            let energy = prob.energy_of_state(state);
            EnergySample {
                time,
                energy,
                drift: energy - h0,
            }
        })
        .collect())
}
