//! Command-line front end: flag parsing, dispatch, and output rendering.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags or parameters),
//! 2 on numerical failures during a run. All numeric output uses shortest
//! round-trip decimal formatting, so identical flags produce byte-identical
//! files.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use hbvm::error::Error;
use hbvm::integrator::Trajectory;
use hbvm::problems::{from_name, EnergySample};
use hbvm::tableau::{
    build_lowrank_symplectic, build_rk, build_rkn, export_tableau, ExportFormat, Tableau,
};

use crate::studies::{run_drift_study, run_order_study, run_rkn_equiv, OrderStudyRow};

/// Shortest round-trip decimal form, matching the JSON float writer.
fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

#[derive(Parser)]
#[command(
    name = "hbvm",
    about = "Structure-preserving HBVM(k,s) integration experiments",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build a method tableau and print or save it
    Tableau {
        /// Quadrature node count (k >= s)
        #[arg(long)]
        k: usize,
        /// Polynomial degree of the method
        #[arg(long)]
        s: usize,
        /// Tableau family: rk | rkn | lowrank
        #[arg(long, default_value = "rk")]
        family: String,
        /// Output format: json | csv
        #[arg(long, default_value = "json")]
        format: String,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a problem and record the trajectory
    Integrate {
        /// Problem name: harmonic | pendulum | kepler:e | polyosc:d | henonheiles
        #[arg(long)]
        problem: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        /// Step size
        #[arg(long)]
        h: f64,
        /// Number of steps
        #[arg(long)]
        steps: usize,
        /// Nonlinear residual tolerance
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        /// Stepping family: rk (partitioned first-order) | rkn
        #[arg(long, default_value = "rk")]
        family: String,
        /// Output format: json | csv
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Terminal-error convergence study over a list of step sizes
    OrderStudy {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        /// Comma-separated strictly decreasing step sizes (at least 4)
        #[arg(long = "h-list", value_delimiter = ',', required = true)]
        h_list: Vec<f64>,
        /// Steps taken at the coarsest h; fixes the total time
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy record H(t) and drift H(t) − H(0) along a trajectory
    DriftStudy {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deviation between the partitioned first-order and Nystrom runs
    RknEquiv {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses argv and runs the selected command, returning the process exit
/// status instead of exiting, so tests can drive it directly.
pub fn parse_and_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::UnsupportedTruncation { .. }
        | Error::UnknownFormat(_)
        | Error::DegreeOverflow { .. }
        | Error::DimensionMismatch(_) => 1,
        // classify a failed step by its cause
        Error::StepFailed { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Tableau {
            k,
            s,
            family,
            format,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            let tableau = match family.as_str() {
                "rk" => Tableau::Rk(build_rk(k, s)?),
                "rkn" => Tableau::Rkn(build_rkn(k, s)?),
                "lowrank" => Tableau::Rk(build_lowrank_symplectic(k, s)?),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown family {other:?} for --family (expected rk | rkn | lowrank)"
                    )))
                }
            };
            emit(&export_tableau(&tableau, format)?, &out)
        }
        Command::Integrate {
            problem,
            k,
            s,
            h,
            steps,
            tol,
            family,
            format,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            let prob = from_name(&problem)?;
            let cfg = hbvm::integrator::SolverConfig::new(h, steps)?.with_tol(tol)?;
            let traj = match family.as_str() {
                "rk" => hbvm::integrator::integrate(&prob.as_first_order(), k, s, &cfg)
                    .map_err(Error::from)?,
                "rkn" => {
                    hbvm::integrator::integrate_second_order(&prob.as_second_order(), k, s, &cfg)
                        .map_err(Error::from)?
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown family {other:?} for --family (expected rk | rkn)"
                    )))
                }
            };
            emit(&render_trajectory(&traj, prob.dim(), format), &out)
        }
        Command::OrderStudy {
            problem,
            k,
            s,
            h_list,
            steps,
            tol,
            format,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            let prob = from_name(&problem)?;
            let rows = run_order_study(&prob, s, k, &h_list, steps, tol)?;
            emit(&render_order_study(&rows, format), &out)
        }
        Command::DriftStudy {
            problem,
            k,
            s,
            h,
            steps,
            tol,
            format,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            let prob = from_name(&problem)?;
            let rows = run_drift_study(&prob, s, k, h, steps, tol)?;
            emit(&render_drift_study(&rows, format), &out)
        }
        Command::RknEquiv {
            problem,
            k,
            s,
            h,
            steps,
            tol,
            format,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            let prob = from_name(&problem)?;
            let report = run_rkn_equiv(&prob, s, k, h, steps, tol)?;
            let bytes = match format {
                ExportFormat::Json => {
                    #[derive(Serialize)]
                    struct Doc {
                        max_q_deviation: f64,
                        max_p_deviation: f64,
                        steps: usize,
                    }
                    let mut v = serde_json::to_vec_pretty(&Doc {
                        max_q_deviation: report.max_q_deviation,
                        max_p_deviation: report.max_p_deviation,
                        steps: report.n_steps,
                    })
                    .expect("report serialization cannot fail");
                    v.push(b'\n');
                    v
                }
                ExportFormat::Csv => format!(
                    "max_q_deviation,max_p_deviation,steps\n{},{},{}\n",
                    fmt_f64(report.max_q_deviation),
                    fmt_f64(report.max_p_deviation),
                    report.n_steps
                )
                .into_bytes(),
            };
            emit(&bytes, &out)
        }
    }
}

fn render_order_study(rows: &[OrderStudyRow], format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("h,error,observed_order\n");
            for row in rows {
                let order = row.observed_order.map_or_else(|| "NA".to_string(), fmt_f64);
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(row.h),
                    fmt_f64(row.error),
                    order
                ));
            }
            out.into_bytes()
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Row {
                h: f64,
                error: f64,
                observed_order: Option<f64>,
            }
            let doc: Vec<Row> = rows
                .iter()
                .map(|r| Row {
                    h: r.h,
                    error: r.error,
                    observed_order: r.observed_order,
                })
                .collect();
            let mut v = serde_json::to_vec_pretty(&doc).expect("row serialization cannot fail");
            v.push(b'\n');
            v
        }
    }
}

fn render_drift_study(rows: &[EnergySample], format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("step,time,H,drift\n");
            for (step, row) in rows.iter().enumerate() {
                out.push_str(&format!(
                    "{step},{},{},{}\n",
                    fmt_f64(row.time),
                    fmt_f64(row.energy),
                    fmt_f64(row.drift)
                ));
            }
            out.into_bytes()
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Row {
                step: usize,
                time: f64,
                #[serde(rename = "H")]
                energy: f64,
                drift: f64,
            }
            let doc: Vec<Row> = rows
                .iter()
                .enumerate()
                .map(|(step, r)| Row {
                    step,
                    time: r.time,
                    energy: r.energy,
                    drift: r.drift,
                })
                .collect();
            let mut v = serde_json::to_vec_pretty(&doc).expect("row serialization cannot fail");
            v.push(b'\n');
            v
        }
    }
}

fn render_trajectory(traj: &Trajectory, dim: usize, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut header = String::from("step,time");
            for i in 1..=dim {
                header.push_str(&format!(",q{i}"));
            }
            for i in 1..=dim {
                header.push_str(&format!(",p{i}"));
            }
            header.push_str(",iterations,residual\n");
            let mut out = header;
            for (i, (&t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
                out.push_str(&format!("{i},{}", fmt_f64(t)));
                for &x in state {
                    out.push_str(&format!(",{}", fmt_f64(x)));
                }
                if i == 0 {
                    out.push_str(",0,0.0\n");
                } else {
                    out.push_str(&format!(
                        ",{},{}\n",
                        traj.iterations[i - 1],
                        fmt_f64(traj.residuals[i - 1])
                    ));
                }
            }
            out.into_bytes()
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                times: &'a [f64],
                states: &'a [Vec<f64>],
                iterations: &'a [usize],
                residuals: &'a [f64],
            }
            let mut v = serde_json::to_vec_pretty(&Doc {
                times: &traj.times,
                states: &traj.states,
                iterations: &traj.iterations,
                residuals: &traj.residuals,
            })
            .expect("trajectory serialization cannot fail");
            v.push(b'\n');
            v
        }
    }
}

fn emit(bytes: &[u8], out: &Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| {
            Error::InvalidParameter(format!("cannot write --out {}: {e}", path.display()))
        }),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::InvalidParameter(format!("cannot write to stdout: {e}"))),
    }
}
