//! Time integration of the regularised system and its `ν → 0`, `μ → 0` limits.
//!
//! The default scheme is backward Euler with the diffusivity lagged at `t_n`
//! and the mollified transport term explicit:
//!
//! ```text
//! (I − Δt ∇·(k_n ∇)) v_{n+1} = v_n − Δt δ (J_μ(v_n)·∇) v_n,   k_n = ν + a(μ, v_n)
//! ```
//!
//! so each step is one SPD solve per component.

use log::{debug, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{compute_record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fields::{l2_norm, linf_norm, SimParams, Termination, Trajectory, VectorField};
use crate::operators::{
    convection, gradient, mollify_space, transport_mollifier_radius,
    FaceDiffusivity,
};
use crate::solver::{pcg, IncompleteCholesky, StencilMatrix};

/// Relative `‖v‖₂` level treated as extinction.
pub const EXTINCTION_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemeMode {
    #[default]
    SemiImplicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    pub linear_solver_tol: f64,
    pub max_linear_iters: usize,
    pub cfl_safety: f64,
    /// Store every `snapshot_stride`-th step.
    pub snapshot_stride: usize,
    /// Also evaluate the weighted second-derivative monitor at each snapshot.
    pub record_hessian: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            mode: SchemeMode::SemiImplicit,
            linear_solver_tol: 1e-10,
            max_linear_iters: 5000,
            cfl_safety: 0.9,
            snapshot_stride: 1,
            record_hessian: false,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linear_solver_tol > 0.0) {
            return Err(Error::param("linear_solver_tol", "must be > 0"));
        }
        if self.max_linear_iters == 0 {
            return Err(Error::param("max_linear_iters", "must be >= 1"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::param("cfl_safety", format!("{} is outside (0, 1)", self.cfl_safety)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::param("snapshot_stride", "must be >= 1"));
        }
        Ok(())
    }
}

/// Quantities frozen at the old time level.
#[derive(Debug, Clone)]
pub(crate) struct Frozen {
    pub faces: FaceDiffusivity,
    /// `δ (J_μ(v_n)·∇) v_n`.
    pub transport: VectorField,
    pub max_coefficient: f64,
    /// `max |J_μ(v_n)|`.
    pub max_drift: f64,
}

pub(crate) fn freeze(v: &VectorField, params: &SimParams) -> Result<Frozen> {
    let grid = *v.grid();
    let (faces, clamped) = FaceDiffusivity::from_gradient(&gradient(v), params.mu, params.p, params.nu);
    if clamped > 0 {
        debug!("{clamped} degenerate nodes floored");
    }
    let max_coefficient = faces.max_nodal() - params.nu;
    let (transport, max_drift) = if params.delta == 0.0 {
        (VectorField::zeros(grid), 0.0)
    } else {
        let drift = mollify_space(v, transport_mollifier_radius(params.mu, grid.h()))?;
        let max_drift = linf_norm(&drift);
        (convection(&drift, v)?.scaled(params.delta), max_drift)
    };
    Ok(Frozen {
        faces,
        transport,
        max_coefficient,
        max_drift,
    })
}

/// Signed energy-identity defect of one step, `v → w`, with the scheme's time levels.
pub(crate) fn signed_energy_defect(v: &VectorField, w: &VectorField, frozen: &Frozen, dt: f64) -> f64 {
    let grow = (w.inner(w).unwrap() - v.inner(v).unwrap()) / (2.0 * dt);
    let dissipation = frozen.faces.dirichlet_energy(w);
    grow + dissipation + frozen.transport.inner(w).unwrap()
}

/// Outcome of a single step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: VectorField,
    /// Signed energy-identity defect; nonnegative for the semi-implicit scheme.
    pub energy_defect: f64,
    pub linear_iterations: usize,
}

fn ensure_finite(v: &VectorField, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn step_semi_implicit(v: &VectorField, params: &SimParams, cfg: &SchemeConfig) -> Result<VectorField> {
    step_semi_implicit_report(v, params, cfg).map(|r| r.state)
}

pub fn step_semi_implicit_report(
    v: &VectorField,
    params: &SimParams,
    cfg: &SchemeConfig,
) -> Result<StepReport> {
    ensure_finite(v, "state before step")?;
    let grid = *v.grid();
    let frozen = freeze(v, params)?;
    let a = StencilMatrix::backward_euler(&frozen.faces, params.dt);
    let m = IncompleteCholesky::new(&a);
    let solved: Vec<Result<(Vec<f64>, usize)>> = v
        .components()
        .par_iter()
        .zip(frozen.transport.components().par_iter())
        .map(|(vc, tc)| {
            let rhs: Vec<f64> = vc.iter().zip(tc).map(|(x, t)| x - params.dt * t).collect();
            let mut x = vc.clone();
            let stats = pcg(&a, &m, &rhs, &mut x, cfg.linear_solver_tol, cfg.max_linear_iters)?;
            Ok((x, stats.iterations))
        })
        .collect();
    let mut comps = Vec::with_capacity(grid.dim());
    let mut iterations = 0;
    for r in solved {
        let (x, it) = r?;
        iterations += it;
        comps.push(x);
    }
    let mut state = VectorField::from_components(grid, comps)?;
    ensure_finite(&state, "state after step")?;
    state.set_time(v.time().map(|t| t + params.dt));
    let energy_defect = signed_energy_defect(v, &state, &frozen, params.dt);
    Ok(StepReport {
        state,
        energy_defect,
        linear_iterations: iterations,
    })
}

fn cfl_from(frozen: &Frozen, params: &SimParams, h: f64) -> f64 {
    let d = params.dim as f64;
    h * h / (2.0 * d * (params.nu + frozen.max_coefficient) + h * params.delta.abs() * frozen.max_drift * d)
}

/// Explicit stability limit `h² / (2d(ν + max a) + h d |δ| max|J_μ v|)`.
pub fn cfl_dt(v: &VectorField, params: &SimParams) -> Result<f64> {
    let frozen = freeze(v, params)?;
    Ok(cfl_from(&frozen, params, v.grid().h()))
}

pub fn step_explicit(v: &VectorField, params: &SimParams, cfg: &SchemeConfig) -> Result<VectorField> {
    step_explicit_report(v, params, cfg).map(|r| r.state)
}

pub fn step_explicit_report(v: &VectorField, params: &SimParams, cfg: &SchemeConfig) -> Result<StepReport> {
    ensure_finite(v, "state before step")?;
    let grid = *v.grid();
    let frozen = freeze(v, params)?;
    let limit = cfl_from(&frozen, params, grid.h()) * cfg.cfl_safety;
    if params.dt > limit {
        return Err(Error::Cfl { dt: params.dt, limit });
    }
    let comps = v
        .components()
        .iter()
        .zip(frozen.transport.components())
        .map(|(vc, tc)| {
            let div = frozen.faces.divergence(vc);
            vc.iter()
                .zip(div)
                .zip(tc)
                .map(|((x, dv), t)| x + params.dt * (dv - t))
                .collect()
        })
        .collect();
    let mut state = VectorField::from_components(grid, comps)?;
    ensure_finite(&state, "state after step")?;
    state.set_time(v.time().map(|t| t + params.dt));
    let energy_defect = signed_energy_defect(v, &state, &frozen, params.dt);
    Ok(StepReport {
        state,
        energy_defect,
        linear_iterations: 0,
    })
}

/// A failed run together with everything computed before the failure.
#[derive(Debug, Clone, Error)]
#[error("run aborted at t = {time}: {error}")]
pub struct RunFailure {
    pub error: Error,
    pub time: f64,
    pub partial: Box<Trajectory>,
}

pub fn run(u0: &VectorField, params: &SimParams, cfg: &SchemeConfig) -> std::result::Result<Trajectory, RunFailure> {
    let fail_early = |error: Error| RunFailure {
        error,
        time: 0.0,
        partial: Box::new(Trajectory {
            params: *params,
            times: vec![0.0],
            states: vec![u0.clone()],
            diagnostics: Vec::new(),
            step_residuals: Vec::new(),
            stride: cfg.snapshot_stride.max(1),
            termination: Termination::Aborted {
                time: 0.0,
                reason: "invalid input".into(),
            },
        }),
    };
    params.validate().map_err(fail_early)?;
    cfg.validate().map_err(fail_early)?;
    ensure_finite(u0, "initial datum").map_err(fail_early)?;
    let grid = params.grid().map_err(fail_early)?;
    if *u0.grid() != grid {
        return Err(fail_early(Error::GridMismatch));
    }

    let u0_linf = linf_norm(u0);
    let threshold = EXTINCTION_THRESHOLD * l2_norm(u0).max(1.0);
    // A datum already below the threshold is integrated to t_end.
    let detect = l2_norm(u0) > threshold;
    let snapshot = |v: &VectorField, t: f64, residual: f64, extinct: bool| -> DiagnosticsRecord {
        let mut rec = compute_record(v, t, params, u0_linf, cfg.record_hessian);
        rec.energy_residual = residual;
        rec.extinction_flag = extinct;
        rec
    };

    let mut traj = Trajectory {
        params: *params,
        times: vec![0.0],
        states: vec![u0.clone().with_time(0.0)],
        diagnostics: vec![snapshot(u0, 0.0, 0.0, false)],
        step_residuals: Vec::new(),
        stride: cfg.snapshot_stride,
        termination: Termination::Completed,
    };

    let mut v = u0.clone().with_time(0.0);
    let mut t = 0.0;
    let mut step = 0usize;
    let eps = 1e-9 * params.dt;
    while params.t_end - t > eps {
        let mut local = *params;
        local.dt = params.dt.min(params.t_end - t);
        let report = match cfg.mode {
            SchemeMode::SemiImplicit => step_semi_implicit_report(&v, &local, cfg),
            SchemeMode::Explicit => step_explicit_report(&v, &local, cfg),
        };
        let report = match report {
            Ok(r) => r,
            Err(error) => {
                warn!("step {} failed at t = {t}: {error}", step + 1);
                traj.termination = Termination::Aborted {
                    time: t,
                    reason: error.to_string(),
                };
                return Err(RunFailure {
                    error,
                    time: t,
                    partial: Box::new(traj),
                });
            }
        };
        step += 1;
        t = if params.t_end - (t + local.dt) <= eps {
            params.t_end
        } else {
            step as f64 * params.dt
        };
        v = report.state.with_time(t);
        let residual = report.energy_defect.abs();
        traj.step_residuals.push(residual);

        let extinct = detect && l2_norm(&v) <= threshold;
        let last = params.t_end - t <= eps;
        if extinct || last || step % cfg.snapshot_stride == 0 {
            traj.diagnostics.push(snapshot(&v, t, residual, extinct));
            traj.times.push(t);
            traj.states.push(v.clone());
        }
        if extinct {
            traj.termination = Termination::Extinct { time: t };
            break;
        }
    }
    Ok(traj)
}
