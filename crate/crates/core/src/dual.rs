//! Linear dual problem with time-reversed, mollified coefficients.
//!
//! Each dual step is the exact transpose of a forward step: an implicit
//! diffusion solve with the frozen coefficient, followed by the explicit drift
//! `φ∇·v̂ + v̂·∇φ` (see [`split_transport`]). With unmollified coefficients the
//! pairing `(v(t), φ∘) = (v∘, φ(t))` therefore holds to solver tolerance, and
//! the residual measures only the mollification defect `I_η`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{linf_norm, lp_norm, Grid, SimParams, Termination, Trajectory, VectorField};
use crate::operators::{
    divergence, mollify_space, mollify_spacetime_states, split_transport,
    transport_mollifier_radius, FaceDiffusivity,
};
use crate::solver::{pcg, IncompleteCholesky, StencilMatrix};

const DUAL_TOL: f64 = 1e-12;
const DUAL_MAX_ITERS: usize = 5000;

/// Coefficients of the dual problem indexed by dual sample `k`, i.e. forward sample `N − k`.
#[derive(Debug, Clone)]
pub struct DualCoefficients {
    grid: Grid,
    pub horizon: f64,
    /// Dual sample times `s_k = t − t_{N−k}`.
    pub times: Vec<f64>,
    /// `a_η(μ, v)(t − s_k)` on nodes and boundary faces.
    pub a_eta: Vec<FaceDiffusivity>,
    /// `δ J_μ(v)(t − s_k)`.
    pub drift: Vec<VectorField>,
    /// Centred divergence of `drift`.
    pub drift_div: Vec<Vec<f64>>,
    params: SimParams,
}

impl DualCoefficients {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn build_dual_coefficients(traj: &Trajectory, t: f64, eta: f64, mu: f64, p: f64) -> Result<DualCoefficients> {
    if !(mu > 0.0) {
        return Err(Error::param("mu", "the dual problem needs mu > 0"));
    }
    if traj.stride != 1 {
        return Err(Error::Trajectory("dual coefficients need every time step stored".into()));
    }
    let n = traj
        .index_of_time(t)
        .ok_or_else(|| Error::Trajectory(format!("no sample at t = {t}")))?;
    if n == 0 {
        return Err(Error::Trajectory("horizon must be positive".into()));
    }
    let states = &traj.states[..=n];
    let times = &traj.times[..=n];
    let grid = *states[0].grid();
    let mollified = mollify_spacetime_states(states, times, eta)?;
    let radius = transport_mollifier_radius(mu, grid.h());
    let delta = traj.params.delta;

    let per_sample: Vec<Result<(FaceDiffusivity, VectorField)>> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let forward = n - k;
            let (a, _) = FaceDiffusivity::from_gradient(&mollified[forward], mu, p, 0.0);
            let drift = if delta == 0.0 {
                VectorField::zeros(grid)
            } else {
                mollify_space(&states[forward], radius)?.scaled(delta)
            };
            Ok((a, drift))
        })
        .collect();
    let mut a_eta = Vec::with_capacity(n + 1);
    let mut drift = Vec::with_capacity(n + 1);
    for r in per_sample {
        let (a, w) = r?;
        a_eta.push(a);
        drift.push(w);
    }
    let drift_div = drift.iter().map(divergence).collect();
    let mut params = traj.params;
    params.mu = mu;
    params.p = p;
    params.eta = eta;
    Ok(DualCoefficients {
        grid,
        horizon: t,
        times: (0..=n).map(|k| t - times[n - k]).collect(),
        a_eta,
        drift,
        drift_div,
        params,
    })
}

/// Integrates the dual system over `[0, t]` in dual time.
///
/// `dt` must match the forward step; the dual steps mirror the forward ones.
pub fn dual_run(phi0: &VectorField, coeffs: &DualCoefficients, nu: f64, dt: f64) -> Result<Trajectory> {
    if phi0.grid() != coeffs.grid() {
        return Err(Error::GridMismatch);
    }
    if !(nu >= 0.0) {
        return Err(Error::param("nu", "must be >= 0"));
    }
    if (dt - coeffs.params.dt).abs() > 1e-12 * dt {
        return Err(Error::param("dt", format!("{dt} differs from the forward step {}", coeffs.params.dt)));
    }
    if !phi0.is_finite() {
        return Err(Error::NonFinite("dual initial datum"));
    }
    let grid = coeffs.grid;
    let mut phi = phi0.clone().with_time(0.0);
    let mut states = vec![phi.clone()];
    for m in 0..coeffs.len() - 1 {
        let gap = coeffs.times[m + 1] - coeffs.times[m];
        let faces = coeffs.a_eta[m + 1].clone().with_shift(nu);
        let a = StencilMatrix::backward_euler(&faces, gap);
        let ic = IncompleteCholesky::new(&a);
        let solved: Vec<Result<Vec<f64>>> = phi
            .components()
            .par_iter()
            .map(|rhs| {
                let mut x = rhs.clone();
                pcg(&a, &ic, rhs, &mut x, DUAL_TOL, DUAL_MAX_ITERS)?;
                Ok(x)
            })
            .collect();
        let psi = VectorField::from_components(grid, solved.into_iter().collect::<Result<_>>()?)?;
        let next = psi.add_scaled(gap, &split_transport(&coeffs.drift[m + 1], &psi)?)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("dual state"));
        }
        phi = next.with_time(coeffs.times[m + 1]);
        states.push(phi.clone());
    }
    let mut params = coeffs.params;
    params.nu = nu;
    params.t_end = coeffs.horizon;
    Ok(Trajectory {
        params,
        times: coeffs.times.clone(),
        states,
        diagnostics: Vec::new(),
        step_residuals: Vec::new(),
        stride: 1,
        termination: Termination::Completed,
    })
}

/// Runs several dual data over the same coefficients in parallel.
pub fn dual_run_many(phis: &[VectorField], coeffs: &DualCoefficients, nu: f64, dt: f64) -> Result<Vec<Trajectory>> {
    phis.par_iter().map(|phi| dual_run(phi, coeffs, nu, dt)).collect()
}

#[derive(Debug, Clone)]
pub struct DualityReport {
    /// `(v(t), φ∘)`.
    pub forward_pairing: f64,
    /// `(v∘, φ(t))`.
    pub dual_pairing: f64,
    pub residual: f64,
    /// `sup_s ‖φ(s)‖₁ / ‖φ∘‖₁`.
    pub l1_growth: f64,
}

/// `|(v(t), φ∘) − (v∘, φ(t))|` for a forward trajectory stored at every step.
pub fn duality_residual(
    forward: &Trajectory,
    t: f64,
    phi0: &VectorField,
    eta: f64,
    nu_dual: f64,
    dt: f64,
) -> Result<DualityReport> {
    let coeffs = build_dual_coefficients(forward, t, eta, forward.params.mu, forward.params.p)?;
    let dual = dual_run(phi0, &coeffs, nu_dual, dt)?;
    let n = coeffs.len() - 1;
    let forward_pairing = forward.states[n].inner(phi0)?;
    let dual_pairing = forward.initial().inner(dual.last())?;
    Ok(DualityReport {
        forward_pairing,
        dual_pairing,
        residual: (forward_pairing - dual_pairing).abs(),
        l1_growth: l1_growth(&dual),
    })
}

/// `sup_s ‖φ(s)‖₁ / ‖φ(0)‖₁`.
pub fn l1_growth(dual: &Trajectory) -> f64 {
    let l1 = |f: &VectorField| lp_norm(f, 1.0).expect("q = 1 is admissible");
    let base = l1(dual.initial());
    if base == 0.0 {
        return 1.0;
    }
    dual.states.iter().map(l1).fold(0.0, f64::max) / base
}

/// Smooth bump `exp(−1/(1 − |x−x∘|²/ρ²))` on `component`, normalised to unit `L¹` norm.
pub fn smooth_bump(grid: Grid, center: &[f64], rho: f64, component: usize) -> Result<VectorField> {
    if center.len() != grid.dim() || component >= grid.dim() {
        return Err(Error::param("center", "dimension mismatch"));
    }
    let mut comps = vec![vec![0.0; grid.len()]; grid.dim()];
    for (node, slot) in comps[component].iter_mut().enumerate() {
        let x = grid.coords(node);
        let r2: f64 = (0..grid.dim()).map(|b| (x[b] - center[b]).powi(2)).sum::<f64>() / (rho * rho);
        if r2 < 1.0 {
            *slot = (-1.0 / (1.0 - r2)).exp();
        }
    }
    let mass: f64 = comps[component].iter().sum::<f64>() * grid.cell_volume();
    if mass == 0.0 {
        return Err(Error::param("rho", "bump misses every node"));
    }
    comps[component].iter_mut().for_each(|v| *v /= mass);
    VectorField::from_components(grid, comps)
}

/// Discrete unit point mass at `node` on `component`.
pub fn point_mass(grid: Grid, node: usize, component: usize) -> Result<VectorField> {
    if node >= grid.len() || component >= grid.dim() {
        return Err(Error::param("node", "out of range"));
    }
    let mut comps = vec![vec![0.0; grid.len()]; grid.dim()];
    comps[component][node] = 1.0 / grid.cell_volume();
    VectorField::from_components(grid, comps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinfReport {
    /// `max(0, ‖v(t)‖∞ − ‖v∘‖∞)` per snapshot.
    pub overshoot: Vec<f64>,
    pub max_overshoot: f64,
    pub initial_linf: f64,
}

pub fn linf_bound_check(forward: &Trajectory) -> LinfReport {
    let initial_linf = linf_norm(forward.initial());
    let overshoot: Vec<f64> = forward
        .states
        .iter()
        .map(|s| (linf_norm(s) - initial_linf).max(0.0))
        .collect();
    let max_overshoot = overshoot.iter().copied().fold(0.0, f64::max);
    LinfReport {
        overshoot,
        max_overshoot,
        initial_linf,
    }
}
