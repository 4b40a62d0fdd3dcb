//! Per-snapshot monitors, the energy identity, the discrete Sobolev constant
//! and the extinction machinery.
//!
//! Gradient norms use [`CellGradient`]; the energy residual uses the scheme's
//! own face form so that it measures time-discretisation error only.

use std::fmt;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{conjugate_exponent, l2_norm, linf_norm, Grid, SimParams, Trajectory, VectorField};
use crate::operators::{coefficient_value, diffusion_coefficient, gradient, hessian, CellGradient, FaceDiffusivity};
use crate::solver::{dot, pcg, IncompleteCholesky, StencilMatrix};
use crate::stepper::{freeze, signed_energy_defect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub grad_l2: f64,
    pub grad_lp: f64,
    /// `‖(μ+|∇v|²)^((p-2)/4) ∇v‖₂`.
    pub weighted_flux: f64,
    pub energy_residual: f64,
    /// `max(0, ‖v‖∞ − ‖u∘‖∞)`.
    pub overshoot: f64,
    /// `μ|Ω| + ‖∇v‖₂²`.
    pub b_mu: f64,
    /// `t^α B_μ^((4-p)/2)`.
    pub phi_weight: f64,
    /// `‖(μ+|∇v|²)^((p-2)/4) D²v‖₂`, when requested.
    pub d2_weighted: Option<f64>,
    pub extinction_flag: bool,
}

pub fn compute_record(
    v: &VectorField,
    time: f64,
    params: &SimParams,
    u0_linf: f64,
    with_hessian: bool,
) -> DiagnosticsRecord {
    let cells = CellGradient::new(v);
    let mags = cells.magnitude_sq();
    let vol = v.grid().cell_volume();
    let (mu, p) = (params.mu, params.p);
    let grad_sq: f64 = mags.iter().sum::<f64>() * vol;
    let grad_lp = (mags.iter().map(|s| s.powf(0.5 * p)).sum::<f64>() * vol).powf(1.0 / p);
    let flux_sq: f64 = mags
        .iter()
        .map(|&s| if s == 0.0 { 0.0 } else { coefficient_value(mu, p, s).0 * s })
        .sum::<f64>()
        * vol;
    let linf = linf_norm(v);
    let b_mu = mu + grad_sq;
    DiagnosticsRecord {
        time,
        l2_norm: l2_norm(v),
        linf_norm: linf,
        grad_l2: grad_sq.sqrt(),
        grad_lp,
        weighted_flux: flux_sq.sqrt(),
        energy_residual: 0.0,
        overshoot: (linf - u0_linf).max(0.0),
        b_mu,
        phi_weight: time.powf(params.alpha) * b_mu.powf(0.5 * (4.0 - p)),
        d2_weighted: with_hessian.then(|| weighted_hessian(v, mu, p).0),
        extinction_flag: false,
    }
}

/// `(‖a^½ D²v‖₂, ‖a^½ Δv‖₂)` with the nodal coefficient `a(μ, v)`.
fn weighted_hessian(v: &VectorField, mu: f64, p: f64) -> (f64, f64) {
    let a = diffusion_coefficient(&gradient(v), mu, p);
    let hs = hessian(v);
    let vol = v.grid().cell_volume();
    let d2: f64 = a.values.iter().zip(&hs.frobenius_sq).map(|(w, f)| w * f).sum::<f64>() * vol;
    let lap: f64 = a.values.iter().zip(&hs.laplacian_sq).map(|(w, f)| w * f).sum::<f64>() * vol;
    (d2.sqrt(), lap.sqrt())
}

/// Energy-identity residual of the step from sample `n` to `n + 1`.
///
/// The dissipation uses the diffusivity lagged at sample `n`, as the scheme does;
/// with `snapshot_stride > 1` the gap spans several steps and the value is only
/// indicative.
pub fn energy_residual(traj: &Trajectory, n: usize) -> Result<f64> {
    if n + 1 >= traj.len() {
        return Err(Error::Trajectory(format!("no sample after index {n}")));
    }
    let mut params = traj.params;
    params.dt = traj.times[n + 1] - traj.times[n];
    let frozen = freeze(&traj.states[n], &params)?;
    Ok(signed_energy_defect(&traj.states[n], &traj.states[n + 1], &frozen, params.dt).abs())
}

/// Best Rayleigh quotient found by [`gamma_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    /// Smallest `‖∇u‖_p^p / ‖u‖₂^p` over all seeds; an upper estimate of `γ_h`.
    pub value: f64,
    /// Per-seed results in seed order.
    pub per_seed: Vec<f64>,
    /// False when some seed hit the iteration cap before its quotient settled.
    pub converged: bool,
    pub minimizer: Vec<f64>,
}

const GAMMA_MAX_ITERS: usize = 3000;

fn rayleigh(grid: Grid, u: &[f64], p: f64) -> f64 {
    let field = VectorField::from_components(grid, scalar_components(grid, u)).unwrap();
    let n = CellGradient::new(&field).power_sum(p);
    let norm = (dot(u, u) * grid.cell_volume()).sqrt();
    n / norm.powf(p)
}

fn scalar_components(grid: Grid, u: &[f64]) -> Vec<Vec<f64>> {
    let mut comps = vec![vec![0.0; grid.len()]; grid.dim()];
    comps[0].copy_from_slice(u);
    comps
}

fn normalize(grid: Grid, u: &mut [f64]) {
    let norm = (dot(u, u) * grid.cell_volume()).sqrt();
    u.iter_mut().for_each(|x| *x /= norm);
}

/// Discrete Sobolev constant `γ_h = min ‖∇u‖_p^p / ‖u‖₂^p` by preconditioned
/// normalised descent from random starts.
pub fn gamma_estimate(grid: Grid, p: f64, seeds: &[u64]) -> Result<GammaEstimate> {
    if !(p > 1.5 && p <= 2.0) {
        return Err(Error::param("p", format!("{p} is outside (3/2, 2]")));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let precond_matrix = StencilMatrix::backward_euler(&FaceDiffusivity::uniform(grid, 1.0), 1.0);
    let ic = IncompleteCholesky::new(&precond_matrix);
    let vol = grid.cell_volume();
    let mut best = (f64::INFINITY, Vec::new());
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut converged = true;

    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        normalize(grid, &mut u);
        let mut r = rayleigh(grid, &u, p);
        let mut step = 1.0;
        let mut settled = false;
        let mut quiet = 0;
        for _ in 0..GAMMA_MAX_ITERS {
            let field = VectorField::from_components(grid, scalar_components(grid, &u))?;
            let g_num = CellGradient::new(&field).power_sum_gradient(p);
            // Gradient of the quotient at ‖u‖₂ = 1, as a function (divide by h^d).
            let g: Vec<f64> = g_num
                .iter()
                .zip(&u)
                .map(|(gn, ui)| gn / vol - p * r * ui)
                .collect();
            let mut s = vec![0.0; grid.len()];
            pcg(&precond_matrix, &ic, &g, &mut s, 1e-8, 500)?;
            let mut accepted = false;
            while step > 1e-14 {
                let mut trial: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a - step * b).collect();
                normalize(grid, &mut trial);
                let rt = rayleigh(grid, &trial, p);
                if rt < r {
                    let gain = (r - rt) / r;
                    u = trial;
                    r = rt;
                    accepted = true;
                    step *= 1.5;
                    quiet = if gain < 1e-13 { quiet + 1 } else { 0 };
                    break;
                }
                step *= 0.5;
            }
            if !accepted || quiet >= 5 {
                settled = true;
                break;
            }
        }
        if !settled {
            debug!("gamma seed {seed} hit the iteration cap at {r}");
            converged = false;
        }
        per_seed.push(r);
        if r < best.0 {
            best = (r, u);
        }
    }
    Ok(GammaEstimate {
        value: best.0,
        per_seed,
        converged,
        minimizer: best.1,
    })
}

/// `‖u∘‖₂` and `‖u∘‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatumNorms {
    pub l2: f64,
    pub linf: f64,
}

impl DatumNorms {
    pub fn of(u0: &VectorField) -> Self {
        DatumNorms {
            l2: l2_norm(u0),
            linf: linf_norm(u0),
        }
    }
}

/// Left side of the smallness hypothesis, `|δ| ‖u∘‖∞^(2/(p-1)) ‖u∘‖₂^(2-p)`.
pub fn hypothesis_lhs(norms: DatumNorms, p: f64, delta: f64) -> f64 {
    delta.abs() * norms.linf.powf(2.0 / (p - 1.0)) * norms.l2.powf(2.0 - p)
}

/// The smallness hypothesis failed, so no extinction bound is available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisViolated {
    pub lhs: f64,
    pub gamma: f64,
}

impl fmt::Display for HypothesisViolated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "smallness hypothesis fails: |δ|‖u∘‖∞^(2/(p-1))‖u∘‖₂^(2-p) = {} >= γ = {}",
            self.lhs, self.gamma
        )
    }
}

impl std::error::Error for HypothesisViolated {}

/// Extinction-time bound `p'‖u∘‖₂^(2-p) / ((γ − lhs)(2 − p))`; infinite at `p = 2`.
pub fn t_star_bound(
    norms: DatumNorms,
    p: f64,
    delta: f64,
    gamma: f64,
) -> std::result::Result<f64, HypothesisViolated> {
    let lhs = hypothesis_lhs(norms, p, delta);
    if !(lhs < gamma) {
        return Err(HypothesisViolated { lhs, gamma });
    }
    if p >= 2.0 {
        return Ok(f64::INFINITY);
    }
    Ok(conjugate_exponent(p) * norms.l2.powf(2.0 - p) / ((gamma - lhs) * (2.0 - p)))
}

/// The `δ = 0` bound `p'‖u∘‖₂^(2-p) / ((2-p)γ)`.
pub fn t_star_without_convection(l2: f64, p: f64, gamma: f64) -> f64 {
    if p >= 2.0 {
        return f64::INFINITY;
    }
    conjugate_exponent(p) * l2.powf(2.0 - p) / ((2.0 - p) * gamma)
}

/// First sample time with `‖u(t)‖₂ ≤ threshold`.
pub fn extinction_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    traj.states
        .iter()
        .zip(&traj.times)
        .find(|(s, _)| l2_norm(s) <= threshold)
        .map(|(_, &t)| t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionReport {
    pub gamma: f64,
    pub hypothesis_lhs: f64,
    /// `None` when the hypothesis fails.
    pub t_star_bound: Option<f64>,
    pub measured_extinction: Option<f64>,
    /// Earliest sample time after which `‖u‖₂` never increases.
    pub monotone_from: Option<f64>,
}

pub fn extinction_report(traj: &Trajectory, gamma: f64, threshold: f64) -> ExtinctionReport {
    let p = traj.params.p;
    let delta = traj.params.delta;
    let norms = DatumNorms::of(traj.initial());
    let l2: Vec<f64> = traj.states.iter().map(l2_norm).collect();
    let mut start = l2.len() - 1;
    while start > 0 && l2[start - 1] >= l2[start] {
        start -= 1;
    }
    ExtinctionReport {
        gamma,
        hypothesis_lhs: hypothesis_lhs(norms, p, delta),
        t_star_bound: t_star_bound(norms, p, delta, gamma).ok(),
        measured_extinction: extinction_time(traj, threshold),
        monotone_from: (l2.len() > 1).then(|| traj.times[start]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    /// Largest `max(0, D⁺‖u‖₂ − rhs)`, in the units of the right side.
    pub max_violation: f64,
    pub at_time: f64,
    /// Largest `|rhs|` seen, for scale.
    pub rhs_scale: f64,
}

/// Forward differences of `‖u‖₂` against
/// `(1/p') ‖u‖₂^(p-1) (|δ| ‖u‖₂^(2-p) ‖u∘‖∞^(2/(p-1)) − γ)` at each sample.
pub fn ode_envelope_check(traj: &Trajectory, p: f64, delta: f64, gamma: f64, norms: DatumNorms) -> EnvelopeCheck {
    let l2: Vec<f64> = traj.states.iter().map(l2_norm).collect();
    let pc = conjugate_exponent(p);
    let drive = delta.abs() * norms.linf.powf(2.0 / (p - 1.0));
    let mut out = EnvelopeCheck {
        max_violation: 0.0,
        at_time: 0.0,
        rhs_scale: 0.0,
    };
    for n in 0..l2.len().saturating_sub(1) {
        let dt = traj.times[n + 1] - traj.times[n];
        let slope = (l2[n + 1] - l2[n]) / dt;
        let u = l2[n];
        let rhs = u.powf(p - 1.0) * (drive * u.powf(2.0 - p) - gamma) / pc;
        out.rhs_scale = out.rhs_scale.max(rhs.abs());
        let violation = slope - rhs;
        if violation > out.max_violation {
            out.max_violation = violation;
            out.at_time = traj.times[n];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianBoundReport {
    pub zeta: f64,
    pub c1: f64,
    /// `‖a^½ D²v‖₂`.
    pub lhs: f64,
    /// `C₁ ‖a^½ Δv‖₂`.
    pub c1_term: f64,
    /// `lhs − c1_term`.
    pub residual: f64,
    /// `max(residual, 0) ζ / (‖∇v‖_p^p + μ^(p/2)|Ω|)^½`.
    pub implied_c2: f64,
}

/// Default `ζ = p(2p − 3)/2`.
pub fn default_zeta(p: f64) -> f64 {
    0.5 * p * (2.0 * p - 3.0)
}

/// `C₁(ζ) = (p / (p(p−1)² − ζ))^½`.
pub fn hessian_bound_c1(p: f64, zeta: f64) -> Result<f64> {
    let limit = p * (p - 1.0) * (p - 1.0);
    if !(zeta > 0.0 && zeta < limit) {
        return Err(Error::ZetaOutOfRange { zeta, limit });
    }
    Ok((p / (limit - zeta)).sqrt())
}

pub fn hessian_bound_ratio(v: &VectorField, mu: f64, p: f64, zeta: Option<f64>) -> Result<HessianBoundReport> {
    if !(mu > 0.0) {
        return Err(Error::param("mu", "the weighted second-derivative check needs mu > 0"));
    }
    let zeta = zeta.unwrap_or_else(|| default_zeta(p));
    let c1 = hessian_bound_c1(p, zeta)?;
    let (lhs, lap) = weighted_hessian(v, mu, p);
    let c1_term = c1 * lap;
    let residual = lhs - c1_term;
    let denom = (CellGradient::new(v).power_sum(p) + mu.powf(0.5 * p)).sqrt();
    Ok(HessianBoundReport {
        zeta,
        c1,
        lhs,
        c1_term,
        residual,
        implied_c2: residual.max(0.0) * zeta / denom,
    })
}

/// Nonlinear Gronwall envelope
/// `{C^(1-θ) e^((1-θ)∫A) + (1-θ)∫ B(s) e^((1-θ)∫_s^t A) ds}^(1/(1-θ))`
/// at every sample time, with trapezoidal integrals from `times[0]`.
pub fn gronwall_envelope(c: f64, theta: f64, times: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if !(c >= 0.0) {
        return Err(Error::param("c", "must be >= 0"));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param("theta", format!("{theta} is outside [0, 1)")));
    }
    if a.len() != times.len() || b.len() != times.len() {
        return Err(Error::param("a/b", "sample counts differ from the time grid"));
    }
    if a.iter().chain(b).any(|&x| !(x >= 0.0)) {
        return Err(Error::param("a/b", "must be nonnegative"));
    }
    let k = 1.0 - theta;
    let mut int_a = vec![0.0; times.len()];
    for i in 1..times.len() {
        int_a[i] = int_a[i - 1] + 0.5 * (a[i] + a[i - 1]) * (times[i] - times[i - 1]);
    }
    let out = (0..times.len())
        .map(|i| {
            let mut forcing = 0.0;
            for j in 1..=i {
                let f = |m: usize| b[m] * (k * (int_a[i] - int_a[m])).exp();
                forcing += 0.5 * (f(j) + f(j - 1)) * (times[j] - times[j - 1]);
            }
            (c.powf(k) * (k * int_a[i]).exp() + k * forcing).powf(1.0 / k)
        })
        .collect();
    Ok(out)
}

/// Space-time monitors bounded in terms of `‖u∘‖∞` and `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBounds {
    /// `sup_t ‖u(t)‖₂`.
    pub sup_l2: f64,
    /// `‖∇u‖_{L^p(Ω_T)}` by the trapezoidal rule in time.
    pub grad_lp_space_time: f64,
}

pub fn energy_bounds(traj: &Trajectory) -> EnergyBounds {
    let p = traj.params.p;
    let recs = &traj.diagnostics;
    let sup_l2 = recs.iter().map(|r| r.l2_norm).fold(0.0, f64::max);
    let mut integral = 0.0;
    for w in recs.windows(2) {
        integral += 0.5 * (w[0].grad_lp.powf(p) + w[1].grad_lp.powf(p)) * (w[1].time - w[0].time);
    }
    EnergyBounds {
        sup_l2,
        grad_lp_space_time: integral.powf(1.0 / p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_initial, InitialCondition, Termination};
    use crate::stepper::{run, SchemeConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn heat(n_cells: usize, dt: f64, t_end: f64) -> SimParams {
        SimParams {
            p: 2.0,
            mu: 0.0,
            nu: 0.0,
            delta: 0.0,
            n_cells,
            dt,
            t_end,
            ..SimParams::default()
        }
    }

    fn sine_run(params: &SimParams) -> Trajectory {
        let u0 = make_initial(&InitialCondition::sine_all(params.dim, 1, 1.0), params.grid().unwrap()).unwrap();
        run(&u0, params, &SchemeConfig::default()).unwrap()
    }

    #[test]
    fn record_of_zero_field() {
        let grid = Grid::new(2, 7).unwrap();
        let params = SimParams { dim: 2, n_cells: 8, mu: 0.3, ..SimParams::default() };
        let r = compute_record(&VectorField::zeros(grid), 0.5, &params, 0.0, true);
        assert_eq!(r.l2_norm, 0.0);
        assert_eq!(r.grad_lp, 0.0);
        assert_eq!(r.weighted_flux, 0.0);
        assert_eq!(r.b_mu, 0.3);
        assert_eq!(r.d2_weighted, Some(0.0));
    }

    #[test]
    fn record_gradient_norm_of_sine() {
        // ‖∇ sin(πx)‖₂ = π/√2.
        let params = heat(128, 1e-3, 0.0);
        let u0 = make_initial(&InitialCondition::sine_all(1, 1, 1.0), params.grid().unwrap()).unwrap();
        let r = compute_record(&u0, 0.0, &params, 1.0, false);
        assert!((r.grad_l2 - PI / 2f64.sqrt()).abs() < 1e-3);
        assert!((r.weighted_flux - r.grad_l2).abs() < 1e-12);
    }

    #[test]
    fn energy_residual_of_zero_trajectory() {
        let params = heat(16, 1e-3, 0.005);
        let traj = run(&VectorField::zeros(params.grid().unwrap()), &params, &SchemeConfig::default()).unwrap();
        for n in 0..traj.len() - 1 {
            assert_eq!(energy_residual(&traj, n).unwrap(), 0.0);
        }
        assert!(energy_residual(&traj, traj.len() - 1).is_err());
    }

    #[test]
    fn heat_energy_residual_is_first_order() {
        let max_res = |dt: f64| sine_run(&heat(64, dt, 0.02)).max_step_residual();
        let (a, b) = (max_res(2e-4), max_res(1e-4));
        assert!((a / b - 2.0).abs() < 0.2, "ratio {}", a / b);
    }

    #[test]
    fn recomputed_residual_matches_recorded_one() {
        let params = SimParams { p: 1.7, mu: 0.05, n_cells: 32, dt: 1e-3, t_end: 0.01, ..SimParams::default() };
        let traj = sine_run(&params);
        for n in 0..traj.len() - 1 {
            let r = energy_residual(&traj, n).unwrap();
            assert!((r - traj.step_residuals[n]).abs() <= 1e-10 * r.max(1e-12));
        }
    }

    #[test]
    fn gamma_heat_eigenvalues() {
        let g1 = gamma_estimate(Grid::new(1, 63).unwrap(), 2.0, &[1, 2]).unwrap();
        assert!(g1.converged);
        assert!((g1.value - PI * PI).abs() < 5e-3 * PI * PI, "{}", g1.value);
        let h = 1.0 / 64.0;
        let discrete = 4.0 / (h * h) * (0.5 * PI * h).sin().powi(2);
        assert!((g1.value - discrete).abs() < 1e-6 * discrete);

        let g2 = gamma_estimate(Grid::new(2, 31).unwrap(), 2.0, &[3]).unwrap();
        assert!((g2.value - 2.0 * PI * PI).abs() < 1e-2 * 2.0 * PI * PI, "{}", g2.value);
    }

    #[test]
    fn gamma_refines_monotonically_for_p_below_two() {
        let vals: Vec<f64> = [15, 31, 63]
            .iter()
            .map(|&n| gamma_estimate(Grid::new(1, n).unwrap(), 1.7, &[7, 8]).unwrap().value)
            .collect();
        let d1 = (vals[1] - vals[0]).abs();
        let d2 = (vals[2] - vals[1]).abs();
        assert!(d2 < d1, "{vals:?}");
    }

    #[test]
    fn gamma_rejects_bad_input() {
        let grid = Grid::new(1, 7).unwrap();
        assert!(gamma_estimate(grid, 1.4, &[1]).is_err());
        assert!(gamma_estimate(grid, 1.8, &[]).is_err());
    }

    #[test]
    fn t_star_examples() {
        let norms = DatumNorms { l2: 1.0, linf: 1.0 };
        assert_relative_eq!(t_star_bound(norms, 1.6, 0.0, 1.0).unwrap(), 20.0 / 3.0, epsilon = 1e-12);
        for (l2, p, gamma) in [(0.3, 1.6, 4.2), (2.0, 1.75, 7.0), (0.01, 1.9, 9.0)] {
            let n = DatumNorms { l2, linf: 5.0 };
            assert_eq!(t_star_bound(n, p, 0.0, gamma).unwrap(), t_star_without_convection(l2, p, gamma));
        }
        let violated = t_star_bound(DatumNorms { l2: 1.0, linf: 2.0 }, 1.6, 1.0, 1.0);
        assert!(violated.is_err());
        assert!(violated.unwrap_err().to_string().contains("hypothesis"));
        assert_eq!(t_star_bound(norms, 2.0, 0.0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn t_star_monotone_in_gamma_and_delta() {
        let norms = DatumNorms { l2: 0.4, linf: 0.7 };
        let base = t_star_bound(norms, 1.7, 0.2, 5.0).unwrap();
        assert!(t_star_bound(norms, 1.7, 0.2, 6.0).unwrap() < base);
        assert!(t_star_bound(norms, 1.7, 0.4, 5.0).unwrap() > base);
        assert!(t_star_bound(norms, 1.7, -0.4, 5.0).unwrap() > base);
    }

    #[test]
    fn extinction_time_examples() {
        let params = heat(16, 1e-3, 0.01);
        let zero = run(&VectorField::zeros(params.grid().unwrap()), &params, &SchemeConfig::default()).unwrap();
        assert_eq!(extinction_time(&zero, 1e-10), Some(0.0));
        let traj = sine_run(&params);
        assert_eq!(extinction_time(&traj, 1e-10), None);
    }

    #[test]
    fn heat_threshold_crossing_time() {
        // ‖u(t)‖₂ = e^(−π²t)/√2 crosses 1e-10 at t = (10 ln 10 − ½ ln 2)/π².
        // The amplitude itself crosses at 10 ln 10/π², 1.5% later.
        let params = heat(64, 1e-3, 3.0);
        let traj = sine_run(&params);
        let expected = (10.0 * 10f64.ln() - 0.5 * 2f64.ln()) / (PI * PI);
        let t = extinction_time(&traj, 1e-10).unwrap();
        assert!(matches!(traj.termination, Termination::Extinct { .. }));
        assert!((t - expected).abs() < 0.02 * expected, "{t} vs {expected}");
    }

    #[test]
    fn envelope_holds_on_heat_decay() {
        let params = heat(64, 1e-4, 0.05);
        let traj = sine_run(&params);
        let gamma = gamma_estimate(params.grid().unwrap(), 2.0, &[1]).unwrap().value;
        let check = ode_envelope_check(&traj, 2.0, 0.0, gamma, DatumNorms::of(traj.initial()));
        assert_eq!(check.max_violation, 0.0);
        let small = heat(16, 1e-3, 0.01);
        let zero = run(&VectorField::zeros(small.grid().unwrap()), &small, &SchemeConfig::default()).unwrap();
        assert_eq!(ode_envelope_check(&zero, 1.7, 1.0, 5.0, DatumNorms::of(zero.initial())).max_violation, 0.0);
    }

    #[test]
    fn hessian_bound_constants() {
        assert!((hessian_bound_c1(1.8, default_zeta(1.8)).unwrap() - 1.7150).abs() < 1e-4);
        assert!(matches!(hessian_bound_c1(1.8, 1.2), Err(Error::ZetaOutOfRange { .. })));
        let grid = Grid::new(2, 15).unwrap();
        assert!(hessian_bound_ratio(&VectorField::zeros(grid), 0.0, 1.8, None).is_err());
    }

    #[test]
    fn hessian_bound_on_affine_field_has_zero_lhs() {
        // The only affine field vanishing on the boundary is zero.
        let grid = Grid::new(1, 15).unwrap();
        let zero = hessian_bound_ratio(&VectorField::zeros(grid), 0.5, 1.8, None).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert_eq!(zero.implied_c2, 0.0);
        let v = VectorField::from_fn(grid, |x| [(PI * x[0]).sin(), 0.0, 0.0]);
        let r = hessian_bound_ratio(&v, 0.5, 1.8, None).unwrap();
        // In one dimension D²v = Δv, so the C₁ term dominates.
        assert!(r.residual < 0.0);
    }

    #[test]
    fn gronwall_envelope_reduces_to_exponential() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let a = vec![2.0; times.len()];
        let b = vec![0.0; times.len()];
        let env = gronwall_envelope(3.0, 0.5, &times, &a, &b).unwrap();
        for (t, e) in times.iter().zip(&env) {
            assert!((e - 3.0 * (2.0 * t).exp()).abs() < 1e-10 * e);
        }
        // A = 0: {C^(1-θ) + (1-θ) B t}^(1/(1-θ}).
        let env = gronwall_envelope(1.0, 0.5, &times, &vec![0.0; times.len()], &vec![1.0; times.len()]).unwrap();
        for (t, e) in times.iter().zip(&env) {
            assert!((e - (1.0 + 0.5 * t).powi(2)).abs() < 1e-12);
        }
        assert!(gronwall_envelope(1.0, 1.0, &times, &a, &b).is_err());
    }

    #[test]
    fn energy_bounds_of_heat_run() {
        let traj = sine_run(&heat(64, 1e-3, 0.05));
        let e = energy_bounds(&traj);
        assert!((e.sup_l2 - 0.5f64.sqrt()).abs() < 1e-12);
        // ∫₀ᵀ ‖∇u‖₂² dt = (1 − e^(−2π²T))/4.
        let exact = ((1.0 - (-2.0 * PI * PI * 0.05f64).exp()) / 4.0).sqrt();
        assert!((e.grad_lp_space_time - exact).abs() < 1e-2 * exact);
    }

    proptest! {
        #[test]
        fn gronwall_envelope_dominates_its_inequality(c in 0.0f64..3.0, theta in 0.0f64..0.9, a0 in 0.0f64..2.0, b0 in 0.0f64..2.0) {
            // Φ solving Φ' = AΦ + BΦ^θ with Φ(0) = C sits below the envelope.
            let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.005).collect();
            let a = vec![a0; times.len()];
            let b = vec![b0; times.len()];
            let env = gronwall_envelope(c, theta, &times, &a, &b).unwrap();
            let mut phi = c;
            for i in 1..times.len() {
                let dt = times[i] - times[i - 1];
                let f = |x: f64| a0 * x + b0 * x.max(0.0).powf(theta);
                let k1 = f(phi);
                let k2 = f(phi + 0.5 * dt * k1);
                let k3 = f(phi + 0.5 * dt * k2);
                let k4 = f(phi + dt * k3);
                phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                prop_assert!(phi <= env[i] * (1.0 + 1e-3) + 1e-9);
            }
        }

        #[test]
        fn hypothesis_lhs_scales(delta in -3.0f64..3.0, l2 in 0.01f64..2.0, linf in 0.01f64..2.0, p in 1.51f64..2.0) {
            let n = DatumNorms { l2, linf };
            let lhs = hypothesis_lhs(n, p, delta);
            prop_assert!(lhs >= 0.0);
            prop_assert!((hypothesis_lhs(n, p, 2.0 * delta) - 2.0 * lhs).abs() <= 1e-12 * lhs.max(1e-300) * 4.0);
        }
    }
}
