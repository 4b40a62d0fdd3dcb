//! Grids, vector fields, parameters and trajectories.
//!
//! Fields are stored at the interior nodes of a uniform grid on the unit box
//! `(0,1)^d`; boundary nodes are implicit and always zero.

use std::f64::consts::PI;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

/// Continuum and scheme parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Growth exponent, `3/2 < p <= 2`.
    pub p: f64,
    /// Shift inside the diffusion coefficient.
    pub mu: f64,
    /// Added linear viscosity.
    pub nu: f64,
    /// Convection strength (signed).
    pub delta: f64,
    /// Time-weight exponent for the weighted regularity monitors.
    pub alpha: f64,
    pub dim: usize,
    /// Cells per axis; the grid has `n_cells - 1` interior nodes per axis.
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Space-time mollification radius used by the dual problem.
    pub eta: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        let p = 1.8;
        SimParams {
            p,
            mu: 0.1,
            nu: 0.0,
            delta: 1.0,
            alpha: 1.1 * alpha_threshold(p),
            dim: 1,
            n_cells: 64,
            dt: 1e-4,
            t_end: 0.1,
            eta: 0.0625,
        }
    }
}

/// Smallest admissible weight exponent, `(4 - p) / p`.
pub fn alpha_threshold(p: f64) -> f64 {
    (4.0 - p) / p
}

/// Hölder conjugate `p' = p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.5 && self.p <= 2.0) {
            return Err(Error::param("p", format!("{} is outside (3/2, 2]", self.p)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", format!("{} must be finite and >= 0", self.mu)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::param("nu", format!("{} must be finite and >= 0", self.nu)));
        }
        if !self.delta.is_finite() {
            return Err(Error::param("delta", "must be finite"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::param("dim", format!("{} is not one of 1, 2, 3", self.dim)));
        }
        if self.n_cells < 3 {
            return Err(Error::param("n_cells", format!("{} < 3", self.n_cells)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("{} must be > 0", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("{} must be >= 0", self.t_end)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param("eta", format!("{} must be > 0", self.eta)));
        }
        Ok(())
    }

    /// Whether `alpha` lies in the range where the weighted bounds are known to hold.
    pub fn alpha_in_theory(&self) -> bool {
        self.alpha > alpha_threshold(self.p)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n_cells.saturating_sub(1))
    }

    pub fn p_conjugate(&self) -> f64 {
        conjugate_exponent(self.p)
    }
}

/// Uniform grid of interior nodes on the unit box, `h = 1/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param("dim", format!("{dim} is not one of 1, 2, 3")));
        }
        if n < 2 {
            return Err(Error::param("n", format!("need at least 2 interior nodes, got {n}")));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one node, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        1.0
    }

    /// Row-major stride of `axis` (the last axis is contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Position of `node` along `axis`, in `0..n`.
    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.n
    }

    pub fn multi_index(&self, node: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for (axis, slot) in idx.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_index(node, axis);
        }
        idx
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .enumerate()
            .map(|(axis, &i)| i * self.stride(axis))
            .sum()
    }

    /// Physical coordinates of a node; unused axes are zero.
    pub fn coords(&self, node: usize) -> [f64; 3] {
        let h = self.h();
        let idx = self.multi_index(node);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = (idx[axis] + 1) as f64 * h;
        }
        x
    }

    /// Neighbour along `axis`, or `None` when it is a boundary node.
    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, upward: bool) -> Option<usize> {
        let i = self.axis_index(node, axis);
        let s = self.stride(axis);
        if upward {
            (i + 1 < self.n).then(|| node + s)
        } else {
            (i > 0).then(|| node - s)
        }
    }

    /// Distance from a node to the boundary of the box.
    pub fn boundary_distance(&self, node: usize) -> f64 {
        let x = self.coords(node);
        (0..self.dim)
            .map(|a| x[a].min(1.0 - x[a]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// An `R^d`-valued field sampled at the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
    time: Option<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
            time: None,
        }
    }

    pub fn from_components(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::param(
                "components",
                format!("expected {} components, got {}", grid.dim(), components.len()),
            ));
        }
        if let Some(bad) = components.iter().find(|c| c.len() != grid.len()) {
            return Err(Error::param(
                "components",
                format!("component has {} values, grid has {} nodes", bad.len(), grid.len()),
            ));
        }
        Ok(VectorField {
            grid,
            components,
            time: None,
        })
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let mut field = VectorField::zeros(grid);
        for node in 0..grid.len() {
            let value = f(&grid.coords(node));
            for (c, comp) in field.components.iter_mut().enumerate() {
                comp[node] = value[c];
            }
        }
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn set_time(&mut self, t: Option<f64>) {
        self.time = t;
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.components
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn magnitude_sq(&self, node: usize) -> f64 {
        self.components.iter().map(|c| c[node] * c[node]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    pub fn ensure_same_grid(&self, other: &VectorField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Discrete L² inner product `Σ_i u_i·w_i h^d`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let sum: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn scaled(&self, factor: f64) -> VectorField {
        let mut out = self.clone();
        out.components
            .iter_mut()
            .flatten()
            .for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &VectorField) -> Result<VectorField> {
        self.ensure_same_grid(other)?;
        let mut out = self.clone();
        for (a, b) in out.components.iter_mut().zip(&other.components) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.add_scaled(-1.0, other)
    }
}

/// One separable sine term `amplitude · Π_β sin(k_β π x_β)` in one component.
#[derive(Debug, Clone, PartialEq)]
pub struct SineMode {
    pub component: usize,
    pub wavenumbers: Vec<usize>,
    pub amplitude: f64,
}

/// Descriptor of an initial datum.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// Sum of separable sine products (smooth, vanishing on the boundary).
    Sine(Vec<SineMode>),
    /// `amplitude` on the closed sub-box `[lower, upper]^d`, zero elsewhere.
    Indicator {
        lower: f64,
        upper: f64,
        amplitude: Vec<f64>,
    },
    /// Nodal values supplied verbatim, one array per component.
    Nodal(Vec<Vec<f64>>),
}

impl InitialCondition {
    /// `amplitude · sin(k π x_1) ··· sin(k π x_d)` in every component.
    pub fn sine_all(dim: usize, k: usize, amplitude: f64) -> Self {
        InitialCondition::Sine(
            (0..dim)
                .map(|c| SineMode {
                    component: c,
                    wavenumbers: vec![k; dim],
                    amplitude,
                })
                .collect(),
        )
    }
}

pub fn make_initial(spec: &InitialCondition, grid: Grid) -> Result<VectorField> {
    let d = grid.dim();
    match spec {
        InitialCondition::Zero => Ok(VectorField::zeros(grid)),
        InitialCondition::Sine(modes) => {
            let mut field = VectorField::zeros(grid);
            for mode in modes {
                if !mode.amplitude.is_finite() {
                    return Err(Error::param("amplitude", "non-finite amplitude"));
                }
                if mode.component >= d {
                    return Err(Error::param(
                        "component",
                        format!("component {} out of range for d = {d}", mode.component),
                    ));
                }
                if mode.wavenumbers.len() != d || mode.wavenumbers.contains(&0) {
                    return Err(Error::param(
                        "mode",
                        format!("need {d} positive wavenumbers, got {:?}", mode.wavenumbers),
                    ));
                }
                for node in 0..grid.len() {
                    let x = grid.coords(node);
                    let value: f64 = mode
                        .wavenumbers
                        .iter()
                        .enumerate()
                        .map(|(a, &k)| (k as f64 * PI * x[a]).sin())
                        .product();
                    field.components[mode.component][node] += mode.amplitude * value;
                }
            }
            Ok(field)
        }
        InitialCondition::Indicator {
            lower,
            upper,
            amplitude,
        } => {
            if amplitude.len() != d {
                return Err(Error::param(
                    "amplitude",
                    format!("expected {d} amplitudes, got {}", amplitude.len()),
                ));
            }
            if amplitude.iter().any(|a| !a.is_finite()) {
                return Err(Error::param("amplitude", "non-finite amplitude"));
            }
            if !(0.0 <= *lower && lower < upper && *upper <= 1.0) {
                return Err(Error::param(
                    "lower",
                    format!("sub-box [{lower}, {upper}] is not inside [0, 1]"),
                ));
            }
            // Nodes sit at multiples of h; compare with a little slack so that
            // bounds given as exact multiples of h are inclusive.
            let eps = 1e-12;
            Ok(VectorField::from_fn(grid, |x| {
                let inside = (0..d).all(|a| x[a] >= lower - eps && x[a] <= upper + eps);
                let mut out = [0.0; 3];
                if inside {
                    out[..d].copy_from_slice(amplitude);
                }
                out
            }))
        }
        InitialCondition::Nodal(values) => {
            if values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::param("amplitude", "non-finite nodal value"));
            }
            VectorField::from_components(grid, values.clone())
        }
    }
}

/// Discrete `L^q` norm of the Euclidean magnitude, `(Σ_i |f_i|^q h^d)^(1/q)`;
/// `q = f64::INFINITY` gives the nodal maximum.
pub fn lp_norm(f: &VectorField, q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent(q));
    }
    let n = f.grid.len();
    if q.is_infinite() {
        let max_sq = (0..n).map(|i| f.magnitude_sq(i)).fold(0.0, f64::max);
        return Ok(max_sq.sqrt());
    }
    let sum: f64 = if q == 2.0 {
        (0..n).map(|i| f.magnitude_sq(i)).sum()
    } else {
        (0..n).map(|i| f.magnitude_sq(i).powf(0.5 * q)).sum()
    };
    Ok((sum * f.grid.cell_volume()).powf(1.0 / q))
}

/// `‖f‖₂`; never fails.
pub fn l2_norm(f: &VectorField) -> f64 {
    lp_norm(f, 2.0).expect("q = 2 is admissible")
}

/// `‖f‖∞`; never fails.
pub fn linf_norm(f: &VectorField) -> f64 {
    lp_norm(f, f64::INFINITY).expect("q = ∞ is admissible")
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    /// `‖v‖₂` dropped below the extinction threshold at this time.
    Extinct { time: f64 },
    Aborted { time: f64, reason: String },
}

/// Time-indexed snapshots of a run plus per-snapshot monitors.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: SimParams,
    pub times: Vec<f64>,
    pub states: Vec<VectorField>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Energy-identity residual of every time step (not only stored ones).
    pub step_residuals: Vec<f64>,
    /// Number of time steps between stored snapshots.
    pub stride: usize,
    pub termination: Termination,
}

impl Trajectory {
    pub fn initial(&self) -> &VectorField {
        &self.states[0]
    }

    pub fn last(&self) -> &VectorField {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds t = 0")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the stored sample at time `t` (to within a fraction of a step).
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.params.dt.max(f64::MIN_POSITIVE) + 1e-14;
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn max_step_residual(&self) -> f64 {
        self.step_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Result of [`weighted_sup_monitor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSup {
    pub value: f64,
    /// Sample time at which the supremum is attained.
    pub at_time: f64,
    /// `false` when `alpha <= (4-p)/p`; the value is still computed.
    pub in_theory: bool,
}

/// `sup_{t>0} t^(α/(4-p)) ‖∇u(t)‖₂` over the stored samples.
pub fn weighted_sup_monitor(traj: &Trajectory, alpha: f64, p: f64) -> WeightedSup {
    let exponent = alpha / (4.0 - p);
    let mut best = WeightedSup {
        value: 0.0,
        at_time: 0.0,
        in_theory: alpha > alpha_threshold(p),
    };
    for record in traj.diagnostics.iter().filter(|r| r.time > 0.0) {
        let value = record.time.powf(exponent) * record.grad_l2;
        if value > best.value {
            best.value = value;
            best.at_time = record.time;
        }
    }
    best
}
