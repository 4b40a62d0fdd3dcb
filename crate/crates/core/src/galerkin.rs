//! Sine-basis Galerkin approximation of the regularised system.
//!
//! Basis functions are `e_c ⊗ a_k` with `a_k(x) = Π_β √2 sin(k_β π x_β)`,
//! `k ∈ {1..M}^d`. Coefficients are ordered component-major:
//! `c[comp * S + k]` with `S = M^d` scalar modes.
//!
//! Integrals use the tensor trapezoid rule on `Q` intervals per axis. The
//! transport tensor `(J_μ(a_i)·∇a_l, a_j)` is precomputed densely; the diffusion
//! term is evaluated pseudo-spectrally at every right-hand-side call.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Grid, SimParams, VectorField};
use crate::operators::{transport_mollifier_radius, MollifierKernel};
use std::f64::consts::{PI, SQRT_2};

/// Sine eigenbasis of the Dirichlet Laplacian on the unit box, tabulated on a quadrature grid.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    dim: usize,
    modes_per_axis: usize,
    quad_intervals: usize,
    /// Multi-indices of the scalar modes.
    modes: Vec<[usize; 3]>,
    eigenvalues: Vec<f64>,
    /// Quadrature points (full grid including the boundary) and weights.
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    /// `values[k][pt] = a_k(x_pt)`.
    values: Vec<Vec<f64>>,
    /// `grads[k][β][pt] = ∂_β a_k(x_pt)`.
    grads: Vec<Vec<Vec<f64>>>,
}

fn multi_indices(dim: usize, m: usize) -> Vec<[usize; 3]> {
    let count = m.pow(dim as u32);
    (0..count)
        .map(|mut i| {
            let mut k = [0; 3];
            for axis in (0..dim).rev() {
                k[axis] = i % m + 1;
                i /= m;
            }
            k
        })
        .collect()
}

fn sine_mode(k: &[usize; 3], dim: usize, x: &[f64; 3]) -> f64 {
    (0..dim).map(|b| SQRT_2 * (k[b] as f64 * PI * x[b]).sin()).product()
}

fn sine_mode_derivative(k: &[usize; 3], dim: usize, x: &[f64; 3], axis: usize) -> f64 {
    (0..dim)
        .map(|b| {
            let w = k[b] as f64 * PI;
            if b == axis {
                SQRT_2 * w * (w * x[b]).cos()
            } else {
                SQRT_2 * (w * x[b]).sin()
            }
        })
        .product()
}

/// Normalised sine products with `modes_per_axis` modes per axis and
/// `quad_points` trapezoid intervals per axis.
pub fn build_basis(dim: usize, modes_per_axis: usize, quad_points: usize) -> Result<SpectralBasis> {
    if !(1..=3).contains(&dim) {
        return Err(Error::param("dim", format!("{dim} is not one of 1, 2, 3")));
    }
    if modes_per_axis == 0 {
        return Err(Error::param("modes_per_axis", "must be >= 1"));
    }
    let required = 2 * modes_per_axis + 1;
    if quad_points < required {
        return Err(Error::Aliasing {
            points: quad_points,
            modes: modes_per_axis,
            required,
        });
    }
    let q = quad_points;
    let per_axis = q + 1;
    let count = per_axis.pow(dim as u32);
    let mut points = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for mut i in 0..count {
        let mut x = [0.0; 3];
        let mut w = 1.0;
        for axis in (0..dim).rev() {
            let j = i % per_axis;
            i /= per_axis;
            x[axis] = j as f64 / q as f64;
            w *= if j == 0 || j == q { 0.5 } else { 1.0 } / q as f64;
        }
        points.push(x);
        weights.push(w);
    }
    let modes = multi_indices(dim, modes_per_axis);
    let eigenvalues = modes
        .iter()
        .map(|k| PI * PI * (0..dim).map(|b| (k[b] * k[b]) as f64).sum::<f64>())
        .collect();
    let values = modes
        .iter()
        .map(|k| points.iter().map(|x| sine_mode(k, dim, x)).collect())
        .collect();
    let grads = modes
        .iter()
        .map(|k| {
            (0..dim)
                .map(|b| points.iter().map(|x| sine_mode_derivative(k, dim, x, b)).collect())
                .collect()
        })
        .collect();
    Ok(SpectralBasis {
        dim,
        modes_per_axis,
        quad_intervals: q,
        modes,
        eigenvalues,
        points,
        weights,
        values,
        grads,
    })
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    pub fn quad_intervals(&self) -> usize {
        self.quad_intervals
    }

    pub fn scalar_modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    /// Eigenvalue of scalar mode `k`: `π² |k|²`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of coefficients, `d · M^d`.
    pub fn len(&self) -> usize {
        self.dim * self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Eigenvalue attached to coefficient `j`.
    pub fn eigenvalue_of(&self, j: usize) -> f64 {
        self.eigenvalues[j % self.modes.len()]
    }

    /// Quadrature `(a_i, a_j)` between scalar modes.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.integrate(|pt| self.values[i][pt] * self.values[j][pt])
    }

    /// Quadrature `(∇a_i, ∇a_j)` between scalar modes.
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        self.integrate(|pt| (0..self.dim).map(|b| self.grads[i][b][pt] * self.grads[j][b][pt]).sum())
    }

    fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(pt, w)| w * f(pt)).sum()
    }

    /// Scalar-mode values of `J_r(a_k)` on the quadrature grid (zero on the boundary).
    fn mollified_values(&self, radius: f64) -> Vec<Vec<f64>> {
        let q = self.quad_intervals;
        let grid = Grid::new(self.dim, q - 1).expect("q >= 3");
        let kernel = MollifierKernel::new(self.dim, grid.h(), radius);
        let per_axis = q + 1;
        // Map interior grid nodes to quadrature point indices.
        let to_point: Vec<usize> = (0..grid.len())
            .map(|node| {
                let idx = grid.multi_index(node);
                (0..self.dim).fold(0, |acc, b| acc * per_axis + idx[b] + 1)
            })
            .collect();
        self.values
            .par_iter()
            .map(|vals| {
                let interior: Vec<f64> = to_point.iter().map(|&pt| vals[pt]).collect();
                let smooth = if kernel.is_identity() { interior } else { kernel.apply(&grid, &interior) };
                let mut out = vec![0.0; vals.len()];
                for (node, &pt) in to_point.iter().enumerate() {
                    out[pt] = smooth[node];
                }
                out
            })
            .collect()
    }

    /// `∂_β v_comp` at the quadrature points, indexed `[comp * d + β][pt]`.
    fn gradient_at_points(&self, c: &[f64]) -> Vec<Vec<f64>> {
        let s = self.modes.len();
        let d = self.dim;
        let mut out = vec![vec![0.0; self.points.len()]; d * d];
        for comp in 0..d {
            for k in 0..s {
                let ck = c[comp * s + k];
                if ck == 0.0 {
                    continue;
                }
                for b in 0..d {
                    for (o, g) in out[comp * d + b].iter_mut().zip(&self.grads[k][b]) {
                        *o += ck * g;
                    }
                }
            }
        }
        out
    }
}

/// Coefficients at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub coeffs: Vec<f64>,
    pub time: f64,
}

/// Basis, parameters and precomputed transport tensor.
#[derive(Debug, Clone)]
pub struct GalerkinModel {
    basis: SpectralBasis,
    params: SimParams,
    /// `transport[((c * S + j) * S + i) * S + l] = ∫ J_μ(a_i) ∂_c a_l a_j`.
    transport: Vec<f64>,
}

impl GalerkinModel {
    pub fn new(basis: SpectralBasis, params: SimParams) -> Result<Self> {
        if !(params.mu > 0.0) {
            return Err(Error::param("mu", "the Galerkin system needs mu > 0"));
        }
        if params.dim != basis.dim {
            return Err(Error::param("dim", "basis and parameters disagree"));
        }
        let s = basis.modes.len();
        let d = basis.dim;
        let transport = if params.delta == 0.0 {
            Vec::new()
        } else {
            let radius = transport_mollifier_radius(params.mu, 1.0 / basis.quad_intervals as f64);
            let moll = basis.mollified_values(radius);
            let w = &basis.weights;
            (0..d * s)
                .into_par_iter()
                .flat_map_iter(|cj| {
                    let (c, j) = (cj / s, cj % s);
                    let basis = &basis;
                    let moll = &moll;
                    (0..s).flat_map(move |i| {
                        (0..s).map(move |l| {
                            let (mi, gl, aj) = (&moll[i], &basis.grads[l][c], &basis.values[j]);
                            (0..w.len()).map(|pt| w[pt] * mi[pt] * gl[pt] * aj[pt]).sum::<f64>()
                        })
                    })
                })
                .collect()
        };
        Ok(GalerkinModel {
            basis,
            params,
            transport,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// `d_ji = ((μ+|∇v|²)^((p-2)/2) ∇a_i, ∇a_j)` for the field with coefficients `c`.
    pub fn diffusion_matrix(&self, c: &[f64]) -> Vec<Vec<f64>> {
        let b = &self.basis;
        let coeff = self.coefficient_at_points(c);
        let s = b.modes.len();
        let n = b.len();
        let mut out = vec![vec![0.0; n]; n];
        for comp in 0..b.dim {
            for j in 0..s {
                for i in 0..s {
                    let v = b.integrate(|pt| {
                        coeff[pt] * (0..b.dim).map(|x| b.grads[i][x][pt] * b.grads[j][x][pt]).sum::<f64>()
                    });
                    out[comp * s + j][comp * s + i] = v;
                }
            }
        }
        out
    }

    fn coefficient_at_points(&self, c: &[f64]) -> Vec<f64> {
        let grads = self.basis.gradient_at_points(c);
        let (mu, p) = (self.params.mu, self.params.p);
        (0..self.basis.points.len())
            .map(|pt| {
                let s: f64 = grads.iter().map(|g| g[pt] * g[pt]).sum();
                (mu + s).powf(0.5 * (p - 2.0))
            })
            .collect()
    }

    /// Coefficient time derivative `ċ`.
    pub fn rhs(&self, c: &[f64]) -> Vec<f64> {
        let b = &self.basis;
        let d = b.dim;
        let s = b.modes.len();
        let (mu, p, nu, delta) = (self.params.mu, self.params.p, self.params.nu, self.params.delta);
        let grads = b.gradient_at_points(c);
        let npts = b.points.len();
        // Quadrature weight times diffusivity.
        let wa: Vec<f64> = (0..npts)
            .map(|pt| {
                let sq: f64 = grads.iter().map(|g| g[pt] * g[pt]).sum();
                b.weights[pt] * (mu + sq).powf(0.5 * (p - 2.0))
            })
            .collect();
        let mut out = vec![0.0; c.len()];
        for comp in 0..d {
            for j in 0..s {
                let mut flux = 0.0;
                for beta in 0..d {
                    let g = &grads[comp * d + beta];
                    let gj = &b.grads[j][beta];
                    flux += (0..npts).map(|pt| wa[pt] * g[pt] * gj[pt]).sum::<f64>();
                }
                out[comp * s + j] = -nu * b.eigenvalues[j] * c[comp * s + j] - flux;
            }
        }
        if delta != 0.0 {
            let t = &self.transport;
            for cd in 0..d {
                let ui = &c[cd * s..(cd + 1) * s];
                for comp in 0..d {
                    let vl = &c[comp * s..(comp + 1) * s];
                    for j in 0..s {
                        let base = (cd * s + j) * s * s;
                        let mut acc = 0.0;
                        for i in 0..s {
                            if ui[i] == 0.0 {
                                continue;
                            }
                            let row = &t[base + i * s..base + (i + 1) * s];
                            acc += ui[i] * row.iter().zip(vl).map(|(a, b)| a * b).sum::<f64>();
                        }
                        out[comp * s + j] -= delta * acc;
                    }
                }
            }
        }
        out
    }

    /// Energy rate `d/dt ½|c|² = c · ċ`.
    pub fn energy_rate(&self, c: &[f64]) -> f64 {
        c.iter().zip(self.rhs(c)).map(|(a, b)| a * b).sum()
    }
}

/// Coefficients `(u∘, a_j)` of a closed-form datum by quadrature.
pub fn project(basis: &SpectralBasis, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let s = basis.modes.len();
    let samples: Vec<[f64; 3]> = basis.points.iter().map(&f).collect();
    let mut out = vec![0.0; basis.len()];
    for comp in 0..basis.dim {
        for k in 0..s {
            out[comp * s + k] = basis.integrate(|pt| samples[pt][comp] * basis.values[k][pt]);
        }
    }
    out
}

/// Coefficients of a nodal field by the grid's own quadrature.
pub fn project_field(basis: &SpectralBasis, v: &VectorField) -> Result<Vec<f64>> {
    let grid = v.grid();
    if grid.dim() != basis.dim {
        return Err(Error::GridMismatch);
    }
    let s = basis.modes.len();
    let vol = grid.cell_volume();
    let mut out = vec![0.0; basis.len()];
    for k in 0..s {
        let samples: Vec<f64> = (0..grid.len())
            .map(|node| sine_mode(&basis.modes[k], basis.dim, &grid.coords(node)))
            .collect();
        for comp in 0..basis.dim {
            out[comp * s + k] = v.component(comp).iter().zip(&samples).map(|(a, b)| a * b).sum::<f64>() * vol;
        }
    }
    Ok(out)
}

/// Truncated series evaluated at the nodes of `grid`.
pub fn reconstruct(basis: &SpectralBasis, state: &GalerkinState, grid: Grid) -> Result<VectorField> {
    if grid.dim() != basis.dim {
        return Err(Error::GridMismatch);
    }
    let s = basis.modes.len();
    let samples: Vec<Vec<f64>> = basis
        .modes
        .iter()
        .map(|k| (0..grid.len()).map(|node| sine_mode(k, basis.dim, &grid.coords(node))).collect())
        .collect();
    let comps = (0..basis.dim)
        .map(|comp| {
            let mut out = vec![0.0; grid.len()];
            for (k, sample) in samples.iter().enumerate() {
                let ck = state.coeffs[comp * s + k];
                if ck != 0.0 {
                    for (o, a) in out.iter_mut().zip(sample) {
                        *o += ck * a;
                    }
                }
            }
            out
        })
        .collect();
    Ok(VectorField::from_components(grid, comps)?.with_time(state.time))
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct GalerkinRun {
    pub states: Vec<GalerkinState>,
    /// Per-step energy-identity defect
    /// `½(|c_{n+1}|² − |c_n|²) − ∫ c·ċ dt` (Simpson on a Hermite interpolant).
    pub step_defects: Vec<f64>,
}

impl GalerkinRun {
    /// `max_n |Σ_{m≤n} defect_m|`, the time-integrated energy-identity residual.
    pub fn energy_defect(&self) -> f64 {
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for d in &self.step_defects {
            acc += d;
            worst = worst.max(acc.abs());
        }
        worst
    }

    pub fn last(&self) -> &GalerkinState {
        self.states.last().expect("run holds the initial state")
    }
}

fn norm(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Classical RK4 on the coefficient ODE, storing every `stride`-th step and the last.
pub fn integrate(model: &GalerkinModel, c0: &[f64], dt: f64, t_end: f64, stride: usize) -> Result<GalerkinRun> {
    if c0.len() != model.basis.len() {
        return Err(Error::param("c0", "length differs from the basis"));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) || stride == 0 {
        return Err(Error::param("dt/t_end/stride", "need dt > 0, t_end >= 0, stride >= 1"));
    }
    let guard = 1e6 * norm(c0);
    let mut c = c0.to_vec();
    let mut f = model.rhs(&c);
    let mut t = 0.0;
    let mut states = vec![GalerkinState { coeffs: c.clone(), time: 0.0 }];
    let mut step_defects = Vec::new();
    let mut step = 0usize;
    let eps = 1e-9 * dt;
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + a * q).collect() };
    while t_end - t > eps {
        let h = dt.min(t_end - t);
        let k1 = &f;
        let k2 = model.rhs(&axpy(&c, 0.5 * h, k1));
        let k3 = model.rhs(&axpy(&c, 0.5 * h, &k2));
        let k4 = model.rhs(&axpy(&c, h, &k3));
        let next: Vec<f64> = (0..c.len())
            .map(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let f_next = model.rhs(&next);
        let mid: Vec<f64> = (0..c.len())
            .map(|i| 0.5 * (c[i] + next[i]) + h / 8.0 * (f[i] - f_next[i]))
            .collect();
        let rate = |x: &[f64], fx: &[f64]| x.iter().zip(fx).map(|(a, b)| a * b).sum::<f64>();
        let simpson = h / 6.0 * (rate(&c, &f) + 4.0 * model.energy_rate(&mid) + rate(&next, &f_next));
        let de = 0.5 * (norm(&next).powi(2) - norm(&c).powi(2));
        step_defects.push(de - simpson);

        step += 1;
        t = if t_end - (t + h) <= eps { t_end } else { step as f64 * dt };
        c = next;
        f = f_next;
        let size = norm(&c);
        if !size.is_finite() || (guard > 0.0 && size > guard) {
            return Err(Error::BlowUp { time: t, norm: size });
        }
        if step % stride == 0 || t_end - t <= eps {
            states.push(GalerkinState { coeffs: c.clone(), time: t });
        }
    }
    Ok(GalerkinRun { states, step_defects })
}
