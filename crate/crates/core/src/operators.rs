//! Discrete spatial operators on the interior-node grid.
//!
//! Two discrete gradients coexist:
//!
//! * [`gradient`]: nodal, centred differences. Feeds the diffusion
//!   coefficient, convection and the mollified dual coefficients.
//! * [`CellGradient`]: forward differences on the `(n+1)^d` cells between
//!   nodes (boundary included). Its squared `L²` norm is exactly the Dirichlet
//!   form of the flux operator with unit diffusivity, so energy and Sobolev
//!   quantities built on it match the scheme.
//!
//! The flux operator [`FaceDiffusivity::divergence`] is written in conservative
//! face form and satisfies summation by parts exactly:
//! `⟨∇·(k∇u), w⟩_h = -D_k(u, w)` for all grid functions (zero on the boundary).

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Grid, Trajectory, VectorField};

/// Floor applied to `μ + |∇v|²` when it is exactly zero.
pub const DEGENERATE_FLOOR: f64 = 1e-30;

/// Radius of the transport mollifier `J_μ`: `max(μ, 2h)`.
pub fn transport_mollifier_radius(mu: f64, h: f64) -> f64 {
    mu.max(2.0 * h)
}

/// Nodal gradient tensor `∂_β v_i` from centred differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: Grid,
    /// `tensor[i * d + β][node] = ∂_β v_i`.
    tensor: Vec<Vec<f64>>,
    magnitude_sq: Vec<f64>,
}

impl GradientField {
    fn from_tensor(grid: Grid, tensor: Vec<Vec<f64>>) -> Self {
        let mut magnitude_sq = vec![0.0; grid.len()];
        for entry in &tensor {
            for (m, g) in magnitude_sq.iter_mut().zip(entry) {
                *m += g * g;
            }
        }
        GradientField {
            grid,
            tensor,
            magnitude_sq,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `∂_axis v_component` at every node.
    pub fn entry(&self, component: usize, axis: usize) -> &[f64] {
        &self.tensor[component * self.grid.dim() + axis]
    }

    /// `|∇v|² = Σ_{i,β} (∂_β v_i)²` at every node.
    pub fn magnitude_sq(&self) -> &[f64] {
        &self.magnitude_sq
    }
}

/// Centred difference of a scalar nodal array along `axis` (zero ghosts).
fn centered_difference(grid: &Grid, u: &[f64], axis: usize) -> Vec<f64> {
    let inv = 0.5 / grid.h();
    (0..grid.len())
        .map(|node| {
            let up = grid.neighbor(node, axis, true).map_or(0.0, |j| u[j]);
            let down = grid.neighbor(node, axis, false).map_or(0.0, |j| u[j]);
            (up - down) * inv
        })
        .collect()
}

pub fn gradient(v: &VectorField) -> GradientField {
    let grid = *v.grid();
    let d = grid.dim();
    let mut tensor = Vec::with_capacity(d * d);
    for comp in v.components() {
        for axis in 0..d {
            tensor.push(centered_difference(&grid, comp, axis));
        }
    }
    GradientField::from_tensor(grid, tensor)
}

/// Nodal diffusion coefficient and the number of degenerate nodes that were floored.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<f64>,
    pub clamped: usize,
}

impl CoefficientField {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// `(μ + s)^((p-2)/2)` with the degenerate floor; the flag reports flooring.
#[inline]
pub fn coefficient_value(mu: f64, p: f64, grad_sq: f64) -> (f64, bool) {
    let base = mu + grad_sq;
    if base == 0.0 {
        (DEGENERATE_FLOOR.powf(0.5 * (p - 2.0)), true)
    } else {
        (base.powf(0.5 * (p - 2.0)), false)
    }
}

/// `a(μ, v) = (μ + |∇v|²)^((p-2)/2)` at every node.
pub fn diffusion_coefficient(g: &GradientField, mu: f64, p: f64) -> CoefficientField {
    coefficient_from_magnitudes(g.magnitude_sq(), mu, p)
}

pub(crate) fn coefficient_from_magnitudes(mag_sq: &[f64], mu: f64, p: f64) -> CoefficientField {
    let mut clamped = 0;
    let values = mag_sq
        .iter()
        .map(|&s| {
            let (value, floored) = coefficient_value(mu, p, s);
            clamped += floored as usize;
            value
        })
        .collect();
    CoefficientField { values, clamped }
}

/// Face diffusivities `k = shift + ½(a_i + a_j)` built from nodal values.
///
/// A face touching the boundary averages its interior node with a boundary
/// value. Without explicit boundary values the interior value is reused.
#[derive(Debug, Clone)]
pub struct FaceDiffusivity {
    grid: Grid,
    nodal: Vec<f64>,
    /// `boundary[2 * axis + upward][node]`, read only at boundary-adjacent nodes.
    boundary: Option<Vec<Vec<f64>>>,
    shift: f64,
}

impl FaceDiffusivity {
    pub fn new(grid: Grid, nodal: Vec<f64>, shift: f64) -> Self {
        debug_assert_eq!(nodal.len(), grid.len());
        FaceDiffusivity {
            grid,
            nodal,
            boundary: None,
            shift,
        }
    }

    pub fn uniform(grid: Grid, value: f64) -> Self {
        FaceDiffusivity::new(grid, vec![0.0; grid.len()], value)
    }

    /// `a(μ, ·)` at the nodes and at the boundary points, the latter from the
    /// gradient tensor extrapolated quadratically (`3G₁ − 3G₂ + G₃`) along the
    /// normal. Lower-order extrapolation leaves an `O(h)` flux error next to
    /// the boundary.
    pub fn from_gradient(g: &GradientField, mu: f64, p: f64, shift: f64) -> (Self, usize) {
        let grid = *g.grid();
        let coeff = diffusion_coefficient(g, mu, p);
        let mut clamped = coeff.clamped;
        let mut boundary = vec![vec![0.0; grid.len()]; 2 * grid.dim()];
        for axis in 0..grid.dim() {
            for (side, upward) in [false, true].into_iter().enumerate() {
                let out = &mut boundary[2 * axis + side];
                for node in 0..grid.len() {
                    if grid.neighbor(node, axis, upward).is_some() {
                        continue;
                    }
                    let second = grid.neighbor(node, axis, !upward);
                    let third = second.and_then(|j| grid.neighbor(j, axis, !upward));
                    let s: f64 = g
                        .tensor
                        .iter()
                        .map(|e| {
                            let b = match (second, third) {
                                (Some(j), Some(k)) => 3.0 * (e[node] - e[j]) + e[k],
                                (Some(j), None) => 2.0 * e[node] - e[j],
                                _ => e[node],
                            };
                            b * b
                        })
                        .sum();
                    let (value, floored) = coefficient_value(mu, p, s);
                    clamped += floored as usize;
                    out[node] = value;
                }
            }
        }
        let faces = FaceDiffusivity {
            grid,
            nodal: coeff.values,
            boundary: Some(boundary),
            shift,
        };
        (faces, clamped)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    #[inline]
    fn boundary_face(&self, node: usize, axis: usize, upward: bool) -> f64 {
        let a = self.nodal[node];
        match &self.boundary {
            Some(b) => self.shift + 0.5 * (a + b[2 * axis + upward as usize][node]),
            None => self.shift + a,
        }
    }

    /// Diffusivity on the face between `node` and its upper neighbour along `axis`.
    #[inline]
    pub fn upper(&self, node: usize, axis: usize) -> f64 {
        match self.grid.neighbor(node, axis, true) {
            Some(j) => self.shift + 0.5 * (self.nodal[node] + self.nodal[j]),
            None => self.boundary_face(node, axis, true),
        }
    }

    #[inline]
    pub fn lower(&self, node: usize, axis: usize) -> f64 {
        match self.grid.neighbor(node, axis, false) {
            Some(j) => self.upper(j, axis),
            None => self.boundary_face(node, axis, false),
        }
    }

    /// `shift + max a` over nodes and boundary points.
    pub fn max_nodal(&self) -> f64 {
        let nodal = self.nodal.iter().copied().fold(0.0, f64::max);
        let boundary = self
            .boundary
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(0.0, f64::max);
        self.shift + nodal.max(boundary)
    }

    /// `∇·(k ∇u)` in conservative flux-difference form.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        (0..grid.len())
            .map(|node| {
                let mut acc = 0.0;
                for axis in 0..grid.dim() {
                    let up = grid.neighbor(node, axis, true).map_or(0.0, |j| u[j]);
                    let down = grid.neighbor(node, axis, false).map_or(0.0, |j| u[j]);
                    acc += self.upper(node, axis) * (up - u[node])
                        - self.lower(node, axis) * (u[node] - down);
                }
                acc * inv_h2
            })
            .collect()
    }

    /// `D_k(u, w) = Σ_faces k (Du)(Dw) h^d`.
    pub fn dirichlet_form(&self, u: &[f64], w: &[f64]) -> f64 {
        let grid = &self.grid;
        let mut sum = 0.0;
        for node in 0..grid.len() {
            for axis in 0..grid.dim() {
                let (du, dw) = match grid.neighbor(node, axis, true) {
                    Some(j) => (u[j] - u[node], w[j] - w[node]),
                    None => (-u[node], -w[node]),
                };
                sum += self.upper(node, axis) * du * dw;
                if grid.neighbor(node, axis, false).is_none() {
                    sum += self.lower(node, axis) * u[node] * w[node];
                }
            }
        }
        sum * grid.cell_volume() / (grid.h() * grid.h())
    }

    /// Sum of the Dirichlet form over the components of a vector field.
    pub fn dirichlet_energy(&self, v: &VectorField) -> f64 {
        v.components()
            .iter()
            .map(|c| self.dirichlet_form(c, c))
            .sum()
    }
}

/// `+∇·((μ + |∇v|²)^((p-2)/2) ∇v)` per component.
pub fn p_laplacian_apply(v: &VectorField, mu: f64, p: f64) -> VectorField {
    let grid = *v.grid();
    let (faces, clamped) = FaceDiffusivity::from_gradient(&gradient(v), mu, p, 0.0);
    if clamped > 0 {
        log::debug!("{clamped} degenerate nodes floored in p-Laplacian");
    }
    let comps = v.components().iter().map(|c| faces.divergence(c)).collect();
    VectorField::from_components(grid, comps).expect("same layout as input")
}

/// Standard `(2d+1)`-point Laplacian with zero ghosts.
pub fn laplacian(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let comps = v
        .components()
        .iter()
        .map(|u| {
            (0..grid.len())
                .map(|node| {
                    let mut acc = -2.0 * grid.dim() as f64 * u[node];
                    for axis in 0..grid.dim() {
                        acc += grid.neighbor(node, axis, true).map_or(0.0, |j| u[j]);
                        acc += grid.neighbor(node, axis, false).map_or(0.0, |j| u[j]);
                    }
                    acc * inv_h2
                })
                .collect()
        })
        .collect();
    VectorField::from_components(grid, comps).expect("same layout as input")
}

/// `(w·∇)v` with centred differences on `v`.
pub fn convection(w: &VectorField, v: &VectorField) -> Result<VectorField> {
    w.ensure_same_grid(v)?;
    let grid = *v.grid();
    let d = grid.dim();
    let inv = 0.5 / grid.h();
    let comps = v
        .components()
        .iter()
        .map(|u| {
            (0..grid.len())
                .map(|node| {
                    let mut acc = 0.0;
                    for axis in 0..d {
                        let up = grid.neighbor(node, axis, true).map_or(0.0, |j| u[j]);
                        let down = grid.neighbor(node, axis, false).map_or(0.0, |j| u[j]);
                        acc += w.component(axis)[node] * (up - down);
                    }
                    acc * inv
                })
                .collect()
        })
        .collect();
    VectorField::from_components(grid, comps)
}

/// Dual drift `φ ∇·w + (w·∇)φ` in split form with neighbour-averaged factors:
///
/// ```text
/// Σ_β [ ½(φ⁺+φ⁻)(w_β⁺-w_β⁻) + ½(w_β⁺+w_β⁻)(φ⁺-φ⁻) ] / 2h
/// ```
///
/// which equals the centred difference of `w_β φ` node by node, so this operator
/// is exactly the negative transpose of [`convection`] with the same `w`.
pub fn split_transport(w: &VectorField, phi: &VectorField) -> Result<VectorField> {
    w.ensure_same_grid(phi)?;
    let grid = *phi.grid();
    let d = grid.dim();
    let inv = 0.5 / grid.h();
    let comps = phi
        .components()
        .iter()
        .map(|f| {
            (0..grid.len())
                .map(|node| {
                    let mut acc = 0.0;
                    for axis in 0..d {
                        let wa = w.component(axis);
                        let (f_up, w_up) = grid
                            .neighbor(node, axis, true)
                            .map_or((0.0, 0.0), |j| (f[j], wa[j]));
                        let (f_dn, w_dn) = grid
                            .neighbor(node, axis, false)
                            .map_or((0.0, 0.0), |j| (f[j], wa[j]));
                        let reaction = 0.5 * (f_up + f_dn) * (w_up - w_dn);
                        let advection = 0.5 * (w_up + w_dn) * (f_up - f_dn);
                        acc += reaction + advection;
                    }
                    acc * inv
                })
                .collect()
        })
        .collect();
    VectorField::from_components(grid, comps)
}

/// Centred divergence `∇·w`.
pub fn divergence(w: &VectorField) -> Vec<f64> {
    let grid = *w.grid();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let part = centered_difference(&grid, w.component(axis), axis);
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

/// Forward differences on the cells between nodes, boundary cells included.
///
/// Cell `m ∈ {0..n}^d` spans the full-grid positions `m` and `m + e_β`
/// (positions `0` and `n+1` are boundary nodes carrying zero).
#[derive(Debug, Clone)]
pub struct CellGradient {
    grid: Grid,
    /// `diffs[c][β][cell] = (v_c(m + e_β) - v_c(m)) / h`.
    diffs: Vec<Vec<Vec<f64>>>,
}

impl CellGradient {
    pub fn new(v: &VectorField) -> Self {
        let grid = *v.grid();
        let d = grid.dim();
        let n = grid.n();
        let cells = (n + 1).pow(d as u32);
        let inv_h = 1.0 / grid.h();
        let diffs = v
            .components()
            .iter()
            .map(|u| {
                (0..d)
                    .map(|axis| {
                        (0..cells)
                            .map(|cell| {
                                let m = cell_multi_index(cell, n, d);
                                let lo = full_value(&grid, u, &m, None);
                                let hi = full_value(&grid, u, &m, Some(axis));
                                (hi - lo) * inv_h
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CellGradient { grid, diffs }
    }

    pub fn cell_count(&self) -> usize {
        (self.grid.n() + 1).pow(self.grid.dim() as u32)
    }

    /// `|∇v|²` on every cell.
    pub fn magnitude_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cell_count()];
        for comp in &self.diffs {
            for axis in comp {
                for (o, g) in out.iter_mut().zip(axis) {
                    *o += g * g;
                }
            }
        }
        out
    }

    /// `Σ_cells |∇v|^q h^d`, i.e. `‖∇v‖_q^q`.
    pub fn power_sum(&self, q: f64) -> f64 {
        let mags = self.magnitude_sq();
        let sum: f64 = if q == 2.0 {
            mags.iter().sum()
        } else {
            mags.iter().map(|s| s.powf(0.5 * q)).sum()
        };
        sum * self.grid.cell_volume()
    }

    /// `‖∇v‖_q` on cells.
    pub fn norm(&self, q: f64) -> f64 {
        self.power_sum(q).powf(1.0 / q)
    }

    /// Nodal gradient of `u ↦ Σ_cells |∇u|^q h^d` (scalar field, one component).
    pub(crate) fn power_sum_gradient(&self, q: f64) -> Vec<f64> {
        let grid = self.grid;
        let d = grid.dim();
        let n = grid.n();
        let mags = self.magnitude_sq();
        let scale = q * grid.cell_volume() / grid.h();
        let weights: Vec<f64> = mags
            .iter()
            .map(|&s| if s > 0.0 { s.powf(0.5 * q - 1.0) } else { 0.0 })
            .collect();
        let mut out = vec![0.0; grid.len()];
        for (node, slot) in out.iter_mut().enumerate() {
            let idx = grid.multi_index(node);
            // Full-grid position of the node is idx + 1 on every axis.
            let mut acc = 0.0;
            for axis in 0..d {
                let mut below = [0; 3];
                let mut at = [0; 3];
                for a in 0..d {
                    at[a] = idx[a] + 1;
                    below[a] = idx[a] + 1;
                }
                below[axis] -= 1;
                let c_below = cell_linear_index(&below, n, d);
                let c_at = cell_linear_index(&at, n, d);
                let diffs = &self.diffs[0][axis];
                acc += weights[c_below] * diffs[c_below] - weights[c_at] * diffs[c_at];
            }
            *slot = acc * scale;
        }
        out
    }
}

fn cell_multi_index(cell: usize, n: usize, d: usize) -> [usize; 3] {
    let mut m = [0; 3];
    let mut rem = cell;
    for axis in (0..d).rev() {
        m[axis] = rem % (n + 1);
        rem /= n + 1;
    }
    m
}

fn cell_linear_index(m: &[usize; 3], n: usize, d: usize) -> usize {
    (0..d).fold(0, |acc, a| acc * (n + 1) + m[a])
}

/// Value of `u` at full-grid position `m` (optionally shifted by `e_axis`).
fn full_value(grid: &Grid, u: &[f64], m: &[usize; 3], shift: Option<usize>) -> f64 {
    let n = grid.n();
    let mut idx = [0usize; 3];
    for a in 0..grid.dim() {
        let pos = m[a] + usize::from(shift == Some(a));
        if pos == 0 || pos == n + 1 {
            return 0.0;
        }
        idx[a] = pos - 1;
    }
    u[grid.node(&idx[..grid.dim()])]
}

/// Second derivatives of a vector field by second differences (zero ghosts).
#[derive(Debug, Clone)]
pub struct Hessian {
    /// `Σ_{i,α,β} (∂_αβ v_i)²` per node.
    pub frobenius_sq: Vec<f64>,
    /// `Σ_i (Δv_i)²` per node.
    pub laplacian_sq: Vec<f64>,
}

pub fn hessian(v: &VectorField) -> Hessian {
    let grid = *v.grid();
    let d = grid.dim();
    let h2 = grid.h() * grid.h();
    let mut frobenius_sq = vec![0.0; grid.len()];
    let mut laplacian_sq = vec![0.0; grid.len()];
    let at = |u: &[f64], node: Option<usize>| node.map_or(0.0, |j| u[j]);
    for u in v.components() {
        for node in 0..grid.len() {
            let mut lap = 0.0;
            for a in 0..d {
                let up = grid.neighbor(node, a, true);
                let dn = grid.neighbor(node, a, false);
                let second = (at(u, up) - 2.0 * u[node] + at(u, dn)) / h2;
                lap += second;
                frobenius_sq[node] += second * second;
                for b in (a + 1)..d {
                    // Diagonal neighbours exist only when both axial steps do.
                    let diag = |first: Option<usize>, upward: bool| {
                        first.and_then(|j| grid.neighbor(j, b, upward))
                    };
                    let mixed = (at(u, diag(up, true)) - at(u, diag(up, false))
                        - at(u, diag(dn, true))
                        + at(u, diag(dn, false)))
                        / (4.0 * h2);
                    frobenius_sq[node] += 2.0 * mixed * mixed;
                }
            }
            laplacian_sq[node] += lap * lap;
        }
    }
    Hessian {
        frobenius_sq,
        laplacian_sq,
    }
}

/// Normalised nodal samples of the bump `exp(-1/(1 - |x|²/r²))`.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    radius: f64,
    dim: usize,
    offsets: Vec<[isize; 3]>,
    weights: Vec<f64>,
}

impl MollifierKernel {
    pub fn new(dim: usize, h: f64, radius: f64) -> Self {
        let reach = (radius / h).ceil() as isize;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let range = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let rho_sq = ((i * i + j * j + k * k) as f64) * h * h / (radius * radius);
                    if rho_sq < 1.0 {
                        let w = (-1.0 / (1.0 - rho_sq)).exp();
                        if w > 0.0 {
                            offsets.push([i, j, k]);
                            weights.push(w);
                        }
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        MollifierKernel {
            radius,
            dim,
            offsets,
            weights,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offsets(&self) -> &[[isize; 3]] {
        &self.offsets
    }

    /// True when only the centre tap survives.
    pub fn is_identity(&self) -> bool {
        self.weights.len() == 1
    }

    /// Convolution of a scalar nodal array, zero-extended outside the box.
    pub fn apply(&self, grid: &Grid, input: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n = grid.n() as isize;
        let strides: Vec<isize> = (0..d).map(|a| grid.stride(a) as isize).collect();
        (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let idx = grid.multi_index(node);
                let mut acc = 0.0;
                'taps: for (off, w) in self.offsets.iter().zip(&self.weights) {
                    let mut target = 0isize;
                    for a in 0..d {
                        let j = idx[a] as isize + off[a];
                        if j < 0 || j >= n {
                            continue 'taps;
                        }
                        target += j * strides[a];
                    }
                    acc += w * input[target as usize];
                }
                acc
            })
            .collect()
    }
}

/// Spatial Friedrichs mollification `J_r(v)` with zero extension outside the box.
pub fn mollify_space(v: &VectorField, radius: f64) -> Result<VectorField> {
    if !(radius > 0.0) {
        return Err(Error::param("radius", format!("{radius} must be > 0")));
    }
    let grid = *v.grid();
    if radius < grid.h() {
        warn!("mollifier radius {radius} below grid spacing {}; returning input", grid.h());
        return Ok(v.clone());
    }
    let kernel = MollifierKernel::new(grid.dim(), grid.h(), radius);
    let comps = v
        .components()
        .iter()
        .map(|c| kernel.apply(&grid, c))
        .collect();
    let mut out = VectorField::from_components(grid, comps)?;
    out.set_time(v.time());
    Ok(out)
}

/// Normalised 1-D bump weights at integer offsets `-reach..=reach` (spacing `step`).
fn bump_weights_1d(step: f64, radius: f64) -> Vec<f64> {
    let reach = if step > 0.0 { (radius / step).ceil() as usize } else { 0 };
    let mut weights: Vec<f64> = (0..=2 * reach)
        .map(|i| {
            let s = (i as f64 - reach as f64) * step / radius;
            if s * s < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        weights = vec![0.0; 2 * reach + 1];
        weights[reach] = 1.0;
    }
    weights
}

/// Space-time mollified gradients `J̃_η(∇v)` at every stored sample.
///
/// Spatial part: the ball kernel of radius `η` with zero extension; temporal
/// part: a 1-D bump of radius `η`, samples reflected at both ends.
pub fn mollify_spacetime(traj: &Trajectory, eta: f64) -> Result<Vec<GradientField>> {
    mollify_spacetime_states(&traj.states, &traj.times, eta)
}

pub(crate) fn mollify_spacetime_states(
    states: &[VectorField],
    times: &[f64],
    eta: f64,
) -> Result<Vec<GradientField>> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("{eta} must be > 0")));
    }
    if states.len() < 2 {
        return Err(Error::Trajectory("need at least two samples to mollify in time".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if eta > 0.5 * span {
        return Err(Error::param(
            "eta",
            format!("{eta} exceeds half the trajectory span {span}"),
        ));
    }
    let grid = *states[0].grid();
    let d = grid.dim();
    let spatial: Vec<Vec<Vec<f64>>> = if eta < grid.h() {
        states
            .iter()
            .map(|s| gradient(s).tensor)
            .collect()
    } else {
        let kernel = MollifierKernel::new(d, grid.h(), eta);
        states
            .iter()
            .map(|s| {
                gradient(s)
                    .tensor
                    .iter()
                    .map(|entry| kernel.apply(&grid, entry))
                    .collect()
            })
            .collect()
    };
    let step = times[1] - times[0];
    let tw = bump_weights_1d(step, eta);
    let reach = (tw.len() / 2) as isize;
    let last = (states.len() - 1) as isize;
    let reflect = |k: isize| -> usize {
        let mut k = k;
        if k < 0 {
            k = -k;
        }
        if k > last {
            k = 2 * last - k;
        }
        k.clamp(0, last) as usize
    };
    let out = (0..states.len() as isize)
        .map(|k| {
            let mut tensor = vec![vec![0.0; grid.len()]; d * d];
            for (j, &w) in tw.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &spatial[reflect(k + j as isize - reach)];
                for (dst, s) in tensor.iter_mut().zip(src) {
                    for (x, y) in dst.iter_mut().zip(s) {
                        *x += w * y;
                    }
                }
            }
            GradientField::from_tensor(grid, tensor)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{l2_norm, make_initial, InitialCondition};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..grid.dim())
            .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        VectorField::from_components(grid, comps).unwrap()
    }

    /// Nodes whose full stencil (including diagonals) stays inside the box.
    fn deep_interior(grid: &Grid, node: usize) -> bool {
        let idx = grid.multi_index(node);
        (0..grid.dim()).all(|a| idx[a] >= 1 && idx[a] + 2 <= grid.n())
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let grid = Grid::new(2, 9).unwrap();
        let g = gradient(&VectorField::zeros(grid));
        assert!(g.magnitude_sq().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn gradient_exact_on_quadratic_1d() {
        let grid = Grid::new(1, 15).unwrap();
        let v = VectorField::from_fn(grid, |x| [x[0] * (1.0 - x[0]), 0.0, 0.0]);
        let g = gradient(&v);
        for node in 0..grid.len() {
            let x = grid.coords(node)[0];
            assert!((g.entry(0, 0)[node] - (1.0 - 2.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_exact_on_linear_fields_away_from_boundary() {
        let grid = Grid::new(2, 8).unwrap();
        let c = [[0.3, -1.2], [2.0, 0.7]];
        let v = VectorField::from_fn(grid, |x| {
            [c[0][0] * x[0] + c[0][1] * x[1], c[1][0] * x[0] + c[1][1] * x[1], 0.0]
        });
        let g = gradient(&v);
        for node in 0..grid.len() {
            if grid.multi_index(node).iter().take(2).all(|&i| i >= 1 && i + 1 < grid.n()) {
                for i in 0..2 {
                    for b in 0..2 {
                        assert!((g.entry(i, b)[node] - c[i][b]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_second_order_on_sine_product() {
        let errs: Vec<f64> = [15, 31, 63]
            .iter()
            .map(|&n| {
                let grid = Grid::new(2, n).unwrap();
                let v = VectorField::from_fn(grid, |x| {
                    [(PI * x[0]).sin() * (PI * x[1]).sin(), 0.0, 0.0]
                });
                let g = gradient(&v);
                (0..grid.len())
                    .map(|node| {
                        let x = grid.coords(node);
                        let exact = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
                        (g.entry(0, 0)[node] - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9);
        }
    }

    #[test]
    fn coefficient_examples() {
        let (one, _) = coefficient_value(0.3, 2.0, 17.0);
        assert_eq!(one, 1.0);
        for p in [1.6, 1.7, 1.9] {
            assert_relative_eq!(coefficient_value(0.0, p, 1.0).0, 1.0);
        }
        // 0.1 + 3.9 = 4, 4^(-0.2)
        let (v, _) = coefficient_value(0.1, 1.6, 3.9);
        assert!((v - 0.757858283255199).abs() < 1e-12);
    }

    #[test]
    fn degenerate_nodes_are_floored_and_counted() {
        let grid = Grid::new(1, 7).unwrap();
        let a = diffusion_coefficient(&gradient(&VectorField::zeros(grid)), 0.0, 1.6);
        assert_eq!(a.clamped, grid.len());
        let floor = coefficient_value(0.0, 1.6, 0.0).0;
        assert!((floor / DEGENERATE_FLOOR.powf(-0.2) - 1.0).abs() < 1e-12);
        assert!(a.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn coefficient_monotone_in_gradient() {
        let mut prev = f64::INFINITY;
        for s in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let (v, _) = coefficient_value(0.05, 1.7, s);
            assert!(v < prev);
            prev = v;
            assert_eq!(coefficient_value(0.05, 2.0, s).0, 1.0);
        }
    }

    #[test]
    fn summation_by_parts_is_exact() {
        for d in 1..=3 {
            let grid = Grid::new(d, 6).unwrap();
            let u = random_field(grid, 1);
            let w = random_field(grid, 2);
            let a = diffusion_coefficient(&gradient(&random_field(grid, 3)), 0.2, 1.7);
            let faces = FaceDiffusivity::new(grid, a.values, 0.05);
            for c in 0..d {
                let div = faces.divergence(u.component(c));
                let lhs: f64 = div
                    .iter()
                    .zip(w.component(c))
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    * grid.cell_volume();
                let rhs = -faces.dirichlet_form(u.component(c), w.component(c));
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "d={d}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn p_laplacian_at_p2_is_the_laplacian() {
        for d in 1..=3 {
            let grid = Grid::new(d, 7).unwrap();
            let v = random_field(grid, 11);
            let a = p_laplacian_apply(&v, 0.4, 2.0);
            let b = laplacian(&v);
            for (x, y) in a.components().iter().flatten().zip(b.components().iter().flatten()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn p_laplacian_vanishes_on_affine_fields_in_the_interior() {
        let grid = Grid::new(2, 10).unwrap();
        let v = VectorField::from_fn(grid, |x| [x[0] + 2.0 * x[1], -x[0], 0.0]);
        let out = p_laplacian_apply(&v, 0.0, 1.7);
        for node in 0..grid.len() {
            if deep_interior(&grid, node) && grid.multi_index(node).iter().take(2).all(|&i| i >= 2 && i + 3 <= grid.n()) {
                for c in 0..2 {
                    assert!(out.component(c)[node].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn p_laplacian_second_order_against_symbolic_flux() {
        // d/dx[(1 + π² cos²(πx))^(-0.1) π cos(πx)] for p = 1.8, μ = 1.
        let exact = |x: f64| {
            let c = (PI * x).cos();
            let s = (PI * x).sin();
            let base = 1.0 + PI * PI * c * c;
            let db = -2.0 * PI.powi(3) * c * s;
            -0.1 * base.powf(-1.1) * db * PI * c - base.powf(-0.1) * PI * PI * s
        };
        let errs: Vec<f64> = [31, 63, 127, 255]
            .iter()
            .map(|&n| {
                let grid = Grid::new(1, n).unwrap();
                let v = make_initial(&InitialCondition::sine_all(1, 1, 1.0), grid).unwrap();
                let out = p_laplacian_apply(&v, 1.0, 1.8);
                (0..grid.len())
                    .map(|node| (out.component(0)[node] - exact(grid.coords(node)[0])).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn convection_examples() {
        let grid = Grid::new(1, 9).unwrap();
        let x = VectorField::from_fn(grid, |x| [x[0], 0.0, 0.0]);
        let out = convection(&x, &x).unwrap();
        // Central differences are exact on linears away from the upper boundary.
        for node in 0..grid.len() - 1 {
            assert!((out.component(0)[node] - grid.coords(node)[0]).abs() < 1e-12);
        }
        let other = Grid::new(1, 10).unwrap();
        assert_eq!(
            convection(&x, &VectorField::zeros(other)),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn convection_of_constants_vanishes_in_the_interior() {
        let grid = Grid::new(2, 8).unwrap();
        let w = VectorField::from_fn(grid, |_| [0.4, -1.1, 0.0]);
        let v = VectorField::from_fn(grid, |_| [2.0, 3.0, 0.0]);
        let out = convection(&w, &v).unwrap();
        for node in 0..grid.len() {
            if deep_interior(&grid, node) {
                assert_eq!(out.component(0)[node], 0.0);
                assert_eq!(out.component(1)[node], 0.0);
            }
        }
    }

    #[test]
    fn convection_energy_pairing_matches_integration_by_parts() {
        // ∫(v·∇v)·v = -½∫(∇·v)|v|² for v vanishing on ∂Ω, up to O(h²).
        let errs: Vec<f64> = [15, 31, 63]
            .iter()
            .map(|&n| {
                let grid = Grid::new(2, n).unwrap();
                let v = VectorField::from_fn(grid, |x| {
                    let s = (PI * x[0]).sin() * (PI * x[1]).sin();
                    [s * (1.0 + x[0]), s * (2.0 * PI * x[1]).sin(), 0.0]
                });
                let lhs = convection(&v, &v).unwrap().inner(&v).unwrap();
                let div = divergence(&v);
                let rhs: f64 = -0.5
                    * (0..grid.len()).map(|i| div[i] * v.magnitude_sq(i)).sum::<f64>()
                    * grid.cell_volume();
                (lhs - rhs).abs()
            })
            .collect();
        assert!(errs[2] < 1e-3);
        assert!((errs[1] / errs[2]).log2() > 1.8);
    }

    #[test]
    fn split_transport_is_negative_transpose_of_convection() {
        for d in 1..=3 {
            let grid = Grid::new(d, 5).unwrap();
            let w = random_field(grid, 4);
            let u = random_field(grid, 5);
            let phi = random_field(grid, 6);
            let lhs = convection(&w, &u).unwrap().inner(&phi).unwrap();
            let rhs = -u.inner(&split_transport(&w, &phi).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn cell_gradient_energy_is_unit_dirichlet_form() {
        for d in 1..=3 {
            let grid = Grid::new(d, 5).unwrap();
            let v = random_field(grid, 8);
            let cell = CellGradient::new(&v).power_sum(2.0);
            let faces = FaceDiffusivity::uniform(grid, 1.0).dirichlet_energy(&v);
            assert!((cell - faces).abs() < 1e-10 * faces);
        }
    }

    #[test]
    fn power_sum_gradient_matches_finite_differences() {
        let grid = Grid::new(2, 4).unwrap();
        let v = random_field(grid, 21);
        let u = VectorField::from_components(grid, vec![v.component(0).to_vec(), vec![0.0; grid.len()]]).unwrap();
        let q = 1.7;
        let g = CellGradient::new(&u).power_sum_gradient(q);
        let eps = 1e-6;
        for node in 0..grid.len() {
            let mut plus = u.clone();
            plus.components_mut()[0][node] += eps;
            let mut minus = u.clone();
            minus.components_mut()[0][node] -= eps;
            let fd = (CellGradient::new(&plus).power_sum(q) - CellGradient::new(&minus).power_sum(q)) / (2.0 * eps);
            assert!((fd - g[node]).abs() < 1e-6 * (1.0 + fd.abs()), "node {node}: {fd} vs {}", g[node]);
        }
    }

    #[test]
    fn hessian_exact_on_quadratic() {
        let grid = Grid::new(1, 9).unwrap();
        let v = VectorField::from_fn(grid, |x| [x[0] * (1.0 - x[0]), 0.0, 0.0]);
        let hs = hessian(&v);
        for node in 0..grid.len() {
            assert!((hs.frobenius_sq[node] - 4.0).abs() < 1e-9);
            assert!((hs.laplacian_sq[node] - 4.0).abs() < 1e-9);
        }
        let grid = Grid::new(2, 8).unwrap();
        let v = VectorField::from_fn(grid, |x| [x[0] * x[1], 0.0, 0.0]);
        let hs = hessian(&v);
        for node in 0..grid.len() {
            if deep_interior(&grid, node) {
                // ∂xy = 1 twice in the Frobenius sum, Δ = 0.
                assert!((hs.frobenius_sq[node] - 2.0).abs() < 1e-9);
                assert!(hs.laplacian_sq[node] < 1e-18);
            }
        }
    }

    #[test]
    fn kernel_is_normalized_nonnegative_and_supported() {
        for d in 1..=3 {
            let h = 1.0 / 32.0;
            let r = 0.1;
            let k = MollifierKernel::new(d, h, r);
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
            assert!(k.weights().iter().all(|&w| w >= 0.0));
            for off in k.offsets() {
                let dist = ((off[0] * off[0] + off[1] * off[1] + off[2] * off[2]) as f64).sqrt() * h;
                assert!(dist < r);
            }
        }
    }

    #[test]
    fn mollify_examples() {
        let grid = Grid::new(2, 31).unwrap();
        let zero = mollify_space(&VectorField::zeros(grid), 0.1).unwrap();
        assert!(zero.components().iter().flatten().all(|&v| v == 0.0));

        let c = 2.5;
        let constant = VectorField::from_fn(grid, |_| [c, -c, 0.0]);
        let r = 0.1;
        let out = mollify_space(&constant, r).unwrap();
        for node in 0..grid.len() {
            if grid.boundary_distance(node) > r {
                assert!((out.component(0)[node] - c).abs() < 1e-12);
                assert!((out.component(1)[node] + c).abs() < 1e-12);
            }
        }

        let rough = random_field(grid, 3);
        let positive = VectorField::from_components(
            grid,
            rough.components().iter().map(|c| c.iter().map(|v| v.abs()).collect()).collect(),
        )
        .unwrap();
        let out = mollify_space(&positive, 0.07).unwrap();
        assert!(out.components().iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn mollify_below_grid_scale_is_identity() {
        let grid = Grid::new(1, 15).unwrap();
        let v = random_field(grid, 9);
        assert_eq!(mollify_space(&v, 0.5 * grid.h()).unwrap(), v);
        assert!(mollify_space(&v, 0.0).is_err());
    }

    #[test]
    fn mollify_preserves_mass_up_to_boundary_layer() {
        let grid = Grid::new(2, 31).unwrap();
        let v = random_field(grid, 12);
        let r = 0.1;
        let out = mollify_space(&v, r).unwrap();
        let vol = grid.cell_volume();
        let strip = 1.0 - (1.0 - 2.0 * r).powi(2);
        let sup = v.components()[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let before: f64 = v.component(0).iter().sum::<f64>() * vol;
        let after: f64 = out.component(0).iter().sum::<f64>() * vol;
        assert!((before - after).abs() <= sup * strip);
    }

    fn stationary(grid: Grid, field: &VectorField, steps: usize, dt: f64) -> Trajectory {
        use crate::fields::{SimParams, Termination};
        Trajectory {
            params: SimParams {
                dim: grid.dim(),
                n_cells: grid.n() + 1,
                dt,
                ..SimParams::default()
            },
            times: (0..=steps).map(|k| k as f64 * dt).collect(),
            states: vec![field.clone(); steps + 1],
            diagnostics: Vec::new(),
            step_residuals: Vec::new(),
            stride: 1,
            termination: Termination::Completed,
        }
    }

    #[test]
    fn spacetime_mollifier_on_stationary_trajectory_is_spatial_only() {
        let grid = Grid::new(1, 31).unwrap();
        let v = make_initial(&InitialCondition::sine_all(1, 1, 1.0), grid).unwrap();
        let traj = stationary(grid, &v, 20, 0.01);
        let eta = 0.08;
        let out = mollify_spacetime(&traj, eta).unwrap();
        let kernel = MollifierKernel::new(1, grid.h(), eta);
        let expected = kernel.apply(&grid, gradient(&v).entry(0, 0));
        for g in &out {
            for (a, b) in g.entry(0, 0).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let zero = stationary(grid, &VectorField::zeros(grid), 20, 0.01);
        let out = mollify_spacetime(&zero, eta).unwrap();
        assert!(out.iter().all(|g| g.magnitude_sq().iter().all(|&m| m == 0.0)));
    }

    #[test]
    fn spacetime_mollifier_rejects_wide_radius() {
        let grid = Grid::new(1, 15).unwrap();
        let traj = stationary(grid, &VectorField::zeros(grid), 10, 0.01);
        assert!(mollify_spacetime(&traj, 0.06).is_err());
        assert!(mollify_spacetime(&traj, 0.05).is_ok());
    }

    #[test]
    fn spacetime_mollifier_converges_to_raw_gradient_at_grid_scale() {
        // η = h: distance to the raw gradient shrinks at least like O(h).
        let errs: Vec<f64> = [31, 63, 127]
            .iter()
            .map(|&n| {
                let grid = Grid::new(1, n).unwrap();
                let dt = grid.h() / 4.0;
                let states: Vec<VectorField> = (0..=16)
                    .map(|k| {
                        let t = k as f64 * dt;
                        VectorField::from_fn(grid, |x| [(-t).exp() * (PI * x[0]).sin(), 0.0, 0.0])
                    })
                    .collect();
                let times: Vec<f64> = (0..=16).map(|k| k as f64 * dt).collect();
                let out = mollify_spacetime_states(&states, &times, grid.h()).unwrap();
                let raw = gradient(&states[8]);
                let diff: Vec<f64> = out[8]
                    .entry(0, 0)
                    .iter()
                    .zip(raw.entry(0, 0))
                    .map(|(a, b)| a - b)
                    .collect();
                let f = VectorField::from_components(grid, vec![diff]).unwrap();
                l2_norm(&f)
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0]);
            assert!(w[0] / w[1] > 1.8, "{errs:?}");
        }
    }
}
