//! Preconditioned conjugate gradients for `(I - Δt ∇·(k∇·)) u = b`.
//!
//! The operator is assembled once per step as a `(2d+1)`-point stencil from a
//! [`FaceDiffusivity`]. The preconditioner is the zero-fill incomplete Cholesky
//! factorisation of that stencil in natural ordering.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::operators::FaceDiffusivity;

const CHUNK: usize = 4096;

/// Deterministic dot product: fixed-size chunks summed in order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

/// Symmetric `(2d+1)`-point matrix `A = I + Δt · (−∇·(k∇·))`.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    grid: Grid,
    diag: Vec<f64>,
    /// `upper[axis][node]`: (negative) coupling to the upper neighbour along `axis`.
    upper: Vec<Vec<f64>>,
}

impl StencilMatrix {
    pub fn backward_euler(faces: &FaceDiffusivity, dt: f64) -> Self {
        let grid = *faces.grid();
        let scale = dt / (grid.h() * grid.h());
        let mut diag = vec![1.0; grid.len()];
        let mut upper = vec![vec![0.0; grid.len()]; grid.dim()];
        for node in 0..grid.len() {
            for axis in 0..grid.dim() {
                let ku = faces.upper(node, axis) * scale;
                let kl = faces.lower(node, axis) * scale;
                diag[node] += ku + kl;
                if grid.neighbor(node, axis, true).is_some() {
                    upper[axis][node] = -ku;
                }
            }
        }
        StencilMatrix { grid, diag, upper }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let row = |node: usize| {
            let mut acc = self.diag[node] * u[node];
            for axis in 0..grid.dim() {
                if let Some(j) = grid.neighbor(node, axis, true) {
                    acc += self.upper[axis][node] * u[j];
                }
                if let Some(j) = grid.neighbor(node, axis, false) {
                    acc += self.upper[axis][j] * u[j];
                }
            }
            acc
        };
        if u.len() > CHUNK {
            (0..u.len()).into_par_iter().map(row).collect()
        } else {
            (0..u.len()).map(row).collect()
        }
    }
}

/// IC(0) factor `M = (D + L) D⁻¹ (D + L)ᵀ` with `L` the strict lower stencil part.
#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    pivots: Vec<f64>,
}

impl IncompleteCholesky {
    pub fn new(a: &StencilMatrix) -> Self {
        let grid = &a.grid;
        let mut pivots = a.diag.clone();
        for node in 0..grid.len() {
            for axis in 0..grid.dim() {
                if let Some(j) = grid.neighbor(node, axis, false) {
                    let c = a.upper[axis][j];
                    pivots[node] -= c * c / pivots[j];
                }
            }
        }
        IncompleteCholesky { pivots }
    }

    pub fn solve(&self, a: &StencilMatrix, r: &[f64]) -> Vec<f64> {
        let grid = &a.grid;
        let n = r.len();
        // (D + L) y = r
        let mut y = vec![0.0; n];
        for node in 0..n {
            let mut acc = r[node];
            for axis in 0..grid.dim() {
                if let Some(j) = grid.neighbor(node, axis, false) {
                    acc -= a.upper[axis][j] * y[j];
                }
            }
            y[node] = acc / self.pivots[node];
        }
        // (D + L)ᵀ z = D y
        let mut z = vec![0.0; n];
        for node in (0..n).rev() {
            let mut acc = self.pivots[node] * y[node];
            for axis in 0..grid.dim() {
                if let Some(j) = grid.neighbor(node, axis, true) {
                    acc -= a.upper[axis][node] * z[j];
                }
            }
            z[node] = acc / self.pivots[node];
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// PCG from initial guess `x`, stopping at `‖r‖ ≤ tol·‖b‖`.
pub fn pcg(
    a: &StencilMatrix,
    precond: &IncompleteCholesky,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> Result<SolveStats> {
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let ax = a.apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    if rel <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z = precond.solve(a, &r);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        let ad = a.apply(&d);
        let alpha = rz / dot(&d, &ad);
        if !alpha.is_finite() {
            return Err(Error::NonFinite("conjugate gradient step"));
        }
        for i in 0..x.len() {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        z = precond.solve(a, &r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..d.len() {
            d[i] = z[i] + beta * d[i];
        }
    }
    Err(Error::LinearSolve {
        iterations: max_iters,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_faces(grid: Grid, seed: u64, spread: f64) -> FaceDiffusivity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodal = (0..grid.len()).map(|_| rng.gen_range(0.0..spread)).collect();
        FaceDiffusivity::new(grid, nodal, 0.01)
    }

    #[test]
    fn stencil_matches_flux_operator() {
        let grid = Grid::new(2, 7).unwrap();
        let faces = random_faces(grid, 1, 3.0);
        let dt = 0.013;
        let a = StencilMatrix::backward_euler(&faces, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let div = faces.divergence(&u);
        for (i, au) in a.apply(&u).iter().enumerate() {
            assert!((au - (u[i] - dt * div[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn ic0_is_exact_in_one_dimension() {
        let grid = Grid::new(1, 20).unwrap();
        let a = StencilMatrix::backward_euler(&random_faces(grid, 3, 5.0), 0.1);
        let m = IncompleteCholesky::new(&a);
        let b: Vec<f64> = (0..grid.len()).map(|i| (i as f64).sin()).collect();
        let x = m.solve(&a, &b);
        for (ax, bi) in a.apply(&x).iter().zip(&b) {
            assert!((ax - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_solves_to_tolerance_with_wide_coefficient_range() {
        for d in 1..=3 {
            let grid = Grid::new(d, 12).unwrap();
            let a = StencilMatrix::backward_euler(&random_faces(grid, 4, 1e6), 1e-3);
            let m = IncompleteCholesky::new(&a);
            let b: Vec<f64> = (0..grid.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
            let mut x = vec![0.0; grid.len()];
            let stats = pcg(&a, &m, &b, &mut x, 1e-10, 2000).unwrap();
            let r: Vec<f64> = a.apply(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(dot(&r, &r).sqrt() <= 1e-10 * dot(&b, &b).sqrt() * 1.0001, "d={d} {stats:?}");
        }
    }

    #[test]
    fn pcg_reports_stall() {
        let grid = Grid::new(2, 20).unwrap();
        let a = StencilMatrix::backward_euler(&random_faces(grid, 5, 1e3), 1.0);
        let m = IncompleteCholesky::new(&a);
        let b = vec![1.0; grid.len()];
        let mut x = vec![0.0; grid.len()];
        assert!(matches!(
            pcg(&a, &m, &b, &mut x, 1e-14, 1),
            Err(Error::LinearSolve { iterations: 1, .. })
        ));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let grid = Grid::new(1, 5).unwrap();
        let a = StencilMatrix::backward_euler(&FaceDiffusivity::uniform(grid, 1.0), 0.1);
        let m = IncompleteCholesky::new(&a);
        let mut x = vec![3.0; grid.len()];
        pcg(&a, &m, &vec![0.0; grid.len()], &mut x, 1e-10, 10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chunked_dot_is_deterministic() {
        let a: Vec<f64> = (0..20_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let first = dot(&a, &a);
        for _ in 0..5 {
            assert_eq!(dot(&a, &a).to_bits(), first.to_bits());
        }
    }
}
