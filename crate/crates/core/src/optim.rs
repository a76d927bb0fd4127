//! Small-dimensional optimizers used by the estimators.

use crate::error::{Error, Result};
use crate::likelihood::numerical_gradient;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    /// Longest step (Euclidean) tried by one line search.
    pub max_step: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            max_step: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `f` by BFGS with central-difference gradients and Armijo backtracking.
///
/// Converged means `‖∇f‖ < grad_tol` together with `|Δf| < f_tol` on the last step
/// (or a gradient already below tolerance at the start).
pub fn minimize_bfgs<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    opts: &QuasiNewtonOptions,
) -> Result<OptimResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite at start {x0:?}")));
    }
    let mut g = numerical_gradient(f, &x)?;
    let mut h = identity(n);
    let mut fresh = true;
    let mut last_change = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let gn = norm(&g);
        if gn < opts.grad_tol && (iter == 0 || last_change < opts.f_tol) {
            return Ok(OptimResult {
                x,
                value: fx,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            });
        }

        let mut p = mat_vec(&h, &g);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &p);
        if slope >= 0.0 || !slope.is_finite() {
            h = identity(n);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let pn = norm(&p);
        if pn > opts.max_step {
            let scale = opts.max_step / pn;
            p.iter_mut().for_each(|v| *v *= scale);
            slope *= scale;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            let ft = finite_or_inf(f(&trial));
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            return Ok(OptimResult {
                x,
                value: fx,
                grad_norm: gn,
                iterations: iter,
                converged: gn < opts.grad_tol,
            });
        };

        let g_new = numerical_gradient(f, &x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        last_change = (fx - f_new).abs();
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let gn = norm(&g);
    Ok(OptimResult {
        x,
        value: fx,
        grad_norm: gn,
        iterations: opts.max_iter,
        converged: gn < opts.grad_tol && last_change < opts.f_tol,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGradientOptions {
    pub max_iter: usize,
    pub f_tol: f64,
}

impl Default for ProjectedGradientOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            f_tol: 1e-14,
        }
    }
}

/// Maximizes `f` over a convex set given its projection, by projected gradient ascent
/// with an adaptive step and an Armijo test along the projection arc.
pub fn maximize_projected<F, G, P>(
    f: &F,
    grad: &G,
    project: &P,
    x0: &[f64],
    opts: &ProjectedGradientOptions,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
    P: Fn(&mut [f64]),
{
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite at start {x:?}")));
    }
    let mut step = 1.0;
    let mut stalls = 0;
    for iter in 0..opts.max_iter {
        let g = grad(&x)?;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            project(&mut trial);
            let ft = f(&trial);
            let moved: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if ft.is_finite() && ft >= fx + 1e-4 / step * moved {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(OptimResult {
                x,
                value: fx,
                grad_norm: norm(&g),
                iterations: iter,
                converged: true,
            });
        };
        let change = f_new - fx;
        x = x_new;
        fx = f_new;
        step *= 2.0;
        if change < opts.f_tol {
            stalls += 1;
            if stalls >= 5 {
                return Ok(OptimResult {
                    x,
                    value: fx,
                    grad_norm: norm(&g),
                    iterations: iter + 1,
                    converged: true,
                });
            }
        } else {
            stalls = 0;
        }
    }
    Ok(OptimResult {
        grad_norm: norm(&grad(&x)?),
        x,
        value: fx,
        iterations: opts.max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let res = minimize_bfgs(&f, &[-1.2, 1.0], &QuasiNewtonOptions::default()).unwrap();
        assert!(res.converged, "{res:?}");
        assert!((res.x[0] - 1.0).abs() < 1e-4 && (res.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_flat_objective_converges_immediately() {
        let f = |_: &[f64]| 3.0;
        let res = minimize_bfgs(&f, &[0.5, 0.5], &QuasiNewtonOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn simplex_projection() {
        let mut v = [0.5, 0.5, 0.5];
        project_simplex(&mut v);
        assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let mut v = [2.0, 0.0, -1.0];
        project_simplex(&mut v);
        assert_eq!(v, [1.0, 0.0, 0.0]);
        let mut v = [0.2, 0.3, 0.5];
        project_simplex(&mut v);
        assert!((v[0] - 0.2).abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn projected_gradient_hits_constrained_optimum() {
        // maximize -(x - 2)^2 over [0, 1]
        let f = |x: &[f64]| -(x[0] - 2.0).powi(2);
        let g = |x: &[f64]| Ok(vec![-2.0 * (x[0] - 2.0)]);
        let p = |x: &mut [f64]| x[0] = x[0].clamp(0.0, 1.0);
        let res = maximize_projected(&f, &g, &p, &[0.1], &ProjectedGradientOptions::default()).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-12);
    }
}
