//! Reference solvers used to check the signal-flow systems. They share no
//! code with the engine.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Gradient descent with Armijo backtracking; the trial step is the
/// Barzilai–Borwein estimate from the previous iterate.
pub fn gradient_descent(
    f: impl Fn(&DVector<f64>) -> f64,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut step = 1.0;
    for _ in 0..max_iters {
        if g.norm() <= tol {
            return Ok(x);
        }
        let gg = g.norm_squared();
        let mut t = step;
        let (x_new, f_new) = loop {
            let cand = &x - &g * t;
            let fc = f(&cand);
            if fc <= fx - 1e-4 * t * gg {
                break (cand, fc);
            }
            t *= 0.5;
            if t < 1e-20 {
                // No representable decrease left: accept if stationary enough.
                if g.norm() <= tol * 1e3 {
                    return Ok(x);
                }
                return Err(Error::Oracle(format!(
                    "line search stalled at gradient norm {:.3e}",
                    g.norm()
                )));
            }
        };
        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e6) } else { 2.0 * t };
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    Err(Error::Oracle(format!(
        "gradient descent: gradient norm {:.3e} after {max_iters} iterations",
        g.norm()
    )))
}

/// Damped Newton iteration with Armijo backtracking, for refining a point
/// already close to a minimizer of a piecewise-smooth convex function.
pub fn newton_refine(
    f: impl Fn(&DVector<f64>) -> f64,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    hess: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let mut x = x0;
    for _ in 0..max_iters {
        let g = grad(&x);
        if g.norm() <= tol {
            return Ok(x);
        }
        let h = hess(&x);
        let dir = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -h.svd(true, true).solve(&g, 1e-12).map_err(|e| Error::Oracle(e.to_string()))?,
        };
        let dir = if dir.dot(&g) < 0.0 { dir } else { -g.clone() };
        let fx = f(&x);
        let slope = dir.dot(&g);
        let mut t = 1.0;
        loop {
            let cand = &x + &dir * t;
            if f(&cand) <= fx + 1e-4 * t * slope {
                x = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-16 {
                return Err(Error::Oracle(format!("newton line search stalled at {:.3e}", g.norm())));
            }
        }
    }
    Err(Error::Oracle("newton refinement: no convergence".into()))
}

/// Cyclic coordinate descent for `λ‖x‖₁ + (ρ/2)‖Ax − y‖²`; stops once a full
/// sweep moves no coordinate by more than `tol`.
pub fn lasso_coordinate_descent(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    rho: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<DVector<f64>> {
    let n = a.ncols();
    let col_sq: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut r: DVector<f64> = y.clone_owned(); // y − Ax
    for _ in 0..max_sweeps {
        let mut max_step: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let aj = a.column(j);
            let z = rho * (aj.dot(&r) + col_sq[j] * x[j]);
            let new = soft(z, lambda) / (rho * col_sq[j]);
            let delta = new - x[j];
            if delta != 0.0 {
                r.axpy(-delta, &aj, 1.0);
                x[j] = new;
                max_step = max_step.max(delta.abs());
            }
        }
        if max_step <= tol {
            return Ok(x);
        }
    }
    Err(Error::Oracle(format!("coordinate descent: no convergence in {max_sweeps} sweeps")))
}

fn soft(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
}

/// `min cᵀx` s.t. `Ax = b`, `x ≥ 0`.
pub fn simplex(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if c.len() != n || b.len() != m {
        return Err(Error::Dimension {
            expected: n,
            got: c.len(),
        });
    }
    let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..n).map(|j| lp.add_var(c[j], (0.0, f64::INFINITY))).collect();
    for i in 0..m {
        let row: Vec<_> = (0..n).filter(|&j| a[(i, j)] != 0.0).map(|j| (vars[j], a[(i, j)])).collect();
        lp.add_constraint(row.as_slice(), minilp::ComparisonOp::Eq, b[i]);
    }
    let sol = lp.solve().map_err(|e| Error::Oracle(format!("linear program: {e}")))?;
    let x = DVector::from_fn(n, |j, _| sol[vars[j]]);
    Ok(LpSolution {
        objective: c.dot(&x),
        x,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub w: DVector<f64>,
    pub b: f64,
    pub alpha: DVector<f64>,
}

/// Soft-margin SVM `½‖w‖² + C·Σ max(0, 1 − yᵢ(wᵀxᵢ + b))` through its dual,
/// solved by accelerated projected gradient with restarts.
pub fn svm_dual_qp(
    x: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SvmSolution> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    let yv = DVector::from_column_slice(y);
    let k = x * x.transpose();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lip = q.clone().symmetric_eigenvalues().amax().max(1e-12);
    let step = 1.0 / lip;
    let grad = |a: &DVector<f64>| &q * a - DVector::from_element(n, 1.0);

    let residual = |a: &DVector<f64>| (a - project_box_hyperplane(&(a - grad(a)), &yv, c)).norm();

    let mut alpha = DVector::zeros(n);
    let mut z = alpha.clone();
    let mut theta: f64 = 1.0;
    for it in 0..max_iters {
        let gz = grad(&z);
        let next = project_box_hyperplane(&(&z - &gz * step), &yv, c);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let mom = (theta - 1.0) / theta_next;
        // Restart when the momentum direction opposes descent.
        if gz.dot(&(&next - &alpha)) > 0.0 {
            theta = 1.0;
            z = alpha.clone();
            continue;
        }
        z = &next + (&next - &alpha) * mom;
        alpha = next;
        theta = theta_next;
        if it % 100 != 0 {
            continue;
        }
        let res = residual(&alpha);
        if res <= tol {
            let (w, b) = primal_from_dual(x, y, c, &alpha);
            return Ok(SvmSolution { w, b, alpha });
        }
        // The dual Hessian has rank ≤ feature dimension, so the tail of the
        // gradient iteration is slow; once the active set has settled, solve
        // the KKT equations on it directly and keep the result only if it
        // meets the full residual test.
        if res <= 1e-4 {
            if let Some((a, b)) = polish(y, c, &alpha, &q) {
                if residual(&a) <= tol {
                    let w = x.transpose() * a.component_mul(&yv);
                    return Ok(SvmSolution { w, b, alpha: a });
                }
            }
        }
    }
    Err(Error::Oracle("svm dual: no convergence".into()))
}

/// Exact solve of `Q_FF α_F + y_F b = 1 − C·Q_FU 1`, `y_Fᵀα_F = −C·Σ_U y`
/// on the free set `F` and upper-bound set `U` read off `alpha`.
fn polish(y: &[f64], c: f64, alpha: &DVector<f64>, q: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let n = y.len();
    let eps = 1e-6 * c.max(1e-12);
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let upper: Vec<usize> = (0..n).filter(|&i| alpha[i] >= c - eps).collect();
    if free.is_empty() {
        return None;
    }
    let f = free.len();
    let mut m = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (r, &i) in free.iter().enumerate() {
        for (col, &j) in free.iter().enumerate() {
            m[(r, col)] = q[(i, j)];
        }
        m[(r, f)] = y[i];
        rhs[r] = 1.0 - c * upper.iter().map(|&j| q[(i, j)]).sum::<f64>();
    }
    for (col, &j) in free.iter().enumerate() {
        m[(f, col)] = y[j];
    }
    rhs[f] = -c * upper.iter().map(|&j| y[j]).sum::<f64>();
    let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let mut a = DVector::zeros(n);
    for &j in &upper {
        a[j] = c;
    }
    for (col, &j) in free.iter().enumerate() {
        let v = sol[col];
        if v < -1e-12 || v > c + 1e-12 {
            return None;
        }
        a[j] = v.clamp(0.0, c);
    }
    Some((a, sol[f]))
}

fn primal_from_dual(x: &DMatrix<f64>, y: &[f64], c: f64, alpha: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let w = x.transpose() * alpha.component_mul(&yv);
    let margins: Vec<f64> = (0..n).map(|i| x.row(i).transpose().dot(&w)).collect();
    let eps = 1e-7 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let b = if !free.is_empty() {
        free.iter().map(|&i| y[i] - margins[i]).sum::<f64>() / free.len() as f64
    } else {
        // b bounded by the complementarity conditions of the bound points.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let at_zero = alpha[i] <= eps;
            let bound = y[i] - margins[i];
            let lower = (y[i] > 0.0) == at_zero;
            if lower {
                lo = lo.max(bound);
            } else {
                hi = hi.min(bound);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            _ => 0.0,
        }
    };
    (w, b)
}

/// Projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the multiplier.
fn project_box_hyperplane(v: &DVector<f64>, y: &DVector<f64>, c: f64) -> DVector<f64> {
    let at = |mu: f64| v.zip_map(y, |vi, yi| (vi - mu * yi).clamp(0.0, c));
    let excess = |mu: f64| at(mu).dot(y);
    let span = v.amax() + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * span {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gradient_descent_on_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = gradient_descent(
            |x| 0.5 * x.dot(&(&a * x)) - b.dot(x),
            |x| &a * x - &b,
            DVector::zeros(2),
            1e-12,
            10_000,
        )
        .unwrap();
        let exact = a.lu().solve(&b).unwrap();
        assert!((x - exact).amax() < 1e-11);
    }

    #[test]
    fn coordinate_descent_without_penalty_is_least_squares() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 0.2, 1.0, -0.3, 0.7, 1.1, -0.4]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0]);
        let x = lasso_coordinate_descent(&a, &y, 0.0, 2.0, 1e-14, 100_000).unwrap();
        let ata = a.transpose() * &a;
        let exact = ata.lu().solve(&(a.transpose() * &y)).unwrap();
        assert!((x - exact).amax() < 1e-10);
    }

    #[test]
    fn simplex_textbook_example() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36.
        let a = DMatrix::from_row_slice(
            3,
            5,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 2.0, 0.0, 0.0, 1.0],
        );
        let b = DVector::from_vec(vec![4.0, 12.0, 18.0]);
        let c = DVector::from_vec(vec![-3.0, -5.0, 0.0, 0.0, 0.0]);
        let sol = simplex(&c, &a, &b).unwrap();
        assert_abs_diff_eq!(sol.objective, -36.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[1], 6.0, epsilon = 1e-10);
    }

    #[test]
    fn simplex_phase_one_and_infeasible() {
        // x₀ − x₁ = −2 needs phase one; min x₀ + x₁ → (0, 2).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let sol = simplex(&DVector::from_vec(vec![1.0, 1.0]), &a, &DVector::from_vec(vec![-2.0])).unwrap();
        assert_abs_diff_eq!(sol.x[1], 2.0, epsilon = 1e-12);
        // x₀ + x₁ = −1 with x ≥ 0 is empty.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(simplex(&DVector::from_vec(vec![1.0, 1.0]), &a, &DVector::from_vec(vec![-1.0])).is_err());
    }

    #[test]
    fn svm_two_points_max_margin() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let sol = svm_dual_qp(&x, &[1.0, -1.0], 10.0, 1e-12, 100_000).unwrap();
        assert_abs_diff_eq!(sol.w[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.w[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.b, 0.0, epsilon = 1e-9);
        // Margin 1/‖w‖ is half the distance between the points.
        assert_abs_diff_eq!(1.0 / sol.w.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn projection_is_feasible() {
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let v = DVector::from_vec(vec![3.0, -2.0, 0.5, 0.7]);
        let p = project_box_hyperplane(&v, &y, 1.0);
        assert!(p.iter().all(|&a| (0.0..=1.0).contains(&a)));
        assert!(p.dot(&y).abs() < 1e-12);
    }
}
