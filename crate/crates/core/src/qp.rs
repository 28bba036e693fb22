//! Dense strictly convex QP solver.
//!
//! Solves `min ½ xᵀQx + cᵀx  s.t.  A x ≤ b` with the dual active-set method
//! of Goldfarb and Idnani: start from the unconstrained minimizer and add
//! the most violated constraint until none is violated. The method needs no
//! feasible starting point and detects infeasibility directly. The small
//! active-set systems are refactored from scratch every iteration, which is
//! cheap at the sizes used here (tens of variables and constraints).
//!
//! Ties in the most-violated choice go to the lowest index, so results are
//! deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    /// Inequality matrix `A` (`m × n`).
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Indices of active constraints with their (nonnegative) multipliers.
    pub active: Vec<(usize, f64)>,
    pub iterations: usize,
}

fn violation_tolerance(a_row: &DVector<f64>, b: f64, x: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + b.abs() + a_row.norm() * x.norm())
}

pub fn solve(problem: &QpProblem, max_iterations: usize) -> Result<QpSolution> {
    let n = problem.hessian.nrows();
    let m = problem.constraints.nrows();
    if problem.gradient.len() != n || problem.constraints.ncols() != n || problem.bounds.len() != m {
        return Err(Error::Dimension {
            context: "qp problem",
            expected: n,
            actual: problem.constraints.ncols(),
        });
    }
    let chol = linalg::cholesky(&problem.hessian, "QP Hessian")?;
    let mut x = -chol.solve(&problem.gradient);
    // Normals in the `nᵀx ≥ d` convention.
    let normals: Vec<DVector<f64>> = (0..m)
        .map(|j| -problem.constraints.row(j).transpose())
        .collect();
    let slack = |x: &DVector<f64>, j: usize| problem.bounds[j] + normals[j].dot(x);

    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        let mut chosen: Option<(usize, f64)> = None;
        for j in 0..m {
            if active.contains(&j) {
                continue;
            }
            let s = slack(&x, j);
            if s < -violation_tolerance(&normals[j], problem.bounds[j], &x)
                && chosen.is_none_or(|(_, best)| s < best)
            {
                chosen = Some((j, s));
            }
        }
        let Some((p, _)) = chosen else {
            return Ok(QpSolution {
                x,
                active: active.into_iter().zip(u).collect(),
                iterations,
            });
        };
        let np = &normals[p];
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Err(Error::QpMaxIterations(max_iterations));
            }
            let g_np = chol.solve(np);
            let k = active.len();
            let (z, r) = if k == 0 {
                (g_np.clone(), DVector::zeros(0))
            } else {
                let nmat = DMatrix::from_columns(&active.iter().map(|&j| normals[j].clone()).collect::<Vec<_>>());
                let g_n = chol.solve(&nmat);
                let s = nmat.transpose() * &g_n;
                let rhs = nmat.transpose() * &g_np;
                let r = match s.clone().cholesky() {
                    Some(c) => c.solve(&rhs),
                    None => s.lu().solve(&rhs).ok_or(Error::Singular("QP active set"))?,
                };
                (&g_np - g_n * &r, r)
            };

            // Partial (dual) step: first active multiplier to reach zero.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for i in 0..k {
                if r[i] > 0.0 {
                    let t = u[i] / r[i];
                    if t < t1 {
                        t1 = t;
                        drop = Some(i);
                    }
                }
            }
            // Full (primal) step: constraint p becomes satisfied.
            let znp = z.dot(np);
            let t2 = if z.norm() <= 1e-12 * g_np.norm().max(f64::MIN_POSITIVE) || znp <= 0.0 {
                f64::INFINITY
            } else {
                -slack(&x, p) / znp
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::QpInfeasible {
                    constraint: p,
                    violation: -slack(&x, p),
                });
            }
            for i in 0..k {
                u[i] -= t * r[i];
            }
            u_p += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let i = drop.expect("partial step has a blocking constraint");
            active.remove(i);
            u.remove(i);
        }
    }
}

/// Affine torque map `τ*(f) = offset + map · f`.
#[derive(Clone, Debug)]
pub struct TorqueCost {
    pub map: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl TorqueCost {
    pub fn eval(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.map * f
    }
}

/// Wrench redundancy `f₀` minimizing `|τ*(f_base + N_b f₀)|²` subject to
/// `A (f_base + N_b f₀) ≤ b`. The returned `f₀` lies in the range of `N_b`.
pub fn solve_redundancy_qp(
    cost: &TorqueCost,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    nb_projector: &DMatrix<f64>,
    f_base: &DVector<f64>,
) -> Result<DVector<f64>> {
    let basis = range_basis(nb_projector);
    let dim = basis.ncols();
    if dim == 0 {
        return Ok(DVector::zeros(f_base.len()));
    }
    let gz = &cost.map * &basis;
    let residual = cost.eval(f_base);
    let mut hessian = gz.transpose() * &gz;
    let gradient = gz.transpose() * residual;
    if linalg::min_eigenvalue(&hessian) <= 1e-12 * hessian.amax().max(1.0) {
        // Directions that do not change τ* are resolved toward zero.
        let reg = 1e-9 * hessian.amax().max(1.0);
        hessian += DMatrix::identity(dim, dim) * reg;
    }
    let problem = QpProblem {
        hessian,
        gradient,
        constraints: a * &basis,
        bounds: b - a * f_base,
    };
    let sol = solve(&problem, DEFAULT_MAX_ITERATIONS)?;
    Ok(basis * sol.x)
}

/// Orthonormal basis of the range of a symmetric projector.
fn range_basis(projector: &DMatrix<f64>) -> DMatrix<f64> {
    let n = projector.nrows();
    let complement = DMatrix::identity(n, n) - projector;
    linalg::nullspace_basis(&complement)
}
