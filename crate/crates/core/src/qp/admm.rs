//! Dense convex QP solver:
//!
//! ```text
//! minimize 1/2 x'Px + c'x   subject to   l <= Ax <= u
//! ```
//!
//! Operator splitting (ADMM with over-relaxation, Ruiz scaling and adaptive
//! step size) produces an approximate solution and active set; a primal-dual
//! active-set refinement then solves the KKT system of that set exactly.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
}

#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmSettings {
    pub tolerance: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 10_000, rho: 0.1, sigma: 1e-6, alpha: 1.6 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: InnerStatus,
    pub iterations: usize,
    /// Relative residuals (see [`residuals`]).
    pub primal_residual: f64,
    pub dual_residual: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Relative primal and dual residuals of `(x, y)` on the unscaled problem:
/// `|Ax - proj(Ax)| / max(1, |Ax|)` and
/// `|Px + c + A'y| / max(1, |Px|, |A'y|, |c|)` in the max-norm.
pub fn residuals(qp: &DenseQp, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let ax = &qp.a * x;
    let mut viol: f64 = 0.0;
    for i in 0..ax.len() {
        viol = viol.max(qp.l[i] - ax[i]).max(ax[i] - qp.u[i]);
    }
    let prim = viol.max(0.0) / inf_norm(&ax).max(1.0);
    let px = &qp.p * x;
    let aty = qp.a.transpose() * y;
    let r = &px + &qp.c + &aty;
    let dual = inf_norm(&r) / inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&qp.c)).max(1.0);
    (prim, dual)
}

struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

fn ruiz(qp: &DenseQp) -> (DenseQp, Scaling) {
    let n = qp.c.len();
    let m = qp.l.len();
    let mut s = qp.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..15 {
        let mut dd = DVector::from_element(n, 0.0);
        for j in 0..n {
            let mut norm: f64 = 0.0;
            for i in 0..n {
                norm = norm.max(s.p[(i, j)].abs());
            }
            for i in 0..m {
                norm = norm.max(s.a[(i, j)].abs());
            }
            dd[j] = 1.0 / clamp(norm).sqrt();
        }
        let mut ee = DVector::from_element(m, 0.0);
        for i in 0..m {
            let mut norm: f64 = 0.0;
            for j in 0..n {
                norm = norm.max(s.a[(i, j)].abs());
            }
            ee[i] = 1.0 / clamp(norm).sqrt();
        }
        for i in 0..n {
            for j in 0..n {
                s.p[(i, j)] *= dd[i] * dd[j];
            }
            s.c[i] *= dd[i];
        }
        for i in 0..m {
            for j in 0..n {
                s.a[(i, j)] *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    let mut pnorm = 0.0;
    for j in 0..n {
        let mut col: f64 = 0.0;
        for i in 0..n {
            col = col.max(s.p[(i, j)].abs());
        }
        pnorm += col;
    }
    let cost = 1.0 / clamp((pnorm / n.max(1) as f64).max(inf_norm(&s.c)));
    s.p *= cost;
    s.c *= cost;
    for i in 0..m {
        s.l[i] *= e[i];
        s.u[i] *= e[i];
    }
    (s, Scaling { d, e, cost })
}

fn factor(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    rho: &DVector<f64>,
    sigma: f64,
) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    let n = p.nrows();
    let mut k = p.clone();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    let mut ra = a.clone();
    for i in 0..a.nrows() {
        for j in 0..n {
            ra[(i, j)] *= rho[i];
        }
    }
    k += a.transpose() * ra;
    k.cholesky().expect("P + sigma I + A' R A is positive definite")
}

fn rho_vector(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        l.len(),
        l.iter().zip(u.iter()).map(|(lo, hi)| {
            if lo.is_infinite() && hi.is_infinite() {
                1e-6
            } else if (hi - lo).abs() < 1e-12 {
                1e3 * rho
            } else {
                rho
            }
        }),
    )
}

/// Solves the QP from the warm start `x0`.
pub fn solve_qp(qp: &DenseQp, x0: &DVector<f64>, settings: &AdmmSettings) -> QpSolution {
    let m = qp.l.len();
    let (s, sc) = ruiz(qp);
    let mut x = x0.component_div(&sc.d);
    let mut z = &s.a * &x;
    for i in 0..m {
        z[i] = z[i].clamp(s.l[i], s.u[i]);
    }
    let mut y = DVector::from_element(m, 0.0);
    let mut rho = settings.rho;
    let mut rv = rho_vector(&s.l, &s.u, rho);
    let mut chol = factor(&s.p, &s.a, &rv, settings.sigma);
    let eps = 1e-6;
    let mut status = InnerStatus::MaxIterations;
    let mut iterations = settings.max_iter;
    for k in 1..=settings.max_iter {
        let rhs = settings.sigma * &x - &s.c + s.a.transpose() * (rv.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &s.a * &xt;
        let x_new = settings.alpha * &xt + (1.0 - settings.alpha) * &x;
        let zr = settings.alpha * &zt + (1.0 - settings.alpha) * &z;
        let mut z_new = &zr + y.component_div(&rv);
        for i in 0..m {
            z_new[i] = z_new[i].clamp(s.l[i], s.u[i]);
        }
        let y_new = &y + rv.component_mul(&(&zr - &z_new));
        let dy = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        if k % 10 == 0 || k == settings.max_iter {
            // scaled-space stopping test
            let ax = &s.a * &x;
            let px = &s.p * &x;
            let aty = s.a.transpose() * &y;
            let rp = inf_norm(&(&ax - &z).component_div(&sc.e));
            let rd = inf_norm(&(&px + &s.c + &aty).component_div(&sc.d)) / sc.cost;
            let ep = eps * (1.0 + inf_norm(&ax.component_div(&sc.e)).max(inf_norm(&z.component_div(&sc.e))));
            let ed = eps
                * (1.0
                    + inf_norm(&px.component_div(&sc.d))
                        .max(inf_norm(&aty.component_div(&sc.d)))
                        .max(inf_norm(&s.c.component_div(&sc.d)))
                        / sc.cost);
            if rp <= ep && rd <= ed {
                status = InnerStatus::Solved;
                iterations = k;
                break;
            }
            // infeasibility certificate
            let ndy = inf_norm(&dy);
            if ndy > 1e-12 {
                let atdy = inf_norm(&(s.a.transpose() * &dy));
                let mut support = 0.0;
                let mut bounded = true;
                for i in 0..m {
                    if dy[i] > 0.0 {
                        if s.u[i].is_infinite() {
                            bounded = false;
                        } else {
                            support += s.u[i] * dy[i];
                        }
                    } else if dy[i] < 0.0 {
                        if s.l[i].is_infinite() {
                            bounded = false;
                        } else {
                            support += s.l[i] * dy[i];
                        }
                    }
                }
                if bounded && atdy <= 1e-9 * ndy && support < -1e-7 * ndy {
                    status = InnerStatus::PrimalInfeasible;
                    iterations = k;
                    break;
                }
            }
            if k % 50 == 0 {
                let pn = rp / (1e-12 + inf_norm(&ax.component_div(&sc.e)).max(inf_norm(&z.component_div(&sc.e))));
                let dn = rd
                    / (1e-12
                        + inf_norm(&px.component_div(&sc.d))
                            .max(inf_norm(&aty.component_div(&sc.d)))
                            .max(inf_norm(&s.c.component_div(&sc.d)))
                            / sc.cost);
                let new_rho = (rho * (pn / dn.max(1e-12)).sqrt()).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    rho = new_rho;
                    rv = rho_vector(&s.l, &s.u, rho);
                    chol = factor(&s.p, &s.a, &rv, settings.sigma);
                }
            }
        }
    }
    let x_u = x.component_mul(&sc.d);
    let y_u = y.component_mul(&sc.e) / sc.cost;
    if status == InnerStatus::PrimalInfeasible {
        let (p, d) = residuals(qp, &x_u, &y_u);
        return QpSolution { x: x_u, y: y_u, status, iterations, primal_residual: p, dual_residual: d };
    }
    let (p0, d0) = residuals(qp, &x_u, &y_u);
    let mut best = QpSolution { x: x_u, y: y_u, status, iterations, primal_residual: p0, dual_residual: d0 };
    if let Some((xp, yp)) = polish(qp, &best.x, &best.y) {
        let (p, d) = residuals(qp, &xp, &yp);
        if p.max(d) <= settings.tolerance.max(p0.max(d0)) {
            best.x = xp;
            best.y = yp;
            best.primal_residual = p;
            best.dual_residual = d;
        }
    }
    best.status = if best.primal_residual <= settings.tolerance && best.dual_residual <= settings.tolerance {
        InnerStatus::Solved
    } else {
        InnerStatus::MaxIterations
    };
    best
}

/// Primal-dual active-set refinement starting from the ADMM multipliers.
fn polish(qp: &DenseQp, x0: &DVector<f64>, y0: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = x0.len();
    let m = y0.len();
    let thr = 1e-9 * (1.0 + inf_norm(y0));
    // active: -1 lower, +1 upper, 0 inactive
    let mut act: Vec<i8> = (0..m)
        .map(|i| {
            if (qp.u[i] - qp.l[i]).abs() < 1e-12 || y0[i] > thr {
                1
            } else if y0[i] < -thr {
                -1
            } else {
                0
            }
        })
        .collect();
    let delta = 1e-9;
    for _ in 0..50 {
        let rows: Vec<usize> = (0..m).filter(|&i| act[i] != 0).collect();
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = qp.p[(i, j)];
            }
            kkt[(i, i)] += delta;
            rhs[i] = -qp.c[i] + delta * x0[i];
        }
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.a[(i, j)];
                kkt[(j, n + r)] = qp.a[(i, j)];
            }
            kkt[(n + r, n + r)] = -delta;
            rhs[n + r] = if act[i] > 0 { qp.u[i] } else { qp.l[i] };
        }
        // regularized system, refined against the exact one
        let lu = kkt.clone().lu();
        let mut sol = lu.solve(&rhs)?;
        let mut exact = kkt.clone();
        for i in 0..n {
            exact[(i, i)] -= delta;
        }
        for r in 0..k {
            exact[(n + r, n + r)] = 0.0;
        }
        let mut exact_rhs = rhs.clone();
        for i in 0..n {
            exact_rhs[i] += -delta * x0[i];
        }
        for _ in 0..5 {
            let res = &exact_rhs - &exact * &sol;
            sol += lu.solve(&res)?;
        }
        let x = sol.rows(0, n).into_owned();
        let mut y = DVector::zeros(m);
        for (r, &i) in rows.iter().enumerate() {
            y[i] = sol[n + r];
        }
        let ax = &qp.a * &x;
        let mut changed = false;
        let mut worst: Option<(usize, f64, i8)> = None;
        for i in 0..m {
            let tol = 1e-10 * (1.0 + ax[i].abs());
            if act[i] == 0 {
                if ax[i] > qp.u[i] + tol {
                    let v = ax[i] - qp.u[i];
                    if worst.is_none_or(|w| v > w.1) {
                        worst = Some((i, v, 1));
                    }
                } else if ax[i] < qp.l[i] - tol {
                    let v = qp.l[i] - ax[i];
                    if worst.is_none_or(|w| v > w.1) {
                        worst = Some((i, v, -1));
                    }
                }
            }
        }
        if let Some((i, _, side)) = worst {
            act[i] = side;
            changed = true;
        }
        if !changed {
            // drop the most wrong-signed multiplier
            let mut drop: Option<(usize, f64)> = None;
            for &i in &rows {
                if (qp.u[i] - qp.l[i]).abs() < 1e-12 {
                    continue;
                }
                let wrong = if act[i] > 0 { -y[i] } else { y[i] };
                if wrong > 1e-12 * (1.0 + inf_norm(&qp.c)) && drop.is_none_or(|d| wrong > d.1) {
                    drop = Some((i, wrong));
                }
            }
            if let Some((i, _)) = drop {
                act[i] = 0;
                changed = true;
            }
        }
        if !changed {
            return Some((x, y));
        }
    }
    None
}
