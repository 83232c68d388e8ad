//! Bounded Levenberg-Marquardt iteration.
//!
//! Damping follows Nielsen's gain-ratio update with MINPACK-style diagonal
//! scaling. Parameters leaving their box are projected back after every
//! step; components sitting on a bound whose gradient points outward are
//! frozen for that iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    fn jacobian(&self, p: &[f64], r: &[f64], out: &mut DMatrix<f64>);
    /// Maps `p` back into the feasible set.
    fn project(&self, p: &mut [f64]);
    /// Closed box for component `j`; periodic components return infinities.
    fn bounds(&self, j: usize) -> (f64, f64);
    /// Difference `b − a` respecting any periodicity.
    fn difference(&self, j: usize, a: f64, b: f64) -> f64 {
        let _ = j;
        b - a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Step,
    Grad,
    Cost,
    MaxIter,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    pub tol_step: f64,
    pub tol_grad: f64,
    pub tol_cost: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cost: f64,
    pub n_iter: usize,
    pub termination: Termination,
    /// Cost of the start followed by every accepted iterate.
    pub history: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub(crate) fn minimize<P: LeastSquares>(problem: &P, start: &[f64], opts: &LmOptions) -> Result<LmOutcome> {
    let k = problem.n_params();
    let m = problem.n_residuals();
    let mut p = start.to_vec();
    problem.project(&mut p);

    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::invalid("model is not finite at the starting point"));
    }
    let mut history = vec![cost];
    // Costs this small are at the rounding floor of the residuals.
    let floor = f64::EPSILON * f64::EPSILON * m as f64;

    let mut jac = DMatrix::zeros(m, k);
    let mut diag = vec![0.0f64; k];
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut r_trial = vec![0.0; m];
    let mut p_trial = vec![0.0; k];

    for iter in 0..opts.max_iter {
        if cost <= floor {
            return Ok(done(p, r, cost, iter, Termination::Cost, history));
        }
        problem.jacobian(&p, &r, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        let normal = jac.tr_mul(&jac);
        if grad.iter().chain(normal.iter()).any(|x| !x.is_finite()) {
            return Err(Error::SingularNormalEquations);
        }
        for j in 0..k {
            let col = normal[(j, j)].sqrt();
            diag[j] = diag[j].max(col);
            if diag[j] == 0.0 {
                diag[j] = 1.0;
            }
        }

        let active: Vec<usize> = (0..k)
            .filter(|&j| {
                let (lo, hi) = problem.bounds(j);
                !((p[j] <= lo && grad[j] > 0.0) || (p[j] >= hi && grad[j] < 0.0))
            })
            .collect();
        if active.is_empty() {
            return Ok(done(p, r, cost, iter, Termination::Grad, history));
        }

        let rnorm = cost.sqrt();
        let gmax = active
            .iter()
            .map(|&j| {
                let cn = normal[(j, j)].sqrt();
                if cn == 0.0 {
                    0.0
                } else {
                    grad[j].abs() / (cn * rnorm)
                }
            })
            .fold(0.0, f64::max);
        if gmax <= opts.tol_grad {
            return Ok(done(p, r, cost, iter, Termination::Grad, history));
        }

        let na = active.len();
        let sub_n = DMatrix::from_fn(na, na, |a, b| normal[(active[a], active[b])]);
        let sub_g = DVector::from_fn(na, |a, _| grad[active[a]]);

        loop {
            let mut lhs = sub_n.clone();
            for a in 0..na {
                let d = diag[active[a]];
                lhs[(a, a)] += lambda * d * d;
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    return Err(Error::SingularNormalEquations);
                }
                continue;
            };
            let delta = chol.solve(&(-&sub_g));

            p_trial.copy_from_slice(&p);
            for a in 0..na {
                p_trial[active[a]] += delta[a];
            }
            problem.project(&mut p_trial);
            let step: Vec<f64> = (0..k).map(|j| problem.difference(j, p[j], p_trial[j])).collect();
            let small_step = (0..k).all(|j| step[j].abs() <= opts.tol_step * (p[j].abs() + opts.tol_step));

            problem.residuals(&p_trial, &mut r_trial);
            let trial_cost = sum_sq(&r_trial);

            let sv = DVector::from_column_slice(&step);
            let lin = &rv + &jac * &sv;
            let predicted = cost - lin.norm_squared();

            if trial_cost.is_finite() && trial_cost < cost {
                let actual = cost - trial_cost;
                let rho = if predicted > 0.0 { actual / predicted } else { 1.0 };
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                std::mem::swap(&mut p, &mut p_trial);
                std::mem::swap(&mut r, &mut r_trial);
                let old = cost;
                cost = trial_cost;
                history.push(cost);
                if small_step {
                    return Ok(done(p, r, cost, iter + 1, Termination::Step, history));
                }
                if actual <= opts.tol_cost * old && predicted.abs() <= opts.tol_cost * old {
                    return Ok(done(p, r, cost, iter + 1, Termination::Cost, history));
                }
                break;
            }
            if small_step {
                return Ok(done(p, r, cost, iter + 1, Termination::Step, history));
            }
            lambda *= nu;
            nu *= 2.0;
            if !lambda.is_finite() || lambda > 1e30 {
                return Ok(done(p, r, cost, iter + 1, Termination::Step, history));
            }
        }
    }
    Ok(done(p, r, cost, opts.max_iter, Termination::MaxIter, history))
}

fn done(
    params: Vec<f64>,
    residuals: Vec<f64>,
    cost: f64,
    n_iter: usize,
    termination: Termination,
    history: Vec<f64>,
) -> LmOutcome {
    LmOutcome { params, residuals, cost, n_iter, termination, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (10 (y − x²), 1 − x) with an optional box.
    struct Rosen {
        lo: [f64; 2],
        hi: [f64; 2],
    }

    impl LeastSquares for Rosen {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
        fn jacobian(&self, p: &[f64], _r: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] = -20.0 * p[0];
            out[(0, 1)] = 10.0;
            out[(1, 0)] = -1.0;
            out[(1, 1)] = 0.0;
        }
        fn project(&self, p: &mut [f64]) {
            for (j, v) in p.iter_mut().enumerate() {
                *v = v.clamp(self.lo[j], self.hi[j]);
            }
        }
        fn bounds(&self, j: usize) -> (f64, f64) {
            (self.lo[j], self.hi[j])
        }
    }

    fn opts() -> LmOptions {
        LmOptions { max_iter: 500, tol_step: 1e-12, tol_grad: 1e-12, tol_cost: 1e-15 }
    }

    #[test]
    fn solves_rosenbrock() {
        let prob = Rosen { lo: [f64::NEG_INFINITY; 2], hi: [f64::INFINITY; 2] };
        let out = minimize(&prob, &[-1.2, 1.0], &opts()).unwrap();
        assert!((out.params[0] - 1.0).abs() < 1e-8, "{:?}", out.params);
        assert!((out.params[1] - 1.0).abs() < 1e-8);
        assert_ne!(out.termination, Termination::MaxIter);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_box() {
        let prob = Rosen { lo: [f64::NEG_INFINITY, f64::NEG_INFINITY], hi: [0.5, f64::INFINITY] };
        let out = minimize(&prob, &[-1.2, 1.0], &opts()).unwrap();
        assert!((out.params[0] - 0.5).abs() < 1e-10, "{:?}", out.params);
        assert!((out.params[1] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn max_iter_is_reported() {
        let prob = Rosen { lo: [f64::NEG_INFINITY; 2], hi: [f64::INFINITY; 2] };
        let out = minimize(&prob, &[-1.2, 1.0], &LmOptions { max_iter: 2, ..opts() }).unwrap();
        assert_eq!(out.termination, Termination::MaxIter);
        assert_eq!(out.n_iter, 2);
    }
}
