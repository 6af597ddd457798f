//! The time iteration operator and its fixed point.
//!
//! For a candidate policy `c`, `(Tc)(w, z)` is the `xi` in `(0, w]` solving
//!
//! ```text
//! u'(xi) = max{ g(xi), u'(w) },
//! g(xi)  = E_z[ beta' R' (u'(c(w', z')) + v'(w')) ],   w' = R'(w - xi) + Y'.
//! ```
//!
//! `u'` is strictly decreasing and `g` is nondecreasing in `xi`, so the root is
//! bracketed by `(0, w]` and found by bisection.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_assumptions, Preferences, StochasticPrimitives};
use crate::policy::{rho_distance, ConsumptionPolicy, WealthGrid};

const BISECTION_MAX_ITER: usize = 200;
const MARGINAL_ABS_TOL: f64 = 1e-12;
/// Slack on the "iterates are nonincreasing" check.
const DESCENT_TOL: f64 = 1e-11;

/// A continuation with positive weight `P * weight * beta * R`.
#[derive(Debug, Clone, Copy)]
struct Term {
    zhat: usize,
    shock: usize,
    coef: f64,
    ret: f64,
    income: f64,
}

/// Expected marginal value of saving, with the continuation terms precomputed.
pub struct Operator<'a> {
    prefs: &'a Preferences,
    terms: Vec<Vec<Term>>,
}

impl<'a> Operator<'a> {
    pub fn new(prims: &StochasticPrimitives, prefs: &'a Preferences) -> Self {
        let terms = (0..prims.num_states())
            .map(|z| {
                prims
                    .branches(z)
                    .filter_map(|b| {
                        let coef = b.prob * b.beta * b.ret;
                        (coef > 0.0).then_some(Term {
                            zhat: b.zhat,
                            shock: b.shock,
                            coef,
                            ret: b.ret,
                            income: b.income,
                        })
                    })
                    .collect()
            })
            .collect();
        Self { prefs, terms }
    }

    /// `g(xi)` at wealth `w` in state `z`, summed in `z'`-major then shock order.
    pub fn expected_marginal(&self, pol: &ConsumptionPolicy, xi: f64, w: f64, z: usize) -> f64 {
        let s = w - xi;
        self.terms[z]
            .iter()
            .map(|t| {
                let next = t.ret * s + t.income;
                t.coef * (self.prefs.u_prime(pol.eval(next, t.zhat)) + self.prefs.v_prime(next))
            })
            .sum()
    }

    fn offending_term(&self, pol: &ConsumptionPolicy, xi: f64, w: f64, z: usize) -> Error {
        let s = w - xi;
        let bad = self.terms[z].iter().find(|t| {
            let next = t.ret * s + t.income;
            let v = t.coef * (self.prefs.u_prime(pol.eval(next, t.zhat)) + self.prefs.v_prime(next));
            !v.is_finite()
        });
        match bad {
            Some(t) => Error::NonFiniteExpectation { z, zhat: t.zhat, shock: t.shock },
            None => Error::Inconsistent(format!("expected marginal value is not finite at w={w}, z={z}")),
        }
    }

    /// `(Tc)(w, z)`.
    pub fn solve_node(&self, pol: &ConsumptionPolicy, w: f64, z: usize) -> Result<f64> {
        let u = |x: f64| self.prefs.u_prime(x);
        let g_at_w = self.expected_marginal(pol, w, w, z);
        if g_at_w.is_nan() {
            return Err(self.offending_term(pol, w, w, z));
        }
        if g_at_w <= u(w) {
            return Ok(w);
        }
        // interior root: u'(xi) = g(xi) with xi < w
        let (mut lo, mut hi) = (0.0_f64, w);
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let g = self.expected_marginal(pol, mid, w, z);
            if !g.is_finite() {
                return Err(self.offending_term(pol, mid, w, z));
            }
            if u(mid) > g {
                lo = mid;
            } else {
                hi = mid;
            }
            if lo > 0.0 {
                let u_hi = u(hi);
                if u(lo) - u_hi <= MARGINAL_ABS_TOL * u_hi.min(1.0) {
                    break;
                }
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Relative Euler-equation error of `pol` at node `(w, z)`.
    pub fn euler_error(&self, pol: &ConsumptionPolicy, c: f64, w: f64, z: usize) -> f64 {
        let g = self.expected_marginal(pol, c, w, z);
        let target = g.max(self.prefs.u_prime(w));
        let uc = self.prefs.u_prime(c);
        (uc - target).abs() / uc
    }
}

/// One application of the time iteration operator on every node and state.
///
/// The output's extrapolation exponent is capped by the input's. The
/// uncapped exponent weighs an interior node negatively, which would cost `T`
/// its monotonicity near `w_max`.
pub fn apply_t(
    pol: &ConsumptionPolicy,
    prims: &StochasticPrimitives,
    prefs: &Preferences,
) -> Result<ConsumptionPolicy> {
    if pol.num_states() != prims.num_states() {
        return Err(Error::InvalidPolicy(format!(
            "policy has {} states, model has {}",
            pol.num_states(),
            prims.num_states()
        )));
    }
    let op = Operator::new(prims, prefs);
    apply_with(&op, pol)
}

fn apply_with(op: &Operator<'_>, pol: &ConsumptionPolicy) -> Result<ConsumptionPolicy> {
    let grid = pol.grid().clone();
    let values = (0..pol.num_states())
        .map(|z| grid.points().par_iter().map(|&w| op.solve_node(pol, w, z)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let caps: Vec<f64> = (0..pol.num_states()).map(|z| pol.extrapolation_exponent(z)).collect();
    let out = ConsumptionPolicy::new(grid, values)?.with_exponent_cap(&caps);
    out.check_invariants()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub rho_history: Vec<f64>,
    /// Geometric mean of successive rho ratios over the last 10 iterations,
    /// skipping ratios that involve an exact zero.
    pub contraction_estimate: f64,
    #[serde(rename = "r_K1", serialize_with = "crate::io::ser_f64")]
    pub r_k1: f64,
    pub euler_residual_max: f64,
    /// Analytic binding threshold per state.
    #[serde(serialize_with = "crate::io::ser_vec_f64")]
    pub threshold: Vec<f64>,
}

fn contraction_estimate(history: &[f64]) -> f64 {
    let start = history.len().saturating_sub(11);
    let logs: Vec<f64> =
        history[start..].windows(2).filter(|p| p[0] > 0.0 && p[1] > 0.0).map(|p| (p[1] / p[0]).ln()).collect();
    if logs.is_empty() {
        return 0.0;
    }
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// Iterates `T` from `c_0(w, z) = w` until the rho distance between
/// successive iterates drops below `tol`.
pub fn solve(
    prims: &StochasticPrimitives,
    prefs: &Preferences,
    grid: WealthGrid,
    tol: f64,
    max_iter: usize,
) -> Result<(ConsumptionPolicy, SolveDiagnostics)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let report = validate_assumptions(prims, prefs)?;
    if !report.solvable() {
        return Err(Error::Precondition(report.messages.join("; ")));
    }
    let op = Operator::new(prims, prefs);
    let grid = Arc::new(grid);
    let mut current = ConsumptionPolicy::consume_everything(grid.clone(), prims.num_states());
    let mut rho_history = Vec::new();

    loop {
        let next = apply_with(&op, &current)?;
        check_descent(&next, &current)?;
        let rho = rho_distance(&next, &current, prefs.gamma)?.scalar;
        rho_history.push(rho);
        current = next;
        if rho < tol {
            break;
        }
        if rho_history.len() >= max_iter {
            let diagnostics = SolveDiagnostics {
                iterations: rho_history.len(),
                contraction_estimate: contraction_estimate(&rho_history),
                rho_history,
                r_k1: report.r_k1,
                euler_residual_max: f64::NAN,
                threshold: analytic_threshold(&current, prims, prefs),
            };
            return Err(Error::NotConverged(Box::new(diagnostics)));
        }
    }

    let diagnostics = SolveDiagnostics {
        iterations: rho_history.len(),
        contraction_estimate: contraction_estimate(&rho_history),
        rho_history,
        r_k1: report.r_k1,
        euler_residual_max: euler_residual(&current, prims, prefs),
        threshold: analytic_threshold(&current, prims, prefs),
    };
    Ok((current, diagnostics))
}

fn check_descent(next: &ConsumptionPolicy, prev: &ConsumptionPolicy) -> Result<()> {
    for z in 0..next.num_states() {
        for (i, (a, b)) in next.values(z).iter().zip(prev.values(z)).enumerate() {
            if *a > b * (1.0 + DESCENT_TOL) {
                return Err(Error::Inconsistent(format!("time iterates increased at node {i}, state {z}: {b} -> {a}")));
            }
        }
    }
    Ok(())
}

/// `(u')^{-1}( E_z[beta' R' (u'(c(Y', z')) + v'(Y'))] )` per state; `+inf`
/// when the expectation vanishes.
pub fn analytic_threshold(pol: &ConsumptionPolicy, prims: &StochasticPrimitives, prefs: &Preferences) -> Vec<f64> {
    let op = Operator::new(prims, prefs);
    (0..prims.num_states())
        .map(|z| {
            // with zero savings next-period wealth is just income
            let e = op.expected_marginal(pol, 1.0, 1.0, z);
            prefs.u_prime_inverse(e)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    #[serde(serialize_with = "crate::io::ser_vec_f64")]
    pub analytic: Vec<f64>,
    /// Largest grid node where the constraint binds, if any.
    #[serde(serialize_with = "crate::io::ser_vec_opt_f64")]
    pub empirical: Vec<Option<f64>>,
}

/// Analytic and empirical binding thresholds; errors if they are more than
/// one grid cell apart.
pub fn threshold_wealth(
    pol: &ConsumptionPolicy,
    prims: &StochasticPrimitives,
    prefs: &Preferences,
) -> Result<Thresholds> {
    let analytic = analytic_threshold(pol, prims, prefs);
    let p = pol.grid().points();
    let n = p.len();
    let mut empirical = Vec::with_capacity(pol.num_states());
    for (z, &wbar) in analytic.iter().enumerate() {
        let last = (0..n).rev().find(|&i| pol.is_constrained(i, z));
        let (lower, upper) = match last {
            None => (0.0, p[1]),
            Some(i) => (if i == 0 { 0.0 } else { p[i - 1] }, if i + 1 < n { p[i + 1] } else { f64::INFINITY }),
        };
        if !(wbar >= lower && wbar <= upper) {
            return Err(Error::Inconsistent(format!(
                "state {z}: analytic threshold {wbar} is not within one cell of the empirical one {:?}",
                last.map(|i| p[i])
            )));
        }
        empirical.push(last.map(|i| p[i]));
    }
    Ok(Thresholds { analytic, empirical })
}

/// Largest relative Euler error over the unconstrained nodes.
pub fn euler_residual(pol: &ConsumptionPolicy, prims: &StochasticPrimitives, prefs: &Preferences) -> f64 {
    let op = Operator::new(prims, prefs);
    let p = pol.grid().points();
    (0..pol.num_states())
        .flat_map(|z| (0..p.len()).map(move |i| (i, z)))
        .filter(|&(i, z)| !pol.is_constrained(i, z))
        .map(|(i, z)| op.euler_error(pol, pol.value(i, z), p[i], z))
        .fold(0.0, f64::max)
}
