//! The two-period model with wealth in utility.
//!
//! An agent with wealth `w` consumes `c` today and carries `R(w - c)` into the
//! last period, where it is consumed and also enjoyed as wealth:
//!
//! ```text
//! max  u(c) + beta [u(R(w - c)) + v(R(w - c))]
//! ```
//!
//! There is neither income nor uncertainty, so everything here is a scalar
//! root-finding problem. The results serve as ground truth for the
//! infinite-horizon solver.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{ser_f64, ser_vec_f64};
use crate::model::Preferences;

const BISECTION_MAX_ITER: usize = 400;
/// Open bracket `(0, 1)` for `c / w`, as tight as floats allow.
const T_LO: f64 = f64::MIN_POSITIVE;
const T_HI: f64 = 1.0 - f64::EPSILON / 2.0;
/// Relative tolerance on `c(w) / w` at the top decade.
pub const LIMIT_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPeriodSpec {
    pub prefs: Preferences,
    pub beta: f64,
    #[serde(rename = "R")]
    pub ret: f64,
}

impl TwoPeriodSpec {
    pub fn new(prefs: Preferences, beta: f64, ret: f64) -> Result<Self> {
        prefs.validate()?;
        if !(beta > 0.0 && beta.is_finite()) || !(ret > 0.0 && ret.is_finite()) {
            return Err(Error::InvalidModel(format!("beta and R must be positive, got beta={beta}, R={ret}")));
        }
        Ok(Self { prefs, beta, ret })
    }
}

/// Bisection for a decreasing function on `(lo, hi)`, down to adjacent floats.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    if !(f(lo) > 0.0) || !(f(hi) < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First-order condition divided by `w^(-gamma)`, as a function of `t = c / w`.
/// Decreasing in `t`.
fn scaled_foc(spec: &TwoPeriodSpec, w: f64, t: f64) -> f64 {
    let TwoPeriodSpec { prefs, beta, ret } = *spec;
    let (g, d) = (prefs.gamma, prefs.delta);
    let s = ret * (1.0 - t);
    let wealth_term = if prefs.psi == 0.0 { 0.0 } else { prefs.psi * beta * ret * s.powf(-d) * w.powf(g - d) };
    t.powf(-g) - beta * ret * s.powf(-g) - wealth_term
}

/// The unique `c` in `(0, w)` solving the first-order condition.
pub fn solve_two_period(spec: &TwoPeriodSpec, w: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Precondition(format!("wealth must be positive and finite, got {w}")));
    }
    let t = bisect_decreasing(|t| scaled_foc(spec, w, t), T_LO, T_HI)?;
    Ok(t * w)
}

/// Residual of the unscaled first-order condition at `c`.
pub fn foc_residual(spec: &TwoPeriodSpec, w: f64, c: f64) -> f64 {
    let p = &spec.prefs;
    let s = spec.ret * (w - c);
    p.u_prime(c) - spec.beta * spec.ret * (p.u_prime(s) + p.v_prime(s))
}

/// Limit of `c(w) / w` when `delta = gamma`.
pub fn cbar1(spec: &TwoPeriodSpec) -> Result<f64> {
    let p = &spec.prefs;
    if p.delta != p.gamma {
        return Err(Error::Precondition(format!("cbar1 needs delta = gamma, got {} and {}", p.delta, p.gamma)));
    }
    let k = spec.beta * spec.ret * (1.0 + p.psi);
    let g = p.gamma;
    bisect_decreasing(|c| c.powf(-g) - k * (spec.ret * (1.0 - c)).powf(-g), T_LO, T_HI)
}

/// Limit of `c(w) / w` when `delta > gamma`.
pub fn cbar2(gamma: f64, beta: f64, ret: f64) -> f64 {
    1.0 / (1.0 + (beta * ret.powf(1.0 - gamma)).powf(1.0 / gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TwoPeriodCase {
    #[serde(rename = "delta_lt_gamma")]
    Vanishing,
    #[serde(rename = "delta_eq_gamma")]
    KnifeEdge,
    #[serde(rename = "delta_gt_gamma")]
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub case: TwoPeriodCase,
    #[serde(serialize_with = "ser_vec_f64")]
    pub w: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub ratio: Vec<f64>,
    /// The limit of `c / w`; zero in the vanishing case.
    #[serde(serialize_with = "ser_f64")]
    pub limit: f64,
    /// Log-log slope of `c / w` against `w` over the top decade.
    #[serde(serialize_with = "ser_f64")]
    pub exponent: f64,
    pub passed: bool,
    /// `(w, c / w)` pairs that violated a check.
    pub offending: Vec<(f64, f64)>,
    pub messages: Vec<String>,
}

/// Checks the large-wealth behaviour of `c(w) / w` along `w_list`.
///
/// * `delta < gamma`: `c / w` stays below `(psi beta R^(1-delta))^(-1/gamma) w^(delta/gamma - 1)`
///   and its log-log slope is `delta/gamma - 1`.
/// * `delta = gamma`: `c / w` is within 1% of `cbar1`.
/// * `delta > gamma`: `c / w` is within 1% of `cbar2`.
///
/// Checks apply to the top decade of `w_list`; monotonicity of `c` applies to all of it.
pub fn verify_large_wealth_limits(spec: &TwoPeriodSpec, w_list: &[f64]) -> Result<LimitReport> {
    if w_list.len() < 2 || w_list.windows(2).any(|p| !(p[0] < p[1])) || !(w_list[0] > 0.0) {
        return Err(Error::Precondition("wealth list must be positive and strictly increasing".into()));
    }
    let w_top = *w_list.last().unwrap();
    if (w_top / w_list[0]).log10() < 6.0 {
        return Err(Error::Precondition("wealth list must span at least 6 decades".into()));
    }
    let p = spec.prefs;
    let case = if p.delta < p.gamma {
        TwoPeriodCase::Vanishing
    } else if p.delta == p.gamma {
        TwoPeriodCase::KnifeEdge
    } else {
        TwoPeriodCase::Positive
    };
    let cs = w_list.iter().map(|&w| solve_two_period(spec, w)).collect::<Result<Vec<_>>>()?;
    let ratio: Vec<f64> = cs.iter().zip(w_list).map(|(c, w)| c / w).collect();

    let mut offending = Vec::new();
    let mut messages = Vec::new();
    for i in 1..cs.len() {
        if !(cs[i] > cs[i - 1]) {
            offending.push((w_list[i], ratio[i]));
            messages.push(format!("c is not increasing between w={} and w={}", w_list[i - 1], w_list[i]));
        }
    }

    let top: Vec<usize> = (0..w_list.len()).filter(|&i| w_list[i] >= w_top / 10.0).collect();
    let exponent = if top.len() >= 2 {
        let (a, b) = (top[0], *top.last().unwrap());
        (ratio[b] / ratio[a]).ln() / (w_list[b] / w_list[a]).ln()
    } else {
        let n = w_list.len();
        (ratio[n - 1] / ratio[n - 2]).ln() / (w_list[n - 1] / w_list[n - 2]).ln()
    };

    let limit = match case {
        TwoPeriodCase::Vanishing => {
            let power = p.delta / p.gamma - 1.0;
            let scale = (p.psi * spec.beta * spec.ret.powf(1.0 - p.delta)).powf(-1.0 / p.gamma);
            for &i in &top {
                let bound = scale * w_list[i].powf(power);
                if ratio[i] > bound * (1.0 + LIMIT_TOL) {
                    offending.push((w_list[i], ratio[i]));
                    messages.push(format!("c/w = {} exceeds the power bound {bound} at w={}", ratio[i], w_list[i]));
                }
            }
            if top.len() >= 2 && !((exponent - power).abs() <= LIMIT_TOL * power.abs()) {
                messages.push(format!("log-log slope {exponent} differs from {power}"));
                offending.push((w_top, *ratio.last().unwrap()));
            }
            0.0
        }
        TwoPeriodCase::KnifeEdge | TwoPeriodCase::Positive => {
            let limit =
                if case == TwoPeriodCase::KnifeEdge { cbar1(spec)? } else { cbar2(p.gamma, spec.beta, spec.ret) };
            for &i in &top {
                if !((ratio[i] - limit).abs() <= LIMIT_TOL * limit) {
                    offending.push((w_list[i], ratio[i]));
                    messages.push(format!("c/w = {} is not within 1% of {limit} at w={}", ratio[i], w_list[i]));
                }
            }
            limit
        }
    };

    Ok(LimitReport {
        case,
        w: w_list.to_vec(),
        ratio,
        limit,
        exponent,
        passed: offending.is_empty(),
        offending,
        messages,
    })
}

/// `n` points per decade from `w_min` to `w_max`, both included.
pub fn log_wealth_list(w_min: f64, w_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (w_max / w_min).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n).map(|i| if i == n { w_max } else { w_min * 10f64.powf(decades * i as f64 / n as f64) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(g: f64, d: f64, psi: f64, beta: f64, r: f64) -> TwoPeriodSpec {
        TwoPeriodSpec::new(Preferences::new(g, d, psi).unwrap(), beta, r).unwrap()
    }

    #[test]
    fn log_knife_edge_is_a_third() {
        let s = spec(1.0, 1.0, 1.0, 1.0, 1.0);
        let c = solve_two_period(&s, 3.0).unwrap();
        assert!((c - 1.0).abs() < 1e-13);
        assert!(foc_residual(&s, 3.0, c).abs() < 1e-10);
    }

    #[test]
    fn log_without_wealth_utility_halves() {
        let s = spec(1.0, 1.0, 0.0, 1.0, 1.0);
        assert!((solve_two_period(&s, 2.0).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cbar_examples() {
        assert!((cbar1(&spec(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((cbar1(&spec(1.0, 1.0, 0.0, 1.0, 1.0)).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(cbar1(&spec(1.0, 2.0, 1.0, 1.0, 1.0)), Err(Error::Precondition(_))));
        for g in [0.5, 1.0, 4.0] {
            assert!((cbar2(g, 1.0, 1.0) - 0.5).abs() < 1e-15);
        }
        assert!((cbar2(1.0, 0.25, 1.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cbar2_matches_bisection() {
        let s = spec(2.0, 2.0, 0.0, 0.9, 1.1);
        assert!((cbar1(&s).unwrap() - cbar2(2.0, 0.9, 1.1)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let w = log_wealth_list(1.0, 1e6, 4);
        let rep = verify_large_wealth_limits(&spec(2.0, 1.0, 1.0, 1.0, 1.0), &w).unwrap();
        assert!(rep.passed, "{:?}", rep.messages);
        assert!(*rep.ratio.last().unwrap() <= 1e-3 * 1.01);

        let rep = verify_large_wealth_limits(&spec(1.0, 1.0, 1.0, 1.0, 1.0), &w).unwrap();
        assert!(rep.passed);
        assert!(rep.ratio.iter().all(|r| (r - 1.0 / 3.0).abs() < 1e-12));

        let rep = verify_large_wealth_limits(&spec(1.0, 2.0, 5.0, 0.25, 1.0), &w).unwrap();
        assert!(rep.passed, "{:?}", rep.messages);
        assert!((rep.limit - 0.8).abs() < 1e-15);
    }

    #[test]
    fn short_wealth_list_is_rejected() {
        let s = spec(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!(verify_large_wealth_limits(&s, &[1.0, 10.0, 100.0]).is_err());
        assert!(verify_large_wealth_limits(&s, &[1.0, 1e7, 1e6]).is_err());
    }

    #[test]
    fn wealth_list_endpoints() {
        let w = log_wealth_list(1.0, 1e6, 3);
        assert_eq!(w.len(), 19);
        assert_eq!(w[0], 1.0);
        assert_eq!(*w.last().unwrap(), 1e6);
    }
}
