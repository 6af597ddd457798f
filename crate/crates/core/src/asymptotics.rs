//! Asymptotic marginal propensity to consume.
//!
//! With power utilities the limit of `c(w, z) / w` as `w -> inf` is governed by
//! the relative curvature of the two utilities and by the matrix
//! `K = K(1 - gamma)`:
//!
//! * `delta < gamma`: the limit is zero, and `c` grows no faster than
//!   `w^(delta/gamma)` with a constant given by the fixed point of `G`.
//! * `delta >= gamma`: the limit is `x*(z)^(-1/gamma)` where `x*` is the fixed
//!   point of `F` on `[1, inf]^Z`, provided `r(K) < 1`; it is zero when `K` is
//!   irreducible with `r(K) >= 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{ser_f64, ser_opt_vec_f64, ser_vec_f64};
use crate::model::{validate_assumptions, Preferences, StochasticPrimitives};
use crate::policy::{ConsumptionPolicy, WealthGrid};
use crate::spectral::{build_k, divergent_series_states, KMatrix};
use crate::time_iteration::{solve, SolveDiagnostics};

/// Iterates beyond this are taken as diverging.
pub const DIVERGENCE_CUTOFF: f64 = 1e12;
const MAX_FIXED_POINT_ITER: usize = 1_000_000;
const FIXED_POINT_TOL: f64 = 1e-13;
/// `compare` refuses to measure slopes with less headroom above the threshold.
pub const MIN_HEADROOM_DECADES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "ZeroMPC_delta_lt_gamma")]
    ZeroMpcDeltaLtGamma,
    #[serde(rename = "ZeroMPC_spectral")]
    ZeroMpcSpectral,
    #[serde(rename = "KnifeEdge_delta_eq_gamma")]
    KnifeEdge,
    #[serde(rename = "Positive_delta_gt_gamma")]
    Positive,
    Unclassified,
}

impl Regime {
    pub fn is_zero_mpc(self) -> bool {
        matches!(self, Regime::ZeroMpcDeltaLtGamma | Regime::ZeroMpcSpectral)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub regime: Regime,
    /// `r(K(1 - gamma))`.
    #[serde(rename = "r_K1mg", serialize_with = "ser_f64")]
    pub r_k1mg: f64,
    pub irreducible: bool,
    #[serde(serialize_with = "ser_vec_f64")]
    pub x_star: Vec<f64>,
    /// `None` when the regime has no prediction.
    #[serde(serialize_with = "ser_opt_vec_f64")]
    pub predicted_mpc: Option<Vec<f64>>,
    #[serde(serialize_with = "ser_opt_vec_f64")]
    pub g_fixed_point: Option<Vec<f64>>,
    /// `y*^(-1/gamma)`, the bound on `c / w^(delta/gamma)`.
    #[serde(serialize_with = "ser_opt_vec_f64")]
    pub power_bound: Option<Vec<f64>>,
    #[serde(serialize_with = "ser_opt_vec_f64")]
    pub measured_mpc: Option<Vec<f64>>,
    pub messages: Vec<String>,
}

/// `phi(t) = (1 + t^(1/gamma))^gamma`, with `phi(inf) = inf`.
pub fn phi(t: f64, gamma: f64) -> f64 {
    if t.is_infinite() {
        f64::INFINITY
    } else {
        (1.0 + t.powf(1.0 / gamma)).powf(gamma)
    }
}

fn apply_f_with(k: &KMatrix, x: &[f64], prefs: &Preferences) -> Vec<f64> {
    use std::cmp::Ordering;
    match prefs.delta.partial_cmp(&prefs.gamma) {
        Some(Ordering::Less) => vec![f64::INFINITY; x.len()],
        Some(Ordering::Equal) => {
            let shifted: Vec<f64> = x.iter().map(|v| v + prefs.psi).collect();
            k.apply(&shifted).into_iter().map(|t| phi(t, prefs.gamma)).collect()
        }
        _ => k.apply(x).into_iter().map(|t| phi(t, prefs.gamma)).collect(),
    }
}

/// The operator `F` on `[1, inf]^Z`.
pub fn apply_f(x: &[f64], prims: &StochasticPrimitives, prefs: &Preferences) -> Vec<f64> {
    apply_f_with(&build_k(prims, 1.0 - prefs.gamma), x, prefs)
}

/// Fixed point of `F` by monotone iteration from `x_0 = 1`.
pub fn fixed_point_f(prims: &StochasticPrimitives, prefs: &Preferences, tol: f64) -> Result<Vec<f64>> {
    if prefs.delta < prefs.gamma {
        return Err(Error::Precondition("F has no finite fixed point when delta < gamma".into()));
    }
    let k = build_k(prims, 1.0 - prefs.gamma);
    let mut x = vec![1.0; k.dim()];
    for _ in 0..MAX_FIXED_POINT_ITER {
        let next = apply_f_with(&k, &x, prefs);
        if next.iter().any(|v| !(*v <= DIVERGENCE_CUTOFF)) {
            return Err(Error::NoFiniteFixedPoint(DIVERGENCE_CUTOFF));
        }
        let mut step = 0.0_f64;
        for (a, b) in next.iter().zip(&x) {
            if *a < b * (1.0 - 1e-14) {
                return Err(Error::Inconsistent(format!("F iterates decreased: {b} -> {a}")));
            }
            step = step.max((a - b).abs());
        }
        x = next;
        if step < tol {
            return Ok(x);
        }
    }
    Err(Error::Inconsistent(format!("F iteration did not settle in {MAX_FIXED_POINT_ITER} steps")))
}

/// `(Gy)(z) = E_z[beta' R'^(1-delta) (y(z') + psi)]`.
pub fn apply_g(y: &[f64], prims: &StochasticPrimitives, prefs: &Preferences) -> Vec<f64> {
    apply_g_with(&build_k(prims, 1.0 - prefs.delta), y, prefs)
}

fn apply_g_with(k: &KMatrix, y: &[f64], prefs: &Preferences) -> Vec<f64> {
    let shifted: Vec<f64> = y.iter().map(|v| v + prefs.psi).collect();
    k.apply(&shifted)
}

/// Limit of `G^n 0`. States whose iterates grow without bound are `+inf`.
pub fn fixed_point_g(prims: &StochasticPrimitives, prefs: &Preferences, tol: f64) -> Result<Vec<f64>> {
    let k = build_k(prims, 1.0 - prefs.delta);
    let n = k.dim();
    if prefs.psi == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let divergent = divergent_series_states(&k.entries)?;
    let mut y: Vec<f64> = divergent.iter().map(|&d| if d { f64::INFINITY } else { 0.0 }).collect();
    for _ in 0..MAX_FIXED_POINT_ITER {
        let mut next = apply_g_with(&k, &y, prefs);
        for (v, &d) in next.iter_mut().zip(&divergent) {
            if d {
                *v = f64::INFINITY;
            }
        }
        let step = next.iter().zip(&y).filter(|(a, _)| a.is_finite()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = next;
        if step < tol {
            return Ok(y);
        }
    }
    Err(Error::Inconsistent(format!("G iteration did not settle in {MAX_FIXED_POINT_ITER} steps")))
}

/// Decides which asymptotic regime applies and computes its predictions.
pub fn classify(prims: &StochasticPrimitives, prefs: &Preferences) -> Result<AsymptoticReport> {
    let assumptions = validate_assumptions(prims, prefs)?;
    let n = prims.num_states();
    let k = build_k(prims, 1.0 - prefs.gamma);
    let irreducible = k.is_irreducible();
    let r_k1mg = if k.has_infinite() { f64::INFINITY } else { k.spectral_radius()? };
    let (gamma, delta) = (prefs.gamma, prefs.delta);
    let mut report = AsymptoticReport {
        regime: Regime::Unclassified,
        r_k1mg,
        irreducible,
        x_star: vec![f64::INFINITY; n],
        predicted_mpc: None,
        g_fixed_point: None,
        power_bound: None,
        measured_mpc: None,
        messages: Vec::new(),
    };

    if delta < gamma {
        if assumptions.positive_betar_ok {
            let y = fixed_point_g(prims, prefs, FIXED_POINT_TOL)?;
            report.power_bound =
                Some(y.iter().map(|v| if v.is_infinite() { 0.0 } else { v.powf(-1.0 / gamma) }).collect());
            report.g_fixed_point = Some(y);
            report.regime = Regime::ZeroMpcDeltaLtGamma;
            report.predicted_mpc = Some(vec![0.0; n]);
        } else {
            report.messages.push("delta < gamma but Pr_z[beta' R' > 0] = 0 for some state".into());
        }
        return Ok(report);
    }

    if r_k1mg >= 1.0 {
        if irreducible {
            report.regime = Regime::ZeroMpcSpectral;
            report.predicted_mpc = Some(vec![0.0; n]);
        } else {
            report.messages.push(format!("r(K(1-gamma)) = {r_k1mg} >= 1 but K(1-gamma) is reducible"));
        }
        return Ok(report);
    }

    let x = fixed_point_f(prims, prefs, FIXED_POINT_TOL)?;
    let mpc: Vec<f64> = x.iter().map(|v| v.powf(-1.0 / gamma)).collect();
    report.x_star = x;
    if delta == gamma {
        report.regime = Regime::KnifeEdge;
        report.predicted_mpc = Some(mpc);
    } else if assumptions.a4_ok {
        report.regime = Regime::Positive;
        report.predicted_mpc = Some(mpc);
    } else {
        report.messages.push("delta > gamma but income is not bounded away from zero".into());
    }
    Ok(report)
}

/// Grid nodes in the top decade `[w_max / 10, w_max]`.
fn top_decade(grid: &WealthGrid) -> std::ops::Range<usize> {
    let cut = grid.w_max() / 10.0;
    let start = grid.points().partition_point(|&w| w < cut);
    start..grid.len()
}

/// Median of `c / w` and the log-log slope of `c` against `w`, both over the
/// top decade of the grid. `decades` is the span the grid must cover.
pub fn measured_slope(pol: &ConsumptionPolicy, z: usize, decades: u32) -> Result<(f64, f64)> {
    let grid = pol.grid();
    let span = (grid.w_max() / grid.w_min()).log10();
    if span < f64::from(decades) {
        return Err(Error::InvalidGrid(format!("grid spans {span:.2} decades, need {decades}")));
    }
    let idx = top_decade(grid);
    if idx.len() < 3 {
        return Err(Error::InvalidGrid("fewer than 3 nodes in the top decade".into()));
    }
    let p = grid.points();
    let mut ratios: Vec<f64> = idx.clone().map(|i| pol.value(i, z) / p[i]).collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let m = ratios.len();
    let slope = if m % 2 == 1 { ratios[m / 2] } else { 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]) };

    let xs: Vec<f64> = idx.clone().map(|i| p[i].ln()).collect();
    let ys: Vec<f64> = idx.map(|i| pol.value(i, z).ln()).collect();
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok((slope, sxy / sxx))
}

/// `max c(w, z) / w^power` over the top decade of the grid.
pub fn max_power_ratio(pol: &ConsumptionPolicy, z: usize, power: f64) -> f64 {
    let p = pol.grid().points();
    top_decade(pol.grid()).map(|i| pol.value(i, z) / p[i].powf(power)).fold(0.0, f64::max)
}

/// Predicted against measured asymptotic MPCs from a full solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub regime: Regime,
    #[serde(serialize_with = "ser_opt_vec_f64")]
    pub predicted_mpc: Option<Vec<f64>>,
    #[serde(serialize_with = "crate::io::ser_vec_opt_f64")]
    pub measured_mpc: Vec<Option<f64>>,
    #[serde(serialize_with = "crate::io::ser_vec_opt_f64")]
    pub abs_gap: Vec<Option<f64>>,
    #[serde(serialize_with = "crate::io::ser_vec_opt_f64")]
    pub exponent: Vec<Option<f64>>,
    /// `log10(w_max / threshold)` per state.
    #[serde(serialize_with = "ser_vec_f64")]
    pub headroom_decades: Vec<f64>,
    pub messages: Vec<String>,
}

pub fn compare(
    prims: &StochasticPrimitives,
    prefs: &Preferences,
    grid: WealthGrid,
    tol: f64,
    max_iter: usize,
) -> Result<(Comparison, AsymptoticReport, ConsumptionPolicy, SolveDiagnostics)> {
    let mut report = classify(prims, prefs)?;
    let (pol, diag) = solve(prims, prefs, grid, tol, max_iter)?;
    let w_max = pol.grid().w_max();
    let mut messages = Vec::new();
    let mut measured = Vec::new();
    let mut exponent = Vec::new();
    let mut headroom = Vec::new();
    for z in 0..prims.num_states() {
        let h = (w_max / diag.threshold[z]).log10();
        headroom.push(h);
        if !(h >= MIN_HEADROOM_DECADES) {
            messages.push(format!(
                "state {z}: only {h:.2} decades of grid above the binding threshold; measured MPC withheld"
            ));
            measured.push(None);
            exponent.push(None);
            continue;
        }
        let (slope, expo) = measured_slope(&pol, z, MIN_HEADROOM_DECADES as u32)?;
        measured.push(Some(slope));
        exponent.push(Some(expo));
    }
    let abs_gap = match &report.predicted_mpc {
        Some(pred) => pred.iter().zip(&measured).map(|(p, m)| m.map(|m| (m - p).abs())).collect(),
        None => vec![None; measured.len()],
    };
    if measured.iter().all(Option::is_some) {
        report.measured_mpc = Some(measured.iter().map(|m| m.unwrap()).collect());
    }
    let comparison = Comparison {
        regime: report.regime,
        predicted_mpc: report.predicted_mpc.clone(),
        measured_mpc: measured,
        abs_gap,
        exponent,
        headroom_decades: headroom,
        messages,
    };
    Ok((comparison, report, pol, diag))
}
