//! Consumption policies on a wealth grid.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::StochasticPrimitives;

pub const MIN_GRID_POINTS: usize = 50;

/// Relative slack when deciding that a node is on the borrowing constraint.
pub const BINDING_TOL: f64 = 1e-9;

/// Relative slack when re-checking monotonicity of computed policies.
const MONOTONE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct WealthGrid {
    points: Vec<f64>,
}

impl WealthGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_GRID_POINTS} points, got {}", points.len())));
        }
        if !(points[0] > 0.0) {
            return Err(Error::InvalidGrid(format!("first point must be positive, got {}", points[0])));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid(format!("points not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { points })
    }

    /// `n` points spaced evenly in `log w` on `[w_min, w_max]`.
    pub fn log_spaced(w_min: f64, w_max: f64, n: usize) -> Result<Self> {
        if !(w_min > 0.0 && w_max > w_min && w_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < w_min < w_max, got [{w_min}, {w_max}]")));
        }
        if n < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_GRID_POINTS} points, got {n}")));
        }
        let (a, b) = (w_min.ln(), w_max.ln());
        let step = (b - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
        points[0] = w_min;
        points[n - 1] = w_max;
        Self::new(points)
    }

    /// `[1e-3, 1e4] * median income`, 1000 log-spaced points.
    pub fn default_for(prims: &StochasticPrimitives) -> Self {
        let m = prims.median_income();
        Self::log_spaced(1e-3 * m, 1e4 * m, 1000).expect("default grid is valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn w_min(&self) -> f64 {
        self.points[0]
    }

    pub fn w_max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// Consumption at every grid node and exogenous state.
///
/// Between nodes the policy is linear in `w`. Below the grid it is `c = w`
/// (the constrained region). Above it the policy is the power law
/// `c_N (w / w_max)^e`, clamped to `w`, where `e` is the log-log slope of `c`
/// between `w_max / 2` and `w_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPolicy {
    grid: Arc<WealthGrid>,
    /// `values[z][i]`
    values: Vec<Vec<f64>>,
    extrapolation_exponent: Vec<f64>,
}

/// Largest node at or below `w_max / 2`, or the first node on short grids.
fn extrapolation_base(p: &[f64]) -> usize {
    let n = p.len();
    p.partition_point(|&w| w <= 0.5 * p[n - 1]).saturating_sub(1).min(n - 2)
}

impl ConsumptionPolicy {
    /// Checks shape, positivity and feasibility (`0 < c <= w`). Monotonicity is
    /// checked separately by [`ConsumptionPolicy::check_invariants`].
    pub fn new(grid: Arc<WealthGrid>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        if values.is_empty() {
            return Err(Error::InvalidPolicy("no exogenous states".into()));
        }
        for (z, col) in values.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidPolicy(format!("state {z} has {} values, grid has {n}", col.len())));
            }
            for (i, (&c, &w)) in col.iter().zip(grid.points()).enumerate() {
                if !(c > 0.0 && c <= w) {
                    return Err(Error::InvalidPolicy(format!("infeasible c={c} at w={w} (node {i}, state {z})")));
                }
            }
        }
        let p = grid.points();
        let m = extrapolation_base(p);
        let extrapolation_exponent =
            values.iter().map(|col| (col[n - 1] / col[m]).ln() / (p[n - 1] / p[m]).ln()).collect();
        Ok(Self { grid, values, extrapolation_exponent })
    }

    /// Lowers each state's extrapolation exponent to at most `caps[z]`.
    pub fn with_exponent_cap(mut self, caps: &[f64]) -> Self {
        for (e, cap) in self.extrapolation_exponent.iter_mut().zip(caps) {
            *e = e.min(*cap);
        }
        self
    }

    /// The policy `c(w, z) = w`.
    pub fn consume_everything(grid: Arc<WealthGrid>, num_states: usize) -> Self {
        let col = grid.points().to_vec();
        Self::new(grid, vec![col; num_states]).expect("c = w is feasible")
    }

    /// Tabulates `f(w, z)` on the grid.
    pub fn from_fn(grid: Arc<WealthGrid>, num_states: usize, f: impl Fn(f64, usize) -> f64) -> Result<Self> {
        let values = (0..num_states).map(|z| grid.points().iter().map(|&w| f(w, z)).collect()).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<WealthGrid> {
        &self.grid
    }

    pub fn num_states(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, z: usize) -> &[f64] {
        &self.values[z]
    }

    pub fn value(&self, i: usize, z: usize) -> f64 {
        self.values[z][i]
    }

    pub fn extrapolation_exponent(&self, z: usize) -> f64 {
        self.extrapolation_exponent[z]
    }

    /// `dc/dw` just above `w_max`.
    pub fn extrapolation_slope(&self, z: usize) -> f64 {
        let n = self.grid.len();
        self.extrapolation_exponent[z] * self.values[z][n - 1] / self.grid.points()[n - 1]
    }

    pub fn is_constrained(&self, i: usize, z: usize) -> bool {
        let w = self.grid.points()[i];
        w - self.values[z][i] <= BINDING_TOL * w
    }

    /// Consumption at wealth `w` in state `z`.
    pub fn eval(&self, w: f64, z: usize) -> f64 {
        let p = self.grid.points();
        let col = &self.values[z];
        let n = p.len();
        if w < p[0] {
            return w;
        }
        if w >= p[n - 1] {
            let c = col[n - 1] * (w / p[n - 1]).powf(self.extrapolation_exponent[z]);
            return c.min(w);
        }
        let j = p.partition_point(|&x| x <= w) - 1;
        let t = (w - p[j]) / (p[j + 1] - p[j]);
        col[j] + t * (col[j + 1] - col[j])
    }

    /// Consumption and savings are nondecreasing in `w` in every state.
    pub fn check_invariants(&self) -> Result<()> {
        let p = self.grid.points();
        for (z, col) in self.values.iter().enumerate() {
            for i in 1..col.len() {
                if col[i] < col[i - 1] * (1.0 - MONOTONE_TOL) {
                    return Err(Error::Inconsistent(format!(
                        "consumption decreases between w={} and w={} in state {z}: {} -> {}",
                        p[i - 1],
                        p[i],
                        col[i - 1],
                        col[i]
                    )));
                }
                let (s0, s1) = (p[i - 1] - col[i - 1], p[i] - col[i]);
                if s1 < s0 - MONOTONE_TOL * p[i] {
                    return Err(Error::Inconsistent(format!(
                        "savings decrease between w={} and w={} in state {z}: {s0} -> {s1}",
                        p[i - 1],
                        p[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes `w,z,c,s,constrained`, one row per node and state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["w", "z", "c", "s", "constrained"])?;
        for z in 0..self.num_states() {
            for (i, &w) in self.grid.points().iter().enumerate() {
                let c = self.values[z][i];
                wtr.write_record([
                    crate::io::fmt_f64(w),
                    z.to_string(),
                    crate::io::fmt_f64(c),
                    crate::io::fmt_f64(w - c),
                    u8::from(self.is_constrained(i, z)).to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sup distance between marginal utilities, overall and per state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rho {
    pub scalar: f64,
    pub per_state: Vec<f64>,
}

pub fn rho_distance(p1: &ConsumptionPolicy, p2: &ConsumptionPolicy, gamma: f64) -> Result<Rho> {
    if !Arc::ptr_eq(&p1.grid, &p2.grid) && p1.grid != p2.grid {
        return Err(Error::InvalidPolicy("policies live on different grids".into()));
    }
    if p1.num_states() != p2.num_states() {
        return Err(Error::InvalidPolicy("policies have different numbers of states".into()));
    }
    let per_state: Vec<f64> = p1
        .values
        .iter()
        .zip(&p2.values)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| if x == y { 0.0 } else { (x.powf(-gamma) - y.powf(-gamma)).abs() })
                .fold(0.0, f64::max)
        })
        .collect();
    let scalar = per_state.iter().copied().fold(0.0, f64::max);
    Ok(Rho { scalar, per_state })
}
