//! Preferences, stochastic primitives and the standing assumptions of the
//! optimal savings problem.
//!
//! Period utility is `u(c) + v(w)` with `u(c) = p(c; gamma)` and
//! `v(w) = psi * p(w; delta)`, where `p` is the CRRA function. The exogenous
//! environment is a finite Markov chain `z` together with an iid shock drawn
//! from a finite grid; the discount factor, gross return and income are
//! tabulated on every `(z, z', shock)` triple.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

const PROB_TOL: f64 = 1e-12;

/// CRRA utility `p(c; gamma)`, with the log branch at `gamma == 1`.
pub fn crra_utility(c: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("utility needs c > 0, got {c}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("risk aversion must be positive, got {gamma}")));
    }
    if gamma == 1.0 {
        Ok(c.ln())
    } else {
        // exp_m1 keeps the expression accurate as gamma approaches 1
        let a = 1.0 - gamma;
        Ok((a * c.ln()).exp_m1() / a)
    }
}

/// Marginal utility `c^(-gamma)`.
pub fn crra_marginal(c: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("marginal utility needs c > 0, got {c}")));
    }
    Ok(c.powf(-gamma))
}

/// Inverse of the marginal utility: the `c` with `c^(-gamma) = m`.
/// `m == 0` maps to `+inf`.
pub fn crra_marginal_inverse(m: f64, gamma: f64) -> f64 {
    if m <= 0.0 {
        f64::INFINITY
    } else {
        m.powf(-1.0 / gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    /// Relative risk aversion for consumption.
    pub gamma: f64,
    /// Relative risk aversion for wealth.
    pub delta: f64,
    /// Weight on the utility of wealth.
    pub psi: f64,
}

impl Preferences {
    pub fn new(gamma: f64, delta: f64, psi: f64) -> Result<Self> {
        let prefs = Self { gamma, delta, psi };
        prefs.validate()?;
        Ok(prefs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidModel(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidModel(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::InvalidModel(format!("psi must be nonnegative, got {}", self.psi)));
        }
        Ok(())
    }

    /// `u'(c)`; `+inf` at `c == 0`.
    #[inline]
    pub fn u_prime(&self, c: f64) -> f64 {
        c.powf(-self.gamma)
    }

    /// `v'(w) = psi * w^(-delta)`, zero whenever `psi == 0`.
    #[inline]
    pub fn v_prime(&self, w: f64) -> f64 {
        if self.psi == 0.0 {
            0.0
        } else {
            self.psi * w.powf(-self.delta)
        }
    }

    #[inline]
    pub fn u_prime_inverse(&self, m: f64) -> f64 {
        crra_marginal_inverse(m, self.gamma)
    }

    pub fn utility(&self, c: f64, w: f64) -> Result<f64> {
        let v = if self.psi == 0.0 { 0.0 } else { self.psi * crra_utility(w, self.delta)? };
        Ok(crra_utility(c, self.gamma)? + v)
    }
}

/// Finite distribution of the iid innovation. Shocks are identified by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockGrid {
    pub weights: Vec<f64>,
}

impl ShockGrid {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let grid = Self { weights };
        grid.validate()?;
        Ok(grid)
    }

    /// Single shock with probability one.
    pub fn degenerate() -> Self {
        Self { weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidModel("shock grid needs at least one point".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel(format!("shock weight {w} is not a probability")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidModel(format!("shock weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// One positive-probability continuation `(z', shock)` from a given state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub zhat: usize,
    pub shock: usize,
    /// `P(z, z') * weight[shock]`.
    pub prob: f64,
    pub beta: f64,
    pub ret: f64,
    pub income: f64,
}

/// Markov chain, shock grid and the tabulated `beta`, `R`, `Y`.
///
/// Tables are stored flat in `[z][zhat][shock]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPrimitives {
    num_states: usize,
    transition: Vec<f64>,
    shocks: ShockGrid,
    beta: Vec<f64>,
    ret: Vec<f64>,
    income: Vec<f64>,
}

impl StochasticPrimitives {
    /// `transition` is row-major `|Z| x |Z|`; the tables are `[z][zhat][shock]`.
    pub fn new(
        num_states: usize,
        transition: Vec<f64>,
        shocks: ShockGrid,
        beta: Vec<f64>,
        ret: Vec<f64>,
        income: Vec<f64>,
    ) -> Result<Self> {
        let prims = Self { num_states, transition, shocks, beta, ret, income };
        prims.validate()?;
        Ok(prims)
    }

    /// One state, one shock, constant `beta`, `R`, `Y`.
    pub fn deterministic(beta: f64, ret: f64, income: f64) -> Result<Self> {
        Self::new(1, vec![1.0], ShockGrid::degenerate(), vec![beta], vec![ret], vec![income])
    }

    /// `beta`, `R`, `Y` depend only on the next state `z'` (not on the shock).
    pub fn markov(transition: Vec<Vec<f64>>, beta: &[f64], ret: &[f64], income: &[f64]) -> Result<Self> {
        let n = transition.len();
        let fill = |v: &[f64]| -> Vec<f64> { (0..n).flat_map(|_| v.iter().copied()).collect() };
        if beta.len() != n || ret.len() != n || income.len() != n {
            return Err(Error::InvalidModel("per-state tables must have one entry per state".into()));
        }
        Self::new(
            n,
            transition.into_iter().flatten().collect(),
            ShockGrid::degenerate(),
            fill(beta),
            fill(ret),
            fill(income),
        )
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_states;
        if n == 0 {
            return Err(Error::InvalidModel("need at least one exogenous state".into()));
        }
        self.shocks.validate()?;
        if self.transition.len() != n * n {
            return Err(Error::InvalidModel(format!(
                "transition matrix has {} entries, expected {}",
                self.transition.len(),
                n * n
            )));
        }
        for z in 0..n {
            let row = &self.transition[z * n..(z + 1) * n];
            if let Some(p) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!("transition row {z} has invalid entry {p}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!("transition row {z} sums to {total}, not 1")));
            }
        }
        let expected = n * n * self.shocks.len();
        for (name, tab) in [("beta", &self.beta), ("R", &self.ret), ("Y", &self.income)] {
            if tab.len() != expected {
                return Err(Error::InvalidModel(format!(
                    "{name} table has {} entries, expected {expected}",
                    tab.len()
                )));
            }
            if let Some(i) = tab.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
                let (z, zh, k) = self.unflatten(i);
                return Err(Error::InvalidModel(format!(
                    "{name}[{z}][{zh}][{k}] = {} must be finite and nonnegative",
                    tab[i]
                )));
            }
        }
        Ok(())
    }

    #[inline]
    fn index(&self, z: usize, zhat: usize, shock: usize) -> usize {
        (z * self.num_states + zhat) * self.shocks.len() + shock
    }

    fn unflatten(&self, i: usize) -> (usize, usize, usize) {
        let k = self.shocks.len();
        (i / (k * self.num_states), (i / k) % self.num_states, i % k)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn shocks(&self) -> &ShockGrid {
        &self.shocks
    }

    pub fn transition(&self, z: usize, zhat: usize) -> f64 {
        self.transition[z * self.num_states + zhat]
    }

    pub fn beta(&self, z: usize, zhat: usize, shock: usize) -> f64 {
        self.beta[self.index(z, zhat, shock)]
    }

    pub fn ret(&self, z: usize, zhat: usize, shock: usize) -> f64 {
        self.ret[self.index(z, zhat, shock)]
    }

    pub fn income(&self, z: usize, zhat: usize, shock: usize) -> f64 {
        self.income[self.index(z, zhat, shock)]
    }

    /// Positive-probability continuations from `z`, in `z'`-major then shock order.
    pub fn branches(&self, z: usize) -> impl Iterator<Item = Branch> + '_ {
        let k = self.shocks.len();
        (0..self.num_states).flat_map(move |zhat| {
            (0..k).filter_map(move |shock| {
                let prob = self.transition(z, zhat) * self.shocks.weights[shock];
                (prob > 0.0).then(|| {
                    let i = self.index(z, zhat, shock);
                    Branch { zhat, shock, prob, beta: self.beta[i], ret: self.ret[i], income: self.income[i] }
                })
            })
        })
    }

    /// Same primitives with income multiplied by `factor`.
    pub fn with_scaled_income(&self, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        out.income.iter_mut().for_each(|y| *y *= factor);
        out.validate()?;
        Ok(out)
    }

    /// Median of the positive-probability income values (1 if none is positive).
    pub fn median_income(&self) -> f64 {
        let mut ys: Vec<f64> =
            (0..self.num_states).flat_map(|z| self.branches(z).map(|b| b.income)).filter(|y| *y > 0.0).collect();
        if ys.is_empty() {
            return 1.0;
        }
        ys.sort_by(|a, b| a.total_cmp(b));
        let m = ys.len();
        if m % 2 == 1 {
            ys[m / 2]
        } else {
            0.5 * (ys[m / 2 - 1] + ys[m / 2])
        }
    }
}

/// Which standing assumptions hold on a model instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub a1_ok: bool,
    /// Finite expected marginal values of saving at the income floor.
    pub a2i_ok: bool,
    /// `r(K(1)) < 1`.
    pub a2ii_ok: bool,
    /// Returns are zero or bounded below, income bounded away from zero.
    pub a4_ok: bool,
    /// `Pr_z[beta' R' > 0] > 0` for every state.
    pub positive_betar_ok: bool,
    #[serde(rename = "r_K1", serialize_with = "crate::io::ser_f64")]
    pub r_k1: f64,
    #[serde(rename = "r_K1mg", serialize_with = "crate::io::ser_f64")]
    pub r_k1mg: f64,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    /// The conditions needed for time iteration to converge to a unique policy.
    pub fn solvable(&self) -> bool {
        self.a1_ok && self.a2i_ok && self.a2ii_ok
    }
}

/// Checks the standing assumptions on `prims` and `prefs`.
pub fn validate_assumptions(prims: &StochasticPrimitives, prefs: &Preferences) -> Result<AssumptionReport> {
    prims.validate()?;
    let mut messages = Vec::new();

    let a1_ok = prefs.validate().is_ok();
    if !a1_ok {
        messages.push(format!("preferences are not admissible: {prefs:?}"));
    }

    // On a finite grid an expectation is infinite exactly when a
    // positive-weight term is. With u'(0) = inf that means Y = 0 somewhere
    // beta * R > 0.
    let mut a2i_ok = true;
    let mut positive_betar_ok = true;
    for z in 0..prims.num_states() {
        let mut any_positive = false;
        for b in prims.branches(z) {
            let weight = b.beta * b.ret;
            if weight > 0.0 {
                any_positive = true;
                if b.income == 0.0 {
                    a2i_ok = false;
                    messages.push(format!(
                        "E_z[beta R u'(Y)] is infinite at z={z}: Y=0 on (z'={}, shock={}) with beta*R={weight}",
                        b.zhat, b.shock
                    ));
                }
            }
        }
        if !any_positive {
            positive_betar_ok = false;
            messages.push(format!("Pr[beta' R' > 0 | z={z}] = 0"));
        }
    }

    let k1 = spectral::build_k(prims, 1.0);
    let r_k1 = k1.spectral_radius().unwrap_or(f64::INFINITY);
    let a2ii_ok = r_k1 < 1.0;
    if !a2ii_ok {
        messages.push(format!("r(K(1)) = {r_k1} is not below 1"));
    }
    let r_k1mg = spectral::build_k(prims, 1.0 - prefs.gamma).spectral_radius().unwrap_or(f64::INFINITY);

    let mut min_r = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    for z in 0..prims.num_states() {
        for b in prims.branches(z) {
            if b.ret > 0.0 {
                min_r = min_r.min(b.ret);
            }
            min_y = min_y.min(b.income);
        }
    }
    let m1 = min_r.is_finite().then_some(min_r);
    let m2 = (min_y > 0.0 && min_y.is_finite()).then_some(min_y);
    let a4_ok = m2.is_some();
    if !a4_ok {
        messages.push("income is not bounded away from zero".into());
    }

    Ok(AssumptionReport { a1_ok, a2i_ok, a2ii_ok, a4_ok, positive_betar_ok, r_k1, r_k1mg, m1, m2, messages })
}

/// A model instance as read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub states: usize,
    #[serde(rename = "P")]
    pub transition: Matrix2,
    pub shocks: ShockGrid,
    pub beta: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub ret: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Y")]
    pub income: Vec<Vec<Vec<f64>>>,
    pub preferences: Preferences,
}

/// The transition matrix, either nested rows or one flat row-major array.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix2 {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub prims: StochasticPrimitives,
    pub prefs: Preferences,
}

impl Model {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> ModelFile {
        let p = &self.prims;
        let n = p.num_states();
        let k = p.shocks().len();
        let tab = |f: &dyn Fn(usize, usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
            (0..n).map(|z| (0..n).map(|zh| (0..k).map(|s| f(z, zh, s)).collect()).collect()).collect()
        };
        ModelFile {
            states: n,
            transition: Matrix2::Nested((0..n).map(|z| (0..n).map(|zh| p.transition(z, zh)).collect()).collect()),
            shocks: p.shocks().clone(),
            beta: tab(&|z, zh, s| p.beta(z, zh, s)),
            ret: tab(&|z, zh, s| p.ret(z, zh, s)),
            income: tab(&|z, zh, s| p.income(z, zh, s)),
            preferences: self.prefs,
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<Model> {
        let n = self.states;
        let k = self.shocks.len();
        let transition = match self.transition {
            Matrix2::Nested(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Load(format!("P must be {n}x{n}")));
                }
                rows.into_iter().flatten().collect()
            }
            Matrix2::Flat(v) => {
                if v.len() != n * n {
                    return Err(Error::Load(format!("P must have {} entries, found {}", n * n, v.len())));
                }
                v
            }
        };
        let flatten = |name: &str, t: Vec<Vec<Vec<f64>>>| -> Result<Vec<f64>> {
            let ok = t.len() == n && t.iter().all(|row| row.len() == n && row.iter().all(|s| s.len() == k));
            if !ok {
                return Err(Error::Load(format!("{name} must have shape [{n}][{n}][{k}]")));
            }
            Ok(t.into_iter().flatten().flatten().collect())
        };
        let beta = flatten("beta", self.beta)?;
        let ret = flatten("R", self.ret)?;
        let income = flatten("Y", self.income)?;
        let prims = StochasticPrimitives::new(n, transition, self.shocks, beta, ret, income)?;
        self.preferences.validate()?;
        Ok(Model { prims, prefs: self.preferences })
    }
}
