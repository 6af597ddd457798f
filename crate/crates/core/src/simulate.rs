//! Monte Carlo simulation of wealth and consumption under a policy.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{Preferences, StochasticPrimitives};
use crate::policy::ConsumptionPolicy;

/// One simulated path. Index `t` runs over `0..=horizon`; `shock[t]` and the
/// transition into `z[t]` are the draws that produced period `t` (unused at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub z: Vec<usize>,
    pub shock: Vec<usize>,
    pub w: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub horizon: usize,
    pub paths: Vec<Path>,
}

/// Simulates `n_paths` independent paths of `w_{t+1} = R(w_t - c_t) + Y`.
///
/// Path `i` draws from a ChaCha8 stream selected by `i`, so results do not
/// depend on scheduling.
pub fn simulate_paths(
    pol: &ConsumptionPolicy,
    prims: &StochasticPrimitives,
    w0: f64,
    z0: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Panel> {
    if !(w0 > 0.0) {
        return Err(Error::Precondition(format!("initial wealth must be positive, got {w0}")));
    }
    if z0 >= prims.num_states() {
        return Err(Error::Precondition(format!("initial state {z0} out of range")));
    }
    if horizon == 0 || n_paths == 0 {
        return Err(Error::Precondition("horizon and number of paths must be at least 1".into()));
    }
    let n = prims.num_states();
    let rows: Vec<WeightedIndex<f64>> = (0..n)
        .map(|z| {
            let row: Vec<f64> = (0..n).map(|zh| prims.transition(z, zh)).collect();
            WeightedIndex::new(row).map_err(|e| Error::InvalidModel(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let shocks =
        WeightedIndex::new(prims.shocks().weights.iter().copied()).map_err(|e| Error::InvalidModel(e.to_string()))?;

    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut path = Path {
                z: Vec::with_capacity(horizon + 1),
                shock: Vec::with_capacity(horizon + 1),
                w: Vec::with_capacity(horizon + 1),
                c: Vec::with_capacity(horizon + 1),
            };
            let (mut z, mut w) = (z0, w0);
            path.z.push(z);
            path.shock.push(0);
            path.w.push(w);
            path.c.push(pol.eval(w, z));
            for t in 1..=horizon {
                let c = path.c[t - 1];
                let zhat = rows[z].sample(&mut rng);
                let k = shocks.sample(&mut rng);
                w = prims.ret(z, zhat, k) * (w - c) + prims.income(z, zhat, k);
                if !(w > 0.0) {
                    return Err(Error::Inconsistent(format!("wealth hit {w} on path {i} at t={t}")));
                }
                z = zhat;
                path.z.push(z);
                path.shock.push(k);
                path.w.push(w);
                path.c.push(pol.eval(w, z));
            }
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel { horizon, paths })
}

impl Panel {
    /// Writes `path,t,z,shock,w,c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["path", "t", "z", "shock", "w", "c"])?;
        for (i, p) in self.paths.iter().enumerate() {
            for t in 0..p.w.len() {
                wtr.write_record([
                    i.to_string(),
                    t.to_string(),
                    p.z[t].to_string(),
                    p.shock[t].to_string(),
                    fmt_f64(p.w[t]),
                    fmt_f64(p.c[t]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Monte Carlo estimate of `E[(prod_{i<=t} beta_i) u'(c_t) (w_t - c_t)]` for
/// `t = 1..=horizon`.
pub fn tvc_estimate(panel: &Panel, prims: &StochasticPrimitives, prefs: &Preferences, horizon: usize) -> Vec<f64> {
    let horizon = horizon.min(panel.horizon);
    let mut sums = vec![0.0; horizon];
    for p in &panel.paths {
        let mut discount = 1.0;
        for t in 1..=horizon {
            discount *= prims.beta(p.z[t - 1], p.z[t], p.shock[t]);
            let s = p.w[t] - p.c[t];
            // 0 * inf = 0 when the discount or savings vanish
            if discount != 0.0 && s != 0.0 {
                sums[t - 1] += discount * prefs.u_prime(p.c[t]) * s;
            }
        }
    }
    let n = panel.paths.len() as f64;
    sums.into_iter().map(|s| s / n).collect()
}
