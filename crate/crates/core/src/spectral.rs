//! Nonnegative matrices built from the primitives: `K(theta)`, spectral
//! radius, irreducibility and the max-row growth rate of matrix powers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::StochasticPrimitives;

const POWER_MAX_ITER: usize = 200_000;
const POWER_REL_TOL: f64 = 1e-14;

/// `K(theta)[z][z'] = P(z, z') * E[beta * R^theta | z, z']`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMatrix {
    pub theta: f64,
    #[serde(serialize_with = "ser_rows")]
    pub entries: Vec<Vec<f64>>,
    /// True when some term was resolved by `R^theta = R * R^(theta-1)`,
    /// `0 * inf = 0` or `0^0 = 1` instead of plain arithmetic.
    pub conventions_applied: bool,
}

fn ser_rows<S: serde::Serializer>(rows: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Row<'a>(&'a [f64]);
    impl Serialize for Row<'_> {
        fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            crate::io::ser_vec_f64(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in rows {
        seq.serialize_element(&Row(r))?;
    }
    seq.end()
}

/// `x * y` with `0 * inf = 0`.
#[inline]
pub(crate) fn mul0(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        0.0
    } else {
        x * y
    }
}

/// `beta * R^theta` under the conventions `R^theta = R * R^(theta - 1)`,
/// `0 * inf = 0`, `0^0 = 1`. Returns the value and whether a convention fired.
pub(crate) fn discounted_power(beta: f64, ret: f64, theta: f64) -> (f64, bool) {
    if beta == 0.0 {
        let fired = ret == 0.0 || (ret.powf(theta)).is_infinite();
        return (0.0, fired);
    }
    if ret == 0.0 {
        // R * R^(theta-1) with R = 0 is 0 * (0, 1 or inf), always 0. Plain
        // arithmetic only agrees when theta > 0.
        return (0.0, theta <= 0.0);
    }
    (beta * ret.powf(theta), false)
}

pub fn build_k(prims: &StochasticPrimitives, theta: f64) -> KMatrix {
    let n = prims.num_states();
    let mut entries = vec![vec![0.0; n]; n];
    let mut conventions_applied = false;
    for (z, row) in entries.iter_mut().enumerate() {
        for b in prims.branches(z) {
            let (term, fired) = discounted_power(b.beta, b.ret, theta);
            conventions_applied |= fired;
            row[b.zhat] += mul0(b.prob, term);
        }
    }
    KMatrix { theta, entries, conventions_applied }
}

impl KMatrix {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn has_infinite(&self) -> bool {
        self.entries.iter().flatten().any(|x| x.is_infinite())
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.entries)
    }

    pub fn is_irreducible(&self) -> bool {
        is_irreducible(&self.entries)
    }

    /// `K x` with `0 * inf = 0`; `x` may contain `+inf`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|row| row.iter().zip(x).map(|(k, xi)| mul0(*k, *xi)).sum()).collect()
    }
}

fn check_square(a: &[Vec<f64>]) -> Result<usize> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidMatrix(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if let Some(x) = row.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidMatrix(format!("row {i} has entry {x}")));
        }
    }
    Ok(n)
}

/// Boolean transitive closure of the positivity pattern (`reach[i][j]` iff
/// there is a path of length >= 1 from `i` to `j`).
fn reachability(a: &[Vec<f64>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut reach: Vec<Vec<bool>> = a.iter().map(|row| row.iter().map(|x| *x > 0.0).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// True iff the graph with an edge `z -> z'` whenever `a[z][z'] > 0` is
/// strongly connected. Every `1 x 1` matrix is irreducible.
pub fn is_irreducible(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    if n <= 1 {
        return true;
    }
    let reach = reachability(a);
    (0..n).all(|i| (0..n).all(|j| i == j || reach[i][j]))
}

/// Spectral radius of a finite nonnegative square matrix.
///
/// The matrix is split into its strongly connected classes; the radius is the
/// largest radius of a diagonal block. Each irreducible block `B` is handled by
/// power iteration on `B + sI` with `s` its largest row sum, which is
/// primitive, and the iteration stops once the Collatz-Wielandt bounds
/// `min_i (Mx)_i / x_i <= r(M) <= max_i (Mx)_i / x_i` agree.
pub fn spectral_radius(a: &[Vec<f64>]) -> Result<f64> {
    let n = check_square(a)?;
    if a.iter().flatten().any(|x| x.is_infinite()) {
        return Err(Error::InfiniteEntries);
    }
    let reach = reachability(a);
    let mut assigned = vec![false; n];
    let mut radius = 0.0_f64;
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| j == i || (reach[i][j] && reach[j][i])).collect();
        for &j in &class {
            assigned[j] = true;
        }
        let r = if class.len() == 1 {
            a[i][i]
        } else {
            let block: Vec<Vec<f64>> = class.iter().map(|&r| class.iter().map(|&c| a[r][c]).collect()).collect();
            irreducible_radius(&block)
        };
        radius = radius.max(r);
    }
    debug_assert!(
        radius <= growth_rate(a, 64).unwrap_or(f64::INFINITY) * (1.0 + 1e-9) + 1e-300,
        "spectral radius exceeds the max-row growth rate"
    );
    Ok(radius)
}

/// States `z` for which `sum_{n >= 1} (A^n 1)(z)` diverges: those from which a
/// path of length >= 1 reaches a class of radius >= 1 or an infinite entry.
pub fn divergent_series_states(a: &[Vec<f64>]) -> Result<Vec<bool>> {
    let n = check_square(a)?;
    let reach = reachability(a);
    let mut bad = vec![false; n];
    for j in 0..n {
        let class: Vec<usize> = (0..n).filter(|&k| k == j || (reach[j][k] && reach[k][j])).collect();
        let r = if a[j].iter().any(|x| x.is_infinite()) {
            f64::INFINITY
        } else if class.len() == 1 {
            a[j][j]
        } else {
            let block: Vec<Vec<f64>> = class.iter().map(|&r| class.iter().map(|&c| a[r][c]).collect()).collect();
            irreducible_radius(&block)
        };
        bad[j] = r >= 1.0;
    }
    Ok((0..n)
        .map(|i| (0..n).any(|j| bad[j] && (reach[i][j] || (i == j && a[i].iter().any(|x| x.is_infinite())))))
        .collect())
}

fn irreducible_radius(b: &[Vec<f64>]) -> f64 {
    let m = b.len();
    let shift = b.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
    let mut x = vec![1.0; m];
    let mut y = vec![0.0; m];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..POWER_MAX_ITER {
        for (i, row) in b.iter().enumerate() {
            y[i] = shift * x[i] + row.iter().zip(&x).map(|(a, xj)| a * xj).sum::<f64>();
        }
        let (mut cur_lo, mut cur_hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..m {
            let q = y[i] / x[i];
            cur_lo = cur_lo.min(q);
            cur_hi = cur_hi.max(q);
        }
        lo = f64::max(lo, cur_lo);
        hi = f64::min(hi, cur_hi);
        if hi - lo <= POWER_REL_TOL * hi {
            break;
        }
        let top = y.iter().copied().fold(0.0, f64::max);
        for i in 0..m {
            x[i] = y[i] / top;
        }
    }
    (0.5 * (lo + hi) - shift).max(0.0)
}

/// `(max_z (A^n 1)(z))^(1/n)`, accumulated in log space.
pub fn growth_rate(a: &[Vec<f64>], n: usize) -> Result<f64> {
    let dim = check_square(a)?;
    if n == 0 {
        return Err(Error::Precondition("growth rate needs n >= 1".into()));
    }
    if a.iter().flatten().any(|x| x.is_infinite()) {
        return Err(Error::InfiniteEntries);
    }
    let mut v = vec![1.0; dim];
    let mut log_scale = 0.0;
    for _ in 0..n {
        let next: Vec<f64> = a.iter().map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
        let top = next.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            return Ok(0.0);
        }
        log_scale += top.ln();
        v = next.into_iter().map(|x| x / top).collect();
    }
    Ok((log_scale / n as f64).exp())
}

#[cfg(test)]
mod tests {
    #[test]
    fn divergent_states_follow_reachability() {
        let a = vec![vec![0.5, 0.5, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.9]];
        assert_eq!(divergent_series_states(&a).unwrap(), vec![true, true, false]);
        let b = vec![vec![0.0, 2.0], vec![0.5, 0.0]];
        assert_eq!(divergent_series_states(&b).unwrap(), vec![true, true]);
        let c = vec![vec![0.0, 0.9], vec![0.5, 0.0]];
        assert_eq!(divergent_series_states(&c).unwrap(), vec![false, false]);
    }

    use super::*;
    use crate::model::{ShockGrid, StochasticPrimitives};

    #[test]
    fn k_scalar() {
        let prims = StochasticPrimitives::deterministic(0.95, 1.02, 1.0).unwrap();
        let k = build_k(&prims, 1.0);
        assert!((k.entries[0][0] - 0.969).abs() < 1e-15);
        assert!(!k.conventions_applied);
    }

    #[test]
    fn zero_return_contributes_nothing_for_negative_theta() {
        let prims = StochasticPrimitives::new(
            1,
            vec![1.0],
            ShockGrid::new(vec![0.5, 0.5]).unwrap(),
            vec![0.9, 0.9],
            vec![0.0, 2.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let k = build_k(&prims, -1.0);
        assert!((k.entries[0][0] - 0.5 * 0.9 * 0.5).abs() < 1e-15);
        assert!(k.conventions_applied);
        assert!(!k.has_infinite());
    }

    #[test]
    fn theta_zero_gives_expected_beta() {
        let prims =
            StochasticPrimitives::markov(vec![vec![0.3, 0.7], vec![0.6, 0.4]], &[0.9, 0.8], &[1.5, 0.7], &[1.0, 1.0])
                .unwrap();
        let k = build_k(&prims, 0.0);
        for z in 0..2 {
            for zh in 0..2 {
                let want = prims.transition(z, zh) * [0.9, 0.8][zh];
                assert!((k.entries[z][zh] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn radius_of_small_examples() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((spectral_radius(&eye).unwrap() - 1.0).abs() < 1e-12);
        let tri = vec![vec![0.5, 0.5], vec![0.0, 0.5]];
        assert!((spectral_radius(&tri).unwrap() - 0.5).abs() < 1e-12);
        // periodic, non-uniform Perron vector
        let per = vec![vec![0.0, 2.0], vec![0.5, 0.0]];
        assert!((spectral_radius(&per).unwrap() - 1.0).abs() < 1e-12);
        let zero = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(spectral_radius(&zero).unwrap(), 0.0);
    }

    #[test]
    fn infinite_entries_are_rejected() {
        let a = vec![vec![f64::INFINITY]];
        assert!(matches!(spectral_radius(&a), Err(Error::InfiniteEntries)));
    }

    #[test]
    fn irreducibility_examples() {
        assert!(is_irreducible(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert!(!is_irreducible(&[vec![1.0, 1.0], vec![0.0, 1.0]]));
        assert!(is_irreducible(&[vec![0.0]]));
    }

    #[test]
    fn growth_rate_examples() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        for n in [1, 5, 64] {
            assert!((growth_rate(&eye, n).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((growth_rate(&[vec![0.5]], 10).unwrap() - 0.5).abs() < 1e-15);

        // A^n = 0.5^n (I + nN), so the top row sum is 0.5^n (1 + n)
        let tri = vec![vec![0.5, 0.5], vec![0.0, 0.5]];
        let g64 = growth_rate(&tri, 64).unwrap();
        assert!((g64 - 0.5 * 65f64.powf(1.0 / 64.0)).abs() < 1e-12);
        assert!((g64 - 0.5).abs() < 0.05);
        let seq: Vec<f64> = (8..=64).map(|n| growth_rate(&tri, n).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn growth_rate_does_not_overflow() {
        let big = vec![vec![1e200, 1e200], vec![1e200, 1e200]];
        let g = growth_rate(&big, 50).unwrap();
        assert!((g / 2e200 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_uses_zero_times_infinity() {
        let k = KMatrix { theta: 0.0, entries: vec![vec![0.5, 0.0], vec![0.2, 0.3]], conventions_applied: false };
        let y = k.apply(&[2.0, f64::INFINITY]);
        assert_eq!(y[0], 1.0);
        assert!(y[1].is_infinite());
    }
}
