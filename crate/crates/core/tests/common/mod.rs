//! Reference computations that share no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::{Path, PathBuf};

use optsave::model::{Preferences, StochasticPrimitives};

/// `prod (lambda - r_i)` coefficients, leading one first, by Faddeev-LeVerrier.
pub fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![1.0];
    let mut m = vec![vec![0.0; n]; n];
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| a[i][l] * m[l][j]).sum::<f64>();
            }
            next[i][i] += c_prev;
        }
        m = next;
        let am_trace: f64 = (0..n).map(|i| (0..n).map(|l| a[i][l] * m[l][i]).sum::<f64>()).sum();
        let c = -am_trace / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cx(f64, f64);

impl Cx {
    fn add(self, o: Cx) -> Cx {
        Cx(self.0 + o.0, self.1 + o.1)
    }
    fn sub(self, o: Cx) -> Cx {
        Cx(self.0 - o.0, self.1 - o.1)
    }
    fn mul(self, o: Cx) -> Cx {
        Cx(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn div(self, o: Cx) -> Cx {
        let d = o.0 * o.0 + o.1 * o.1;
        Cx((self.0 * o.0 + self.1 * o.1) / d, (self.1 * o.0 - self.0 * o.1) / d)
    }
    fn abs(self) -> f64 {
        self.0.hypot(self.1)
    }
}

fn horner(coeffs: &[f64], x: Cx) -> (Cx, Cx) {
    let mut p = Cx(0.0, 0.0);
    let mut dp = Cx(0.0, 0.0);
    for &c in coeffs {
        dp = dp.mul(x).add(p);
        p = p.mul(x).add(Cx(c, 0.0));
    }
    (p, dp)
}

/// Moduli of the roots of a monic polynomial by Durand-Kerner, polished by Newton.
pub fn root_moduli(coeffs: &[f64]) -> Vec<f64> {
    let mut coeffs = coeffs.to_vec();
    let mut zeros = 0;
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
        zeros += 1;
    }
    let n = coeffs.len() - 1;
    let mut roots: Vec<Cx> = (0..n)
        .map(|k| {
            let mut z = Cx(1.0, 0.0);
            for _ in 0..k {
                z = z.mul(Cx(0.4, 0.9));
            }
            z
        })
        .collect();
    for _ in 0..5000 {
        let mut change = 0.0_f64;
        for i in 0..n {
            let (p, _) = horner(&coeffs, roots[i]);
            let mut denom = Cx(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom = denom.mul(roots[i].sub(roots[j]));
                }
            }
            let step = p.div(denom);
            roots[i] = roots[i].sub(step);
            change = change.max(step.abs());
        }
        if change < 1e-16 {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let (p, dp) = horner(&coeffs, *r);
            if dp.abs() == 0.0 {
                break;
            }
            *r = r.sub(p.div(dp));
        }
    }
    let mut out: Vec<f64> = roots.into_iter().map(Cx::abs).collect();
    out.extend(std::iter::repeat_n(0.0, zeros));
    out
}

/// Largest root modulus of the characteristic polynomial.
pub fn radius_oracle(a: &[Vec<f64>]) -> f64 {
    root_moduli(&char_poly(a)).into_iter().fold(0.0, f64::max)
}

/// Strong connectivity via `sum_{m=1..n} A^m > 0` off the diagonal.
pub fn irreducible_oracle(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    if n == 1 {
        return true;
    }
    let b: Vec<Vec<u64>> = a.iter().map(|r| r.iter().map(|&x| u64::from(x > 0.0)).collect()).collect();
    let mut power = b.clone();
    let mut sum = b.clone();
    for _ in 1..n {
        let mut next = vec![vec![0u64; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| u64::from(power[i][l] > 0 && b[l][j] > 0)).sum();
            }
        }
        power = next;
        for i in 0..n {
            for j in 0..n {
                sum[i][j] += power[i][j];
            }
        }
    }
    (0..n).all(|i| (0..n).all(|j| sum[i][j] > 0))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn linear_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| r.iter().copied().chain([bi]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// `E_z[beta R^theta]` by brute-force enumeration of the tables.
pub fn k_oracle(prims: &StochasticPrimitives, theta: f64) -> Vec<Vec<f64>> {
    let n = prims.num_states();
    let w = &prims.shocks().weights;
    (0..n)
        .map(|z| {
            (0..n)
                .map(|zh| {
                    let p = prims.transition(z, zh);
                    let mut s = 0.0;
                    for (k, wk) in w.iter().enumerate() {
                        let (b, r) = (prims.beta(z, zh, k), prims.ret(z, zh, k));
                        if p * wk * b * r > 0.0 {
                            s += wk * b * r.powf(theta);
                        }
                    }
                    p * s
                })
                .collect()
        })
        .collect()
}

/// Fixed point of `x = 1 + K (x + shift)` for log utility: `(I - K)^-1 (1 + K shift)`.
pub fn log_utility_fixed_point(k: &[Vec<f64>], shift: f64) -> Vec<f64> {
    let n = k.len();
    let i_minus_k: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - k[i][j]).collect()).collect();
    let rhs: Vec<f64> = (0..n).map(|i| 1.0 + shift * k[i].iter().sum::<f64>()).collect();
    linear_solve(&i_minus_k, &rhs)
}

/// Root of an increasing function by plain bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic MPC with constant `beta` and `R` when `delta > gamma`.
pub fn scalar_mpc(gamma: f64, beta: f64, ret: f64) -> f64 {
    1.0 - (beta * ret.powf(1.0 - gamma)).powf(1.0 / gamma)
}

/// Knife-edge scalar fixed point: `x^(1/g) = 1 + (k (x + psi))^(1/g)`.
pub fn scalar_knife_edge(gamma: f64, beta: f64, ret: f64, psi: f64) -> f64 {
    let k = beta * ret.powf(1.0 - gamma);
    bisect(|x| x.powf(1.0 / gamma) - 1.0 - (k * (x + psi)).powf(1.0 / gamma), 1.0, 1e12)
}

/// `y = k (y + psi)`.
pub fn scalar_g_fixed_point(delta: f64, beta: f64, ret: f64, psi: f64) -> f64 {
    let k = beta * ret.powf(1.0 - delta);
    k * psi / (1.0 - k)
}

pub fn deterministic(beta: f64, ret: f64, income: f64) -> StochasticPrimitives {
    StochasticPrimitives::deterministic(beta, ret, income).unwrap()
}

pub fn prefs(gamma: f64, delta: f64, psi: f64) -> Preferences {
    Preferences::new(gamma, delta, psi).unwrap()
}

/// A two-state chain with a two-point income shock.
pub fn two_state() -> StochasticPrimitives {
    StochasticPrimitives::new(
        2,
        vec![0.8, 0.2, 0.3, 0.7],
        optsave::model::ShockGrid::new(vec![0.5, 0.5]).unwrap(),
        vec![0.94, 0.94, 0.95, 0.95, 0.96, 0.96, 0.93, 0.93],
        vec![1.01, 1.01, 1.03, 1.03, 1.02, 1.02, 1.0, 1.0],
        vec![0.6, 1.4, 0.8, 1.2, 0.9, 1.5, 0.5, 1.1],
    )
    .unwrap()
}

/// JSON text of a single-state model.
pub fn scalar_model_json(beta: f64, ret: f64, income: f64, gamma: f64, delta: f64, psi: f64) -> String {
    format!(
        r#"{{
  "states": 1,
  "P": [[1.0]],
  "shocks": {{"weights": [1.0]}},
  "beta": [[[{beta}]]],
  "R": [[[{ret}]]],
  "Y": [[[{income}]]],
  "preferences": {{"gamma": {gamma}, "delta": {delta}, "psi": {psi}}}
}}
"#
    )
}

pub fn write_model(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}
