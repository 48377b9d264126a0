//! Elementary and mixed symmetric functions, the `X_θ` sequence, the Shearer
//! function `ρ_θ`, and a brute-force independent-set polynomial for tiny `n`.
//!
//! `ρ_θ(π_1..π_n) = Σ_i X_θ(i) e_i(π)`, where `X_θ(0) = 1` and
//! `X_θ(i) = -θ Σ_{j<i} C(i-1, j) X_θ(j)`. The sum alternates and cancels
//! heavily, so point inputs are evaluated in exact rational arithmetic and
//! only the final value is rounded outward.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigor::Interval;

/// Largest `n` accepted by [`brute_xi`].
pub const BRUTE_MAX_N: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTable {
    /// `e[i]` for `i = 0..=d`; `e[0] = 1`.
    pub e: Vec<Interval>,
    /// `f[i][j]` for `i + j <= cap`, present for mixed tables.
    pub f: Option<Vec<Vec<Interval>>>,
}

impl SymTable {
    pub fn e(&self, i: usize) -> Interval {
        self.e.get(i).copied().unwrap_or(Interval::ZERO)
    }

    pub fn f(&self, i: usize, j: usize) -> Interval {
        self.f
            .as_ref()
            .and_then(|t| t.get(i).and_then(|row| row.get(j)))
            .copied()
            .unwrap_or(Interval::ZERO)
    }
}

fn check_weights(ws: &[Interval]) -> Result<()> {
    for w in ws {
        if !w.is_finite() || w.lo() < 0.0 {
            return Err(Error::Domain(format!("weight {w} is not finite and nonnegative")));
        }
    }
    Ok(())
}

/// Elementary symmetric functions `e_0..e_d` by the one-weight-at-a-time DP.
pub fn elementary(weights: &[Interval], max_degree: usize) -> Result<SymTable> {
    check_weights(weights)?;
    let mut e = vec![Interval::ZERO; max_degree + 1];
    e[0] = Interval::ONE;
    for (t, w) in weights.iter().enumerate() {
        for i in (1..=max_degree.min(t + 1)).rev() {
            e[i] = e[i] + *w * e[i - 1];
        }
    }
    Ok(SymTable { e, f: None })
}

pub fn elementary_exact(weights: &[BigRational], max_degree: usize) -> Vec<BigRational> {
    let mut e = vec![BigRational::zero(); max_degree + 1];
    e[0] = BigRational::one();
    for (t, w) in weights.iter().enumerate() {
        for i in (1..=max_degree.min(t + 1)).rev() {
            let add = w * &e[i - 1];
            e[i] += add;
        }
    }
    e
}

/// Coefficients of `Π (1 + x π_t + y τ_t)` for all `i + j <= n`.
pub fn mixed(pi: &[Interval], tau: &[Interval]) -> Result<SymTable> {
    mixed_capped(pi, tau, pi.len())
}

/// As [`mixed`], keeping only total degree `i + j <= cap`.
pub fn mixed_capped(pi: &[Interval], tau: &[Interval], cap: usize) -> Result<SymTable> {
    if pi.len() != tau.len() {
        return Err(Error::Domain(format!(
            "pi has {} entries, tau has {}",
            pi.len(),
            tau.len()
        )));
    }
    check_weights(pi)?;
    check_weights(tau)?;
    let cap = cap.min(pi.len());
    let mut f: Vec<Vec<Interval>> = (0..=cap).map(|i| vec![Interval::ZERO; cap - i + 1]).collect();
    f[0][0] = Interval::ONE;
    for (t, (a, b)) in pi.iter().zip(tau).enumerate() {
        let top = cap.min(t + 1);
        for s in (1..=top).rev() {
            for i in 0..=s {
                let j = s - i;
                let mut v = f[i][j];
                if i > 0 {
                    v = v + *a * f[i - 1][j];
                }
                if j > 0 {
                    v = v + *b * f[i][j - 1];
                }
                f[i][j] = v;
            }
        }
    }
    let e = (0..=cap).map(|i| f[i][0]).collect();
    Ok(SymTable { e, f: Some(f) })
}

pub fn mixed_exact(pi: &[BigRational], tau: &[BigRational]) -> Result<Vec<Vec<BigRational>>> {
    if pi.len() != tau.len() {
        return Err(Error::Domain(format!(
            "pi has {} entries, tau has {}",
            pi.len(),
            tau.len()
        )));
    }
    let n = pi.len();
    let mut f: Vec<Vec<BigRational>> = (0..=n).map(|i| vec![BigRational::zero(); n - i + 1]).collect();
    f[0][0] = BigRational::one();
    for (t, (a, b)) in pi.iter().zip(tau).enumerate() {
        for s in (1..=t + 1).rev() {
            for i in 0..=s {
                let j = s - i;
                let mut v = f[i][j].clone();
                if i > 0 {
                    v += a * &f[i - 1][j];
                }
                if j > 0 {
                    v += b * &f[i][j - 1];
                }
                f[i][j] = v;
            }
        }
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XSequence {
    pub theta: Interval,
    pub values: Vec<Interval>,
}

impl XSequence {
    /// Re-evaluates the recurrence and checks that every stored value intersects it.
    pub fn check_recurrence(&self) -> bool {
        let Some(first) = self.values.first() else { return true };
        if !first.contains(1.0) {
            return false;
        }
        (1..self.values.len()).all(|i| {
            let mut s = Interval::ZERO;
            for j in 0..i {
                s = s + Interval::from_bigint(&binomial(i - 1, j)) * self.values[j];
            }
            (-(self.theta * s)).intersects(&self.values[i])
        })
    }
}

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn binomial_rows(n: usize) -> Vec<Vec<BigInt>> {
    let mut rows: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
    for i in 1..=n {
        let prev = &rows[i - 1];
        let mut row = vec![BigInt::one(); i + 1];
        for j in 1..i {
            row[j] = &prev[j - 1] + &prev[j];
        }
        rows.push(row);
    }
    rows
}

/// Exact `X_θ(0..=n)`.
pub fn x_sequence_exact(theta: &BigRational, n: usize) -> Vec<BigRational> {
    let binom = binomial_rows(n.saturating_sub(1));
    let mut xs = vec![BigRational::one()];
    for i in 1..=n {
        let mut s = BigRational::zero();
        for (j, x) in xs.iter().enumerate() {
            s += BigRational::from_integer(binom[i - 1][j].clone()) * x;
        }
        xs.push(-(theta * s));
    }
    xs
}

/// Exact integer `X_1(0..=n)` (complementary Bell numbers).
pub fn x_sequence_unit(n: usize) -> Vec<BigInt> {
    let binom = binomial_rows(n.saturating_sub(1));
    let mut xs = vec![BigInt::one()];
    for i in 1..=n {
        let mut s = BigInt::zero();
        for (j, x) in xs.iter().enumerate() {
            s += &binom[i - 1][j] * x;
        }
        xs.push(-s);
    }
    xs
}

/// Enclosures of `X_θ(0..=n)`; exact when `θ` is a point.
pub fn x_sequence(theta: Interval, n: usize) -> XSequence {
    let values = if theta.is_point() {
        let t = BigRational::from_float(theta.lo()).expect("finite theta");
        x_sequence_exact(&t, n).iter().map(Interval::from_rational).collect()
    } else {
        let binom = binomial_rows(n.saturating_sub(1));
        let mut xs = vec![Interval::ONE];
        for i in 1..=n {
            let mut s = Interval::ZERO;
            for (j, x) in xs.iter().enumerate() {
                s = s + Interval::from_bigint(&binom[i - 1][j]) * *x;
            }
            xs.push(-(theta * s));
        }
        xs
    };
    XSequence { theta, values }
}

fn to_exact(ws: &[Interval]) -> Option<Vec<BigRational>> {
    ws.iter()
        .map(|w| {
            if w.is_point() {
                BigRational::from_float(w.lo())
            } else {
                None
            }
        })
        .collect()
}

fn check_rho_domain(weights: &[Interval], theta: Interval) -> Result<()> {
    check_weights(weights)?;
    if theta.lo() < 0.0 {
        return Err(Error::Domain(format!("theta {theta} is negative")));
    }
    for w in weights {
        // certified violation of θ·π ≤ 1
        if (theta * *w).lo() > 1.0 {
            return Err(Error::Domain(format!("weight {w} exceeds 1/theta for theta {theta}")));
        }
    }
    Ok(())
}

/// Exact `ρ_θ` for rational weights.
pub fn rho_exact(weights: &[BigRational], theta: &BigRational) -> Result<BigRational> {
    for w in weights {
        if w.is_negative() || theta * w > BigRational::one() {
            return Err(Error::Domain(format!("weight {w} outside [0, 1/theta]")));
        }
    }
    let n = weights.len();
    let e = elementary_exact(weights, n);
    let xs = x_sequence_exact(theta, n);
    Ok(e.iter()
        .zip(&xs)
        .map(|(a, b)| a * b)
        .fold(BigRational::zero(), |acc, t| acc + t))
}

/// Enclosure of `ρ_θ(weights)`.
pub fn rho(weights: &[Interval], theta: Interval) -> Result<Interval> {
    check_rho_domain(weights, theta)?;
    if let (Some(ws), true) = (to_exact(weights), theta.is_point()) {
        let t = BigRational::from_float(theta.lo()).expect("finite theta");
        return Ok(Interval::from_rational(&rho_exact(&ws, &t)?));
    }
    let n = weights.len();
    let e = elementary(weights, n)?;
    let xs = x_sequence(theta, n);
    Ok(e.e
        .iter()
        .zip(&xs.values)
        .fold(Interval::ZERO, |acc, (a, b)| acc + *a * *b))
}

/// Independent-set polynomial of the disjointness graph on nonempty subsets
/// of `[n]`, evaluated at `z_S = -θ Π_{t∈S} π_t`. Only for `n <= 4`.
pub fn brute_xi(weights: &[Interval], theta: Interval) -> Result<Interval> {
    let n = weights.len();
    if n > BRUTE_MAX_N {
        return Err(Error::Size(format!("brute_xi supports n <= {BRUTE_MAX_N}, got {n}")));
    }
    check_rho_domain(weights, theta)?;
    let verts: Vec<usize> = (1..(1usize << n)).collect();
    let z: Vec<Interval> = verts
        .iter()
        .map(|&s| {
            let prod = (0..n)
                .filter(|t| s >> t & 1 == 1)
                .fold(Interval::ONE, |acc, t| acc * weights[t]);
            -(theta * prod)
        })
        .collect();

    // families in increasing vertex order, pairwise disjoint
    fn walk(start: usize, used: usize, acc: Interval, verts: &[usize], z: &[Interval], total: &mut Interval) {
        for k in start..verts.len() {
            if verts[k] & used == 0 {
                let term = acc * z[k];
                *total = *total + term;
                walk(k + 1, used | verts[k], term, verts, z, total);
            }
        }
    }
    let mut total = Interval::ONE;
    walk(0, 0, Interval::ONE, &verts, &z, &mut total);
    Ok(total)
}
