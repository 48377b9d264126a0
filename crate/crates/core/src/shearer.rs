//! Shearer chain certificates for the initial stage.
//!
//! With weights `π_t = 1/a_t`, `a_t = p_t - 1`, every quantity here is a
//! rational with denominator `D_j = a_1 ⋯ a_j`, so the chain is checked in
//! exact integer arithmetic:
//!
//! ```text
//! ρ_j · D_j = N_j = Σ_i X(i) e_{j-i}(a_1..a_j)
//! ρ_j ≥ ρ_{j+1}  ⟺  N_j · a_{j+1} ≥ N_{j+1}
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primes::{is_prime, sieve};
use crate::rigor::Interval;
use crate::symfunc::{rho_exact, x_sequence_unit};

/// Exclusive upper end of the initial-stage primes.
pub const STAGE1_PRIME_BOUND: u64 = 222;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainVerdict {
    Holds,
    /// `index` is 1-based into the prime list.
    Fails {
        index: usize,
        prime: u64,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCertificate {
    pub primes: Vec<u64>,
    /// Enclosures of `ρ(p_1 ⋯ p_j)` for `j = 1..=n`.
    pub rho_chain: Vec<Interval>,
    pub verdict: ChainVerdict,
}

impl ChainCertificate {
    pub fn holds(&self) -> bool {
        self.verdict == ChainVerdict::Holds
    }

    pub fn rho_final(&self) -> Option<Interval> {
        self.rho_chain.last().copied()
    }
}

fn check_prime_list(primes: &[u64]) -> Result<()> {
    for w in primes.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Domain(format!(
                "primes must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
    }
    for &p in primes {
        if p <= 3 || !is_prime(p) {
            return Err(Error::Domain(format!("{p} is not a prime > 3")));
        }
    }
    Ok(())
}

/// `N_j` for `j = 1..=n` (numerators of `ρ` over `D_j`).
fn chain_numerators(primes: &[u64]) -> Vec<BigInt> {
    let n = primes.len();
    let xs = x_sequence_unit(n);
    // e[i] = e_i(a_1..a_j)
    let mut e = vec![BigInt::zero(); n + 1];
    e[0] = BigInt::one();
    let mut out = Vec::with_capacity(n);
    for (j, &p) in primes.iter().enumerate() {
        let a = BigInt::from(p - 1);
        for i in (1..=j + 1).rev() {
            let add = &a * &e[i - 1];
            e[i] += add;
        }
        let len = j + 1;
        let nj = (0..=len).fold(BigInt::zero(), |acc, i| acc + &xs[i] * &e[len - i]);
        out.push(nj);
    }
    out
}

fn denominators(primes: &[u64]) -> Vec<BigInt> {
    let mut d = BigInt::one();
    primes
        .iter()
        .map(|&p| {
            d *= BigInt::from(p - 1);
            d.clone()
        })
        .collect()
}

/// Exact `ρ(p_1 ⋯ p_j)` for every prefix.
pub fn chain_values(primes: &[u64]) -> Result<Vec<BigRational>> {
    check_prime_list(primes)?;
    Ok(chain_numerators(primes)
        .into_iter()
        .zip(denominators(primes))
        .map(|(n, d)| BigRational::new(n, d))
        .collect())
}

/// Checks `ρ(p_1) ≥ ρ(p_1 p_2) ≥ ⋯ ≥ ρ(p_1 ⋯ p_n) > 0` exactly.
pub fn verify_chain(primes: &[u64]) -> Result<ChainCertificate> {
    check_prime_list(primes)?;
    let nums = chain_numerators(primes);
    let dens = denominators(primes);
    let rho_chain = nums
        .iter()
        .zip(&dens)
        .map(|(n, d)| Interval::from_rational(&BigRational::new(n.clone(), d.clone())))
        .collect();
    let mut verdict = ChainVerdict::Holds;
    for j in 0..nums.len() {
        let fail = |reason: &str| ChainVerdict::Fails {
            index: j + 1,
            prime: primes[j],
            reason: reason.to_string(),
        };
        if j > 0 && nums[j - 1].clone() * BigInt::from(primes[j] - 1) < nums[j] {
            verdict = fail("rho increased");
            break;
        }
        if !nums[j].is_positive() {
            verdict = fail("rho is not positive");
            break;
        }
    }
    Ok(ChainCertificate {
        primes: primes.to_vec(),
        rho_chain,
        verdict,
    })
}

/// Primes `5 <= p <= pmax`.
pub fn primes_from_five(pmax: u64) -> Result<Vec<u64>> {
    Ok(sieve(pmax)?.into_iter().filter(|&p| p > 3).collect())
}

/// Primes of the initial stage, `4 < p < 222`.
pub fn stage1_primes() -> Result<Vec<u64>> {
    primes_from_five(STAGE1_PRIME_BOUND - 1)
}

fn require_chain(primes: &[u64]) -> Result<()> {
    let cert = verify_chain(primes)?;
    match cert.verdict {
        ChainVerdict::Holds => Ok(()),
        ChainVerdict::Fails { prime, reason, .. } => {
            Err(Error::Precondition(format!("Shearer chain fails at {prime}: {reason}")))
        }
    }
}

fn weights(primes: &[u64]) -> Vec<BigRational> {
    primes
        .iter()
        .map(|&p| BigRational::new(BigInt::one(), BigInt::from(p - 1)))
        .collect()
}

/// Exact `(1/m) ρ([n] \ S_m) / ρ([n])`.
pub fn progression_bound_exact(m: u64, primes: &[u64]) -> Result<BigRational> {
    if m == 0 {
        return Err(Error::Domain("modulus 0".into()));
    }
    let mut rest = m;
    let mut in_s = vec![false; primes.len()];
    for (t, &p) in primes.iter().enumerate() {
        if rest.is_multiple_of(p) {
            in_s[t] = true;
            while rest.is_multiple_of(p) {
                rest /= p;
            }
        }
    }
    if rest != 1 {
        return Err(Error::Domain(format!(
            "modulus {m} has a prime factor outside the prime list"
        )));
    }
    require_chain(primes)?;
    let one = BigRational::one();
    let w = weights(primes);
    let full = rho_exact(&w, &one)?;
    let kept: Vec<BigRational> = w
        .iter()
        .zip(&in_s)
        .filter(|(_, s)| !**s)
        .map(|(x, _)| x.clone())
        .collect();
    let part = rho_exact(&kept, &one)?;
    Ok(part / full / BigRational::from_integer(BigInt::from(m)))
}

/// Upper bound for `max_b |R ∩ (b mod m)| / |R|` over distinct systems on `primes`.
pub fn progression_bound(m: u64, primes: &[u64]) -> Result<Interval> {
    Ok(Interval::from_rational(&progression_bound_exact(m, primes)?))
}

/// `(numerator b_t, denominator c_t)` of `τ_k(p)`, with `c_t = (p-1)^k`.
fn tau_parts(p: u64, k: u32) -> Result<(BigInt, BigInt)> {
    let p = BigInt::from(p);
    let a: BigInt = &p - 1u32;
    match k {
        2 => Ok((BigInt::from(3) * &p - 1, a.pow(2))),
        3 => Ok((BigInt::from(7) * &p * &p - BigInt::from(2) * &p + 1, a.pow(3))),
        _ => Err(Error::Domain(format!(
            "bias statistic defined for k in {{2,3}}, got {k}"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasStat {
    pub k: u32,
    /// Enclosure of the bound for `β_k^k`.
    pub power_bound: Interval,
    /// Enclosure of its k-th root, the bound for `β_k`.
    pub beta_bound: Interval,
}

/// Exact `Σ_{i,j} X(i) f_{i,j}(π, τ_k) / ρ([n])`.
///
/// Each factor `1 + xπ_t + yτ_t` is scaled by `c_t` so the DP stays integral.
pub fn bias_power_exact(primes: &[u64], k: u32) -> Result<BigRational> {
    check_prime_list(primes)?;
    let n = primes.len();
    let parts: Vec<(BigInt, BigInt)> = primes.iter().map(|&p| tau_parts(p, k)).collect::<Result<_>>()?;
    let mut f: Vec<Vec<BigInt>> = (0..=n).map(|i| vec![BigInt::zero(); n - i + 1]).collect();
    f[0][0] = BigInt::one();
    let mut c_total = BigInt::one();
    for (t, (&p, (b, c))) in primes.iter().zip(&parts).enumerate() {
        let x_coef = c / BigInt::from(p - 1);
        for s in (0..=t + 1).rev() {
            for i in 0..=s {
                let j = s - i;
                let mut v = c * &f[i][j];
                if i > 0 {
                    v += &x_coef * &f[i - 1][j];
                }
                if j > 0 {
                    v += b * &f[i][j - 1];
                }
                f[i][j] = v;
            }
        }
        c_total *= c;
    }
    let xs = x_sequence_unit(n);
    let mut total = BigInt::zero();
    for (i, row) in f.iter().enumerate() {
        for v in row {
            total += &xs[i] * v;
        }
    }
    let nums = chain_numerators(primes);
    let dens = denominators(primes);
    let (rho_num, rho_den) = match (nums.last(), dens.last()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => (BigInt::one(), BigInt::one()),
    };
    if !rho_num.is_positive() {
        return Err(Error::Precondition("rho of the full prime set is not positive".into()));
    }
    Ok(BigRational::new(total * rho_den, c_total * rho_num))
}

/// Bias-statistic bound `β_k(1)` over the given primes (chain must hold).
pub fn bias_stat(primes: &[u64], k: u32) -> Result<BiasStat> {
    require_chain(primes)?;
    let power = Interval::from_rational(&bias_power_exact(primes, k)?);
    Ok(BiasStat {
        k,
        power_bound: power,
        beta_bound: power.root(k)?,
    })
}

/// `β_k(1)` for the initial stage, primes `4 < p < 222`.
pub fn bias_stat_stage1(k: u32) -> Result<BiasStat> {
    bias_stat(&stage1_primes()?, k)
}

/// Subset enumeration `Σ_S ρ([n] \ S) Π_{s∈S} τ_s / ρ([n])`, for cross-checks.
pub fn bias_power_brute(primes: &[u64], k: u32) -> Result<BigRational> {
    check_prime_list(primes)?;
    let n = primes.len();
    if n > 16 {
        return Err(Error::Size(format!("subset enumeration limited to 16 primes, got {n}")));
    }
    let one = BigRational::one();
    let w = weights(primes);
    let tau: Vec<BigRational> = primes
        .iter()
        .map(|&p| tau_parts(p, k).map(|(b, c)| BigRational::new(b, c)))
        .collect::<Result<_>>()?;
    let full = rho_exact(&w, &one)?;
    let mut total = BigRational::zero();
    for mask in 0usize..(1 << n) {
        let rest: Vec<BigRational> = (0..n).filter(|t| mask >> t & 1 == 0).map(|t| w[t].clone()).collect();
        let prod = (0..n)
            .filter(|t| mask >> t & 1 == 1)
            .fold(one.clone(), |acc, t| acc * &tau[t]);
        total += rho_exact(&rest, &one)? * prod;
    }
    Ok(total / full)
}
