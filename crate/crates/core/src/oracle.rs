//! Exact ground truth for congruence systems: uncovered densities, fibers
//! over a modulus and residue-class biases, all as exact rationals.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locallemma::{ModulusCount, SieveInstance};

/// Default cap on residues scanned by any enumeration.
pub const DEFAULT_BUDGET: u64 = 100_000_000;
/// Largest period enumerated with a single bitset.
pub const BITSET_LIMIT: u64 = 1 << 27;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Congruence {
    pub modulus: u64,
    /// Sorted, distinct, each below `modulus`.
    pub residues: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongruenceSystem {
    pub entries: Vec<Congruence>,
}

impl Congruence {
    pub fn new(modulus: u64, mut residues: Vec<u64>) -> Result<Self> {
        if modulus <= 1 {
            return Err(Error::Validation(format!("modulus {modulus} must exceed 1")));
        }
        if let Some(r) = residues.iter().find(|&&r| r >= modulus) {
            return Err(Error::Validation(format!("residue {r} not reduced mod {modulus}")));
        }
        residues.sort_unstable();
        residues.dedup();
        Ok(Congruence { modulus, residues })
    }
}

impl CongruenceSystem {
    pub fn new(entries: Vec<Congruence>) -> Self {
        CongruenceSystem { entries }
    }

    /// Single-residue entries `(a, m)`.
    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self> {
        Ok(CongruenceSystem {
            entries: pairs
                .iter()
                .map(|&(a, m)| Congruence::new(m, vec![a]))
                .collect::<Result<_>>()?,
        })
    }

    /// Pairwise distinct moduli with at most one residue each.
    pub fn is_distinct(&self) -> bool {
        let mut ms: Vec<u64> = self.entries.iter().map(|e| e.modulus).collect();
        ms.sort_unstable();
        ms.windows(2).all(|w| w[0] != w[1]) && self.entries.iter().all(|e| e.residues.len() <= 1)
    }

    /// Period `Q`, the lcm of the moduli.
    pub fn period(&self) -> Result<u64> {
        self.entries.iter().try_fold(1u64, |q, e| checked_lcm(q, e.modulus))
    }

    /// Residue sets merged per modulus.
    pub fn merged(&self) -> BTreeMap<u64, Vec<u64>> {
        let mut out: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.modulus).or_default().extend(&e.residues);
        }
        for v in out.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        out
    }

    /// The moduli with their residue counts, as a local-lemma instance.
    pub fn to_instance(&self) -> Result<SieveInstance> {
        SieveInstance::new(
            self.merged()
                .into_iter()
                .map(|(n, rs)| ModulusCount {
                    n,
                    count: rs.len() as u64,
                })
                .collect(),
        )
    }

    pub fn without(&self, index: usize) -> Self {
        let mut entries = self.entries.clone();
        entries.remove(index);
        CongruenceSystem { entries }
    }
}

fn checked_lcm(a: u64, b: u64) -> Result<u64> {
    (a / a.gcd(&b))
        .checked_mul(b)
        .ok_or_else(|| Error::Resource(format!("lcm of {a} and {b} overflows")))
}

/// Parses one congruence per line, `r1,r2,... mod m`; blank lines and `#`
/// comments are skipped.
pub fn parse_system(text: &str) -> Result<CongruenceSystem> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let (lhs, rhs) = line
            .split_once(" mod ")
            .ok_or_else(|| perr(format!("expected 'residues mod m', got '{line}'")))?;
        let modulus: u64 = rhs
            .trim()
            .parse()
            .map_err(|_| perr(format!("bad modulus '{}'", rhs.trim())))?;
        let residues = lhs
            .split(',')
            .map(|r| {
                r.trim()
                    .parse::<u64>()
                    .map_err(|_| perr(format!("bad residue '{}'", r.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(Congruence::new(modulus, residues)?);
    }
    Ok(CongruenceSystem { entries })
}

pub fn serialize_system(system: &CongruenceSystem) -> String {
    system.to_string()
}

impl fmt::Display for CongruenceSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let rs: Vec<String> = e.residues.iter().map(u64::to_string).collect();
            writeln!(f, "{} mod {}", rs.join(","), e.modulus)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// enumeration

struct Bitset {
    words: Vec<u64>,
    len: u64,
}

impl Bitset {
    fn new(len: u64) -> Self {
        Bitset {
            words: vec![0; len.div_ceil(64) as usize],
            len,
        }
    }

    fn mark_progression(&mut self, start: u64, step: u64) {
        let mut i = start;
        while i < self.len {
            self.words[(i >> 6) as usize] |= 1 << (i & 63);
            i += step;
        }
    }

    fn get(&self, i: u64) -> bool {
        self.words[(i >> 6) as usize] >> (i & 63) & 1 == 1
    }

    fn count_unmarked(&self) -> u64 {
        self.len - self.words.iter().map(|w| w.count_ones() as u64).sum::<u64>()
    }
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn covered_bitset(system: &CongruenceSystem, q: u64) -> Bitset {
    let mut bits = Bitset::new(q);
    for e in &system.entries {
        for &a in &e.residues {
            bits.mark_progression(a, e.modulus);
        }
    }
    bits
}

/// `|R mod Q| / Q` by scanning all of `Z/QZ`.
pub fn uncovered_density_bitset(system: &CongruenceSystem, budget: u64) -> Result<BigRational> {
    let q = system.period()?;
    if q > budget.min(BITSET_LIMIT) {
        return Err(Error::Resource(format!("period {q} exceeds the bitset budget")));
    }
    Ok(ratio(covered_bitset(system, q).count_unmarked(), q))
}

fn mod_inverse(a: u64, n: u64) -> Option<u64> {
    let e = (a as i128).extended_gcd(&(n as i128));
    (e.gcd == 1).then(|| e.x.rem_euclid(n as i128) as u64)
}

/// The classes one fiber `x = r + Q_i t` inherits, in the coordinate `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fiber {
    pub r: u64,
    pub q_i: u64,
    /// False when a congruence with modulus dividing `Q_i` covers the fiber.
    pub alive: bool,
    /// New factor `n` to the residues `t mod n` it removes.
    pub classes: BTreeMap<u64, Vec<u64>>,
}

impl Fiber {
    pub fn as_system(&self) -> Result<CongruenceSystem> {
        Ok(CongruenceSystem {
            entries: self
                .classes
                .iter()
                .map(|(&n, rs)| Congruence::new(n, rs.clone()))
                .collect::<Result<_>>()?,
        })
    }
}

/// Splits every modulus as `m = m0 n` with `m0 | Q_i` and `gcd(n, Q_i) = 1`
/// and restricts the system to the fiber `r mod Q_i`.
pub fn fiber_decompose(system: &CongruenceSystem, r: u64, q_i: u64) -> Result<Fiber> {
    if q_i == 0 || r >= q_i {
        return Err(Error::Domain(format!("residue {r} not reduced mod {q_i}")));
    }
    let mut alive = true;
    let mut classes: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for e in &system.entries {
        let m = e.modulus;
        let mut n = m;
        loop {
            let g = n.gcd(&q_i);
            if g == 1 {
                break;
            }
            n /= g;
        }
        let m0 = m / n;
        if !q_i.is_multiple_of(m0) {
            return Err(Error::Decomposition(format!(
                "modulus {m} has part {m0} sharing primes with {q_i} but not dividing it"
            )));
        }
        let hits = e.residues.iter().filter(|&&a| a % m0 == r % m0);
        if n == 1 {
            if hits.count() > 0 {
                alive = false;
            }
            continue;
        }
        let inv = mod_inverse(q_i % n, n).expect("n coprime to Q_i");
        let set = classes.entry(n).or_default();
        for &a in hits {
            let diff = ((a % n) + n - (r % n)) % n;
            set.push((diff as u128 * inv as u128 % n as u128) as u64);
        }
    }
    classes.retain(|_, v| !v.is_empty());
    for v in classes.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    Ok(Fiber { r, q_i, alive, classes })
}

/// Largest unitary divisor of `q` built from its smallest primes with size
/// at most `sqrt(q)`, used to split enumeration into fibers.
pub fn default_fiber_modulus(q: u64) -> u64 {
    let mut rest = q;
    let mut d = 1u64;
    let mut p = 2u64;
    while p * p <= rest {
        if rest.is_multiple_of(p) {
            let mut pk = 1;
            while rest.is_multiple_of(p) {
                rest /= p;
                pk *= p;
            }
            if (d * pk) as u128 * (d * pk) as u128 > q as u128 {
                return d;
            }
            d *= pk;
        }
        p += 1;
    }
    if rest > 1 && (d * rest) as u128 * (d * rest) as u128 <= q as u128 {
        d *= rest;
    }
    d
}

/// `|R mod Q| / Q` as an average over fibers `r mod d`, where `d` must be a
/// unitary divisor of the period. Dead fibers are skipped without scanning.
pub fn uncovered_density_fibered(system: &CongruenceSystem, d: u64, budget: u64) -> Result<BigRational> {
    let q = system.period()?;
    if d == 0 || q % d != 0 || d.gcd(&(q / d)) != 1 {
        return Err(Error::Decomposition(format!(
            "{d} is not a unitary divisor of the period {q}"
        )));
    }
    let f = q / d;
    if f > BITSET_LIMIT {
        return Err(Error::Resource(format!("fiber size {f} exceeds the bitset limit")));
    }
    let mut scanned = 0u64;
    let mut uncovered = 0u64;
    for r in 0..d {
        let fiber = fiber_decompose(system, r, d)?;
        if !fiber.alive {
            continue;
        }
        scanned += f;
        if scanned > budget {
            return Err(Error::Resource(format!("more than {budget} residues to scan")));
        }
        let mut bits = Bitset::new(f);
        for (&n, rs) in &fiber.classes {
            for &t in rs {
                bits.mark_progression(t, n);
            }
        }
        uncovered += bits.count_unmarked();
    }
    Ok(ratio(uncovered, q))
}

pub fn uncovered_density_with_budget(system: &CongruenceSystem, budget: u64) -> Result<BigRational> {
    let q = system.period()?;
    if q <= BITSET_LIMIT && q <= budget {
        uncovered_density_bitset(system, budget)
    } else {
        uncovered_density_fibered(system, default_fiber_modulus(q), budget)
    }
}

/// Exact density of the uncovered set.
pub fn uncovered_density(system: &CongruenceSystem) -> Result<BigRational> {
    uncovered_density_with_budget(system, DEFAULT_BUDGET)
}

pub fn covers(system: &CongruenceSystem) -> Result<bool> {
    Ok(uncovered_density(system)?.is_zero())
}

/// `|R ∩ (b mod n)|` for every `b mod n`, and `|R|`, over one common period.
fn class_counts(system: &CongruenceSystem, n: u64, budget: u64) -> Result<(Vec<u64>, u64)> {
    if n == 0 {
        return Err(Error::Domain("modulus 0".into()));
    }
    let l = checked_lcm(system.period()?, n)?;
    if l > budget.min(BITSET_LIMIT) {
        return Err(Error::Resource(format!("period {l} exceeds the enumeration budget")));
    }
    let bits = covered_bitset(system, l);
    let mut counts = vec![0u64; n as usize];
    let mut total = 0;
    for x in 0..l {
        if !bits.get(x) {
            counts[(x % n) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyFiber("the system covers the integers".into()));
    }
    Ok((counts, total))
}

/// `n |R ∩ (b mod n)| / |R|`.
pub fn empirical_bias(system: &CongruenceSystem, n: u64, b: u64) -> Result<BigRational> {
    let (counts, total) = class_counts(system, n, DEFAULT_BUDGET)?;
    Ok(ratio(n * counts[(b % n) as usize], total))
}

/// `max_b n |R ∩ (b mod n)| / |R|`.
pub fn max_bias(system: &CongruenceSystem, n: u64) -> Result<BigRational> {
    let (counts, total) = class_counts(system, n, DEFAULT_BUDGET)?;
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(ratio(n * best, total))
}

/// `b_n` restricted to the fiber `r mod Q_i`, for `n` coprime to `Q_i`.
pub fn fiber_max_bias(system: &CongruenceSystem, r: u64, q_i: u64, n: u64) -> Result<BigRational> {
    if n.gcd(&q_i) != 1 {
        return Err(Error::Domain(format!("{n} is not coprime to {q_i}")));
    }
    let fiber = fiber_decompose(system, r, q_i)?;
    if !fiber.alive {
        return Err(Error::EmptyFiber(format!("fiber {r} mod {q_i} is covered")));
    }
    max_bias(&fiber.as_system()?, n)
}

/// Density recomposed from all fibers `r mod Q_i`.
pub fn density_via_fibers(system: &CongruenceSystem, q_i: u64) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    for r in 0..q_i {
        let fiber = fiber_decompose(system, r, q_i)?;
        if fiber.alive {
            acc += uncovered_density(&fiber.as_system()?)?;
        }
    }
    Ok(acc / BigRational::from_integer(BigInt::from(q_i)))
}

/// `{0 mod 2, 0 mod 3, 1 mod 4, 5 mod 6, 7 mod 12}`.
pub fn classical_covering() -> CongruenceSystem {
    CongruenceSystem::from_pairs(&[(0, 2), (0, 3), (1, 4), (5, 6), (7, 12)]).expect("valid system")
}
