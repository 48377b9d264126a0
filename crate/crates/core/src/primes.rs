//! Prime sieving and certified statistics over the prime windows
//! `[P_i, P_{i+1})` with `P_0 = 4`, `P_1 = 222`, `P_2 = 4000` and
//! `P_{i+1} = P_i^{3/2}` afterwards.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigor::{sum_positive_series, Interval};

/// Largest sieve limit accepted.
pub const MAX_SIEVE_LIMIT: u64 = 1 << 31;

const SEGMENT: u64 = 1 << 20;

/// Environment variable naming a directory for cached sieve output.
pub const CACHE_ENV: &str = "COVERIFY_PRIME_CACHE";

const CACHE_MAGIC: &[u8; 8] = b"CVPRIMES";
const CACHE_VERSION: u32 = 1;

/// Plain sieve of Eratosthenes over `[0, limit]`.
pub fn simple_sieve(limit: u64) -> Result<Vec<u64>> {
    if limit > MAX_SIEVE_LIMIT {
        return Err(Error::Resource(format!(
            "sieve limit {limit} exceeds {MAX_SIEVE_LIMIT}"
        )));
    }
    if limit < 2 {
        return Ok(Vec::new());
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    Ok(out)
}

/// All primes `<= limit`, ascending, via a segmented odd-only sieve.
pub fn sieve(limit: u64) -> Result<Vec<u64>> {
    sieve_range(0, limit.saturating_add(1))
}

/// Primes `p` with `lo <= p < hi`.
pub fn sieve_range(lo: u64, hi: u64) -> Result<Vec<u64>> {
    if hi > MAX_SIEVE_LIMIT + 1 {
        return Err(Error::Resource(format!(
            "sieve limit {} exceeds {MAX_SIEVE_LIMIT}",
            hi - 1
        )));
    }
    let mut out = Vec::new();
    if hi <= lo || hi <= 2 {
        return Ok(out);
    }
    if lo <= 2 {
        out.push(2);
    }
    let root = isqrt(hi) + 1;
    let base: Vec<u64> = simple_sieve(root)?.into_iter().filter(|&p| p > 2).collect();

    // segment over odd numbers in [start, hi)
    let mut seg_lo = lo.max(3) | 1;
    let mut marks = vec![false; (SEGMENT / 2) as usize];
    while seg_lo < hi {
        let seg_hi = (seg_lo + SEGMENT).min(hi);
        let len = (seg_hi - seg_lo).div_ceil(2) as usize;
        marks[..len].iter_mut().for_each(|m| *m = false);
        for &p in &base {
            let sq = p * p;
            if sq >= seg_hi {
                break;
            }
            let mut start = if sq >= seg_lo { sq } else { seg_lo.div_ceil(p) * p };
            if start % 2 == 0 {
                start += p;
            }
            let mut m = start;
            while m < seg_hi {
                marks[((m - seg_lo) / 2) as usize] = true;
                m += 2 * p;
            }
        }
        for (k, &c) in marks[..len].iter().enumerate() {
            let v = seg_lo + 2 * k as u64;
            if !c && v < seg_hi && v > 1 {
                out.push(v);
            }
        }
        seg_lo = seg_hi | 1;
    }
    Ok(out)
}

pub fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Like [`sieve`], but reuses a cached copy under `$COVERIFY_PRIME_CACHE` when present.
pub fn primes_up_to(limit: u64) -> Result<Vec<u64>> {
    let Some(dir) = std::env::var_os(CACHE_ENV).map(PathBuf::from) else {
        return sieve(limit);
    };
    let path = dir.join(format!("primes-{limit}.bin"));
    if let Ok(primes) = read_cache(&path, limit) {
        return Ok(primes);
    }
    let primes = sieve(limit)?;
    // a failed write only costs a re-sieve next time
    let _ = fs::create_dir_all(&dir).and_then(|_| write_cache(&path, limit, &primes));
    Ok(primes)
}

fn write_cache(path: &std::path::Path, limit: u64, primes: &[u64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(28 + 4 * primes.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&limit.to_le_bytes());
    buf.extend_from_slice(&(primes.len() as u64).to_le_bytes());
    for &p in primes {
        buf.extend_from_slice(&(p as u32).to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, path)
}

fn read_cache(path: &std::path::Path, limit: u64) -> Result<Vec<u64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || Error::Io(format!("corrupt prime cache {}", path.display()));
    if bytes.len() < 28 || &bytes[..8] != CACHE_MAGIC {
        return Err(bad());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cached_limit = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    if version != CACHE_VERSION || cached_limit != limit || bytes.len() != 28 + 4 * count {
        return Err(bad());
    }
    Ok(bytes[28..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as u64)
        .collect())
}

// ---------------------------------------------------------------------------
// window schedule

/// `P_i = base^(num/den)` with exact integer data.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Boundary {
    base: u64,
    num: u32,
    den: u32,
}

fn boundary(i: u32) -> Boundary {
    match i {
        0 => Boundary {
            base: 4,
            num: 1,
            den: 1,
        },
        1 => Boundary {
            base: 222,
            num: 1,
            den: 1,
        },
        _ => Boundary {
            base: 4000,
            num: 3u32.pow(i - 2),
            den: 2u32.pow(i - 2),
        },
    }
}

/// `n^den` compared against `base^num`.
fn cmp_power(n: u64, b: &Boundary) -> std::cmp::Ordering {
    let lhs = BigUint::from(n).pow(b.den);
    let rhs = BigUint::from(b.base).pow(b.num);
    lhs.cmp(&rhs)
}

/// Smallest integer `n >= P_i`.
pub fn boundary_ceil(i: u32) -> Result<u64> {
    if i > 5 {
        return Err(Error::Resource(format!("window boundary P_{i} is beyond direct range")));
    }
    let b = boundary(i);
    let approx = (b.base as f64).powf(b.num as f64 / b.den as f64);
    let mut n = approx.floor().max(1.0) as u64;
    while n > 1 && cmp_power(n - 1, &b) != std::cmp::Ordering::Less {
        n -= 1;
    }
    while cmp_power(n, &b) == std::cmp::Ordering::Less {
        n += 1;
    }
    Ok(n)
}

/// `Some(n)` when `P_i` is the integer `n`.
pub fn boundary_integer(i: u32) -> Result<Option<u64>> {
    let n = boundary_ceil(i)?;
    Ok((cmp_power(n, &boundary(i)) == std::cmp::Ordering::Equal).then_some(n))
}

/// No boundary may be a prime.
pub fn boundary_is_prime(i: u32) -> Result<bool> {
    Ok(boundary_integer(i)?.is_some_and(is_prime))
}

/// Enclosure of the real number `P_i`.
pub fn boundary_value(i: u32) -> Result<Interval> {
    let b = boundary(i);
    let base = Interval::from_int(b.base as i64);
    if b.den == 1 {
        return Ok(base.pow_int(b.num));
    }
    if i == 3 {
        return Ok(base * base.sqrt()?);
    }
    let e = Interval::from_ratio(b.num as i128, b.den as i128)?;
    base.pow_real(&e)
}

/// Integer range `[lo, hi)` of the window `[P_i, P_{i+1})`.
pub fn window_bounds(i: u32) -> Result<(u64, u64)> {
    Ok((boundary_ceil(i)?, boundary_ceil(i + 1)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeWindow {
    pub index: u32,
    pub lo: u64,
    pub hi: u64,
    pub primes: Vec<u64>,
}

impl PrimeWindow {
    /// Window `[P_i, P_{i+1})`, sieved directly (i <= 3).
    pub fn new(i: u32) -> Result<Self> {
        if i > 3 {
            return Err(Error::Resource(format!("window {i} is beyond direct sieving range")));
        }
        for j in [i, i + 1] {
            if boundary_is_prime(j)? {
                return Err(Error::verification("window boundary", format!("P_{j} is prime")));
            }
        }
        let (lo, hi) = window_bounds(i)?;
        let primes = primes_up_to(hi - 1)?
            .into_iter()
            .filter(|&p| p >= lo && p < hi)
            .collect();
        Ok(PrimeWindow {
            index: i,
            lo,
            hi,
            primes,
        })
    }
}

// ---------------------------------------------------------------------------
// tau_k

fn tau_closed(p: u64, k: u32) -> Result<Interval> {
    let q = Interval::from_int((p - 1) as i64);
    let x = Interval::from_int(p as i64);
    match k {
        2 => (Interval::from_int(3) * x - Interval::ONE).div(&(q * q)),
        3 => (Interval::from_int(7) * x * x - Interval::from_int(2) * x + Interval::ONE).div(&q.pow_int(3)),
        _ => Err(Error::Domain(format!("closed form for tau_{k} not available"))),
    }
}

/// `sum_{i>=1} ((i+1)^k - i^k) / p^i` by direct summation with a ratio tail.
pub fn tau_series(p: u64, k: u32) -> Result<Interval> {
    if p < 2 || k == 0 {
        return Err(Error::Domain(format!("tau_{k}({p})")));
    }
    let pi = Interval::from_int(p as i64);
    let diff = |i: u32| -> Interval {
        let a = Interval::from_int((i + 1) as i64).pow_int(k);
        let b = Interval::from_int(i as i64).pow_int(k);
        a - b
    };
    sum_positive_series(
        1,
        |i| diff(i).div(&pi.pow_int(i)),
        // ((i+1)^k - i^k) grows by a factor that decreases in i
        |n| diff(n + 1).div(&diff(n))?.div(&pi),
    )
}

/// Enclosure of `tau_k(p)` for k in {2, 3}: closed form intersected with the series.
pub fn tau_k(p: u64, k: u32) -> Result<Interval> {
    if k != 2 && k != 3 {
        return Err(Error::Domain(format!("tau_k defined for k in {{2,3}}, got {k}")));
    }
    if p < 2 {
        return Err(Error::Domain(format!("tau_{k}({p})")));
    }
    let closed = tau_closed(p, k)?;
    let series = tau_series(p, k)?;
    closed.intersect(&series).ok_or_else(|| {
        Error::verification(
            format!("tau_{k}({p})"),
            format!("closed form {closed} vs series {series}"),
        )
    })
}

// ---------------------------------------------------------------------------
// window statistics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub index: Option<u32>,
    pub lo: u64,
    pub hi: u64,
    pub count: usize,
    pub prod_p_over_pm1: Interval,
    pub sum_inv_sq: Interval,
    pub sum_inv_cube: Interval,
    pub sum_tau2: Interval,
    pub sum_tau3: Interval,
}

/// Fixed-order accumulation over an ascending prime list.
pub fn stats_for_primes(primes: &[u64], lo: u64, hi: u64) -> Result<WindowStats> {
    let mut prod = Interval::ONE;
    let mut s2 = Interval::ZERO;
    let mut s3 = Interval::ZERO;
    let mut t2 = Interval::ZERO;
    let mut t3 = Interval::ZERO;
    for &p in primes {
        if p < 3 {
            return Err(Error::Domain(format!("window statistics need primes > 2, got {p}")));
        }
        let x = Interval::point(p as f64);
        let q = Interval::point((p - 1) as f64);
        let q2 = q * q;
        let q3 = q2 * q;
        prod = prod * x.div(&q)?;
        s2 = s2 + Interval::ONE.div(&q2)?;
        s3 = s3 + Interval::ONE.div(&q3)?;
        t2 = t2 + (Interval::point((3 * p - 1) as f64)).div(&q2)?;
        let num = Interval::point(7.0) * x * x - Interval::point((2 * p - 1) as f64);
        t3 = t3 + num.div(&q3)?;
    }
    Ok(WindowStats {
        index: None,
        lo,
        hi,
        count: primes.len(),
        prod_p_over_pm1: prod.finite()?,
        sum_inv_sq: s2,
        sum_inv_cube: s3,
        sum_tau2: t2,
        sum_tau3: t3,
    })
}

/// One checked inequality `computed.hi < bound.lo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowClaim {
    pub label: String,
    pub computed: Interval,
    pub bound: Interval,
    pub ok: bool,
}

/// The five explicit prime-sum estimates used for every window with i >= 2.
pub fn window_claims(stats: &WindowStats, i: u32) -> Result<Vec<WindowClaim>> {
    let p = boundary_value(i)?;
    let plogp = p * p.ln()?;
    let ln15 = Interval::from_ratio(3, 2)?.ln()?;
    let dec = Interval::from_decimal;
    let mk = |label: &str, computed: Interval, bound: Interval| WindowClaim {
        label: label.to_string(),
        computed,
        bound,
        ok: computed.certainly_lt(&bound),
    };
    Ok(vec![
        mk("prod p/(p-1) < 1.506318", stats.prod_p_over_pm1, dec("1.506318")?),
        mk(
            "sum 1/(p-1)^2 < 1.002631/(P log P)",
            stats.sum_inv_sq,
            dec("1.002631")?.div(&plogp)?,
        ),
        mk(
            "sum 1/(p-1)^3 < 1.004382/(2 P^2 log P)",
            stats.sum_inv_cube,
            dec("1.004382")?.div(&(Interval::from_int(2) * p * plogp))?,
        ),
        mk(
            "sum tau_2 < 3 log 1.5 + 0.00334",
            stats.sum_tau2,
            Interval::from_int(3) * ln15 + dec("0.00334")?,
        ),
        mk(
            "sum tau_3 < 7 log 1.5 + 0.00779",
            stats.sum_tau3,
            Interval::from_int(7) * ln15 + dec("0.00779")?,
        ),
    ])
}

/// Certified statistics for window `i` in {1, 2, 3}; for i >= 2 the explicit
/// estimates are verified and a failure is an error.
pub fn window_stats(i: u32) -> Result<WindowStats> {
    if !(1..=3).contains(&i) {
        return Err(Error::Domain(format!(
            "window_stats computed directly only for i in 1..=3, got {i}"
        )));
    }
    let w = PrimeWindow::new(i)?;
    let mut stats = stats_for_primes(&w.primes, w.lo, w.hi)?;
    stats.index = Some(i);
    if i >= 2 {
        for c in window_claims(&stats, i)? {
            if !c.ok {
                return Err(Error::verification(
                    format!("window {i}: {}", c.label),
                    format!("computed {} vs bound {}", c.computed, c.bound),
                ));
            }
        }
    }
    Ok(stats)
}

/// Lower bound for `prod_{P_2 <= p < P_3} p/(p-1)` from two-sided Chebyshev
/// estimates with relative error `0.2/log^2 x`: `1.5 (1-d)/(1+d)`, `d = 0.2/log^2 4000`.
pub fn window2_product_floor() -> Result<Interval> {
    let l = Interval::from_int(4000).ln()?;
    let d = Interval::from_decimal("0.2")?.div(&(l * l))?;
    Ok(Interval::from_ratio(3, 2)? * (Interval::ONE - d).div(&(Interval::ONE + d))?)
}
