//! Outward-rounded interval arithmetic.
//!
//! Every [`Interval`] is a certified enclosure `[lo, hi]` of some real number.
//! Basic operations (`+ - * /`, `sqrt`) use error-free transformations
//! (TwoSum, FMA residuals) to find the exact rounding direction, so an
//! endpoint only moves one step outward when the floating result was
//! actually inexact. Transcendental functions go through the platform libm
//! and are widened by [`LIBM_ULPS`] steps on each side.
//!
//! Exact rational helpers (`from_rational`, `from_decimal`) round the
//! endpoints outward from a `BigRational`, which is how the constants that
//! appear in the certificates enter the arithmetic.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Steps of outward widening applied to libm results (exp, ln, cbrt).
pub const LIBM_ULPS: u32 = 2;

/// Below this magnitude FMA residuals may be inexact (subnormal range), so
/// results are widened unconditionally.
const TINY: f64 = 1e-290;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

// ---------------------------------------------------------------------------
// directed rounding primitives

fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

fn add_rd(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

fn add_ru(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

/// Sign of the rounding error `exact - p` for `p = fl(a*b)`.
fn mul_err_sign(a: f64, b: f64, p: f64) -> Option<Ordering> {
    if !p.is_finite() || (p != 0.0 && p.abs() < TINY) || (p == 0.0 && a != 0.0 && b != 0.0) {
        return None;
    }
    let e = a.mul_add(b, -p);
    e.partial_cmp(&0.0)
}

fn mul_rd(a: f64, b: f64) -> f64 {
    let p = a * b;
    match mul_err_sign(a, b, p) {
        Some(Ordering::Less) | None if p.is_finite() => p.next_down(),
        _ => p,
    }
}

fn mul_ru(a: f64, b: f64) -> f64 {
    let p = a * b;
    match mul_err_sign(a, b, p) {
        Some(Ordering::Greater) | None if p.is_finite() => p.next_up(),
        _ => p,
    }
}

fn div_err_sign(a: f64, b: f64, q: f64) -> Option<Ordering> {
    if !q.is_finite() || (q != 0.0 && q.abs() < TINY) || (q == 0.0 && a != 0.0) {
        return None;
    }
    // a - q*b is exact here; the true quotient exceeds q iff r/b > 0.
    let r = (-q).mul_add(b, a);
    let s = if b > 0.0 { r } else { -r };
    s.partial_cmp(&0.0)
}

fn div_rd(a: f64, b: f64) -> f64 {
    let q = a / b;
    match div_err_sign(a, b, q) {
        Some(Ordering::Less) | None if q.is_finite() => q.next_down(),
        _ => q,
    }
}

fn div_ru(a: f64, b: f64) -> f64 {
    let q = a / b;
    match div_err_sign(a, b, q) {
        Some(Ordering::Greater) | None if q.is_finite() => q.next_up(),
        _ => q,
    }
}

fn sqrt_rd(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    if (-s).mul_add(s, x) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

fn sqrt_ru(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    if (-s).mul_add(s, x) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

fn widen_down(mut x: f64, steps: u32) -> f64 {
    for _ in 0..steps {
        x = x.next_down();
    }
    x
}

fn widen_up(mut x: f64, steps: u32) -> f64 {
    for _ in 0..steps {
        x = x.next_up();
    }
    x
}

// ---------------------------------------------------------------------------
// rational <-> f64

/// Largest f64 that is <= r.
pub fn rational_down(r: &BigRational) -> f64 {
    let mut x = r.to_f64().unwrap_or(if r.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    });
    if x.is_nan() {
        x = 0.0;
    }
    if x == f64::INFINITY {
        x = f64::MAX;
    }
    loop {
        if x == f64::NEG_INFINITY {
            return x;
        }
        match BigRational::from_float(x) {
            Some(q) if &q > r => x = x.next_down(),
            _ => break,
        }
    }
    // step up while still below r
    loop {
        let up = x.next_up();
        match BigRational::from_float(up) {
            Some(q) if &q <= r => x = up,
            _ => return x,
        }
    }
}

/// Smallest f64 that is >= r.
pub fn rational_up(r: &BigRational) -> f64 {
    -rational_down(&-r)
}

/// Parse a plain decimal literal (`-12.25`, `0.0005048197920`, `1.5e-3`) exactly.
pub fn parse_decimal(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let bad = || Error::Validation(format!("not a decimal literal: {s:?}"));
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut q = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        q = -q;
    }
    Ok(q)
}

// ---------------------------------------------------------------------------

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Overflow(format!("non-finite endpoint in [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    /// Internal constructor for endpoints already known to be ordered.
    fn raw(lo: f64, hi: f64) -> Self {
        debug_assert!(
            lo <= hi || lo.is_nan() || hi.is_nan(),
            "unordered interval [{lo}, {hi}]"
        );
        Interval { lo, hi }
    }

    pub const fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub const ZERO: Interval = Interval::point(0.0);
    pub const ONE: Interval = Interval::point(1.0);

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn from_int<T: Into<i128>>(n: T) -> Self {
        let n: i128 = n.into();
        Self::from_rational(&BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_u128(n: u128) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_bigint(n: &BigInt) -> Self {
        Self::from_rational(&BigRational::from_integer(n.clone()))
    }

    /// Tightest enclosure of `num/den`.
    pub fn from_ratio(num: i128, den: i128) -> Result<Self> {
        if den == 0 {
            return Err(Error::Domain("zero denominator".into()));
        }
        Ok(Self::from_rational(&BigRational::new(num.into(), den.into())))
    }

    /// Tightest enclosure of an exact rational.
    pub fn from_rational(r: &BigRational) -> Self {
        Interval::raw(rational_down(r), rational_up(r))
    }

    /// Tightest enclosure of a decimal literal such as `"0.246514091"`.
    pub fn from_decimal(s: &str) -> Result<Self> {
        Ok(Self::from_rational(&parse_decimal(s)?))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Fails with [`Error::Overflow`] when an endpoint is infinite.
    pub fn finite(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Overflow(format!("endpoint out of range: {self}")))
        }
    }

    pub fn width(&self) -> f64 {
        add_ru(self.hi, -self.lo)
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_rational(&self, r: &BigRational) -> bool {
        match (BigRational::from_float(self.lo), BigRational::from_float(self.hi)) {
            (Some(lo), Some(hi)) => &lo <= r && r <= &hi,
            _ => false,
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    pub fn encloses(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval::raw(lo, hi))
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::raw(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Enclosure of `max(x, y)` for x in self, y in other.
    pub fn max(&self, other: &Interval) -> Interval {
        Interval::raw(self.lo.max(other.lo), self.hi.max(other.hi))
    }

    pub fn min(&self, other: &Interval) -> Interval {
        Interval::raw(self.lo.min(other.lo), self.hi.min(other.hi))
    }

    /// Every member of self is < every member of other.
    pub fn certainly_lt(&self, other: &Interval) -> bool {
        self.hi < other.lo
    }

    pub fn certainly_le(&self, other: &Interval) -> bool {
        self.hi <= other.lo
    }

    pub fn certainly_positive(&self) -> bool {
        self.lo > 0.0
    }

    /// Keep only the part with `x >= 0` (for quantities known to be nonnegative).
    pub fn clamp_nonneg(&self) -> Interval {
        Interval::raw(self.lo.max(0.0), self.hi.max(0.0))
    }

    /// `[0, hi]`: everything between zero and this value's upper end.
    pub fn up_to(&self) -> Interval {
        Interval::raw(0.0f64.min(self.lo), self.hi)
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            -*self
        } else {
            Interval::raw(0.0, (-self.lo).max(self.hi))
        }
    }

    pub fn recip(&self) -> Result<Interval> {
        Interval::ONE.div(self)
    }

    pub fn div(&self, rhs: &Interval) -> Result<Interval> {
        if rhs.contains_zero() {
            return Err(Error::Domain(format!("division by interval containing 0: {rhs}")));
        }
        let (a, b) = (self, rhs);
        let lo = div_rd(a.lo, b.lo)
            .min(div_rd(a.lo, b.hi))
            .min(div_rd(a.hi, b.lo))
            .min(div_rd(a.hi, b.hi));
        let hi = div_ru(a.lo, b.lo)
            .max(div_ru(a.lo, b.hi))
            .max(div_ru(a.hi, b.lo))
            .max(div_ru(a.hi, b.hi));
        Interval::new(lo, hi)
    }

    pub fn div_int(&self, n: i64) -> Result<Interval> {
        self.div(&Interval::from_int(n))
    }

    pub fn sqrt(&self) -> Result<Interval> {
        if self.lo < 0.0 {
            return Err(Error::Domain(format!("sqrt of {self}")));
        }
        Ok(Interval::raw(sqrt_rd(self.lo), sqrt_ru(self.hi)))
    }

    pub fn cbrt(&self) -> Interval {
        Interval::raw(
            widen_down(self.lo.cbrt(), LIBM_ULPS),
            widen_up(self.hi.cbrt(), LIBM_ULPS),
        )
    }

    /// Real k-th root for k in {1, 2, 3}; other k go through exp/ln.
    pub fn root(&self, k: u32) -> Result<Interval> {
        match k {
            0 => Err(Error::Domain("0th root".into())),
            1 => Ok(*self),
            2 => self.sqrt(),
            3 => Ok(self.cbrt()),
            _ => {
                if self.lo < 0.0 {
                    return Err(Error::Domain(format!("{k}th root of {self}")));
                }
                if self.hi == 0.0 {
                    return Ok(Interval::ZERO);
                }
                let inv = Interval::ONE.div(&Interval::from_int(k as i64))?;
                let lo = if self.lo == 0.0 {
                    0.0
                } else {
                    Interval::point(self.lo).pow_real(&inv)?.lo
                };
                let hi = Interval::point(self.hi).pow_real(&inv)?.hi;
                Interval::new(lo, hi)
            }
        }
    }

    pub fn exp(&self) -> Result<Interval> {
        if self.lo == 0.0 && self.hi == 0.0 {
            return Ok(Interval::ONE);
        }
        let lo = widen_down(self.lo.exp(), LIBM_ULPS).max(0.0);
        let hi = widen_up(self.hi.exp(), LIBM_ULPS);
        if !hi.is_finite() {
            return Err(Error::Overflow(format!("exp({self})")));
        }
        Interval::new(lo, hi)
    }

    pub fn ln(&self) -> Result<Interval> {
        if self.lo <= 0.0 {
            return Err(Error::Domain(format!("log of {self}")));
        }
        Interval::new(widen_down(self.lo.ln(), LIBM_ULPS), widen_up(self.hi.ln(), LIBM_ULPS))
    }

    /// `self^e` for a positive base, via `exp(e * ln self)`.
    pub fn pow_real(&self, e: &Interval) -> Result<Interval> {
        (*e * self.ln()?).exp()
    }

    pub fn pow_int(&self, n: u32) -> Interval {
        if n == 0 {
            return Interval::ONE;
        }
        let pow_nonneg = |x: &Interval| {
            let mut acc = Interval::ONE;
            let mut base = *x;
            let mut k = n;
            while k > 0 {
                if k & 1 == 1 {
                    acc = acc * base;
                }
                k >>= 1;
                if k > 0 {
                    base = base * base;
                }
            }
            acc
        };
        if self.lo >= 0.0 {
            pow_nonneg(self)
        } else if self.hi <= 0.0 {
            let p = pow_nonneg(&-*self);
            if n.is_multiple_of(2) {
                p
            } else {
                -p
            }
        } else if n.is_multiple_of(2) {
            let m = pow_nonneg(&self.abs());
            Interval::raw(0.0, m.hi)
        } else {
            let neg = -pow_nonneg(&Interval::point(-self.lo));
            let pos = pow_nonneg(&Interval::point(self.hi));
            Interval::raw(neg.lo, pos.hi)
        }
    }

    /// `x^n / n!`, accumulated as a product of `x/k` factors.
    pub fn factorial_div(&self, n: u32) -> Result<Interval> {
        let mut acc = Interval::ONE;
        for k in 1..=n {
            acc = acc * self.div(&Interval::from_int(k as i64))?;
        }
        Ok(acc)
    }

    /// Exact lower/upper endpoints as rationals.
    pub fn to_rational_bounds(&self) -> (BigRational, BigRational) {
        (
            BigRational::from_float(self.lo).expect("finite endpoint"),
            BigRational::from_float(self.hi).expect("finite endpoint"),
        )
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::raw(-self.hi, -self.lo)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::raw(add_rd(self.lo, rhs.lo), add_ru(self.hi, rhs.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::raw(add_rd(self.lo, -rhs.hi), add_ru(self.hi, -rhs.lo))
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let (a, b) = (self, rhs);
        if a.lo >= 0.0 && b.lo >= 0.0 {
            return Interval::raw(mul_rd(a.lo, b.lo), mul_ru(a.hi, b.hi));
        }
        let lo = mul_rd(a.lo, b.lo)
            .min(mul_rd(a.lo, b.hi))
            .min(mul_rd(a.hi, b.lo))
            .min(mul_rd(a.hi, b.hi));
        let hi = mul_ru(a.lo, b.lo)
            .max(mul_ru(a.lo, b.hi))
            .max(mul_ru(a.hi, b.lo))
            .max(mul_ru(a.hi, b.hi));
        Interval::raw(lo, hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

/// Exact interval sum in left-to-right order.
pub fn sum_enclosure(terms: &[Interval]) -> Interval {
    terms.iter().fold(Interval::ZERO, |acc, t| acc + *t)
}

/// Enclosure of the omitted tail of a nonnegative series whose first omitted
/// term is `first_omitted` and whose term ratios are bounded by `ratio`:
/// `[first_omitted.lo, first_omitted.hi / (1 - ratio.hi)]`.
pub fn geometric_tail(ratio: &Interval, first_omitted: &Interval) -> Result<Interval> {
    if ratio.hi >= 1.0 {
        return Err(Error::Domain(format!("geometric tail with ratio {ratio} not below 1")));
    }
    let denom = Interval::ONE - Interval::point(ratio.hi.max(0.0));
    let hi = first_omitted.div(&denom)?.hi;
    Interval::new(first_omitted.lo.max(0.0).min(hi), hi)
}

/// Relative cutoff for series truncation: stop once the current term is
/// below this fraction of the partial sum and a ratio bound < 1 applies.
pub const SERIES_REL_CUTOFF: f64 = 1e-18;

const SERIES_MAX_TERMS: u32 = 100_000;

/// Sum a series of nonnegative terms `term(n)`, `n = start, start+1, ...`.
///
/// `ratio_from(n)` must bound `term(m+1)/term(m)` for every `m >= n`.
/// Truncation happens once a term is below [`SERIES_REL_CUTOFF`] times the
/// partial sum and the ratio bound is below 1; the geometric tail is added to
/// the returned enclosure.
pub fn sum_positive_series<T, R>(start: u32, mut term: T, mut ratio_from: R) -> Result<Interval>
where
    T: FnMut(u32) -> Result<Interval>,
    R: FnMut(u32) -> Result<Interval>,
{
    let mut acc = Interval::ZERO;
    for n in start..start.saturating_add(SERIES_MAX_TERMS) {
        let t = term(n)?;
        acc = acc + t;
        if t.hi <= SERIES_REL_CUTOFF * acc.lo || t.hi == 0.0 {
            let r = ratio_from(n)?;
            if r.hi < 1.0 {
                let first = t * Interval::point(r.hi.max(0.0));
                let tail = geometric_tail(&r, &first)?;
                return Ok(acc + tail.up_to());
            }
        }
    }
    Err(Error::TailDivergence(format!(
        "series did not settle after {SERIES_MAX_TERMS} terms from n={start}"
    )))
}

// ---------------------------------------------------------------------------
// serde: {"lo": "...", "hi": "..."} with round-trip-exact decimal strings

#[derive(Serialize, Deserialize)]
struct IntervalRepr {
    lo: String,
    hi: String,
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        IntervalRepr {
            lo: format!("{:?}", self.lo),
            hi: format!("{:?}", self.hi),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = IntervalRepr::deserialize(d)?;
        let lo: f64 = r.lo.parse().map_err(D::Error::custom)?;
        let hi: f64 = r.hi.parse().map_err(D::Error::custom)?;
        Interval::new(lo, hi).map_err(D::Error::custom)
    }
}

/// Exact rational helpers shared by modules that keep a rational referee.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

pub fn rational_one() -> BigRational {
    BigRational::one()
}
